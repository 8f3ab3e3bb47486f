"""Minimal dense-tensor reverse-mode automatic differentiation.

Every operation below builds a graph node holding its forward value and a
closure that scatters the upstream gradient to its parents. `backward(loss)`
walks the graph once in reverse topological order; gradients accumulate
additively, so shared subexpressions are handled correctly.

Spatial and linear ops accept an optional leading batch axis (the training
loop pushes a whole mini-batch of temporal slices through one node); the
unbatched shapes documented per op are the contract, batching is plumbing.
Arrays keep the dtype of their inputs: float32 for training, float64 for
finite-difference gradient checking.
"""

import numpy as np

from . import kernels


class DiffTensor:
    """One node of the computation graph: value, gradient, producing op."""

    __slots__ = ("value", "grad", "parents", "_backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"DiffTensor(shape={self.value.shape}, dtype={self.value.dtype})"


def constant(arr, dtype=None):
    """Wrap a plain array as a graph leaf."""
    a = np.asarray(arr)
    if dtype is not None:
        a = a.astype(dtype, copy=False)
    return DiffTensor(np.ascontiguousarray(a))


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum g down to `shape` after a broadcasting forward op."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _topo_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate .grad on every node reachable from the scalar `loss`."""
    if loss.value.ndim != 0:
        raise ValueError("backward expects a scalar loss node")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    out = DiffTensor(a.value + b.value, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    out._backward_fn = bwd
    return out


def sub(a, b):
    out = DiffTensor(a.value - b.value, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, -_unbroadcast(g, b.shape))

    out._backward_fn = bwd
    return out


def mul(a, b):
    out = DiffTensor(a.value * b.value, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g * b.value, a.shape))
        _accum(b, _unbroadcast(g * a.value, b.shape))

    out._backward_fn = bwd
    return out


def neg(a):
    out = DiffTensor(-a.value, (a,))
    out._backward_fn = lambda g: _accum(a, -g)
    return out


def scale(a, k):
    """Multiply by a python scalar (no graph node for k)."""
    k = a.value.dtype.type(k)
    out = DiffTensor(a.value * k, (a,))
    out._backward_fn = lambda g: _accum(a, g * k)
    return out


# ---------------------------------------------------------------------------
# activations

def relu(a):
    out = DiffTensor(np.maximum(a.value, 0), (a,))
    # subgradient 0 at exactly 0: mask on strict positivity
    out._backward_fn = lambda g: _accum(a, g * (a.value > 0))
    return out


def sigmoid(a):
    x = a.value
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    out = DiffTensor(y, (a,))
    out._backward_fn = lambda g: _accum(a, g * y * (1 - y))
    return out


def tanh(a):
    y = np.tanh(a.value)
    out = DiffTensor(y, (a,))
    out._backward_fn = lambda g: _accum(a, g * (1 - y * y))
    return out


def softmax_axis(a, axis):
    """Stable softmax along one axis."""
    x = a.value
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)
    out = DiffTensor(y, (a,))

    def bwd(g):
        _accum(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    out._backward_fn = bwd
    return out


def softmax(a):
    """Stable softmax over a 1-D vector."""
    if a.value.ndim != 1:
        raise ValueError("softmax expects a vector; use softmax_axis")
    return softmax_axis(a, 0)


def log(a):
    out = DiffTensor(np.log(a.value), (a,))
    out._backward_fn = lambda g: _accum(a, g / a.value)
    return out


def clip_floor(a, floor):
    """max(a, floor); gradient passes only where a > floor."""
    out = DiffTensor(np.maximum(a.value, floor), (a,))
    out._backward_fn = lambda g: _accum(a, g * (a.value > floor))
    return out


# ---------------------------------------------------------------------------
# linear algebra

def matvec(w, x):
    """w [m,n] @ x [n] -> [m]."""
    out = DiffTensor(w.value @ x.value, (w, x))

    def bwd(g):
        _accum(w, np.outer(g, x.value))
        _accum(x, w.value.T @ g)

    out._backward_fn = bwd
    return out


def dense(x, w, b=None):
    """Affine map w @ x (+ b) for x [n], rowwise for x [B,n].

    Bias is optional per call site.
    """
    if x.value.ndim == 1:
        y = matvec(w, x)
    elif x.value.ndim == 2:
        out = DiffTensor(x.value @ w.value.T, (x, w))

        def bwd(g):
            _accum(x, g @ w.value)
            _accum(w, g.T @ x.value)

        out._backward_fn = bwd
        y = out
    else:
        raise ValueError(f"dense expects rank 1 or 2 input, got {x.shape}")
    return add(y, b) if b is not None else y


# ---------------------------------------------------------------------------
# shape plumbing

def reshape(a, shape):
    out = DiffTensor(a.value.reshape(shape), (a,))
    out._backward_fn = lambda g: _accum(a, g.reshape(a.shape))
    return out


def pick(a, index):
    """Scalar element of a 1-D vector."""
    out = DiffTensor(np.asarray(a.value[index]), (a,))

    def bwd(g):
        gz = np.zeros_like(a.value)
        gz[index] = g
        _accum(a, gz)

    out._backward_fn = bwd
    return out


def gather_rows(a, indices):
    """a [B,n], indices [B] -> [B] picking one element per row."""
    idx = np.asarray(indices)
    rows = np.arange(a.value.shape[0])
    out = DiffTensor(a.value[rows, idx].copy(), (a,))

    def bwd(g):
        gz = np.zeros_like(a.value)
        gz[rows, idx] = g
        _accum(a, gz)

    out._backward_fn = bwd
    return out


def index_axis(a, axis, i):
    """Slice index i off `axis` (rank drops by one)."""
    out = DiffTensor(np.ascontiguousarray(np.take(a.value, i, axis=axis)), (a,))

    def bwd(g):
        gz = np.zeros_like(a.value)
        sl = [slice(None)] * a.value.ndim
        sl[axis] = i
        gz[tuple(sl)] = g
        _accum(a, gz)

    out._backward_fn = bwd
    return out


def stack(tensors):
    """Stack equal-shape tensors along a new leading axis."""
    ts = list(tensors)
    out = DiffTensor(np.stack([t.value for t in ts]), ts)

    def bwd(g):
        for i, t in enumerate(ts):
            _accum(t, g[i])

    out._backward_fn = bwd
    return out


def concat(tensors, axis):
    ts = list(tensors)
    out = DiffTensor(np.concatenate([t.value for t in ts], axis=axis), ts)
    sizes = [t.value.shape[axis] for t in ts]

    def bwd(g):
        start = 0
        for t, n in zip(ts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + n)
            _accum(t, np.ascontiguousarray(g[tuple(sl)]))
            start += n

    out._backward_fn = bwd
    return out


def sum_axis(a, axis):
    out = DiffTensor(a.value.sum(axis=axis), (a,))

    def bwd(g):
        _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    out._backward_fn = bwd
    return out


def sum_all(a):
    out = DiffTensor(a.value.sum(), (a,))
    out._backward_fn = lambda g: _accum(
        a, np.broadcast_to(g, a.shape).astype(a.dtype)
    )
    return out


def mean_all(a):
    n = a.value.size
    out = DiffTensor(a.value.mean(), (a,))
    out._backward_fn = lambda g: _accum(
        a, np.broadcast_to(g / n, a.shape).astype(a.dtype)
    )
    return out


# ---------------------------------------------------------------------------
# spatial ops (channels-last; leading batch axis optional)

def _as_batched(x):
    """View [H,W,C] as [1,H,W,C]; pass [B,H,W,C] through."""
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected rank 3 or 4, got shape {x.shape}")


def conv2d(x, kern, bias=None, padding="same"):
    """Stride-1 cross-correlation of x [H,W,Cin] with kern [k,k,Cin,Cout].

    `same` zero-pads so the spatial size is preserved (k must be odd);
    `valid` applies no padding.
    """
    k = kern.value.shape[0]
    if k % 2 == 0:
        raise ValueError("conv2d requires an odd kernel size")
    xv, squeeze = _as_batched(x.value)
    if xv.shape[3] != kern.value.shape[2]:
        raise ValueError(
            f"conv2d channel mismatch: input {x.value.shape} vs kernel "
            f"{kern.value.shape}"
        )
    if padding == "same":
        pad = (k - 1) // 2
    elif padding == "valid":
        pad = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")

    b_, h, w, cin = xv.shape
    if pad:
        xp = np.zeros((b_, h + 2 * pad, w + 2 * pad, cin), dtype=xv.dtype)
        xp[:, pad:pad + h, pad:pad + w, :] = xv
    else:
        xp = np.ascontiguousarray(xv)

    cout = kern.value.shape[3]
    bval = bias.value if bias is not None else np.zeros(cout, dtype=xv.dtype)
    out_val = kernels.conv2d_forward(xp, kern.value, bval)
    if squeeze:
        out_val = out_val[0]

    parents = (x, kern, bias) if bias is not None else (x, kern)
    out = DiffTensor(out_val, parents)

    def bwd(g):
        gb, _ = _as_batched(g)
        gb = np.ascontiguousarray(gb)
        gxp = kernels.conv2d_backward_input(gb, kern.value,
                                            xp.shape[1], xp.shape[2])
        if pad:
            gxp = gxp[:, pad:-pad, pad:-pad, :]
        _accum(x, gxp[0] if squeeze else gxp)
        _accum(kern, kernels.conv2d_backward_kernel(gb, xp, k))
        if bias is not None:
            _accum(bias, gb.sum(axis=(0, 1, 2)))

    out._backward_fn = bwd
    return out


def max_pool2d(x):
    """2x2 max pool, stride 2, floor semantics (trailing row/col dropped)."""
    xv, squeeze = _as_batched(x.value)
    out_val, idx = kernels.maxpool2x2_forward(np.ascontiguousarray(xv))
    h, w = xv.shape[1], xv.shape[2]
    out = DiffTensor(out_val[0] if squeeze else out_val, (x,))

    def bwd(g):
        gb, _ = _as_batched(g)
        gx = kernels.maxpool2x2_backward(np.ascontiguousarray(gb), idx, h, w)
        _accum(x, gx[0] if squeeze else gx)

    out._backward_fn = bwd
    return out


def global_avg_spatial(x):
    """[H,W,C] -> per-channel mean over the spatial plane -> [C]."""
    xv, squeeze = _as_batched(x.value)
    _, h, w, _ = xv.shape
    axes = (0, 1) if squeeze else (1, 2)
    out = DiffTensor(x.value.mean(axis=axes), (x,))

    def bwd(g):
        ge = np.expand_dims(np.expand_dims(g, axes[0]), axes[1])
        _accum(x, np.broadcast_to(ge / (h * w), x.shape).astype(x.dtype))

    out._backward_fn = bwd
    return out


def global_max_spatial(x):
    """[H,W,C] -> per-channel max over the spatial plane -> [C]."""
    xv, squeeze = _as_batched(x.value)
    b_, h, w, c = xv.shape
    flat = xv.reshape(b_, h * w, c)
    idx = flat.argmax(axis=1)          # first row-major maximum per channel
    val = np.take_along_axis(flat, idx[:, None, :], axis=1)[:, 0, :]
    out = DiffTensor(val[0] if squeeze else val, (x,))

    def bwd(g):
        gb = g[None] if squeeze else g
        gf = np.zeros((b_, h * w, c), dtype=g.dtype)
        np.put_along_axis(gf, idx[:, None, :], gb[:, None, :], axis=1)
        gf = gf.reshape(b_, h, w, c)
        _accum(x, gf[0] if squeeze else gf)

    out._backward_fn = bwd
    return out


def avg_over_channels(x):
    """[H,W,C] -> mean over channels -> [H,W,1]."""
    c = x.value.shape[-1]
    out = DiffTensor(x.value.mean(axis=-1, keepdims=True), (x,))

    def bwd(g):
        _accum(x, np.broadcast_to(g / c, x.shape).astype(x.dtype))

    out._backward_fn = bwd
    return out


def max_over_channels(x):
    """[H,W,C] -> max over channels -> [H,W,1]."""
    idx = x.value.argmax(axis=-1)      # first maximum along the channel axis
    out = DiffTensor(
        np.take_along_axis(x.value, idx[..., None], axis=-1), (x,)
    )

    def bwd(g):
        gx = np.zeros_like(x.value)
        np.put_along_axis(gx, idx[..., None], g, axis=-1)
        _accum(x, gx)

    out._backward_fn = bwd
    return out


# ---------------------------------------------------------------------------
# recurrent cell

def lstm_step(x, h_prev, c_prev, gates):
    """One LSTM step with the standard gate equations.

    gates is a mapping holding, per gate q in {i, f, g, o}, weights
    wx_q [h, in], wh_q [h, h] and bias b_q [h]. The cell computes

        i = sigmoid(wx_i x + wh_i h_prev + b_i)      input gate
        f = sigmoid(wx_f x + wh_f h_prev + b_f)      forget gate
        g = tanh   (wx_g x + wh_g h_prev + b_g)      cell candidate
        o = sigmoid(wx_o x + wh_o h_prev + b_o)      output gate
        c = f * c_prev + i * g
        h = o * tanh(c)

    x may be a vector [in] or a row batch [B,in] (states match).
    """
    def gate(name, act):
        z = add(dense(x, gates[f"wx_{name}"]),
                dense(h_prev, gates[f"wh_{name}"], gates[f"b_{name}"]))
        return act(z)

    i = gate("i", sigmoid)
    f = gate("f", sigmoid)
    g = gate("g", tanh)
    o = gate("o", sigmoid)
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c
