"""Pure-numpy reference implementations of the hot inner-loop kernels.

Used directly when numba is unavailable or disabled via EEG4D_DISABLE_NUMBA=1,
and as the comparison baseline in tests and benchmarks. All arrays are
batched channels-last ([B,H,W,C]) and contiguous; convolution is
cross-correlation with stride 1, realized as im2col plus a BLAS matmul.
The input gradient reuses the forward path: full correlation of the padded
upstream gradient with the spatially flipped, channel-swapped kernel.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(xp, k):
    b, hp, wp, cin = xp.shape
    ho, wo = hp - k + 1, wp - k + 1
    cols = sliding_window_view(xp, (k, k, cin), axis=(1, 2, 3))
    return np.ascontiguousarray(cols).reshape(b * ho * wo, k * k * cin)


def conv2d_forward(xp, kern, bias):
    """Cross-correlate padded input [B,Hp,Wp,Cin] with kern [k,k,Cin,Cout].

    Returns [B, Hp-k+1, Wp-k+1, Cout]. `xp` must already carry any padding.
    """
    b, hp, wp, cin = xp.shape
    k = kern.shape[0]
    cout = kern.shape[3]
    out = _im2col(xp, k) @ kern.reshape(k * k * cin, cout)
    out += bias
    return out.reshape(b, hp - k + 1, wp - k + 1, cout)


def conv2d_backward_input(g, kern, hp, wp):
    """Gradient w.r.t. the padded input, given upstream g [B,Ho,Wo,Cout]."""
    b, ho, wo, cout = g.shape
    k = kern.shape[0]
    cin = kern.shape[2]
    kflip = np.ascontiguousarray(kern[::-1, ::-1].transpose(0, 1, 3, 2))
    pad = k - 1
    gp = np.zeros((b, ho + 2 * pad, wo + 2 * pad, cout), dtype=g.dtype)
    gp[:, pad:pad + ho, pad:pad + wo, :] = g
    return conv2d_forward(gp, kflip, np.zeros(cin, dtype=g.dtype))


def conv2d_backward_kernel(g, xp, k):
    """Gradient w.r.t. the kernel, given upstream g and the padded input."""
    b, ho, wo, cout = g.shape
    cin = xp.shape[3]
    gk = _im2col(xp, k).T @ g.reshape(b * ho * wo, cout)
    return np.ascontiguousarray(gk.reshape(k, k, cin, cout))


def maxpool2x2_forward(x):
    """2x2 max pool with floor semantics; trailing odd row/col dropped.

    Returns (out [B, H//2, W//2, C], idx) where idx stores the in-window
    position (0..3, row-major) of the first maximum, for gradient routing.
    """
    b, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    xw = x[:, :ho * 2, :wo * 2, :]
    xw = xw.reshape(b, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4)
    xw = xw.reshape(b, ho, wo, c, 4)
    idx = xw.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(xw, idx[..., None].astype(np.int64), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(g, idx, h, w):
    """Scatter upstream g [B,Ho,Wo,C] back to argmax positions of [B,H,W,C]."""
    b, ho, wo, c = g.shape
    gx = np.zeros((b, h, w, c), dtype=g.dtype)
    bb, rows, cols, chans = np.meshgrid(
        np.arange(b), np.arange(ho), np.arange(wo), np.arange(c),
        indexing="ij",
    )
    gx[bb, 2 * rows + idx // 2, 2 * cols + idx % 2, chans] = g
    return gx
