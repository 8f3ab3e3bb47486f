"""The spatial-spectral-temporal attention network.

Each of the 2T temporal slices [h,w,2f] runs through a shared 4-stage
attention CNN (conv -> relu -> channel gate -> spatial gate), is pooled and
projected to a per-slice representation, and the slice sequence feeds a
bidirectional LSTM whose time-aligned outputs are combined by a softmax
temporal attention before the final classifier. Every attention mechanism
has an independent ablation switch that replaces it with its identity.

All building blocks accept an optional leading batch axis; the training
loop pushes a mini-batch of samples (x temporal slices) through one graph.
"""

from dataclasses import dataclass, asdict, replace

import numpy as np

from . import diff
from .diff import DiffTensor
from .params import ParamStore

LSTM_GATES = ("i", "f", "g", "o")


@dataclass(frozen=True)
class ModelConfig:
    grid_h: int = 19
    grid_w: int = 19
    spectral_depth: int = 10
    slices: int = 6
    conv_channels: tuple = (64, 128, 256, 64)
    conv_kernels: tuple = (5, 5, 5, 3)
    fc_cnn: int = 150
    lstm_units: int = 36
    temporal_hidden: int = 32
    classes: int = 3
    spectral_attention: bool = True
    spatial_attention: bool = True
    temporal_attention: bool = True
    attention_reduction: int = 8
    spatial_kernel: int = 7

    @property
    def pooled_h(self):
        return self.grid_h // 2

    @property
    def pooled_w(self):
        return self.grid_w // 2

    @property
    def flatten_dim(self):
        return self.pooled_h * self.pooled_w * self.conv_channels[-1]

    @property
    def bilstm_dim(self):
        return 2 * self.lstm_units

    def attention_hidden(self, channels):
        # bottleneck width: channels / reduction, clamped to >= 4
        return min(channels, max(4, channels // self.attention_reduction))

    def with_flags(self, spectral=None, spatial=None, temporal=None):
        return replace(
            self,
            spectral_attention=self.spectral_attention if spectral is None else spectral,
            spatial_attention=self.spatial_attention if spatial is None else spatial,
            temporal_attention=self.temporal_attention if temporal is None else temporal,
        )

    def to_dict(self):
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["conv_kernels"] = list(self.conv_kernels)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["conv_channels"] = tuple(d["conv_channels"])
        d["conv_kernels"] = tuple(d["conv_kernels"])
        return ModelConfig(**d)

    @staticmethod
    def full():
        """Full-size configuration used on real recordings."""
        return ModelConfig()

    @staticmethod
    def desk(**overrides):
        """Narrow configuration for synthetic-data runs on a laptop CPU."""
        base = dict(conv_channels=(6, 8, 8, 6), conv_kernels=(5, 5, 5, 3),
                    fc_cnn=32, lstm_units=12, temporal_hidden=16,
                    attention_reduction=4)
        base.update(overrides)
        return ModelConfig(**base)

    @staticmethod
    def tiny(**overrides):
        """Minimal configuration for finite-difference gradient checks."""
        base = dict(grid_h=5, grid_w=5, slices=2,
                    conv_channels=(4, 4, 4, 4), conv_kernels=(3, 3, 3, 3),
                    fc_cnn=16, lstm_units=4, temporal_hidden=8,
                    attention_reduction=4, spatial_kernel=3)
        base.update(overrides)
        return ModelConfig(**base)


@dataclass
class AttentionMaps:
    """Attention values from one forward pass, for inspection.

    spectral/spatial: [slice][conv stage] arrays (None when the mechanism
    is ablated). temporal: the [2T,1] weights actually used in the
    aggregation (uniform when ablated).
    """
    spectral: list
    spatial: list
    temporal: np.ndarray


@dataclass
class BatchOutputs:
    """Graph nodes of one batched forward pass."""
    logits: DiffTensor             # [B, classes]
    pre: DiffTensor                # [B, classes]
    reps: DiffTensor               # [B*2T, fc_cnn]
    y_rows: list                   # 2T nodes of [B, 72]
    temporal_attn: DiffTensor      # [B, 2T]
    conv_tap: DiffTensor           # [B*2T, h, w, c_last]
    spectral_maps: list            # per stage: [B*2T,1,1,c] node or None
    spatial_maps: list             # per stage: [B*2T,h,w,1] node or None


@dataclass
class ModelOutputs:
    """Unbatched view of one sample's forward graph (B = 1)."""
    logits: DiffTensor             # [classes]
    pre: DiffTensor                # [classes]
    slice_reps: list               # 2T nodes of [fc_cnn]
    y_stack: DiffTensor            # [2T, 72]
    temporal_attn: DiffTensor      # [2T, 1]
    conv_tap: DiffTensor           # [2T, h, w, c_last]
    spectral_maps: list
    spatial_maps: list


def init_params(cfg, rng, dtype=np.float32):
    """Create every learnable tensor.

    All parameters exist regardless of the ablation flags, so runs with
    different flags but the same seed draw identical initial weights.
    Layers feeding relu use He-uniform; everything else Xavier-uniform;
    biases zero except the LSTM forget gate (1.0).
    """
    p = ParamStore(dtype)
    cin = cfg.spectral_depth
    for i, (cout, k) in enumerate(zip(cfg.conv_channels, cfg.conv_kernels), 1):
        p.add(f"cnn.conv{i}.kernel", (k, k, cin, cout), "he_uniform", rng,
              fan_in=k * k * cin)
        p.add(f"cnn.conv{i}.bias", (cout,), "zeros")
        hidden = cfg.attention_hidden(cout)
        p.add(f"cnn.attn{i}.spec.w1", (hidden, cout), "he_uniform", rng,
              fan_in=cout)
        p.add(f"cnn.attn{i}.spec.w2", (cout, hidden), "xavier_uniform", rng,
              fan_in=hidden, fan_out=cout)
        sk = cfg.spatial_kernel
        p.add(f"cnn.attn{i}.spat.kernel", (sk, sk, 2, 1), "xavier_uniform",
              rng, fan_in=sk * sk * 2, fan_out=sk * sk)
        p.add(f"cnn.attn{i}.spat.bias", (1,), "zeros")
        cin = cout
    p.add("cnn.fc.w", (cfg.fc_cnn, cfg.flatten_dim), "he_uniform", rng,
          fan_in=cfg.flatten_dim)
    p.add("cnn.fc.b", (cfg.fc_cnn,), "zeros")

    h = cfg.lstm_units
    for direction in ("fwd", "bwd"):
        for gate in LSTM_GATES:
            p.add(f"lstm.{direction}.wx_{gate}", (h, cfg.fc_cnn),
                  "xavier_uniform", rng, fan_in=cfg.fc_cnn, fan_out=h)
            p.add(f"lstm.{direction}.wh_{gate}", (h, h), "xavier_uniform",
                  rng, fan_in=h, fan_out=h)
            if gate == "f":
                p.add(f"lstm.{direction}.b_{gate}", (h,), "constant",
                      fill=1.0)
            else:
                p.add(f"lstm.{direction}.b_{gate}", (h,), "zeros")

    p.add("tattn.w1", (cfg.temporal_hidden, cfg.bilstm_dim), "he_uniform",
          rng, fan_in=cfg.bilstm_dim)
    p.add("tattn.b1", (cfg.temporal_hidden,), "zeros")
    p.add("tattn.w2", (1, cfg.temporal_hidden), "xavier_uniform", rng,
          fan_in=cfg.temporal_hidden, fan_out=1)
    p.add("tattn.b2", (1,), "zeros")

    p.add("cls.w", (cfg.classes, cfg.bilstm_dim), "xavier_uniform", rng,
          fan_in=cfg.bilstm_dim, fan_out=cfg.classes)
    p.add("cls.b", (cfg.classes,), "zeros")
    return p


def spectral_attention(v, w1, w2):
    """Per-channel sigmoid gate from pooled spatial statistics.

    Average- and max-pooled channel descriptors share one bottleneck MLP
    (no biases); their outputs are summed before the sigmoid.
    """
    c_avg = diff.global_avg_spatial(v)
    c_max = diff.global_max_spatial(v)
    a_avg = diff.dense(diff.relu(diff.dense(c_avg, w1)), w2)
    a_max = diff.dense(diff.relu(diff.dense(c_max, w1)), w2)
    gate = diff.sigmoid(diff.add(a_avg, a_max))
    c = v.shape[-1]
    shape = (1, 1, c) if v.value.ndim == 3 else (-1, 1, 1, c)
    return diff.reshape(gate, shape)


def spatial_attention(v, kernel, bias):
    """Per-cell sigmoid gate from pooled channel statistics."""
    pooled = diff.concat(
        [diff.avg_over_channels(v), diff.max_over_channels(v)], axis=-1
    )
    return diff.sigmoid(diff.conv2d(pooled, kernel, bias, padding="same"))


def cnn_forward(v, params, cfg):
    """Slices through the 4-stage attention CNN.

    v: [h,w,2f] or a batch [N,h,w,2f]. Returns (representation, last-stage
    tap, per-stage spectral map nodes, per-stage spatial map nodes).
    """
    spec_maps, spat_maps = [], []
    for i in range(1, len(cfg.conv_channels) + 1):
        v = diff.conv2d(v, params[f"cnn.conv{i}.kernel"],
                        params[f"cnn.conv{i}.bias"], padding="same")
        v = diff.relu(v)
        if cfg.spectral_attention:
            a_spec = spectral_attention(v, params[f"cnn.attn{i}.spec.w1"],
                                        params[f"cnn.attn{i}.spec.w2"])
            v = diff.mul(a_spec, v)
            spec_maps.append(a_spec)
        else:
            spec_maps.append(None)
        if cfg.spatial_attention:
            a_spat = spatial_attention(v, params[f"cnn.attn{i}.spat.kernel"],
                                       params[f"cnn.attn{i}.spat.bias"])
            v = diff.mul(a_spat, v)
            spat_maps.append(a_spat)
        else:
            spat_maps.append(None)
    tap = v
    pooled = diff.max_pool2d(v)
    if pooled.value.ndim == 3:
        flat = diff.reshape(pooled, (cfg.flatten_dim,))
    else:
        flat = diff.reshape(pooled, (-1, cfg.flatten_dim))
    rep = diff.relu(diff.dense(flat, params["cnn.fc.w"], params["cnn.fc.b"]))
    return rep, tap, spec_maps, spat_maps


def _gate_slice(params, direction):
    return {
        key: params[f"lstm.{direction}.{key}"]
        for gate in LSTM_GATES
        for key in (f"wx_{gate}", f"wh_{gate}", f"b_{gate}")
    }


def bilstm_forward(p_nodes, params, cfg):
    """Run both LSTM directions and concatenate time-aligned outputs.

    p_nodes: 2T nodes of [fc_cnn] (or [B, fc_cnn]). Row i of the result
    pairs the forward output after consuming (P_1..P_i) with the backward
    output after consuming (P_2T..P_i), so both halves describe time step
    i. Initial states are zero.
    """
    h = cfg.lstm_units
    dtype = p_nodes[0].dtype
    n = len(p_nodes)
    batched = p_nodes[0].value.ndim == 2
    zeros = np.zeros((p_nodes[0].shape[0], h) if batched else (h,))

    def run(nodes, direction):
        gates = _gate_slice(params, direction)
        hh = diff.constant(zeros, dtype=dtype)
        cc = diff.constant(zeros, dtype=dtype)
        outs = []
        for x in nodes:
            hh, cc = diff.lstm_step(x, hh, cc, gates)
            outs.append(hh)
        return outs

    yf = run(p_nodes, "fwd")
    yn = run(list(reversed(p_nodes)), "bwd")
    return [diff.concat([yf[i], yn[n - 1 - i]], axis=-1) for i in range(n)]


def temporal_attention(y_rows, params):
    """Softmax weights over the slice axis from a per-row bottleneck MLP.

    Returns [2T, 1] for vector rows, [B, 2T] for batched rows.
    """
    scores = []
    for y in y_rows:
        hid = diff.relu(diff.dense(y, params["tattn.w1"], params["tattn.b1"]))
        scores.append(diff.dense(hid, params["tattn.w2"], params["tattn.b2"]))
    if y_rows[0].value.ndim == 1:
        tem = diff.concat(scores, axis=0)                # [2T]
        return diff.reshape(diff.softmax(tem), (len(y_rows), 1))
    tem = diff.concat(scores, axis=-1)                   # [B, 2T]
    return diff.softmax_axis(tem, 1)


def aggregate(y_stack, attn):
    """Attention-weighted sum over the slice axis: [2T,e] x [2T,1] -> [e]."""
    return diff.sum_axis(diff.mul(y_stack, attn), axis=0)


def _aggregate_rows(y_rows, attn):
    """Batched aggregation: y_rows of [B,e], attn [B,2T] -> [B,e]."""
    total = None
    for t, y in enumerate(y_rows):
        w = diff.reshape(diff.index_axis(attn, 1, t), (-1, 1))
        term = diff.mul(y, w)
        total = term if total is None else diff.add(total, term)
    return total


def classify(l_node, params):
    logits = diff.dense(l_node, params["cls.w"], params["cls.b"])
    if logits.value.ndim == 1:
        return logits, diff.softmax(logits)
    return logits, diff.softmax_axis(logits, 1)


def forward_batch(xs, params, cfg):
    """Build the forward graph for a [B,h,w,2f,2T] stack of samples."""
    xs = np.asarray(xs)
    b = xs.shape[0]
    expect = (cfg.grid_h, cfg.grid_w, cfg.spectral_depth, cfg.slices)
    if xs.shape[1:] != expect:
        raise ValueError(f"sample shape {xs.shape[1:]} does not match "
                         f"config {expect}")
    t = cfg.slices
    # slice-major rows: sample b's slice j sits at row b*t + j
    arr = xs.transpose(0, 4, 1, 2, 3).reshape(
        b * t, cfg.grid_h, cfg.grid_w, cfg.spectral_depth
    )
    slices_node = diff.constant(arr, dtype=params.dtype)
    reps, tap, spec_maps, spat_maps = cnn_forward(slices_node, params, cfg)

    p_seq = diff.reshape(reps, (b, t, cfg.fc_cnn))
    p_nodes = [diff.index_axis(p_seq, 1, j) for j in range(t)]
    y_rows = bilstm_forward(p_nodes, params, cfg)

    if cfg.temporal_attention:
        attn = temporal_attention(y_rows, params)        # [B, 2T]
    else:
        attn = diff.constant(np.full((b, t), 1.0 / t), dtype=params.dtype)
    l_node = _aggregate_rows(y_rows, attn)
    logits, pre = classify(l_node, params)
    return BatchOutputs(logits=logits, pre=pre, reps=reps, y_rows=y_rows,
                        temporal_attn=attn, conv_tap=tap,
                        spectral_maps=spec_maps, spatial_maps=spat_maps)


def forward_graph(x, params, cfg):
    """Build the forward graph for one [h,w,2f,2T] sample."""
    out = forward_batch(np.asarray(x)[None], params, cfg)
    t = cfg.slices
    slice_reps = [
        diff.reshape(diff.index_axis(out.reps, 0, j), (cfg.fc_cnn,))
        for j in range(t)
    ]
    y_stack = diff.stack(
        [diff.reshape(y, (cfg.bilstm_dim,)) for y in out.y_rows]
    )
    return ModelOutputs(
        logits=diff.reshape(out.logits, (cfg.classes,)),
        pre=diff.reshape(out.pre, (cfg.classes,)),
        slice_reps=slice_reps,
        y_stack=y_stack,
        temporal_attn=diff.reshape(out.temporal_attn, (t, 1)),
        conv_tap=out.conv_tap,
        spectral_maps=out.spectral_maps,
        spatial_maps=out.spatial_maps,
    )


def forward(x, params, cfg):
    """Class probabilities plus the attention maps of one sample."""
    out = forward_graph(x, params, cfg)
    t = cfg.slices

    def per_slice(maps):
        result = [[] for _ in range(t)]
        for stage_map in maps:
            for j in range(t):
                result[j].append(
                    stage_map.value[j].copy() if stage_map is not None else None
                )
        return result

    maps = AttentionMaps(
        spectral=per_slice(out.spectral_maps),
        spatial=per_slice(out.spatial_maps),
        temporal=out.temporal_attn.value.copy(),
    )
    return out.pre.value.copy(), maps


def predict_batch(xs, params, cfg):
    """Argmax labels for a stack of samples (forward only)."""
    out = forward_batch(xs, params, cfg)
    return np.argmax(out.pre.value, axis=1)
