"""Learnable-parameter store and the binary checkpoint format.

Checkpoint layout (little-endian):

    magic "E4DP" | u32 version | u64 manifest_len | manifest (UTF-8 JSON)
    | raw payload

The manifest carries {"config": ..., "tensors": [{name, shape, dtype,
offset, nbytes}]} with offsets into the payload; float32 tensors round-trip
bit-exactly.
"""

import json
import struct

import numpy as np

from .diff import DiffTensor

CHECKPOINT_MAGIC = b"E4DP"
CHECKPOINT_VERSION = 1


def he_uniform(shape, fan_in, rng, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def xavier_uniform(shape, fan_in, fan_out, rng, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class ParamStore:
    """Named map of learnable DiffTensors with their init metadata."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params = {}
        self._meta = {}

    def add(self, name, shape, init, rng=None, fan_in=None, fan_out=None,
            fill=0.0):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        shape = tuple(int(s) for s in shape)
        if init == "he_uniform":
            value = he_uniform(shape, fan_in, rng, self.dtype)
        elif init == "xavier_uniform":
            value = xavier_uniform(shape, fan_in, fan_out, rng, self.dtype)
        elif init == "zeros":
            value = np.zeros(shape, dtype=self.dtype)
        elif init == "constant":
            value = np.full(shape, fill, dtype=self.dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = DiffTensor(value)
        self._params[name] = t
        self._meta[name] = {"init": init, "fan_in": fan_in, "fan_out": fan_out}
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def state_dict(self):
        return {name: t.value.copy() for name, t in self._params.items()}

    def load_state_dict(self, state):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(
                f"state dict mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
            )
        for name, arr in state.items():
            t = self._params[name]
            if tuple(arr.shape) != t.value.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: {arr.shape} vs {t.value.shape}"
                )
            t.value = arr.astype(self.dtype, copy=True)

    def astype(self, dtype):
        """Copy of the store with values cast to `dtype` (for f64 checks)."""
        out = ParamStore(dtype)
        for name, t in self._params.items():
            nt = DiffTensor(t.value.astype(dtype, copy=True))
            out._params[name] = nt
            out._meta[name] = dict(self._meta[name])
        return out

    @classmethod
    def from_state(cls, state, dtype=np.float32):
        """Build a store directly from a name -> array mapping."""
        out = cls(dtype)
        for name, arr in state.items():
            out._params[name] = DiffTensor(arr.astype(dtype, copy=True))
            out._meta[name] = {"init": "loaded", "fan_in": None,
                               "fan_out": None}
        return out


def save_checkpoint(path, params, config=None):
    """Write a named-tensor container with a JSON manifest."""
    tensors = []
    payload = bytearray()
    for name, t in params.items():
        arr = np.ascontiguousarray(t.value)
        raw = arr.tobytes()
        tensors.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": arr.dtype.name,
            "offset": len(payload),
            "nbytes": len(raw),
        })
        payload.extend(raw)
    manifest = json.dumps(
        {"config": config, "tensors": tensors}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        fh.write(payload)


def load_checkpoint(path):
    """Read a checkpoint; returns (state_dict, config)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    mlen = struct.unpack_from("<Q", blob, 8)[0]
    manifest = json.loads(blob[16:16 + mlen].decode("utf-8"))
    payload = blob[16 + mlen:]
    state = {}
    for entry in manifest["tensors"]:
        arr = np.frombuffer(
            payload, dtype=np.dtype(entry["dtype"]),
            count=int(np.prod(entry["shape"])) if entry["shape"] else 1,
            offset=entry["offset"],
        ).reshape(entry["shape"]).copy()
        state[entry["name"]] = arr
    return state, manifest["config"]
