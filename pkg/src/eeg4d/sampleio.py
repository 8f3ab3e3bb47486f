"""Binary sample file formats (little-endian throughout).

Single sample (.e4da):

    magic "E4DA" | u32 version | u32 dims[4] | u32 label | u32 subject
    | u32 experiment | dims-product f32 values, row-major

Container (.e4dc): magic "E4DC" | u32 version | u64 count, then `count`
single-sample records verbatim. Both readers are provided; writes
round-trip bit-exactly.
"""

import struct

import numpy as np

from .repr4d import Sample4D

SAMPLE_MAGIC = b"E4DA"
CONTAINER_MAGIC = b"E4DC"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sI4IIII")


class SampleFormatError(ValueError):
    pass


def _pack_sample(sample):
    vals = np.ascontiguousarray(sample.values, dtype="<f4")
    head = _HEADER.pack(
        SAMPLE_MAGIC, FORMAT_VERSION, *vals.shape,
        sample.label, sample.subject_id, sample.experiment_id,
    )
    return head + vals.tobytes()


def _unpack_sample(buf, offset=0):
    if len(buf) - offset < _HEADER.size:
        raise SampleFormatError("truncated sample header")
    magic, version, d0, d1, d2, d3, label, subj, exp = _HEADER.unpack_from(
        buf, offset
    )
    if magic != SAMPLE_MAGIC:
        raise SampleFormatError(f"bad sample magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SampleFormatError(f"unsupported sample version {version}")
    count = d0 * d1 * d2 * d3
    start = offset + _HEADER.size
    end = start + 4 * count
    if len(buf) < end:
        raise SampleFormatError("truncated sample payload")
    vals = np.frombuffer(buf, dtype="<f4", count=count, offset=start)
    sample = Sample4D(values=vals.reshape(d0, d1, d2, d3).copy(),
                      label=label, subject_id=subj, experiment_id=exp)
    return sample, end


def write_sample(path, sample):
    with open(path, "wb") as fh:
        fh.write(_pack_sample(sample))


def read_sample(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    sample, end = _unpack_sample(buf)
    if end != len(buf):
        raise SampleFormatError(f"{path}: trailing bytes after sample")
    return sample


def write_container(path, samples):
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(samples)))
        for s in samples:
            fh.write(_pack_sample(s))


def read_container(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CONTAINER_MAGIC:
        raise SampleFormatError(f"{path}: bad container magic")
    version = struct.unpack_from("<I", buf, 4)[0]
    if version != FORMAT_VERSION:
        raise SampleFormatError(f"unsupported container version {version}")
    count = struct.unpack_from("<Q", buf, 8)[0]
    samples = []
    offset = 16
    for _ in range(count):
        sample, offset = _unpack_sample(buf, offset)
        samples.append(sample)
    if offset != len(buf):
        raise SampleFormatError(f"{path}: trailing bytes after container")
    return samples


def load_samples(path):
    """Load samples from a file or directory (both formats accepted)."""
    import os

    if os.path.isdir(path):
        samples = []
        for name in sorted(os.listdir(path)):
            full = os.path.join(path, name)
            if name.endswith(".e4da"):
                samples.append(read_sample(full))
            elif name.endswith(".e4dc"):
                samples.extend(read_container(full))
        return samples
    if path.endswith(".e4dc"):
        return read_container(path)
    return [read_sample(path)]
