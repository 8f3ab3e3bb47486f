"""Raw-recording exchange format (.e4dr, little-endian).

    magic "E4DR" | u32 version | u32 fs | u32 channel_count
    | u32 n_samples | u32 label | u32 subject | u32 experiment
    | channel table: per channel u16 name_len + UTF-8 name bytes
    | payload: channel_count * n_samples f32, channel-major

This is the only on-disk input the feature pipeline accepts; converters
from vendor formats (e.g. MAT files) write it.
"""

import struct

import numpy as np

from .sigproc import RawRecording

RAW_MAGIC = b"E4DR"
RAW_VERSION = 1

_HEAD = struct.Struct("<4sIIIIIII")


class RawFormatError(ValueError):
    pass


def write_recording(path, rec):
    data = np.ascontiguousarray(rec.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(
            RAW_MAGIC, RAW_VERSION, rec.fs, data.shape[0], data.shape[1],
            rec.label, rec.subject_id, rec.experiment_id,
        ))
        for name in rec.channels:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(data.tobytes())


def read_recording(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != RAW_MAGIC:
        raise RawFormatError(f"{path}: bad magic {buf[:4]!r}")
    (_, version, fs, c, n, label, subj, exp) = _HEAD.unpack_from(buf, 0)
    if version != RAW_VERSION:
        raise RawFormatError(f"{path}: unsupported version {version}")
    offset = _HEAD.size
    channels = []
    for _ in range(c):
        (nlen,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        channels.append(buf[offset:offset + nlen].decode("utf-8"))
        offset += nlen
    expected = offset + 4 * c * n
    if len(buf) != expected:
        raise RawFormatError(
            f"{path}: payload size mismatch ({len(buf)} vs {expected} bytes)"
        )
    data = np.frombuffer(buf, dtype="<f4", count=c * n, offset=offset)
    return RawRecording(channels=channels, data=data.reshape(c, n).copy(),
                        fs=fs, label=label, subject_id=subj,
                        experiment_id=exp)
