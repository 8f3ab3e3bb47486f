"""Bit-exact round-trips for every binary format."""

import numpy as np
import pytest

from eeg4d.params import ParamStore, load_checkpoint, save_checkpoint
from eeg4d.rawio import RawFormatError, read_recording, write_recording
from eeg4d.repr4d import Sample4D
from eeg4d.sampleio import (SampleFormatError, load_samples, read_container,
                            read_sample, write_container, write_sample)
from eeg4d.sigproc import RawRecording


def _sample(seed, label=1):
    vals = np.random.default_rng(seed).standard_normal(
        (19, 19, 10, 6)
    ).astype(np.float32)
    return Sample4D(values=vals, label=label, subject_id=3, experiment_id=2)


def test_sample_round_trip_bit_exact(tmp_path):
    s = _sample(0)
    path = tmp_path / "one.e4da"
    write_sample(path, s)
    back = read_sample(str(path))
    assert back.values.tobytes() == s.values.tobytes()
    assert (back.label, back.subject_id, back.experiment_id) == (1, 3, 2)

    # writing the read-back sample reproduces the file byte for byte
    path2 = tmp_path / "two.e4da"
    write_sample(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_container_round_trip(tmp_path):
    samples = [_sample(i, label=i % 3) for i in range(5)]
    path = tmp_path / "all.e4dc"
    write_container(path, samples)
    back = read_container(str(path))
    assert len(back) == 5
    for a, b in zip(samples, back):
        assert a.values.tobytes() == b.values.tobytes()
        assert a.label == b.label


def test_sample_bad_magic(tmp_path):
    path = tmp_path / "bad.e4da"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(SampleFormatError):
        read_sample(str(path))


def test_sample_truncated(tmp_path):
    s = _sample(1)
    path = tmp_path / "t.e4da"
    write_sample(path, s)
    blob = path.read_bytes()
    path.write_bytes(blob[:-17])
    with pytest.raises(SampleFormatError):
        read_sample(str(path))


def test_load_samples_mixed_dir(tmp_path):
    write_sample(tmp_path / "a.e4da", _sample(2))
    write_container(tmp_path / "b.e4dc", [_sample(3), _sample(4)])
    got = load_samples(str(tmp_path))
    assert len(got) == 3


# ---------------------------------------------------------------------------
# raw exchange format

def test_recording_round_trip(tmp_path):
    r = np.random.default_rng(5)
    data = r.standard_normal((4, 777)).astype(np.float32)
    rec = RawRecording(channels=["FP1", "CZ", "OZ", "PO3"], data=data,
                       fs=200, label=2, subject_id=7, experiment_id=1)
    path = tmp_path / "rec.e4dr"
    write_recording(path, rec)
    back = read_recording(str(path))
    assert back.channels == rec.channels
    assert back.fs == 200 and back.label == 2
    assert back.subject_id == 7 and back.experiment_id == 1
    assert back.data.astype(np.float32).tobytes() == data.tobytes()


def test_recording_bad_magic(tmp_path):
    path = tmp_path / "x.e4dr"
    path.write_bytes(b"XXXX" + b"\x00" * 40)
    with pytest.raises(RawFormatError):
        read_recording(str(path))


def test_recording_size_mismatch(tmp_path):
    rec = RawRecording(channels=["A", "B"], data=np.zeros((2, 10)), fs=200)
    path = tmp_path / "y.e4dr"
    write_recording(path, rec)
    path.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(RawFormatError):
        read_recording(str(path))


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(6)
    store = ParamStore(np.float32)
    store.add("a.w", (4, 7), "he_uniform", rng, fan_in=7)
    store.add("b.bias", (9,), "constant", fill=1.0)
    store.add("c.k", (3, 3, 2, 5), "xavier_uniform", rng, fan_in=18,
              fan_out=45)
    cfg = {"grid_h": 19, "conv_channels": [64, 128, 256, 64]}
    path = tmp_path / "m.e4dp"
    save_checkpoint(path, store, config=cfg)
    state, cfg_back = load_checkpoint(str(path))
    assert cfg_back == cfg
    assert set(state) == {"a.w", "b.bias", "c.k"}
    for name, t in store.items():
        assert state[name].tobytes() == t.value.tobytes()
        assert state[name].dtype == np.float32

    # save(load(x)) is byte-identical to save(x)
    path2 = tmp_path / "m2.e4dp"
    save_checkpoint(path2, ParamStore.from_state(state), config=cfg)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.e4dp"
    path.write_bytes(b"JUNKJUNKJUNKJUNK")
    with pytest.raises(ValueError):
        load_checkpoint(str(path))


def test_param_store_basics():
    rng = np.random.default_rng(7)
    store = ParamStore(np.float32)
    t = store.add("w", (3, 3), "he_uniform", rng, fan_in=3)
    with pytest.raises(ValueError):
        store.add("w", (2,), "zeros")
    store.zero_grad()
    assert np.all(t.grad == 0)
    state = store.state_dict()
    state["w"] = state["w"] * 2
    store.load_state_dict(state)
    np.testing.assert_array_equal(store["w"].value, state["w"])
    with pytest.raises(ValueError):
        store.load_state_dict({"nope": np.zeros(1)})
