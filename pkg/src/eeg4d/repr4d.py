"""Sparse electrode-grid samples and training-fold normalization.

Per-channel feature tensors are scattered onto a 19x19 scalp grid (cells
without an electrode stay exactly zero), giving one [19,19,2f,2T] sample
per segment. Normalization statistics are fit on training folds only and
cover electrode cells only.
"""

import importlib.resources
from dataclasses import dataclass

import numpy as np

GRID_H = 19
GRID_W = 19
STD_FLOOR = 1e-6


class LayoutError(ValueError):
    pass


@dataclass
class ElectrodeLayout:
    grid_h: int
    grid_w: int
    channels: list                 # declared channel order
    placements: dict               # name -> (row, col)

    def __post_init__(self):
        seen_cells = {}
        for name in self.channels:
            if name not in self.placements:
                raise LayoutError(f"channel {name!r} has no placement")
            r, c = self.placements[name]
            if not (0 <= r < self.grid_h and 0 <= c < self.grid_w):
                raise LayoutError(f"channel {name!r} placed out of bounds at ({r},{c})")
            if (r, c) in seen_cells:
                raise LayoutError(
                    f"channels {seen_cells[(r, c)]!r} and {name!r} share cell ({r},{c})"
                )
            seen_cells[(r, c)] = name

    @property
    def rows(self):
        return np.array([self.placements[ch][0] for ch in self.channels])

    @property
    def cols(self):
        return np.array([self.placements[ch][1] for ch in self.channels])

    def mask(self):
        """Boolean [grid_h, grid_w] map of occupied cells."""
        m = np.zeros((self.grid_h, self.grid_w), dtype=bool)
        m[self.rows, self.cols] = True
        return m

    def channel_at(self, row, col):
        for ch, (r, c) in self.placements.items():
            if (r, c) == (row, col):
                return ch
        return None


@dataclass
class Sample4D:
    """One [19,19,2f,2T] spatial-spectral-temporal tensor with label."""
    values: np.ndarray
    label: int
    subject_id: int = 0
    experiment_id: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sample contains NaN/Inf")


@dataclass
class Normalizer:
    """Per-feature-slot z-score statistics from training data only."""
    mean: np.ndarray               # [2f]
    std: np.ndarray                # [2f], floored


def parse_layout(text, expected_channels=None):
    channels = []
    placements = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise LayoutError(f"layout line {lineno}: expected 'name row col'")
        name, row, col = parts[0], int(parts[1]), int(parts[2])
        if name in placements:
            raise LayoutError(f"channel {name!r} listed twice")
        channels.append(name)
        placements[name] = (row, col)
    if expected_channels is not None:
        missing = set(expected_channels) - set(channels)
        if missing:
            raise LayoutError(f"layout missing channels: {sorted(missing)}")
    return ElectrodeLayout(GRID_H, GRID_W, channels, placements)


def load_layout(path):
    """Read and validate a `channel row col` layout table."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_layout(fh.read())


def default_layout():
    """The bundled 62-channel 19x19 table."""
    text = (
        importlib.resources.files("eeg4d")
        .joinpath("layouts/seed62_19x19.txt")
        .read_text(encoding="utf-8")
    )
    layout = parse_layout(text)
    if len(layout.channels) != 62:
        raise LayoutError("bundled layout must define exactly 62 channels")
    return layout


def to_grid(feat, layout, subject_id=0, experiment_id=0):
    """Scatter a [c,2f,2T] feature tensor onto the sparse grid."""
    vals = np.asarray(feat.values)
    if vals.shape[0] != len(layout.channels):
        raise ValueError(
            f"feature tensor has {vals.shape[0]} channels, layout declares "
            f"{len(layout.channels)}"
        )
    grid = np.zeros((layout.grid_h, layout.grid_w) + vals.shape[1:],
                    dtype=np.float32)
    grid[layout.rows, layout.cols] = vals
    return Sample4D(values=grid, label=feat.label, subject_id=subject_id,
                    experiment_id=experiment_id)


def from_grid(sample, layout):
    """Recover the per-channel feature array from a gridded sample."""
    return sample.values[layout.rows, layout.cols]


def fit_normalizer(train, layout):
    """Mean/std per feature slot over electrode cells of training samples."""
    if not train:
        raise ValueError("cannot fit a normalizer on an empty training set")
    rows, cols = layout.rows, layout.cols
    # [n_samples * c * 2T, 2f]
    stacked = np.concatenate(
        [s.values[rows, cols].transpose(0, 2, 1).reshape(-1, s.values.shape[2])
         for s in train]
    ).astype(np.float64)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return Normalizer(mean=mean, std=std)


def normalize(sample, norm, layout):
    """Z-score electrode cells per feature slot; padding cells stay zero."""
    out = np.zeros_like(sample.values)
    rows, cols = layout.rows, layout.cols
    cells = sample.values[rows, cols]          # [c, 2f, 2T]
    out[rows, cols] = (cells - norm.mean[None, :, None]) / norm.std[None, :, None]
    return Sample4D(values=out, label=sample.label,
                    subject_id=sample.subject_id,
                    experiment_id=sample.experiment_id)
