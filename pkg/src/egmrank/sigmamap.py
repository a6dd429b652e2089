"""Sliding-window sigma_2 maps over rectangular electrode arrays."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .spectral import BeatWindow, SpectralMatrix, magnitude_matrix
from .svdcore import SingularProfile, svd_profile

RENDER_CLAMP = 0.25


@dataclass(frozen=True, eq=False)
class Sigma2Map:
    """Normalized sigma_2 of every ``window x window`` electrode subset.

    ``values[i, j]`` belongs to the subset whose top-left electrode is at
    grid position ``(i * stride, j * stride)``; with the default 3 x 3 unit
    stride this is the subset centred on electrode ``(i + 1, j + 1)``.
    """

    values: np.ndarray
    layout: tuple[int, int]
    window: int = 3
    stride: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("map values must be 2D")
        if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v > 1 + 1e-12):
            raise ValueError("map values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def centers(self) -> np.ndarray:
        """Grid (row, col) of each pixel's subset centre, shape ``(R, C, 2)``."""
        r, c = self.shape
        off = (self.window - 1) / 2.0
        rr, cc = np.meshgrid(np.arange(r) * self.stride + off,
                             np.arange(c) * self.stride + off, indexing="ij")
        return np.stack([rr, cc], axis=-1)


def window_channels(layout: tuple[int, int], top: int, left: int, window: int = 3) -> list[int]:
    """Row-major channel indices of the subset with top-left corner (top, left)."""
    cols = layout[1]
    return [(top + a) * cols + (left + b) for a in range(window) for b in range(window)]


def _check_layout(n_channels: int, layout, window: int) -> tuple[int, int]:
    rows, cols = (int(v) for v in layout)
    if rows * cols != n_channels:
        raise ValueError(f"layout {rows}x{cols} needs {rows * cols} channels, beat has {n_channels}")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if rows < window or cols < window:
        raise ValueError(f"layout {rows}x{cols} is smaller than the {window}x{window} window")
    return rows, cols


def sigma2_map(beat: BeatWindow, layout: tuple[int, int], window: int = 3,
               stride: int = 1, taper: str | None = None) -> Sigma2Map:
    """Normalized sigma_2 of the spectral matrix of every electrode subset.

    The magnitude spectrum is computed once per channel; each pixel then
    decomposes the rows of its own subset and nothing else.
    """
    rows, cols = _check_layout(beat.samples.shape[0], layout, window)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    b = magnitude_matrix(beat, taper)
    tops = range(0, rows - window + 1, stride)
    lefts = range(0, cols - window + 1, stride)
    out = np.empty((len(tops), len(lefts)))
    for i, top in enumerate(tops):
        for j, left in enumerate(lefts):
            sub = b.values[window_channels((rows, cols), top, left, window)]
            out[i, j] = svd_profile(sub).sigma2
    meta = {"beat": beat.source_beat_index, "window_def": list(beat.window_def),
            "rate": beat.rate, "n_bins": b.shape[1]}
    return Sigma2Map(out, (rows, cols), window, stride, meta)


def subset_profile(beat: BeatWindow | SpectralMatrix, channel_subset: Sequence[int]) -> SingularProfile:
    """Singular profile of the spectral matrix restricted to ``channel_subset``."""
    b = beat if isinstance(beat, SpectralMatrix) else magnitude_matrix(beat)
    idx = [int(i) for i in channel_subset]
    if not idx:
        raise ValueError("channel subset is empty")
    if len(set(idx)) != len(idx):
        raise ValueError(f"channel subset has repeated indices: {idx}")
    bad = [i for i in idx if not 0 <= i < b.shape[0]]
    if bad:
        raise IndexError(f"channel indices {bad} outside 0..{b.shape[0] - 1}")
    return svd_profile(b.values[idx])


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_map_csv(m: Sigma2Map, path) -> None:
    """Row-major CSV with header ``row,col,center_row,center_col,sigma2``."""
    centers = m.centers()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "center_row", "center_col", "sigma2"])
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                w.writerow([i, j, f"{centers[i, j, 0]:g}", f"{centers[i, j, 1]:g}",
                            repr(float(m.values[i, j]))])


def read_map_csv(path) -> np.ndarray:
    """Values matrix back from :func:`write_map_csv` output."""
    with open(path, newline="") as fh:
        rdr = csv.reader(fh)
        header = next(rdr, None)
        if header is None or header[:2] != ["row", "col"] or header[-1] != "sigma2":
            raise ValueError(f"{path}: not a sigma2 map CSV (header {header})")
        cells = {}
        for lineno, rec in enumerate(rdr, start=2):
            try:
                cells[int(rec[0]), int(rec[1])] = float(rec[-1])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: bad map row {rec}") from exc
    if not cells:
        raise ValueError(f"{path}: map has no pixels")
    r = max(k[0] for k in cells) + 1
    c = max(k[1] for k in cells) + 1
    if len(cells) != r * c:
        raise ValueError(f"{path}: map is not a full {r}x{c} grid")
    out = np.empty((r, c))
    for (i, j), v in cells.items():
        out[i, j] = v
    return out


def pgm_levels(values: np.ndarray, clamp: float = RENDER_CLAMP) -> np.ndarray:
    """Gray levels ``round(255 * min(v / clamp, 1))``."""
    v = np.asarray(values, dtype=float)
    return np.rint(255.0 * np.minimum(v / clamp, 1.0)).astype(int)


def render_pgm(values: np.ndarray, path, clamp: float = RENDER_CLAMP) -> None:
    """ASCII portable graymap (P2, maxval 255)."""
    levels = pgm_levels(values, clamp)
    rows, cols = levels.shape
    lines = ["P2", f"{cols} {rows}", "255"]
    lines += [" ".join(str(v) for v in row) for row in levels]
    Path(path).write_text("\n".join(lines) + "\n")
