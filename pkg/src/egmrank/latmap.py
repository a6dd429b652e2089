"""Activation-time maps and conduction-block detection.

LATs use ``NaN`` as the "no activation" sentinel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .simulation import CellSignals
from .spectral import BeatWindow

DEFAULT_THRESHOLD_MV = -40.0
DEFAULT_BLOCK_MS = 12.0
DEFAULT_FLOOR = 0.05


@dataclass(frozen=True, eq=False)
class ActivationMap:
    """Activation time (ms) per channel or cell in row-major ``layout`` order.

    ``score`` is the per-channel deflection strength for EGM maps (``None``
    for cell maps).
    """

    lat: np.ndarray
    layout: tuple[int, int]
    method: str
    score: np.ndarray | None = None

    def __post_init__(self):
        lat = np.array(self.lat, dtype=float).ravel()
        rows, cols = (int(v) for v in self.layout)
        if lat.size != rows * cols:
            raise ValueError(f"{lat.size} LATs do not fill layout {rows}x{cols}")
        if np.any(np.isinf(lat)):
            raise ValueError("LATs must be finite or NaN")
        if self.method not in ("cell-threshold", "steepest-descent"):
            raise ValueError(f"unknown LAT method {self.method!r}")
        lat.setflags(write=False)
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "layout", (rows, cols))

    @property
    def detected(self) -> np.ndarray:
        return np.isfinite(self.lat)

    def grid(self) -> np.ndarray:
        return self.lat.reshape(self.layout)


def first_upcrossing(x: np.ndarray, level: float) -> np.ndarray:
    """Fractional sample index of the first ``x[k] < level <= x[k+1]`` per row (NaN if none)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    below = x[:, :-1] < level
    above = x[:, 1:] >= level
    hit = below & above
    any_hit = hit.any(axis=1)
    k = np.argmax(hit, axis=1)
    rows = np.arange(x.shape[0])
    x0, x1 = x[rows, k], x[rows, k + 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        idx = k + (level - x0) / (x1 - x0)
    return np.where(any_hit, idx, np.nan)


def cell_activation_map(cell_signals: CellSignals, threshold: float = DEFAULT_THRESHOLD_MV,
                        chunk: int = 4096) -> ActivationMap:
    """First upward crossing of ``threshold`` (mV) per cell, linearly interpolated."""
    x = cell_signals.samples
    if x.shape[1] < 2:
        raise ValueError("need at least two samples per cell")
    out = np.empty(x.shape[0])
    for lo in range(0, x.shape[0], chunk):
        out[lo:lo + chunk] = first_upcrossing(x[lo:lo + chunk], threshold)
    return ActivationMap(out * 1000.0 / cell_signals.rate, (cell_signals.rows, cell_signals.cols),
                         "cell-threshold")


def steepest_descent(x: np.ndarray) -> np.ndarray:
    """Fractional sample time of the most negative slope per row.

    The first difference ``d[k] = x[k+1] - x[k]`` lives at ``k + 0.5``; a
    parabola through the minimum and its neighbours refines the position.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = np.diff(x, axis=1)
    k = np.argmin(d, axis=1)
    rows = np.arange(x.shape[0])
    offset = np.zeros(x.shape[0])
    inner = (k > 0) & (k < d.shape[1] - 1)
    if inner.any():
        r, kk = rows[inner], k[inner]
        dm, d0, dp = d[r, kk - 1], d[r, kk], d[r, kk + 1]
        curv = dm - 2.0 * d0 + dp
        ok = curv > 0
        off = np.zeros(r.size)
        off[ok] = 0.5 * (dm[ok] - dp[ok]) / curv[ok]
        offset[inner] = np.clip(off, -0.5, 0.5)
    return k + 0.5 + offset


def deflection_score(x: np.ndarray) -> np.ndarray:
    """Channel peak-to-peak amplitude relative to the largest channel's (0 when all flat)."""
    ptp = np.ptp(np.atleast_2d(x), axis=1)
    top = ptp.max() if ptp.size else 0.0
    return ptp / top if top > 0 else np.zeros_like(ptp)


def egm_activation_map(beat: BeatWindow, layout: tuple[int, int],
                       floor: float = DEFAULT_FLOOR) -> ActivationMap:
    """Steepest negative slope per channel, in ms on the recording clock.

    Channels whose deflection score is below ``floor`` get the NaN sentinel.
    """
    rows, cols = (int(v) for v in layout)
    x = beat.samples
    if rows * cols != x.shape[0]:
        raise ValueError(f"layout {rows}x{cols} needs {rows * cols} channels, beat has {x.shape[0]}")
    if x.shape[1] < 3:
        raise ValueError("need at least three samples per channel")
    score = deflection_score(x)
    lat = beat.start_ms + steepest_descent(x) * 1000.0 / beat.rate
    lat = np.where(score >= floor, lat, np.nan)
    return ActivationMap(lat, (rows, cols), "steepest-descent", score)


# ---------------------------------------------------------------------------
# conduction block
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockSet:
    """Unordered pairs ``(a, b)``, ``a < b``, of 4-adjacent channels with ``|dLAT| >= threshold``."""

    edges: tuple[tuple[int, int], ...]
    threshold: float
    layout: tuple[int, int]
    deltas: tuple[float, ...] = ()

    def __len__(self):
        return len(self.edges)

    def __contains__(self, pair):
        a, b = pair
        return (min(a, b), max(a, b)) in set(self.edges)

    def midpoints(self) -> np.ndarray:
        """Edge midpoints in grid units ``(row, col)``, shape ``(E, 2)``."""
        cols = self.layout[1]
        if not self.edges:
            return np.zeros((0, 2))
        e = np.array(self.edges)
        ra, ca = np.divmod(e[:, 0], cols)
        rb, cb = np.divmod(e[:, 1], cols)
        return np.column_stack([(ra + rb) / 2.0, (ca + cb) / 2.0])

    def components(self, max_gap: float = 1.0) -> np.ndarray:
        """Connected-component label per edge; edges link when midpoints are within ``max_gap`` grid units."""
        mid = self.midpoints()
        if mid.shape[0] == 0:
            return np.zeros(0, dtype=int)
        diff = mid[:, None, :] - mid[None, :, :]
        near = np.hypot(diff[..., 0], diff[..., 1]) <= max_gap + 1e-9
        return connected_components(sparse.csr_matrix(near), directed=False)[1]


def grid_edges(layout: tuple[int, int]) -> np.ndarray:
    """All 4-adjacent pairs ``(a, b)`` with ``a < b``, horizontal then vertical."""
    rows, cols = layout
    idx = np.arange(rows * cols).reshape(rows, cols)
    h = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    v = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return np.vstack([h, v])


def detect_blocks(amap: ActivationMap, layout: tuple[int, int] | None = None,
                  threshold: float = DEFAULT_BLOCK_MS) -> BlockSet:
    """Flag adjacent pairs whose LATs differ by at least ``threshold`` ms.

    Pairs with a sentinel endpoint are skipped.
    """
    layout = amap.layout if layout is None else tuple(int(v) for v in layout)
    if layout[0] * layout[1] != amap.lat.size:
        raise ValueError(f"layout {layout} does not match {amap.lat.size} LATs")
    pairs = grid_edges(layout)
    delta = np.abs(amap.lat[pairs[:, 0]] - amap.lat[pairs[:, 1]])
    keep = np.isfinite(delta) & (delta >= threshold)
    order = np.lexsort((pairs[keep, 1], pairs[keep, 0]))
    sel = pairs[keep][order]
    return BlockSet(tuple((int(a), int(b)) for a, b in sel), float(threshold), layout,
                    tuple(float(d) for d in delta[keep][order]))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_activation_csv(amap: ActivationMap, path) -> None:
    """``channel,row,col,lat_ms,score`` with empty fields for sentinels."""
    rows, cols = amap.layout
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "row", "col", "lat_ms", "score"])
        for c in range(rows * cols):
            lat = amap.lat[c]
            score = "" if amap.score is None else repr(float(amap.score[c]))
            w.writerow([c, c // cols, c % cols, repr(float(lat)) if np.isfinite(lat) else "", score])


def write_blocks_csv(blocks: BlockSet, path) -> None:
    cols = blocks.layout[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "row_a", "col_a", "row_b", "col_b", "delta_ms"])
        for (a, b), d in zip(blocks.edges, blocks.deltas):
            w.writerow([a, b, a // cols, a % cols, b // cols, b % cols, repr(d)])
