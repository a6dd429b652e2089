"""2D tissue, action-potential templates, eikonal activation times and per-cell signals.

Activation times come from a first-order fast-marching solver on the
4-connected cell grid with local speed ``v0 * sqrt(conductivity)``. Cell
signals are delayed, scaled copies of a template waveform, so every cell
trace is ``rest + a_c * (s(t - tau_c) - rest)``.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: sample offsets of the fractional-delay kernel, relative to the integer delay
SINC_TAPS = np.arange(-7, 9)
UNREACHABLE = np.inf


class PropagationWarning(UserWarning):
    """The activation front could not leave its stimulus sites."""


# ---------------------------------------------------------------------------
# action-potential templates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class APParams:
    """Shape parameters of a parametric action potential.

    ``plateau_mv`` is the absolute plateau level; the upstroke rises from
    ``resting_mv`` to it along a raised-cosine ramp lasting ``upstroke_ms``.
    """

    upstroke_ms: float = 2.0
    plateau_mv: float = 20.0
    plateau_ms: float = 150.0
    repol_tau_ms: float = 50.0
    resting_mv: float = -80.0

    def envelope_ms(self) -> float:
        """Shortest duration that lets the waveform settle back to rest."""
        return self.upstroke_ms + self.plateau_ms + 5.0 * self.repol_tau_ms


@dataclass(frozen=True, eq=False)
class APTemplate:
    samples: np.ndarray
    rate: float
    resting_potential: float
    params: APParams
    normalized: bool = False

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("template needs a 1D series of at least 2 samples")
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not self.normalized:
            rest = self.resting_potential
            if abs(samples[0] - rest) > 1.0 or abs(samples[-1] - rest) > 1.0:
                raise ValueError("template must start and end within 1 mV of rest")
            if upcrossings(samples, -40.0) != 1:
                raise ValueError("template must cross -40 mV upwards exactly once")

    @property
    def duration_ms(self) -> float:
        return self.samples.size * 1000.0 / self.rate

    def deviation(self) -> np.ndarray:
        """Samples relative to the resting potential."""
        return self.samples - self.resting_potential

    def normalize(self) -> "APTemplate":
        """Return the unit-energy version: rest mapped to 0, l2 norm 1."""
        dev = self.deviation()
        norm = np.linalg.norm(dev)
        if norm == 0:
            raise ValueError("cannot normalize a flat template")
        return APTemplate(dev / norm, self.rate, 0.0, self.params, normalized=True)


def upcrossings(x: np.ndarray, level: float) -> int:
    below = x[:-1] < level
    above = x[1:] >= level
    return int(np.count_nonzero(below & above))


def ap_waveform(t_ms: np.ndarray, params: APParams) -> np.ndarray:
    """Evaluate the continuous-time template at times ``t_ms`` (onset at 0)."""
    p = params
    t = np.asarray(t_ms, dtype=float)
    rise = p.plateau_mv - p.resting_mv
    v = np.full(t.shape, p.resting_mv)
    up = (t >= 0) & (t < p.upstroke_ms)
    v[up] = p.resting_mv + rise * 0.5 * (1.0 - np.cos(np.pi * t[up] / p.upstroke_ms))
    t_plat = p.upstroke_ms + p.plateau_ms
    plat = (t >= p.upstroke_ms) & (t < t_plat)
    v[plat] = p.plateau_mv
    rep = t >= t_plat
    v[rep] = p.resting_mv + rise * np.exp(-(t[rep] - t_plat) / p.repol_tau_ms)
    return v


def generate_ap_template(
    params: APParams | None = None,
    rate: float = 1000.0,
    duration: float = 600.0,
    normalize: bool = False,
) -> APTemplate:
    """Sample a parametric action potential.

    Parameters
    ----------
    params : APParams
        Morphology; defaults to a 2 ms upstroke, 150 ms plateau at +20 mV and
        a 50 ms repolarization time constant from a -80 mV rest.
    rate : float
        Samples per second.
    duration : float
        Template length in ms. Must cover upstroke, plateau and five
        repolarization time constants.
    normalize : bool
        Return the unit-energy deviation from rest instead of millivolts.
    """
    params = params or APParams()
    if params.upstroke_ms <= 0 or params.plateau_ms < 0 or params.repol_tau_ms <= 0:
        raise ValueError(f"invalid morphology parameters: {params}")
    if params.plateau_mv <= -40.0 or params.resting_mv >= -40.0:
        raise ValueError("plateau must lie above and rest below the -40 mV threshold")
    need = params.envelope_ms()
    if duration < need:
        raise ValueError(
            f"duration {duration} ms is shorter than the return-to-rest envelope "
            f"upstroke + plateau + 5*repol_tau = {need} ms"
        )
    n = int(round(duration * rate / 1000.0))
    t = np.arange(n) * 1000.0 / rate
    tmpl = APTemplate(ap_waveform(t, params), rate, params.resting_mv, params)
    return tmpl.normalize() if normalize else tmpl


# ---------------------------------------------------------------------------
# tissue
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TissueModel:
    """Rectangular sheet of ``rows x cols`` cells.

    Cell ``c = row * cols + col`` sits at ``x = col * spacing``,
    ``y = row * spacing`` (mm); row 0 is the top edge.
    """

    rows: int
    cols: int
    spacing: float
    conductivity: np.ndarray
    morphology_id: np.ndarray
    stimuli: tuple[tuple[int, float], ...]
    n_templates: int = 1

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError(f"grid must be non-empty, got {self.rows}x{self.cols}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        shape = (self.rows, self.cols)
        cond = np.broadcast_to(np.asarray(self.conductivity, dtype=float), shape).copy()
        morph = np.broadcast_to(np.asarray(self.morphology_id, dtype=int), shape).copy()
        if not np.all(np.isfinite(cond)) or np.any(cond < 0):
            raise ValueError("conductivity values must be finite and >= 0")
        if np.any(morph < 0) or np.any(morph >= self.n_templates):
            raise ValueError(
                f"morphology ids must index a bank of {self.n_templates} templates"
            )
        stimuli = tuple((int(c), float(t)) for c, t in self.stimuli)
        if not stimuli:
            raise ValueError("at least one stimulus is required")
        for c, t in stimuli:
            if not 0 <= c < self.n_cells:
                raise ValueError(f"stimulus cell {c} outside grid of {self.n_cells} cells")
            if not np.isfinite(t):
                raise ValueError(f"stimulus onset must be finite, got {t}")
        cond.setflags(write=False)
        morph.setflags(write=False)
        object.__setattr__(self, "conductivity", cond)
        object.__setattr__(self, "morphology_id", morph)
        object.__setattr__(self, "stimuli", stimuli)

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def cell_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat arrays ``(x_c, y_c)`` in mm, row-major cell order."""
        rr, cc = np.divmod(np.arange(self.n_cells), self.cols)
        return cc * self.spacing, rr * self.spacing

    def cell_index(self, row: int, col: int) -> int:
        return row * self.cols + col

    @property
    def extent_mm(self) -> tuple[float, float]:
        return (self.cols - 1) * self.spacing, (self.rows - 1) * self.spacing


def corner_stimuli(rows: int, cols: int, corners: Sequence[str], onset: float = 0.0):
    """Stimulus list for named sites (``top-left``, ``top-right``, ``left-edge`` ...)."""
    out = []
    for name in corners:
        if name == "top-left":
            out.append((0, onset))
        elif name == "top-right":
            out.append((cols - 1, onset))
        elif name == "bottom-left":
            out.append(((rows - 1) * cols, onset))
        elif name == "bottom-right":
            out.append((rows * cols - 1, onset))
        elif name == "left-edge":
            out.extend((r * cols, onset) for r in range(rows))
        elif name == "top-edge":
            out.extend((c, onset) for c in range(cols))
        else:
            raise ValueError(f"unknown stimulus preset {name!r}")
    return out


# ---------------------------------------------------------------------------
# activation times
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LATField:
    """Per-cell activation delays (ms) on the tissue grid.

    ``tau`` is ``inf`` on cells the front never reaches. ``source`` holds the
    index into ``tissue.stimuli`` of the stimulus that activated each cell
    (-1 when unreachable). ``order`` lists cells in acceptance order.
    """

    tau: np.ndarray
    source_mask: np.ndarray
    source: np.ndarray
    order: np.ndarray
    status: str = "ok"

    @property
    def reachable(self) -> np.ndarray:
        return np.isfinite(self.tau)


def _eikonal_update(a: float, b: float, step: float) -> float:
    if a > b:
        a, b = b, a
    if b - a >= step:
        return a + step
    return 0.5 * (a + b + np.sqrt(2.0 * step * step - (a - b) ** 2))


def _seed_point_sources(tissue, speed, tau, src, radius):
    """Exact travel times inside a small disk around each stimulus.

    The first-order scheme is least accurate next to a point source, where
    the front is most curved. Seeding a disk of ``radius`` cells with exact
    distances (only when the whole disk has the stimulus cell's speed) keeps
    the far-field overshoot below a few percent.
    """
    if radius <= 0:
        return
    rows, cols, h = tissue.rows, tissue.cols, tissue.spacing
    r = int(np.floor(radius))
    di, dj = np.mgrid[-r:r + 1, -r:r + 1]
    inside = di * di + dj * dj <= radius * radius
    di, dj = di[inside], dj[inside]
    dist = np.hypot(di, dj) * h
    sp = speed.reshape(rows, cols)
    for k, (c, onset) in enumerate(tissue.stimuli):
        i, j = divmod(c, cols)
        ii, jj = i + di, j + dj
        ok = (ii >= 0) & (ii < rows) & (jj >= 0) & (jj < cols)
        if sp[i, j] == 0 or np.any(sp[ii[ok], jj[ok]] != sp[i, j]):
            continue
        cells = ii[ok] * cols + jj[ok]
        t = onset + dist[ok] / sp[i, j]
        better = t < tau[cells]
        tau[cells[better]] = t[better]
        src[cells[better]] = k


def solve_lat(tissue: TissueModel, v0: float, init_radius: float = 5.0) -> LATField:
    """First-arrival times by fast marching on the 4-connected grid.

    Local speed is ``v0 * sqrt(conductivity)``; cells with zero conductivity
    are impassable. The narrow band is a binary heap keyed on
    ``(time, cell index)`` so ties resolve to the lowest index. Cells within
    ``init_radius`` cells of a stimulus in a uniform neighbourhood start from
    exact distances.
    """
    if not v0 > 0:
        raise ValueError(f"v0 must be positive, got {v0}")
    rows, cols, h = tissue.rows, tissue.cols, tissue.spacing
    n = tissue.n_cells
    speed = (v0 * np.sqrt(tissue.conductivity)).ravel()
    step = np.full(n, np.inf)
    moving = speed > 0
    step[moving] = h / speed[moving]

    tau = np.full(n, np.inf)
    src = np.full(n, -1, dtype=np.int64)
    accepted = np.zeros(n, dtype=bool)
    is_source = np.zeros(n, dtype=bool)
    heap: list[tuple[float, int]] = []
    for k, (c, onset) in enumerate(tissue.stimuli):
        is_source[c] = True
        if onset < tau[c]:
            tau[c] = onset
            src[c] = k
    _seed_point_sources(tissue, speed, tau, src, init_radius)
    for c in np.flatnonzero(np.isfinite(tau)):
        heapq.heappush(heap, (tau[c], int(c)))

    order = []
    tau_l = tau.tolist()  # python floats are much faster in the inner loop
    step_l = step.tolist()
    src_l = src.tolist()
    acc = accepted.tolist()
    while heap:
        t, c = heapq.heappop(heap)
        if acc[c] or t > tau_l[c]:
            continue
        acc[c] = True
        order.append(c)
        r, q = divmod(c, cols)
        for nb in (c - cols if r > 0 else -1, c + cols if r < rows - 1 else -1,
                   c - 1 if q > 0 else -1, c + 1 if q < cols - 1 else -1):
            if nb < 0 or acc[nb]:
                continue
            st = step_l[nb]
            if st == np.inf:
                continue
            nr, nq = divmod(nb, cols)
            # upwind neighbours: only accepted values enter the update
            a, la = np.inf, -1
            for m in (nb - 1 if nq > 0 else -1, nb + 1 if nq < cols - 1 else -1):
                if m >= 0 and acc[m] and tau_l[m] < a:
                    a, la = tau_l[m], m
            b, lb = np.inf, -1
            for m in (nb - cols if nr > 0 else -1, nb + cols if nr < rows - 1 else -1):
                if m >= 0 and acc[m] and tau_l[m] < b:
                    b, lb = tau_l[m], m
            new = _eikonal_update(a, b, st)
            if new < tau_l[nb]:
                tau_l[nb] = new
                src_l[nb] = src_l[la if a <= b else lb]
                heapq.heappush(heap, (new, nb))

    tau = np.array(tau_l).reshape(rows, cols)
    src = np.array(src_l, dtype=np.int64).reshape(rows, cols)
    status = "ok"
    if len(order) <= int(is_source.sum()):
        status = "no-propagation"
        warnings.warn("no cell beyond the stimulus sites is reachable", PropagationWarning)
    for arr in (tau, src):
        arr.setflags(write=False)
    return LATField(
        tau=tau,
        source_mask=is_source.reshape(rows, cols),
        source=src,
        order=np.asarray(order, dtype=np.int64),
        status=status,
    )


# ---------------------------------------------------------------------------
# cell signals
# ---------------------------------------------------------------------------


def sinc_kernel(frac: np.ndarray) -> np.ndarray:
    """Hann-windowed sinc weights for delays ``frac`` in [0, 1).

    Returns shape ``(len(frac), 16)``; column ``j`` multiplies
    ``x[n - SINC_TAPS[j]]``. A zero fraction gives the unit impulse.
    """
    u = SINC_TAPS[None, :] - np.asarray(frac, dtype=float)[:, None]
    return np.sinc(u) * 0.5 * (1.0 + np.cos(np.pi * u / 8.0))


@dataclass(frozen=True, eq=False)
class CellSignals:
    """Per-cell voltage traces, shape ``(n_cells, n_samples)``."""

    samples: np.ndarray
    rate: float
    rows: int
    cols: int

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def grid(self) -> np.ndarray:
        return self.samples.reshape(self.rows, self.cols, -1)


def synthesize_cell_signals(
    tissue: TissueModel,
    lat: LATField,
    templates: Sequence[APTemplate],
    amplitudes: np.ndarray | float = 1.0,
    duration: float | None = None,
    chunk: int = 4096,
) -> CellSignals:
    """Delay and scale each cell's template: ``rest + a_c (s_k(t - tau_c) - rest)``.

    Integer-sample delays are exact shifts; the fractional remainder goes
    through a 16-tap Hann-windowed sinc. Cells never reached by the front
    stay at their template's resting potential.
    """
    if len(templates) < tissue.n_templates:
        raise ValueError(
            f"tissue references {tissue.n_templates} morphologies, bank has {len(templates)}"
        )
    rate = templates[0].rate
    if any(t.rate != rate for t in templates):
        raise ValueError("all templates must share one sample rate")
    n = tissue.n_cells
    amps = np.broadcast_to(np.asarray(amplitudes, dtype=float), (n,))
    if np.any(~(amps > 0)):
        raise ValueError("cell amplitudes must be positive")
    tau = lat.tau.ravel()
    morph = tissue.morphology_id.ravel()
    reach = np.isfinite(tau)
    longest = max(t.duration_ms for t in templates)
    tau_max = float(tau[reach].max()) if reach.any() else 0.0
    if duration is None:
        duration = tau_max + longest
    need = tau_max + longest
    if duration < need - 1e-9:
        worst = int(np.flatnonzero(reach)[np.argmax(tau[reach])])
        raise ValueError(
            f"duration {duration} ms too short: cell {worst} (row {worst // tissue.cols}, "
            f"col {worst % tissue.cols}) activates at {tau_max:.3f} ms and needs "
            f"{need:.3f} ms with a {longest:.1f} ms template"
        )
    n_out = int(round(duration * rate / 1000.0))
    rest = np.array([t.resting_potential for t in templates])
    out = np.repeat(rest[morph][:, None], n_out, axis=1)

    delay = np.where(reach, tau, 0.0) * rate / 1000.0
    whole = np.floor(delay).astype(np.int64)
    frac = delay - whole
    pad = 8
    width = n_out + 2 * pad
    for k, tmpl in enumerate(templates):
        cells = np.flatnonzero(reach & (morph == k))
        if cells.size == 0:
            continue
        dev = tmpl.deviation()
        L = dev.size
        # shifted[j, m] = dev[m - pad - SINC_TAPS[j]] on the support m in [0, L + 2 pad)
        m = np.arange(L + 2 * pad)
        src_idx = m[None, :] - pad - SINC_TAPS[:, None]
        ok = (src_idx >= 0) & (src_idx < L)
        shifted = np.where(ok, dev[np.clip(src_idx, 0, L - 1)], 0.0)
        for lo in range(0, cells.size, chunk):
            sel = cells[lo:lo + chunk]
            shaped = (sinc_kernel(frac[sel]) @ shifted) * amps[sel, None]
            buf = np.zeros((sel.size, width + L))
            cols_idx = whole[sel, None] + m[None, :]
            np.put_along_axis(buf, cols_idx, shaped, axis=1)
            out[sel] += buf[:, pad:pad + n_out]
    out.setflags(write=False)
    return CellSignals(out, rate, tissue.rows, tissue.cols)
