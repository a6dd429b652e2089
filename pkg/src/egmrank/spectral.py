"""Preprocessing and the phase-free spectral matrix.

Recordings are band-passed with a forward-backward Butterworth filter,
segmented into fixed windows before each R-peak, and every window is turned
into ``B = |DFT|`` over the one-sided bins ``1..W/2``. Dropping the phase
removes the activation delays, leaving only waveform morphology.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal

from .leadfield import EgmRecording


class DetectionWarning(UserWarning):
    """Pan-Tompkins found no beats."""


@dataclass(frozen=True, eq=False)
class BeatWindow:
    """``M x W`` slice of a recording ending ``end_before_R`` ms before an R-peak.

    ``start_ms`` is the absolute time of the first sample; ``channels`` maps
    rows back to recording channels.
    """

    samples: np.ndarray
    window_def: tuple[float, float]
    source_beat_index: int
    rate: float
    start_ms: float = 0.0
    channels: tuple[int, ...] | None = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        width = window_length(self.window_def, self.rate)
        if x.shape[1] != width:
            raise ValueError(
                f"window {self.window_def} at {self.rate} Hz needs {width} samples, got {x.shape[1]}"
            )
        if self.channels is None:
            object.__setattr__(self, "channels", tuple(range(x.shape[0])))

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    def select(self, channels: Sequence[int]) -> "BeatWindow":
        idx = list(channels)
        return BeatWindow(self.samples[idx], self.window_def, self.source_beat_index,
                          self.rate, self.start_ms, tuple(self.channels[i] for i in idx))


@dataclass(frozen=True, eq=False)
class SpectralMatrix:
    """Nonnegative ``M x N`` magnitude matrix with bin frequencies in Hz."""

    values: np.ndarray
    bin_frequencies: np.ndarray
    origin: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("spectral matrix must be 2D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("spectral matrix entries must be finite and >= 0")
        f = np.array(self.bin_frequencies, dtype=float)
        if f.shape != (v.shape[1],):
            raise ValueError("one frequency per column required")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bin_frequencies", f)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def rows(self, idx: Sequence[int]) -> "SpectralMatrix":
        idx = list(idx)
        origin = tuple(self.origin[i] for i in idx) if self.origin else tuple(idx)
        return SpectralMatrix(self.values[idx], self.bin_frequencies, origin)


def window_length(window_def: tuple[float, float], rate: float) -> int:
    start, end = window_def
    if start <= end:
        raise ValueError(f"window start {start} ms must precede its end {end} ms")
    w = (start - end) * rate / 1000.0
    if abs(w - round(w)) > 1e-9:
        raise ValueError(f"window {window_def} ms is not a whole number of samples at {rate} Hz")
    return int(round(w))


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------


def design_bandpass(lo: float, hi: float, rate: float, order: int = 4) -> np.ndarray:
    """Second-order sections of a Butterworth band-pass, checked for stability."""
    if not 0 < lo < hi < rate / 2:
        raise ValueError(f"band {lo}-{hi} Hz invalid for rate {rate} Hz (need 0 < lo < hi < {rate / 2})")
    if order < 1:
        raise ValueError("filter order must be >= 1")
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=rate, output="sos")
    _, poles, _ = signal.sos2zpk(sos)
    if np.any(np.abs(poles) >= 1.0):
        raise ValueError(f"band-pass design unstable: max pole radius {np.abs(poles).max():.12f}")
    return sos


def bandpass(rec: EgmRecording, lo: float = 0.33, hi: float = 30.0, order: int = 4) -> EgmRecording:
    """Zero-phase Butterworth band-pass of every channel.

    Edges are padded by odd extension over three periods of the low cutoff
    (or the whole record if shorter); the default short pad leaves slowly
    decaying high-pass transients over most of a few-second recording.
    """
    sos = design_bandpass(lo, hi, rec.rate, order)
    padlen = min(rec.n_samples - 1, int(round(3.0 * rec.rate / lo)))
    y = signal.sosfiltfilt(sos, rec.samples, axis=1, padlen=padlen)
    return rec.replace(samples=y)


def zero_phase_gain(freq: float | np.ndarray, lo: float, hi: float, rate: float, order: int = 4):
    """Magnitude response of the forward-backward filter at ``freq`` Hz."""
    sos = design_bandpass(lo, hi, rate, order)
    _, h = signal.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freq, dtype=float)), fs=rate)
    return np.abs(h) ** 2


# ---------------------------------------------------------------------------
# R-peak detection
# ---------------------------------------------------------------------------


def detect_r_peaks(ecg, rate: float, refractory_ms: float = 200.0) -> list[float]:
    """Pan-Tompkins QRS detection on a single lead.

    Stages: 5-15 Hz band-pass, five-point derivative, squaring, 150 ms
    moving-window integration, then adaptive signal/noise thresholds with a
    200 ms refractory period and search-back for missed beats. Filtering is
    zero-phase so integrator peaks stay aligned with the QRS.

    Returns R-peak times in ms, sorted.
    """
    x = np.asarray(ecg, dtype=float).ravel()
    if rate < 200:
        raise ValueError(f"Pan-Tompkins needs >= 200 samples/s, got {rate}")
    if x.size * 1000.0 / rate < 2000.0:
        raise ValueError("at least 2 s of ECG is required")
    if not np.all(np.isfinite(x)):
        raise ValueError("ECG contains non-finite samples")
    if np.ptp(x) == 0:
        warnings.warn("flat ECG: no R-peaks", DetectionWarning)
        return []

    sos = signal.butter(2, [5.0, 15.0], btype="bandpass", fs=rate, output="sos")
    bp = signal.sosfiltfilt(sos, x)
    dt = 1.0 / rate
    deriv = np.zeros_like(bp)
    deriv[2:-2] = (-bp[:-4] - 2 * bp[1:-3] + 2 * bp[3:-1] + bp[4:]) / (8 * dt)
    sq = deriv ** 2
    win = max(1, int(round(0.150 * rate)))
    mwi = np.convolve(sq, np.ones(win) / win, mode="same")

    refractory = int(round(refractory_ms * rate / 1000.0))
    cand, _ = signal.find_peaks(mwi, distance=max(1, refractory))
    if cand.size == 0:
        warnings.warn("no candidate QRS complexes", DetectionWarning)
        return []

    # learning phase over the first 2 s
    learn = mwi[: int(2 * rate)]
    spki = 0.25 * learn.max()
    npki = 0.5 * learn.mean()
    thr1 = npki + 0.25 * (spki - npki)

    qrs: list[int] = []
    rr: list[int] = []
    last_noise: list[int] = []
    for p in cand:
        if qrs and p - qrs[-1] < refractory:
            continue
        if mwi[p] >= thr1:
            qrs.append(int(p))
            spki = 0.125 * mwi[p] + 0.875 * spki
        else:
            npki = 0.125 * mwi[p] + 0.875 * npki
            last_noise.append(int(p))
        if len(qrs) >= 2:
            rr.append(qrs[-1] - qrs[-2])
            rr = rr[-8:]
            rr_avg = float(np.mean(rr))
            # search back for a beat missed under threshold 1
            gap = p - qrs[-1] if mwi[p] < thr1 else 0
            if gap > 1.66 * rr_avg:
                thr2 = 0.5 * thr1
                miss = [q for q in last_noise if qrs[-1] + refractory <= q < p and mwi[q] >= thr2]
                if miss:
                    best = max(miss, key=lambda q: mwi[q])
                    qrs.append(best)
                    qrs.sort()
                    spki = 0.25 * mwi[best] + 0.75 * spki
                    last_noise = [q for q in last_noise if q > best]
        thr1 = npki + 0.25 * (spki - npki)

    # refine to the R apex: largest band-passed then raw value near each detection
    half = int(round(0.075 * rate))
    fine = int(round(0.025 * rate))
    peaks = []
    for q in sorted(set(qrs)):
        lo, hi = max(0, q - half), min(x.size, q + half + 1)
        k = lo + int(np.argmax(bp[lo:hi]))
        lo2, hi2 = max(0, k - fine), min(x.size, k + fine + 1)
        k = lo2 + int(np.argmax(x[lo2:hi2]))
        if peaks and k - peaks[-1] < refractory:
            if x[k] > x[peaks[-1]]:
                peaks[-1] = k
            continue
        peaks.append(k)
    if not peaks:
        warnings.warn("no R-peaks detected", DetectionWarning)
    return [p * 1000.0 / rate for p in peaks]


def synthetic_ecg(
    n_beats: int = 10,
    rate: float = 1000.0,
    rr_ms: float = 1000.0,
    snr_db: float | None = None,
    seed: int = 0,
    jitter_ms: float = 0.0,
    lead_in_ms: float = 500.0,
) -> tuple[np.ndarray, list[float]]:
    """Gaussian-wave P-QRS-T train and its true R-peak times (ms).

    ``snr_db`` adds white noise scaled to the clean signal's power.
    """
    rng = np.random.default_rng(seed)
    r_times = []
    t_r = lead_in_ms
    for _ in range(n_beats):
        r_times.append(t_r)
        t_r += rr_ms + (rng.normal(0.0, jitter_ms) if jitter_ms else 0.0)
    total = r_times[-1] + rr_ms
    t = np.arange(int(round(total * rate / 1000.0))) * 1000.0 / rate
    # (offset ms, width ms, amplitude mV)
    waves = [(-200, 25, 0.15), (-30, 8, -0.12), (0, 10, 1.2), (30, 8, -0.25), (260, 40, 0.3)]
    x = np.zeros_like(t)
    for r in r_times:
        for off, w, amp in waves:
            x += amp * np.exp(-0.5 * ((t - r - off) / w) ** 2)
    if snr_db is not None:
        p_sig = np.mean(x ** 2)
        x = x + rng.normal(0.0, np.sqrt(p_sig / 10 ** (snr_db / 10.0)), x.shape)
    return x, r_times


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------


@dataclass
class Segmentation:
    beats: list[BeatWindow] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    def report(self) -> dict:
        return {
            "n_used": len(self.beats),
            "n_skipped": len(self.skipped),
            "used": [b.source_beat_index for b in self.beats],
            "skipped": self.skipped,
        }


def segment_beats(
    rec: EgmRecording,
    r_peaks: Sequence[float],
    window: tuple[float, float] = (320.0, 60.0),
) -> Segmentation:
    """Cut ``[R - window[0], R - window[1])`` out of every channel.

    Windows that fall outside the recording are skipped and listed in the
    report rather than raising.
    """
    width = window_length(window, rec.rate)
    lead = int(round(window[0] * rec.rate / 1000.0))
    seg = Segmentation()
    for k, r in enumerate(r_peaks):
        start = int(round(r * rec.rate / 1000.0)) - lead
        stop = start + width
        if start < 0 or stop > rec.n_samples:
            reason = "underrun" if start < 0 else "overrun"
            seg.skipped.append({"beat": k, "r_ms": float(r), "reason": reason})
            continue
        seg.beats.append(BeatWindow(rec.samples[:, start:stop], tuple(window), k, rec.rate,
                                    start * 1000.0 / rec.rate))
    return seg


def full_window(rec: EgmRecording, beat_index: int = 0) -> BeatWindow:
    """The whole recording as one window (R placed at its end)."""
    dur = rec.n_samples * 1000.0 / rec.rate
    return BeatWindow(rec.samples, (dur, 0.0), beat_index, rec.rate, 0.0)


# ---------------------------------------------------------------------------
# magnitude matrix
# ---------------------------------------------------------------------------


def spectral_bins(width: int) -> np.ndarray:
    """DFT bins kept in ``B``: one-sided, DC dropped, Nyquist kept."""
    if width % 2:
        raise ValueError(f"window length must be even, got {width} samples")
    return np.arange(1, width // 2 + 1)


def magnitude_spectrum(x: np.ndarray, rate: float, taper: str | None = None):
    """``(|X[k]|, f_k)`` over :func:`spectral_bins` for each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    width = x.shape[1]
    bins = spectral_bins(width)
    if taper is not None:
        x = x * signal.get_window(taper, width, fftbins=True)
    spec = np.fft.rfft(x, axis=1)[:, bins]
    return np.abs(spec), bins * rate / width


def magnitude_matrix(beat: BeatWindow, taper: str | None = None) -> SpectralMatrix:
    """Element-wise modulus of the per-channel DFT of a beat window.

    With ``W`` samples the result has ``W/2`` columns at ``k * rate / W``,
    ``k = 1..W/2``. ``taper`` names an optional scipy window (off by default).
    """
    values, freqs = magnitude_spectrum(beat.samples, beat.rate, taper)
    return SpectralMatrix(values, freqs, tuple(beat.channels))


def cell_magnitude_matrix(
    templates: Sequence,
    morphology_id: np.ndarray,
    amplitudes: np.ndarray,
    delays_ms: np.ndarray,
    n_samples: int | None = None,
) -> SpectralMatrix:
    """Cell-level ``B`` straight from the frequency-domain signal model.

    Each row is ``|a_c exp(-j w tau_c) S_k(w)|`` where ``S_k`` is the DFT of
    template ``k``'s deviation from rest, zero-padded to ``n_samples``.
    Delays are continuous (no sample grid).
    """
    rate = templates[0].rate
    if n_samples is None:
        n_samples = max(t.samples.size for t in templates)
    bins = spectral_bins(n_samples)
    morph = np.asarray(morphology_id, dtype=int).ravel()
    amps = np.broadcast_to(np.asarray(amplitudes, dtype=float), morph.shape)
    tau = np.broadcast_to(np.asarray(delays_ms, dtype=float), morph.shape)
    spectra = np.array([np.fft.rfft(t.deviation(), n_samples)[bins] for t in templates])
    omega = 2 * np.pi * bins * rate / n_samples / 1000.0  # rad/ms
    d = amps[:, None] * np.exp(-1j * omega[None, :] * tau[:, None]) * spectra[morph]
    return SpectralMatrix(np.abs(d), bins * rate / n_samples, tuple(range(morph.size)))
