"""Line-of-cells model for checking how wavefront shape affects the rank of B.

Cells sit on a line at positions ``x``; electrodes at positions ``y`` on a
parallel line ``z0`` above. In the frequency domain electrode ``m`` sees

    D[m, k] = S(w_k) * sum_c f(y_m - x_c) a_c exp(-j w_k tau_c)

with ``f(u) = 1 / sqrt(u^2 + z0^2)`` cut to zero beyond ``support``. For a
linear delay ``tau = x / v`` and gains ``a = exp(alpha x)`` the sum factors
into an electrode term times a frequency term whenever the kernel support
lies inside the cell line, so ``B = |D|`` is exactly rank one. Curved
delays break the factorization.
"""

from __future__ import annotations

import numpy as np

from .simulation import APTemplate
from .spectral import SpectralMatrix, spectral_bins


def inverse_distance_kernel(u: np.ndarray, z0: float = 1.0, support: float | None = None):
    u = np.asarray(u, dtype=float)
    f = 1.0 / np.sqrt(u * u + z0 * z0)
    if support is not None:
        f = np.where(np.abs(u) <= support, f, 0.0)
    return f


def plane_delays(x: np.ndarray, velocity: float, origin: float = 0.0) -> np.ndarray:
    return (np.asarray(x, dtype=float) - origin) / velocity


def point_source_delays(x: np.ndarray, velocity: float, distance: float) -> np.ndarray:
    """Arrival times on the line of a circular front from a source ``distance`` off the line at x = 0."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(x * x + distance * distance) / velocity


def line_matrix(
    x: np.ndarray,
    y: np.ndarray,
    delays_ms: np.ndarray,
    template: APTemplate,
    gains: np.ndarray | float = 1.0,
    z0: float = 1.0,
    support: float | None = None,
    n_samples: int | None = None,
) -> SpectralMatrix:
    """``B = |D|`` for the line model, computed directly in the frequency domain."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tau = np.broadcast_to(np.asarray(delays_ms, dtype=float), x.shape)
    a = np.broadcast_to(np.asarray(gains, dtype=float), x.shape)
    n = n_samples or template.samples.size
    bins = spectral_bins(n)
    spec = np.fft.rfft(template.deviation(), n)[bins]
    omega = 2 * np.pi * bins * template.rate / n / 1000.0
    w = inverse_distance_kernel(y[:, None] - x[None, :], z0, support)
    phase = a[:, None] * np.exp(-1j * tau[:, None] * omega[None, :])
    d = (w @ phase) * spec[None, :]
    return SpectralMatrix(np.abs(d), bins * template.rate / n)
