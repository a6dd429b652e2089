"""Singular values of spectral matrices.

The matrices here are short and wide (9 x 130 for a 3 x 3 electrode subset),
so the decomposition starts from the eigenvectors of the small Gram matrix
``B B^T`` and finishes with one-sided Jacobi rotations. The Jacobi pass
restores the relative accuracy of small singular values that squaring into
the Gram matrix would lose, which matters when checking that a matrix is
rank one to 1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralMatrix

DEFAULT_REL_TOL = 0.05


class NumericalError(RuntimeError):
    """Decomposition failed to converge or reconstruct its input."""


@dataclass(frozen=True, eq=False)
class SingularProfile:
    sigmas: np.ndarray
    normalized: np.ndarray
    rank_estimate: int

    @property
    def sigma2(self) -> float:
        """Normalized second singular value (0 for a single row or column)."""
        return float(self.normalized[1]) if self.normalized.size > 1 else 0.0

    def __len__(self):
        return self.sigmas.size


def jacobi_svd(b: np.ndarray, tol: float = 1e-15, max_sweeps: int = 40):
    """Thin SVD ``b = U diag(s) V^T`` with ``s`` descending.

    Returns ``(U, s, V)`` with ``U`` of shape ``(M, k)``, ``V`` of shape
    ``(N, k)``, ``k = min(M, N)``.
    """
    b = np.asarray(b, dtype=float)
    if b.ndim != 2:
        raise ValueError("expected a 2D matrix")
    if not np.all(np.isfinite(b)):
        raise ValueError("matrix contains non-finite entries")
    m, n = b.shape
    if m > n:
        v, s, u = jacobi_svd(b.T, tol, max_sweeps)
        return u, s, v
    if m == 0:
        return np.zeros((0, 0)), np.zeros(0), np.zeros((n, 0))

    # Gram eigenvectors make the columns of W = B^T Q nearly orthogonal
    _, q = np.linalg.eigh(b @ b.T)
    q = q[:, ::-1]
    w = b.T @ q
    rot = q.copy()
    # columns this small are numerically zero; rotating them gains nothing
    negligible = (m * n * np.finfo(float).eps) ** 2 * float(np.einsum("ij,ij->", b, b))
    for _ in range(max_sweeps):
        rotated = False
        gram = w.T @ w
        norms = np.diag(gram).copy()
        scale = np.sqrt(np.outer(norms, norms))
        flagged = np.triu(np.abs(gram) > tol * scale, k=1)
        flagged &= (norms[:, None] > negligible) & (norms[None, :] > negligible)
        # pairs that were orthogonal at the start of the sweep are skipped;
        # any that later rotations disturb are picked up next sweep
        for p, r in zip(*np.nonzero(flagged)):
            alpha, beta = norms[p], norms[r]
            if alpha <= negligible or beta <= negligible:
                continue
            gamma = float(w[:, p] @ w[:, r])
            if abs(gamma) <= tol * np.sqrt(alpha * beta):
                continue
            rotated = True
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s_ = c * t
            wp, wr = w[:, p].copy(), w[:, r]
            w[:, p] = c * wp - s_ * wr
            w[:, r] = s_ * wp + c * wr
            qp, qr = rot[:, p].copy(), rot[:, r]
            rot[:, p] = c * qp - s_ * qr
            rot[:, r] = s_ * qp + c * qr
            norms[p] = float(w[:, p] @ w[:, p])
            norms[r] = float(w[:, r] @ w[:, r])
        if not rotated:
            break
    else:
        raise NumericalError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")

    sig = np.sqrt(np.einsum("ij,ij->j", w, w))
    order = np.argsort(-sig, kind="stable")
    sig = sig[order]
    w = w[:, order]
    rot = rot[:, order]
    v = np.zeros_like(w)
    nz = sig > 0
    v[:, nz] = w[:, nz] / sig[nz]
    return rot, sig, v


def reconstruction_residual(b: np.ndarray, u, s, v) -> float:
    """``||B - U S V^T||_F / ||B||_F`` (0 for an all-zero matrix)."""
    b = np.asarray(b, dtype=float)
    ref = np.linalg.norm(b)
    if ref == 0:
        return 0.0
    return float(np.linalg.norm(b - (u * s) @ v.T) / ref)


def _profile_from_sigmas(sig: np.ndarray, rel_tol: float) -> SingularProfile:
    sig = np.asarray(sig, dtype=float)
    if sig.size and sig[0] > 0:
        normalized = sig / sig[0]
    else:
        normalized = np.zeros_like(sig)
    prof = SingularProfile(sig, normalized, 0)
    object.__setattr__(prof, "rank_estimate", rank_estimate(prof, rel_tol))
    return prof


def svd_profile(b: SpectralMatrix | np.ndarray, rel_tol: float = DEFAULT_REL_TOL,
                check: float = 1e-10) -> SingularProfile:
    """Descending singular values of ``B`` plus the ``sigma / sigma_1`` profile.

    Every decomposition is verified by its reconstruction residual; a
    residual above ``check`` raises :class:`NumericalError`.
    """
    values = b.values if isinstance(b, SpectralMatrix) else np.asarray(b, dtype=float)
    u, s, v = jacobi_svd(values)
    res = reconstruction_residual(values, u, s, v)
    if res > check:
        raise NumericalError(f"SVD reconstruction residual {res:.3e} exceeds {check:.1e}")
    return _profile_from_sigmas(s, rel_tol)


def rank_estimate(profile: SingularProfile, rel_tol: float = DEFAULT_REL_TOL) -> int:
    """Number of singular values at or above ``rel_tol * sigma_1``."""
    if not 0 < rel_tol < 1:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    sig = profile.sigmas
    if sig.size == 0 or sig[0] <= 0:
        return 0
    return int(np.count_nonzero(sig >= rel_tol * sig[0]))


def profile_from_values(sigmas, rel_tol: float = DEFAULT_REL_TOL) -> SingularProfile:
    """Build a profile from given singular values (sorted descending)."""
    sig = np.sort(np.asarray(sigmas, dtype=float))[::-1]
    if np.any(sig < 0):
        raise ValueError("singular values are nonnegative")
    return _profile_from_sigmas(sig, rel_tol)
