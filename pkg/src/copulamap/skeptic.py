"""Rank-based latent correlation estimation (fast path for complete data).

Pairwise tie-corrected Kendall's tau is mapped to a latent-Gaussian
correlation through the sine transform sin(pi * tau / 2); the result is then
repaired to positive definiteness by eigenvalue clipping. This estimator is
invariant to strictly increasing relabelings of the dosage levels but cannot
handle missing genotypes; use the EM engine for incomplete data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import kendalltau

from .errors import UnsupportedDataError, ValidationError
from .genotypes import GenotypeMatrix


@dataclass
class RankCorrelation:
    """Pairwise Kendall tau-b matrix and its sine-transformed correlation."""

    tau: np.ndarray
    sigma_hat: np.ndarray | None = None

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim != 2 or tau.shape[0] != tau.shape[1]:
            raise ValidationError("tau must be square")
        if np.abs(tau - tau.T).max() > 1e-12:
            raise ValidationError("tau must be symmetric")
        if np.any(np.abs(tau) > 1 + 1e-12):
            raise ValidationError("tau entries must lie in [-1, 1]")
        if np.abs(np.diag(tau) - 1.0).max() > 1e-12:
            raise ValidationError("tau must have unit diagonal")
        self.tau = tau


def kendall_tau_matrix(genotypes: GenotypeMatrix) -> RankCorrelation:
    """All pairwise tie-corrected (tau-b) rank correlations.

    Ordinal dosages are heavily tied, so the tie correction is essential;
    without it every correlation would be attenuated toward zero.
    """
    if genotypes.n_missing:
        raise UnsupportedDataError(
            "rank correlation cannot handle missing genotypes; "
            "use the EM engine (em-approx or em-gibbs) instead"
        )
    p = genotypes.p
    values = genotypes.values
    tau = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            t = kendalltau(values[:, i], values[:, j]).statistic
            if not np.isfinite(t):
                raise ValidationError(
                    f"tau undefined for pair ({genotypes.marker_names[i]}, "
                    f"{genotypes.marker_names[j]}); drop monomorphic markers first"
                )
            tau[i, j] = tau[j, i] = t
    return RankCorrelation(tau)


def skeptic_correlation(tau: np.ndarray) -> np.ndarray:
    """Sine transform: sigma_ij = sin(pi * tau_ij / 2), unit diagonal."""
    tau = np.asarray(tau, dtype=float)
    sigma = np.sin(np.pi * tau / 2.0)
    np.fill_diagonal(sigma, 1.0)
    return sigma


def nearest_pd(sigma: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Repair a symmetric matrix to positive definiteness.

    Eigenvalues are clipped at ``eps`` and the result re-normalized to unit
    diagonal; the two steps are iterated until the smallest eigenvalue is at
    least ``eps`` up to a small slack.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.abs(sigma - sigma.T).max() > 1e-8:
        raise ValidationError("input must be symmetric")
    out = (sigma + sigma.T) / 2.0
    for _ in range(20):
        vals, vecs = np.linalg.eigh(out)
        if vals.min() >= eps * (1.0 - 1e-9):
            break
        clipped = np.maximum(vals, eps)
        out = (vecs * clipped) @ vecs.T
        d = np.sqrt(np.diag(out))
        out = out / np.outer(d, d)
        out = (out + out.T) / 2.0
        np.fill_diagonal(out, 1.0)
    return out
