"""Penalized EM for the latent-Gaussian (copula) graphical model.

Each ordinal dosage observation pins its latent coordinate to an interval of
the standard-normal scale. The E-step computes expected second moments of the
latent vectors given those rectangle constraints, either by deterministic
moment matching (per-site Gaussian approximations refined over a few sweeps,
factorized over the connected components of the current precision support) or
by single-site Gibbs sampling. The M-step is a graphical lasso on the
correlation-rescaled moment matrix. Missing genotypes simply contribute
unbounded intervals, so they are integrated out by the same machinery.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import ndtr, ndtri

from .errors import ConvergenceWarning, NumericalWarning, ValidationError
from .genotypes import CutPointSet, GenotypeMatrix
from .glasso import ZERO_TOL, PrecisionEstimate, glasso

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_TINY_PROB = 1e-300


@dataclass
class EmConfig:
    """Settings for one EM fit at a fixed penalty."""

    lambda_: float = 0.1
    max_em_iter: int = 20
    em_tol: float = 1e-3
    estep_method: str = "approx"
    gibbs_burnin: int = 100
    gibbs_samples: int = 1000
    seed: int = 0
    ep_max_sweeps: int = 40
    ep_tol: float = 1e-6

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValidationError("lambda must be nonnegative")
        for name in ("max_em_iter", "gibbs_burnin", "gibbs_samples", "ep_max_sweeps"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if self.em_tol <= 0 or self.ep_tol <= 0:
            raise ValidationError("tolerances must be positive")
        if self.estep_method not in ("approx", "gibbs"):
            raise ValidationError(f"unknown estep_method {self.estep_method!r}")


@dataclass
class ExpectedMoments:
    """Average expected latent second moments (1/n) sum_i E[Z Z' | y_i]."""

    r_bar: np.ndarray
    method: str

    def __post_init__(self):
        r = np.asarray(self.r_bar, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValidationError("r_bar must be square")
        if np.abs(r - r.T).max() > 1e-8:
            raise ValidationError("r_bar must be symmetric")
        d = np.diag(r)
        if np.any(d <= 0):
            raise ValidationError("r_bar diagonal must be strictly positive")
        scaled = r / np.sqrt(np.outer(d, d))
        if np.linalg.eigvalsh(scaled).min() < -1e-8:
            raise ValidationError("r_bar is not positive semidefinite")
        self.r_bar = r

    @property
    def p(self) -> int:
        return self.r_bar.shape[0]


def to_correlation(r: np.ndarray) -> np.ndarray:
    """Rescale a moment matrix so its diagonal is exactly one."""
    d = np.diag(r)
    if np.any(d <= 0):
        raise ValidationError("matrix diagonal must be positive")
    out = r / np.sqrt(np.outer(d, d))
    out = (out + out.T) / 2.0
    np.fill_diagonal(out, 1.0)
    return out


def _phi(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    finite = np.isfinite(x)
    out[finite] = np.exp(-0.5 * x[finite] ** 2) / _SQRT_2PI
    return out


def _x_phi(x: np.ndarray) -> np.ndarray:
    """x * pdf(x) with the tail limit 0 at +-inf."""
    out = np.zeros_like(x)
    finite = np.isfinite(x)
    xf = x[finite]
    out[finite] = xf * np.exp(-0.5 * xf ** 2) / _SQRT_2PI
    return out


def _interval_midpoint(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Midpoint of a standardized interval, using the finite bound for
    half-infinite intervals and 0 for the unbounded one."""
    mid = np.zeros_like(a)
    fin_a = np.isfinite(a)
    fin_b = np.isfinite(b)
    both = fin_a & fin_b
    mid[both] = (a[both] + b[both]) / 2.0
    mid[fin_a & ~both] = a[fin_a & ~both]
    mid[fin_b & ~both] = b[fin_b & ~both]
    return mid


def _tn_mean_var(mu, var, lo, hi):
    """Vectorized mean/variance of N(mu, var) truncated to (lo, hi].

    Uses a reflection trick so both standardized bounds are evaluated on the
    lower tail, and clamps intervals whose probability underflows. Returns
    (mean, variance, clamped_mask).
    """
    mu, var, lo, hi = np.broadcast_arrays(*map(np.asarray, (mu, var, lo, hi)))
    mu = mu.astype(float)
    var = var.astype(float)
    sd = np.sqrt(var)
    a = np.where(np.isneginf(lo), -np.inf, (lo - mu) / sd)
    b = np.where(np.isposinf(hi), np.inf, (hi - mu) / sd)

    swap = _interval_midpoint(a, b) > 0
    aa = np.where(swap, -b, a)
    bb = np.where(swap, -a, b)

    za = np.where(np.isneginf(aa), 0.0, ndtr(aa))
    zb = np.where(np.isposinf(bb), 1.0, ndtr(bb))
    prob = zb - za
    clamped = prob < _TINY_PROB
    prob_safe = np.where(clamped, 1.0, prob)

    dphi = _phi(aa) - _phi(bb)
    ratio = dphi / prob_safe
    mean_std = np.where(swap, -ratio, ratio)
    vf = 1.0 + (_x_phi(aa) - _x_phi(bb)) / prob_safe - ratio ** 2

    mean = mu + sd * mean_std
    variance = np.maximum(var * vf, 1e-15 * var)

    if np.any(clamped):
        # interval mass underflowed: collapse onto the endpoint nearest mu
        lo_f = np.where(np.isneginf(lo), hi, lo)
        hi_f = np.where(np.isposinf(hi), lo, hi)
        endpoint = np.where(np.abs(lo_f - mu) < np.abs(hi_f - mu), lo_f, hi_f)
        mean = np.where(clamped, endpoint, mean)
        variance = np.where(clamped, 1e-15 * var, variance)
    return mean, variance, clamped


def truncated_normal_moments(mu, var, lo, hi):
    """First and second moments of a normal(mu, var) truncated to (lo, hi].

    ``lo`` may be -inf and ``hi`` may be +inf. Intervals whose probability
    underflows (below 1e-300) are clamped onto the nearest endpoint and a
    NumericalWarning is emitted.
    """
    lo_a = np.asarray(lo, dtype=float)
    hi_a = np.asarray(hi, dtype=float)
    if np.any(~(lo_a < hi_a)):
        raise ValidationError("truncation requires lo < hi")
    if np.any(np.asarray(var, dtype=float) <= 0):
        raise ValidationError("variance must be positive")
    mean, variance, clamped = _tn_mean_var(mu, var, lo_a, hi_a)
    if np.any(clamped):
        warnings.warn(
            "truncation interval probability underflowed; moments clamped "
            "to the nearest endpoint",
            NumericalWarning,
        )
    second = variance + mean ** 2
    if mean.ndim == 0:
        return float(mean), float(second)
    return mean, second


def _as_theta(theta) -> np.ndarray:
    arr = theta.theta if isinstance(theta, PrecisionEstimate) else np.asarray(theta, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError("theta must be square")
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise ValidationError("theta must be positive definite")
    return arr


def _support_components(theta: np.ndarray) -> list[np.ndarray]:
    adj = np.abs(theta) > ZERO_TOL
    np.fill_diagonal(adj, False)
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    return [np.flatnonzero(labels == c) for c in range(n_comp)]


def _ep_moments(theta, lo, hi, tau, nu, max_sweeps, tol):
    """Moment-matching E-step; site states tau/nu are updated in place.

    Per connected component of the precision support, each coordinate's
    interval constraint is approximated by a Gaussian site (precision tau,
    linear term nu). A sweep recomputes all cavity distributions from the
    current joint approximation and refreshes every site from the moments of
    its truncated cavity. Missing entries carry unbounded intervals and keep
    zero sites, so a fully missing individual contributes inv(theta).
    """
    n, p = lo.shape
    means = np.zeros((n, p))
    cov_sum = np.zeros((p, p))

    for idx in _support_components(theta):
        d = idx.size
        if d == 1:
            j = idx[0]
            var = 1.0 / theta[j, j]
            m, v, _ = _tn_mean_var(0.0, var, lo[:, j], hi[:, j])
            means[:, j] = m
            cov_sum[j, j] = v.sum()
            continue

        sub = theta[np.ix_(idx, idx)]
        lo_c = lo[:, idx]
        hi_c = hi[:, idx]
        t = tau[:, idx]
        v = nu[:, idx]
        rng_d = np.arange(d)
        bounded = np.isfinite(lo_c) | np.isfinite(hi_c)

        c_mat = mu = diag_c = None
        for _ in range(max_sweeps):
            q = np.empty((n, d, d))
            q[:] = sub
            q[:, rng_d, rng_d] += t
            c_mat = np.linalg.inv(q)
            diag_c = c_mat[:, rng_d, rng_d]
            mu = np.einsum("nij,nj->ni", c_mat, v)

            t_cav = 1.0 / diag_c - t
            ok = bounded & (t_cav > 1e-12)
            v_cav = np.where(ok, 1.0 / np.where(ok, t_cav, 1.0), 1.0)
            m_cav = np.where(ok, v_cav * (mu / diag_c - v), 0.0)
            m_t, v_t, _ = _tn_mean_var(m_cav, v_cav, lo_c, hi_c)
            v_t = np.maximum(v_t, 1e-10)
            t_new = np.where(ok, np.maximum(1.0 / v_t - t_cav, 0.0), t)
            n_new = np.where(ok, m_t / v_t - m_cav * t_cav, v)

            delta = max(np.abs(t_new - t).max(), np.abs(n_new - v).max())
            t, v = t_new, n_new
            if delta < tol:
                break

        q = np.empty((n, d, d))
        q[:] = sub
        q[:, rng_d, rng_d] += t
        c_mat = np.linalg.inv(q)
        mu = np.einsum("nij,nj->ni", c_mat, v)
        means[:, idx] = mu
        cov_sum[np.ix_(idx, idx)] += c_mat.sum(axis=0)
        tau[:, idx] = t
        nu[:, idx] = v

    r_bar = (means.T @ means + cov_sum) / n
    return (r_bar + r_bar.T) / 2.0, means


def estep_approx(genotypes: GenotypeMatrix, cuts: CutPointSet, theta,
                 max_sweeps: int = 40, tol: float = 1e-6) -> ExpectedMoments:
    """Deterministic approximate E-step via per-site moment matching."""
    theta = _as_theta(theta)
    if theta.shape[0] != genotypes.p:
        raise ValidationError("theta dimension does not match marker count")
    lo, hi = cuts.interval_bounds(genotypes)
    tau = np.zeros((genotypes.n, genotypes.p))
    nu = np.zeros((genotypes.n, genotypes.p))
    r_bar, _ = _ep_moments(theta, lo, hi, tau, nu, max_sweeps, tol)
    return ExpectedMoments(r_bar, method="approx")


def _tn_sample(rng, mu, sd, lo, hi):
    """Vectorized inverse-CDF draw from N(mu, sd^2) truncated to (lo, hi]."""
    a = np.where(np.isneginf(lo), -np.inf, (lo - mu) / sd)
    b = np.where(np.isposinf(hi), np.inf, (hi - mu) / sd)
    swap = _interval_midpoint(a, b) > 0
    aa = np.where(swap, -b, a)
    bb = np.where(swap, -a, b)
    za = np.where(np.isneginf(aa), 0.0, ndtr(aa))
    zb = np.where(np.isposinf(bb), 1.0, ndtr(bb))
    u = rng.random(mu.shape[0])
    q = np.clip(za + u * (zb - za), 1e-300, 1.0 - 1e-16)
    x = ndtri(q)
    x = np.where(swap, -x, x)
    return mu + sd * x


def _gibbs_moments(theta, lo, hi, burnin, n_samples, rng):
    n, p = lo.shape
    z0, _, _ = _tn_mean_var(0.0, 1.0, lo, hi)
    z = np.array(z0, dtype=float)
    diag = np.diag(theta)
    sd = 1.0 / np.sqrt(diag)
    acc = np.zeros((p, p))
    for it in range(burnin + n_samples):
        for j in range(p):
            s = z @ theta[:, j]
            mu = z[:, j] - s / diag[j]
            z[:, j] = _tn_sample(rng, mu, sd[j], lo[:, j], hi[:, j])
        if it >= burnin:
            acc += z.T @ z
    r_bar = acc / (n_samples * n)
    return (r_bar + r_bar.T) / 2.0


def estep_gibbs(genotypes: GenotypeMatrix, cuts: CutPointSet, theta,
                config: EmConfig) -> ExpectedMoments:
    """Monte Carlo E-step: single-site Gibbs over the latent rectangles.

    Every full conditional is a univariate truncated normal; missing entries
    are sampled unrestricted. Deterministic for a fixed config seed.
    """
    theta = _as_theta(theta)
    if theta.shape[0] != genotypes.p:
        raise ValidationError("theta dimension does not match marker count")
    lo, hi = cuts.interval_bounds(genotypes)
    rng = np.random.default_rng(config.seed)
    r_bar = _gibbs_moments(theta, lo, hi, config.gibbs_burnin,
                           config.gibbs_samples, rng)
    return ExpectedMoments(r_bar, method="gibbs")


def em_fit(genotypes: GenotypeMatrix, cuts: CutPointSet, config: EmConfig,
           theta_init: np.ndarray | None = None,
           sigma_init: np.ndarray | None = None,
           glasso_tol: float = 1e-7, glasso_max_iter: int = 200,
           return_moments: bool = False):
    """Alternate E-steps and graphical-lasso M-steps to a sparse estimate.

    Starts from the identity (or a caller-provided warm start), holds the
    cut points fixed, and stops when the relative Frobenius change of the
    precision estimate falls below ``config.em_tol``. Returns the final
    PrecisionEstimate, plus the final E-step moments when
    ``return_moments=True``.
    """
    p = genotypes.p
    if cuts.p != p:
        raise ValidationError("cut points do not match the genotype matrix")
    lo, hi = cuts.interval_bounds(genotypes)

    if theta_init is not None:
        theta = np.asarray(theta_init, dtype=float)
        sigma = (np.asarray(sigma_init, dtype=float) if sigma_init is not None
                 else np.linalg.inv(theta))
    else:
        theta = np.eye(p)
        sigma = np.eye(p)

    tau = np.zeros((genotypes.n, p))
    nu = np.zeros((genotypes.n, p))
    gibbs_seeds = None
    if config.estep_method == "gibbs":
        gibbs_seeds = np.random.SeedSequence(config.seed).spawn(config.max_em_iter)

    est = None
    r_raw = None
    converged = False
    iteration = 0
    for iteration in range(1, config.max_em_iter + 1):
        if config.estep_method == "approx":
            r_raw, _ = _ep_moments(theta, lo, hi, tau, nu,
                                   config.ep_max_sweeps, config.ep_tol)
        else:
            rng = np.random.default_rng(gibbs_seeds[iteration - 1])
            r_raw = _gibbs_moments(theta, lo, hi, config.gibbs_burnin,
                                   config.gibbs_samples, rng)
        r_corr = to_correlation(r_raw)
        est = glasso(r_corr, config.lambda_, tol=glasso_tol,
                     max_iter=glasso_max_iter,
                     theta_init=theta, sigma_init=sigma)
        denom = max(np.linalg.norm(theta), 1e-12)
        rel_change = np.linalg.norm(est.theta - theta) / denom
        theta, sigma = est.theta, est.sigma
        if rel_change < config.em_tol:
            converged = True
            break

    est = replace(est, converged=converged, iterations=iteration)
    if not converged:
        warnings.warn(
            f"EM did not converge in {config.max_em_iter} iterations "
            f"(lambda={config.lambda_:.4g})",
            ConvergenceWarning,
        )
    if return_moments:
        return est, ExpectedMoments(r_raw, method=config.estep_method)
    return est
