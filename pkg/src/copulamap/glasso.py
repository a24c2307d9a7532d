"""L1-penalized sparse precision-matrix estimation by coordinate descent.

Maximizes ``log det(T) - tr(S T) - lam * sum_{i != j} |T_ij|`` over positive
definite matrices; only off-diagonal entries are penalized. The solver first
splits the problem into the connected components of the thresholded graph
``{|S_ij| > lam}`` (the solution is exactly block diagonal across these
components) and then runs block coordinate descent on each component,
following the covariance-update scheme of the classic graphical lasso.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceWarning, ValidationError

ZERO_TOL = 1e-8


@dataclass
class PrecisionEstimate:
    """A penalized precision-matrix estimate with its covariance inverse.

    ``df`` counts the strict-upper-triangle entries of ``theta`` with
    magnitude above ``ZERO_TOL``.
    """

    theta: np.ndarray
    sigma: np.ndarray
    lambda_: float
    converged: bool = True
    iterations: int = 0
    df: int = field(init=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ValidationError("theta must be square")
        if np.abs(theta - theta.T).max() > 1e-10:
            raise ValidationError("theta must be symmetric to 1e-10")
        try:
            np.linalg.cholesky(theta)
        except np.linalg.LinAlgError:
            raise ValidationError("theta must be positive definite")
        self.theta = theta
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.df = count_df(theta)

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    def support(self, zero_tol: float = ZERO_TOL) -> np.ndarray:
        """Boolean off-diagonal adjacency of the estimated graph."""
        adj = np.abs(self.theta) > zero_tol
        np.fill_diagonal(adj, False)
        return adj


def count_df(theta: np.ndarray, zero_tol: float = ZERO_TOL) -> int:
    upper = np.triu(theta, k=1)
    return int(np.count_nonzero(np.abs(upper) > zero_tol))


def penalized_objective(theta: np.ndarray, s: np.ndarray, lambda_: float) -> float:
    """log det(T) - tr(S T) - lam * sum of off-diagonal |T_ij|."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    l1_off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float(logdet - np.sum(s * theta) - lambda_ * l1_off)


def lambda_path(s: np.ndarray, n_lambda: int = 30, ratio: float = 0.05) -> np.ndarray:
    """Descending log-spaced penalty grid from lambda_max to lambda_max*ratio.

    ``lambda_max`` is the largest off-diagonal magnitude of ``s``, the value
    at which the estimate is exactly diagonal.
    """
    if n_lambda < 2:
        raise ValidationError("n_lambda must be at least 2")
    if not 0.0 < ratio < 1.0:
        raise ValidationError("ratio must lie in (0, 1)")
    off = np.abs(s - np.diag(np.diag(s)))
    lam_max = float(off.max())
    if lam_max <= 0.0:
        raise ValidationError("all off-diagonal entries are zero: degenerate path")
    return np.geomspace(lam_max, lam_max * ratio, n_lambda)


def glasso(s: np.ndarray, lambda_: float, tol: float = 1e-6, max_iter: int = 200,
           theta_init: np.ndarray | None = None,
           sigma_init: np.ndarray | None = None,
           return_costs: bool = False):
    """Solve the off-diagonal-penalized graphical lasso for one penalty value.

    Parameters
    ----------
    s : (p, p) symmetric matrix on correlation scale (caller normalizes).
    lambda_ : nonnegative penalty applied to off-diagonal entries.
    tol : convergence threshold on the maximum KKT residual.
    max_iter : maximum number of full coordinate-descent sweeps.
    theta_init, sigma_init : optional warm start (e.g. the solution at a
        neighboring penalty value).
    return_costs : if True, also return the penalized objective after each
        sweep of every block.

    Returns
    -------
    PrecisionEstimate, or (PrecisionEstimate, costs) when ``return_costs``.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValidationError("S must be square")
    if np.abs(s - s.T).max() > 1e-8:
        raise ValidationError("S must be symmetric")
    if lambda_ < 0:
        raise ValidationError("lambda must be nonnegative")
    p = s.shape[0]

    if lambda_ == 0.0:
        try:
            theta = np.linalg.inv(s)
        except np.linalg.LinAlgError:
            raise ValidationError("S is singular; lambda=0 requires nonsingular S")
        theta = (theta + theta.T) / 2.0
        est = PrecisionEstimate(theta, s.copy(), 0.0, converged=True, iterations=0)
        return (est, [penalized_objective(theta, s, 0.0)]) if return_costs else est

    # Exact screening: the solution is block diagonal over the connected
    # components of the graph {|S_ij| > lambda}.
    adj = np.abs(s) > lambda_
    np.fill_diagonal(adj, False)
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)

    theta = np.zeros((p, p))
    sigma = np.zeros((p, p))
    costs: list[float] = []
    converged = True
    iterations = 0
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        if idx.size == 1:
            j = idx[0]
            if s[j, j] <= 0:
                raise ValidationError("S must have positive diagonal")
            theta[j, j] = 1.0 / s[j, j]
            sigma[j, j] = s[j, j]
            continue
        sub = s[np.ix_(idx, idx)]
        t0 = theta_init[np.ix_(idx, idx)] if theta_init is not None else None
        w0 = sigma_init[np.ix_(idx, idx)] if sigma_init is not None else None
        t_blk, w_blk, sweeps, ok, blk_costs = _glasso_block(
            sub, lambda_, tol, max_iter, t0, w0, track_costs=return_costs
        )
        theta[np.ix_(idx, idx)] = t_blk
        sigma[np.ix_(idx, idx)] = w_blk
        converged = converged and ok
        iterations = max(iterations, sweeps)
        costs.extend(blk_costs)

    if not converged:
        warnings.warn(
            f"glasso did not reach tol={tol} within {max_iter} sweeps",
            ConvergenceWarning,
        )
    est = PrecisionEstimate(theta, sigma, float(lambda_),
                            converged=converged, iterations=iterations)
    return (est, costs) if return_costs else est


def _glasso_block(s, lam, tol, max_iter, theta0, w0, track_costs=False):
    """Coordinate descent on one connected component (size >= 2)."""
    p = s.shape[0]
    if np.any(np.diag(s) <= 0):
        raise ValidationError("S must have positive diagonal")
    w = w0.copy() if w0 is not None else s.copy()
    w[np.diag_indices(p)] = np.diag(s)
    w = (w + w.T) / 2.0
    beta = np.zeros((p, p))
    if theta0 is not None:
        d = np.diag(theta0).copy()
        d[d <= 0] = 1.0
        beta = -theta0 / d[np.newaxis, :]
        beta[np.diag_indices(p)] = 0.0
    w_diag = np.diag(w).copy()

    inner_tol = max(tol * 1e-2, 1e-12)
    costs: list[float] = []
    converged = False
    sweep = 0
    for sweep in range(1, max_iter + 1):
        for j in range(p):
            b = beta[:, j]
            _lasso_column(w, w_diag, s[:, j], b, j, lam, inner_tol)
            wcol = w @ b
            wcol[j] = s[j, j]
            w[:, j] = wcol
            w[j, :] = wcol
        theta = _reconstruct_theta(w, beta, s)
        if track_costs:
            costs.append(penalized_objective(theta, s, lam))
        if _kkt_residual(w, s, theta, lam) < tol:
            converged = True
            break
    theta = _reconstruct_theta(w, beta, s)
    return theta, w, sweep, converged, costs


def _lasso_column(w, w_diag, s_col, beta, j, lam, inner_tol, max_rounds=50):
    """Active-set coordinate descent for one column's lasso subproblem.

    Minimizes ``0.5 b' W b - s_col' b + lam |b|_1`` over coordinates k != j,
    with ``beta[j]`` pinned at zero. ``beta`` is updated in place.
    """
    r = s_col - w @ beta
    for _ in range(max_rounds):
        g = r + w_diag * beta
        viol = (np.abs(g) > lam + 1e-12) & (beta == 0.0)
        viol[j] = False
        active = np.flatnonzero((beta != 0.0) | viol)
        if active.size == 0:
            return
        for _ in range(200):
            max_delta = 0.0
            for k in active:
                gk = r[k] + w_diag[k] * beta[k]
                new = _soft_threshold(gk, lam) / w_diag[k]
                delta = new - beta[k]
                if delta != 0.0:
                    r -= w[:, k] * delta
                    beta[k] = new
                    ad = abs(delta)
                    if ad > max_delta:
                        max_delta = ad
            if max_delta < inner_tol:
                break
        g = r + w_diag * beta
        viol = (np.abs(g) > lam + 1e-9) & (beta == 0.0)
        viol[j] = False
        if not viol.any():
            return


def _soft_threshold(x: float, lam: float) -> float:
    if x > lam:
        return x - lam
    if x < -lam:
        return x + lam
    return 0.0


def _reconstruct_theta(w, beta, s):
    p = w.shape[0]
    theta = np.empty((p, p))
    for j in range(p):
        b = beta[:, j]
        denom = s[j, j] - float(w[:, j] @ b)
        if denom <= 0:
            denom = max(denom, 1e-12)
        tjj = 1.0 / denom
        theta[:, j] = -tjj * b
        theta[j, j] = tjj
    return (theta + theta.T) / 2.0


def _kkt_residual(w, s, theta, lam):
    """Max violation of the stationarity conditions of the penalized problem.

    Includes the primal-dual consistency term |theta @ w - I|: the
    subgradient conditions are stated in terms of the inverse of theta, and
    w only equals that inverse once the sweeps have stabilized.
    """
    r = w - s
    off = ~np.eye(w.shape[0], dtype=bool)
    nz = off & (np.abs(theta) > ZERO_TOL)
    z = off & ~nz
    resid = float(np.abs(theta @ w - np.eye(w.shape[0])).max())
    if nz.any():
        resid = max(resid, np.abs(r[nz] - lam * np.sign(theta[nz])).max())
    if z.any():
        resid = max(resid, max(0.0, np.abs(r[z]).max() - lam))
    return resid
