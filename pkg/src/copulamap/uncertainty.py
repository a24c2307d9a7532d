"""Nonparametric bootstrap over individuals for edge certainty.

Each replicate resamples the n individuals with replacement and reruns the
whole graph-construction pipeline (marginal thresholds, estimation, penalty
selection, support thresholding); the certainty matrix is the element-wise
mean of the replicate adjacency matrices. Replicate seeds derive from the
master seed through a counter-based split, so results are reproducible and
independent of worker count.
"""

from __future__ import annotations

import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .copula_em import EmConfig, em_fit
from .errors import ValidationError
from .genotypes import GenotypeMatrix, drop_monomorphic, estimate_cutpoints
from .glasso import ZERO_TOL, glasso
from .model_select import select_model
from .skeptic import kendall_tau_matrix, nearest_pd, skeptic_correlation


@dataclass
class PipelineConfig:
    """How to turn a genotype matrix into a graph inside each replicate."""

    engine: str = "em-approx"
    gamma: float = 0.5
    n_lambda: int = 30
    ratio: float = 0.05
    fixed_lambda: float | None = None
    zero_tol: float = ZERO_TOL
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        if self.engine not in ("em-approx", "em-gibbs", "skeptic"):
            raise ValidationError(f"unknown engine {self.engine!r}")


@dataclass
class CertaintyMatrix:
    """Bootstrap support frequency for every marker pair."""

    support: np.ndarray
    B: int
    seed: int
    failed: int = 0

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValidationError("support must be square")
        if np.abs(s - s.T).max() > 1e-12:
            raise ValidationError("support must be symmetric")
        if s.min() < 0 or s.max() > 1:
            raise ValidationError("support entries must lie in [0, 1]")
        if np.any(np.diag(s) != 0):
            raise ValidationError("support diagonal must be zero")
        self.support = s


def fit_adjacency(genotypes: GenotypeMatrix, config: PipelineConfig,
                  seed: int | None = None) -> np.ndarray:
    """Run marginals -> estimator -> selection -> support on one dataset.

    Returns the p x p boolean adjacency on the full marker set; markers that
    became monomorphic (e.g. under resampling) contribute empty rows.
    """
    p = genotypes.p
    kept, removed = drop_monomorphic(genotypes)
    cuts = estimate_cutpoints(kept)
    em = config.em if seed is None else EmConfig(
        **{**config.em.__dict__, "seed": seed})

    if config.fixed_lambda is not None:
        if config.engine == "skeptic":
            corr = nearest_pd(skeptic_correlation(kendall_tau_matrix(kept).tau))
            est = glasso(corr, config.fixed_lambda)
        else:
            method = "gibbs" if config.engine == "em-gibbs" else "approx"
            em_cfg = EmConfig(**{**em.__dict__,
                                 "lambda_": config.fixed_lambda,
                                 "estep_method": method})
            est = em_fit(kept, cuts, em_cfg)
    else:
        result = select_model(kept, cuts, engine=config.engine, config=em,
                              gamma=config.gamma, n_lambda=config.n_lambda,
                              ratio=config.ratio)
        est = result.selected.estimate

    adj_small = est.support(config.zero_tol)
    if not removed:
        return adj_small
    keep_idx = [j for j, name in enumerate(genotypes.marker_names)
                if name not in set(removed)]
    adj = np.zeros((p, p), dtype=bool)
    adj[np.ix_(keep_idx, keep_idx)] = adj_small
    return adj


def _replicate(args) -> tuple[int, np.ndarray | None, str]:
    b, values, names, ploidy_hint, config, seed_seq = args
    resample_seq, em_seq = seed_seq.spawn(2)
    rng = np.random.default_rng(resample_seq)
    idx = rng.integers(0, values.shape[0], size=values.shape[0])
    seed = int(em_seq.generate_state(1)[0])
    try:
        sample = GenotypeMatrix(values[idx], list(names), ploidy_hint=ploidy_hint)
        return b, fit_adjacency(sample, config, seed=seed), ""
    except Exception as exc:  # noqa: BLE001 - replicate failures are reported
        return b, None, f"{type(exc).__name__}: {exc}"


def bootstrap_certainty(genotypes: GenotypeMatrix, config: PipelineConfig,
                        B: int, seed: int, workers: int = 1) -> CertaintyMatrix:
    """Mean adjacency over B resampled map constructions.

    Failed replicates are skipped with a warning and the averaging
    denominator shrinks accordingly; the failure count is recorded on the
    result. Deterministic for a fixed seed regardless of ``workers``.
    """
    if B < 1:
        raise ValidationError("B must be at least 1")
    children = np.random.SeedSequence(seed).spawn(B)
    jobs = [
        (b, genotypes.values, tuple(genotypes.marker_names),
         genotypes.ploidy_hint, config, children[b])
        for b in range(B)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(job) for job in jobs]
    results.sort(key=lambda r: r[0])

    p = genotypes.p
    counts = np.zeros((p, p))
    ok = 0
    for b, adj, msg in results:
        if adj is None:
            warnings.warn(f"bootstrap replicate {b} failed: {msg}", UserWarning)
            continue
        counts += adj
        ok += 1
    if ok == 0:
        raise ValidationError("every bootstrap replicate failed")
    support = counts / ok
    np.fill_diagonal(support, 0.0)
    return CertaintyMatrix(support, B=B, seed=seed, failed=B - ok)


def write_certainty_edges(certainty: CertaintyMatrix, marker_names: list[str],
                          dest, min_certainty: float = 0.0) -> None:
    """Emit certainty as tab-delimited (marker_i, marker_j, certainty)."""
    buf = io.StringIO()
    buf.write("marker_i\tmarker_j\tcertainty\n")
    s = certainty.support
    for i in range(s.shape[0]):
        for j in range(i + 1, s.shape[0]):
            if s[i, j] > min_certainty:
                buf.write(f"{marker_names[i]}\t{marker_names[j]}\t{s[i, j]:.10g}\n")
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)


def write_certainty_matrix(certainty: CertaintyMatrix, marker_names: list[str],
                           dest) -> None:
    """Emit the full certainty matrix as delimited text with a header row."""
    buf = io.StringIO()
    buf.write("\t".join(["marker"] + list(marker_names)) + "\n")
    for i, name in enumerate(marker_names):
        row = "\t".join(f"{v:.10g}" for v in certainty.support[i])
        buf.write(f"{name}\t{row}\n")
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)
