"""Command-line interface: simulate, map, bootstrap, score.

One binary with subcommands; all randomness flows from --seed, warnings go
to standard error, and data goes to files. Identical configuration plus seed
reproduces byte-identical outputs.
"""

from __future__ import annotations

import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .copula_em import EmConfig
from .errors import CopulamapError, ParseError, UnsupportedDataError
from .genotypes import (
    drop_monomorphic,
    estimate_cutpoints,
    load_genotypes,
    save_genotypes,
)
from .map_builder import LinkageMap, build_graph, detect_linkage_groups, order_groups, write_edge_list
from .metrics import score_map, write_score_report
from .model_select import select_model, write_path_summary
from .simulate import GenomePlan, TruthMap, inject_errors, inject_missing, simulate_population
from .uncertainty import (
    PipelineConfig,
    bootstrap_certainty,
    fit_adjacency,
    write_certainty_edges,
    write_certainty_matrix,
)

ENGINE_CHOICES = click.Choice(["em-approx", "em-gibbs", "skeptic"])
KIND_CHOICES = click.Choice(["inbred", "outbred"])


@dataclass
class RunConfig:
    """Resolved options for one CLI invocation."""

    command: str
    engine: str = "em-approx"
    population_kind: str = "inbred"
    gamma: float = 0.5
    n_lambda: int = 30
    ratio: float = 0.05
    B: int = 100
    seed: int = 0
    missing_token: str = "NA"
    transpose: bool = False
    fixed_lambda: float | None = None
    workers: int = 1


def _fail(stage: str, exc: Exception) -> None:
    raise click.ClickException(f"stage '{stage}': {exc}")


def _load_input(path: str, missing_token: str, transpose: bool):
    try:
        return load_genotypes(path, missing_token=missing_token, transpose=transpose)
    except CopulamapError as exc:
        _fail("load", exc)


@click.group()
def main() -> None:
    """Construct genetic linkage maps from SNP dosage matrices."""
    warnings.simplefilter("default")


@main.command()
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True),
              help="Genome plan file (sectioned key=value text).")
@click.option("--individuals", type=int, default=None,
              help="Override the plan's population size.")
@click.option("--error-rate", type=float, default=0.0,
              help="Genotyping error rate (diploid inbred data only).")
@click.option("--missing-rate", type=float, default=0.0,
              help="Fraction of entries set to missing.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-genotypes", required=True, type=click.Path(),
              help="Destination CSV for the dosage matrix.")
@click.option("--out-truth", required=True, type=click.Path(),
              help="Destination TSV for the true map.")
@click.option("--missing-token", default="NA", show_default=True)
def simulate(plan_path, individuals, error_rate, missing_rate, seed,
             out_genotypes, out_truth, missing_token):
    """Simulate a ground-truthed mapping population."""
    try:
        plan = GenomePlan.from_file(plan_path)
        parser_n = _plan_individuals(plan_path)
        n = individuals if individuals is not None else parser_n
        if n is None:
            raise ParseError("plan has no individuals entry and no override given")
    except (CopulamapError, ValueError) as exc:
        raise click.UsageError(f"bad plan: {exc}")
    try:
        genotypes, truth = simulate_population(plan, n, seed)
        if error_rate > 0:
            genotypes = inject_errors(genotypes, error_rate, seed + 1)
        if missing_rate > 0:
            genotypes = inject_missing(genotypes, missing_rate, seed + 2)
        save_genotypes(genotypes, out_genotypes, missing_token=missing_token)
        truth.write(out_truth)
    except CopulamapError as exc:
        _fail("simulate", exc)
    click.echo(f"wrote {genotypes.n}x{genotypes.p} genotypes to {out_genotypes}")


def _plan_individuals(plan_path) -> int | None:
    import configparser

    parser = configparser.ConfigParser()
    parser.read_string(Path(plan_path).read_text())
    if parser.has_option("population", "individuals"):
        return parser.getint("population", "individuals")
    if parser.has_option("genome", "individuals"):
        return parser.getint("genome", "individuals")
    return None


@main.command(name="map")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--outdir", required=True, type=click.Path(),
              help="Directory for map.tsv, edges.tsv and path.tsv.")
@click.option("--engine", type=ENGINE_CHOICES, default="em-approx", show_default=True)
@click.option("--population-kind", type=KIND_CHOICES, default="inbred", show_default=True)
@click.option("--gamma", type=float, default=0.5, show_default=True)
@click.option("--n-lambda", type=int, default=30, show_default=True)
@click.option("--ratio", type=float, default=0.05, show_default=True)
@click.option("--fixed-lambda", type=float, default=None,
              help="Skip path selection and fit this penalty only.")
@click.option("--min-group-size", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--missing-token", default="NA", show_default=True)
@click.option("--transpose", is_flag=True,
              help="Input file has markers as rows instead of columns.")
def cmd_map(input_path, outdir, engine, population_kind, gamma, n_lambda,
            ratio, fixed_lambda, min_group_size, seed, missing_token, transpose):
    """Estimate linkage groups and marker order from a genotype file."""
    genotypes = _load_input(input_path, missing_token, transpose)
    if engine == "skeptic" and genotypes.n_missing:
        raise click.ClickException(
            "stage 'validate': the skeptic engine cannot handle missing "
            "genotypes; use em-approx or em-gibbs"
        )
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        kept, removed = drop_monomorphic(genotypes)
        cuts = estimate_cutpoints(kept)
    except CopulamapError as exc:
        _fail("marginals", exc)
    if removed:
        click.echo(f"dropped {len(removed)} monomorphic markers", err=True)

    em = EmConfig(seed=seed)
    try:
        if fixed_lambda is not None:
            from .copula_em import em_fit
            from .glasso import glasso
            from .skeptic import kendall_tau_matrix, nearest_pd, skeptic_correlation

            if engine == "skeptic":
                corr = nearest_pd(skeptic_correlation(kendall_tau_matrix(kept).tau))
                est = glasso(corr, fixed_lambda)
            else:
                method = "gibbs" if engine == "em-gibbs" else "approx"
                cfg = EmConfig(lambda_=fixed_lambda, estep_method=method, seed=seed)
                est = em_fit(kept, cuts, cfg)
            path_result = None
        else:
            path_result = select_model(kept, cuts, engine=engine, config=em,
                                       gamma=gamma, n_lambda=n_lambda, ratio=ratio)
            est = path_result.selected.estimate
    except CopulamapError as exc:
        _fail("estimate", exc)

    try:
        graph = build_graph(est, marker_names=kept.marker_names)
        partition = detect_linkage_groups(graph, min_group_size=min_group_size)
        linkage_map = order_groups(est, partition, population_kind, kept.marker_names)
    except CopulamapError as exc:
        _fail("map", exc)

    linkage_map.write(out / "map.tsv")
    write_edge_list(est, kept.marker_names, out / "edges.tsv")
    if path_result is not None:
        write_path_summary(path_result, out / "path.tsv")
    click.echo(f"groups: {linkage_map.n_groups}")
    click.echo("sizes: " + " ".join(str(s) for s in linkage_map.group_sizes))
    if linkage_map.unplaced:
        click.echo(f"unplaced: {len(linkage_map.unplaced)}", err=True)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Destination TSV for the certainty edge list.")
@click.option("--matrix", "matrix_path", type=click.Path(), default=None,
              help="Optionally also write the full certainty matrix here.")
@click.option("--B", "n_replicates", type=int, default=100, show_default=True)
@click.option("--engine", type=ENGINE_CHOICES, default="em-approx", show_default=True)
@click.option("--gamma", type=float, default=0.5, show_default=True)
@click.option("--n-lambda", type=int, default=30, show_default=True)
@click.option("--ratio", type=float, default=0.05, show_default=True)
@click.option("--fixed-lambda", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--missing-token", default="NA", show_default=True)
@click.option("--transpose", is_flag=True)
@click.option("--workers", type=int, default=1, show_default=True,
              help="Run replicates in parallel processes.")
def bootstrap(input_path, out_path, matrix_path, n_replicates, engine, gamma,
              n_lambda, ratio, fixed_lambda, seed, missing_token, transpose,
              workers):
    """Quantify edge certainty by resampling individuals with replacement."""
    genotypes = _load_input(input_path, missing_token, transpose)
    if engine == "skeptic" and genotypes.n_missing:
        raise click.ClickException(
            "stage 'validate': the skeptic engine cannot handle missing genotypes"
        )
    config = PipelineConfig(engine=engine, gamma=gamma, n_lambda=n_lambda,
                            ratio=ratio, fixed_lambda=fixed_lambda)
    try:
        certainty = bootstrap_certainty(genotypes, config, n_replicates, seed,
                                        workers=workers)
    except CopulamapError as exc:
        _fail("bootstrap", exc)
    write_certainty_edges(certainty, genotypes.marker_names, out_path)
    if matrix_path:
        write_certainty_matrix(certainty, genotypes.marker_names, matrix_path)
    if certainty.failed:
        click.echo(f"replicates failed: {certainty.failed}/{n_replicates}", err=True)
    click.echo(f"wrote certainty for B={n_replicates} to {out_path}")


@main.command()
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the report here instead of standard output.")
def score(map_path, truth_path, out_path):
    """Score an estimated map against a simulation truth file."""
    try:
        linkage_map = LinkageMap.from_file(map_path)
        truth = TruthMap.from_file(truth_path)
        result = score_map(linkage_map, truth)
    except CopulamapError as exc:
        _fail("score", exc)
    if out_path:
        write_score_report(result, out_path)
    else:
        write_score_report(result, sys.stdout)


if __name__ == "__main__":
    main()
