"""Dosage genotype matrices: ingestion, validation, and marginal thresholds.

Genotypes are ordinal allele dosages (0..q for ploidy q). A matrix holds one
row per individual and one column per marker; unobserved entries carry the
``MISSING`` sentinel. Marginal thresholds map each marker's ordinal levels to
intervals of a latent standard-normal scale via the empirical CDF.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import DimensionError, ParseError, ValidationError

MISSING = -1


@dataclass
class GenotypeMatrix:
    """Ordinal dosage observations for ``n`` individuals at ``p`` markers.

    ``values`` is an integer array with ``MISSING`` (-1) marking unobserved
    cells; every observed entry lies in ``[0, q_max]``. Instances are
    immutable after construction and safe to share read-only across workers.
    """

    values: np.ndarray
    marker_names: list[str]
    ploidy_hint: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DimensionError("genotype values must be a 2-D array")
        if not np.issubdtype(values.dtype, np.integer):
            raise ValidationError("genotype values must be integers")
        values = values.astype(np.int16, copy=True)
        n, p = values.shape
        if n < 2 or p < 2:
            raise DimensionError(
                f"need at least 2 individuals and 2 markers, got {n}x{p}"
            )
        names = [str(m) for m in self.marker_names]
        if len(names) != p:
            raise DimensionError(
                f"{len(names)} marker names for {p} columns"
            )
        if len(set(names)) != p:
            dupes = sorted({m for m in names if names.count(m) > 1})
            raise ValidationError(f"duplicate marker names: {dupes}")
        observed = values[values != MISSING]
        if observed.size and observed.min() < 0:
            raise ValidationError("observed dosage levels must be >= 0")
        values.flags.writeable = False
        self.values = values
        self.marker_names = names

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def missing_mask(self) -> np.ndarray:
        return self.values == MISSING

    @property
    def n_missing(self) -> int:
        return int(self.missing_mask.sum())

    @property
    def q_max(self) -> int:
        observed = self.values[self.values != MISSING]
        return int(observed.max()) if observed.size else 0

    def column(self, j: int, drop_missing: bool = False) -> np.ndarray:
        col = self.values[:, j]
        return col[col != MISSING] if drop_missing else col


@dataclass
class CutPointSet:
    """Latent-scale thresholds mapping each marker's levels to intervals.

    For marker ``j`` with ``q_j`` distinct observed levels, ``thresholds[j]``
    holds ``q_j + 1`` nondecreasing values with -inf and +inf at the ends;
    level ``levels[j][k]`` corresponds to the half-open interval
    ``(thresholds[j][k], thresholds[j][k + 1]]``.
    """

    levels: tuple[np.ndarray, ...]
    thresholds: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.thresholds):
            raise DimensionError("levels and thresholds must align per marker")
        for j, (lev, thr) in enumerate(zip(self.levels, self.thresholds)):
            if len(thr) != len(lev) + 1:
                raise ValidationError(f"marker {j}: need len(levels)+1 thresholds")
            if not (np.isneginf(thr[0]) and np.isposinf(thr[-1])):
                raise ValidationError(f"marker {j}: outer thresholds must be +-inf")
            interior = thr[1:-1]
            if interior.size and not np.all(np.isfinite(interior)):
                raise ValidationError(f"marker {j}: interior thresholds must be finite")
            if np.any(np.diff(thr) < 0):
                raise ValidationError(f"marker {j}: thresholds must be nondecreasing")

    @property
    def p(self) -> int:
        return len(self.levels)

    @property
    def levels_per_marker(self) -> np.ndarray:
        return np.array([len(lev) for lev in self.levels])

    def interval_bounds(self, genotypes: GenotypeMatrix) -> tuple[np.ndarray, np.ndarray]:
        """Per-entry latent interval (lo, hi] for every cell of ``genotypes``.

        Missing cells get the unbounded interval (-inf, +inf).
        """
        if genotypes.p != self.p:
            raise DimensionError("cut points were built for a different marker count")
        n, p = genotypes.values.shape
        lo = np.full((n, p), -np.inf)
        hi = np.full((n, p), np.inf)
        for j in range(p):
            col = genotypes.values[:, j]
            obs = col != MISSING
            idx = np.searchsorted(self.levels[j], col[obs])
            if np.any(idx >= len(self.levels[j])) or np.any(
                self.levels[j][np.minimum(idx, len(self.levels[j]) - 1)] != col[obs]
            ):
                raise ValidationError(
                    f"marker {j}: observed level absent from cut-point levels"
                )
            lo[obs, j] = self.thresholds[j][idx]
            hi[obs, j] = self.thresholds[j][idx + 1]
        return lo, hi


def _read_text(source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text()
    if isinstance(source, bytes):
        return source.decode()
    data = source.read()
    return data.decode() if isinstance(data, bytes) else data


def _sniff_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def load_genotypes(source, missing_token: str = "NA",
                   transpose: bool = False) -> GenotypeMatrix:
    """Parse delimited text (comma or tab, autodetected) into a GenotypeMatrix.

    The default orientation is individuals x markers with a header row of
    marker names. With ``transpose=True`` the file holds one marker per row:
    the header row is ignored and each data row starts with the marker name.
    Cells equal to ``missing_token`` become MISSING; all observed levels are
    re-coded to contiguous integers starting at 0.
    """
    text = _read_text(source)
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if len(lines) < 2:
        raise DimensionError("need a header row plus at least one data row")
    delim = _sniff_delimiter(lines[0])
    rows = [[cell.strip() for cell in ln.split(delim)] for ln in lines]
    width = len(rows[0])
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != width:
            raise ParseError(f"row {i}: expected {width} fields, got {len(row)}")

    if transpose:
        marker_names = [row[0] for row in rows[1:]]
        cells = [row[1:] for row in rows[1:]]
        col_names = list(marker_names)
        raw = np.empty((width - 1, len(marker_names)), dtype=np.int16)
        for j, (name, row) in enumerate(zip(marker_names, cells)):
            for i, cell in enumerate(row):
                raw[i, j] = _parse_cell(cell, missing_token, i + 1, name)
    else:
        col_names = rows[0]
        raw = np.empty((len(rows) - 1, width), dtype=np.int16)
        for i, row in enumerate(rows[1:], start=1):
            for j, cell in enumerate(row):
                raw[i - 1, j] = _parse_cell(cell, missing_token, i, col_names[j])

    if raw.shape[0] < 2 or raw.shape[1] < 2:
        raise DimensionError(
            f"need at least 2 individuals and 2 markers, got {raw.shape[0]}x{raw.shape[1]}"
        )
    return GenotypeMatrix(_recode_contiguous(raw), col_names)


def _parse_cell(cell: str, missing_token: str, row: int, col: str) -> int:
    if cell == missing_token:
        return MISSING
    try:
        value = int(cell)
    except ValueError:
        raise ParseError(f'non-integer genotype at (row {row}, col "{col}"): {cell!r}')
    if value < 0:
        raise ParseError(f'negative dosage at (row {row}, col "{col}"): {cell!r}')
    return value


def _recode_contiguous(values: np.ndarray) -> np.ndarray:
    """Map the observed level set onto 0..K-1, keeping MISSING in place."""
    observed = np.unique(values[values != MISSING])
    if observed.size == 0:
        return values
    if observed[0] == 0 and observed[-1] == observed.size - 1:
        return values
    out = values.copy()
    mask = values != MISSING
    out[mask] = np.searchsorted(observed, values[mask]).astype(np.int16)
    return out


def save_genotypes(genotypes: GenotypeMatrix, dest, missing_token: str = "NA",
                   delimiter: str = ",") -> None:
    """Write a GenotypeMatrix back to delimited text (round-trips with load)."""
    buf = io.StringIO()
    buf.write(delimiter.join(genotypes.marker_names) + "\n")
    for row in genotypes.values:
        cells = [missing_token if v == MISSING else str(int(v)) for v in row]
        buf.write(delimiter.join(cells) + "\n")
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)


def drop_monomorphic(genotypes: GenotypeMatrix) -> tuple[GenotypeMatrix, list[str]]:
    """Remove markers with fewer than two distinct observed levels.

    Returns the filtered matrix and the removed marker names in their
    original column order. Raises if nothing would remain.
    """
    keep = []
    removed = []
    for j, name in enumerate(genotypes.marker_names):
        col = genotypes.column(j, drop_missing=True)
        if np.unique(col).size >= 2:
            keep.append(j)
        else:
            removed.append(name)
    if not keep:
        raise ValidationError("all markers are monomorphic; nothing to analyze")
    if not removed:
        return genotypes, []
    filtered = GenotypeMatrix(
        genotypes.values[:, keep],
        [genotypes.marker_names[j] for j in keep],
        ploidy_hint=genotypes.ploidy_hint,
    )
    return filtered, removed


def estimate_cutpoints(genotypes: GenotypeMatrix) -> CutPointSet:
    """Estimate latent-normal thresholds from each marker's empirical CDF.

    Interior thresholds are the standard-normal quantiles of the cumulative
    level frequencies among non-missing entries; the outermost thresholds are
    -inf and +inf.
    """
    levels_all = []
    thresholds_all = []
    for j in range(genotypes.p):
        col = genotypes.column(j, drop_missing=True)
        if col.size == 0:
            raise ValidationError(f"marker {genotypes.marker_names[j]}: all entries missing")
        levels, counts = np.unique(col, return_counts=True)
        if levels.size < 2:
            raise ValidationError(
                f"marker {genotypes.marker_names[j]} is monomorphic; "
                "run drop_monomorphic first"
            )
        cum = np.cumsum(counts) / col.size
        interior = cum[:-1]
        if np.any(interior <= 0.0) or np.any(interior >= 1.0):
            raise RuntimeError(
                "internal invariant violation: degenerate empirical CDF "
                f"for marker {genotypes.marker_names[j]}"
            )
        thr = np.concatenate(([-np.inf], ndtri(interior), [np.inf]))
        levels_all.append(levels.astype(np.int16))
        thresholds_all.append(thr)
    return CutPointSet(tuple(levels_all), tuple(thresholds_all))
