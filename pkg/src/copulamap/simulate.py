"""Ground-truthed mapping-population simulator.

Chromosomes are simulated as Markov chains of parental origin: each haplotype
starts from the stationary distribution and switches parental origin between
adjacent markers with the local recombination fraction. Dosages are the sum
of reference alleles over the ploidy's haplotypes. Supported designs:
backcross (two homozygous states, one segregating chain), F2 (two independent
gametes from heterozygous parents) and polyploid outbred F1 under bivalent
pairing (homologues pair two by two at each meiosis; every bivalent
contributes one recombinant haplotype to the gamete).
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .genotypes import MISSING, GenotypeMatrix

POPULATION_KINDS = ("backcross", "f2", "outbred_f1")


@dataclass
class GenomePlan:
    """Genome layout for a simulated cross.

    ``chromosomes`` holds one (marker_count, recombination fractions) pair
    per chromosome; the fractions array has one entry per adjacent marker
    gap. A scalar fraction is broadcast over all gaps of the chromosome.
    """

    chromosomes: list[tuple[int, np.ndarray]]
    ploidy: int = 2
    population_kind: str = "f2"

    def __post_init__(self):
        if not self.chromosomes:
            raise ValidationError("plan needs at least one chromosome")
        if self.population_kind not in POPULATION_KINDS:
            raise ValidationError(
                f"population_kind must be one of {POPULATION_KINDS}"
            )
        if self.ploidy < 2 or self.ploidy % 2 != 0:
            raise ValidationError("ploidy must be an even number >= 2")
        if self.population_kind in ("backcross", "f2") and self.ploidy != 2:
            raise ValidationError(
                f"{self.population_kind} is a diploid design (ploidy 2)"
            )
        norm = []
        for ci, (count, r) in enumerate(self.chromosomes):
            count = int(count)
            if count < 1:
                raise ValidationError(f"chromosome {ci + 1}: marker count must be >= 1")
            r_arr = np.atleast_1d(np.asarray(r, dtype=float))
            if r_arr.size == 1 and count > 1:
                r_arr = np.full(count - 1, float(r_arr[0]))
            if count == 1:
                r_arr = np.empty(0)
            elif r_arr.size != count - 1:
                raise ValidationError(
                    f"chromosome {ci + 1}: need {count - 1} recombination "
                    f"fractions, got {r_arr.size}"
                )
            if r_arr.size and (np.any(r_arr <= 0) or np.any(r_arr > 0.5)):
                raise ValidationError(
                    f"chromosome {ci + 1}: recombination fractions must lie in (0, 0.5]"
                )
            norm.append((count, r_arr))
        self.chromosomes = norm

    @property
    def n_chromosomes(self) -> int:
        return len(self.chromosomes)

    @property
    def total_markers(self) -> int:
        return sum(c for c, _ in self.chromosomes)

    @classmethod
    def from_file(cls, source) -> "GenomePlan":
        """Read a plan from sectioned key=value text.

        Expected layout::

            [genome]
            kind = f2
            ploidy = 2
            chromosome_sizes = 60 60 60 60 60
            recombination = 0.05

        ``recombination`` is either one value for the whole genome or one
        value per chromosome.
        """
        parser = configparser.ConfigParser()
        try:
            if isinstance(source, (str, Path)):
                text = Path(source).read_text()
            else:
                text = source.read()
            parser.read_string(text)
        except (OSError, configparser.Error) as exc:
            raise ParseError(f"cannot read plan: {exc}") from exc
        if "genome" not in parser:
            raise ParseError("plan is missing the [genome] section")
        sect = parser["genome"]
        try:
            kind = sect.get("kind", "f2").strip()
            ploidy = sect.getint("ploidy", 2)
            sizes = [int(tok) for tok in sect.get("chromosome_sizes", "").split()]
            r_tokens = [float(tok) for tok in sect.get("recombination", "0.05").split()]
        except ValueError as exc:
            raise ParseError(f"malformed plan value: {exc}") from exc
        if not sizes:
            raise ParseError("plan must list chromosome_sizes")
        if len(r_tokens) == 1:
            r_tokens = r_tokens * len(sizes)
        if len(r_tokens) != len(sizes):
            raise ParseError(
                "recombination must have one value, or one per chromosome"
            )
        chromosomes = [(m, np.asarray(r)) for m, r in zip(sizes, r_tokens)]
        return cls(chromosomes, ploidy=ploidy, population_kind=kind)


@dataclass
class TruthMap:
    """True linkage groups with their true marker order."""

    groups: list[list[str]]

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def all_markers(self) -> list[str]:
        return [m for g in self.groups for m in g]

    def group_of(self) -> dict[str, int]:
        return {m: gi for gi, g in enumerate(self.groups) for m in g}

    def write(self, dest) -> None:
        buf = io.StringIO()
        buf.write("marker_name\ttrue_group\ttrue_position\n")
        for gi, group in enumerate(self.groups, start=1):
            for pos, name in enumerate(group, start=1):
                buf.write(f"{name}\t{gi}\t{pos}\n")
        text = buf.getvalue()
        if isinstance(dest, (str, Path)):
            Path(dest).write_text(text)
        else:
            dest.write(text)

    @classmethod
    def from_file(cls, source) -> "TruthMap":
        text = (Path(source).read_text() if isinstance(source, (str, Path))
                else source.read())
        rows = []
        for i, line in enumerate(text.splitlines()):
            if not line.strip() or i == 0:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"truth file line {i + 1}: expected 3 columns")
            rows.append((parts[0], int(parts[1]), int(parts[2])))
        if not rows:
            raise ParseError("truth file has no data rows")
        n_groups = max(g for _, g, _ in rows)
        groups: list[list[tuple[int, str]]] = [[] for _ in range(n_groups)]
        for name, g, pos in rows:
            groups[g - 1].append((pos, name))
        return cls([[name for _, name in sorted(g)] for g in groups])


def _markov_chain(rng, n: int, r: np.ndarray) -> np.ndarray:
    """n parental-origin chains of length len(r)+1, flip probability r per gap."""
    m = r.size + 1
    states = np.empty((n, m), dtype=np.int8)
    states[:, 0] = rng.random(n) < 0.5
    if m > 1:
        states[:, 1:] = rng.random((n, m - 1)) < r[np.newaxis, :]
    # cumulative XOR: origin flips wherever a recombination occurred
    for k in range(1, m):
        states[:, k] = states[:, k - 1] ^ states[:, k]
    return states


def _simulate_chromosome(rng, plan: GenomePlan, n: int, count: int,
                         r: np.ndarray) -> np.ndarray:
    kind = plan.population_kind
    if kind == "backcross":
        return _markov_chain(rng, n, r).astype(np.int16)
    if kind == "f2":
        g1 = _markov_chain(rng, n, r)
        g2 = _markov_chain(rng, n, r)
        return (g1 + g2).astype(np.int16)

    # outbred polyploid F1 under bivalent pairing: fixed heterozygous parents,
    # each meiosis pairs the q homologues into q/2 bivalents at random.
    q = plan.ploidy
    freqs = rng.uniform(0.2, 0.8, size=count)
    parent_haps = [rng.random((q, count)) < freqs for _ in range(2)]
    dosage = np.zeros((n, count), dtype=np.int16)
    for haps in parent_haps:
        pairing = np.argsort(rng.random((n, q)), axis=1)
        for t in range(q // 2):
            first = pairing[:, 2 * t]
            second = pairing[:, 2 * t + 1]
            path = _markov_chain(rng, n, r).astype(bool)
            a0 = haps[first, :]
            a1 = haps[second, :]
            dosage += np.where(path, a1, a0)
    return dosage


def simulate_population(plan: GenomePlan, n: int, seed: int
                        ) -> tuple[GenotypeMatrix, TruthMap]:
    """Simulate ``n`` individuals from the plan; chromosomes assort independently.

    Returns the dosage matrix plus the true grouping/order of the markers.
    Marker names encode chromosome and position (``c3_m012``) purely for
    readability; nothing downstream relies on them.
    """
    if n < 2:
        raise ValidationError("need at least 2 individuals")
    rng = np.random.default_rng(seed)
    blocks = []
    groups = []
    names: list[str] = []
    for ci, (count, r) in enumerate(plan.chromosomes, start=1):
        blocks.append(_simulate_chromosome(rng, plan, n, count, r))
        chrom_names = [f"c{ci}_m{k:03d}" for k in range(1, count + 1)]
        names.extend(chrom_names)
        groups.append(chrom_names)
    values = np.concatenate(blocks, axis=1)
    return (GenotypeMatrix(values, names, ploidy_hint=plan.ploidy),
            TruthMap(groups))


def inject_errors(genotypes: GenotypeMatrix, rate: float, seed: int) -> GenotypeMatrix:
    """Flip each heterozygous entry to a random homozygote with probability rate.

    Defined for diploid inbred data (levels {0, 1, 2}); homozygous and
    missing entries are untouched.
    """
    if not 0.0 <= rate < 1.0:
        raise ValidationError("error rate must lie in [0, 1)")
    if genotypes.ploidy_hint not in (None, 2) or genotypes.q_max > 2:
        raise ValidationError("genotyping-error injection supports diploid data only")
    rng = np.random.default_rng(seed)
    flip = rng.random(genotypes.values.shape) < rate
    target = (rng.random(genotypes.values.shape) < 0.5).astype(np.int16) * 2
    het = genotypes.values == 1
    values = genotypes.values.copy()
    sel = het & flip
    values[sel] = target[sel]
    return GenotypeMatrix(values, list(genotypes.marker_names),
                          ploidy_hint=genotypes.ploidy_hint)


def inject_missing(genotypes: GenotypeMatrix, rate: float, seed: int) -> GenotypeMatrix:
    """Set each entry to MISSING independently with probability rate."""
    if not 0.0 <= rate < 1.0:
        raise ValidationError("missing rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    mask = rng.random(genotypes.values.shape) < rate
    values = genotypes.values.copy()
    values[mask] = MISSING
    return GenotypeMatrix(values, list(genotypes.marker_names),
                          ploidy_hint=genotypes.ploidy_hint)
