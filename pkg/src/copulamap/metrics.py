"""Accuracy scores for estimated maps against simulation ground truth.

Grouping accuracy compares linkage-group counts; ordering accuracy compares
within-group marker orders through the Jaccard distance between their sets
of unordered adjacent-marker pairs, which makes it invariant to reversing
either order (a linkage map is defined only up to orientation).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .map_builder import LinkageMap
from .simulate import TruthMap


@dataclass
class MapScore:
    ga: float
    per_group_oa: list[float]
    mean_oa: float
    matched_groups: dict[int, int]


def grouping_accuracy(true_count: int, est_count: int) -> float:
    """1 / (1 + (true - estimated)^2); equals 1 only on an exact count match."""
    if true_count < 0 or est_count < 0:
        raise ValidationError("group counts must be nonnegative")
    return 1.0 / (1.0 + float(true_count - est_count) ** 2)


def _adjacent_pairs(order: list[str]) -> set[frozenset]:
    return {frozenset((a, b)) for a, b in zip(order, order[1:])}


def ordering_accuracy(est_order: list[str], true_order: list[str]) -> float:
    """1 / (1 + d_J) with d_J the Jaccard distance of adjacency-pair sets.

    Both orders must be permutations of the same marker set. Reversing
    either order leaves the score unchanged.
    """
    if sorted(est_order) != sorted(true_order):
        raise ValidationError("orders must cover the same marker set")
    est_pairs = _adjacent_pairs(est_order)
    true_pairs = _adjacent_pairs(true_order)
    union = est_pairs | true_pairs
    if not union:
        return 1.0
    d_j = 1.0 - len(est_pairs & true_pairs) / len(union)
    return 1.0 / (1.0 + d_j)


def score_map(estimated: LinkageMap, truth: TruthMap) -> MapScore:
    """Match estimated groups to true groups by overlap and score both axes.

    Matching is greedy on common-marker count (largest overlap first); OA is
    computed on the common markers of each matched pair, preserving each
    side's relative order.
    """
    true_markers = set(truth.all_markers)
    placed = [m for g in estimated.groups for m in g.markers]
    missing = [m for m in placed if m not in true_markers]
    if missing:
        raise ValidationError(f"truth does not cover placed markers: {missing[:5]}")

    overlaps = []
    for ei, est_group in enumerate(estimated.groups):
        est_set = set(est_group.markers)
        for ti, true_group in enumerate(truth.groups):
            common = len(est_set.intersection(true_group))
            if common:
                overlaps.append((common, ei, ti))
    overlaps.sort(key=lambda rec: (-rec[0], rec[1], rec[2]))

    matched: dict[int, int] = {}
    used_true: set[int] = set()
    for common, ei, ti in overlaps:
        if ei in matched or ti in used_true:
            continue
        matched[ei] = ti
        used_true.add(ti)

    per_group = []
    for ei, ti in sorted(matched.items()):
        est_group = estimated.groups[ei]
        common = set(est_group.markers).intersection(truth.groups[ti])
        if len(common) < 2:
            per_group.append(1.0)
            continue
        est_order = [m for m in est_group.markers if m in common]
        true_order = [m for m in truth.groups[ti] if m in common]
        per_group.append(ordering_accuracy(est_order, true_order))

    ga = grouping_accuracy(truth.n_groups, estimated.n_groups)
    mean_oa = sum(per_group) / len(per_group) if per_group else 0.0
    return MapScore(ga, per_group, mean_oa,
                    {estimated.groups[ei].group_id: ti + 1
                     for ei, ti in matched.items()})


def write_score_report(score: MapScore, dest) -> None:
    """Emit a score report as tab-delimited text."""
    import io
    from pathlib import Path

    buf = io.StringIO()
    buf.write(f"ga\t{score.ga:.10g}\n")
    buf.write(f"mean_oa\t{score.mean_oa:.10g}\n")
    buf.write("group_id\ttrue_group\toa\n")
    ids = sorted(score.matched_groups)
    for gid, oa in zip(ids, score.per_group_oa):
        buf.write(f"{gid}\t{score.matched_groups[gid]}\t{oa:.10g}\n")
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)
