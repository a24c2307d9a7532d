"""From a sparse precision estimate to an ordered linkage map.

Linkage groups are the connected components of the precision support graph,
optionally refined by greedy modularity: a modularity split inside a
component is accepted only where the separating edges are weak relative to
the within-community conditional dependence, so spuriously bridged groups
come apart while genuine chain-shaped groups stay whole. Within-group order
comes from 1-D metric MDS on -log conditional correlations (inbred designs)
or from reverse Cuthill-McKee bandwidth reduction (outbred designs).
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, reverse_cuthill_mckee

from .errors import ValidationError
from .glasso import ZERO_TOL, PrecisionEstimate


@dataclass
class MarkerGraph:
    """Thresholded support of a precision estimate, with edge weights |theta|."""

    adjacency: np.ndarray
    weights: np.ndarray
    marker_names: list[str]

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValidationError("adjacency must be square")
        if np.any(adj != adj.T):
            raise ValidationError("adjacency must be symmetric")
        if np.any(np.diag(adj)):
            raise ValidationError("adjacency must have no self-loops")
        self.adjacency = adj
        self.weights = np.where(adj, np.asarray(self.weights, dtype=float), 0.0)
        if len(self.marker_names) != adj.shape[0]:
            raise ValidationError("marker_names must match adjacency size")

    @property
    def p(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2


@dataclass
class GroupPartition:
    """Marker indices split into linkage groups plus an unplaced remainder."""

    groups: list[list[int]]
    unplaced: list[int]


@dataclass
class LinkageGroup:
    group_id: int
    markers: list[str]
    ordering_method: str
    coordinates: list[float] | None = None


@dataclass
class LinkageMap:
    """Ordered linkage groups; groups are numbered 1..C by decreasing size."""

    groups: list[LinkageGroup]
    unplaced: list[str] = field(default_factory=list)
    population_kind: str = "inbred"

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def group_sizes(self) -> list[int]:
        return [len(g.markers) for g in self.groups]

    def write(self, dest) -> None:
        buf = io.StringIO()
        buf.write("group_id\tposition_rank\tmarker_name\tmds_coordinate\n")
        for group in self.groups:
            for rank, name in enumerate(group.markers, start=1):
                coord = ""
                if group.coordinates is not None:
                    coord = f"{group.coordinates[rank - 1]:.10g}"
                buf.write(f"{group.group_id}\t{rank}\t{name}\t{coord}\n")
        for rank, name in enumerate(self.unplaced, start=1):
            buf.write(f"0\t{rank}\t{name}\t\n")
        text = buf.getvalue()
        if isinstance(dest, (str, Path)):
            Path(dest).write_text(text)
        else:
            dest.write(text)

    @classmethod
    def from_file(cls, source) -> "LinkageMap":
        text = (Path(source).read_text() if isinstance(source, (str, Path))
                else source.read())
        rows = []
        for i, line in enumerate(text.splitlines()):
            if i == 0 or not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValidationError(f"map file line {i + 1}: expected 4 columns")
            rows.append((int(parts[0]), int(parts[1]), parts[2], parts[3]))
        groups: dict[int, list[tuple[int, str, str]]] = {}
        for gid, rank, name, coord in rows:
            groups.setdefault(gid, []).append((rank, name, coord))
        out = []
        unplaced = []
        for gid in sorted(groups):
            members = sorted(groups[gid])
            if gid == 0:
                unplaced = [name for _, name, _ in members]
                continue
            coords = [float(c) for _, _, c in members if c != ""]
            out.append(LinkageGroup(
                gid, [name for _, name, _ in members],
                ordering_method="mds" if coords else "rcm",
                coordinates=coords if coords else None,
            ))
        return cls(out, unplaced=unplaced)


def build_graph(theta, zero_tol: float = ZERO_TOL,
                marker_names: list[str] | None = None) -> MarkerGraph:
    """Read the off-diagonal support of a precision estimate into a graph."""
    t = theta.theta if isinstance(theta, PrecisionEstimate) else np.asarray(theta, float)
    adj = np.abs(t) > zero_tol
    np.fill_diagonal(adj, False)
    if marker_names is None:
        width = len(str(t.shape[0]))
        marker_names = [f"m{j:0{width}d}" for j in range(t.shape[0])]
    return MarkerGraph(adj, np.abs(t), list(marker_names))


def detect_linkage_groups(graph: MarkerGraph, min_group_size: int = 2,
                          weak_cut_ratio: float = 0.25) -> GroupPartition:
    """Partition markers into linkage groups.

    Connected components come first. Within a component, a greedy-modularity
    partition proposes finer communities; a boundary between two communities
    survives only if its strongest edge is weaker than ``weak_cut_ratio``
    times the median within-community edge weight on both sides. Groups
    smaller than ``min_group_size`` are reported as unplaced.
    """
    p = graph.p
    if graph.n_edges == 0:
        warnings.warn("graph has no edges; all markers unplaced", UserWarning)
        return GroupPartition([], list(range(p)))

    n_comp, labels = connected_components(csr_matrix(graph.adjacency), directed=False)
    groups: list[list[int]] = []
    unplaced: list[int] = []
    for c in range(n_comp):
        comp = np.flatnonzero(labels == c)
        if comp.size < max(min_group_size, 2):
            unplaced.extend(int(j) for j in comp)
            continue
        for community in _refine_component(graph, comp, weak_cut_ratio):
            if len(community) < min_group_size:
                unplaced.extend(community)
            else:
                groups.append(community)
    groups.sort(key=lambda g: (-len(g), g[0]))
    return GroupPartition(groups, sorted(unplaced))


def _refine_component(graph: MarkerGraph, comp: np.ndarray,
                      weak_cut_ratio: float) -> list[list[int]]:
    sub = nx.Graph()
    sub.add_nodes_from(int(j) for j in comp)
    for ii, i in enumerate(comp):
        for j in comp[ii + 1:]:
            if graph.adjacency[i, j]:
                sub.add_edge(int(i), int(j), weight=float(graph.weights[i, j]))
    comms = nx.algorithms.community.greedy_modularity_communities(sub, weight="weight")
    comms = [sorted(c) for c in comms]
    if len(comms) == 1:
        return [comms[0]]
    comms.sort(key=lambda c: c[0])

    medians = [_median_internal_weight(graph, c) for c in comms]
    parent = list(range(len(comms)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(len(comms)):
        for b in range(a + 1, len(comms)):
            cut = graph.weights[np.ix_(comms[a], comms[b])]
            max_cut = cut.max() if cut.size else 0.0
            if max_cut <= 0.0:
                continue
            reference = min(medians[a], medians[b])
            if not np.isfinite(reference) or max_cut >= weak_cut_ratio * reference:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[rb] = ra

    merged: dict[int, list[int]] = {}
    for i, comm in enumerate(comms):
        merged.setdefault(find(i), []).extend(comm)
    return [sorted(m) for m in sorted(merged.values(), key=lambda c: c[0])]


def _median_internal_weight(graph: MarkerGraph, members: list[int]) -> float:
    idx = np.asarray(members)
    w = graph.weights[np.ix_(idx, idx)]
    vals = w[np.triu(graph.adjacency[np.ix_(idx, idx)], k=1)]
    return float(np.median(vals)) if vals.size else np.inf


def conditional_correlation(theta, i: int, j: int) -> float:
    """-theta_ij / sqrt(theta_ii * theta_jj)."""
    t = theta.theta if isinstance(theta, PrecisionEstimate) else np.asarray(theta, float)
    return float(-t[i, j] / np.sqrt(t[i, i] * t[j, j]))


def _distance_matrix(theta_sub: np.ndarray) -> np.ndarray | None:
    """-log conditional correlation distances; None if no positive correlation.

    Nonpositive conditional correlations carry no proximity signal and get a
    beyond-the-horizon distance of 1.1 times the largest finite entry.
    """
    d = theta_sub.shape[0]
    diag = np.sqrt(np.diag(theta_sub))
    rho = -theta_sub / np.outer(diag, diag)
    np.fill_diagonal(rho, 1.0)
    off = ~np.eye(d, dtype=bool)
    positive = off & (rho > 0)
    if not positive.any():
        return None
    dist = np.zeros((d, d))
    with np.errstate(divide="ignore", invalid="ignore"):
        dist[positive] = -np.log(np.minimum(rho[positive], 1.0))
    far = 1.1 * dist[positive].max() if dist[positive].size else 1.0
    if far <= 0:
        far = 1.0
    dist[off & ~positive] = far
    dist = (dist + dist.T) / 2.0
    return dist


def _classical_scaling_1d(dist: np.ndarray) -> np.ndarray:
    d = dist.shape[0]
    h = np.eye(d) - np.ones((d, d)) / d
    b = -0.5 * h @ (dist ** 2) @ h
    vals, vecs = np.linalg.eigh(b)
    if vals[-1] <= 0:
        return np.linspace(-1.0, 1.0, d)
    return vecs[:, -1] * np.sqrt(vals[-1])


def _smacof_1d(dist: np.ndarray, x0: np.ndarray, max_iter: int = 500,
               tol: float = 1e-8) -> np.ndarray:
    """Iterative stress majorization for a 1-D configuration."""
    d = dist.shape[0]
    x = x0.astype(float).copy()
    prev_stress = np.inf
    for _ in range(max_iter):
        delta = np.abs(x[:, None] - x[None, :])
        stress = float(((dist - delta) ** 2).sum()) / 2.0
        if abs(prev_stress - stress) < tol:
            break
        prev_stress = stress
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(delta > 1e-12, dist / delta, 0.0)
        np.fill_diagonal(ratio, 0.0)
        bmat = -ratio
        bmat[np.diag_indices(d)] = ratio.sum(axis=1)
        x = (bmat @ x) / d
    return x


def order_inbred_mds(theta_sub: np.ndarray, names: list[str]
                     ) -> tuple[list[int], np.ndarray]:
    """Order one group by 1-D metric MDS on -log conditional correlations.

    Returns the within-group ordering (indices into the group) and the 1-D
    coordinate of each marker in that order. Orientation is canonicalized so
    the lexicographically smaller endpoint marker name comes first.
    """
    theta_sub = np.asarray(theta_sub, dtype=float)
    d = theta_sub.shape[0]
    if d != len(names):
        raise ValidationError("names must match the submatrix size")
    if d == 1:
        return [0], np.zeros(1)
    dist = _distance_matrix(theta_sub)
    if dist is None:
        warnings.warn(
            "no positive conditional correlations in group; ordering is "
            "undefined, keeping input order",
            UserWarning,
        )
        return list(range(d)), np.arange(d, dtype=float)
    x = _smacof_1d(dist, _classical_scaling_1d(dist))
    order = sorted(range(d), key=lambda k: (x[k], k))
    if names[order[-1]] < names[order[0]]:
        order = order[::-1]
        x = -x
    return order, x[order]


def bandwidth(a: np.ndarray) -> int:
    """Largest |i - j| over nonzero off-diagonal entries; 0 when none."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("bandwidth needs a square matrix")
    mask = (a != 0) & ~np.eye(a.shape[0], dtype=bool)
    if not mask.any():
        return 0
    rows, cols = np.nonzero(mask)
    return int(np.abs(rows - cols).max())


def order_outbred_rcm(adjacency: np.ndarray) -> list[int]:
    """Bandwidth-reducing permutation via reverse Cuthill-McKee.

    Disconnected pieces are ordered independently and concatenated largest
    first (with a warning). The result never has larger bandwidth than the
    input order: if the relabeling would worsen it, the input order wins.
    """
    adj = np.asarray(adjacency)
    adj = (adj != 0)
    np.fill_diagonal(adj, False)
    if np.any(adj != adj.T):
        raise ValidationError("adjacency must be symmetric")
    d = adj.shape[0]
    if d == 1:
        return [0]
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    if n_comp > 1:
        warnings.warn(
            f"group subgraph has {n_comp} disconnected pieces; ordering each "
            "piece separately",
            UserWarning,
        )
    pieces = []
    for c in range(n_comp):
        comp = np.flatnonzero(labels == c)
        sub = csr_matrix(adj[np.ix_(comp, comp)])
        perm = np.asarray(reverse_cuthill_mckee(sub, symmetric_mode=True))
        pieces.append([int(j) for j in comp[perm]])
    pieces.sort(key=lambda piece: (-len(piece), piece[0]))
    order = [j for piece in pieces for j in piece]
    if bandwidth(adj[np.ix_(order, order)]) > bandwidth(adj):
        return list(range(d))
    return order


def assemble_map(groups: list[list[int]], orderings: list[list[int]],
                 population_kind: str, marker_names: list[str],
                 coordinates: list[np.ndarray] | None = None,
                 unplaced: list[int] | None = None) -> LinkageMap:
    """Combine group memberships and within-group orders into a LinkageMap.

    ``orderings[k]`` permutes ``groups[k]`` (indices are positions within the
    group). Groups are numbered 1..C by decreasing size.
    """
    if population_kind not in ("inbred", "outbred"):
        raise ValidationError("population_kind must be 'inbred' or 'outbred'")
    if len(groups) != len(orderings):
        raise ValidationError("need one ordering per group")
    seen: set[int] = set()
    for g in groups:
        overlap = seen.intersection(g)
        if overlap:
            names = [marker_names[j] for j in sorted(overlap)]
            raise ValidationError(f"markers in multiple groups: {names}")
        seen.update(g)
    if not groups:
        warnings.warn("empty partition; writing an empty map", UserWarning)

    method = "mds" if population_kind == "inbred" else "rcm"
    items = []
    for k, (group, order) in enumerate(zip(groups, orderings)):
        if sorted(order) != list(range(len(group))):
            raise ValidationError(f"ordering {k} is not a permutation of its group")
        names = [marker_names[group[o]] for o in order]
        coords = None
        if coordinates is not None and coordinates[k] is not None:
            coords = [float(v) for v in coordinates[k]]
            if len(coords) != len(names):
                raise ValidationError(f"group {k}: coordinate count mismatch")
        items.append((names, coords))
    items.sort(key=lambda it: (-len(it[0]), it[0][0]))
    linkage_groups = [
        LinkageGroup(i + 1, names, method, coords)
        for i, (names, coords) in enumerate(items)
    ]
    unplaced_names = [marker_names[j] for j in (unplaced or [])]
    return LinkageMap(linkage_groups, unplaced=unplaced_names,
                      population_kind=population_kind)


def order_groups(theta, partition: GroupPartition, population_kind: str,
                 marker_names: list[str], zero_tol: float = ZERO_TOL) -> LinkageMap:
    """Order every group of a partition and assemble the final map."""
    t = theta.theta if isinstance(theta, PrecisionEstimate) else np.asarray(theta, float)
    orderings = []
    coords: list[np.ndarray | None] = []
    for group in partition.groups:
        idx = np.asarray(group)
        if population_kind == "inbred":
            sub = t[np.ix_(idx, idx)]
            order, x = order_inbred_mds(sub, [marker_names[j] for j in group])
            orderings.append(order)
            coords.append(x)
        else:
            sub_adj = np.abs(t[np.ix_(idx, idx)]) > zero_tol
            np.fill_diagonal(sub_adj, False)
            orderings.append(order_outbred_rcm(sub_adj))
            coords.append(None)
    return assemble_map(partition.groups, orderings, population_kind,
                        marker_names, coordinates=coords,
                        unplaced=partition.unplaced)


def write_edge_list(theta, marker_names: list[str], dest,
                    zero_tol: float = ZERO_TOL) -> None:
    """Emit the precision support as tab-delimited (marker_i, marker_j, theta_ij)."""
    t = theta.theta if isinstance(theta, PrecisionEstimate) else np.asarray(theta, float)
    buf = io.StringIO()
    buf.write("marker_i\tmarker_j\ttheta\n")
    p = t.shape[0]
    for i in range(p):
        for j in range(i + 1, p):
            if abs(t[i, j]) > zero_tol:
                buf.write(f"{marker_names[i]}\t{marker_names[j]}\t{t[i, j]:.10g}\n")
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)
