"""Minimum spanning trees over language distances and stress-minimizing layouts.

The MST is built by Kruskal's algorithm with edges sorted by (weight, i, j),
so tie-breaking is lexicographic and figures reproduce across platforms. The
2-D layout minimizes Kamada-Kawai stress sum_{i<j} w_ij (|p_i - p_j| - d_ij)^2
with w_ij = d_ij^-2, moving one node at a time by a Newton step (the node with
the largest gradient norm), with halving line search when a step would
increase stress. Targets default to shortest-path distances through the
weighted tree; the raw metric distances are available as an option.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .clustering import LabeledPartition
from .errors import ValidationError
from .metricspace import MaskedDistanceMatrix

__all__ = [
    "SpanningTree",
    "Layout",
    "minimum_spanning_tree",
    "tree_path_distances",
    "kamada_kawai",
    "export_layout",
    "parse_layout",
    "render_svg",
]

PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1f77b4", "#ff7f0e",
    "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
)


@dataclass(frozen=True)
class SpanningTree:
    """Tree over language nodes; edges are (i, j, weight) with i < j."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[int, int, float], ...]
    total_weight: float

    def __post_init__(self):
        nodes = tuple(str(n) for n in self.nodes)
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        n = len(nodes)
        if n < 1:
            raise ValidationError("tree needs at least one node")
        if len(set(nodes)) != n:
            raise ValidationError("duplicate node tags")
        if len(edges) != n - 1:
            raise ValidationError(f"tree over {n} nodes needs {n - 1} edges, got {len(edges)}")
        parent = list(range(n))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, j, w in edges:
            if not (0 <= i < j < n):
                raise ValidationError(f"bad edge indices ({i}, {j})")
            if w < 0 or not math.isfinite(w):
                raise ValidationError(f"bad edge weight {w}")
            ri, rj = find(i), find(j)
            if ri == rj:
                raise ValidationError(f"edge ({i}, {j}) creates a cycle")
            parent[ri] = rj
        total = sum(w for _, _, w in edges)
        if not math.isclose(total, self.total_weight, rel_tol=1e-12, abs_tol=1e-12):
            raise ValidationError(
                f"total_weight {self.total_weight} does not match edge sum {total}"
            )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "total_weight", float(self.total_weight))

    @property
    def n(self) -> int:
        return len(self.nodes)


def minimum_spanning_tree(D: MaskedDistanceMatrix) -> SpanningTree:
    """Kruskal MST of the complete graph with weights D[i][j]."""
    D.require_fully_observed("minimum spanning tree")
    n = D.n
    candidates = sorted(
        (float(D.values[i, j]), i, j) for i in range(n) for j in range(i + 1, n)
    )
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for w, i, j in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j, w))
            if len(edges) == n - 1:
                break
    total = float(sum(w for _, _, w in edges))
    return SpanningTree(nodes=D.labels, edges=tuple(edges), total_weight=total)


def tree_path_distances(tree: SpanningTree) -> np.ndarray:
    """All-pairs shortest-path distances through the weighted tree edges."""
    n = tree.n
    adjacency: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for i, j, w in tree.edges:
        adjacency[i].append((j, w))
        adjacency[j].append((i, w))
    dist = np.zeros((n, n))
    for source in range(n):
        seen = np.zeros(n, dtype=bool)
        seen[source] = True
        stack = [source]
        while stack:
            u = stack.pop()
            for v, w in adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    dist[source, v] = dist[source, u] + w
                    stack.append(v)
        if not seen.all():
            raise ValidationError("tree is disconnected")
    return dist


@dataclass(frozen=True)
class Layout:
    """2-D node positions with the final stress of the spring model."""

    positions: dict[str, tuple[float, float]]
    stress: float
    iterations: int

    def __post_init__(self):
        positions = {
            str(tag): (float(x), float(y)) for tag, (x, y) in self.positions.items()
        }
        for tag, (x, y) in positions.items():
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValidationError(f"non-finite coordinates for {tag!r}")
        if self.stress < 0:
            raise ValidationError("stress must be nonnegative")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "stress", float(self.stress))
        object.__setattr__(self, "iterations", int(self.iterations))


def _stress(pos: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> float:
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    iu = np.triu_indices(pos.shape[0], k=1)
    return float(np.sum(weights[iu] * (dist[iu] - targets[iu]) ** 2))


def _node_stress(pos: np.ndarray, m: int, targets: np.ndarray, weights: np.ndarray) -> float:
    diff = pos - pos[m]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    mask = np.arange(pos.shape[0]) != m
    return float(np.sum(weights[m, mask] * (dist[mask] - targets[m, mask]) ** 2))


def _gradients(pos: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    n = pos.shape[0]
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(dist, 1.0)  # diagonal diff is zero; avoid 0/0
    coef = 2.0 * weights * (dist - targets) / dist
    np.fill_diagonal(coef, 0.0)
    return np.sum(coef[:, :, None] * diff, axis=1)


def _terms_toward(
    pos: np.ndarray, center: np.ndarray, m: int, targets: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Per-node gradient contributions of the pair (i, m) at p_m = center.

    Row i holds 2 w_im (1 - t_im / |p_i - center|) (p_i - center); row m is
    zero. grad_i contains +row_i and grad_m equals -sum of all rows.
    """
    diff = pos - center
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    dist[m] = 1.0
    coef = 2.0 * weights[m] * (1.0 - targets[m] / dist)
    coef[m] = 0.0
    return coef[:, None] * diff


def kamada_kawai(
    tree: SpanningTree,
    targets: str = "tree-path",
    metric: Optional[MaskedDistanceMatrix] = None,
    max_iter: Optional[int] = None,
    tol: float = 1e-6,
) -> Layout:
    """Stress-minimizing planar layout of the spanning tree.

    `targets` selects the desired inter-node distances: "tree-path" (default)
    uses shortest paths through the tree, "metric" uses the raw distance
    matrix (which must then be supplied).
    """
    n = tree.n
    if targets == "tree-path":
        desired = tree_path_distances(tree)
    elif targets == "metric":
        if metric is None:
            raise ValidationError('targets="metric" requires the distance matrix')
        if metric.labels != tree.nodes:
            raise ValidationError("metric labels do not match tree nodes")
        metric.require_fully_observed("layout targets")
        desired = metric.values.copy()
    else:
        raise ValidationError(f"unknown target mode {targets!r}")
    if n == 1:
        return Layout(positions={tree.nodes[0]: (0.0, 0.0)}, stress=0.0, iterations=0)
    off = ~np.eye(n, dtype=bool)
    if np.any(desired[off] <= 0):
        raise ValidationError("zero target distance between distinct nodes")
    if max_iter is None:
        max_iter = 1000 * n

    weights = np.zeros_like(desired)
    weights[off] = desired[off] ** -2.0

    # deterministic circle initialization ordered by node index
    radius = float(desired.max()) / 2.0
    angles = 2.0 * np.pi * np.arange(n) / n
    pos = radius * np.column_stack([np.cos(angles), np.sin(angles)])

    # full gradient once, then O(n) incremental updates per accepted move,
    # with a periodic full recompute to cancel accumulated rounding
    grad = _gradients(pos, desired, weights)
    halvings = 0.5 ** np.arange(30)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if iterations % 256 == 0:
            grad = _gradients(pos, desired, weights)
        norms = np.sqrt(np.sum(grad * grad, axis=1))
        m = int(np.argmax(norms))
        if norms[m] < tol:
            iterations -= 1
            break

        keep = np.ones(n, dtype=bool)
        keep[m] = False
        anchors = pos[keep]
        w, t = weights[m, keep], desired[m, keep]

        # 2x2 Newton system for node m (classical inner loop)
        diff = pos[m] - anchors
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        dx, dy = diff[:, 0], diff[:, 1]
        t_d3 = t / dist**3
        e_xx = np.sum(2.0 * w * (1.0 - t_d3 * dy**2))
        e_yy = np.sum(2.0 * w * (1.0 - t_d3 * dx**2))
        e_xy = np.sum(2.0 * w * t_d3 * dx * dy)
        g = grad[m]
        det = e_xx * e_yy - e_xy * e_xy
        if det != 0.0:
            step = np.array(
                [(-g[0] * e_yy + g[1] * e_xy) / det, (g[0] * e_xy - g[1] * e_xx) / det]
            )
        else:
            step = -g

        if step[0] * g[0] + step[1] * g[1] >= 0.0:
            step = -g  # Newton direction points uphill: steepest descent

        before = np.sum(w * (dist - t) ** 2)
        saved = pos[m].copy()

        def node_stress_at(points):
            cdiff = points[:, None, :] - anchors[None, :, :]
            cdist = np.sqrt(np.sum(cdiff * cdiff, axis=2))
            return np.sum(w[None, :] * (cdist - t[None, :]) ** 2, axis=1)

        # fast path: the full step is accepted almost always
        candidate = saved + step
        if node_stress_at(candidate[None, :])[0] < before:
            pos[m] = candidate
        else:
            # halving line search over the step, then over steepest descent
            candidates = saved[None, :] + np.concatenate(
                [halvings[:, None] * step[None, :], halvings[:, None] * (-g)[None, :]]
            )
            acceptable = node_stress_at(candidates) < before
            if not acceptable.any():
                break  # no descent direction improves: numerically converged
            pos[m] = candidates[int(np.argmax(acceptable))]
        old_terms = _terms_toward(pos, saved, m, desired, weights)
        new_terms = _terms_toward(pos, pos[m], m, desired, weights)
        grad += new_terms - old_terms
        grad[m] = -np.sum(new_terms, axis=0)

    final = _stress(pos, desired, weights)
    positions = {tag: (float(x), float(y)) for tag, (x, y) in zip(tree.nodes, pos)}
    return Layout(positions=positions, stress=final, iterations=iterations)


def export_layout(
    tree: SpanningTree,
    layout: Layout,
    node_labels: Optional[LabeledPartition] = None,
) -> dict:
    """JSON-ready document with nodes, edges, and stress; round-trips losslessly."""
    if set(layout.positions) != set(tree.nodes):
        raise ValidationError("layout and tree node sets differ")
    if node_labels is not None:
        missing = [t for t in tree.nodes if t not in node_labels.assignment]
        if missing:
            raise ValidationError(f"node labels do not cover {missing}")
    nodes = []
    for tag in tree.nodes:
        x, y = layout.positions[tag]
        entry = {"id": tag, "x": x, "y": y}
        if node_labels is not None:
            entry["group"] = node_labels.label_names[node_labels.assignment[tag]]
        nodes.append(entry)
    edges = [
        {"source": tree.nodes[i], "target": tree.nodes[j], "weight": w}
        for i, j, w in tree.edges
    ]
    return {"nodes": nodes, "edges": edges, "stress": layout.stress}


def parse_layout(document: dict) -> tuple[SpanningTree, Layout, Optional[dict[str, str]]]:
    """Inverse of export_layout (iteration counts are not serialized)."""
    try:
        nodes = tuple(entry["id"] for entry in document["nodes"])
        positions = {
            entry["id"]: (float(entry["x"]), float(entry["y"]))
            for entry in document["nodes"]
        }
        groups = {
            entry["id"]: entry["group"]
            for entry in document["nodes"]
            if "group" in entry
        }
        index = {tag: i for i, tag in enumerate(nodes)}
        edges = []
        for entry in document["edges"]:
            i, j = index[entry["source"]], index[entry["target"]]
            if i > j:
                i, j = j, i
            edges.append((i, j, float(entry["weight"])))
        stress = float(document["stress"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed layout document: {exc}") from exc
    total = float(sum(w for _, _, w in edges))
    tree = SpanningTree(nodes=nodes, edges=tuple(edges), total_weight=total)
    layout = Layout(positions=positions, stress=stress, iterations=0)
    return tree, layout, (groups or None)


def render_svg(
    tree: SpanningTree,
    layout: Layout,
    node_labels: Optional[LabeledPartition] = None,
    size: int = 900,
) -> str:
    """Standalone SVG rendering: edges, group-colored nodes, text labels."""
    xs = np.array([layout.positions[t][0] for t in tree.nodes])
    ys = np.array([layout.positions[t][1] for t in tree.nodes])
    span = max(xs.max() - xs.min(), ys.max() - ys.min(), 1e-9)
    margin = 0.08 * size
    scale = (size - 2 * margin) / span

    def sx(x: float) -> float:
        return margin + (x - xs.min()) * scale

    def sy(y: float) -> float:
        return margin + (y - ys.min()) * scale

    def color(tag: str) -> str:
        if node_labels is None or tag not in node_labels.assignment:
            return "#888888"
        return PALETTE[node_labels.assignment[tag] % len(PALETTE)]

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for i, j, _ in tree.edges:
        a, b = tree.nodes[i], tree.nodes[j]
        parts.append(
            f'<line x1="{sx(layout.positions[a][0]):.2f}" y1="{sy(layout.positions[a][1]):.2f}" '
            f'x2="{sx(layout.positions[b][0]):.2f}" y2="{sy(layout.positions[b][1]):.2f}" '
            'stroke="#bbbbbb" stroke-width="1"/>'
        )
    for tag in tree.nodes:
        x, y = layout.positions[tag]
        parts.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="{color(tag)}"/>'
        )
        parts.append(
            f'<text x="{sx(x) + 6:.2f}" y="{sy(y) - 6:.2f}" font-size="10" '
            f'font-family="sans-serif" fill="#333333">{_svg_escape(tag)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
