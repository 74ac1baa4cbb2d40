"""Finite weighted rooted real trees and the distances between them.

Trees are stored by parent pointers with vertex 0 as the root. Masses are a
probability vector over vertices; edge lengths are positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np

from amap.mapping_core import Mapping, decompose

EXACT_MAX_VERTICES = 8
SUBSET_MAX_SUPPORT = 12
MASS_TOL = 1e-9


class TreeError(ValueError):
    """Invalid tree data or an operation outside its domain."""


@dataclass(frozen=True, eq=False)
class RootedWeightedTree:
    parent: tuple
    edge_length: tuple
    mass: tuple

    def __post_init__(self):
        parent = tuple(int(p) for p in self.parent)
        lengths = tuple(float(x) for x in self.edge_length)
        mass = tuple(float(x) for x in self.mass)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "edge_length", lengths)
        object.__setattr__(self, "mass", mass)
        V = len(parent)
        if V == 0 or len(lengths) != V or len(mass) != V:
            raise TreeError("parent, edge_length and mass must have the same positive length")
        if parent[0] != -1:
            raise TreeError("vertex 0 must be the root (parent -1)")
        for v in range(1, V):
            if not 0 <= parent[v] < V or parent[v] == v:
                raise TreeError(f"vertex {v} has invalid parent {parent[v]}")
            if not lengths[v] > 0:
                raise TreeError(f"edge above vertex {v} has non-positive length {lengths[v]}")
        if min(mass) < 0 or abs(sum(mass) - 1.0) > 1e-9:
            raise TreeError(f"masses must be nonnegative and sum to 1, got sum {sum(mass)}")
        # every vertex must reach the root
        depth = [None] * V
        depth[0] = 0
        for v in range(V):
            path = []
            x = v
            while depth[x] is None:
                path.append(x)
                x = parent[x]
                if len(path) > V:
                    raise TreeError("parent pointers contain a cycle")
            for y in reversed(path):
                depth[y] = depth[parent[y]] + 1

    @property
    def size(self) -> int:
        return len(self.parent)

    @cached_property
    def children(self) -> list:
        kids = [[] for _ in range(self.size)]
        for v in range(1, self.size):
            kids[self.parent[v]].append(v)
        return kids

    @cached_property
    def preorder(self) -> list:
        order = []
        stack = [0]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(self.children[v]))
        return order

    @cached_property
    def root_distance(self) -> np.ndarray:
        d = np.zeros(self.size)
        for v in self.preorder[1:]:
            d[v] = d[self.parent[v]] + self.edge_length[v]
        return d

    @cached_property
    def distances(self) -> np.ndarray:
        """Pairwise path-metric distances."""
        V = self.size
        dist = np.zeros((V, V))
        order = self.preorder
        for v in order[1:]:
            p = self.parent[v]
            ell = self.edge_length[v]
            # v is new: its distance to any earlier vertex goes through p
            done = order[:order.index(v)]
            dist[v, done] = dist[p, done] + ell
            dist[done, v] = dist[v, done]
        return dist

    def subtree(self, v: int) -> list:
        out = []
        stack = [v]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(self.children[x])
        return out

    def height(self) -> float:
        return float(self.root_distance.max())

    def diameter(self) -> float:
        return float(self.distances.max())

    def to_json(self) -> str:
        return json.dumps({"parent": list(self.parent), "edge_length": list(self.edge_length),
                           "mass": list(self.mass)})

    @classmethod
    def from_json(cls, text: str) -> "RootedWeightedTree":
        data = json.loads(text)
        return cls(tuple(data["parent"]), tuple(data["edge_length"]), tuple(data["mass"]))

    def canonical_form(self):
        """Invariant of weighted rooted isometry for trees without mass-free degree-2 vertices."""
        kids = self.children

        def form(v):
            return (self.edge_length[v], self.mass[v], tuple(sorted(form(c) for c in kids[v])))

        return form(0)

    def simplified(self) -> "RootedWeightedTree":
        """Suppress non-root vertices with exactly one child and no mass."""
        keep = [v for v in range(self.size)
                if v == 0 or len(self.children[v]) != 1 or self.mass[v] > 0]
        new_id = {v: k for k, v in enumerate(keep)}
        parent, length = [-1], [0.0]
        for v in keep[1:]:
            ell = self.edge_length[v]
            p = self.parent[v]
            while p not in new_id:
                ell += self.edge_length[p]
                p = self.parent[p]
            parent.append(new_id[p])
            length.append(ell)
        return RootedWeightedTree(tuple(parent), tuple(length), tuple(self.mass[v] for v in keep))


def isometric(x: RootedWeightedTree, y: RootedWeightedTree) -> bool:
    return x.simplified().canonical_form() == y.simplified().canonical_form()


def point_tree() -> RootedWeightedTree:
    return RootedWeightedTree((-1,), (0.0,), (1.0,))


# ---------------------------------------------------------------------------
# trees from paths and from mappings


def tree_from_path(f, scale: float | None = None) -> RootedWeightedTree:
    """Quotient tree of a path under ``u1 ~ u2 iff f(u1) = min f on [u1, u2] = f(u2)``.

    Accepts a ``GridFunction`` or a ``LatticePath``; lattice heights become
    edge lengths ``scale`` each (default ``n ** -0.5``). The weight is the
    image of Lebesgue measure, split half-and-half between the endpoints of
    every grid interval.
    """
    from amap.path_codec import LatticePath

    if isinstance(f, LatticePath):
        heights = list(f.values)
        if scale is None:
            scale = 1.0 / math.sqrt(f.n)
    else:
        heights = f.values.tolist()
        scale = None
    N = len(heights) - 1
    h = [heights[0]]
    parent = [-1]
    half = [0]
    stack = [0]
    prev = 0
    for k in range(1, N + 1):
        y = heights[k]
        last = None
        while h[stack[-1]] > y:
            last = stack.pop()
        top = stack[-1]
        if h[top] == y:
            cur = top
        elif last is None:
            cur = len(h)
            h.append(y)
            parent.append(top)
            half.append(0)
            stack.append(cur)
        else:
            cur = len(h)
            h.append(y)
            parent.append(top)
            half.append(0)
            parent[last] = cur
            stack.append(cur)
        half[prev] += 1
        half[cur] += 1
        prev = cur
    lengths = [0.0] + [
        (h[v] - h[parent[v]]) * scale if scale is not None else h[v] - h[parent[v]]
        for v in range(1, len(h))
    ]
    total = 2 * N if N else 1
    mass = [c / total for c in half] if N else [1.0]
    return RootedWeightedTree(tuple(parent), tuple(lengths), tuple(mass))


def tree_from_mapping(m: Mapping, scale: float | None = None) -> RootedWeightedTree:
    """Forest of ``m`` with self-loops erased, roots joined to an adjoined root, edges ``n ** -0.5``."""
    forest = decompose(m)
    scale = 1.0 / math.sqrt(m.n) if scale is None else scale
    parent = [-1] + [forest.parent.get(v, 0) for v in range(1, m.n + 1)]
    lengths = [0.0] + [scale] * m.n
    # each edge is walked up and down once; a vertex collects half of every walk touching it
    half = [2 * len(forest.roots)] + [2 * (1 + len(forest.children[v])) for v in range(1, m.n + 1)]
    mass = [c / (4 * m.n) for c in half]
    return RootedWeightedTree(tuple(parent), tuple(lengths), tuple(mass))


# ---------------------------------------------------------------------------
# trimming and length measure


def length_measure_total(t: RootedWeightedTree) -> float:
    return float(sum(t.edge_length))


def trim(t: RootedWeightedTree, eta: float) -> RootedWeightedTree:
    """The set of points at the centre of a segment of length ``2 * eta``; metric only.

    The result is rooted at its point nearest the original root and carries
    all its mass there.
    """
    if not eta > 0:
        raise TreeError(f"eta must be positive, got {eta}")
    V = t.size
    kids = t.children
    down = [0.0] * V
    for v in reversed(t.preorder):
        down[v] = max((t.edge_length[c] + down[c] for c in kids[v]), default=0.0)
    # away[c]: farthest distance from parent(c) to points outside the subtree of c
    away = [0.0] * V
    for v in t.preorder:
        above = away[v] + t.edge_length[v] if v != 0 else 0.0
        branch = [t.edge_length[c] + down[c] for c in kids[v]]
        for i, c in enumerate(kids[v]):
            others = branch[:i] + branch[i + 1:]
            away[c] = max([above] + others)

    # pieces [lo, hi] measured from the child end of each edge
    pieces = []
    for c in range(1, V):
        ell = t.edge_length[c]
        lo = max(0.0, eta - down[c])
        hi = min(ell, away[c] + ell - eta)
        if hi > lo:
            pieces.append((c, lo, hi))
    if not pieces:
        return point_tree()

    nodes = {}

    def node(key):
        return nodes.setdefault(key, len(nodes))

    edges = []
    for c, lo, hi in pieces:
        ell = t.edge_length[c]
        bottom = node(("v", c)) if lo == 0.0 else node(("lo", c))
        top = node(("v", t.parent[c])) if hi == ell else node(("hi", c))
        edges.append((bottom, top, hi - lo))
    bottoms = {b for b, _, _ in edges}
    roots = {tp for _, tp, _ in edges} - bottoms
    if len(roots) != 1:
        raise TreeError("trimmed set is not a rooted tree")
    root = roots.pop()
    order = [root] + [b for b in range(len(nodes)) if b != root]
    new_id = {x: k for k, x in enumerate(order)}
    parent = [-1] * len(order)
    lengths = [0.0] * len(order)
    for b, tp, ell in edges:
        parent[new_id[b]] = new_id[tp]
        lengths[new_id[b]] = ell
    mass = [1.0] + [0.0] * (len(order) - 1)
    return RootedWeightedTree(tuple(parent), tuple(lengths), tuple(mass))


def four_point_ok(dist: np.ndarray, tol: float = 1e-9) -> bool:
    """Four-point condition on a finite distance matrix."""
    d = np.asarray(dist)
    V = d.shape[0]
    idx = np.arange(V)
    x, y, z, w = np.meshgrid(idx, idx, idx, idx, indexing="ij")
    s1 = d[x, y] + d[z, w]
    s2 = d[x, z] + d[y, w]
    s3 = d[x, w] + d[y, z]
    return bool(np.all(s1 <= np.maximum(s2, s3) + tol))


def metric_ok(dist: np.ndarray, tol: float = 1e-9) -> bool:
    d = np.asarray(dist)
    if not np.allclose(d, d.T) or np.any(np.diag(d) != 0) or np.any(d < 0):
        return False
    return bool(np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + tol))


# ---------------------------------------------------------------------------
# Prohorov distance


def _distance_levels(dist: np.ndarray) -> np.ndarray:
    return np.unique(np.concatenate([[0.0], dist.ravel()]))


def _deficiency_subsets(alpha, beta, within) -> float:
    """``max_C alpha(C) - beta(C^eps)`` by enumerating subsets of the support of alpha."""
    support = np.flatnonzero(alpha > 0)
    k = support.size
    if k == 0:
        return 0.0
    masks = np.arange(1, 1 << k)
    member = ((masks[:, None] >> np.arange(k)) & 1).astype(bool)
    a_mass = member @ alpha[support]
    reach = (member.astype(int) @ within[support].astype(int)) > 0
    b_mass = reach @ beta
    return float(max(0.0, np.max(a_mass - b_mass)))


def _deficiency_flow(alpha, beta, within) -> float:
    """Same quantity as a min-cut: total mass of alpha minus the max transportable flow."""
    g = nx.DiGraph()
    for i in np.flatnonzero(alpha > 0):
        g.add_edge("s", ("a", int(i)), capacity=float(alpha[i]))
        for j in np.flatnonzero(within[i] & (beta > 0)):
            g.add_edge(("a", int(i)), ("b", int(j)))
    for j in np.flatnonzero(beta > 0):
        g.add_edge(("b", int(j)), "t", capacity=float(beta[j]))
    if "s" not in g or "t" not in g:
        return float(alpha.sum())
    flow = nx.maximum_flow_value(g, "s", "t")
    return float(max(0.0, alpha.sum() - flow))


def prohorov(alpha, beta, dist, method: str = "auto") -> float:
    """Prohorov distance between two probability vectors on a finite metric space.

    ``C^eps`` is the open eps-neighbourhood, so on ``(d_k, d_{k+1}]`` (consecutive
    distinct distances) the constraint is a fixed deficiency ``D_k <= eps`` and
    the infimum is ``max(d_k, D_k)`` at the first level where it is feasible.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    dist = np.asarray(dist, dtype=float)
    if abs(alpha.sum() - beta.sum()) > 1e-9:
        raise TreeError(f"measures have unequal total mass {alpha.sum()} and {beta.sum()}")
    if method == "auto":
        method = "subsets" if np.count_nonzero(alpha) <= SUBSET_MAX_SUPPORT else "flow"
    deficiency = {"subsets": _deficiency_subsets, "flow": _deficiency_flow}[method]
    levels = _distance_levels(dist)
    for k, d_k in enumerate(levels):
        nxt = levels[k + 1] if k + 1 < levels.size else math.inf
        D = deficiency(alpha, beta, dist <= d_k)
        if D < MASS_TOL:
            D = 0.0
        if D <= nxt:
            return float(max(d_k, D))
    return float(levels[-1])


# ---------------------------------------------------------------------------
# weighted rooted Gromov-Hausdorff comparison


def _all_root_maps(nx_: int, ny: int) -> np.ndarray:
    if nx_ == 1:
        return np.zeros((1, 1), dtype=np.int64)
    grids = np.indices((ny,) * (nx_ - 1)).reshape(nx_ - 1, -1).T
    return np.hstack([np.zeros((grids.shape[0], 1), dtype=np.int64), grids])


def _distortion(maps: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    n = maps.shape[1]
    out = np.zeros(maps.shape[0])
    for i in range(n):
        for j in range(i + 1, n):
            np.maximum(out, np.abs(dx[i, j] - dy[maps[:, i], maps[:, j]]), out=out)
    return out


def _push(maps: np.ndarray, mass: np.ndarray, ny: int) -> np.ndarray:
    out = np.zeros((maps.shape[0], ny))
    rows = np.arange(maps.shape[0])
    for i in range(maps.shape[1]):
        np.add.at(out, (rows, maps[:, i]), mass[i])
    return out


def map_cost(f, x: RootedWeightedTree, y: RootedWeightedTree) -> float:
    """Smallest eps for which the vertex map ``f`` (root to root) satisfies both conditions."""
    f = np.asarray(f, dtype=np.int64)[None, :]
    if f[0, 0] != 0:
        raise TreeError("maps must send the root to the root")
    dist = _distortion(f, x.distances, y.distances)[0]
    pushed = _push(f, np.asarray(x.mass), y.size)[0]
    return float(max(dist, prohorov(pushed, np.asarray(y.mass), y.distances)))


def best_one_sided(x: RootedWeightedTree, y: RootedWeightedTree) -> float:
    """Minimum over all root-preserving vertex maps ``x -> y`` of the map cost."""
    maps = _all_root_maps(x.size, y.size)
    dist = _distortion(maps, x.distances, y.distances)
    order = np.argsort(dist, kind="stable")
    mass_x = np.asarray(x.mass)
    mass_y = np.asarray(y.mass)
    best = math.inf
    cache = {}
    chunk = 4096
    for lo in range(0, order.size, chunk):
        idx = order[lo:lo + chunk]
        if dist[idx[0]] >= best:
            break
        pushed = _push(maps[idx], mass_x, y.size)
        for row, d in zip(pushed, dist[idx]):
            if d >= best:
                break
            key = np.round(row, 12).tobytes()
            if key not in cache:
                cache[key] = prohorov(row, mass_y, y.distances)
            best = min(best, max(d, cache[key]))
    return float(best)


@dataclass(frozen=True)
class DeltaResult:
    lower: float
    upper: float

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    @property
    def value(self) -> float:
        if not self.exact:
            raise TreeError("only a bracket is available for these trees")
        return self.lower


def _alignment_map(x: RootedWeightedTree, y: RootedWeightedTree) -> np.ndarray:
    """Match vertices by position of their mass along the depth-first orders."""
    ox, oy = x.preorder, y.preorder
    mx = np.asarray(x.mass)[ox]
    my = np.asarray(y.mass)[oy]
    mid = np.cumsum(mx) - 0.5 * mx
    edges = np.cumsum(my)
    pos = np.minimum(np.searchsorted(edges, mid, side="right"), len(oy) - 1)
    f = np.zeros(x.size, dtype=np.int64)
    f[ox] = np.asarray(oy)[pos]
    f[0] = 0
    return f


def delta_bracket(x: RootedWeightedTree, y: RootedWeightedTree) -> DeltaResult:
    lower = max(abs(x.height() - y.height()), abs(x.diameter() - y.diameter()))
    best = []
    for a, b in ((x, y), (y, x)):
        candidates = [np.zeros(a.size, dtype=np.int64), _alignment_map(a, b)]
        best.append(min(map_cost(f, a, b) for f in candidates))
    return DeltaResult(float(lower), float(max(best)))


def delta_ghwr(x: RootedWeightedTree, y: RootedWeightedTree,
               exact_max: int = EXACT_MAX_VERTICES) -> DeltaResult:
    """Weighted rooted Gromov-Hausdorff discrepancy over vertex maps.

    Exhaustive (``lower == upper``) when both trees have at most
    ``exact_max`` vertices, otherwise a bracket.
    """
    if x.size <= exact_max and y.size <= exact_max:
        value = max(best_one_sided(x, y), best_one_sided(y, x))
        return DeltaResult(value, value)
    return delta_bracket(x, y)


def d_ghwr_bracket(x: RootedWeightedTree, y: RootedWeightedTree) -> tuple[float, float]:
    delta = delta_ghwr(x, y)
    return 0.5 * delta.lower ** 0.25, delta.upper ** 0.25


def chain_upper(trees) -> float:
    """Sum of quarter powers of consecutive discrepancies along a chain of trees."""
    total = 0.0
    for a, b in zip(trees, trees[1:]):
        total += delta_ghwr(a, b).upper ** 0.25
    return total


# ---------------------------------------------------------------------------
# subtree re-attachment


def reattach(t: RootedWeightedTree, v: int, w: int) -> RootedWeightedTree:
    """Prune the subtree strictly above ``v`` and hang it from ``w`` with the same edge lengths."""
    moved = set(t.subtree(v)) - {v}
    if w in moved:
        raise TreeError(f"cannot re-attach at {w}: it lies in the subtree above {v}")
    parent = list(t.parent)
    for c in t.children[v]:
        parent[c] = w
    return RootedWeightedTree(tuple(parent), t.edge_length, t.mass)


def reattach_distances(t: RootedWeightedTree, v: int, w: int) -> np.ndarray:
    """Distances after re-attachment from the four-case formula (no tree rebuild)."""
    d = t.distances
    inside = np.zeros(t.size, dtype=bool)
    inside[list(set(t.subtree(v)) - {v})] = True
    out = d.copy()
    cross = d[:, v][:, None] + d[w, :][None, :]
    mask = inside[:, None] & ~inside[None, :]
    out[mask] = cross[mask]
    out.T[mask] = cross[mask]
    return out


def moved_radius_and_mass(t: RootedWeightedTree, v: int) -> tuple[float, float]:
    moved = list(set(t.subtree(v)) - {v})
    if not moved:
        return 0.0, 0.0
    return float(t.distances[v, moved].max()), float(sum(t.mass[x] for x in moved))
