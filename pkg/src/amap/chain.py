"""The subtree-relocation Markov chain on acyclic mappings.

One step picks ``i`` uniformly from ``[n]`` and redraws ``phi(i)`` uniformly
from the images that keep the mapping acyclic: ``i`` itself (a new
component) or any vertex outside the subtree hanging from ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from amap.mapping_core import Mapping, MappingError, enumerate_acyclic, require_acyclic

MAX_MATRIX_N = 5


def subtree_of(m: Mapping, x: int) -> set:
    """All ``w`` with ``phi^k(w) == x`` for some ``k >= 0``."""
    if not 1 <= x <= m.n:
        raise MappingError(f"vertex {x} is outside [1, {m.n}]")
    children = [[] for _ in range(m.n + 1)]
    for v in range(1, m.n + 1):
        p = m(v)
        if p != v:
            children[p].append(v)
    return _collect(children, x)


def _collect(children, x):
    out = {x}
    stack = [x]
    while stack:
        for c in children[stack.pop()]:
            out.add(c)
            stack.append(c)
    return out


def allowed_images(m: Mapping, i: int) -> list[int]:
    sub = subtree_of(m, i)
    return sorted({i} | (set(range(1, m.n + 1)) - sub))


def step(m: Mapping, rng: np.random.Generator) -> Mapping:
    i = int(rng.integers(1, m.n + 1))
    choices = allowed_images(m, i)
    new = list(m.image)
    new[i - 1] = choices[int(rng.integers(len(choices)))]
    return Mapping(m.n, tuple(new))


def step_law(m: Mapping) -> dict:
    """Exact one-step distribution from ``m`` as ``{Mapping: Fraction}``."""
    law = {}
    for i in range(1, m.n + 1):
        choices = allowed_images(m, i)
        p = Fraction(1, m.n * len(choices))
        for x in choices:
            new = list(m.image)
            new[i - 1] = x
            key = Mapping(m.n, tuple(new))
            law[key] = law.get(key, 0) + p
    return law


@dataclass
class TransitionMatrix:
    """Exact transition kernel over ``enumerate_acyclic(n)``, stored by sparse rows."""

    states: list
    rows: list
    index: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def __getitem__(self, ij) -> Fraction:
        i, j = ij
        return self.rows[i].get(j, Fraction(0))

    def prob(self, a: Mapping, b: Mapping) -> Fraction:
        return self[self.index[a], self.index[b]]

    def is_stochastic(self) -> bool:
        return all(sum(row.values()) == 1 for row in self.rows)

    def is_symmetric(self) -> bool:
        for i, row in enumerate(self.rows):
            for j, p in row.items():
                if self.rows[j].get(i, Fraction(0)) != p:
                    return False
        return True

    def to_dense(self) -> list:
        out = [[Fraction(0)] * self.size for _ in range(self.size)]
        for i, row in enumerate(self.rows):
            for j, p in row.items():
                out[i][j] = p
        return out

    def to_float(self) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        for i, row in enumerate(self.rows):
            for j, p in row.items():
                out[i, j] = float(p)
        return out


def transition_matrix(n: int) -> TransitionMatrix:
    if not 1 <= n <= MAX_MATRIX_N:
        raise MappingError(f"transition_matrix needs 1 <= n <= {MAX_MATRIX_N}, got {n}")
    states = enumerate_acyclic(n)
    index = {s: k for k, s in enumerate(states)}
    rows = [{index[t]: p for t, p in step_law(s).items()} for s in states]
    return TransitionMatrix(states, rows, index)


class ChainState:
    """Mutable chain state with children lists kept in sync for O(subtree) steps."""

    def __init__(self, m: Mapping):
        require_acyclic(m)
        self.n = m.n
        self.image = [0] + list(m.image)
        self.children = [set() for _ in range(self.n + 1)]
        for v in range(1, self.n + 1):
            if self.image[v] != v:
                self.children[self.image[v]].add(v)

    def mapping(self) -> Mapping:
        return Mapping(self.n, tuple(self.image[1:]))

    def apply(self, i: int, u1: float, u2: float) -> None:
        """Advance one step given the chosen vertex and two uniforms in ``[0, 1)``."""
        sub = _collect(self.children, i)
        n_allowed = self.n - len(sub) + 1
        k = int(u1 * n_allowed)
        if k == 0:
            target = i
        else:
            # k-th vertex outside the subtree; rejection first since it is usually cheap
            target = 1 + int(u2 * self.n)
            if target in sub:
                outside = [v for v in range(1, self.n + 1) if v not in sub]
                target = outside[k - 1]
        old = self.image[i]
        if old != i:
            self.children[old].discard(i)
        self.image[i] = target
        if target != i:
            self.children[target].add(i)

    def fixed_points(self) -> int:
        return sum(1 for v in range(1, self.n + 1) if self.image[v] == v)

    def height(self) -> int:
        """Largest number of edges from a vertex down to its root."""
        best = 0
        roots = [v for v in range(1, self.n + 1) if self.image[v] == v]
        stack = [(r, 0) for r in roots]
        while stack:
            v, d = stack.pop()
            best = max(best, d)
            stack.extend((c, d + 1) for c in self.children[v])
        return best


OBSERVERS = {
    "fixed-points": ChainState.fixed_points,
    "height": ChainState.height,
}


@dataclass
class Trajectory:
    steps: int
    stride: int
    final: Mapping
    series: dict
    times: list


def run_chain(m0: Mapping, steps: int, rng: np.random.Generator, observers=None,
              stride: int = 1, on_state=None) -> Trajectory:
    """Run the chain for ``steps`` steps, sampling observers every ``stride`` steps.

    ``observers`` maps names to callables taking a ``ChainState`` (names from
    ``OBSERVERS`` are accepted as strings). ``on_state`` is called with the
    state at every recorded time.
    """
    if steps < 0:
        raise MappingError(f"steps must be >= 0, got {steps}")
    if stride < 1:
        raise MappingError(f"stride must be >= 1, got {stride}")
    observers = observers or {}
    if isinstance(observers, (list, tuple)):
        observers = {name: OBSERVERS[name] for name in observers}
    state = ChainState(m0)
    series = {name: [] for name in observers}
    times = []

    def record(t):
        times.append(t)
        for name, fn in observers.items():
            series[name].append(fn(state))
        if on_state is not None:
            on_state(state)

    if steps == 0:
        record(0)
    block = 65536
    done = 0
    while done < steps:
        size = min(block, steps - done)
        vertices = rng.integers(1, state.n + 1, size=size)
        uniforms = rng.random((size, 2))
        for k in range(size):
            state.apply(int(vertices[k]), uniforms[k, 0], uniforms[k, 1])
            t = done + k + 1
            if t % stride == 0:
                record(t)
        done += size
    return Trajectory(steps, stride, state.mapping(), series, times)
