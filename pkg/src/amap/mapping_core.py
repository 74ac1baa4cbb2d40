"""Acyclic mappings of ``[n]`` and their forest decomposition.

Vertex labels are 1-based throughout. A mapping is stored as its image
tuple, ``image[i - 1] == phi(i)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from amap._kernels import prufer_to_parent

MAX_ENUMERATE_N = 7


class MappingError(ValueError):
    """Malformed mapping input."""


class CyclicMappingError(MappingError):
    """The mapping has a directed cycle of length at least two."""

    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__(
            "mapping is not acyclic: cycle " + " -> ".join(map(str, self.cycle + self.cycle[:1]))
        )


@dataclass(frozen=True)
class Mapping:
    """A self-map ``phi`` of ``[n]``."""

    n: int
    image: tuple

    def __post_init__(self):
        image = tuple(int(x) for x in self.image)
        object.__setattr__(self, "image", image)
        if self.n < 1:
            raise MappingError(f"n must be positive, got {self.n}")
        if len(image) != self.n:
            raise MappingError(f"image has length {len(image)}, expected n={self.n}")
        for i, x in enumerate(image, start=1):
            if not 1 <= x <= self.n:
                raise MappingError(f"image entry phi({i})={x} is outside [1, {self.n}]")

    def __call__(self, i: int) -> int:
        return self.image[i - 1]

    @classmethod
    def from_image(cls, image) -> "Mapping":
        image = tuple(image)
        return cls(len(image), image)

    def fixed_points(self) -> list[int]:
        return [i for i, x in enumerate(self.image, start=1) if x == i]

    def conjugate(self, perm) -> "Mapping":
        """Return ``pi o phi o pi^-1`` for a permutation given as a 1-based image sequence."""
        perm = tuple(perm)
        new = [0] * self.n
        for i in range(1, self.n + 1):
            new[perm[i - 1] - 1] = perm[self(i) - 1]
        return Mapping(self.n, tuple(new))

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "image": list(self.image)})

    @classmethod
    def from_json(cls, text: str) -> "Mapping":
        data = json.loads(text)
        try:
            return cls(int(data["n"]), tuple(data["image"]))
        except KeyError as exc:
            raise MappingError(f"mapping JSON is missing field {exc}") from None


# An acyclic mapping is a Mapping that passed validate_acyclic; we keep one
# runtime type and check acyclicity at the boundaries that need it.
AcyclicMapping = Mapping


def find_cycle(m: Mapping) -> tuple | None:
    """Return a witness cycle of length >= 2, or None if ``m`` is acyclic.

    Pointer chasing with visitation stamps; each vertex is walked once.
    """
    stamp = [0] * (m.n + 1)
    for start in range(1, m.n + 1):
        if stamp[start]:
            continue
        x = start
        while not stamp[x]:
            stamp[x] = start
            x = m(x)
        if stamp[x] == start and m(x) != x:
            cycle = [x]
            y = m(x)
            while y != x:
                cycle.append(y)
                y = m(y)
            return tuple(cycle)
    return None


def validate_acyclic(m: Mapping) -> bool:
    return find_cycle(m) is None


def require_acyclic(m: Mapping) -> Mapping:
    cycle = find_cycle(m)
    if cycle is not None:
        raise CyclicMappingError(cycle)
    return m


@dataclass(frozen=True)
class Forest:
    """Forest decomposition of an acyclic mapping: roots are the fixed points."""

    n: int
    roots: tuple
    parent: dict = field(repr=False)
    children: dict = field(repr=False)

    def to_mapping(self) -> Mapping:
        image = [0] * self.n
        for r in self.roots:
            image[r - 1] = r
        for v, p in self.parent.items():
            image[v - 1] = p
        return Mapping(self.n, tuple(image))

    def depth(self) -> dict:
        depth = {}
        stack = [(r, 0) for r in self.roots]
        while stack:
            v, d = stack.pop()
            depth[v] = d
            stack.extend((c, d + 1) for c in self.children[v])
        return depth


def decompose(m: Mapping) -> Forest:
    require_acyclic(m)
    children = {v: [] for v in range(1, m.n + 1)}
    parent = {}
    roots = []
    for v in range(1, m.n + 1):
        p = m(v)
        if p == v:
            roots.append(v)
        else:
            parent[v] = p
            children[p].append(v)
    # vertices were appended in ascending order, so lists are already sorted
    return Forest(m.n, tuple(roots), parent, children)


def count_acyclic(n: int) -> int:
    return (n + 1) ** (n - 1)


def enumerate_acyclic(n: int) -> list[Mapping]:
    """All acyclic mappings of ``[n]`` in lexicographic order of the image sequence."""
    if not 1 <= n <= MAX_ENUMERATE_N:
        raise MappingError(f"enumerate_acyclic needs 1 <= n <= {MAX_ENUMERATE_N}, got {n}")
    out = []
    # depth-first over partial images, pruning as soon as a cycle closes
    image = [0] * n

    def extend(i):
        if i == n:
            out.append(Mapping(n, tuple(image)))
            return
        for x in range(1, n + 1):
            image[i] = x
            if _closes_cycle(image, i + 1):
                continue
            extend(i + 1)
        image[i] = 0

    extend(0)
    return out


def _closes_cycle(image, v):
    # follow assigned images from v; unassigned (0) or a fixed point ends the walk
    seen = {v}
    x = v
    while True:
        y = image[x - 1]
        if y == 0 or y == x:
            return False
        if y in seen:
            return True
        seen.add(y)
        x = y


def brute_force_acyclic(n: int) -> list[Mapping]:
    """Filter all ``n**n`` mappings; slow reference used to check enumeration."""
    return [
        Mapping(n, img)
        for img in itertools.product(range(1, n + 1), repeat=n)
        if validate_acyclic(Mapping(n, img))
    ]


def _image_from_prufer(seq: np.ndarray, n: int) -> np.ndarray:
    """0-based image array of the rooted forest encoded by a Prüfer sequence on ``n + 1`` vertices."""
    parent = prufer_to_parent(seq, n + 1)
    # vertex 0 is the adjoined root; its children become fixed points
    image = parent[1:] - 1
    own = np.arange(n)
    image[parent[1:] == 0] = own[parent[1:] == 0]
    return image


def sample_uniform_acyclic_array(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise MappingError(f"n must be positive, got {n}")
    seq = rng.integers(0, n + 1, size=n - 1)
    return _image_from_prufer(seq, n)


def sample_uniform_acyclic(n: int, rng: np.random.Generator) -> Mapping:
    """Uniform draw from the ``(n+1)**(n-1)`` acyclic mappings of ``[n]``.

    A uniform Prüfer sequence on ``n + 1`` vertices gives a uniform labeled
    tree; rooting it at the extra vertex yields a uniform rooted forest on
    ``[n]``, whose roots are made fixed points.
    """
    image = sample_uniform_acyclic_array(n, rng)
    return Mapping(n, tuple(int(x) + 1 for x in image))
