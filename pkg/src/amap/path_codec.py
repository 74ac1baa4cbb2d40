"""Lattice reflected bridge encoding of acyclic mappings.

A tree component with ``l`` vertices contributes a ``2l``-step positive
excursion that records depth-first-search height plus one. Components are
visited by increasing root label and children by increasing label; decoding
returns the representative whose labels follow the depth-first visit order.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from amap._kernels import contour_from_image
from amap.mapping_core import Mapping, require_acyclic


class PathError(ValueError):
    """Sequence violates the lattice path invariants."""


@dataclass(frozen=True)
class LatticePath:
    values: tuple

    def __post_init__(self):
        values = tuple(int(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if len(values) < 3 or len(values) % 2 == 0:
            raise PathError(f"path must have 2n+1 >= 3 values, got {len(values)}")
        if values[0] != 0 or values[-1] != 0:
            raise PathError("path must start and end at 0")
        for k in range(len(values) - 1):
            if abs(values[k + 1] - values[k]) != 1:
                raise PathError(f"step {k} -> {k + 1} is not +-1")
            if values[k + 1] < 0:
                raise PathError(f"path is negative at {k + 1}")

    @property
    def n(self) -> int:
        return (len(self.values) - 1) // 2

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "values": list(self.values)})

    @classmethod
    def from_json(cls, text: str) -> "LatticePath":
        data = json.loads(text)
        path = cls(tuple(data["values"]))
        if "n" in data and int(data["n"]) != path.n:
            raise PathError(f"declared n={data['n']} does not match path length {len(path.values)}")
        return path


def encode_labeled(m: Mapping) -> tuple[np.ndarray, np.ndarray]:
    """Heights ``v(0..2n)`` and the 1-based vertex entered by each up-step (0 on down-steps)."""
    require_acyclic(m)
    image = np.asarray(m.image, dtype=np.int64) - 1
    heights, labels = contour_from_image(image)
    return heights, labels + 1


def encode_array(image0: np.ndarray) -> np.ndarray:
    """Heights for a 0-based image array, skipping validation (hot path for samplers)."""
    return contour_from_image(image0)[0]


def encode(m: Mapping) -> LatticePath:
    heights, _ = encode_labeled(m)
    return LatticePath(tuple(heights.tolist()))


def decode_labeled(values, labels) -> Mapping:
    """Rebuild the mapping from heights and the vertex carried by each up-step."""
    values = list(values)
    n = (len(values) - 1) // 2
    image = [0] * n
    stack = []
    for k in range(2 * n):
        if values[k + 1] > values[k]:
            v = int(labels[k])
            image[v - 1] = stack[-1] if stack else v
            stack.append(v)
        else:
            stack.pop()
    return Mapping(n, tuple(image))


def decode(p: LatticePath) -> Mapping:
    """Canonical mapping for a path: vertices are numbered in depth-first visit order."""
    labels = []
    count = 0
    for k in range(2 * p.n):
        if p.values[k + 1] > p.values[k]:
            count += 1
            labels.append(count)
        else:
            labels.append(0)
    return decode_labeled(p.values, labels)


def rescale(p: LatticePath):
    """Time by ``2n``, space by ``sqrt(n)``: a grid function of lifetime 1 with ``2n`` intervals."""
    from amap.excursion_kit import GridFunction

    values = np.asarray(p.values, dtype=float) / np.sqrt(p.n)
    return GridFunction(1.0, values)


def excursion_length_profile(p) -> dict:
    """For each level ``h``, the sorted lengths of the excursions above ``h``.

    Accepts a LatticePath or any integer sequence with the same invariants.
    """
    values = p.values if isinstance(p, LatticePath) else tuple(int(v) for v in p)
    open_at = {}
    profile = defaultdict(list)
    for k in range(len(values) - 1):
        if values[k + 1] > values[k]:
            open_at[values[k]] = k
        else:
            h = values[k + 1]
            profile[h].append(k + 1 - open_at.pop(h))
    return {h: tuple(sorted(lengths)) for h, lengths in sorted(profile.items())}


def canonical_tree_form(m: Mapping):
    """Isomorphism invariant of the rooted forest (sorted nested tuples)."""
    require_acyclic(m)
    children = defaultdict(list)
    roots = []
    for v in range(1, m.n + 1):
        if m(v) == v:
            roots.append(v)
        else:
            children[m(v)].append(v)

    def form(v):
        return tuple(sorted(form(c) for c in children[v]))

    return tuple(sorted(form(r) for r in roots))
