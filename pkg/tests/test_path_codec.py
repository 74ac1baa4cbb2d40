import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amap.mapping_core import CyclicMappingError, Mapping, decompose, enumerate_acyclic, sample_uniform_acyclic
from amap.path_codec import (
    LatticePath,
    PathError,
    canonical_tree_form,
    decode,
    decode_labeled,
    encode,
    encode_labeled,
    excursion_length_profile,
    rescale,
)


def contour_oracle(m):
    # recursive depth-first walk written directly from the definition
    f = decompose(m)
    out = [0]

    def visit(v, depth):
        out.append(depth + 1)
        for c in sorted(f.children[v]):
            visit(c, depth + 1)
        out.append(depth)

    for r in sorted(f.roots):
        visit(r, 0)
    return tuple(out)


def components(values):
    # split a path at its zeros
    zeros = [k for k, v in enumerate(values) if v == 0]
    return [values[a:b + 1] for a, b in zip(zeros, zeros[1:])]


def test_two_singletons():
    assert encode(Mapping(2, (1, 2))).values == (0, 1, 0, 1, 0)


def test_root_with_child():
    assert encode(Mapping(2, (1, 1))).values == (0, 1, 2, 1, 0)


def test_five_vertex_component_from_example_mapping():
    # the eighteen-point example with both cycles cut open at 10, 4 and 3
    img = list((10, 3, 18, 10, 9, 2, 8, 4, 3, 7, 9, 2, 1, 9, 15, 1, 1, 9))
    img[9] = 10
    img[3] = 4
    img[2] = 3
    m = Mapping(18, tuple(img))
    f = decompose(m)
    assert set(_collect(f, 10)) == {1, 10, 13, 16, 17}
    path = encode(m).values
    sizes = {}
    for comp in components(path):
        sizes.setdefault(len(comp) - 1, []).append(max(comp))
    assert 10 in sizes and 3 in sizes[10]


def _collect(f, r):
    stack, out = [r], []
    while stack:
        v = stack.pop()
        out.append(v)
        stack.extend(f.children[v])
    return out


def test_encode_rejects_cycles():
    with pytest.raises(CyclicMappingError):
        encode(Mapping(3, (2, 3, 1)))


@pytest.mark.parametrize("n", range(1, 7))
def test_encode_matches_recursive_oracle_and_decodes_back(n):
    for m in enumerate_acyclic(n):
        p = encode(m)
        assert p.values == contour_oracle(m)
        d = decode(p)
        assert encode(d) == p
        assert canonical_tree_form(d) == canonical_tree_form(m)


def test_decode_canonical_examples():
    assert decode(LatticePath((0, 1, 0, 1, 0))) == Mapping(2, (1, 2))
    assert decode(LatticePath((0, 1, 2, 1, 0))) == Mapping(2, (1, 1))
    assert decode(LatticePath((0, 1, 2, 1, 2, 1, 0))) == Mapping(3, (1, 1, 1))
    assert decode(LatticePath((0, 1, 2, 3, 2, 1, 0))) == Mapping(3, (1, 1, 2))


def test_labeled_round_trip_recovers_the_mapping():
    rng = np.random.default_rng(4)
    for n in (1, 5, 60):
        m = sample_uniform_acyclic(n, rng)
        heights, labels = encode_labeled(m)
        assert decode_labeled(heights, labels) == m
        assert sorted(labels[labels > 0]) == list(range(1, n + 1))


@given(st.integers(1, 200), st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_fuzzed_round_trip(n, seed):
    m = sample_uniform_acyclic(n, np.random.default_rng(seed))
    p = encode(m)
    assert len(p.values) == 2 * n + 1
    assert encode(decode(p)) == p
    assert canonical_tree_form(decode(p)) == canonical_tree_form(m)


@given(st.integers(2, 60), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_profile_invariant_under_relabelling(n, seed):
    rng = np.random.default_rng(seed)
    m = sample_uniform_acyclic(n, rng)
    perm = tuple(int(x) + 1 for x in rng.permutation(n))
    assert excursion_length_profile(encode(m)) == excursion_length_profile(encode(m.conjugate(perm)))


def test_profile_examples():
    assert excursion_length_profile(LatticePath((0, 1, 0, 1, 0))) == {0: (2, 2)}
    assert excursion_length_profile(LatticePath((0, 1, 2, 1, 0))) == {0: (4,), 1: (2,)}


@pytest.mark.parametrize("values", [(0, 1), (0, 1, 1), (1, 0, 1), (0, 1, 0, -1, 0), (0, 2, 0), (0, 1, 2)])
def test_invalid_paths_rejected(values):
    with pytest.raises(PathError):
        LatticePath(values)


def test_rescale_arithmetic():
    g = rescale(LatticePath((0, 1, 2, 1, 0)))
    np.testing.assert_allclose(g.values, [0, 1 / np.sqrt(2), 2 / np.sqrt(2), 1 / np.sqrt(2), 0])
    assert g.zeta == 1.0 and g.N == 4
    assert g.values[0] == 0 and g.values[-1] == 0


def test_path_json():
    p = LatticePath((0, 1, 0, 1, 0))
    assert json.loads(p.to_json()) == {"n": 2, "values": [0, 1, 0, 1, 0]}
    assert LatticePath.from_json(p.to_json()) == p
    with pytest.raises(PathError):
        LatticePath.from_json('{"n": 3, "values": [0, 1, 0, 1, 0]}')


def test_rescaled_sup_is_order_one():
    # maxima of rescaled encodings stay on the unit scale as n grows
    rng = np.random.default_rng(8)
    maxima = [rescale(encode(sample_uniform_acyclic(4000, rng))).max() for _ in range(40)]
    assert 1.0 < np.median(maxima) < 4.0
