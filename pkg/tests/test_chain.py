import math
from collections import Counter
from fractions import Fraction as F

import numpy as np
import pytest

from amap.chain import (
    ChainState,
    run_chain,
    step,
    step_law,
    subtree_of,
    transition_matrix,
)
from amap.mapping_core import Mapping, MappingError, enumerate_acyclic, validate_acyclic


def brute_kernel(m):
    # every (i, x) choice that keeps the map acyclic, each with weight 1/(n * #valid x)
    law = Counter()
    for i in range(1, m.n + 1):
        valid = []
        for x in range(1, m.n + 1):
            img = list(m.image)
            img[i - 1] = x
            cand = Mapping(m.n, tuple(img))
            if validate_acyclic(cand):
                valid.append(cand)
        for cand in valid:
            law[cand] += F(1, m.n * len(valid))
    return dict(law)


def test_subtree_hand_traced():
    m = Mapping(5, (1, 1, 2, 2, 3))
    assert subtree_of(m, 3) == {3, 5}
    assert subtree_of(m, 5) == {5}
    assert subtree_of(m, 1) == {1, 2, 3, 4, 5}
    with pytest.raises(MappingError):
        subtree_of(m, 6)


def test_step_law_two_points():
    law = step_law(Mapping(2, (1, 2)))
    assert law == {Mapping(2, (1, 2)): F(1, 2), Mapping(2, (1, 1)): F(1, 4), Mapping(2, (2, 2)): F(1, 4)}


def test_root_of_single_component_can_only_stay():
    # i = 1 owns the whole tree, so its only allowed image is itself
    m = Mapping(2, (1, 1))
    law = step_law(m)
    assert law[m] == F(3, 4)
    assert law[Mapping(2, (1, 2))] == F(1, 4)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_step_law_equals_acyclic_preserving_redraw(n):
    # the allowed set is exactly the images that keep the map acyclic
    for m in enumerate_acyclic(n):
        assert step_law(m) == brute_kernel(m)


def test_transition_matrix_two_points():
    tm = transition_matrix(2)
    order = [Mapping(2, (1, 1)), Mapping(2, (2, 2)), Mapping(2, (1, 2))]
    rows = [[tm.prob(a, b) for b in order] for a in order]
    assert rows == [[F(3, 4), 0, F(1, 4)], [0, F(3, 4), F(1, 4)], [F(1, 4), F(1, 4), F(1, 2)]]


def test_transition_matrix_one_point():
    tm = transition_matrix(1)
    assert tm.to_dense() == [[F(1)]]


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_transition_matrix_exactly_symmetric(n):
    tm = transition_matrix(n)
    assert tm.size == (n + 1) ** (n - 1)
    assert tm.is_stochastic()
    assert tm.is_symmetric()


def test_transition_matrix_bounds():
    with pytest.raises(MappingError):
        transition_matrix(6)


def test_uniform_is_stationary_numerically():
    p = transition_matrix(4).to_float()
    pi = np.full(p.shape[0], 1 / p.shape[0])
    np.testing.assert_allclose(pi @ p, pi, atol=1e-14)


def test_step_stays_acyclic():
    rng = np.random.default_rng(0)
    m = Mapping(30, tuple(range(1, 31)))
    for _ in range(300):
        m = step(m, rng)
        assert validate_acyclic(m)


def test_chain_state_matches_step_law():
    # drive ChainState.apply with every (i, u1) cell and compare with the exact law
    m = Mapping(4, (1, 1, 2, 2))
    law = step_law(m)
    emp = Counter()
    rng = np.random.default_rng(9)
    draws = 40000
    for _ in range(draws):
        s = ChainState(m)
        s.apply(int(rng.integers(1, 5)), rng.random(), rng.random())
        emp[s.mapping()] += 1
    assert set(emp) <= set(law)
    for state, p in law.items():
        p = float(p)
        assert abs(emp[state] / draws - p) < 4 * math.sqrt(p * (1 - p) / draws) + 1e-12


def test_run_chain_zero_steps():
    m = Mapping(3, (1, 1, 2))
    traj = run_chain(m, 0, np.random.default_rng(0), observers=["fixed-points", "height"])
    assert traj.final == m
    assert traj.times == [0]
    assert traj.series == {"fixed-points": [1], "height": [2]}


def test_run_chain_series_length():
    rng = np.random.default_rng(1)
    m0 = Mapping(100, tuple(range(1, 101)))
    traj = run_chain(m0, 1000, rng, observers=["fixed-points"], stride=10)
    assert len(traj.series["fixed-points"]) == 100
    assert traj.times[0] == 10 and traj.times[-1] == 1000


def test_run_chain_rejects_bad_arguments():
    m = Mapping(2, (1, 2))
    rng = np.random.default_rng(0)
    with pytest.raises(MappingError):
        run_chain(m, -1, rng)
    with pytest.raises(MappingError):
        run_chain(m, 5, rng, stride=0)


def test_run_chain_deterministic_given_seed():
    m = Mapping(20, tuple(range(1, 21)))
    a = run_chain(m, 500, np.random.default_rng(42), observers=["height"])
    b = run_chain(m, 500, np.random.default_rng(42), observers=["height"])
    assert a.final == b.final and a.series == b.series


@pytest.mark.slow
def test_long_run_visits_states_uniformly():
    states = enumerate_acyclic(3)
    counts = Counter()
    stride = 5
    run_chain(Mapping(3, (1, 2, 3)), 200_000, np.random.default_rng(3), stride=stride,
              on_state=lambda s: counts.update([tuple(s.image[1:])]))
    total = sum(counts.values())
    assert len(counts) == len(states)
    # thinned chain is close to independent; allow a generous band
    sigma = math.sqrt(total * (1 / 16) * (15 / 16))
    for s in states:
        assert abs(counts[s.image] - total / 16) < 5 * sigma
