import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_sdma.assignment import (
    ComplexityError,
    TspInstance,
    build_tsp,
    cnna,
    cycle_cost,
    exhaustive_tsp,
    expected_distortion,
    mapping_to_tour,
    pole,
    ring_to_grid,
    solve,
    tour_to_mapping,
    two_opt,
)
from robust_sdma.codebook import build_codebook, codeword_priors
from robust_sdma.feedback import IndexMapping, parametric_nn_transition

from strategies import seeds


def random_case(seed, n_t=4, c_fb=3):
    rng = np.random.default_rng(seed)
    cb = build_codebook(rng, n_t, c_fb)
    priors = rng.dirichlet(np.ones(cb.size))
    return rng, cb, priors


def oracle_distortion(xi, priors, p_ch, cb):
    total = 0.0
    n = cb.size
    for i in range(n):
        for j in range(n):
            c = abs(np.vdot(cb.entries[i], cb.entries[j])) ** 2
            total += priors[i] * p_ch[xi.forward[i], xi.forward[j]] * (1 - c)
    return total


def constant(n, d=1.0):
    return TspInstance(d * (np.ones((n, n)) - np.eye(n)))


def test_noiseless_distortion_zero():
    _, cb, priors = random_case(0)
    xi = IndexMapping.random(8, np.random.default_rng(1))
    assert expected_distortion(xi, priors, np.eye(8), cb) == 0.0


def test_single_basis_every_mapping_equal():
    cb = build_codebook(np.random.default_rng(2), 4, 2)
    p = parametric_nn_transition(4, 0.3)
    vals = [expected_distortion(IndexMapping.random(4, np.random.default_rng(s)),
                                np.full(4, 0.25), p, cb) for s in range(20)]
    np.testing.assert_allclose(vals, 0.3, atol=1e-12)


def test_cnna_mapping_beats_identity_and_matches_oracle():
    for seed in range(5):
        _, cb, priors = random_case(seed)
        p = parametric_nn_transition(8, 0.2)
        xi_c = tour_to_mapping(cnna(build_tsp(cb, priors, 0.2)), 8)
        xi_i = IndexMapping.identity(8)
        d_c = expected_distortion(xi_c, priors, p, cb)
        d_i = expected_distortion(xi_i, priors, p, cb)
        assert d_c == pytest.approx(oracle_distortion(xi_c, priors, p, cb), abs=1e-12)
        assert d_i == pytest.approx(oracle_distortion(xi_i, priors, p, cb), abs=1e-12)
        assert d_c <= d_i + 1e-15


def test_constant_instance():
    cb = build_codebook(np.random.default_rng(0), 4, 2)
    inst = build_tsp(cb, np.full(4, 0.25), 0.2)
    off = inst.dist[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(off, 0.2 / 4, atol=1e-15)
    for s in range(5):
        assert cycle_cost(np.random.default_rng(s).permutation(4), inst) == pytest.approx(0.2)


@given(seeds, st.floats(0.01, 0.99))
def test_reduction_identity(seed, p_e):
    rng, cb, priors = random_case(seed)
    inst = build_tsp(cb, priors, p_e)
    xi = IndexMapping.random(8, rng)
    p = parametric_nn_transition(8, p_e)
    assert cycle_cost(mapping_to_tour(xi), inst) == pytest.approx(
        expected_distortion(xi, priors, p, cb), abs=1e-12)


def test_instance_validation():
    with pytest.raises(ValueError):
        TspInstance(np.array([[0, 1], [2, 0]], float))
    with pytest.raises(ValueError):
        TspInstance(np.array([[1, 1], [1, 0]], float))
    with pytest.raises(ValueError):
        TspInstance(np.array([[0, -1], [-1, 0]], float))


def test_cycle_cost_examples():
    assert cycle_cost([0, 1, 2], constant(3)) == 3.0
    with pytest.raises(ValueError):
        cycle_cost([0, 0, 1], constant(3))


@given(seeds, st.integers(0, 7))
def test_cycle_cost_rotation_reflection(seed, shift):
    _, cb, priors = random_case(seed)
    inst = build_tsp(cb, priors, 0.2)
    order = np.random.default_rng(seed).permutation(8)
    c = cycle_cost(order, inst)
    assert cycle_cost(np.roll(order, shift), inst) == pytest.approx(c, abs=1e-15)
    assert cycle_cost(order[::-1], inst) == pytest.approx(c, abs=1e-15)


def test_cnna_constant_instance():
    t = cnna(constant(4, 0.7))
    assert t.cost == pytest.approx(4 * 0.7)
    assert sorted(t.order) == [0, 1, 2, 3]


def test_cnna_recovers_ring():
    rng = np.random.default_rng(3)
    n = 12
    ring = rng.permutation(n)
    d = 10 + rng.random((n, n))
    d = (d + d.T) / 2
    for k in range(n):
        a, b = ring[k], ring[(k + 1) % n]
        d[a, b] = d[b, a] = 1.0
    np.fill_diagonal(d, 0)
    inst = TspInstance(d)
    t = cnna(inst)
    assert t.cost == pytest.approx(n * 1.0)
    pos = np.empty(n, int)
    pos[t.order] = np.arange(n)
    steps = (pos[ring] - np.roll(pos[ring], 1)) % n
    assert np.all(steps == 1) or np.all(steps == n - 1)


def tie_instance(d10, d20):
    # start 0 -> 3 is the unique nearest hop; from 3, cities 1 and 2 tie
    d = np.array([
        [0, d10, d20, 0.5],
        [d10, 0, 6, 1],
        [d20, 6, 0, 1],
        [0.5, 1, 1, 0],
    ], float)
    return TspInstance(d)


def test_cnna_tie_rule():
    # the tie goes to the city with the smaller summed distance to {0, 3}
    assert list(cnna(tie_instance(2.0, 4.0), start=0).order[:3]) == [0, 3, 1]
    assert list(cnna(tie_instance(4.0, 2.0), start=0).order[:3]) == [0, 3, 2]


def test_cnna_starts():
    _, cb, priors = random_case(4)
    inst = build_tsp(cb, priors, 0.2)
    assert cnna(inst).order[0] == pole(inst)
    assert cnna(inst, start=5).order[0] == 5
    r = cnna(inst, start="random", rng=np.random.default_rng(0))
    assert sorted(r.order) == list(range(8))


def test_exhaustive_small_and_constant():
    d = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], float)
    assert exhaustive_tsp(TspInstance(d)).cost == 6.0
    assert exhaustive_tsp(constant(8, 0.5)).cost == pytest.approx(4.0)
    with pytest.raises(ComplexityError):
        exhaustive_tsp(constant(11))


def test_exhaustive_against_itertools_oracle():
    import itertools

    _, cb, priors = random_case(9, n_t=2, c_fb=3)
    inst = build_tsp(cb, priors, 0.2)
    best = min(cycle_cost((0,) + p, inst) for p in itertools.permutations(range(1, 8)))
    assert exhaustive_tsp(inst).cost == pytest.approx(best, abs=1e-15)


def test_sandwich_over_seeds():
    for seed in range(100):
        _, cb, priors = random_case(seed)
        inst = build_tsp(cb, priors, 0.2)
        c = cnna(inst)
        t = two_opt(inst, c)
        e = exhaustive_tsp(inst)
        assert e.cost <= t.cost + 1e-15 <= c.cost + 2e-15


@pytest.mark.parametrize("seed", range(0, 100, 7))
def test_cnna_within_ratio_on_gate_priors(seed):
    rng = np.random.default_rng(seed)
    cb = build_codebook(rng, 4, 3)
    inst = build_tsp(cb, codeword_priors(cb, 0.1, rng=rng), 0.2)
    assert cnna(inst).cost <= 1.2 * exhaustive_tsp(inst).cost


@pytest.mark.parametrize("n", [5, 7, 9])
def test_two_opt_above_exhaustive(n):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        d = rng.random((n, n))
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0)
        inst = TspInstance(d)
        t = two_opt(inst, cnna(inst))
        assert t.cost >= exhaustive_tsp(inst).cost - 1e-15
        assert t.cost <= cnna(inst).cost + 1e-15


def test_two_opt_keeps_optimum():
    _, cb, priors = random_case(1)
    inst = build_tsp(cb, priors, 0.2)
    e = exhaustive_tsp(inst)
    assert two_opt(inst, e).cost == pytest.approx(e.cost, abs=1e-15)


def test_tour_solution_cost_consistent():
    _, cb, priors = random_case(2)
    inst = build_tsp(cb, priors, 0.2)
    for solver in ("cnna", "two-opt", "exhaustive", "identity", "random"):
        t = solve(inst, solver, np.random.default_rng(0))
        assert t.cost == pytest.approx(cycle_cost(t.order, inst), abs=1e-12)
    with pytest.raises(ValueError):
        solve(inst, "genetic")


def test_tour_mapping_roundtrip():
    _, cb, priors = random_case(3)
    inst = build_tsp(cb, priors, 0.2)
    t = cnna(inst)
    xi = tour_to_mapping(t, 8)
    np.testing.assert_array_equal(mapping_to_tour(xi), t.order)
    ident = tour_to_mapping(solve(inst, "identity"), 8)
    np.testing.assert_array_equal(ident.forward, np.arange(8))
    with pytest.raises(ValueError):
        tour_to_mapping(t, 16)


def test_best_tour_beats_random_mappings():
    _, cb, priors = random_case(5)
    inst = build_tsp(cb, priors, 0.2)
    p = parametric_nn_transition(8, 0.2)
    best = expected_distortion(tour_to_mapping(exhaustive_tsp(inst), 8), priors, p, cb)
    rng = np.random.default_rng(6)
    for _ in range(100):
        assert best <= expected_distortion(IndexMapping.random(8, rng), priors, p, cb) + 1e-15


def test_ring_to_grid_steps():
    for order, n_sym in ((4, 2), (8, 2), (2, 4), (4, 3)):
        path = ring_to_grid(order**n_sym, order)
        assert sorted(path) == list(range(order**n_sym))
        digits = np.array([np.base_repr(int(p), order).zfill(n_sym) for p in path])
        for a, b in zip(digits[:-1], digits[1:]):
            diff = [(int(x, order) - int(y, order)) % order for x, y in zip(a, b)]
            changed = [x for x in diff if x]
            assert len(changed) == 1 and changed[0] in (1, order - 1)
    np.testing.assert_array_equal(ring_to_grid(8, 8), np.arange(8))
    with pytest.raises(ValueError):
        ring_to_grid(12, 8)
