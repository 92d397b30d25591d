import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from robust_sdma.core import ConfigurationError
from robust_sdma.feedback import (
    Constellation,
    IndexMapping,
    check_stochastic,
    csit_transition,
    gray,
    hamming_feedback,
    inverse_gray,
    load_matrix_csv,
    multi_symbol_transition,
    neighbor_set,
    parametric_nn_transition,
    psk_transition_matrix,
    psk_transition_monte_carlo,
    save_matrix_csv,
    shortened_hamming,
    transmit_index,
    transmit_indices,
)

from strategies import seeds


def test_constellation_points():
    c = Constellation(8)
    assert c.bits == 3
    np.testing.assert_allclose(np.abs(c.points), 1.0)
    ang = np.angle(c.points) % (2 * np.pi)
    assert np.all(np.diff(ang) > 0)
    with pytest.raises(ConfigurationError):
        Constellation(6)
    with pytest.raises(ConfigurationError):
        Constellation(1)


def test_bpsk_matches_gaussian_tail():
    for snr_db in (-3.0, 0.0, 5.0):
        p = psk_transition_matrix(2, snr_db)
        q = stats.norm.sf(np.sqrt(2 * 10 ** (snr_db / 10)))
        assert p[0, 1] == pytest.approx(q, rel=1e-7)
    assert psk_transition_matrix(2, 0.0)[0, 1] == pytest.approx(0.0786, abs=5e-4)


def test_qpsk_matches_closed_form():
    # Gray QPSK: each quadrature branch errs independently with Q(sqrt(snr))
    s = 10 ** (7 / 10)
    q = stats.norm.sf(np.sqrt(s))
    p = psk_transition_matrix(4, 7.0)
    assert p[0, 0] == pytest.approx((1 - q) ** 2, rel=1e-7)
    assert p[0, 1] == pytest.approx(q * (1 - q), rel=1e-7)
    assert p[0, 2] == pytest.approx(q * q, rel=1e-6)


@pytest.mark.parametrize("order,snr_db", [(4, 3.0), (8, 10.0), (16, 15.0)])
def test_psk_matches_monte_carlo(order, snr_db):
    p = psk_transition_matrix(order, snr_db)
    emp = psk_transition_monte_carlo(order, snr_db, 1_000_000, np.random.default_rng(order))
    np.testing.assert_allclose(emp, p[0], atol=4 * np.sqrt(0.25 / 1e6))


@pytest.mark.parametrize("order", [2, 4, 8, 32])
@pytest.mark.parametrize("snr_db", [0.5, 10.0, 25.0])
def test_psk_rows_stochastic_diag_max(order, snr_db):
    p = psk_transition_matrix(order, snr_db)
    check_stochastic(p)
    np.testing.assert_array_equal(np.argmax(p, axis=1), np.arange(order))


def test_psk_rejects_nonfinite_snr():
    with pytest.raises(ConfigurationError):
        psk_transition_matrix(8, np.inf)


def test_8psk_10db_neighbor_set():
    p = psk_transition_matrix(8, 10.0)
    for i in range(8):
        members, n_n = neighbor_set(p, i, 0.03)
        assert n_n == 3
        assert set(members) == {i, (i + 1) % 8, (i - 1) % 8}


def test_parametric_rows():
    p = parametric_nn_transition(8, 0.2)
    np.testing.assert_allclose(p[0], [0.8, 0.1, 0, 0, 0, 0, 0, 0.1])
    np.testing.assert_array_equal(parametric_nn_transition(8, 0.0), np.eye(8))
    assert np.all(p.sum(axis=1) == 1.0)
    np.testing.assert_allclose(parametric_nn_transition(2, 0.3), [[0.7, 0.3], [0.3, 0.7]])
    with pytest.raises(ConfigurationError):
        parametric_nn_transition(8, 1.0)


def test_neighbor_set_examples():
    assert neighbor_set(np.eye(8), 3, 0.2)[1] == 1
    members, n_n = neighbor_set(parametric_nn_transition(8, 0.2), 0, 0.05)
    assert n_n == 3 and members[0] == 0


def test_csit_identity_mapping():
    p = psk_transition_matrix(8, 5.0)
    np.testing.assert_array_equal(csit_transition(p, IndexMapping.identity(8)), p)


def test_csit_reversal_index_chasing():
    p = np.array([
        [0.7, 0.2, 0.05, 0.05],
        [0.1, 0.6, 0.2, 0.1],
        [0.0, 0.3, 0.5, 0.2],
        [0.25, 0.25, 0.25, 0.25],
    ])
    xi = IndexMapping(np.array([3, 2, 1, 0]))
    got = csit_transition(p, xi)
    for i in range(4):
        for j in range(4):
            assert got[i, j] == p[3 - i, 3 - j]
    with pytest.raises(ValueError):
        csit_transition(p, IndexMapping.identity(3))


def test_mapping_inverse_and_csv(tmp_path):
    xi = IndexMapping.random(16, np.random.default_rng(0))
    np.testing.assert_array_equal(xi.forward[xi.inverse], np.arange(16))
    xi.to_csv(tmp_path / "m.csv")
    back = IndexMapping.from_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.forward, xi.forward)
    with pytest.raises(ValueError):
        IndexMapping(np.array([0, 0, 1]))


def test_matrix_csv_roundtrip(tmp_path):
    p = psk_transition_matrix(8, 7.3)
    save_matrix_csv(tmp_path / "p.csv", p)
    np.testing.assert_array_equal(load_matrix_csv(tmp_path / "p.csv"), p)


def test_transmit_noiseless(rng):
    xi = IndexMapping.random(8, rng)
    sent = rng.integers(8, size=1000)
    np.testing.assert_array_equal(transmit_indices(sent, xi, np.eye(8), rng), sent)


def test_transmit_frequencies(rng):
    p = parametric_nn_transition(8, 0.2)
    xi = IndexMapping.random(8, rng)
    rx = transmit_indices(np.full(1_000_000, 5), xi, p, rng)
    freq = np.bincount(rx, minlength=8) / rx.size
    np.testing.assert_allclose(freq, csit_transition(p, xi)[5], atol=0.002)


def test_transmit_chi_square(rng):
    p = psk_transition_matrix(8, 6.0)
    xi = IndexMapping.random(8, rng)
    row = csit_transition(p, xi)[2]
    rx = transmit_indices(np.full(1_000_000, 2), xi, p, rng)
    obs = np.bincount(rx, minlength=8)
    keep = row * rx.size > 5
    exp = row[keep] * rx.size
    chi = stats.chisquare(obs[keep], exp * obs[keep].sum() / exp.sum())
    assert chi.pvalue > 0.01


def test_transmit_deterministic():
    p = parametric_nn_transition(8, 0.2)
    xi = IndexMapping.identity(8)
    a = [transmit_index(3, xi, p, np.random.default_rng(9)) for _ in range(3)]
    b = transmit_indices(np.arange(8), xi, p, np.random.default_rng(9))
    c = transmit_indices(np.arange(8), xi, p, np.random.default_rng(9))
    assert len(set(a)) == 1
    np.testing.assert_array_equal(b, c)
    with pytest.raises(IndexError):
        transmit_index(8, xi, p, np.random.default_rng(0))


def test_multi_symbol_kron():
    p = parametric_nn_transition(4, 0.2)
    pp = multi_symbol_transition(p, 2)
    check_stochastic(pp)
    # composite point (a, b) = 4a + b
    assert pp[4 * 1 + 2, 4 * 2 + 3] == pytest.approx(p[1, 2] * p[2, 3])


@given(seeds, st.floats(0.0, 0.9))
def test_csit_equivariance(seed, p_e):
    rng = np.random.default_rng(seed)
    p = parametric_nn_transition(8, p_e) if seed % 2 else psk_transition_matrix(8, 4.0)
    xi = IndexMapping.random(8, rng)
    sigma = rng.permutation(8)
    relabelled = IndexMapping(xi.forward[sigma])
    np.testing.assert_array_equal(csit_transition(p, relabelled),
                                  csit_transition(p, xi)[np.ix_(sigma, sigma)])
    check_stochastic(csit_transition(p, relabelled))


@given(st.sampled_from([2, 4, 8, 16]), st.floats(0.0, 0.99))
def test_parametric_stochastic(order, p_e):
    check_stochastic(parametric_nn_transition(order, p_e))


# --- Hamming baseline --------------------------------------------------------


def test_hamming_74_parameters():
    code = shortened_hamming(7)
    assert (code.n, code.k) == (7, 4)
    words = np.array([code.encode(d) for d in itertools.product([0, 1], repeat=4)])
    dist = [np.sum(a != b) for a, b in itertools.combinations(words, 2)]
    assert min(dist) == 3
    assert np.all(code.syndrome(words) == 0)


@pytest.mark.parametrize("n,k", [(3, 1), (4, 1), (5, 2), (6, 3), (8, 4), (12, 8), (15, 11)])
def test_shortened_sizes(n, k):
    code = shortened_hamming(n)
    assert (code.n, code.k) == (n, k)


def test_too_small_block():
    with pytest.raises(ConfigurationError):
        shortened_hamming(2)


@pytest.mark.parametrize("n", [5, 7, 12, 15])
def test_single_error_corrected(n):
    code = shortened_hamming(n)
    for data in itertools.product([0, 1], repeat=code.k):
        word = code.encode(data)
        np.testing.assert_array_equal(code.decode(word), data)
        for pos in range(n):
            bad = word.copy()
            bad[pos] ^= 1
            np.testing.assert_array_equal(code.decode(bad), data)


def test_double_error_matches_ml_oracle():
    code = shortened_hamming(7)
    book = {tuple(code.encode(d)): np.array(d) for d in itertools.product([0, 1], repeat=4)}
    words = np.array(list(book))
    for data in itertools.product([0, 1], repeat=4):
        word = code.encode(data)
        for a, b in itertools.combinations(range(7), 2):
            bad = word.copy()
            bad[[a, b]] ^= 1
            # a perfect code decodes every word to its unique nearest codeword
            near = words[np.argmin(np.sum(words != bad, axis=1))]
            out = code.decode(bad)
            np.testing.assert_array_equal(out, book[tuple(near)])
            assert not np.array_equal(out, data)


def test_hamming_feedback_clean_and_noisy(rng):
    data = np.array([1, 0, 1, 1])
    np.testing.assert_array_equal(hamming_feedback(data, 8, rng, bit_error_rate=0.0), data)
    np.testing.assert_array_equal(
        hamming_feedback(data, 4, rng, bits_per_symbol=2, symbol_matrix=np.eye(4)), data)
    # block error rate of the (7,4) code at bit error p: 1 - (1-p)^7 - 7p(1-p)^6
    p, n = 0.05, 20_000
    errs = sum(not np.array_equal(hamming_feedback(data, 7, rng, bit_error_rate=p), data)
               for _ in range(n))
    want = 1 - (1 - p) ** 7 - 7 * p * (1 - p) ** 6
    assert errs / n == pytest.approx(want, abs=4 * np.sqrt(want / n))


def test_hamming_feedback_snr_path(rng):
    data = np.array([0, 1, 1, 0])
    out = hamming_feedback(data, 7, rng, feedback_snr_db=30.0)
    np.testing.assert_array_equal(out, data)
    with pytest.raises(ConfigurationError):
        hamming_feedback(data, 7, rng)
    with pytest.raises(ConfigurationError):
        hamming_feedback(data[:3], 7, rng, bit_error_rate=0.0)


def test_gray_labels_adjacent():
    g = gray(np.arange(16))
    assert np.all(np.array([bin(int(a ^ b)).count("1") for a, b in zip(g, np.roll(g, -1))]) == 1)
    np.testing.assert_array_equal(inverse_gray(g), np.arange(16))
