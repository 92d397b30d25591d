"""Noisy CSIT feedback link.

A codeword index ``i`` is carried by constellation point ``xi[i]``; the
link flips point ``k`` to point ``l`` with probability ``P_ch[k, l]``.
Two channel models are provided: exact PSK over AWGN with ML detection,
and a parametric nearest-neighbour model fixed by its symbol error rate.
Several feedback symbols combine through a Kronecker product.

The naive coded baseline protects a shorter payload with a shortened
Hamming code; see :func:`hamming_feedback`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .core import ConfigurationError

__all__ = [
    "Constellation",
    "IndexMapping",
    "psk_transition_matrix",
    "psk_transition_monte_carlo",
    "parametric_nn_transition",
    "multi_symbol_transition",
    "check_stochastic",
    "csit_transition",
    "transmit_index",
    "transmit_indices",
    "neighbor_set",
    "HammingCode",
    "shortened_hamming",
    "gray",
    "inverse_gray",
    "hamming_feedback",
    "save_matrix_csv",
    "load_matrix_csv",
]


@dataclass(frozen=True)
class Constellation:
    """Unit-modulus PSK constellation with ``order`` points."""

    order: int

    def __post_init__(self):
        if self.order < 2 or self.order & (self.order - 1):
            raise ConfigurationError(f"PSK order {self.order} is not a power of two >= 2")

    @property
    def bits(self) -> int:
        return self.order.bit_length() - 1

    @property
    def points(self) -> np.ndarray:
        return np.exp(2j * np.pi * np.arange(self.order) / self.order)


@dataclass(frozen=True)
class IndexMapping:
    """Bijection codeword index -> constellation point.

    ``forward[i]`` is the point carrying codeword ``i``; ``inverse[p]`` the
    codeword carried by point ``p``.
    """

    forward: np.ndarray

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.intp)
        n = fwd.size
        if not np.array_equal(np.sort(fwd), np.arange(n)):
            raise ValueError("index mapping is not a permutation")
        inv = np.empty(n, dtype=np.intp)
        inv[fwd] = np.arange(n)
        fwd.flags.writeable = False
        inv.flags.writeable = False
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "inverse", inv)

    @classmethod
    def identity(cls, n: int) -> "IndexMapping":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "IndexMapping":
        return cls(rng.permutation(n))

    @classmethod
    def from_inverse(cls, inverse) -> "IndexMapping":
        inverse = np.asarray(inverse, dtype=np.intp)
        fwd = np.empty_like(inverse)
        fwd[inverse] = np.arange(inverse.size)
        return cls(fwd)

    def __len__(self):
        return self.forward.size

    def to_csv(self, path) -> None:
        lines = ["codeword,point"] + [f"{i},{p}" for i, p in enumerate(self.forward)]
        with open(path, "w", newline="") as f:
            f.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "IndexMapping":
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.intp, ndmin=2)
        fwd = np.empty(data.shape[0], dtype=np.intp)
        fwd[data[:, 0]] = data[:, 1]
        return cls(fwd)


def check_stochastic(p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"transition matrix must be square, got {p.shape}")
    if np.any(p < -tol) or np.any(p > 1 + tol):
        raise ValueError("transition probabilities outside [0, 1]")
    if np.max(np.abs(p.sum(axis=1) - 1.0)) > tol:
        raise ValueError("transition matrix rows do not sum to 1")
    return p


def _phase_pdf(psi, snr):
    """Density of the received phase for a point at angle 0, CN(0,1) noise."""
    c = np.cos(psi)
    a = np.sqrt(snr) * c
    tail = np.sqrt(np.pi) * a * special.erfc(-a) * np.exp(-snr * np.sin(psi) ** 2)
    return (np.exp(-snr) + tail) / (2.0 * np.pi)


@lru_cache(maxsize=64)
def _psk_row(order: int, snr_db: float) -> tuple:
    snr = 10.0 ** (snr_db / 10.0)
    half = np.pi / order
    row = []
    for l in range(order):
        centre = 2.0 * np.pi * l / order
        lo, hi = centre - half, centre + half
        if lo > np.pi:
            lo, hi = lo - 2 * np.pi, hi - 2 * np.pi
        if hi > np.pi:
            # sector straddles +-pi: split at the wrap
            pieces = [(lo, np.pi), (-np.pi, hi - 2 * np.pi)]
        else:
            pieces = [(lo, hi)]
        val = 0.0
        for a, b in pieces:
            val += integrate.quad(_phase_pdf, a, b, args=(snr,), epsrel=1e-8, epsabs=1e-13,
                                  limit=200)[0]
        row.append(val)
    row = np.clip(np.array(row), 0.0, None)
    return tuple(row / row.sum())


def psk_transition_matrix(order: int, snr_db: float) -> np.ndarray:
    """ML-detected PSK symbol transition matrix at ``snr_db`` (Es/N0).

    Entry ``[k, l]`` is the probability of deciding point ``l`` when ``k``
    was sent, from numerical integration of the received-phase density
    over the decision sector of ``l``. The matrix is circulant.
    """
    Constellation(order)
    if not np.isfinite(snr_db):
        raise ConfigurationError(f"feedback SNR must be finite, got {snr_db}")
    row = np.array(_psk_row(int(order), float(snr_db)))
    idx = (np.arange(order)[None, :] - np.arange(order)[:, None]) % order
    return row[idx]


def psk_transition_monte_carlo(order, snr_db, n_samples, rng) -> np.ndarray:
    """Empirical PSK transition row (for point 0) by direct simulation."""
    snr = 10.0 ** (snr_db / 10.0)
    noise = (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples))
    r = np.sqrt(snr) + noise * np.sqrt(0.5)
    dec = np.round(np.angle(r) / (2 * np.pi / order)).astype(int) % order
    return np.bincount(dec, minlength=order) / n_samples


def parametric_nn_transition(order: int, p_e: float) -> np.ndarray:
    """Nearest-neighbour error model with symbol error rate ``p_e``.

    Errors land on one of the two ring-adjacent points with probability
    ``p_e / 2`` each (on the single other point when ``order == 2``).
    """
    if not 0.0 <= p_e < 1.0:
        raise ConfigurationError(f"symbol error rate {p_e!r} must lie in [0, 1)")
    if order < 2:
        raise ConfigurationError(f"constellation order {order} < 2")
    p = np.eye(order) * (1.0 - p_e)
    k = np.arange(order)
    if order == 2:
        p[k, 1 - k] = p_e
    else:
        p[k, (k + 1) % order] += p_e / 2
        p[k, (k - 1) % order] += p_e / 2
    return p


def multi_symbol_transition(per_symbol: np.ndarray, n_symbols: int) -> np.ndarray:
    """Transition matrix of ``n_symbols`` independent uses of one symbol channel.

    Composite point ``p`` has digits ``(s_0, ..., s_{n-1})`` in base
    ``order`` with ``s_0`` most significant.
    """
    p = np.ones((1, 1))
    for _ in range(n_symbols):
        p = np.kron(p, per_symbol)
    return p


def csit_transition(p_ch: np.ndarray, xi: IndexMapping) -> np.ndarray:
    """Codeword-level transition ``P_csit[i, j] = P_ch[xi(i), xi(j)]``."""
    p_ch = np.asarray(p_ch)
    if p_ch.shape != (len(xi), len(xi)):
        raise ValueError(
            f"mapping of size {len(xi)} does not match matrix of shape {p_ch.shape}"
        )
    return p_ch[np.ix_(xi.forward, xi.forward)]


def _draw_points(p_ch, points, u):
    cdf = np.cumsum(p_ch[points], axis=1)
    out = np.sum(cdf <= u[:, None] * cdf[:, -1:], axis=1)
    return np.minimum(out, p_ch.shape[1] - 1)


def transmit_indices(sent, xi: IndexMapping, p_ch, rng: np.random.Generator) -> np.ndarray:
    """Pass an array of codeword indices through the feedback link.

    Exactly one uniform draw is consumed per index.
    """
    sent = np.asarray(sent, dtype=np.intp)
    u = rng.random(sent.size)
    points = _draw_points(np.asarray(p_ch), xi.forward[sent], u)
    return xi.inverse[points]


def transmit_index(sent: int, xi: IndexMapping, p_ch, rng: np.random.Generator) -> int:
    """Received codeword index for one sent index."""
    if not 0 <= sent < len(xi):
        raise IndexError(f"sent index {sent} outside 0..{len(xi) - 1}")
    return int(transmit_indices([sent], xi, p_ch, rng)[0])


def neighbor_set(p_ch: np.ndarray, i: int, eps: float) -> tuple[np.ndarray, int]:
    """Smallest point set around ``i`` holding at least ``1 - eps`` of row ``i``.

    Point ``i`` goes in first, then the rest in descending probability.
    """
    if not 0.0 < eps < 1.0:
        raise ConfigurationError(f"eps={eps!r} must lie in (0, 1)")
    row = np.asarray(p_ch)[i]
    rest = np.delete(np.arange(row.size), i)
    rest = rest[np.argsort(-row[rest], kind="stable")]
    order = np.concatenate([[i], rest])
    csum = np.cumsum(row[order])
    count = int(np.searchsorted(csum, 1.0 - eps - 1e-12)) + 1
    members = order[:count]
    return members, members.size


def save_matrix_csv(path, p: np.ndarray) -> None:
    np.savetxt(path, np.asarray(p), delimiter=",", fmt="%.17g")


def load_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


# --- Hamming-coded baseline -------------------------------------------------


def gray(n):
    n = np.asarray(n)
    return n ^ (n >> 1)


def inverse_gray(g):
    g = np.array(g, copy=True)
    shift = g >> 1
    while np.any(shift):
        g ^= shift
        shift >>= 1
    return g


@dataclass(frozen=True)
class HammingCode:
    """Systematic (shortened) Hamming code: ``k`` data bits then ``n - k`` parity."""

    n: int
    k: int
    parity: np.ndarray  # (k, n - k) generator parity part
    check: np.ndarray  # (n - k, n) parity-check matrix

    def encode(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=np.uint8) & 1
        return np.concatenate([data, (data @ self.parity) % 2], axis=-1).astype(np.uint8)

    def syndrome(self, word) -> np.ndarray:
        return (np.asarray(word, dtype=np.int64) @ self.check.T) % 2

    def decode(self, word) -> np.ndarray:
        """Single-error correction; unmatched syndromes leave the word as is."""
        word = np.array(word, dtype=np.uint8) & 1
        s = self.syndrome(word)
        if np.any(s):
            hit = np.flatnonzero(np.all(self.check.T == s, axis=1))
            if hit.size:
                word[hit[0]] ^= 1
        return word[: self.k]


def shortened_hamming(n: int) -> HammingCode:
    """Shortened ``(2^m - 1, 2^m - 1 - m)`` Hamming code with block length ``n``.

    ``m`` is the smallest integer with ``2^m - 1 >= n``, so ``k = n - m``.
    """
    if n < 3:
        raise ConfigurationError(f"block of {n} coded bits is too small for a Hamming code")
    m = 2
    while 2**m - 1 < n:
        m += 1
    k = n - m
    if k < 1:
        raise ConfigurationError(f"block of {n} coded bits leaves no payload")
    cols = [c for c in range(1, 2**m) if c & (c - 1)][:k]  # non-unit columns for data
    bits = lambda c: [(c >> b) & 1 for b in range(m)]
    a = np.array([bits(c) for c in cols], dtype=np.uint8)  # (k, m)
    check = np.concatenate([a.T, np.eye(m, dtype=np.uint8)], axis=1)
    return HammingCode(n=n, k=k, parity=a, check=check)


def _bits_of(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - b)) & 1 for b in range(width)], dtype=np.uint8)


def hamming_feedback(
    info_bits,
    total_symbol_budget: int,
    rng: np.random.Generator,
    *,
    bits_per_symbol: int = 1,
    feedback_snr_db: float | None = None,
    bit_error_rate: float | None = None,
    symbol_matrix: np.ndarray | None = None,
) -> np.ndarray:
    """Send ``info_bits`` through a Hamming-protected feedback link.

    The code has ``total_symbol_budget * bits_per_symbol`` coded bits and
    ``len(info_bits)`` must equal its payload size. By default each coded
    bit rides a BPSK symbol with error probability ``bit_error_rate`` or
    ``Q(sqrt(2 * snr))``. With ``symbol_matrix`` (an ``M``-ary transition
    matrix, ``M = 2**bits_per_symbol``) the coded bits are Gray-labelled
    onto ``M``-ary symbols and pass through that matrix instead.
    """
    n_coded = total_symbol_budget * bits_per_symbol
    code = shortened_hamming(n_coded)
    info = np.asarray(info_bits, dtype=np.uint8)
    if info.size != code.k:
        raise ConfigurationError(
            f"{info.size} payload bits given, code ({code.n},{code.k}) carries {code.k}"
        )
    word = code.encode(info)
    if symbol_matrix is None:
        if bits_per_symbol != 1:
            raise ConfigurationError("bit-level channel needs bits_per_symbol == 1")
        if bit_error_rate is None:
            if feedback_snr_db is None:
                raise ConfigurationError("give feedback_snr_db or bit_error_rate")
            snr = 10.0 ** (feedback_snr_db / 10.0)
            bit_error_rate = 0.5 * special.erfc(np.sqrt(snr))  # Q(sqrt(2 snr))
        flips = (rng.random(n_coded) < bit_error_rate).astype(np.uint8)
        received = word ^ flips
    else:
        b = bits_per_symbol
        labels = word.reshape(total_symbol_budget, b) @ (1 << np.arange(b - 1, -1, -1))
        points = inverse_gray(labels)
        rx_points = _draw_points(np.asarray(symbol_matrix), points,
                                 rng.random(total_symbol_budget))
        rx_labels = gray(rx_points)
        received = np.concatenate([_bits_of(int(v), b) for v in rx_labels])
    return code.decode(received)
