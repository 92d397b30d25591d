"""Base-station processing per slot.

* :func:`schedule` picks one orthonormal set of the codebook and one user
  per covered vector; the received codeword is the precoder.
* :func:`build_rate_table` fixes, offline, the rate for each received
  index so that the conditional outage probability stays below ``eps``.
* :func:`mutual_info_exact` / :func:`mutual_info_highsnr` evaluate the
  scheduled user's mutual information.

Rate adaptation reads column ``I`` of ``P_csit`` (sent ``j`` given
received ``I``). For received index ``I`` it collects the neighbour set
greedily: ``I`` first, then the other codewords by descending
``P_csit[j, I]`` until the mass reaches ``1 - eps``. The worst member
``i*`` is the one farthest from ``I``. Since every non-self member has at
least the probability of the last one added, removing ``i*`` always drops
the mass below ``1 - eps``.

A table valid for a stricter target ``eps' < eps`` also meets ``eps``, so
each row keeps the best rate over all longer greedy prefixes too (each is
the greedy set for some ``eps' <= eps``). This makes rates monotone in
``eps``; ``RateTable.target`` records the ``eps'`` a row was built for.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook
from .core import MI_SATURATION, ConfigurationError, NormalizationError

__all__ = [
    "RateTable",
    "ScheduleOutcome",
    "NoFeedbackError",
    "build_rate_table",
    "outage_bound",
    "finite_snr_rate",
    "schedule",
    "mutual_info_exact",
    "mutual_info_highsnr",
    "sinr_exact",
]


class NoFeedbackError(RuntimeError):
    """No user fed back in this slot."""


@dataclass(frozen=True)
class RateTable:
    """Per received index: neighbour set, worst neighbour, residual outage, rate.

    ``rate`` is what the base station transmits at. ``rate_highsnr`` is the
    interference-limited rate before any finite-SNR back-off; both are
    equal when the table was built without a forward SNR.
    """

    ns_sets: tuple
    i_star: np.ndarray
    eps_res: np.ndarray
    rate: np.ndarray
    rate_highsnr: np.ndarray
    sin_star: np.ndarray
    p_star: np.ndarray
    tail: np.ndarray
    target: np.ndarray
    delta: float
    eps: float
    n_t: int

    def __len__(self):
        return self.rate.size

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["index", "ns_set", "i_star", "sin_star", "target", "eps_res", "rate_highsnr", "rate"])
            for i in range(len(self)):
                w.writerow([
                    i,
                    " ".join(str(j) for j in self.ns_sets[i]),
                    int(self.i_star[i]),
                    repr(float(self.sin_star[i])),
                    repr(float(self.target[i])),
                    repr(float(self.eps_res[i])),
                    repr(float(self.rate_highsnr[i])),
                    repr(float(self.rate[i])),
                ])


def _sin_matrix(cb):
    return cb.pairwise_sin if isinstance(cb, Codebook) else np.asarray(cb, dtype=float)


def finite_snr_rate(rate_highsnr, forward_snr_db: float, g_th: float, n_t: int):
    """Back off an interference-limited rate for finite forward SNR.

    The high-SNR rate guarantees ``sin(theta) <= s = 2^(-r/2)`` with the
    target probability. The exact SINR grows with the channel gain and with
    ``cos^2(theta)`` and is smallest when all other streams of the basis are
    active, so with gain at least ``g_th`` it is at least
    ``a (1 - s^2) / (1 + a s^2)`` where ``a = P g_th / n_t``.
    """
    r = np.asarray(rate_highsnr, dtype=float)
    a = 10.0 ** (forward_snr_db / 10.0) * g_th / n_t
    s2 = np.minimum(2.0 ** (-r), 1.0)
    return np.log2(1.0 + a * (1.0 - s2) / (1.0 + a * s2))


def build_rate_table(
    p_csit: np.ndarray,
    cb,
    delta: float,
    eps: float,
    n_t: int,
    *,
    forward_snr_db: float | None = None,
    g_th: float | None = None,
    i_star_override: dict | None = None,
) -> RateTable:
    """Rate per received index from the outage upper bound.

    ``cb`` is a :class:`Codebook` or a matrix of pairwise sines. With
    ``forward_snr_db`` (and ``g_th``) the rates are backed off with
    :func:`finite_snr_rate`. ``i_star_override`` maps a received index to a
    forced worst neighbour.
    """
    if not 0.0 < eps < 1.0:
        raise ConfigurationError(f"eps={eps!r} must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta={delta!r} must lie in (0, 1)")
    p = np.asarray(p_csit, dtype=float)
    sin = _sin_matrix(cb)
    n = p.shape[0]
    override = i_star_override or {}

    # descending order of each column, with the received index itself first
    key = -p.T.copy()
    key[np.arange(n), np.arange(n)] = -np.inf
    order = np.argsort(key, axis=1, kind="stable")
    mass = np.cumsum(np.take_along_axis(p.T, order, axis=1), axis=1)
    reach = mass >= 1.0 - eps - 1e-12
    if not np.all(reach[:, -1]):
        bad = int(np.flatnonzero(~reach[:, -1])[0])
        raise ConfigurationError(
            f"received index {bad}: column mass {mass[bad, -1]:.6g} never reaches 1 - eps"
        )
    count = np.argmax(reach, axis=1) + 1

    expo = 1.0 / (2 * (n_t - 1))
    idx = np.arange(n)

    def prefix_rates(I, ks, targets, stars):
        ps = p[stars, I]
        tl = mass[I, -1] - mass[I, ks - 1]
        res = np.minimum(np.maximum(targets - tl, 0.0), ps * (1.0 - 1e-12))
        base = np.sqrt(delta) * (1.0 - res / ps) ** expo + sin[I, stars]
        return np.maximum(0.0, -2.0 * np.log2(base)), ps, tl, res

    rows = []
    for I in range(n):
        k0 = int(count[I])
        members = order[I]
        if I in override:
            star = np.array([int(override[I])])
            ks, targets = np.array([k0]), np.array([eps])
        else:
            # worst member of every prefix: first position of the running max
            s_ord = sin[I, members]
            new_max = s_ord > np.concatenate(([-np.inf], np.maximum.accumulate(s_ord)[:-1]))
            star_pos = np.maximum.accumulate(np.where(new_max, idx, 0))
            # longer prefixes, up to the first zero-mass member (those only raise sin*)
            zero = np.flatnonzero(p[members[k0:], I] <= 0.0)
            k_max = n if zero.size == 0 else k0 + int(zero[0])
            ks = np.arange(k0, k_max + 1)
            # the greedy set of size k is chosen for eps' just below 1 - mass[k - 1]
            targets = np.minimum(eps, 1.0 - mass[I, ks - 2])
            targets[0] = eps
            star = members[star_pos[ks - 1]]
        rate, ps, tl, res = prefix_rates(I, ks, targets, star)
        b = int(np.argmax(rate))
        rows.append((rate[b], (members[: ks[b]], int(star[b]), ps[b], tl[b], res[b], targets[b])))

    rate_hi = np.array([r for r, _ in rows])
    info = [x for _, x in rows]
    ns_sets = tuple(tuple(int(j) for j in m) for m, *_ in info)
    i_star = np.array([x[1] for x in info], dtype=np.intp)
    p_star, tail, eps_res, target = (np.array([x[i] for x in info]) for i in (2, 3, 4, 5))
    sin_star = sin[np.arange(n), i_star]
    if forward_snr_db is None:
        rate = rate_hi.copy()
    else:
        if g_th is None:
            raise ConfigurationError("finite-SNR rates need the gain threshold g_th")
        rate = finite_snr_rate(rate_hi, forward_snr_db, g_th, n_t)
    return RateTable(ns_sets, i_star, eps_res, rate, rate_hi, sin_star, p_star,
                     tail, target, delta, eps, n_t)


def outage_bound(rate: float, index: int, table: RateTable) -> float:
    """Upper bound on the outage probability of received ``index`` at ``rate``.

    ``rate`` is an interference-limited (high-SNR) rate.
    """
    if rate < 0:
        raise ValueError(f"rate {rate} < 0")
    n_t, delta = table.n_t, table.delta
    x = np.clip(2.0 ** (-rate / 2.0) - table.sin_star[index], 0.0, np.sqrt(delta))
    inner = 1.0 - (x**2 / delta) ** (n_t - 1)
    return float(inner * table.p_star[index] + table.tail[index])


@dataclass(frozen=True)
class ScheduleOutcome:
    chosen_set: int
    users: np.ndarray
    codewords: np.ndarray
    precoders: np.ndarray
    unfilled_slots: int


def schedule(received, cb: Codebook, rng: np.random.Generator) -> ScheduleOutcome:
    """Orthogonal user selection on one orthonormal set of the codebook.

    ``received`` maps user id -> received codeword index (a dict or a pair
    of equal-length arrays ``(users, indices)``). A set all of whose vectors
    were reported is chosen uniformly at random; failing that, a set
    covering the most vectors. Each covered vector goes to a uniformly
    chosen user among those reporting it.
    """
    if isinstance(received, dict):
        users = np.fromiter(received.keys(), dtype=np.intp, count=len(received))
        idx = np.fromiter(received.values(), dtype=np.intp, count=len(received))
    else:
        users, idx = (np.asarray(a, dtype=np.intp) for a in received)
    if users.size == 0:
        raise NoFeedbackError("no user fed back in this slot")

    covered = np.zeros(cb.size, dtype=bool)
    covered[idx] = True
    set_sizes = np.bincount(cb.set_of, minlength=cb.n_sets)
    coverage = np.bincount(cb.set_of, weights=covered, minlength=cb.n_sets)
    full = np.flatnonzero(coverage == set_sizes)
    pool = full if full.size else np.flatnonzero(coverage == coverage.max())
    m = int(pool[rng.integers(pool.size)]) if pool.size > 1 else int(pool[0])

    chosen_users, chosen_cw = [], []
    for v in cb.members(m):
        reporters = users[idx == v]
        if reporters.size:
            pick = reporters[rng.integers(reporters.size)] if reporters.size > 1 else reporters[0]
            chosen_users.append(int(pick))
            chosen_cw.append(int(v))
    cw = np.array(chosen_cw, dtype=np.intp)
    return ScheduleOutcome(
        chosen_set=m,
        users=np.array(chosen_users, dtype=np.intp),
        codewords=cw,
        precoders=cb.entries[cw],
        unfilled_slots=int(cb.n_t - cw.size),
    )


def sinr_exact(h, w_k, interferers, power: float, n_t: int) -> float:
    scale = power / n_t
    sig = scale * abs(np.vdot(w_k, h)) ** 2
    interf = np.asarray(interferers, dtype=complex).reshape(-1, len(h))
    inter = scale * float(np.sum(np.abs(interf.conj() @ h) ** 2))
    return sig / (1.0 + inter)


def mutual_info_exact(h, w_k, interferers, power: float, n_t: int) -> float:
    """``log2(1 + SINR)`` with equal power ``P / n_t`` per stream and unit noise.

    ``h`` is a :class:`~robust_sdma.core.ChannelRealization` or a raw vector.
    """
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    return float(np.log2(1.0 + sinr_exact(h, w_k, interferers, power, n_t)))


def mutual_info_highsnr(shape, w_k, interferers) -> float:
    """High-SNR mutual information with a full orthonormal precoder set.

    Equals ``-2 log2(sin(theta))``; saturates at :data:`MI_SATURATION`.
    """
    shape = np.asarray(shape, dtype=complex)
    w = np.vstack([np.asarray(w_k, dtype=complex)[None, :],
                   np.asarray(interferers, dtype=complex).reshape(-1, shape.size)])
    if w.shape[0] != shape.size or np.max(np.abs(w.conj() @ w.T - np.eye(shape.size))) > 1e-9:
        raise NormalizationError("precoders must form a full orthonormal set")
    c = np.abs(w.conj() @ shape) ** 2
    interf = float(np.sum(c[1:]))
    if interf <= 0.0:
        return MI_SATURATION
    return float(min(MI_SATURATION, np.log2(1.0 + c[0] / interf)))
