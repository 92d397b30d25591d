"""Slot-level Monte Carlo of the limited-feedback SDMA downlink.

A slot: draw ``K`` channels, gate and quantize at the mobiles, pass the
indices through the noisy feedback link, schedule one orthonormal set,
transmit at the tabulated rate of each received index and compare with
the exact mutual information. Goodput counts the rate only when it is
below the mutual information.

Each trial ``t`` draws from its own streams, derived from
``(seed, t)``, so results do not depend on how trials are split across
worker processes. The three schemes share channel draws trial for trial.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import assignment
from .basestation import RateTable, build_rate_table, schedule, sinr_exact
from .codebook import Codebook, build_codebook, codeword_priors, gate_many
from .core import ConfigurationError, draw_channel_matrix
from .feedback import (
    HammingCode,
    IndexMapping,
    csit_transition,
    hamming_feedback,
    multi_symbol_transition,
    parametric_nn_transition,
    psk_transition_matrix,
    shortened_hamming,
    transmit_indices,
)

__all__ = [
    "SCHEMES",
    "FEEDBACK_MODELS",
    "SimConfig",
    "SimContext",
    "TrialRecord",
    "GoodputSummary",
    "build_context",
    "trial_streams",
    "run_trial",
    "run_trials",
    "simulate",
    "average_goodput",
    "slot_goodputs",
]

SCHEMES = ("robust", "naive-uncoded", "naive-coded")
FEEDBACK_MODELS = ("nearest-neighbor", "psk-awgn")
RATE_MODELS = ("finite-snr", "high-snr")

# spawn-key tags keeping the offline artifacts and the trials on disjoint streams
_CODEBOOK, _PRIORS, _SOLVER, _CODED_CODEBOOK, _TRIAL = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class SimConfig:
    """All knobs of one simulation cell. Noise variance is fixed at 1."""

    n_t: int = 4
    k_users: int = 100
    c_fb: int = 4
    forward_snr_db: float = 20.0
    feedback_model: str = "nearest-neighbor"
    feedback_ser: float = 0.2
    feedback_snr_db: float = 10.0
    n_symbols: int = 1
    delta: float = 0.1
    g_th: float = 2.0
    eps: float = 0.05
    scheme: str = "robust"
    solver: str = "cnna"
    rate_model: str = "finite-snr"
    trials: int = 10_000
    seed: int = 0
    prior_samples: int = 10_000

    def __post_init__(self):
        if self.n_t < 2:
            raise ConfigurationError(f"n_t={self.n_t} < 2")
        if self.k_users <= self.n_t:
            raise ConfigurationError(f"k_users={self.k_users} must exceed n_t={self.n_t}")
        if not 0.0 < self.eps < 1.0:
            raise ConfigurationError(f"eps={self.eps} must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta={self.delta} must lie in (0, 1)")
        if self.g_th < 0:
            raise ConfigurationError(f"g_th={self.g_th} < 0")
        if self.trials < 1:
            raise ConfigurationError(f"trials={self.trials} < 1")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme {self.scheme!r} not in {SCHEMES}")
        if self.feedback_model not in FEEDBACK_MODELS:
            raise ConfigurationError(f"feedback_model {self.feedback_model!r} not in {FEEDBACK_MODELS}")
        if self.rate_model not in RATE_MODELS:
            raise ConfigurationError(f"rate_model {self.rate_model!r} not in {RATE_MODELS}")
        if self.solver not in assignment.SOLVERS:
            raise ConfigurationError(f"solver {self.solver!r} not in {assignment.SOLVERS}")
        if not 0.0 <= self.feedback_ser < 1.0:
            raise ConfigurationError(f"feedback_ser={self.feedback_ser} must lie in [0, 1)")
        if self.n_symbols < 1 or self.c_fb % self.n_symbols:
            raise ConfigurationError(
                f"c_fb={self.c_fb} bits cannot be split over n_symbols={self.n_symbols}"
            )
        if (2**self.c_fb) % self.n_t:
            raise ConfigurationError(
                f"codebook size 2**c_fb = {2**self.c_fb} (c_fb={self.c_fb}) is not "
                f"divisible by n_t={self.n_t}"
            )

    @property
    def bits_per_symbol(self) -> int:
        return self.c_fb // self.n_symbols

    @property
    def power(self) -> float:
        return 10.0 ** (self.forward_snr_db / 10.0)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SimContext:
    """Offline artifacts for one configuration: codebook, mapping, rate table.

    For the coded baseline ``codebook`` is the reduced-payload codebook and
    ``mapping`` / ``p_csit`` are unused.
    """

    cfg: SimConfig
    codebook: Codebook
    symbol_matrix: np.ndarray
    p_ch: np.ndarray
    mapping: IndexMapping | None
    p_csit: np.ndarray | None
    rate_table: RateTable
    priors: np.ndarray | None = None
    code: HammingCode | None = None


def _stream(cfg: SimConfig, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=key))


def symbol_channel(cfg: SimConfig) -> np.ndarray:
    order = 2**cfg.bits_per_symbol
    if cfg.feedback_model == "nearest-neighbor":
        return parametric_nn_transition(order, cfg.feedback_ser)
    return psk_transition_matrix(order, cfg.feedback_snr_db)


def _table(cfg: SimConfig, p, cb) -> RateTable:
    if cfg.rate_model == "high-snr":
        return build_rate_table(p, cb, cfg.delta, cfg.eps, cfg.n_t)
    return build_rate_table(p, cb, cfg.delta, cfg.eps, cfg.n_t,
                            forward_snr_db=cfg.forward_snr_db, g_th=cfg.g_th)


def build_codebook_for(cfg: SimConfig) -> Codebook:
    """Codebook shared by the robust and naive-uncoded schemes of ``cfg``."""
    return build_codebook(_stream(cfg, _CODEBOOK), cfg.n_t, cfg.c_fb, seed=cfg.seed)


def build_context(cfg: SimConfig) -> SimContext:
    sym = symbol_channel(cfg)
    p_ch = multi_symbol_transition(sym, cfg.n_symbols)
    n = 2**cfg.c_fb

    if cfg.scheme == "naive-coded":
        code = shortened_hamming(cfg.c_fb)
        cb = build_codebook(_stream(cfg, _CODED_CODEBOOK), cfg.n_t, code.k,
                            seed=cfg.seed, allow_partial=True)
        table = _table(cfg, np.eye(cb.size), cb)
        return SimContext(cfg, cb, sym, p_ch, None, None, table, code=code)

    cb = build_codebook_for(cfg)
    if cfg.scheme == "naive-uncoded":
        xi = IndexMapping.identity(n)
        table = _table(cfg, np.eye(n), cb)
        return SimContext(cfg, cb, sym, p_ch, xi, csit_transition(p_ch, xi), table)

    priors = codeword_priors(cb, cfg.delta, cfg.g_th, cfg.prior_samples, _stream(cfg, _PRIORS))
    p_e = 1.0 - float(np.mean(np.diag(p_ch)))
    inst = assignment.build_tsp(cb, priors, p_e if p_e > 0 else 1.0)
    tour = assignment.solve(inst, cfg.solver, _stream(cfg, _SOLVER))
    xi = assignment.tour_to_mapping(tour, n, 2**cfg.bits_per_symbol)
    p_csit = csit_transition(p_ch, xi)
    table = _table(cfg, p_csit, cb)
    return SimContext(cfg, cb, sym, p_ch, xi, p_csit, table, priors=priors)


@dataclass
class TrialRecord:
    """Scheduled users of one slot with their rates and mutual informations."""

    users: np.ndarray
    codewords: np.ndarray
    rates: np.ndarray
    capacities: np.ndarray
    unfilled: int
    n_feedback: int = 0
    goodputs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.goodputs = np.where(self.rates < self.capacities, self.rates, 0.0)

    @property
    def goodput(self) -> float:
        return float(np.sum(self.goodputs))

    @property
    def outages(self) -> np.ndarray:
        return (self.rates > 0) & (self.rates >= self.capacities)

    @property
    def lost(self) -> float:
        return float(np.sum(self.rates[self.rates >= self.capacities]))


def trial_streams(cfg: SimConfig, trial: int):
    """Independent (channel, feedback, scheduling) generators of one trial."""
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(_TRIAL, int(trial)))
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def _feed_back(ctx: SimContext, sent: np.ndarray, rng) -> np.ndarray:
    cfg = ctx.cfg
    if ctx.code is None:
        return transmit_indices(sent, ctx.mapping, ctx.p_ch, rng)
    k = ctx.code.k
    weights = 1 << np.arange(k - 1, -1, -1)
    out = np.empty_like(sent)
    for u, idx in enumerate(sent):
        bits = (int(idx) >> np.arange(k - 1, -1, -1)) & 1
        rx = hamming_feedback(bits, cfg.n_symbols, rng, bits_per_symbol=cfg.bits_per_symbol,
                              symbol_matrix=ctx.symbol_matrix)
        out[u] = int(rx @ weights)
    # decoded payloads outside a partial codebook fall back to the nearest valid index
    return np.minimum(out, ctx.codebook.size - 1)


def _slot(ctx: SimContext, h, q_idx, q_dist, fb_rng, sched_rng) -> TrialRecord:
    cfg = ctx.cfg
    gains = np.sum(np.abs(h) ** 2, axis=1)
    active = np.flatnonzero((q_dist < cfg.delta) & (gains > cfg.g_th))
    empty = np.empty(0, dtype=np.intp)
    if active.size == 0:
        return TrialRecord(empty, empty, np.empty(0), np.empty(0), cfg.n_t, 0)
    received = _feed_back(ctx, q_idx[active], fb_rng)
    out = schedule((active, received), ctx.codebook, sched_rng)
    rates = ctx.rate_table.rate[out.codewords]
    caps = np.empty(out.users.size)
    for s, user in enumerate(out.users):
        others = np.delete(out.precoders, s, axis=0)
        caps[s] = np.log2(1.0 + sinr_exact(h[user], out.precoders[s], others, cfg.power, cfg.n_t))
    return TrialRecord(out.users, out.codewords, rates, caps, out.unfilled_slots, int(active.size))


def run_trial(ctx: SimContext, trial: int) -> TrialRecord:
    """Simulate slot number ``trial`` of the configuration behind ``ctx``."""
    chan, fb, sched = trial_streams(ctx.cfg, trial)
    h = draw_channel_matrix(chan, ctx.cfg.n_t, ctx.cfg.k_users)
    shapes = h / np.linalg.norm(h, axis=1)[:, None]
    _, q_idx, q_dist = gate_many(shapes, np.ones(len(h)), ctx.codebook, ctx.cfg.delta, 0.0)
    return _slot(ctx, h, q_idx, q_dist, fb, sched)


def run_trials(ctx: SimContext, start: int, stop: int) -> list[TrialRecord]:
    """Trials ``start..stop-1`` in order."""
    return [run_trial(ctx, t) for t in range(start, stop)]


def _run_chunk(args):
    ctx, lo, hi = args
    return run_trials(ctx, lo, hi)


def simulate(ctx: SimContext, trials: int | None = None, workers: int = 1,
             chunk: int = 500) -> list[TrialRecord]:
    """All trials of ``ctx``, in trial order, optionally over worker processes."""
    n = ctx.cfg.trials if trials is None else trials
    if workers <= 1:
        return run_trials(ctx, 0, n)
    bounds = [(ctx, lo, min(n, lo + chunk)) for lo in range(0, n, chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, bounds))
    return [r for part in parts for r in part]


@dataclass(frozen=True)
class GoodputSummary:
    """Slot-averaged system goodput (b/s/Hz) with its standard error.

    ``per`` is the fraction of packets (scheduled users with a positive
    rate) in outage; zero-rate assignments carry no packet.
    """

    goodput: float
    stderr: float
    per: float
    per_stderr: float
    packets: int
    mean_scheduled: float
    mean_rate: float
    trials: int


def slot_goodputs(records) -> np.ndarray:
    return np.array([r.goodput for r in records])


def average_goodput(records) -> GoodputSummary:
    if not records:
        raise ValueError("no trial records")
    g = slot_goodputs(records)
    t = g.size
    stderr = float(np.std(g, ddof=1) / np.sqrt(t)) if t > 1 else 0.0
    rates = np.concatenate([r.rates for r in records]) if t else np.empty(0)
    outages = np.concatenate([r.outages for r in records])
    packets = int(np.sum(rates > 0))
    per = float(outages.sum() / packets) if packets else 0.0
    per_se = float(np.sqrt(max(per * (1 - per), 1e-300) / packets)) if packets else 0.0
    sched = float(np.mean([r.users.size for r in records]))
    mean_rate = float(rates.mean()) if rates.size else 0.0
    return GoodputSummary(float(g.mean()), stderr, per, per_se, packets, sched, mean_rate, t)
