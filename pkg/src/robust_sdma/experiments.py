"""Experiment drivers: goodput sweeps and the analytic checks.

Every sweep runs all requested schemes on the same trial streams, so
per-slot goodputs are paired across schemes and scheme differences can be
tested with paired standard errors. Results are plain tables written as
CSV; nothing here plots.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import assignment
from .basestation import build_rate_table, mutual_info_exact, mutual_info_highsnr, schedule
from .codebook import build_codebook, codeword_priors, gate_many
from .core import ConfigurationError, draw_channel_matrix
from .feedback import neighbor_set
from .sim import (
    SCHEMES,
    SimConfig,
    average_goodput,
    build_codebook_for,
    build_context,
    simulate,
    slot_goodputs,
    trial_streams,
)

__all__ = [
    "Sweep",
    "paired_difference",
    "run_sweep",
    "experiment_goodput_vs_cfb",
    "experiment_goodput_vs_constellation",
    "experiment_goodput_vs_forward_snr",
    "experiment_goodput_vs_ser",
    "experiment_goodput_vs_feedback_snr",
    "stack_rows",
    "noise_limited_template",
    "log2_power",
    "validate_lemma4",
    "validate_highsnr_approx",
    "tsp_bench",
    "tour_cost_trend",
    "fixture_rate_table",
    "identity_rate_table",
    "write_csv",
    "config_comment",
]


def paired_difference(a, b) -> tuple[float, float]:
    """Mean and standard error of the per-slot difference ``a - b``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    se = float(np.std(d, ddof=1) / np.sqrt(d.size)) if d.size > 1 else 0.0
    return float(d.mean()), se


@dataclass
class Sweep:
    """Goodput of several schemes over one swept parameter.

    ``cells[scheme][k]`` is the :class:`~robust_sdma.sim.GoodputSummary`
    at ``x[k]``; ``slots[scheme][k]`` keeps the per-slot goodputs for
    paired comparisons.
    """

    name: str
    x_name: str
    x: list
    schemes: tuple
    template: SimConfig
    cells: dict = field(default_factory=dict)
    slots: dict = field(default_factory=dict)

    def goodput(self, scheme) -> np.ndarray:
        return np.array([c.goodput for c in self.cells[scheme]])

    def stderr(self, scheme) -> np.ndarray:
        return np.array([c.stderr for c in self.cells[scheme]])

    def per(self, scheme) -> np.ndarray:
        return np.array([c.per for c in self.cells[scheme]])

    def per_stderr(self, scheme) -> np.ndarray:
        return np.array([c.per_stderr for c in self.cells[scheme]])

    def slope(self, scheme="robust", x=None) -> float:
        """Least-squares slope of goodput against ``x`` (default the sweep values)."""
        xs = np.asarray(self.x if x is None else x, dtype=float)
        return float(np.polyfit(xs, self.goodput(scheme), 1)[0])

    def difference(self, a, b, k) -> tuple[float, float]:
        return paired_difference(self.slots[a][k], self.slots[b][k])

    def dominates(self, a, b, k, sigmas=3.0) -> bool:
        """True when scheme ``a`` beats ``b`` at point ``k`` by ``sigmas`` paired SEs."""
        mean, se = self.difference(a, b, k)
        return mean > sigmas * se

    def rows(self):
        header = [self.x_name]
        for s in self.schemes:
            header += [f"{s}_goodput", f"{s}_stderr", f"{s}_per", f"{s}_filled"]
        out = [header]
        for k, x in enumerate(self.x):
            row = [x]
            for s in self.schemes:
                c = self.cells[s][k]
                row += [c.goodput, c.stderr, c.per, c.mean_scheduled]
            out.append(row)
        return out

    def to_csv(self, path=None) -> str:
        cfg = self.template.to_dict()
        cfg.pop("scheme")
        cfg[self.x_name] = list(self.x)
        return write_csv(path, self.rows(), {"experiment": self.name, "config": cfg})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def config_comment(meta: dict) -> str:
    return "# " + json.dumps(meta, sort_keys=True, default=_fmt)


def write_csv(path, rows, meta: dict | None = None) -> str:
    """Write ``rows`` (header first) with a one-line JSON config echo on top.

    Floats are written with :func:`repr` so reruns are byte-identical.
    Returns the text; ``path=None`` only returns it.
    """
    buf = io.StringIO()
    if meta is not None:
        buf.write(config_comment(meta) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text


def run_sweep(name, x_name, points, template: SimConfig, schemes=SCHEMES,
              workers: int = 1, x=None) -> Sweep:
    """Simulate each scheme at each configuration in ``points``.

    ``points`` is a list of dicts of :class:`SimConfig` overrides, one per
    sweep value; ``x`` gives the values reported in the table. Every
    configuration is validated before the first simulation starts.
    """
    xs = list(x) if x is not None else [p[x_name] for p in points]
    cfgs = {s: [template.replace(scheme=s, **p) for p in points] for s in schemes}
    sw = Sweep(name, x_name, xs, tuple(schemes), template)
    for s in schemes:
        sw.cells[s], sw.slots[s] = [], []
        for cfg in cfgs[s]:
            rec = simulate(build_context(cfg), workers=workers)
            sw.cells[s].append(average_goodput(rec))
            sw.slots[s].append(slot_goodputs(rec))
    return sw


def experiment_goodput_vs_cfb(template: SimConfig = SimConfig(), c_fb=(4, 5, 6, 8),
                              ser: float = 0.2, schemes=SCHEMES, workers=1) -> Sweep:
    """Fixed feedback SER, growing feedback budget (nearest-neighbour link)."""
    tpl = template.replace(feedback_model="nearest-neighbor", feedback_ser=ser, n_symbols=1)
    return run_sweep("fig4-cfb-ser", "c_fb", [{"c_fb": c} for c in c_fb], tpl, schemes, workers)


def experiment_goodput_vs_constellation(template: SimConfig = SimConfig(), levels=(2, 3, 4, 5, 6),
                                        feedback_snr_db: float = 10.0, n_symbols: int = 2,
                                        schemes=SCHEMES, workers=1) -> Sweep:
    """Fixed feedback SNR and symbol count, growing bits per PSK symbol."""
    tpl = template.replace(feedback_model="psk-awgn", feedback_snr_db=feedback_snr_db,
                           n_symbols=n_symbols)
    pts = [{"c_fb": b * n_symbols} for b in levels]
    return run_sweep("fig5-cfb-snr", "bits_per_symbol", pts, tpl, schemes, workers, x=levels)


def noise_limited_template(**changes) -> SimConfig:
    """Two antennas, clean feedback, a fine codebook and many users.

    With ``delta`` this small the quantization floor sits far below the
    noise floor over the usual SNR range, so goodput tracks ``log2 P``.
    """
    base = SimConfig(n_t=2, c_fb=10, k_users=400, delta=1e-3, g_th=1.0, eps=0.05,
                     feedback_model="nearest-neighbor", feedback_ser=0.0, trials=1000)
    return base.replace(**changes)


def experiment_goodput_vs_forward_snr(template: SimConfig | None = None,
                                      snr_db=(0.0, 5.0, 10.0, 15.0, 20.0),
                                      schemes=("robust",), workers=1) -> Sweep:
    """Forward SNR sweep; :meth:`Sweep.slope` against ``log2 P`` gives the scaling."""
    tpl = noise_limited_template() if template is None else template
    pts = [{"forward_snr_db": float(s)} for s in snr_db]
    return run_sweep("forward-snr", "forward_snr_db", pts, tpl, schemes, workers)


def log2_power(snr_db) -> np.ndarray:
    return np.asarray(snr_db, dtype=float) / (10.0 * np.log10(2.0))


def experiment_goodput_vs_ser(template: SimConfig = SimConfig(c_fb=8),
                              ser=(0.0, 0.1, 0.2, 0.3), snr_db=(0.0, 10.0, 20.0, 30.0),
                              schemes=SCHEMES, workers=1) -> list:
    """Forward-SNR sweeps, one per feedback SER (nearest-neighbour link).

    Returns one :class:`Sweep` per SER value; :func:`stack_rows` joins them
    into a single table.
    """
    tpl = template.replace(feedback_model="nearest-neighbor")
    out = []
    for p in ser:
        pts = [{"forward_snr_db": float(s)} for s in snr_db]
        out.append(run_sweep("fig6-ser-sweep", "forward_snr_db", pts,
                             tpl.replace(feedback_ser=float(p)), schemes, workers))
    return out


def stack_rows(sweeps, key, values):
    """Rows of several sweeps under one header, with a leading ``key`` column."""
    rows = [[key] + sweeps[0].rows()[0]]
    for v, sw in zip(values, sweeps):
        rows += [[v] + r for r in sw.rows()[1:]]
    return rows


def experiment_goodput_vs_feedback_snr(template: SimConfig = SimConfig(c_fb=6, n_symbols=2),
                                       snr_db=(0.0, 5.0, 10.0, 15.0, 20.0),
                                       schemes=SCHEMES, workers=1) -> Sweep:
    tpl = template.replace(feedback_model="psk-awgn")
    pts = [{"feedback_snr_db": float(s)} for s in snr_db]
    return run_sweep("fig7-fbsnr-sweep", "feedback_snr_db", pts, tpl, schemes, workers)


# --- analytic checks ---------------------------------------------------------


def validate_lemma4(template: SimConfig = SimConfig(c_fb=6), seeds=range(10)) -> dict:
    """Mean worst-neighbour sine under the robust mapping versus its lower bound.

    ``N_n`` is the largest constellation neighbour set at ``eps``. Each seed
    gives one codebook and mapping; the reported ``stderr`` is across seeds.
    With ``N_n = 1`` (clean link) the bound does not apply and the report
    says so.
    """
    cfg0 = template.replace(scheme="robust")
    sym_ctx = build_context(cfg0.replace(seed=int(seeds[0]) if len(seeds) else 0))
    p_sym = sym_ctx.symbol_matrix
    n_n = max(neighbor_set(p_sym, i, cfg0.eps)[1] for i in range(p_sym.shape[0])) ** cfg0.n_symbols
    n = 2**cfg0.c_fb
    bound = (n_n / n) ** (1.0 / (2 * (cfg0.n_t - 1)))
    report = {"n": n, "n_t": cfg0.n_t, "n_n": int(n_n), "bound": bound}
    if n_n == 1:
        report["skipped"] = True
        return report
    means = []
    for s in seeds:
        ctx = sym_ctx if s == seeds[0] else build_context(cfg0.replace(seed=int(s)))
        means.append(float(np.mean(ctx.rate_table.sin_star)))
    means = np.array(means)
    se = float(np.std(means, ddof=1) / np.sqrt(means.size)) if means.size > 1 else 0.0
    report.update(skipped=False, mean=float(means.mean()), stderr=se,
                  ratio=float(means.mean() / bound), per_seed=means.tolist())
    return report


def validate_highsnr_approx(template: SimConfig = SimConfig(feedback_ser=0.0, k_users=1000),
                            snr_db=(20.0, 30.0, 40.0), slots: int = 2000,
                            min_interference: float = 0.05) -> dict:
    """Exact versus high-SNR mutual information on fully scheduled slots.

    Slots are drawn as in the simulator with clean feedback; only slots
    that fill a whole orthonormal set contribute. Users whose interference
    term is at most ``min_interference`` are dropped. For every SNR in
    ``snr_db`` the same users and precoders are re-evaluated.
    """
    cfg = template.replace(scheme="naive-uncoded")
    cb = build_codebook_for(cfg)
    hs, ws, others = [], [], []
    for t in range(slots):
        chan, _, sched = trial_streams(cfg, t)
        h = draw_channel_matrix(chan, cfg.n_t, cfg.k_users)
        gains = np.sum(np.abs(h) ** 2, axis=1)
        shapes = h / np.sqrt(gains)[:, None]
        ok, idx, _ = gate_many(shapes, gains, cb, cfg.delta, cfg.g_th)
        users = np.flatnonzero(ok)
        if users.size == 0:
            continue
        out = schedule((users, idx[users]), cb, sched)
        if out.unfilled_slots:
            continue
        for s, u in enumerate(out.users):
            rest = np.delete(out.precoders, s, axis=0)
            if np.sum(np.abs(rest.conj() @ shapes[u]) ** 2) <= min_interference:
                continue
            hs.append(h[u])
            ws.append(out.precoders[s])
            others.append(rest)
    approx = np.array([mutual_info_highsnr(h / np.linalg.norm(h), w, o)
                       for h, w, o in zip(hs, ws, others)])
    report = {"samples": len(hs), "snr_db": list(snr_db), "median_abs_error": []}
    for snr in snr_db:
        p = 10.0 ** (snr / 10.0)
        exact = np.array([mutual_info_exact(h, w, o, p, cfg.n_t) for h, w, o in zip(hs, ws, others)])
        report["median_abs_error"].append(float(np.median(np.abs(exact - approx))))
    return report


PRIOR_FAMILIES = ("gate", "dirichlet")


def _random_instance(rng, n_t, c_fb, p_e=1.0, priors="gate", delta=0.1):
    cb = build_codebook(rng, n_t, c_fb)
    if priors == "gate":
        pr = codeword_priors(cb, delta, rng=rng)
    elif priors == "dirichlet":
        pr = rng.dirichlet(np.ones(cb.size))
    else:
        raise ConfigurationError(f"priors={priors!r} not in {PRIOR_FAMILIES}")
    return cb, assignment.build_tsp(cb, pr, p_e)


def tsp_bench(n_instances: int = 100, n_t: int = 4, c_fb: int = 3, seed: int = 0,
              priors: str = "gate") -> list:
    """Exhaustive, 2-opt and CNNA tour costs on random instances.

    Instance ``k`` uses a fresh codebook drawn from
    ``SeedSequence(seed, spawn_key=(k,))``. ``priors="gate"`` weights the
    cities with the codeword report probabilities the system itself would
    use; ``"dirichlet"`` draws them from a flat Dirichlet, a much more
    lopsided stress case. Returns rows ``(instance, exhaustive, two_opt, cnna)``.
    """
    rows = []
    for k in range(n_instances):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        _, inst = _random_instance(rng, n_t, c_fb, priors=priors)
        c = assignment.cnna(inst)
        rows.append((k, assignment.exhaustive_tsp(inst).cost,
                     assignment.two_opt(inst, c).cost, c.cost))
    return rows


def tour_cost_trend(sizes=(8, 16, 32, 64), n_t: int = 4, seeds: int = 20, seed: int = 0) -> dict:
    """CNNA cost per city against the mean nearest-codeword distortion.

    Distances are the plain pairwise distortions (uniform priors). For each
    size returns the mean over ``seeds`` codebooks of ``cost / N`` and of
    ``d_min``, the distortion from a codeword to its nearest other
    codeword. A tour that mostly hops between nearest codewords costs about
    ``N d_min`` plus a bounded closing overhead.
    """
    per_city, d_min, per_city_se = [], [], []
    for n in sizes:
        c_fb = int(np.log2(n))
        costs, dm = [], []
        for s in range(seeds):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n, s)))
            cb = build_codebook(rng, n_t, c_fb)
            inst = assignment.TspInstance(cb.distortion_matrix.copy())
            costs.append(assignment.cnna(inst).cost / n)
            d = cb.distortion_matrix + np.eye(n) * 2.0
            dm.append(float(np.mean(d.min(axis=1))))
        per_city.append(float(np.mean(costs)))
        per_city_se.append(float(np.std(costs, ddof=1) / np.sqrt(seeds)))
        d_min.append(float(np.mean(dm)))
    sizes = np.asarray(sizes, dtype=float)
    totals = np.asarray(per_city) * sizes
    slope, intercept = np.polyfit(sizes * np.asarray(d_min), totals, 1)
    return {"sizes": sizes.astype(int).tolist(), "cost_per_city": per_city,
            "cost_per_city_stderr": per_city_se, "d_min": d_min,
            "fit_slope": float(slope), "fit_intercept": float(intercept)}


# --- rate-table fixtures -----------------------------------------------------

# the worked four-codeword example: received index 0 with posterior column
# (0.70, 0.10, 0.11, 0.09) and sines (0, 0.5, 0.4, 1) to it
FIXTURE_COLUMN = np.array([0.70, 0.10, 0.11, 0.09])
FIXTURE_SIN = np.array([0.0, 0.5, 0.4, 1.0])


def fixture_matrices():
    """Symmetric 4x4 transition matrix and sine matrix built around the fixture row."""
    p = np.array([
        [0.70, 0.10, 0.11, 0.09],
        [0.10, 0.70, 0.09, 0.11],
        [0.11, 0.09, 0.70, 0.10],
        [0.09, 0.11, 0.10, 0.70],
    ])
    sin = np.array([
        [0.0, 0.5, 0.4, 1.0],
        [0.5, 0.0, 1.0, 0.4],
        [0.4, 1.0, 0.0, 0.5],
        [1.0, 0.4, 0.5, 0.0],
    ])
    return p, sin


def fixture_rate_table(delta=0.1, eps=0.1, n_t=4, stated_i_star=False):
    """Rate table of the worked example; ``stated_i_star`` forces neighbour 2 for row 0."""
    p, sin = fixture_matrices()
    override = {0: 2} if stated_i_star else None
    return build_rate_table(p, sin, delta, eps, n_t, i_star_override=override)


def identity_rate_table(n=4, delta=0.1, eps=0.05, n_t=4):
    sin = np.ones((n, n)) - np.eye(n)
    return build_rate_table(np.eye(n), sin, delta, eps, n_t)

