"""Command-line entry point.

``robust-sdma run CONFIG.yaml`` runs one experiment and writes its CSV
tables plus ``manifest.json`` into a fresh output directory.
``robust-sdma dump-rate-table`` prints a rate table, either for a worked
four-codeword fixture or for the configuration in a YAML file.

Config layout (all keys but ``experiment`` optional)::

    experiment: fig4-cfb-ser
    seed: 0
    trials: 10000
    workers: 1
    config:          # SimConfig field overrides
      n_t: 4
      k_users: 100
    sweep:           # experiment parameters, see EXPERIMENTS
      c_fb: [4, 5, 6, 8]
      ser: 0.2

Failures print one JSON line ``{"error": ..., "message": ...}`` on stderr
and exit nonzero: 2 for invalid input, 3 for output problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__, experiments as ex
from .assignment import ComplexityError
from .core import ConfigurationError
from .feedback import save_matrix_csv
from .sim import SCHEMES, SimConfig, build_context

__all__ = ["main", "load_spec", "ExperimentSpec", "EXPERIMENTS", "OUTPUT_ENV"]

OUTPUT_ENV = "ROBUST_SDMA_OUT"
_TOP_KEYS = {"experiment", "seed", "trials", "workers", "config", "sweep"}


class OutputError(OSError):
    pass


@dataclass(frozen=True)
class Experiment:
    run: callable
    sweep: dict  # parameter -> default; the default's type is the accepted type
    template: dict  # SimConfig defaults for this experiment


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    cfg: SimConfig
    sweep: dict
    workers: int = 1

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "config": self.cfg.to_dict(),
                "sweep": self.sweep, "workers": self.workers}


# --- experiment runners: each returns ({filename: csv text}, results dict) ---


def _meta(spec):
    return {"experiment": spec.experiment, "config": spec.cfg.to_dict(), "sweep": spec.sweep}


def _sweep_summary(sw):
    return {s: {"goodput": sw.goodput(s).tolist(), "per": sw.per(s).tolist()} for s in sw.schemes}


def _fig1(spec):
    r = ex.validate_highsnr_approx(spec.cfg, tuple(spec.sweep["snr_db"]), spec.sweep["slots"],
                                   spec.sweep["min_interference"])
    rows = [["snr_db", "median_abs_error", "samples"]]
    rows += [[s, e, r["samples"]] for s, e in zip(r["snr_db"], r["median_abs_error"])]
    return {"approx.csv": ex.write_csv(None, rows, _meta(spec))}, r


def _fig3(spec):
    seeds = [spec.cfg.seed + i for i in range(spec.sweep["seeds"])]
    r = ex.validate_lemma4(spec.cfg, seeds)
    rows = [["seed", "mean_sin_star", "bound"]]
    rows += [[s, v, r["bound"]] for s, v in zip(seeds, r.get("per_seed", []))]
    return {"lemma4.csv": ex.write_csv(None, rows, _meta(spec))}, r


def _fig4(spec):
    sw = ex.experiment_goodput_vs_cfb(spec.cfg, tuple(spec.sweep["c_fb"]), spec.sweep["ser"],
                                      tuple(spec.sweep["schemes"]), spec.workers)
    res = _sweep_summary(sw)
    if "robust" in sw.schemes:
        res["robust_slope"] = sw.slope("robust")
    return {"goodput.csv": ex.write_csv(None, sw.rows(), _meta(spec))}, res


def _fig5(spec):
    sw = ex.experiment_goodput_vs_constellation(
        spec.cfg, tuple(spec.sweep["levels"]), spec.sweep["feedback_snr_db"],
        spec.sweep["n_symbols"], tuple(spec.sweep["schemes"]), spec.workers)
    return {"goodput.csv": ex.write_csv(None, sw.rows(), _meta(spec))}, _sweep_summary(sw)


def _fig6(spec):
    ser = spec.sweep["ser"]
    sws = ex.experiment_goodput_vs_ser(spec.cfg, tuple(ser), tuple(spec.sweep["snr_db"]),
                                       tuple(spec.sweep["schemes"]), spec.workers)
    rows = ex.stack_rows(sws, "feedback_ser", ser)
    res = {str(p): _sweep_summary(sw) for p, sw in zip(ser, sws)}
    return {"goodput.csv": ex.write_csv(None, rows, _meta(spec))}, res


def _fig7(spec):
    sw = ex.experiment_goodput_vs_feedback_snr(spec.cfg, tuple(spec.sweep["snr_db"]),
                                               tuple(spec.sweep["schemes"]), spec.workers)
    return {"goodput.csv": ex.write_csv(None, sw.rows(), _meta(spec))}, _sweep_summary(sw)


def _tsp(spec):
    p = spec.sweep
    bench = ex.tsp_bench(p["instances"], spec.cfg.n_t, p["c_fb"], spec.cfg.seed, p["priors"])
    rows = [["instance", "exhaustive", "two_opt", "cnna"]] + [list(r) for r in bench]
    trend = ex.tour_cost_trend(tuple(p["sizes"]), spec.cfg.n_t, p["trend_seeds"], spec.cfg.seed)
    trows = [["n", "cost_per_city", "cost_per_city_stderr", "d_min"]]
    trows += [list(r) for r in zip(trend["sizes"], trend["cost_per_city"],
                                   trend["cost_per_city_stderr"], trend["d_min"])]
    ratio = np.array([r[3] / r[1] for r in bench])
    res = {"max_cnna_ratio": float(ratio.max()), "mean_cnna_ratio": float(ratio.mean()),
           "tour_trend": trend}
    return {"tsp_bench.csv": ex.write_csv(None, rows, _meta(spec)),
            "tour_trend.csv": ex.write_csv(None, trows, _meta(spec))}, res


def _rate_table_rows(table):
    rows = [["index", "ns_set", "i_star", "sin_star", "target", "eps_res", "rate_highsnr", "rate"]]
    for i in range(len(table)):
        rows.append([i, " ".join(str(j) for j in table.ns_sets[i]), int(table.i_star[i]),
                     table.sin_star[i], table.target[i], table.eps_res[i], table.rate_highsnr[i], table.rate[i]])
    return rows


def _dump(spec):
    fixture = spec.sweep["fixture"]
    if fixture == "worked":
        t = ex.fixture_rate_table(spec.cfg.delta, spec.cfg.eps, spec.cfg.n_t,
                                  stated_i_star=spec.sweep["stated_i_star"])
    elif fixture == "identity":
        t = ex.identity_rate_table(4, spec.cfg.delta, spec.cfg.eps, spec.cfg.n_t)
    else:
        ctx = build_context(spec.cfg)
        files = {"rate_table.csv": ex.write_csv(None, _rate_table_rows(ctx.rate_table), _meta(spec))}
        return files, {"rates": ctx.rate_table.rate.tolist()}, ctx
    return {"rate_table.csv": ex.write_csv(None, _rate_table_rows(t), _meta(spec))}, \
        {"rates": t.rate.tolist()}


_SCHEMES = list(SCHEMES)

EXPERIMENTS = {
    "fig1-approx": Experiment(_fig1, {"snr_db": [20.0, 30.0, 40.0], "slots": 2000,
                                      "min_interference": 0.05},
                              {"feedback_ser": 0.0, "k_users": 1000}),
    "fig3-lemma4": Experiment(_fig3, {"seeds": 10}, {"c_fb": 6}),
    "fig4-cfb-ser": Experiment(_fig4, {"c_fb": [4, 5, 6, 8], "ser": 0.2, "schemes": _SCHEMES}, {}),
    "fig5-cfb-snr": Experiment(_fig5, {"levels": [2, 3, 4, 5, 6], "feedback_snr_db": 10.0,
                                       "n_symbols": 2, "schemes": _SCHEMES}, {}),
    "fig6-ser-sweep": Experiment(_fig6, {"ser": [0.0, 0.1, 0.2, 0.3],
                                         "snr_db": [0.0, 10.0, 20.0, 30.0], "schemes": _SCHEMES},
                                 {"c_fb": 8}),
    "fig7-fbsnr-sweep": Experiment(_fig7, {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0],
                                           "schemes": _SCHEMES},
                                   {"c_fb": 6, "n_symbols": 2, "feedback_model": "psk-awgn"}),
    "tsp-bench": Experiment(_tsp, {"instances": 100, "c_fb": 3, "sizes": [8, 16, 32, 64],
                                   "trend_seeds": 20, "priors": "gate"}, {}),
    "rate-table-dump": Experiment(_dump, {"fixture": "none", "stated_i_star": False}, {}),
}


# --- validation ----------------------------------------------------------------


def _type_ok(value, like) -> bool:
    if isinstance(like, bool) or isinstance(value, bool):
        return isinstance(value, bool) and isinstance(like, bool)
    if isinstance(like, float):
        return isinstance(value, (int, float))
    if isinstance(like, int):
        return isinstance(value, int)
    if isinstance(like, str):
        return isinstance(value, str)
    if isinstance(like, list):
        return isinstance(value, list) and len(value) > 0 and all(
            _type_ok(v, like[0]) for v in value)
    return False


def _coerce(value, like):
    if isinstance(like, float) and not isinstance(like, bool):
        return float(value)
    if isinstance(like, list):
        return [_coerce(v, like[0]) for v in value]
    return value


_FIELDS = {f.name: f.default for f in dataclasses.fields(SimConfig)}


def load_spec(doc: dict, *, seed=None, trials=None, workers=None) -> ExperimentSpec:
    """Validate a parsed config document into an :class:`ExperimentSpec`.

    Nothing is computed here; every type and value error surfaces as
    :class:`~robust_sdma.core.ConfigurationError`.
    """
    if not isinstance(doc, dict):
        raise ConfigurationError("config file must hold a mapping at top level")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown top-level keys {sorted(unknown)}")
    exp_id = doc.get("experiment")
    if exp_id not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {exp_id!r}; choose from {sorted(EXPERIMENTS)}")
    exp = EXPERIMENTS[exp_id]

    overrides = dict(exp.template)
    user = doc.get("config") or {}
    if not isinstance(user, dict):
        raise ConfigurationError("'config' must be a mapping")
    for k, v in user.items():
        if k not in _FIELDS:
            raise ConfigurationError(f"unknown config key {k!r}")
        if not _type_ok(v, _FIELDS[k]):
            raise ConfigurationError(f"config key {k!r}: {v!r} has the wrong type")
        overrides[k] = _coerce(v, _FIELDS[k])
    for k, v in (("seed", doc.get("seed")), ("trials", doc.get("trials")),
                 ("seed", seed), ("trials", trials)):
        if v is not None:
            if not _type_ok(v, 0):
                raise ConfigurationError(f"{k} must be an integer, got {v!r}")
            overrides[k] = v
    cfg = SimConfig(**overrides)

    params = dict(exp.sweep)
    user = doc.get("sweep") or {}
    if not isinstance(user, dict):
        raise ConfigurationError("'sweep' must be a mapping")
    for k, v in user.items():
        if k not in params:
            raise ConfigurationError(f"experiment {exp_id} has no sweep parameter {k!r}; "
                                     f"known: {sorted(params)}")
        if not _type_ok(v, exp.sweep[k]):
            raise ConfigurationError(f"sweep parameter {k!r}: {v!r} has the wrong type")
        params[k] = _coerce(v, exp.sweep[k])
    for s in params.get("schemes", ()):
        if s not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {s!r}")
    if exp_id == "rate-table-dump" and params["fixture"] not in ("none", "worked", "identity"):
        raise ConfigurationError(f"fixture {params['fixture']!r} not in none/worked/identity")
    if exp_id == "tsp-bench" and params["priors"] not in ex.PRIOR_FAMILIES:
        raise ConfigurationError(f"priors {params['priors']!r} not in {ex.PRIOR_FAMILIES}")

    w = doc.get("workers", 1) if workers is None else workers
    if not _type_ok(w, 0) or w < 1:
        raise ConfigurationError(f"workers must be a positive integer, got {w!r}")
    spec = ExperimentSpec(exp_id, cfg, params, w)
    _check_points(spec)
    return spec


def _check_points(spec):
    """Build every sweep point's config so bad combinations fail before any work."""
    p, cfg = spec.sweep, spec.cfg
    for s in p.get("schemes", ("robust",)):
        if spec.experiment == "fig4-cfb-ser":
            for c in p["c_fb"]:
                cfg.replace(scheme=s, c_fb=c, feedback_ser=p["ser"], n_symbols=1)
        elif spec.experiment == "fig5-cfb-snr":
            for b in p["levels"]:
                cfg.replace(scheme=s, c_fb=b * p["n_symbols"], n_symbols=p["n_symbols"])
        elif spec.experiment == "fig6-ser-sweep":
            for q in p["ser"]:
                cfg.replace(scheme=s, feedback_ser=q)
    if spec.experiment == "tsp-bench" and (2**p["c_fb"]) > 10:
        raise ConfigurationError(f"tsp-bench c_fb={p['c_fb']} exceeds exhaustive search limit")


# --- output ----------------------------------------------------------------------


def _output_dir(out, spec) -> Path:
    if out is None:
        root = Path(os.environ.get(OUTPUT_ENV, "runs"))
        out = root / f"{spec.experiment}-seed{spec.cfg.seed}"
    out = Path(out)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise OutputError(f"output directory {out} exists and is not empty")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create {out}: {e.strerror}") from None
    if not os.access(out, os.W_OK):
        raise OutputError(f"output directory {out} is not writable")
    return out


def run_spec(spec: ExperimentSpec, out) -> Path:
    """Run ``spec`` and write its tables and manifest; returns the directory."""
    out = _output_dir(out, spec)
    t0 = time.perf_counter()
    produced = EXPERIMENTS[spec.experiment].run(spec)
    files, results = produced[0], produced[1]
    for name, text in files.items():
        (out / name).write_text(text)
    if len(produced) > 2:
        ctx = produced[2]
        ctx.codebook.save(out / "codebook.bin")
        save_matrix_csv(out / "transition.csv", ctx.p_ch)
        if ctx.mapping is not None:
            ctx.mapping.to_csv(out / "mapping.csv")
        files = {**files, "codebook.bin": None, "transition.csv": None}
        if ctx.mapping is not None:
            files["mapping.csv"] = None
    manifest = {
        **spec.to_dict(),
        "seed": spec.cfg.seed,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": sorted(files),
        "results": results,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    return out


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def _read_yaml(path):
    try:
        with open(path) as f:
            return yaml.safe_load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: malformed YAML ({str(e).splitlines()[0]})") from None


def _cmd_run(args):
    spec = load_spec(_read_yaml(args.config), seed=args.seed, trials=args.trials,
                     workers=args.workers)
    out = run_spec(spec, args.out)
    print(out)
    return 0


def _cmd_dump(args):
    if args.config is not None:
        doc = _read_yaml(args.config)
        if not isinstance(doc, dict):
            raise ConfigurationError("config file must hold a mapping at top level")
        doc = {**doc, "experiment": "rate-table-dump"}
        doc.pop("sweep", None)
    else:
        doc = {"experiment": "rate-table-dump",
               "config": {"eps": 0.1 if args.fixture == "worked" else 0.05},
               "sweep": {"fixture": args.fixture, "stated_i_star": args.stated_i_star}}
    spec = load_spec(doc, seed=args.seed)
    text = _dump(spec)[0]["rate_table.csv"]
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-sdma", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<experiment>-seed<seed>)")
    r.set_defaults(func=_cmd_run)

    d = sub.add_parser("dump-rate-table", help="print a rate table as CSV")
    d.add_argument("config", nargs="?", help="YAML config; omit to use a built-in fixture")
    d.add_argument("--fixture", choices=("worked", "identity"), default="worked")
    d.add_argument("--stated-i-star", action="store_true",
                   help="force worst neighbour 2 for row 0 of the worked fixture")
    d.add_argument("--seed", type=int)
    d.add_argument("--out")
    d.set_defaults(func=_cmd_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ComplexityError) as e:
        return _fail(type(e).__name__, str(e), 2)
    except OutputError as e:
        return _fail("OutputError", str(e), 3)
    except OSError as e:
        return _fail(type(e).__name__, str(e), 3)
    except ValueError as e:
        return _fail(type(e).__name__, str(e), 2)


if __name__ == "__main__":
    sys.exit(main())
