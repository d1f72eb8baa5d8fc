"""Dispatch of configured experiments and persistence of their outputs."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .ballistic import EstimationConfig, cone_directions, decay_fit, polynomial_condition_check
from .geometry import BoundaryClass
from .quenched import SlabGeometry
from .renorm import SeedStep, dk_sequence, build_ladder, seed_rhs_eval, verify_quenched_chain
from .walks import EXACT, EventSpec, StopSpec, estimate_probability, independence_diagnostic, replica_environment

MANIFEST = "manifest.json"
ESTIMATE_COLUMNS = ("experiment_id", "estimand", "mode", "n_env", "n_walk", "estimate", "ci_lo", "ci_hi",
                    "seed", "wall_time_s")


@dataclass
class RunManifest:
    kind: str
    config_hash: str
    tool_version: str
    started: str
    finished: str
    files: dict            # name -> sha256
    config: dict
    threads: int = 1
    wall_time_s: float = 0.0
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class _Writer:
    """Collects output files; data files are deterministic, checksums go to the manifest."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def text(self, name, text):
        data = text.encode("utf-8")
        (self.dir / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_default) + "\n")

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self.text(name, buf.getvalue())


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _estimate_row(cfg, estimand, est):
    return (cfg.hash[:12], estimand, est.mode, est.n_env, est.n_walk if est.mode == "mc" else EXACT,
            est.estimate, est.lower, est.upper, cfg.seed, None)


def resolve_out_dir(cfg, out=None):
    if out:
        return Path(out)
    env = os.environ.get("RWRE_OUT")
    if env:
        return Path(env)
    if cfg.out:
        return Path(cfg.out)
    return Path("rwre_out") / f"{cfg.kind}-{cfg.hash[:12]}"


def run_experiment(cfg, out=None, threads=1):
    """Run ``cfg``, write its data files and ``manifest.json``; returns the manifest."""
    cfg.validate()
    out_dir = resolve_out_dir(cfg, out)
    w = _Writer(out_dir)
    started, t0 = _now(), time.perf_counter()
    timings = _DISPATCH[cfg.kind](cfg, w, threads) or {}
    wall = time.perf_counter() - t0
    cfg_doc = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    w.json("config.json", cfg_doc)
    man = RunManifest(cfg.kind, cfg.hash, __version__, started, _now(), dict(sorted(w.files.items())),
                      cfg_doc, threads, wall, timings)
    (out_dir / MANIFEST).write_text(json.dumps(man.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return man


# --------------------------------------------------------------------------
# experiment kinds


def _slab_event(cfg):
    g = cfg.geometry
    stop = StopSpec.slab(cfg.direction(), float(g["L"]))
    if "Lt" in g:
        stop = StopSpec(stop.frame, stop.lower, stop.upper, float(g["Lt"]))
    start = tuple(g["start"]) if "start" in g else None
    return EventSpec(stop, BoundaryClass.NEGATIVE, start)


def _estimation(cfg, threads):
    return EstimationConfig(cfg.sample("n_env"), cfg.sample("n_walk"), float(cfg.sample("confidence")),
                            cfg.seed, cfg.sample("method"), threads)


def _run_exit(cfg, w, threads):
    law = cfg.law_obj()
    event = _slab_event(cfg)
    n_walk = cfg.sample("n_walk") if cfg.kind == "exit-mc" else EXACT
    est = estimate_probability(law, event, cfg.sample("n_env"), n_walk, float(cfg.sample("confidence")),
                               cfg.seed, cfg.sample("method"), threads)
    w.csv("estimates.csv", ESTIMATE_COLUMNS, [_estimate_row(cfg, "slab_back_exit", est)])
    w.json("result.json", {"estimand": "slab_back_exit", "L": cfg.geometry["L"], **est.to_dict()})


def _run_pm(cfg, w, threads):
    law = cfg.law_obj()
    g = cfg.geometry
    dirs = cone_directions(cfg.direction(), float(g.get("half_angle", 0.0)), int(g.get("k_dirs", 1)))
    conf = _estimation(cfg, threads)
    verdicts = [polynomial_condition_check(law, dv, g["M"], g["L"], conf) for dv in dirs]
    w.json("verdicts.json", [v.to_dict() for v in verdicts])
    w.csv("verdicts.csv", ("condition", "direction", "M", "L", "estimate", "ci_lo", "ci_hi", "threshold",
                           "verdict", "margin"),
          [(v.condition, " ".join(repr(float(c)) for c in v.params["direction"]), v.params["M"], v.params["L"],
            v.estimate, v.ci_lower, v.ci_upper, v.threshold, v.verdict, v.margin) for v in verdicts])


def _run_decay(cfg, w, threads):
    law = cfg.law_obj()
    g = cfg.geometry
    gammas = tuple(g.get("gammas", (0.25, 0.5, 0.75, 1.0)))
    fit = decay_fit(law, cfg.direction(), list(g["scales"]), gammas, _estimation(cfg, threads),
                    float(g.get("residual_threshold", 0.05)))
    w.csv("decay.csv", ("L", "estimate", "ci_lo", "ci_hi"),
          [(float(L), p, c[0], c[1]) for L, p, c in zip(fit.scales, fit.probabilities, fit.ci)])
    w.json("fit.json", fit.to_dict())


def _geom(cfg):
    g = cfg.geometry
    return SlabGeometry.create(cfg.direction(), float(g["L0"]), float(g["Lt1"]))


def _run_renorm_verify(cfg, w, threads):
    from .walks import _map

    law = cfg.law_obj()
    geom = _geom(cfg)
    N = int(cfg.geometry["N"])
    cons = cfg.constants_obj()

    def one(r):
        env = replica_environment(law, cfg.seed, r)
        return verify_quenched_chain(env, geom, N, cons, seed=env.seed).to_dict()

    recs = _map(one, range(cfg.sample("n_env")), threads)
    for r, rec in enumerate(recs):
        rec["replica"] = r
    w.json("verify.json", recs)
    rows = []
    for rec in recs:
        q, e, x, s = rec["quenine"], rec["eqcom"], rec["excursion"], rec["supermartingale"]
        rows.append((rec["replica"], rec["seed"], rec["in_T"], q["lhs"], q["rhs"], q["rhs_upper"], q["ok"],
                     q["violation"], None if e is None else e["ok"], None if e is None else e["violation"],
                     None if x is None else x["ok"], s["ok"], s["violation"]))
    w.csv("verify.csv", ("replica", "seed", "in_T", "quenine_lhs", "quenine_rhs", "quenine_rhs_upper",
                         "quenine_ok", "quenine_violation", "eqcom_ok", "eqcom_violation", "excursion_ok",
                         "supermartingale_ok", "supermartingale_violation"), rows)
    w.json("verify_summary.json", summarize_verify(recs))


def summarize_verify(recs):
    return {
        "n_env": len(recs),
        "in_T": sum(1 for r in recs if r["in_T"]),
        "in_T_undecided": sum(1 for r in recs if r["in_T"] is None),
        "quenine_ok": sum(1 for r in recs if r["quenine"]["ok"]),
        "quenine_violations": sum(1 for r in recs if r["quenine"]["violation"]),
        "eqcom_ok": sum(1 for r in recs if r["eqcom"] is not None and r["eqcom"]["ok"]),
        "eqcom_violations": sum(1 for r in recs if r["eqcom"] is not None and r["eqcom"]["violation"]),
        "excursion_ok": sum(1 for r in recs if r["excursion"] is not None and r["excursion"]["ok"]),
        "supermartingale_ok": sum(1 for r in recs if r["supermartingale"]["ok"]),
        "note": "eqcom and excursion are evaluated on typical-event members only",
    }


def _run_ladder(cfg, w, threads):
    g = cfg.geometry
    law = cfg.law_obj()
    cons = cfg.constants_obj()
    ladder = build_ladder(g["L0"], g["Lt0"], g["nu"], g["k_max"], law.d, g.get("require_seed", False))
    trace = dk_sequence(cons, float(g["nu"]), float(g["L0"]), int(g["k_max"]), g.get("d0"))
    out = {
        "L": ladder.L, "Lt": ladder.Lt, "N": ladder.N, "Nt": ladder.Nt,
        "constraints": ladder.constraints,
        "recursion": trace.to_dict(),
        "constants": asdict(cons),
    }
    if "E_q0" in g:
        step = SeedStep.from_ladder(ladder, 0)
        rhs = seed_rhs_eval(cons, step, float(g["E_q0"]))
        out["seed_rhs"] = {"log_terms": list(rhs.log_terms), "log_total": rhs.log_total, "note": rhs.note}
    w.json("ladder.json", out)
    w.csv("ladder.csv", ("k", "L", "Lt", "d_k"),
          [(k, ladder.L[k], ladder.Lt[k], trace.d[k]) for k in range(len(ladder.L))])


def _run_independence(cfg, w, threads):
    law = cfg.law_obj()
    geom = _geom(cfg)
    levels = list(cfg.geometry.get("levels", range(-2, 3)))
    res = independence_diagnostic(law, geom, levels, cfg.sample("n_env"), cfg.seed, threads)
    w.csv("independence.csv", ["replica"] + [f"q_tilde_{i}" for i in levels],
          [[r] + [float(v) for v in row] for r, row in enumerate(res.values)])
    w.json("independence.json", {
        "levels": levels,
        "corr": np.nan_to_num(res.corr, nan=0.0).tolist(),
        "flags": res.flags.tolist(),
        "threshold": res.threshold,
        "n_flagged_pairs": res.n_flagged_pairs,
        "n_pairs": res.n_pairs,
        "disjoint_reads": res.disjoint_reads,
    })


_DISPATCH = {
    "exit-exact": _run_exit,
    "exit-mc": _run_exit,
    "pm-check": _run_pm,
    "decay-fit": _run_decay,
    "renorm-verify": _run_renorm_verify,
    "renorm-ladder": _run_ladder,
    "independence": _run_independence,
}
