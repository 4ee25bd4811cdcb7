"""Execute a normalized config and assemble the JSON report (plus optional CSV files)."""
from __future__ import annotations

import csv
import json
import math
import time
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from . import dichotomy as dch
from . import growth_rate as gr
from . import hull
from . import linear_system as ls
from . import spectrum as sp
from .config import normalize
from .errors import ConfigError, ParameterError
from .grids import PairGrid, WindowSchedule
from .suite import run_suite

SCHEMA_VERSION = "1"


def to_jsonable(x):
    """Plain JSON types; infinities become ``"+inf"``/``"-inf"``, NaN becomes null."""
    if isinstance(x, dict):
        return {str(k.value if isinstance(k, Enum) else k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, Enum):
        return x.value
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "+inf" if x > 0 else "-inf"
        return x
    return x


class _Context:
    """Resolved numerics for one run (window scale and seed already applied)."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.inputs = cfg["inputs"]
        n = cfg["numerics"]
        self.n = n
        scale = n["window_scale"]
        self.comparison_window = WindowSchedule(**n["comparison_window"]).scaled(scale)
        self.spectrum_window = WindowSchedule(**n["spectrum_window"]).scaled(scale)
        self.seed = int(n["seed"])
        pg = n["pair_grid"]
        self.pair_T = float(pg["T"]) * scale
        self.pair_counts = (int(pg["n_anchor"]), int(pg["n_sep"]))
        self.method = self.inputs.get("method", None)

    def rate(self, key="rate"):
        if key not in self.inputs:
            raise ConfigError("is a required property", f"inputs.{key}")
        try:
            return gr.GrowthRate.from_dict(self.inputs[key])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid rate declaration ({exc})", f"inputs.{key}") from exc

    def system(self):
        try:
            return ls.system_from_dict(self.inputs["system"])
        except KeyError as exc:
            raise ConfigError(f"missing parameter {exc}", "inputs.system") from exc
        except (ParameterError, TypeError) as exc:
            raise ConfigError(str(exc), "inputs.system") from exc

    def grid(self, system):
        if system.log_space:
            return PairGrid.default(self.pair_T, *self.pair_counts, seed=self.seed)
        return dch.default_grid(system, self.pair_T, self.seed)

    def tolerance(self, system):
        method = self.method or ("closed" if system.has_closed_form else "rk4")
        return self.n["closed_form_tol"] if method == "closed" else self.n["numeric_tol"]

    def certificate(self, system=None, key="certificate"):
        d = dict(self.inputs[key])
        d.setdefault("rate", self.inputs.get("rate"))
        if d["rate"] is None:
            raise ConfigError("certificate needs a rate", f"inputs.{key}.rate")
        if key == "certificate" and "projector" not in d:
            d["projector"] = {"kind": d["projector_kind"], "dimension": system.dimension if system else 1}
        try:
            if key == "growth_certificate":
                return dch.GrowthCertificate.from_dict(d)
            return dch.DichotomyCertificate.from_dict(d)
        except ParameterError as exc:
            raise ConfigError(str(exc), f"inputs.{key}") from exc


def _rates_compare(ctx):
    mu, sigma = ctx.rate("rate"), ctx.rate("sigma")
    mode = ctx.inputs.get("mode", "both")
    out = {"mu": mu.to_dict(), "sigma": sigma.to_dict()}
    if mode in ("weak", "both"):
        out["weak"] = gr.compare_weak(mu, sigma, ctx.comparison_window, ctx.n["weak_step"],
                                      ctx.n["plateau_tol"], ctx.n["divergence_threshold"]).to_dict()
    if mode in ("strong", "both"):
        out["strong"] = gr.compare_strong(mu, sigma, ctx.comparison_window, ctx.n["strong_threshold"],
                                          ctx.n["strong_step"]).to_dict()
    return out, True, "comparison complete", {}


def _rates_classify(ctx):
    rc = gr.classify(ctx.rate(), window=ctx.comparison_window)
    return rc.to_dict(), True, f"rate class {rc.kind.value}", {}


def _rates_limit_probe(ctx):
    rate = ctx.rate()
    res = gr.translated_limit_probe(rate, float(ctx.inputs["t"]),
                                    threshold=ctx.n["divergence_threshold"])
    return res.to_dict(), True, f"translated limit {res.kind.value}", {}


def _system_evolve(ctx):
    system = ctx.system()
    t, s = float(ctx.inputs["t"]), float(ctx.inputs["s"])
    method = ctx.method or ("closed" if system.has_closed_form else "rk4")
    op = ls.EvolutionOperator(system, method, ctx.n["evolution"]["step"])
    Phi, log_norm = op.evaluate(t, s), float(op.log_norm(t, s))
    out = {"system": system.to_dict(), "method": method, "t": t, "s": s,
           "Phi": Phi, "log_norm": log_norm}
    if method != "closed":
        out["richardson_error"] = op.richardson_error(t, s)
    if method != "closed" and system.has_closed_form:
        ref = ls.EvolutionOperator(system, "closed").evaluate(t, s)
        out["closed_form_relative_error"] = float(np.linalg.norm(Phi - ref) / max(np.linalg.norm(ref), 1e-300))
    ts = np.linspace(s, t, 101)
    grid_norms = op.log_norm(ts, np.full_like(ts, s))
    csv_rows = [("t", "s", "log_norm")] + [(a, s, b) for a, b in zip(ts.tolist(), np.atleast_1d(grid_norms).tolist())]
    return out, True, f"log ||Phi|| = {log_norm:.6g}", {"log_norm_grid.csv": csv_rows}


def _dichotomy_verify(ctx):
    system = ctx.system()
    cert = ctx.certificate(system)
    rep = dch.verify_dichotomy(system, cert, ctx.grid(system), ctx.method, ctx.tolerance(system))
    out = {"certificate": cert.to_dict(), **rep.to_dict()}
    return out, rep.passed, f"worst margin {rep.worst_margin:.6g}", {}


def _growth_verify(ctx):
    system = ctx.system()
    cert = ctx.certificate(system, "growth_certificate")
    rep = dch.verify_growth(system, cert, ctx.grid(system), ctx.method, ctx.tolerance(system))
    out = {"certificate": cert.to_dict(), **rep.to_dict()}
    return out, rep.passed, f"worst margin {rep.worst_margin:.6g}", {}


def _projector(ctx, system):
    kind = ctx.inputs["projector_kind"]
    if kind == "constant":
        if "projector_matrix" not in ctx.inputs:
            raise ConfigError("is a required property", "inputs.projector_matrix")
        try:
            return dch.Projector.constant(ctx.inputs["projector_matrix"])
        except (ParameterError, ValueError) as exc:
            raise ConfigError(str(exc), "inputs.projector_matrix") from exc
    return dch.Projector(kind, system.dimension)


def _dichotomy_fit(ctx):
    system = ctx.system()
    proj = _projector(ctx, system)
    kw = {k: ctx.inputs.get(k) for k in ("alpha", "beta", "theta", "nu")}
    try:
        fit = dch.fit_minimal_K(system, proj, ctx.rate(), grid=ctx.grid(system),
                                plateau_tol=ctx.n["plateau_tol"], method=ctx.method, **kw)
    except ParameterError as exc:
        raise ConfigError(str(exc), "inputs") from exc
    sub = dch.subbundle_probe(system, ctx.n["subbundle_horizon"], method=ctx.method)
    out = {"fit": fit.to_dict(), "subbundles": sub.to_dict()}
    msg = f"K = exp({fit.log_K:.6g}), {'stable' if fit.stable else 'unstable under window doubling'}"
    return out, fit.stable, msg, {}


def _dichotomy_propagate(ctx):
    system = ctx.system() if "system" in ctx.inputs else None
    cert = ctx.certificate(system)
    rows, ok = [], True
    for tau in ctx.inputs["taus"]:
        moved = dch.propagate_dichotomy(cert, float(tau))
        row = {"tau": float(tau), "certificate": moved.to_dict()}
        if system is not None:
            shifted = ls.translate_system(system, float(tau))
            rep = dch.verify_dichotomy(shifted, moved, ctx.grid(shifted), ctx.method, ctx.tolerance(shifted))
            row["verification"] = rep.to_dict()
            ok = ok and rep.passed
        rows.append(row)
    msg = "all translated certificates verified" if system is not None else "certificates propagated"
    return {"base": cert.to_dict(), "translations": rows}, ok, msg if ok else "a translated certificate failed", {}


def _spectrum_estimate(ctx):
    system, rate = ctx.system(), ctx.rate()
    est = sp.estimate_spectrum(system, rate, ctx.spectrum_window, ctx.n["spectrum_step"])
    out = {"spectrum": est.to_dict()}
    if "gammas" in ctx.inputs:
        out["resolvent"] = [sp.resolvent_test(system, rate, sp.ext_from_json(g), ctx.grid(system),
                                              ctx.spectrum_window).to_dict()
                            for g in ctx.inputs["gammas"]]
    rows = [("lower", "upper", "lower_uncertainty", "upper_uncertainty")]
    for (a, b), (ua, ub) in zip(est.intervals, est.uncertainties):
        rows.append((sp.ext_to_json(a), sp.ext_to_json(b), ua, ub))
    return out, True, f"{len(est.intervals)} spectral interval(s)", {"spectrum_intervals.csv": rows}


def _schedules(ctx):
    h = ctx.n["hull"]
    dirs = ctx.inputs.get("directions", ["+", "-"])
    return dirs, [hull.default_schedule(1 if d == "+" else -1, h["schedule_n_min"], h["schedule_n_max"]) for d in dirs]


def _hull_probe(ctx):
    system = ctx.system()
    h = ctx.n["hull"]
    dirs, scheds = _schedules(ctx)
    probes, csv_files = {}, {}
    for d, sched in zip(dirs, scheds):
        rep = hull.pointwise_limit_probe(hull.OrbitProbe(system, sched, h["compact_radius"]),
                                         h["cauchy_tol"], h["divergence_level"])
        probes[d] = rep.to_dict()
        if rep.limit is not None and rep.limit.ndim == 1:
            name = "hull_limit_plus.csv" if d == "+" else "hull_limit_minus.csv"
            csv_files[name] = [("t", "limit")] + rep.limit_csv_rows()
    uli = hull.uniform_local_integrability(system, h["uli_window"])
    out = {"probes": probes, "local_integrability": uli.to_dict()}
    return out, True, ", ".join(f"{d}: {p['verdict']}" for d, p in probes.items()), csv_files


def _hull_classify(ctx):
    system = ctx.system()
    h = ctx.n["hull"]
    dich = ctx.certificate(system) if "certificate" in ctx.inputs else None
    growth = ctx.certificate(system, "growth_certificate") if "growth_certificate" in ctx.inputs else None
    query = ctx.rate("query_rate") if "query_rate" in ctx.inputs else None
    _, scheds = _schedules(ctx)
    try:
        cls = hull.classify_limit_behavior(system, dich, growth, query, ctx.inputs.get("periodic"),
                                           h["compact_radius"], scheds, h["uli_window"], h["bounded_horizon"])
    except ParameterError as exc:
        raise ConfigError(str(exc), "inputs") from exc
    ok = not cls.falsifications
    msg = cls.outcome if ok else f"{len(cls.falsifications)} falsified prediction(s)"
    return cls.to_dict(), ok, msg, {}


def _paper_examples(ctx):
    mutation = ctx.inputs.get("mutation", "none")
    checks = run_suite(None if mutation == "none" else mutation)
    failed = [c["name"] for c in checks if not c["passed"]]
    out = {"mutation": mutation, "checks": checks, "failed": failed}
    msg = f"{len(checks) - len(failed)}/{len(checks)} checks passed"
    if failed:
        msg += "; failed: " + ", ".join(failed)
    return out, not failed, msg, {}


HANDLERS = {
    "rates-compare": _rates_compare,
    "rates-classify": _rates_classify,
    "rates-limit-probe": _rates_limit_probe,
    "system-evolve": _system_evolve,
    "dichotomy-verify": _dichotomy_verify,
    "dichotomy-fit": _dichotomy_fit,
    "dichotomy-propagate": _dichotomy_propagate,
    "growth-verify": _growth_verify,
    "spectrum-estimate": _spectrum_estimate,
    "hull-probe": _hull_probe,
    "hull-classify": _hull_classify,
    "paper-examples": _paper_examples,
}


def run(config: dict, seed=None, window_scale=None, fmt=None, out_dir=None) -> tuple[dict, dict]:
    """Return ``(report, csv_tables)`` for a raw config; raises ``ConfigError`` on bad input."""
    cfg = normalize(config, seed, window_scale, fmt, out_dir)
    ctx = _Context(cfg)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    results, passed, summary, tables = HANDLERS[cfg["command"]](ctx)
    elapsed = time.perf_counter() - t0
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg["command"],
        "config": cfg,
        "results": results,
        "verdict": {"passed": bool(passed), "summary": summary},
        "provenance": {
            "package_version": __version__,
            "numpy_version": np.__version__,
            "started_at": started,
            "elapsed_seconds": elapsed,
            "tolerances": {k: cfg["numerics"][k] for k in
                           ("closed_form_tol", "numeric_tol", "plateau_tol", "divergence_threshold")},
        },
    }
    return to_jsonable(report), tables


def write_outputs(report: dict, tables: dict, out_dir, fmt: str = "json") -> list:
    """Write ``report.json`` (and the CSV tables for ``json+csv``); returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    written = [path]
    if fmt == "json+csv":
        for name, rows in tables.items():
            p = out / name
            with p.open("w", newline="") as fh:
                csv.writer(fh).writerows(to_jsonable(rows))
            written.append(p)
    return written


def strip_provenance(report: dict) -> dict:
    """Report without wall-clock fields, for determinism comparisons."""
    return {k: v for k, v in report.items() if k != "provenance"}


__all__ = ["run", "write_outputs", "to_jsonable", "strip_provenance", "SCHEMA_VERSION"]
