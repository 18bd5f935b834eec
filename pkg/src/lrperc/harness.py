"""Run orchestration: validated configs, replica sweeps, persisted results.

A run directory holds ``resolved_config.json``, ``replicas.jsonl`` (one line
per finished replica, used for resuming), ``results.jsonl`` (estimates, fits,
audits), CSV files for plotting, ``audit_report.json``/``.txt`` and, for
oracle runs, ``violations.jsonl``. No timestamps are written, so identical
configs produce identical bytes.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import multiprocessing as mp
import os
from pathlib import Path

import jsonschema
import numpy as np

from .clusters import build_clusters
from .errors import ConfigError, DomainError, InsufficientDataError, SearchError
from .estimators import (beta_c_search, bound_audit, exponent_fit, fit_window, records_from_matrix,
                         tail_row, two_point_row, typical_max_from_samples)
from .ensemble import Ensemble
from .ghost import two_ghost_audit
from .kernel import Kernel, TorusBox
from .oracle import corpus, run_suite
from .sampler import sample_configuration

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "LRPERC_OUTPUT_ROOT"
AUDITS = ("tail", "two_point", "typical_max", "bound", "two_ghost", "oracle")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["d", "alpha"],
            "properties": {
                "d": {"type": "integer", "minimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "amplitude": {"type": "number", "exclusiveMinimum": 0},
                "norm": {"enum": ["L1", "L2", "Linf"]},
                "form": {"enum": ["power", "table"]},
                "radii": {"type": "array", "items": {"type": "number"}},
                "weights": {"type": "array", "items": {"type": "number"}},
                "normalize": {"type": "boolean"},
            },
        },
        "boxes": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False, "required": ["L"],
                "properties": {"L": {"type": "integer", "minimum": 2, "multipleOf": 2},
                               "boundary": {"enum": ["torus", "free"]}},
            },
        },
        "beta": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "grid": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "search": {
                    "type": "object", "additionalProperties": False, "required": ["sizes"],
                    "properties": {
                        "sizes": {"type": "array", "minItems": 2,
                                  "items": {"type": "integer", "minimum": 2, "multipleOf": 2}},
                        "replicas": {"type": "integer", "minimum": 2},
                        "beta_lo": {"type": "number", "minimum": 0},
                        "beta_hi": {"type": "number", "exclusiveMinimum": 0},
                        "expand_to": {"type": "number", "exclusiveMinimum": 0},
                        "threshold_exponent": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "drift_tol": {"type": "number", "minimum": 0},
                    },
                },
            },
        },
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "method": {"enum": ["coupled", "geometric"]},
        "periodized": {"type": "boolean"},
        "edge_cap": {"type": "integer", "minimum": 1},
        "audits": {"type": "array", "items": {"enum": list(AUDITS)}, "uniqueItems": True},
        "tail": {"type": "object", "additionalProperties": False,
                 "properties": {"n_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                                "n_points": {"type": "integer", "minimum": 2}}},
        "two_point": {"type": "object", "additionalProperties": False,
                      "properties": {"r_max": {"type": "integer", "minimum": 1}}},
        "fit": {"type": "object", "additionalProperties": False,
                "properties": {"lo": {"type": "number", "exclusiveMinimum": 0},
                               "hi": {"type": "number", "exclusiveMinimum": 0},
                               "tolerance": {"type": "number", "minimum": 0}}},
        "two_ghost": {"type": "object", "additionalProperties": False,
                      "properties": {
                          "ns": {"type": "array", "items": {"type": "number", "minimum": 1}},
                          "lambdas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                          "beta_fractions": {"type": "array",
                                             "items": {"type": "number", "exclusiveMinimum": 0,
                                                       "exclusiveMaximum": 1}},
                          "betas": {"type": "array", "items": {"type": "number", "minimum": 0}},
                          "replicas": {"type": "integer", "minimum": 1},
                          "variants": {"type": "array",
                                       "items": {"enum": ["improved", "weighted", "kernel"]}}}},
        "oracle": {"type": "object", "additionalProperties": False,
                   "properties": {"max_vertices": {"type": "integer", "minimum": 2, "maximum": 5},
                                  "n_random": {"type": "integer", "minimum": 0},
                                  "thetas": {"type": "array",
                                             "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}}}},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
    },
    "required": ["schema_version"],
}

DEFAULTS = {
    "name": "run",
    "kernel": {"amplitude": 1.0, "norm": "L2", "form": "power", "normalize": True},
    "boxes": [{"L": 1024, "boundary": "torus"}],
    "replicas": 100,
    "seed": 0,
    "method": "coupled",
    "periodized": False,
    "edge_cap": 200_000_000,
    "audits": ["tail", "two_point", "typical_max"],
    "tail": {"n_points": 60},
    "two_point": {},
    "fit": {"lo": 10.0, "tolerance": 0.05},
    "two_ghost": {"ns": [16, 64, 256], "lambdas": [16, 64, 256],
                  "beta_fractions": [0.7, 0.85, 0.95], "replicas": 100,
                  "variants": ["improved", "weighted", "kernel"]},
    "oracle": {"max_vertices": 5, "n_random": 200, "thetas": [0.0, 0.2, 0.4]},
    "workers": 1,
}

SEARCH_DEFAULTS = {"replicas": 200, "beta_lo": 0.0, "beta_hi": 4.0, "expand_to": 64.0,
                   "threshold_exponent": 0.75, "level": 0.5, "drift_tol": 0.02}

# keys that do not change any output byte
_NON_SEMANTIC = ("output_dir", "workers")


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, e.absolute_path)
    if set(cfg.get("audits", DEFAULTS["audits"])) - {"oracle"} and "kernel" not in cfg:
        raise ConfigError("'kernel' is required unless only the oracle suite is selected")
    beta = cfg.get("beta", {})
    if "grid" in beta and "search" in beta:
        raise ConfigError("give either a grid or a search, not both", ("beta",))


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(cfg: dict, *, seed: int | None = None, workers: int | None = None,
                   output_dir: str | None = None) -> dict:
    """Validate, apply overrides, fill defaults."""
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = seed
    if workers is not None:
        cfg["workers"] = workers
    if output_dir is not None:
        cfg["output_dir"] = output_dir
    validate_config(cfg)
    res = _merge(DEFAULTS, cfg)
    if "search" in res.get("beta", {}):
        res["beta"]["search"] = _merge(SEARCH_DEFAULTS, res["beta"]["search"])
    if "beta" not in res:
        res["beta"] = {"grid": [0.0]} if set(res["audits"]) - {"oracle"} else {}
    for b in res["boxes"]:
        b.setdefault("boundary", "torus")
    return res


def run_id(resolved: dict) -> str:
    sem = {k: v for k, v in resolved.items() if k not in _NON_SEMANTIC}
    blob = json.dumps(sem, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def output_root(resolved: dict) -> Path:
    return Path(resolved.get("output_dir") or os.environ.get(OUTPUT_ROOT_ENV) or "lrperc-runs")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"cannot serialize {type(o)}")


def build_kernel(resolved: dict) -> Kernel:
    k = Kernel.from_dict(resolved["kernel"])
    return k.normalized() if resolved["kernel"].get("normalize", True) else k


def n_grid(resolved: dict, box: TorusBox) -> np.ndarray:
    t = resolved["tail"]
    if "n_grid" in t:
        return np.asarray(sorted(set(t["n_grid"])), dtype=np.int64)
    return np.unique(np.round(np.logspace(0, math.log10(box.N), t["n_points"])).astype(np.int64))


def r_grid(resolved: dict, box: TorusBox) -> np.ndarray:
    rmax = resolved["two_point"].get("r_max")
    if rmax is None:
        rmax = max(int(box.L ** 0.8 / 10), 16)
    rmax = min(rmax, (box.L - 1) // 2) if box.is_torus else min(rmax, box.L - 1)
    return np.arange(0, rmax + 1)


# ---------------------------------------------------------------------------
# replica jobs

def _replica_job(args) -> dict:
    box_d, kernel_d, beta, seed, r, method, periodized, edge_cap, ns, rs = args
    box = TorusBox.from_dict(box_d)
    kernel = Kernel.from_dict(kernel_d)
    cfg = sample_configuration(box, kernel, beta, seed, r, method=method, periodized=periodized,
                               edge_cap=edge_cap)
    f = build_clusters(cfg)
    out = {"L": box.L, "beta": beta, "replica": r, "n_edges": cfg.n_edges, "kmax": f.largest,
           "tail": tail_row(f, ns).tolist()}
    if rs is not None:
        out["two_point"] = two_point_row(f, rs).tolist()
    return out


def _read_jsonl(path: Path) -> list[dict]:
    """Valid lines of a JSONL file; a truncated final line is dropped."""
    if not path.exists():
        return []
    rows = []
    with open(path, "rb") as fh:
        data = fh.read()
    good = data[: data.rfind(b"\n") + 1]
    if len(good) != len(data):
        with open(path, "wb") as fh:
            fh.write(good)
    for line in good.decode().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    path.write_text(buf.getvalue())


class _Writer:
    def __init__(self, path: Path):
        self.path = path
        self.path.write_text("")

    def __call__(self, obj):
        with open(self.path, "a") as fh:
            fh.write(_dumps(obj) + "\n")


def _pool_map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        for j in jobs:
            yield fn(j)
        return
    with mp.get_context("spawn").Pool(workers) as pool:
        yield from pool.imap(fn, jobs, chunksize=max(1, len(jobs) // (8 * workers)))


# ---------------------------------------------------------------------------
# run

def run(config: dict, *, seed=None, workers=None, output_dir=None, only=None) -> tuple[int, Path]:
    """Execute a config; returns ``(exit_status, run_directory)``.

    ``only`` restricts the audits (used by the CLI subcommands). Exit status is
    1 when any asserted audit fails, 0 otherwise.
    """
    res = resolve_config(config, seed=seed, workers=workers, output_dir=output_dir)
    if only is not None:
        res["audits"] = [a for a in res["audits"] if a in only] or list(only)
    rid = run_id(res)
    outdir = output_root(res) / f"{res['name']}-{rid}"
    outdir.mkdir(parents=True, exist_ok=True)
    sem = {k: v for k, v in res.items() if k not in _NON_SEMANTIC}
    (outdir / "resolved_config.json").write_text(json.dumps(sem, indent=2, sort_keys=True) + "\n")
    results = _Writer(outdir / "results.jsonl")
    audit_rows = []
    audits = set(res["audits"])

    if "oracle" in audits:
        oc = res["oracle"]
        rep = run_suite(corpus(oc["max_vertices"], oc["n_random"], res["seed"]),
                        thetas=tuple(oc["thetas"]), seed=res["seed"])
        with open(outdir / "violations.jsonl", "w") as fh:
            for v in rep.violations:
                fh.write(_dumps(v) + "\n")
        results({"kind": "oracle", "checks": rep.checks, "violations": len(rep.violations),
                 "graphs": rep.graphs})
        audit_rows.append({"audit": "oracle", "name": "exact inequalities", "pass": rep.ok,
                           "lhs": len(rep.violations), "rhs": 0, "margin": None,
                           "detail": rep.summary()})

    mc = audits - {"oracle"}
    if mc:
        kernel = build_kernel(res)
        _monte_carlo(res, kernel, outdir, results, audit_rows)

    status = 0 if all(r["pass"] is not False for r in audit_rows) else 1
    report = {"run_id": rid, "name": res["name"], "status": status, "audits": audit_rows}
    (outdir / "audit_report.json").write_text(json.dumps(report, indent=2, sort_keys=True,
                                                         default=_json_default) + "\n")
    (outdir / "audit_report.txt").write_text(format_audit(report))
    return status, outdir


def _monte_carlo(res, kernel, outdir, results, audit_rows):
    audits = set(res["audits"])
    seed = res["seed"]
    beta_spec = res["beta"]
    betas_by_box = {}
    beta_hat = None
    if "search" in beta_spec:
        s = beta_spec["search"]
        bc = beta_c_search(kernel, s["sizes"], s["replicas"], seed, beta_lo=s["beta_lo"],
                           beta_hi=s["beta_hi"], threshold_exponent=s["threshold_exponent"],
                           level=s["level"], normalize=False, periodized=res["periodized"],
                           drift_tol=s["drift_tol"], expand_to=s["expand_to"])
        beta_hat = bc.beta_hat
        results({"kind": "beta_c", **bc.to_dict()})
        _write_csv(outdir / "beta_diagnostics.csv", ["L", "beta_cross", "ci_lo", "ci_hi", "stderr"],
                   [[c.L, c.beta, c.ci_lo, c.ci_hi, c.stderr] for c in bc.crossings])
        audit_rows.append({"audit": "beta_c", "name": "pseudo-critical convergence", "pass": None,
                           "lhs": bc.drift_per_doubling, "rhs": s["drift_tol"], "margin": None,
                           "detail": "non_convergent" if bc.non_convergent else "converging"})
        grid = [beta_hat]
    else:
        grid = list(beta_spec.get("grid", [0.0]))

    need_rep = audits & {"tail", "two_point", "typical_max", "bound"}
    tail_rows_csv, tp_rows_csv = [], []
    rep_path = outdir / "replicas.jsonl"
    done = {(d["L"], d["beta"], d["replica"]): d for d in _read_jsonl(rep_path)}
    for bspec in res["boxes"]:
        box = TorusBox(kernel.d, bspec["L"], bspec["boundary"])
        ns = n_grid(res, box)
        rs = r_grid(res, box) if ({"two_point", "bound"} & audits) else None
        for beta in grid:
            if not need_rep:
                break
            jobs = [(box.to_dict(), kernel.to_dict(), beta, seed, r, res["method"], res["periodized"],
                     res["edge_cap"], ns, rs)
                    for r in range(res["replicas"]) if (box.L, beta, r) not in done]
            with open(rep_path, "a") as fh:
                for row in _pool_map(_replica_job, jobs, res["workers"]):
                    fh.write(_dumps(row) + "\n")
                    fh.flush()
                    done[(row["L"], row["beta"], row["replica"])] = row
            rows = [done[(box.L, beta, r)] for r in range(res["replicas"])]
            params = {"d": box.d, "alpha": kernel.alpha, "L": box.L, "beta": beta,
                      "boundary": box.boundary}
            T = np.array([r["tail"] for r in rows])
            tail_fit = tp_fit = None
            lo = res["fit"]["lo"]
            if "tail" in audits or "bound" in audits:
                recs = records_from_matrix("tail", T, ns, params, key_name="n", seed=seed)
                for rec in recs:
                    results({"kind": "estimate", **rec.to_dict()})
                    tail_rows_csv.append([box.L, beta, rec.params["n"], rec.estimate, rec.stderr,
                                          rec.ci_lo, rec.ci_hi])
                hi = res["fit"].get("hi") or fit_window(box.N, lo)[1]
                tail_fit = _try_fit(ns, T, (lo, hi), "tail", params, results)
            if rs is not None:
                P = np.array([r["two_point"] for r in rows])
                recs = records_from_matrix("two_point", P, rs, params, key_name="r", seed=seed)
                for rec in recs:
                    results({"kind": "estimate", **rec.to_dict()})
                    tp_rows_csv.append([box.L, beta, rec.params["r"], rec.estimate, rec.stderr,
                                        rec.ci_lo, rec.ci_hi])
                hi = res["fit"].get("hi") or fit_window(box.L, lo)[1]
                tp_fit = _try_fit(rs[1:], P[:, 1:], (lo, hi), "two_point", params, results)
            if "typical_max" in audits:
                kmax = [r["kmax"] for r in rows]
                M = typical_max_from_samples(kmax)
                results({"kind": "typical_max", "params": params, "M": M, "n_samples": len(kmax)})
            if "bound" in audits:
                if tail_fit is None or tp_fit is None:
                    audit_rows.append({"audit": "bound", "name": "exponent bounds", "pass": False,
                                       "lhs": None, "rhs": None, "margin": None,
                                       "detail": f"fit unavailable at L={box.L}, beta={beta}"})
                else:
                    ba = bound_audit(box.d, kernel.alpha, tail_fit, tp_fit, res["fit"]["tolerance"])
                    results({"kind": "bound_audit", "params": params, **ba.to_dict()})
                    for row in ba.rows:
                        audit_rows.append({"audit": "bound", "name": row.name, "pass": row.passed,
                                           "lhs": row.fitted, "rhs": row.bound,
                                           "margin": None if row.bound is None else row.fitted - row.bound,
                                           "detail": f"L={box.L} beta={beta:.6g} predicted={row.predicted} {row.note}".strip()})
    if tail_rows_csv:
        _write_csv(outdir / "tail.csv", ["L", "beta", "n", "estimate", "stderr", "ci_lo", "ci_hi"],
                   tail_rows_csv)
    if tp_rows_csv:
        _write_csv(outdir / "two_point.csv", ["L", "beta", "r", "estimate", "stderr", "ci_lo", "ci_hi"],
                   tp_rows_csv)

    if "two_ghost" in audits:
        g = res["two_ghost"]
        if "betas" in g:
            gbetas = list(g["betas"])
        elif beta_hat is not None:
            gbetas = [f * beta_hat for f in g["beta_fractions"]]
        else:
            raise DomainError("two-ghost audits need explicit betas or a beta search")
        box_spec = res["boxes"][-1]
        box = TorusBox(kernel.d, box_spec["L"], box_spec["boundary"])
        for beta in gbetas:
            ens = Ensemble(box, kernel, beta, seed, g["replicas"], res["method"], res["periodized"],
                           store=True)
            for variant in g["variants"]:
                grid = g["lambdas"] if variant == "kernel" else g["ns"]
                for a in two_ghost_audit(ens, grid, variant):
                    d = a.to_dict()
                    results({"kind": "two_ghost", "L": box.L, "beta": beta, **d})
                    audit_rows.append({"audit": "two_ghost", "name": f"{variant} n={a.n:g}",
                                       "pass": a.passed, "lhs": a.lhs, "rhs": a.rhs,
                                       "margin": None if math.isinf(a.margin) else a.margin,
                                       "detail": f"L={box.L} beta={beta:.6g}"})


def _try_fit(x, M, window, name, params, results):
    try:
        fit = exponent_fit(x, M.mean(axis=0), window, replicas=M)
    except (InsufficientDataError, DomainError) as e:
        results({"kind": "fit", "quantity": name, "params": params, "error": str(e)})
        return None
    results({"kind": "fit", "quantity": name, "params": params, **fit.to_dict()})
    return fit


# ---------------------------------------------------------------------------
# reporting

EXPECTED_FILES = ("resolved_config.json", "results.jsonl", "audit_report.json")


def format_audit(report: dict) -> str:
    lines = [f"run {report['name']} ({report['run_id']}): status {report['status']}"]
    for r in report["audits"]:
        flag = {True: "PASS", False: "FAIL", None: "INFO"}[r["pass"]]
        lhs = "-" if r["lhs"] is None else f"{r['lhs']:.6g}"
        rhs = "-" if r["rhs"] is None else f"{r['rhs']:.6g}"
        lines.append(f"  [{flag}] {r['audit']:<10} {r['name']:<22} lhs={lhs:<12} rhs={rhs:<12} {r.get('detail', '')}")
    return "\n".join(lines) + "\n"


def report(results_dir) -> str:
    """Human-readable summary of a finished run directory."""
    d = Path(results_dir)
    missing = [f for f in EXPECTED_FILES if not (d / f).exists()]
    if missing:
        raise FileNotFoundError(f"{d}: missing expected files: {', '.join(missing)}")
    rows = _read_jsonl(d / "results.jsonl")
    out = []
    oracle = [r for r in rows if r["kind"] == "oracle"]
    for r in oracle:
        out.append(f"oracle: {r['violations']} violations / {r['checks']} checks ({r['graphs']} graphs)")
    for r in rows:
        if r["kind"] == "beta_c":
            out.append(f"beta_c: {r['beta_hat']:.6g} (spread {r['systematic']:.3g}, drift/doubling "
                       f"{r['drift_per_doubling']:+.3g}){' NON-CONVERGENT' if r['non_convergent'] else ''}")
    audits = [r for r in rows if r["kind"] == "bound_audit"]
    if audits:
        out.append(f"{'d':>2} {'alpha':>6} {'L':>7} {'beta':>9}  {'quantity':<16} {'bound':>7} {'predicted':>9} {'fitted':>7}  result")
        for a in audits:
            p = a["params"]
            for row in a["rows"]:
                if row["bound"] is None:
                    continue
                pred = "-" if row["predicted"] is None else f"{row['predicted']:.4f}"
                out.append(f"{p['d']:>2} {p['alpha']:>6.3g} {p['L']:>7} {p['beta']:>9.5g}  {row['name']:<16} "
                           f"{row['bound']:>7.4f} {pred:>9} {row['fitted']:>7.4f}  {'pass' if row['passed'] else 'FAIL'}")
    ghosts = [r for r in rows if r["kind"] == "two_ghost"]
    if ghosts:
        worst = min(ghosts, key=lambda r: r["margin"])
        fails = sum(not r["pass"] for r in ghosts)
        out.append(f"two-ghost: {fails} failures / {len(ghosts)} checks, smallest margin "
                   f"{worst['margin']:.3g} ({worst['variant']}, n={worst['n']:g}, beta={worst['beta']:.4g})")
    rep = json.loads((d / "audit_report.json").read_text())
    out.append(f"status: {'ok' if rep['status'] == 0 else 'audit failures'}")
    return "\n".join(out) + "\n"
