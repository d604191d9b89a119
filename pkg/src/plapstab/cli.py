"""Batch front end: configuration parsing, run orchestration, report emission.

Commands: constants, eigen, stability, gap, picone, battery.  A JSON config
file may supply any option; command-line flags override it.  Exit status is
0 when every verdict passed (empirical verdicts count when not falsified),
2 on a failed inequality, 1 on configuration or solver errors.
"""

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import cpcore, verify
from .geometry import Field, build_mesh, gaussian, lebesgue, make_domain, write_mesh
from .spectral import SolverOptions, first_eigenpair, second_eigenvalue

SCHEMA_VERSION = 1

_DEFAULTS = {
    "p": [2.0],
    "domain": {"interval": [0.0, 1.0]},
    "measure": "lebesgue",
    "level": 4,
    "seed": 0,
    "fields": 20,
    "samples": 1000,
    "second": False,
    "no_timestamp": False,
    "out": None,
    "csv": None,
    "mesh_out": None,
    "inject_bad_constant": False,
}


def parse_domain_flag(text):
    """`interval:a,b` or `polygon:x1,y1;x2,y2;...` to a domain spec dict."""
    kind, _, rest = text.partition(":")
    if kind == "interval":
        parts = rest.split(",")
        if len(parts) != 2:
            raise ValueError(f"bad interval spec {text!r}")
        return {"interval": [float(parts[0]), float(parts[1])]}
    if kind == "polygon":
        pts = []
        for chunk in rest.split(";"):
            xy = chunk.split(",")
            if len(xy) != 2:
                raise ValueError(f"bad polygon vertex {chunk!r} in {text!r}")
            pts.append([float(xy[0]), float(xy[1])])
        return {"polygon": pts}
    raise ValueError(f"unknown domain kind {kind!r} (want interval: or polygon:)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plapstab",
        description="Poincare stability constants, p-Laplacian eigenpairs, "
        "and inequality verification batteries.",
    )
    sub = parser.add_subparsers(dest="command")
    for name, help_text in [
        ("constants", "pi_p and the c1 (or c2/c3) constants for each p"),
        ("eigen", "first (and optionally second) Dirichlet eigenpair"),
        ("stability", "random-field stability battery on one configuration"),
        ("gap", "fundamental-gap report"),
        ("picone", "pointwise Picone identity residual on random fields"),
        ("battery", "stability batteries across the whole p-list"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file; flags override it")
        cmd.add_argument("--p", help="comma-separated exponent list, e.g. 2,3,4")
        cmd.add_argument("--domain", help="interval:a,b or polygon:x1,y1;x2,y2;...")
        cmd.add_argument("--measure", choices=["lebesgue", "gaussian"])
        cmd.add_argument("--level", type=int, help="mesh refinement level (0..7)")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--out", help="write the JSON report here (else stdout)")
        cmd.add_argument("--csv", help="also write CSV rows here")
        cmd.add_argument("--no-timestamp", action="store_true", default=None,
                         help="omit the timestamp for byte-reproducible output")
        cmd.add_argument("--fields", type=int, help="random fields per battery cell")
        cmd.add_argument("--samples", type=int, help="sample-point budget (picone)")
        cmd.add_argument("--second", action="store_true", default=None,
                         help="also compute the second eigenpair (eigen)")
        cmd.add_argument("--mesh-out", help="mesh file path (eigen)")
        cmd.add_argument("--inject-bad-constant", action="store_true", default=None,
                         help=argparse.SUPPRESS)
    return parser


def load_config(args):
    config = dict(_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(_DEFAULTS) - {"command"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config.update(file_cfg)
    overrides = {
        "measure": args.measure,
        "level": args.level,
        "seed": args.seed,
        "fields": args.fields,
        "samples": args.samples,
        "second": args.second,
        "no_timestamp": args.no_timestamp,
        "out": args.out,
        "csv": args.csv,
        "mesh_out": args.mesh_out,
        "inject_bad_constant": args.inject_bad_constant,
    }
    for key, val in overrides.items():
        if val is not None:
            config[key] = val
    if args.p is not None:
        config["p"] = [float(tok) for tok in args.p.split(",") if tok]
    elif not isinstance(config["p"], list):
        config["p"] = [float(config["p"])]
    if args.domain is not None:
        config["domain"] = parse_domain_flag(args.domain)
    config["command"] = args.command
    _validate_config(config)
    return config


def _validate_config(config):
    if not config["p"]:
        raise ValueError("p-list must be nonempty")
    for p in config["p"]:
        if p <= 1.0:
            raise ValueError(f"every exponent must exceed 1, got {p}")
    if not 0 <= int(config["level"]) <= 7:
        raise ValueError(f"level must lie in [0, 7], got {config['level']}")
    make_domain(config["domain"])  # raises on malformed geometry


def _measure(config):
    return lebesgue() if config["measure"] == "lebesgue" else gaussian()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def run_constants(config):
    results = []
    all_ok = True
    for p in config["p"]:
        entry = {"p": p, "pi_p": cpcore.pi_p(p), "pi_p_quadrature": cpcore.pi_p_quadrature(p)}
        ok = abs(entry["pi_p"] - entry["pi_p_quadrature"]) <= 1e-8
        if p >= 2.0:
            res = cpcore.c1_sharp(p)
            entry.update(
                c1=res.c1, r0=res.r0, k0=res.k0,
                c1_lower=res.lower, c1_upper=res.upper,
                c1_variational=cpcore.c1_variational(p),
            )
            ok = ok and res.lower <= res.c1 <= res.upper
            ok = ok and abs(res.c1 - res.c1_k0_form()) <= 1e-12 * res.c1
        else:
            c2_est, c3_est = cpcore.c2_c3_estimate(p)
            entry.update(
                c2_upper_estimate=c2_est, c3_lower_estimate=c3_est,
                one_sided="c2 sampled from above, c3 from below",
            )
            ok = ok and 0.0 < c2_est <= p * (p - 1.0) / 2 ** (p - 1.0) + 1e-9
            ok = ok and c3_est >= p / 2 ** (p - 1.0) - 1e-9
        entry["passed"] = ok
        all_ok = all_ok and ok
        results.append(entry)
    return all_ok, results, []


def run_eigen(config):
    domain = make_domain(config["domain"])
    mesh = build_mesh(domain, config["level"])
    measure = _measure(config)
    opts = SolverOptions(seed=config["seed"])
    results = []
    ok = True
    mesh_file = config.get("mesh_out")
    if mesh_file is None and config.get("out"):
        mesh_file = str(config["out"]) + ".mesh"
    if mesh_file:
        write_mesh(mesh, mesh_file)
    for p in config["p"]:
        pair = first_eigenpair(p, mesh, measure, opts)
        ok = ok and pair.converged
        entry = {"p": p, "first": pair.to_json_dict(mesh_file)}
        if config["second"]:
            pair2 = second_eigenvalue(p, mesh, measure, pair, opts)
            ok = ok and pair2.converged
            entry["second"] = pair2.to_json_dict(mesh_file)
        results.append(entry)
    if not ok:
        raise RuntimeError("eigen solve did not converge")
    return True, results, []


def run_stability(config):
    domain = make_domain(config["domain"])
    mesh = build_mesh(domain, config["level"])
    measure = _measure(config)
    factor = 1e9 if config["inject_bad_constant"] else 1.0
    all_reports = []
    results = []
    ok = True
    for p in config["p"]:
        if p < 2.0:
            raise ValueError(f"stability battery requires p >= 2, got {p}")
        reports = verify.stability_battery(
            p, domain, mesh, measure, config["fields"],
            seed=config["seed"], opts=SolverOptions(seed=config["seed"]),
            constant_factor=factor,
        )
        cell_ok = all(r.passed for r in reports)
        ok = ok and cell_ok
        results.append(
            {
                "p": p,
                "fields": len(reports),
                "passed": cell_ok,
                "min_margin": min(r.margin for r in reports),
                "lambda1": reports[0].lambda1,
                "reports": [r.to_dict() for r in reports],
            }
        )
        all_reports.extend(reports)
    return ok, results, all_reports


def run_gap(config):
    domain = make_domain(config["domain"])
    mesh = build_mesh(domain, config["level"])
    measure = _measure(config)
    factor = 1e9 if config["inject_bad_constant"] else 1.0
    results = []
    reports = []
    ok = True
    for p in config["p"]:
        rep = verify.gap_check(
            p, domain, mesh, measure,
            opts=SolverOptions(seed=config["seed"]), constant_factor=factor,
        )
        ok = ok and rep.passed
        results.append(rep.to_dict())
        reports.append(rep)
    return ok, results, reports


def run_picone(config):
    domain = make_domain(config["domain"])
    mesh = build_mesh(domain, config["level"])
    measure = _measure(config)
    rng = np.random.default_rng(config["seed"])
    results = []
    ok = True
    for p in config["p"]:
        u = verify.random_zero_trace_field(mesh, rng)
        phi = Field(mesh, 0.5 + rng.uniform(0.0, 1.0, mesh.n_nodes))
        res = verify.picone_check(
            p, u, phi, measure, max_samples=config["samples"],
            seed=config["seed"], full_output=True,
        )
        cell_ok = res.max_abs_residual <= 1e-8 * res.scale
        ok = ok and cell_ok
        results.append(
            {
                "p": p,
                "max_abs_residual": res.max_abs_residual,
                "scale": res.scale,
                "n_samples": res.n_samples,
                "n_skipped": res.n_skipped,
                "passed": cell_ok,
            }
        )
    return ok, results, []


def run_battery(config):
    ok, results, reports = run_stability(config)
    return ok, results, reports


_RUNNERS = {
    "constants": run_constants,
    "eigen": run_eigen,
    "stability": run_stability,
    "gap": run_gap,
    "picone": run_picone,
    "battery": run_battery,
}


def run(config):
    """Dispatch a validated config; returns (exit_code, report_dict)."""
    runner = _RUNNERS[config["command"]]
    passed, results, reports = runner(config)
    report = {
        "schema": SCHEMA_VERSION,
        "command": config["command"],
        "config": {
            k: v for k, v in config.items()
            if k not in ("out", "csv", "no_timestamp", "command", "mesh_out")
        },
        "passed": bool(passed),
        "results": results,
    }
    if not config["no_timestamp"]:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
    if config.get("csv") and reports:
        verify.write_reports_csv(config["csv"], reports)
    return (0 if passed else 2), report


def _write_atomic(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 1
    try:
        config = load_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        code, report = run(config)
    except (ValueError, RuntimeError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return 1
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    if config["out"]:
        _write_atomic(config["out"], text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
