"""Command-line experiment runner.

    asynciter run CONFIG [--seed-override N] [--output DIR] [--quiet]
    asynciter validate SCHEDULE_FILE
    asynciter oracle {macro,prox,baudet} [options]
    asynciter report DIR

Exit status: 0 when every verification passes, 2 when one fails, 1 on
input errors.  ``ASYNCITER_THREADS`` caps how many seeds run at once.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .analysis import (
    NormSpec,
    check_freshness,
    epochs,
    macro_iterations,
    verify_norm_constraint,
    verify_rate_bound,
    write_residual_csv,
)
from .engine import FlexiblePolicy, run, trace_to_csv
from .errors import InputError, InsufficientDataError, NumericError
from .instances import builtin
from .operators import GradientTypeOperator, apply, contraction_bound
from .problem import problem_from_dict, reference_fixed_point
from .schedule import generate, load_schedule, validate

EXIT_OK, EXIT_INPUT, EXIT_VERIFY = 0, 1, 2
RUN_FIELDS = ("name", "problem", "operator", "schedule", "policy", "policies", "x0",
              "owner_map", "verify", "reference_tol", "output")
DEFAULT_VERIFY = {"schedule": True, "freshness": True, "norm_constraint": True, "rate_bound": True}


def load_schema(name: str) -> dict:
    text = resources.files("asynciter").joinpath("schemas", name).read_text(encoding="utf-8")
    return json.loads(text)


def _field_path(err: jsonschema.ValidationError) -> str:
    return ".".join(["config", *(str(p) for p in err.absolute_path)])


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"{what}: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: {path} is not valid JSON ({exc})") from None


# -- configuration ----------------------------------------------------------

@dataclass
class RunSpec:
    name: str
    problem: object
    inner_steps: int
    schedule_cfg: dict
    policies: list
    x0: object
    owner_map: list | None
    verify: dict
    reference_tol: float


def parse_config(cfg: dict, base_dir: Path, seed_override=None) -> tuple[list, str]:
    """Validate ``cfg`` and expand it into a list of :class:`RunSpec`."""
    try:
        jsonschema.validate(cfg, load_schema("config.schema.json"))
    except jsonschema.ValidationError as err:
        raise InputError(f"{_field_path(err)}: {err.message}") from None

    defaults = {k: v for k, v in cfg.items() if k != "runs"}
    raw_runs = cfg.get("runs") or [{}]
    specs = []
    for n, raw in enumerate(raw_runs):
        merged = {**defaults, **raw}
        prefix = f"config.runs.{n}" if "runs" in cfg else "config"
        for key in ("problem", "schedule"):
            if key not in merged:
                raise InputError(f"{prefix}.{key}: required field missing")
        specs.append(_run_spec(merged, base_dir, prefix, seed_override, n))
    output = cfg.get("output", "asynciter-out")
    return specs, output


def _run_spec(d, base_dir, prefix, seed_override, n) -> RunSpec:
    pcfg = d["problem"]
    try:
        if "builtin" in pcfg:
            problem = builtin(pcfg["builtin"], **pcfg.get("args", {}))
        elif "file" in pcfg:
            problem = problem_from_dict(_read_json(base_dir / pcfg["file"], f"{prefix}.problem.file"))
        else:
            problem = problem_from_dict(pcfg)
    except TypeError as exc:
        raise InputError(f"{prefix}.problem: {exc}") from None
    except InputError as exc:
        raise InputError(f"{prefix}.problem: {exc}") from None

    op_cfg = d.get("operator", {})
    if "gamma" in op_cfg:
        try:
            problem = problem.with_gamma(op_cfg["gamma"])
        except InputError as exc:
            raise InputError(f"{prefix}.operator.gamma: {exc}") from None

    sched = dict(d["schedule"])
    if "file" in sched:
        sched["file"] = str(base_dir / sched["file"])
        sched.setdefault("seeds", [0])
    if seed_override is not None:
        sched["seeds"] = [int(seed_override)]

    policies = d.get("policies") or [d.get("policy", {"kind": "exact"})]
    try:
        policies = [FlexiblePolicy(p["kind"], float(p.get("theta", 1.0)), int(p.get("steps", 1)))
                    for p in policies]
    except InputError as exc:
        raise InputError(f"{prefix}.policy: {exc}") from None

    owner_map = d.get("owner_map")
    if owner_map is not None and len(owner_map) != problem.n_blocks:
        raise InputError(f"{prefix}.owner_map: needs one entry per block ({problem.n_blocks})")
    x0 = d.get("x0", {"scale": 5.0})
    if isinstance(x0, list) and len(x0) != problem.dim:
        raise InputError(f"{prefix}.x0: expected {problem.dim} entries, got {len(x0)}")
    return RunSpec(
        name=d.get("name", f"run{n}"),
        problem=problem,
        inner_steps=int(op_cfg.get("inner_steps", 1)),
        schedule_cfg=sched,
        policies=policies,
        x0=x0,
        owner_map=owner_map,
        verify={**DEFAULT_VERIFY, **d.get("verify", {})},
        reference_tol=float(d.get("reference_tol", 1e-12)),
    )


def _initial_point(spec: RunSpec, seed: int) -> np.ndarray:
    n = spec.problem.dim
    if isinstance(spec.x0, (int, float)):
        return np.full(n, float(spec.x0))
    if isinstance(spec.x0, list):
        return np.asarray(spec.x0, dtype=np.float64)
    return np.random.default_rng(seed).normal(scale=float(spec.x0.get("scale", 5.0)), size=n)


# -- pipeline ---------------------------------------------------------------

def _run_seed(spec: RunSpec, op, z_star, rho, seed_pos: int, seed: int, outdir: Path) -> dict:
    sc = spec.schedule_cfg
    if "file" in sc:
        schedule = load_schedule(sc["file"])
        kind = schedule.params.get("kind", "file")
    else:
        kinds = sc["kind"] if isinstance(sc["kind"], list) else [sc["kind"]]
        kind = kinds[seed_pos % len(kinds)]
        params = sc.get("params", {})
        params = params.get(kind, {}) if any(k in params for k in kinds) else params
        schedule = generate(kind, spec.problem.n_blocks, int(sc["horizon"]), params, seed)
    if schedule.n_blocks != spec.problem.n_blocks:
        raise InputError(f"schedule has {schedule.n_blocks} blocks, problem has {spec.problem.n_blocks}")
    policy = spec.policies[seed_pos % len(spec.policies)]

    entry = {"seed": seed, "schedule_kind": kind, "policy": policy.to_dict(), "verifiers": {}}
    report = validate(schedule)
    entry["schedule_validation"] = {"overall": report.overall, "failures": report.failures(),
                                    "checks": report.to_dict()}
    if spec.verify["schedule"] and not report.overall:
        entry["pass"] = False
        return entry

    trace = run(op, _initial_point(spec, seed), schedule, policy, check_schedule=False)
    ms = macro_iterations(trace)
    es = epochs(trace, spec.owner_map)
    entry.update(macro_iterations=ms.count, macro_complete=ms.complete, epochs=es.count)

    stem = f"{spec.name}_seed{seed}"
    write_residual_csv(outdir / f"{stem}.residuals.csv", trace, z_star, ms, rho)
    trace_to_csv(trace, outdir / f"{stem}.trace.csv")
    entry["residual_csv"] = f"{stem}.residuals.csv"
    entry["trace_csv"] = f"{stem}.trace.csv"

    reports = {}
    if spec.verify["freshness"]:
        reports["freshness"] = check_freshness(trace, ms).to_dict()
    if spec.verify["norm_constraint"]:
        reports["norm_constraint"] = verify_norm_constraint(trace, z_star, NormSpec()).to_dict()
    if spec.verify["rate_bound"]:
        try:
            reports["rate_bound"] = verify_rate_bound(trace, z_star, ms, rho).to_dict()
        except InsufficientDataError as exc:
            reports["rate_bound"] = {"name": "rate_bound", "pass": False, "checked": 0,
                                     "violation_count": 0, "violations": [], "worst_slack": None,
                                     "error": str(exc)}
    entry["verifiers"] = reports
    entry["pass"] = all(r["pass"] for r in reports.values())
    return entry


def run_experiment(cfg: dict, base_dir=".", output=None, seed_override=None, quiet=False) -> int:
    """Run every seed of every configured run and write CSVs plus ``summary.json``.

    Returns the exit status (0 all pass, 2 some verification failed).
    Input problems raise :class:`InputError`.
    """
    specs, default_out = parse_config(cfg, Path(base_dir), seed_override)
    outdir = Path(output or default_out)
    outdir.mkdir(parents=True, exist_ok=True)
    threads = max(1, int(os.environ.get("ASYNCITER_THREADS", "1") or 1))

    runs = []
    for spec in specs:
        op = GradientTypeOperator(spec.problem, spec.inner_steps)
        z_star, _ = reference_fixed_point(spec.problem, spec.reference_tol)
        rho = spec.problem.gamma * spec.problem.mu
        seeds = spec.schedule_cfg["seeds"]
        jobs = [(pos, seed) for pos, seed in enumerate(seeds)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                entries = list(pool.map(lambda a: _run_seed(spec, op, z_star, rho, a[0], a[1], outdir), jobs))
        else:
            entries = [_run_seed(spec, op, z_star, rho, pos, seed, outdir) for pos, seed in jobs]
        runs.append({
            "name": spec.name,
            "rho": rho,
            "contraction_bound": contraction_bound(op),
            "z_star_residual": float(np.linalg.norm(apply(op, z_star) - z_star)),
            "seeds": entries,
        })
        if not quiet:
            for e in entries:
                status = "PASS" if e["pass"] else "FAIL"
                failed = e["schedule_validation"]["failures"] + [
                    k for k, r in e["verifiers"].items() if not r["pass"]]
                extra = f" ({', '.join(failed)})" if failed else ""
                print(f"{spec.name} seed={e['seed']} {e['schedule_kind']}: {status}{extra}")

    aggregate = {}
    for r in runs:
        for e in r["seeds"]:
            if not e["schedule_validation"]["overall"]:
                agg = aggregate.setdefault("schedule", {"pass": True, "worst_slack": None})
                agg["pass"] = False
            for name, rep in e["verifiers"].items():
                agg = aggregate.setdefault(name, {"pass": True, "worst_slack": None})
                agg["pass"] = agg["pass"] and rep["pass"]
                ws = rep["worst_slack"]
                if ws is not None and (agg["worst_slack"] is None or ws > agg["worst_slack"]):
                    agg["worst_slack"] = ws
    ok = all(e["pass"] for r in runs for e in r["seeds"])
    status = EXIT_OK if ok else EXIT_VERIFY
    summary = {"tool_version": __version__, "pass": ok, "exit_status": status,
               "verifiers": aggregate, "runs": runs}
    jsonschema.validate(summary, load_schema("summary.schema.json"))
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    if not quiet:
        print(f"{'PASS' if ok else 'FAIL'}: summary written to {outdir / 'summary.json'}")
    return status


# -- oracle subcommands -----------------------------------------------------

def oracle_macro(count=200, seed=0, max_blocks=4, max_horizon=60) -> tuple[int, str]:
    from .oracles import brute_macro_iterations, random_trace_schedule
    rng = np.random.default_rng(seed)
    for t in range(count):
        s = random_trace_schedule(rng, int(rng.integers(1, max_blocks + 1)), int(rng.integers(1, max_horizon + 1)))
        fast = list(macro_iterations(s).indices)
        slow = brute_macro_iterations(s)
        if fast != slow:
            return EXIT_VERIFY, (f"MISMATCH at trace {t}: incremental={fast} brute={slow}\n"
                                 f"schedule={json.dumps(s.to_dict())}")
    return EXIT_OK, f"MATCH {count}/{count}"


def oracle_prox(points=100, seed=0, resolution=1e-4) -> tuple[int, str]:
    from .oracles import grid_prox_1d
    from .problem import NonsmoothPart
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(points):
        x = float(rng.uniform(-3, 3))
        gamma = float(rng.uniform(0.1, 2.0))
        lam = float(rng.uniform(0, 2))
        lo = float(rng.uniform(-2, 0.5))
        hi = lo + float(rng.uniform(0, 2))
        cases = [("l1", NonsmoothPart.l1(lam), dict(lam=lam)),
                 ("box", NonsmoothPart.box([lo], [hi]), dict(lo=lo, hi=hi))]
        for kind, g, kw in cases:
            closed = float(g.prox(np.array([x]), gamma)[0])
            grid = grid_prox_1d(kind, x, gamma, resolution=resolution, **kw)
            dev = abs(closed - grid)
            worst = max(worst, dev)
            if dev > resolution:
                return EXIT_VERIFY, (f"MISMATCH at point {t} ({kind}): x={x!r} gamma={gamma!r} {kw} "
                                     f"closed={closed!r} grid={grid!r}")
    return EXIT_OK, f"MATCH {2 * points}/{2 * points} max deviation {worst:.3g}"


def oracle_baudet(horizon=10000) -> tuple[int, str]:
    from .oracles import baudet_event_labels
    s = generate("baudet", 2, horizon)
    sim = baudet_event_labels(horizon)
    for j, ((S, labels), (owner, sim_labels)) in enumerate(zip(s.events, sim), start=1):
        if S != (owner,) or labels != sim_labels:
            return EXIT_VERIFY, (f"MISMATCH at j={j}: generator S={S} labels={labels}, "
                                 f"oracle owner={owner} labels={sim_labels}")
    return EXIT_OK, f"MATCH {horizon}/{horizon}"


# -- entry point ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="asynciter", description="Asynchronous fixed-point iteration laboratory.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed-override", type=int)
    r.add_argument("--output")
    r.add_argument("--quiet", action="store_true")

    v = sub.add_parser("validate", help="validate a schedule file")
    v.add_argument("schedule")
    v.add_argument("--quiet", action="store_true")

    o = sub.add_parser("oracle", help="diff a brute-force oracle against the implementation")
    o.add_argument("which", help="macro, prox or baudet")
    o.add_argument("--count", type=int, default=200)
    o.add_argument("--points", type=int, default=100)
    o.add_argument("--resolution", type=float, default=1e-4)
    o.add_argument("--horizon", type=int, default=10000)
    o.add_argument("--seed", type=int, default=0)

    rep = sub.add_parser("report", help="summarise an output directory")
    rep.add_argument("dir")
    return ap


def _cmd_report(directory) -> int:
    summary = _read_json(Path(directory) / "summary.json", "report")
    for r in summary["runs"]:
        for e in r["seeds"]:
            macro = e.get("macro_iterations", "-")
            print(f"{r['name']:<16} seed={e['seed']:<6} {e['schedule_kind']:<14} "
                  f"macro={macro!s:<6} {'PASS' if e['pass'] else 'FAIL'}")
    for name, agg in sorted(summary["verifiers"].items()):
        print(f"{name:<16} {'PASS' if agg['pass'] else 'FAIL'} worst_slack={agg['worst_slack']}")
    return int(summary["exit_status"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg_path = Path(args.config)
            cfg = _read_json(cfg_path, "config")
            return run_experiment(cfg, cfg_path.parent, args.output, args.seed_override, args.quiet)
        if args.command == "validate":
            report = validate(load_schedule(args.schedule))
            if not args.quiet:
                print(json.dumps(report.to_dict(), indent=2))
            return EXIT_OK if report.overall else EXIT_VERIFY
        if args.command == "oracle":
            if args.which == "macro":
                status, msg = oracle_macro(args.count, args.seed)
            elif args.which == "prox":
                status, msg = oracle_prox(args.points, args.seed, args.resolution)
            elif args.which == "baudet":
                status, msg = oracle_baudet(args.horizon)
            else:
                print(f"asynciter: unknown oracle {args.which!r} (macro, prox, baudet)", file=sys.stderr)
                return EXIT_INPUT
            print(msg)
            return status
        return _cmd_report(args.dir)
    except (InputError, NumericError) as exc:
        print(f"asynciter: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
