"""Command-line front end: ``mepp-lab <command> --config FILE``.

Exit codes: 0 pass, 1 fail, 2 configuration error, 3 inconclusive.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from math import sqrt
from pathlib import Path

import numpy as np

from . import __version__
from .config import canonical_json, config_hash, load_raw, validate
from .config_space import make_surface
from .entropy import entropy, entropy_gap, finite_measure_entropy, uniform_entropy
from .errors import DEGENERATE, ConfigError, MeppLabError, StepRejected
from .flow import (
    FlowParams,
    divergence_residual,
    read_coefficients,
    random_solenoidal,
    reality_residual,
    single_mode,
    taylor_green,
    trajectory,
    write_coefficients,
)
from .measures import scale
from .mepp import (
    family_from_spec,
    random_family_spec,
    select,
    verify_prop1,
    verify_prop2,
    verify_prop3,
    verify_prop4,
    verify_prop5,
)
from .restriction import named_functional, restriction_agrees, surface_integral_oracle, surface_restrict

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_INCONCLUSIVE = 0, 1, 2, 3
DEFAULT_OUT = "mepp-lab-out"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _diagnose(err: Exception) -> int:
    issues = getattr(err, "issues", None) or [{"field": None, "message": str(err), "type": type(err).__name__}]
    sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err), "issues": issues},
                                sort_keys=True) + "\n")
    return EXIT_CONFIG


# -- command bodies -------------------------------------------------------------

def _build_initial(block, seed: int):
    if block.preset == "single-mode":
        return single_mode(block.grid_size, tuple(block.wavevector), block.amplitude)
    if block.preset == "taylor-green":
        return taylor_green(block.grid_size, block.amplitude)
    if block.preset == "csv":
        return read_coefficients(block.coefficients_csv, block.grid_size)
    return random_solenoidal(block.grid_size, seed, block.k_max, block.energy)


def _run_flow(block, seed: int, keep_states: bool):
    params = FlowParams(block.nu, block.dt, block.t_end, block.dealiasing)
    init = _build_initial(block, seed)
    return trajectory(init, params, block.times(), dim=block.cylinder_dim, keep_states=keep_states)


def _trajectory_rows(traj):
    return [(r["time"], r["energy"], r["dissipation"]) for r in traj.rows()]


def cmd_verify(cfg, args, out: Path) -> tuple[int, dict]:
    props = [args.prop] if args.prop else list(cfg.props)
    suites = []
    if 1 in props:
        suites.append(verify_prop1(cfg.prop1.n_max, cfg.prop1.count, cfg.seed).to_dict())
    if 2 in props:
        p = cfg.prop2
        suites.append(verify_prop2(p.dims, p.energy, p.count, cfg.seed, p.functionals).to_dict())
    if 3 in props:
        p = cfg.prop3
        for n in p.dims:
            suites.append(verify_prop3(make_surface(n, p.energy), p.count, cfg.seed, cfg.estimator,
                                       args.threads).to_dict())
    if 4 in props:
        p = cfg.prop4
        rng = np.random.default_rng(cfg.seed)
        for n in p.dims:
            specs = [f.as_spec() for f in p.families]
            specs += [random_family_spec(rng, n) for _ in range(p.random_candidates)]
            fams = [family_from_spec({**s, "name": s.get("name") or f"{s['family']}-{i}"}) for i, s in enumerate(specs)]
            suites.append(verify_prop4(fams, make_surface(n, p.energy), p.count, cfg.seed, cfg.estimator,
                                       args.threads).to_dict())
    if 5 in props:
        boxes = [args.box] if args.box is not None else list(cfg.prop5.boxes)
        for b in boxes:
            suites.append(verify_prop5(b, cfg.prop5.n_max).to_dict())
    passed = all(s["passed"] for s in suites)
    return (EXIT_PASS if passed else EXIT_FAIL), {"passed": passed, "props": props, "suites": suites}


def cmd_entropy(cfg, args, out: Path) -> tuple[int, dict]:
    surface = make_surface(cfg.dim, cfg.energy)
    fam = family_from_spec(cfg.family.as_spec())
    m = fam.build(surface)
    top = uniform_entropy(surface, m.indistinguishable)
    if cfg.mass == 1.0:
        est = entropy(m, cfg.count, cfg.seed, cfg.estimator, args.threads)
        gap = entropy_gap(m, cfg.count, cfg.seed, cfg.estimator, args.threads)
        result = {"entropy": est.to_dict(), "gap": gap.to_dict()}
    else:
        est = finite_measure_entropy(scale(m, cfg.mass), cfg.count, cfg.seed, args.threads)
        result = {"entropy": est.to_dict(), "mass": cfg.mass}
    ok = est.value <= top.value + 3.0 * est.std_error + 1e-12 * max(1.0, abs(top.value))
    result.update({"physical_entropy": top.value, "family": fam.name, "invariance": m.invariance,
                   "indistinguishable": m.indistinguishable, "below_physical": ok,
                   "surface": {"dim": surface.dim, "energy": surface.energy, "radius": surface.radius,
                               "log_area": surface.log_area}})
    return (EXIT_PASS if ok else EXIT_FAIL), result


def cmd_restrict(cfg, args, out: Path) -> tuple[int, dict]:
    r = sqrt(2.0 * cfg.energy)
    rows, checks = [], []
    for n in cfg.dims:
        for name in cfg.functionals:
            f = named_functional(name, r)
            d = surface_restrict(f, n, cfg.energy, cfg.count, cfg.seed, cfg.rel_step)
            o = surface_integral_oracle(f, n, cfg.energy, cfg.count, cfg.seed + 1)
            ok = restriction_agrees(d, o)
            rows.append((n, name, d.value, d.std_error, d.fd_error, o.value, o.std_error, int(ok)))
            checks.append({"dim": n, "functional": name, "restricted": d.to_dict(), "oracle": o.to_dict(),
                           "passed": ok})
    _write_csv(out / "restrict.csv",
               ["dim", "functional", "restricted", "restricted_se", "fd_error", "oracle", "oracle_se", "passed"], rows)
    passed = all(c["passed"] for c in checks)
    return (EXIT_PASS if passed else EXIT_FAIL), {"passed": passed, "checks": checks}


def cmd_flow(cfg, args, out: Path) -> tuple[int, dict]:
    traj = _run_flow(cfg.flow, cfg.seed, keep_states=True)
    _write_csv(out / "trajectory.csv", ["time", "energy", "dissipation"], _trajectory_rows(traj))
    if cfg.dump_coefficients:
        for i, s in enumerate(traj.states):
            write_coefficients(s, out / f"coefficients_{i:03d}.csv")
    last = traj.states[-1]
    times = np.asarray(traj.times)
    e = np.asarray(traj.energies)
    d = np.asarray(traj.dissipations)
    budget = None
    if len(times) >= 2:
        dissipated = float(np.sum(0.5 * (d[1:] + d[:-1]) * np.diff(times)))
        budget = {"initial_energy": float(e[0]), "final_energy": float(e[-1]), "dissipated_trapezoid": dissipated,
                  "residual": float(e[0] - e[-1] - dissipated)}
    result = {"trajectory": traj.rows(), "metadata": traj.metadata, "energy_budget": budget,
              "divergence_residual": divergence_residual(last), "reality_residual": reality_residual(last)}
    return EXIT_PASS, result


def _selection_table(rep) -> str:
    d = rep.to_dict()
    lines = [f"verdict: {d['verdict']}   winner: {d['winner']}   physical: {d['physical']}", ""]
    head = f"{'family':<20}{'mean S':>14}{'mean dS/dt':>14}  dominates"
    lines += [head, "-" * len(head)]
    for n in d["families"]:
        lines.append(f"{n:<20}{d['time_averaged_entropy'][n]:>14.6f}{d['mean_rate'][n]:>14.6f}  "
                     f"{', '.join(d['strict_dominance'][n]) or '-'}")
    return "\n".join(lines) + "\n"


def cmd_select(cfg, args, out: Path) -> tuple[int, dict]:
    traj = _run_flow(cfg.flow, cfg.seed, keep_states=False)
    fams = [family_from_spec(f.as_spec()) for f in cfg.families]
    rep = select(fams, traj, cfg.count, cfg.seed, cfg.estimator, args.threads)
    _write_csv(out / "trajectory.csv", ["time", "energy", "dissipation"], _trajectory_rows(traj))
    rows = []
    for name, ser in rep.series.items():
        rate = dict(zip(ser.times[1:-1], zip(ser.rates, ser.rate_std_errors)))
        for t, est in zip(ser.times, ser.entropies):
            r, rse = rate.get(t, ("", ""))
            rows.append((name, t, est.value, est.std_error, r, rse))
    _write_csv(out / "series.csv", ["family", "time", "entropy", "std_error", "rate", "rate_std_error"], rows)
    table = _selection_table(rep)
    (out / "selection.txt").write_text(table)
    code = {"pass": EXIT_PASS, "fail": EXIT_FAIL}.get(rep.outcome, EXIT_INCONCLUSIVE)
    return code, {**rep.to_dict(), "trajectory": traj.rows(), "flow": traj.metadata}


COMMANDS = {"verify": cmd_verify, "entropy": cmd_entropy, "restrict": cmd_restrict,
            "flow": cmd_flow, "select": cmd_select}


# -- argument parsing -----------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config (packaged defaults when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sampling (default 1)")
    p.add_argument("--out", help="output directory (else $MEPP_LAB_OUT, else ./mepp-lab-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mepp-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mepp-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("target", choices=["props"])
    v.add_argument("--prop", type=int, choices=[1, 2, 3, 4, 5])
    v.add_argument("--box", type=float, help="box measure for the series-bound suite")
    _common(v)
    for name, text in (("entropy", "entropy of one candidate measure"),
                       ("restrict", "ball-to-surface restriction checks"),
                       ("flow", "integrate the flow and write the trajectory"),
                       ("select", "rank candidate families over a trajectory")):
        _common(sub.add_parser(name, help=text))
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        raw = load_raw(args.config, args.command)
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = validate(args.command, raw)
        out = Path(args.out or os.environ.get("MEPP_LAB_OUT") or DEFAULT_OUT)
        out.mkdir(parents=True, exist_ok=True)
        resolved = cfg.model_dump(mode="json")
        code, result = COMMANDS[args.command](cfg, args, out)
    except StepRejected as err:
        sys.stderr.write(json.dumps({"error": "StepRejected", "message": str(err), "dt": err.dt,
                                     "admissible_dt": err.admissible_dt}, sort_keys=True) + "\n")
        return EXIT_FAIL
    except (MeppLabError, ValueError, OSError) as err:
        return _diagnose(err)
    if result is DEGENERATE:
        result = {"degenerate": True}
    report = {
        "command": args.command,
        "version": __version__,
        "config": resolved,
        "config_hash": config_hash(resolved, args.threads),
        "seed": cfg.seed,
        "threads": args.threads,
        "estimator": getattr(cfg, "estimator", None),
        "exit_code": code,
        "result": result,
    }
    _write_json(out / "report.json", report)
    sys.stdout.write(canonical_json({"command": args.command, "exit_code": code,
                                     "report": str(out / "report.json")}) + "\n")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
