"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 numerical failure.  Failures print a
single JSON line ``{"error": ..., "reason": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .estimation import ExperimentConfig, run_experiment
from .innate import innate_entanglement, mz_design_from_innate
from .io import (
    SpecError,
    apply_rotations,
    dumps_report,
    make_report,
    mass_csv,
    parse_interferometer,
    parse_state_spec,
    write_atomic,
    _build,
)
from .metrology import InterferometerSpec, dynamical_susceptibility, metric_report, qfi_interferometer
from .oracle import MAX_QUBITS, run_oracle_checks
from .states import DickeMixture, SectoredState, as_density
from .tensors import decompose, mass_distribution, qmi

__all__ = ["main"]


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _common(p: argparse.ArgumentParser, state_required: bool = True):
    p.add_argument("--state", required=state_required, help="state spec JSON file")
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--rotate", action="append", default=[], metavar="AXIS:ANGLE",
                   help="rotation exp(-i ANGLE n.J) applied to the state, radians; repeatable, applied in order")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spinmetrology", description="Entanglement metrology for two-mode bosons.")
    parser.add_argument("--version", action="version", version=f"spinmetrology {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("metrics", help="QFI, susceptibility, bounds, squeezing and QMI")
    _common(p)
    p.add_argument("--interferometer", choices=("z", "mz"), default="z",
                   help="phase imprint used for the qfi field (default: z phase on the bare state)")

    p = sub.add_parser("decompose", help="spherical-tensor coefficients and mass distribution")
    _common(p)

    p = sub.add_parser("innate", help="maximal susceptibility over rotations")
    _common(p)
    p.add_argument("--grid", type=int, default=400, help="number of axis grid points")
    p.add_argument("--tol", type=float, default=1e-8, help="refinement tolerance on the axis angles")

    p = sub.add_parser("estimate", help="Monte-Carlo phase estimation")
    _common(p, state_required=False)
    p.add_argument("--config", required=True, help="experiment config JSON file")
    p.add_argument("--seed", type=int, help="override the master seed (unsigned 64-bit)")

    p = sub.add_parser("oracle-check", help="cross-check against the multi-qubit model")
    p.add_argument("--output")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--n-max", type=int, default=6, help=f"largest qubit count (<= {MAX_QUBITS})")
    return parser


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _load_state(args, keep_unrotated: bool = False):
    text = _read(args.state)
    state = parse_state_spec(text)
    echo = {"state_file": args.state, "state": json.loads(text), "rotate": list(args.rotate)}
    rotated = apply_rotations(state, args.rotate)
    return (rotated, echo, state) if keep_unrotated else (rotated, echo)


def _single_sector(state, command: str):
    if isinstance(state, SectoredState):
        raise InputError(f"'{command}' needs a state with a fixed particle number")
    return as_density(state) if isinstance(state, DickeMixture) else state


def _csv_row(fields: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(fields)
    w.writerow(keys)
    w.writerow(["" if fields[k] is None else (repr(fields[k]) if isinstance(fields[k], float) else fields[k]) for k in keys])
    return buf.getvalue()


def _cmd_metrics(args):
    state, echo = _load_state(args)
    echo["interferometer"] = args.interferometer
    j = state.sectors[0][1].j if isinstance(state, SectoredState) else state.j
    spec = InterferometerSpec.mach_zehnder(j) if args.interferometer == "mz" else InterferometerSpec.trivial(j)
    rep = metric_report(state, spec)
    results = rep.as_dict()
    if isinstance(state, SectoredState):
        results["mean_particles"] = state.mean_particles
    else:
        results["n_particles"] = state.j.n_particles
    problems = []
    if not (-1e-9 <= rep.qfi <= rep.hl + 1e-6):
        problems.append(f"qfi {rep.qfi!r} outside [0, hl={rep.hl!r}]")
    if rep.qmi is not None and 2 * rep.qmi > rep.susceptibility + 1e-9 * max(1.0, rep.hl):
        problems.append(f"2*qmi {2 * rep.qmi!r} exceeds susceptibility {rep.susceptibility!r}")
    return "metrics", echo, results, None, (_csv_row(results) if args.format == "csv" else None), problems


def _cmd_decompose(args):
    state, echo, base = _load_state(args, keep_unrotated=True)
    state = _single_sector(state, "decompose")
    current = _single_sector(base, "decompose")
    sequence = []
    for rot in [None] + list(args.rotate):
        if rot is not None:
            current = apply_rotations(current, [rot])
        md = mass_distribution(current)
        sequence.append({
            "rotation": rot,
            "masses": {str(j): v for j, v in md.spheres.items()},
            "total_mass": {str(j): v for j, v in md.total_masses.items()},
        })
    dec = decompose(state)
    md = mass_distribution(state)
    recon = float(np.max(np.abs(dec.reconstruct() - state.rho)))
    results = {
        "n_particles": state.j.n_particles,
        "tau": [{"j": j, "m": m, "value": dec[(j, m)]} for j, m in dec.basis.labels],
        "masses": {str(j): v for j, v in md.spheres.items()},
        "total_mass": {str(j): v for j, v in md.total_masses.items()},
        "qmi": qmi(state),
        "reconstruction_error": recon,
        "sequence": sequence,
    }
    problems = [] if recon <= 1e-10 else [f"reconstruction error {recon:.3e} exceeds 1e-10"]
    return "decompose", echo, results, None, (mass_csv(md) if args.format == "csv" else None), problems


def _cmd_innate(args):
    state, echo = _load_state(args)
    state = _single_sector(state, "innate")
    if args.grid < 8:
        raise InputError("--grid must be at least 8")
    if not args.tol > 0:
        raise InputError("--tol must be positive")
    echo.update(grid=args.grid, tol=args.tol)
    res = innate_entanglement(state, grid_points=args.grid, refine_tol=args.tol)
    design = mz_design_from_innate(res)
    roundtrip = qfi_interferometer(state, design)
    before = dynamical_susceptibility(state)
    n = state.j.n_particles
    top = sorted(res.grid_trace, key=lambda t: -t[1])[:10]
    results = {
        "n_particles": n,
        "value": res.value,
        "susceptibility_unrotated": before,
        "optimal_axis": res.optimal_axis,
        "axis_angles": {"theta": res.angles[0], "phi": res.angles[1]},
        "optimal_rotation_euler_zyz": dict(zip(("alpha", "beta", "gamma"), res.optimal_rotation.angles.canonical())),
        "degenerate": res.degenerate,
        "n_optimal_candidates": res.n_candidates,
        "interferometer_roundtrip_qfi": roundtrip,
        "diagnostics": res.diagnostics,
        "grid_top": [{"theta": a[0], "phi": a[1], "value": v} for a, v in top],
    }
    problems = []
    if res.value > n * n + 1e-6:
        problems.append(f"innate value {res.value!r} exceeds N^2")
    if res.value < before - 1e-9:
        problems.append("innate value below the unrotated susceptibility")
    if abs(roundtrip - res.value) > 1e-6 * max(1.0, res.value):
        problems.append("interferometer round trip disagrees with the optimum")
    row = {"value": res.value, "theta": res.angles[0], "phi": res.angles[1],
           "axis_x": float(res.optimal_axis[0]), "axis_y": float(res.optimal_axis[1]),
           "axis_z": float(res.optimal_axis[2]), "degenerate": res.degenerate}
    return "innate", echo, results, None, (_csv_row(row) if args.format == "csv" else None), problems


_CONFIG_KEYS = {"probe", "interferometer", "true_theta", "shots", "trials", "master_seed"}


def _cmd_estimate(args):
    text = _read(args.config)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"line {exc.lineno} column {exc.colno}", f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SpecError("$", "config must be an object")
    extra = set(doc) - _CONFIG_KEYS
    if extra:
        raise SpecError("$", f"unexpected field(s): {', '.join(sorted(extra))}")
    if args.state:
        probe = parse_state_spec(_read(args.state))
    else:
        if "probe" not in doc:
            raise SpecError("$.probe", "required field is missing (or pass --state)")
        probe = _build(doc["probe"], "$.probe")
    probe = _single_sector(apply_rotations(probe, args.rotate), "estimate")
    spec = parse_interferometer(doc.get("interferometer", "mz"), probe.j)

    def need_int(key, minimum):
        v = doc.get(key)
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise SpecError(f"$.{key}", f"must be an integer >= {minimum}")
        return v

    theta = doc.get("true_theta", 0.0)
    if isinstance(theta, bool) or not isinstance(theta, (int, float)) or not np.isfinite(theta):
        raise SpecError("$.true_theta", "must be a finite number in radians")
    seed = args.seed if args.seed is not None else need_int("master_seed", 0)
    if not (0 <= seed < 2 ** 64):
        raise SpecError("$.master_seed", "must be an unsigned 64-bit integer")
    cfg = ExperimentConfig(probe, spec, float(theta), need_int("shots", 1), need_int("trials", 1), seed)
    stats = run_experiment(cfg)
    results = stats.as_dict()
    if stats.estimator_variance is not None:
        results["nu_var_qfi"] = cfg.shots * stats.estimator_variance * stats.qfi
    echo = {"config_file": args.config, "config": doc, "state_file": args.state, "rotate": list(args.rotate)}
    problems = []
    if stats.cfi > stats.qfi * (1 + 1e-8) + 1e-8:
        problems.append(f"classical Fisher information {stats.cfi!r} exceeds QFI {stats.qfi!r}")
    row = {k: v for k, v in results.items() if not isinstance(v, dict)}
    return "estimate", echo, results, stats.rng, (_csv_row(row) if args.format == "csv" else None), problems


def _cmd_oracle(args):
    if not (1 <= args.n_max <= MAX_QUBITS):
        raise InputError(f"--n-max must be between 1 and {MAX_QUBITS}")
    checks = run_oracle_checks(args.n_max, np.random.default_rng(args.seed), tol=args.tol)
    rows = [{"name": c.name, "n": c.n, "passed": c.passed, "deviation": c.deviation} for c in checks]
    results = {"checks": rows, "all_passed": all(c.passed for c in checks)}
    echo = {"n_max": args.n_max, "tol": args.tol}
    csv_text = None
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "n", "passed", "deviation"])
        for r in rows:
            w.writerow([r["name"], r["n"], r["passed"], repr(r["deviation"])])
        csv_text = buf.getvalue()
    problems = [f"{c.name} failed at n={c.n} (deviation {c.deviation:.3e})" for c in checks if not c.passed]
    return "oracle-check", echo, results, {"seed": args.seed}, csv_text, problems


_COMMANDS = {
    "metrics": _cmd_metrics,
    "decompose": _cmd_decompose,
    "innate": _cmd_innate,
    "estimate": _cmd_estimate,
    "oracle-check": _cmd_oracle,
}


def _fail(kind: str, reason: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "reason": reason}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        command, echo, results, seed, csv_text, problems = _COMMANDS[args.command](args)
    except (InputError, SpecError) as exc:
        return _fail("input", str(exc), 1)
    except (ValueError, TypeError) as exc:
        return _fail("input", str(exc), 1)
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        return _fail("numerical", str(exc), 2)
    text = csv_text if csv_text is not None else dumps_report(make_report(command, echo, results, seed))
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    if problems:
        return _fail("numerical", "; ".join(problems), 2)
    return 0
