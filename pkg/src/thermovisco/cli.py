"""Command-line interface: ``run``, ``study`` and ``verify``.

Exit codes: 0 success, 2 configuration error, 3 step failure,
4 invariant or oracle failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, kernels
from .config import ConfigError, config_hash, config_to_text, load_config
from .mechanics import StepFailure
from .outputs import (SCHEMAS, RunManifest, run_invariants, write_diagnostics, write_fields, write_ledger,
                      write_study)

EXIT_OK, EXIT_CONFIG, EXIT_STEP, EXIT_INVARIANT = 0, 2, 3, 4


def _err(msg: str):
    print(msg, file=sys.stderr)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(config_path, out_dir, backend: str | None = None) -> int:
    from .scheme import run

    try:
        config = load_config(config_path)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    out = _outdir(out_dir)
    start = time.perf_counter()
    try:
        traj, ledger = run(config, backend=backend)
    except StepFailure as exc:
        _err(f"step failure: {exc}")
        (out / "failure.json").write_text(json.dumps(exc.diagnostics, indent=2, sort_keys=True, default=str))
        return EXIT_STEP
    outputs = {}
    outputs[str(write_ledger(out / "ledger.csv", ledger))] = SCHEMAS["ledger"]
    outputs[str(write_diagnostics(out / "diagnostics.csv", traj))] = SCHEMAS["diagnostics"]
    every = config.snapshot_every or traj.N
    for k in sorted({0, traj.N, *range(0, traj.N + 1, every)}):
        outputs[str(write_fields(out / f"fields_k{k:05d}.csv", traj, k))] = SCHEMAS["fields"]
    (out / "config.ini").write_text(config_to_text(config))
    checks = run_invariants(traj, ledger)
    summary = {k: v for k, v in ledger.summary.items() if not isinstance(v, dict)}
    manifest = RunManifest(config_hash(config), __version__, 0, outputs, time.perf_counter() - start,
                           checks, all(checks.values()), backend or kernels.BACKEND, summary)
    manifest.write(out / "manifest.json")
    if not manifest.passed:
        failed = [k for k, ok in checks.items() if not ok]
        _err(f"invariant failure: {', '.join(failed)}")
        return EXIT_INVARIANT
    print(f"run ok: {traj.N} steps, max |drift| {ledger.summary['max_abs_drift']:.3e}, output in {out}")
    return EXIT_OK


def cmd_study(config_path, mode: str, levels: int, out_dir, backend: str | None = None,
              parallel: bool = False) -> int:
    from .study import run_study

    try:
        config = load_config(config_path)
        from .study import ladder
        ladder(config, mode, levels)
    except (ConfigError, ValueError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    out = _outdir(out_dir)
    try:
        result = run_study(config, mode, levels, backend=backend, parallel=parallel)
    except StepFailure as exc:
        _err(f"step failure: {exc} {exc.diagnostics}")
        return EXIT_STEP
    write_study(out / "study.csv", result.rows())
    (out / "study_criteria.json").write_text(json.dumps(result.criteria, indent=2, sort_keys=True) + "\n")
    for row in result.rows():
        print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    for name, ok in result.criteria.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if result.passed else EXIT_INVARIANT


def cmd_verify(seed: int = 0, out_file=None, n_inputs: int = 5, n_starts: int = 2000) -> int:
    from .oracles import reports_to_json, run_verification

    reports = run_verification(seed, n_inputs=n_inputs, n_starts=n_starts)
    text = reports_to_json(reports)
    if out_file:
        Path(out_file).write_text(text + "\n")
    failed = [r for r in reports if not r.passed]
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.max_error:.3e} (tol {r.tolerance:.1e})")
    if failed:
        _err("oracle failure: " + ", ".join(r.name for r in failed))
        _err(json.dumps([r.to_dict() for r in failed], indent=2, sort_keys=True, default=float))
        return EXIT_INVARIANT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermovisco", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--backend", choices=["compiled", "python"], default=None,
                        help="kernel backend (default: compiled when available)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write ledger, fields and manifest")
    p.add_argument("config")
    p.add_argument("outdir")

    p = sub.add_parser("study", help="run a refinement ladder and compare the levels")
    p.add_argument("config")
    p.add_argument("outdir")
    p.add_argument("--mode", choices=["tau", "h", "eps"], required=True)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--parallel", action="store_true", help="run the levels in separate processes")

    p = sub.add_parser("verify", help="run the oracle suites and bound audits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--inputs", type=int, default=5, help="random step inputs for the multistart check")
    p.add_argument("--starts", type=int, default=2000, help="multistart initializations per input")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as configuration errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command == "run":
        return cmd_run(args.config, args.outdir, args.backend)
    if args.command == "study":
        return cmd_study(args.config, args.mode, args.levels, args.outdir, args.backend, args.parallel)
    return cmd_verify(args.seed, args.out, args.inputs, args.starts)


if __name__ == "__main__":
    sys.exit(main())
