"""Command-line driver.

Verbs:
  run          execute the experiment described by a config file
  verify       evaluate a finished run directory against its claims
  list-models  show available models and observables
  dump-matrix  write a model's operators to a compressed npz

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 verification failure.  The default output root comes from
JUMPLAB_OUT_ROOT (falling back to ./runs), overridable with --out.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import traceback
from pathlib import Path

from .config import KINDS, MODEL_PARAMS, ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4

OUT_ROOT_ENV = "JUMPLAB_OUT_ROOT"


def _out_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.out:
        return Path(cfg.out)
    root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
    stem = cfg.path.stem if cfg.path else cfg.kind
    return root / stem


def _apply_threads(n: int | None):
    if not n:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def cmd_run(args) -> int:
    from . import io
    from .pipelines import PipelineError, run_pipeline

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    _apply_threads(args.threads)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / io.FAILED_MARKER
    if marker.exists():
        marker.unlink()
    start = time.monotonic()
    try:
        outputs, summary = run_pipeline(cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        io.write_failed_marker(out, f"config error: {err}")
        return EXIT_CONFIG
    except (PipelineError, FloatingPointError, ArithmeticError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        io.write_failed_marker(out, f"numeric failure: {err}")
        return EXIT_NUMERIC
    except Exception as err:  # keep partial outputs inspectable
        traceback.print_exc()
        io.write_failed_marker(out, f"{type(err).__name__}: {err}")
        return EXIT_NUMERIC
    wall = time.monotonic() - start
    io.write_manifest(out, kind=cfg.kind, config_path=cfg.path, seed=cfg.seed,
                      outputs=outputs, wall_time_s=wall, extra={"summary": summary})
    print(f"{cfg.kind}: wrote {len(outputs)} files to {out} "
          f"({wall:.1f}s)")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import verify_run

    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, cfg)
    report = verify_run(cfg, out)
    for line in report.lines():
        print(line)
    if report.missing:
        print(f"{len(report.missing)} artifact(s) missing", file=sys.stderr)
    print("VERDICT:", "PASS" if report.ok else "FAIL")
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_list_models(args) -> int:
    from .models import OBSERVABLES_BY_MODEL

    for name in sorted(MODEL_PARAMS):
        params = ", ".join(sorted(MODEL_PARAMS[name]))
        print(f"{name}")
        print(f"  parameters: {params}")
        print(f"  observables: {', '.join(OBSERVABLES_BY_MODEL[name])}")
    return EXIT_OK


def cmd_dump_matrix(args) -> int:
    from . import io
    from .pipelines import build_model

    try:
        cfg = load_config(args.config)
        if cfg.model is None:
            raise ConfigError("config has no [model] section to dump")
        pair = build_model(cfg.model)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, cfg)
    path = io.dump_matrix_npz(out / "matrix.npz",
                              h0_diagonal=pair.h0_diag,
                              coupling=pair.v,
                              free_energies=pair.basis.energies,
                              sys_energies=pair.basis.sys_energies,
                              bath_energies=pair.basis.bath_energies)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumplab",
        description="Thermalization and repeated-measurement experiments "
                    "on small lattice models.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True,
                           help="TOML experiment description")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int,
                       help="cap BLAS/OpenMP thread count")

    p_run = sub.add_parser("run", help=f"execute one of: {', '.join(KINDS)}")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="check a finished run's artifacts")
    common(p_ver)
    p_ver.set_defaults(func=cmd_verify)

    p_list = sub.add_parser("list-models", help="available models/observables")
    p_list.set_defaults(func=cmd_list_models)

    p_dump = sub.add_parser("dump-matrix", help="dump model operators to npz")
    common(p_dump)
    p_dump.set_defaults(func=cmd_dump_matrix)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
