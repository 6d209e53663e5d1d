#!/usr/bin/env python3
"""Run the bundled experiment configs end to end and verify the artifacts.

By default runs the quick set; --full adds the heavy ones (the dim-2401
trajectory sweep, the dim-4096 diagonalization, the 10^4-member ensemble).
Each run lands in <out-root>/<config-stem>/ with a manifest, then gets
checked with the same verifier the CLI exposes.

    python scripts/run_experiments.py --out-root runs
    python scripts/run_experiments.py --full --only trajectories_oscillator
"""

import argparse
import sys
import time
from pathlib import Path

from jumplab.cli import main as jumplab_main

QUICK = [
    "ou_reference.toml",
    "entropy_oscillator.toml",
    "evolve_oscillator.toml",
    "dos_oscillator.toml",
    "einstein_oscillator.toml",
]
HEAVY = [
    "sample_ensemble_reference.toml",
    "trajectories_oscillator.toml",
    "trajectories_blbq_local.toml",
    "trajectories_blbq_global.toml",
    "dos_spin_half.toml",
]


def run(config: Path, out_root: Path) -> bool:
    out = out_root / config.stem
    print(f"=== {config.name} -> {out}")
    t0 = time.perf_counter()
    code = jumplab_main(["run", "--config", str(config), "--out", str(out)])
    print(f"    run exit {code} after {time.perf_counter() - t0:.1f}s")
    if code != 0:
        return False
    code = jumplab_main(["verify", "--config", str(config), "--out", str(out)])
    print(f"    verify exit {code}")
    return code == 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", type=Path,
                    default=Path(__file__).resolve().parent.parent / "configs")
    ap.add_argument("--out-root", type=Path, default=Path("runs"))
    ap.add_argument("--full", action="store_true",
                    help="include the long-running configs")
    ap.add_argument("--only", nargs="*", metavar="STEM",
                    help="run just these config stems")
    args = ap.parse_args(argv)

    names = QUICK + HEAVY if args.full else list(QUICK)
    if args.only:
        names = [n for n in QUICK + HEAVY if Path(n).stem in set(args.only)]
        if not names:
            ap.error(f"no config matches {args.only}")

    failures = []
    for name in names:
        if not run(args.configs / name, args.out_root):
            failures.append(name)
    print("=== done;", "all verified" if not failures
          else f"FAILED: {', '.join(failures)}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
