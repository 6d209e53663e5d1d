"""Artifact verification: evaluate a finished run directory against the
quantitative claims its experiment kind is supposed to satisfy.

Checks operate purely on emitted files (plus the manifest's hashes, so
tampering is always flagged); nothing is recomputed from the model.
Statistical checks use the stored standard errors.  Regime-dependent
claims are gated on flags the trajectory pipeline records per interval
(rate_match_claim, zeno_claim): rate agreement is only promised where
the reference decay is single-timescale and the interval is neither
Zeno-suppressed nor so long that one step spans the whole decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig


@dataclass
class VerifyCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list[VerifyCheck] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.missing and all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str = ""):
        self.checks.append(VerifyCheck(name, bool(passed), detail))

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            out.append(f"[{mark}] {c.name}" + (f": {c.detail}" if c.detail else ""))
        for m in self.missing:
            out.append(f"[MISSING] {m}")
        return out


def _manifest_checks(out: Path, report: VerifyReport) -> dict | None:
    manifest_path = out / io.MANIFEST_NAME
    if not manifest_path.exists():
        report.missing.append(str(manifest_path))
        return None
    manifest = io.read_manifest(out)
    if (out / io.FAILED_MARKER).exists():
        reason = (out / io.FAILED_MARKER).read_text().strip()
        report.add("run_completed", False, f"FAILED marker present: {reason}")
    else:
        report.add("run_completed", True)
    clean = True
    for entry in manifest.get("outputs", []):
        path = out / entry["path"]
        if not path.exists():
            report.missing.append(str(path))
            clean = False
            continue
        if io.file_sha256(path) != entry["sha256"]:
            report.add("artifact_integrity", False,
                       f"{entry['path']} does not match its manifest hash")
            clean = False
    if clean:
        report.add("artifact_integrity", True,
                   f"{len(manifest.get('outputs', []))} files match the manifest")
    return manifest


def _verify_evolve(cfg, out: Path, report: VerifyReport):
    fit = io.read_json(out / "decay_fit.json")
    gamma = fit.get("gamma_ev")
    report.add("decay_fit_converged", gamma is not None and gamma > 0
               and fit.get("flag") in (None, ""),
               f"gamma_ev={gamma}")
    amp = abs(fit.get("amplitude") or 0.0)
    resid = fit.get("residual_rms", np.inf)
    report.add("decay_residual_below_10pct", amp > 0 and resid < 0.1 * amp,
               f"rms={resid:.3g} amplitude={amp:.3g}")


def _entropy_monotone(table: dict, report: VerifyReport, tag: str):
    s = table["entropy"]
    se = table["entropy_se"]
    slack = 2 * (se[1:] + se[:-1])
    drops = s[:-1] - s[1:] - slack
    worst = float(drops.max()) if len(drops) else 0.0
    report.add(f"{tag}:entropy_nondecreasing_2se", worst <= 0,
               f"worst drop beyond slack {worst:.3g}")


def _verify_trajectories(cfg, out: Path, report: VerifyReport):
    summary = io.read_json(out / "summary.json")
    gamma_ev = summary["gamma_ev"]
    report.add("reference_rate_available", gamma_ev and gamma_ev > 0,
               f"gamma_ev={gamma_ev}")
    p_inf = np.asarray(summary["p_inf"], dtype=float)
    for entry in summary["per_dt"]:
        dt, tag = entry["dt"], entry["files_tag"]
        table = io.read_csv(out / f"ensemble_{tag}.csv")
        k = len(p_inf)
        p_cols = np.stack([table[f"p_{s}"] for s in range(k)], axis=1)
        sums = p_cols.sum(axis=1)
        report.add(f"{tag}:empirical_p_normalized",
                   bool(np.max(np.abs(sums - 1)) < 1e-9),
                   f"max |sum-1| = {np.max(np.abs(sums - 1)):.2e}")
        _entropy_monotone(table, report, tag)
        _verify_kernel_chain(out, tag, report)

        if (summary.get("reference_clean")
                and 2 * gamma_ev * dt * entry["n_meas"] >= 10):
            # long equilibrated run with a trustworthy rate: pooled tail
            # outcome histogram should sit near the stationary distribution
            tail = p_cols[len(p_cols) // 2:].mean(axis=0)
            tv = 0.5 * np.abs(tail - p_inf).sum()
            report.add(f"{tag}:stationary_tv_below_0p1", tv < 0.1,
                       f"total variation={tv:.3f}")

        fitted = entry["gamma_qj"] is not None
        report.add(f"{tag}:gamma_fitted", fitted,
                   str(entry.get("gamma_flag") or ""))
        if not fitted:
            continue
        ratio = entry["gamma_ratio"]
        if entry.get("rate_match_claim"):
            report.add(f"{tag}:gamma_ratio_in_band", 0.8 <= ratio <= 1.2,
                       f"ratio={ratio:.3f} at dt={dt}")
            report.add(f"{tag}:consistent_histories_3se",
                       entry["consistent_histories_max_z"] < 3,
                       f"max|z|={entry['consistent_histories_max_z']:.2f}")
        elif entry.get("zeno_claim"):
            report.add(f"{tag}:zeno_slowdown", ratio < 0.8,
                       f"ratio={ratio:.3f} at dt={dt}")


def _verify_kernel_chain(out: Path, tag: str, report: VerifyReport):
    """The classical chain sampled from the kernel must match its rows."""
    t = io.read_csv(out / f"kernel_chain_{tag}.csv")
    counts, freq, kern = t["count"], t["frequency"], t["kernel"]
    i_col = t["i"].astype(int)
    row_totals = {i: counts[i_col == i].sum() for i in set(i_col.tolist())}
    worst = 0.0
    tested = 0
    for j in range(len(counts)):
        n_i = row_totals[int(i_col[j])]
        expected = n_i * kern[j]
        if n_i == 0 or expected < 5 or expected > n_i - 5:
            continue            # too few counts for the normal approximation
        sigma = np.sqrt(kern[j] * (1 - kern[j]) / n_i)
        worst = max(worst, abs(freq[j] - kern[j]) / sigma)
        tested += 1
    if tested == 0:
        return      # every expected count < 5: nothing testable at this dt
    report.add(f"{tag}:kernel_chain_within_3sigma", worst < 3,
               f"max|z|={worst:.2f} over {tested} entries")


def _verify_dos(cfg, out: Path, report: VerifyReport):
    summary = io.read_json(out / "dos_summary.json")
    frac = summary["fraction_within_1p5"]
    report.add("dos_within_factor_1p5_for_80pct", frac >= 0.8,
               f"fraction={frac:.2f} over {summary['n_states']} states")
    report.add("dos_all_fits_converged",
               summary["n_fitted"] == summary["n_states"],
               f"{summary['n_fitted']}/{summary['n_states']} fitted")


def _verify_einstein(cfg, out: Path, report: VerifyReport):
    table = io.read_csv(out / "einstein.csv")
    dev = table["deviation"]
    good = int(np.sum(dev < 0.3))
    report.add("einstein_deviation_below_0p3_for_5_states", good >= 5,
               f"{good} of {len(dev)} states below 0.3 "
               f"(best {np.nanmin(dev):.3f})")


def _verify_entropy(cfg, out: Path, report: VerifyReport):
    summary = io.read_json(out / "entropy_summary.json")
    report.add("predicted_entropy_monotone", summary["monotone"])
    report.add("entropy_bounded_by_ln_d",
               summary["s_infinity"] <= summary["s_max"] + 1e-9,
               f"S_inf={summary['s_infinity']:.4f} ln d={summary['s_max']:.4f}")


def _verify_ou(cfg, out: Path, report: VerifyReport):
    summary = io.read_json(out / "ou_summary.json")
    target = summary["stationary_variance_target"]
    est = summary["stationary_variance_estimate"]
    se = target * np.sqrt(2.0 / summary["n_paths"])
    report.add("ou_stationary_variance_3sigma", abs(est - target) < 3 * se,
               f"estimate={est:.4f} target={target:.4f} se={se:.4f}")
    if "shaken" in summary:
        sh = summary["shaken"]
        if sh["predicted_delta2"] > 0:
            rel = abs(sh["delta2"] / sh["predicted_delta2"] - 1)
            report.add("shaken_delta2_within_10pct", rel < 0.1,
                       f"delta2={sh['delta2']:.4f} "
                       f"predicted={sh['predicted_delta2']:.4f}")


def _verify_ensemble(cfg, out: Path, report: VerifyReport):
    summary = io.read_json(out / "ensemble_summary.json")
    report.add("envelope_profile_within_5pct",
               summary["profile_max_rel_error"] < 0.05,
               f"max rel error={summary['profile_max_rel_error']:.3f}")
    pooled, se = summary["pooled_correction"], summary["pooled_correction_se"]
    pred = summary["pooled_correction_predicted"]
    report.add("four_point_correction_negative", pooled < 0,
               f"pooled={pooled:.3e} (se {se:.1e})")
    report.add("four_point_matches_prediction_3sigma",
               abs(pooled - pred) < 3 * se,
               f"pooled={pooled:.3e} predicted={pred:.3e} se={se:.1e}")


_CHECKERS = {
    "evolve": _verify_evolve,
    "trajectories": _verify_trajectories,
    "dos_measure": _verify_dos,
    "einstein": _verify_einstein,
    "entropy": _verify_entropy,
    "ou": _verify_ou,
    "sample_ensemble": _verify_ensemble,
}


def verify_run(cfg: ExperimentConfig, out_dir) -> VerifyReport:
    out = Path(out_dir)
    report = VerifyReport()
    if not out.is_dir():
        report.missing.append(str(out))
        return report
    manifest = _manifest_checks(out, report)
    if manifest is None:
        return report
    try:
        _CHECKERS[cfg.kind](cfg, out, report)
    except FileNotFoundError as err:
        report.missing.append(str(err.filename or err))
    except KeyError as err:
        report.add("artifacts_well_formed", False,
                   f"missing field {err} in an artifact")
    return report
