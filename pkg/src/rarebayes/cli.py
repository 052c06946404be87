"""Command-line front end.

``rarebayes <update|compare|demo-bias|validate> --config run.toml [--out DIR]
[--seed N] [--threads N]``

Exit codes: 0 success, 2 bad config or arguments, 3 plateau in the driving
variable, 4 level cap reached before stopping, 5 model evaluation fault,
6 validation found a mismatch, 1 any other library error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import artifacts
from .bus import run_bus, run_bus_original
from .config import RunConfig, load_config
from .errors import ConfigError, LevelCapError, RareBayesError
from .models import GaussianConjugate
from .oracles import (
    chi2_truncated,
    direct_mc_evidence,
    gaussian_truncation_radius,
    ks_two_sample,
    rejection_sample,
)
from .rng import AUX, ORACLE, Streams
from .sus import lineage_design_effect

__all__ = ["main", "cmd_update", "cmd_compare", "cmd_demo_bias", "cmd_validate", "EXIT_VALIDATION"]

EXIT_VALIDATION = 6
THREADS_ENV = "RAREBAYES_THREADS"


def _say(msg: str = "") -> None:
    print(msg, flush=True)


def _write_run(out: Path, result) -> None:
    a = [x.p for x in result.a_sequence]
    artifacts.write_levels(out / "levels.csv", result.levels, a)
    artifacts.write_ccdf(out / "ccdf.csv", result.ccdf)
    artifacts.write_posterior(out / "posterior.csv", result.posterior.theta)
    artifacts.write_json(out / "evidence.json", artifacts.evidence_payload(result))


def _write_partial(out: Path, exc: LevelCapError) -> None:
    partial = exc.partial or {}
    if "levels" in partial:
        a = [x.p for x in partial.get("a_sequence", [])]
        artifacts.write_levels(out / "levels.csv", partial["levels"], a)
    if "ccdf" in partial:
        artifacts.write_ccdf(out / "ccdf.csv", partial["ccdf"])


def _run_model(config: RunConfig, block, out: Path, threads: int):
    model, prior = block.build()
    seed = block.seed if block.seed is not None else config.seed
    sus = config.sus if seed == config.sus.seed else config.with_seed(seed).sus
    try:
        result = run_bus(model, prior, sus, config.stopping, config.proposal, rng=seed, threads=threads)
    except LevelCapError as exc:
        _write_partial(out, exc)
        raise
    _write_run(out, result)
    return result


def cmd_update(config: RunConfig, threads: int = 1) -> int:
    out = Path(config.output)
    result = _run_model(config, config.models[0], out, threads)
    ev = result.evidence
    _say(artifacts.level_table(result.levels, [x.p for x in result.a_sequence]))
    _say(f"stopping level m = {ev.stopping_level}, b_m = {ev.b_m:.6g}")
    _say(f"ln P_D = {ev.ln_evidence:.6g} (c.o.v. proxy {ev.cov_proxy:.3g})")
    _say(f"artifacts written to {out}")
    return 0


def cmd_compare(config: RunConfig, threads: int = 1) -> int:
    out = Path(config.output)
    entries, status = [], 0
    for block in config.models:
        entry = {"label": block.display_name, "model": block.name}
        try:
            res = _run_model(config, block, out / block.display_name, threads)
        except RareBayesError as exc:
            entry.update(status="failed", error=str(exc), exit_code=exc.exit_code)
            status = status or exc.exit_code
        else:
            ev = res.evidence
            entry.update(status="ok", ln_evidence=ev.ln_evidence, cov_proxy=ev.cov_proxy,
                         stopping_level=ev.stopping_level, b_m=ev.b_m)
        entries.append(entry)
    ratios = []
    ok = [e for e in entries if e["status"] == "ok"]
    for i, a in enumerate(ok):
        for b in ok[i + 1:]:
            ln_r = a["ln_evidence"] - b["ln_evidence"]
            std = math.hypot(a["cov_proxy"], b["cov_proxy"])
            ratios.append({"numerator": a["label"], "denominator": b["label"], "ln_ratio": ln_r,
                           "ratio": math.exp(ln_r) if ln_r < 700 else math.inf, "std_ln_ratio": std})
    artifacts.write_json(out / "compare.json", {"models": entries, "ratios": ratios, "complete": status == 0})
    _say(f"{'model':<24} {'ln P_D':>10} {'c.o.v.':>8} {'m':>3}")
    for e in entries:
        if e["status"] == "ok":
            _say(f"{e['label']:<24} {e['ln_evidence']:>10.4f} {e['cov_proxy']:>8.3f} {e['stopping_level']:>3d}")
        else:
            _say(f"{e['label']:<24} failed: {e['error']}")
    for r in ratios:
        _say(f"R({r['numerator']} / {r['denominator']}) = {r['ratio']:.4g}, "
             f"ln R = {r['ln_ratio']:.4f} +/- {r['std_ln_ratio']:.4f}")
    return status


def _require_log_max(model) -> float:
    log_max = getattr(model, "log_max", None)
    if log_max is None or not math.isfinite(log_max):
        raise ConfigError(f"model {getattr(model, 'name', model)!r} does not expose its maximum log-likelihood")
    return float(log_max)


def _ks_report(samples, reference: np.ndarray, alpha: float) -> list:
    ess = samples.effective_sample_size()
    report = []
    for j in range(reference.shape[1]):
        k = ks_two_sample(samples.theta[:, j], reference[:, j], alpha=alpha, n_eff_x=ess[j])
        report.append({"parameter": f"theta{j + 1}", "statistic": k.statistic, "critical": k.critical,
                       "pvalue": k.pvalue, "n_eff": ess[j], "passed": k.passed})
    return report


def truncation_check(model, c: float, samples, bins: int = 10) -> Optional[dict]:
    """Chi-square test that samples falling in B = {cL > 1} follow the prior there.

    Available for the one-parameter Gaussian-conjugate model with a standard
    normal prior, where B is an interval.
    """
    if not isinstance(model, GaussianConjugate) or model.dim != 1:
        return None
    r = gaussian_truncation_radius(model, c)
    if r == 0.0:
        return None
    lo, hi = model.data[0] - r, model.data[0] + r
    theta = samples.theta[:, 0]
    inside = (theta > lo) & (theta < hi)
    n_in = int(inside.sum())
    report = {"lower": lo, "upper": hi, "count": n_in, "fraction": n_in / theta.size}
    if n_in < 5 * bins:
        report["available"] = False
        return report
    # design effect from the bin indicators over the whole level
    edges = special.ndtri(np.linspace(special.ndtr(lo), special.ndtr(hi), bins + 1))
    edges[0], edges[-1] = lo, hi
    ind = np.stack([(theta > edges[k]) & (theta <= edges[k + 1]) for k in range(bins)]).astype(float)
    deff = float(lineage_design_effect(samples.record, ind).mean()) if samples.record is not None else 1.0
    chi = chi2_truncated(theta[inside], special.ndtr, lo, hi, bins, deff, ppf=special.ndtri)
    report.update(available=True, statistic=chi.statistic, dof=chi.dof, pvalue=chi.pvalue,
                  design_effect=chi.design_effect)
    return report


def cmd_demo_bias(config: RunConfig, threads: int = 1) -> int:
    out = Path(config.output)
    block = config.models[0]
    model, prior = block.build()
    c_max = math.exp(-_require_log_max(model))
    streams = Streams(config.seed)
    ref = rejection_sample(model, prior, c_max, config.demo.reference_samples, streams.generator(ORACLE, 0))
    if config.demo.c_values is not None:
        cs = list(config.demo.c_values)
    else:
        cs = [rel * c_max for rel in config.demo.c_relative]
    alpha = config.validate.alpha
    entries = []
    for k, c in enumerate(cs):
        res = run_bus_original(model, prior, c, config.sus, config.proposal, streams.child(AUX, k), threads)
        ks = _ks_report(res.posterior, ref.theta, alpha)
        entry = {"c": c, "c_relative": c / c_max, "admissible": c <= c_max, "levels": len(res.levels) - 1,
                 "ln_evidence": res.ln_evidence, "cov": res.cov, "ks": ks,
                 "max_ks_statistic": max(x["statistic"] for x in ks),
                 "ks_passed": all(x["passed"] for x in ks)}
        trunc = truncation_check(model, c, res.posterior)
        if trunc is not None:
            entry["truncation"] = trunc
        entries.append(entry)
        artifacts.write_posterior(out / f"posterior_c{k}.csv", res.posterior.theta)
    artifacts.write_posterior(out / "reference.csv", ref.theta)
    artifacts.write_json(out / "demo_bias.json", {
        "c_max": c_max, "reference_samples": int(ref.theta.shape[0]),
        "reference_acceptance_rate": ref.acceptance_rate, "alpha": alpha, "runs": entries,
    })
    _say(f"{'c/c_max':>10} {'ln P_D':>9} {'max KS':>8} {'KS':>5}  B check")
    for e in entries:
        t = e.get("truncation")
        t_txt = f"chi2 p = {t['pvalue']:.3f}" if t and t.get("available") else ""
        _say(f"{e['c_relative']:>10.3g} {e['ln_evidence']:>9.4f} {e['max_ks_statistic']:>8.4f} "
             f"{'pass' if e['ks_passed'] else 'FAIL':>5}  {t_txt}")
    return 0


def cmd_validate(config: RunConfig, threads: int = 1) -> int:
    out = Path(config.output)
    block = config.models[0]
    model, prior = block.build()
    c_max = math.exp(-_require_log_max(model))
    v = config.validate
    result = _run_model(config, block, out, threads)
    streams = Streams(config.seed)
    ref = rejection_sample(model, prior, c_max, v.reference_samples, streams.generator(ORACLE, 0))
    mc = direct_mc_evidence(model, prior, v.evidence_draws, streams.generator(ORACLE, 1))
    ev = result.evidence
    ks = _ks_report(result.posterior, ref.theta, v.alpha)
    z_mc = (ev.ln_evidence - mc.ln_p) / math.hypot(ev.cov_proxy, mc.ln_std)
    report = {
        "ln_evidence": ev.ln_evidence, "cov_proxy": ev.cov_proxy, "stopping_level": ev.stopping_level,
        "direct_mc": {"ln_evidence": mc.ln_p, "std": mc.ln_std, "draws": v.evidence_draws, "z": z_mc},
        "rejection": {"samples": int(ref.theta.shape[0]), "acceptance_rate": ref.acceptance_rate},
        "ks": ks,
    }
    checks = [abs(z_mc) <= 3.0] + [x["passed"] for x in ks]
    if hasattr(model, "log_evidence"):
        exact = model.log_evidence()
        z = (ev.ln_evidence - exact) / ev.cov_proxy
        report["analytic"] = {"ln_evidence": exact, "z": z}
        checks.append(abs(z) <= 3.0)
    report["passed"] = all(checks)
    artifacts.write_json(out / "validate.json", report)
    _say(f"BUS ln P_D = {ev.ln_evidence:.4f} +/- {ev.cov_proxy:.4f}")
    _say(f"direct MC ln P_D = {mc.ln_p:.4f} +/- {mc.ln_std:.4f} (z = {z_mc:.2f})")
    if "analytic" in report:
        _say(f"analytic ln P_D = {report['analytic']['ln_evidence']:.4f} (z = {report['analytic']['z']:.2f})")
    for x in ks:
        _say(f"KS {x['parameter']}: {x['statistic']:.4f} vs critical {x['critical']:.4f} "
             f"({'pass' if x['passed'] else 'FAIL'})")
    _say("validation " + ("passed" if report["passed"] else "FAILED"))
    return 0 if report["passed"] else EXIT_VALIDATION


COMMANDS = {"update": cmd_update, "compare": cmd_compare, "demo-bias": cmd_demo_bias, "validate": cmd_validate}


def _threads(value: Optional[int]) -> int:
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env is None or env == "":
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
    if value < 1:
        raise ConfigError(f"thread count must be at least 1, got {value}")
    return value


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rarebayes", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("update", "posterior samples and evidence for one model"),
                            ("compare", "evidence ratios between two or more models"),
                            ("demo-bias", "original BUS with several multipliers against a rejection oracle"),
                            ("validate", "check one model run against rejection and direct Monte Carlo")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run configuration (TOML)")
        p.add_argument("--out", help="artifact directory (overrides the config)")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; keep 0 for --help
        return int(exc.code or 0)
    try:
        threads = _threads(args.threads)
        config = load_config(args.config, args.command)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.out is not None:
            config = config.with_output(args.out)
        return COMMANDS[args.command](config, threads)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RareBayesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
