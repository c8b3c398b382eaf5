"""Command-line interface: simulate, estimate, bounds, risk, depth-analysis.

Every run writes a manifest (resolved parameters plus input digests) next to
its outputs so results can be reproduced byte-for-byte.
"""
from __future__ import annotations

import functools
import hashlib
import json
import sys
from pathlib import Path

import click

from . import __version__
from .chain import CHAIN_KINDS, HASH_SPACE, target_from_raw
from .io import (
    ChainDataError,
    export_results,
    read_headers,
    read_reports,
    write_ground_truth,
    write_headers,
    write_reports,
)
from .mom import (
    BootstrapConfig,
    MomSolveConfig,
    bounded_network_estimate,
    combined_estimate,
    estimate_network_rate,
    estimate_subset_rate,
    window_ending_at,
)
from .risk import RiskAnalyzer, RiskParams, depth_cdf
from .simulate import AttackerSpec, MinerSpec, SimConfig, simulate, target_for_block_interval
from .status import bounded_estimate, estimate_miner_rate, verify_report_chain
from . import plots


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_base: Path, subcommand: str, params: dict,
                    inputs: dict) -> None:
    manifest = {
        "tool": "powmeter",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": params,
        "input_digests": {name: _digest(p) for name, p in inputs.items()},
    }
    path = out_base.with_suffix(out_base.suffix + ".manifest.json") \
        if out_base.suffix else out_base / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, ChainDataError, FileNotFoundError) as e:
            raise click.ClickException(str(e))
    return wrapper


@click.group()
@click.version_option(__version__, prog_name="powmeter")
def main():
    """Hash-rate estimation and double-spend risk for proof-of-work chains."""


# -- simulate ----------------------------------------------------------------

def _config_from_json(obj: dict, seed: int) -> SimConfig:
    miners = tuple(MinerSpec(m["label"], float(m["hash_rate"]),
                             float(m.get("reports_per_block", 0.0)))
                   for m in obj["miners"])
    chain_kind = CHAIN_KINDS[obj.get("chain_kind", "bitcoin-style")]
    interval = float(obj["block_interval_seconds"])
    attacker = None
    if obj.get("attacker"):
        a = obj["attacker"]
        attacker = AttackerSpec(a["label"], float(a["total_rate"]),
                                float(a["divert_fraction"]),
                                float(a["fork_time"]))
    total = sum(m.hash_rate for m in miners)
    if attacker is not None:
        total += attacker.total_rate
    if "target" in obj:
        target = target_from_raw(int(obj["target"], 16), chain_kind)
    else:
        target = target_for_block_interval(total, interval, chain_kind)
    return SimConfig(
        miners=miners,
        target=target,
        block_interval_seconds=interval,
        duration_seconds=float(obj["duration_seconds"]),
        seed=seed,
        report_sigma=obj.get("report_sigma"),
        attacker=attacker,
        chain_kind=chain_kind,
        propagation_window_seconds=obj.get("propagation_window_seconds"),
    )


@main.command("simulate")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--quiet", is_flag=True)
@_domain_errors
def simulate_cmd(config_path, seed, out_dir, quiet):
    """Generate a synthetic trace (headers, reports, ground truth)."""
    with open(config_path) as fh:
        obj = json.load(fh)
    config = _config_from_json(obj, seed)
    trace = simulate(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_headers(trace.headers, out / "headers.jsonl")
    write_reports(trace.reports, out / "reports.jsonl")
    write_ground_truth(trace.ground_truth, out / "ground_truth.json")
    _write_manifest(out, "simulate",
                    {"seed": seed, "target": f"{config.target.t:064x}",
                     "duration_seconds": config.duration_seconds},
                    {"config": config_path})
    if not quiet:
        n_blocks = sum(1 for h in trace.headers if not h.is_ommer) - 1
        click.echo(f"wrote {n_blocks} blocks, "
                   f"{len(trace.headers) - 1 - n_blocks} ommers, "
                   f"{len(trace.reports)} reports to {out}")


# -- estimate ----------------------------------------------------------------

@main.group("estimate")
def estimate_group():
    """Hash-rate estimation from reports and/or headers."""


def _estimate_rows(estimates: dict) -> list[dict]:
    rows = []
    for label, est in estimates.items():
        rows.append({
            "miner": label,
            "method": est.method,
            "sample_size": est.sample_size,
            "sigma": est.sigma,
            "theta_point": est.theta_point,
            "theta_low": est.theta_low,
            "theta_high": est.theta_high,
            "rate_point": est.rate_point,
            "rate_low": est.rate_low,
            "rate_high": est.rate_high,
            "beta_point": est.beta_point,
        })
    return rows


def _emit_rows(rows, fmt, out, plot, subcommand, params, inputs):
    out_path = Path(out)
    export_results(rows, fmt, out_path)
    _write_manifest(out_path, subcommand, params, inputs)
    if plot:
        plots.plot_rate_estimates(rows, out_path.with_suffix(".png"))


@estimate_group.command("status-reports")
@click.option("--reports", "reports_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sigma", type=float, required=True,
              help="Report interval length in seconds.")
@click.option("--epsilon", type=float, default=None,
              help="Chernoff threshold; bounds omitted when unset.")
@click.option("--miner", "miners", multiple=True,
              help="Restrict to these miner labels (repeatable).")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.option("--verify-chain/--no-verify-chain", default=False,
              help="Verify chained nonces per miner before estimating.")
@_domain_errors
def estimate_status_cmd(reports_path, sigma, epsilon, miners, fmt, out, plot,
                        verify_chain):
    """Per-miner hash rates from status reports, plus a network sum row."""
    reports = read_reports(reports_path)
    by_miner = {}
    for r in reports:
        if miners and r.miner not in miners:
            continue
        by_miner.setdefault(r.miner, []).append(r)
    if not by_miner:
        raise click.ClickException("no reports matched the miner filter")
    estimates = {}
    for label, reps in sorted(by_miner.items()):
        if verify_chain:
            verdict = verify_report_chain(reps)
            if not verdict.ok:
                raise click.ClickException(
                    f"report chain for {label} fails at index "
                    f"{verdict.first_mismatch_index}")
        if epsilon is not None:
            estimates[label] = bounded_estimate(reps, sigma, epsilon)
        else:
            estimates[label] = estimate_miner_rate(reps, sigma)
    rows = _estimate_rows(estimates)
    total = {
        "miner": "<network>", "method": "status-reports",
        "sample_size": sum(r["sample_size"] for r in rows),
        "sigma": sigma,
        "theta_point": sum(r["theta_point"] for r in rows),
        "theta_low": (sum(r["theta_low"] for r in rows)
                      if epsilon is not None else None),
        "theta_high": (sum(r["theta_high"] for r in rows)
                       if epsilon is not None else None),
        "rate_point": sum(r["rate_point"] for r in rows),
        "rate_low": (sum(r["rate_low"] for r in rows)
                     if epsilon is not None else None),
        "rate_high": (sum(r["rate_high"] for r in rows)
                      if epsilon is not None else None),
        "beta_point": HASH_SPACE / sum(r["theta_point"] for r in rows),
    }
    rows.append(total)
    _emit_rows(rows, fmt, out, plot, "estimate status-reports",
               {"sigma": sigma, "epsilon": epsilon, "miners": list(miners)},
               {"reports": reports_path})


def _resolve_window(dataset, window_start, window_end, window_blocks, at):
    if window_blocks is not None:
        if at is None:
            raise click.UsageError("--window-blocks requires --at BLOCK_ID")
        return window_ending_at(dataset.headers, at, window_blocks)
    if window_start is None or window_end is None:
        raise click.UsageError(
            "provide --window-start/--window-end or --window-blocks/--at")
    return (window_start, window_end)


@estimate_group.command("mom")
@click.option("--headers", "headers_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--window-start", type=float, default=None)
@click.option("--window-end", type=float, default=None)
@click.option("--window-blocks", type=int, default=None)
@click.option("--at", "at_block", default=None)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--miners", default=None,
              help="Comma-separated labels for a subset estimate.")
@click.option("--bootstrap", "resamples", type=int, default=None,
              help="Bootstrap resample count; bounds omitted when unset.")
@click.option("--percentiles", default="5,95", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--plot/--no-plot", default=True, show_default=True)
@_domain_errors
def estimate_mom_cmd(headers_path, window_start, window_end, window_blocks,
                     at_block, sigma, miners, resamples, percentiles, seed,
                     fmt, out, plot):
    """Blockchain-only network (or miner-subset) hash-rate estimate."""
    dataset = read_headers(headers_path)
    window = _resolve_window(dataset, window_start, window_end,
                             window_blocks, at_block)
    config = MomSolveConfig()
    if miners:
        labels = {m.strip() for m in miners.split(",")}
        est = estimate_subset_rate(dataset.headers, labels, window, sigma,
                                   config)
        label = ",".join(sorted(labels))
    elif resamples is not None:
        low, high = (float(x) for x in percentiles.split(","))
        boot = BootstrapConfig(resamples=resamples, low_percentile=low,
                               high_percentile=high, seed=seed)
        est = bounded_network_estimate(dataset.headers, window, sigma,
                                       config, boot)
        label = "<network>"
    else:
        est = estimate_network_rate(dataset.headers, window, sigma, config)
        label = "<network>"
    rows = _estimate_rows({label: est})
    _emit_rows(rows, fmt, out, plot, "estimate mom",
               {"window": list(window), "sigma": sigma,
                "bootstrap": resamples, "percentiles": percentiles,
                "seed": seed, "miners": miners},
               {"headers": headers_path})


@estimate_group.command("combined")
@click.option("--headers", "headers_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--reports", "reports_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--window-start", type=float, default=None)
@click.option("--window-end", type=float, default=None)
@click.option("--window-blocks", type=int, default=None)
@click.option("--at", "at_block", default=None)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--bootstrap", "resamples", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--plot/--no-plot", default=True, show_default=True)
@_domain_errors
def estimate_combined_cmd(headers_path, reports_path, window_start,
                          window_end, window_blocks, at_block, sigma, epsilon,
                          resamples, seed, fmt, out, plot):
    """Status-report rates for reporting miners plus subset MoM for the rest."""
    dataset = read_headers(headers_path)
    reports = read_reports(reports_path)
    window = _resolve_window(dataset, window_start, window_end,
                             window_blocks, at_block)
    boot = (BootstrapConfig(resamples=resamples, seed=seed)
            if resamples is not None else None)
    est = combined_estimate(dataset.headers, reports, window, sigma,
                            epsilon=epsilon, boot_config=boot)
    rows = _estimate_rows({"<network>": est})
    _emit_rows(rows, fmt, out, plot, "estimate combined",
               {"window": list(window), "sigma": sigma, "epsilon": epsilon,
                "bootstrap": resamples, "seed": seed},
               {"headers": headers_path, "reports": reports_path})


# -- bounds ------------------------------------------------------------------

@main.command("bounds")
@click.option("--method", type=click.Choice(["chernoff", "bootstrap"]),
              required=True)
@click.option("--reports", "reports_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--headers", "headers_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--epsilon", type=float, default=0.05, show_default=True)
@click.option("--window-start", type=float, default=None)
@click.option("--window-end", type=float, default=None)
@click.option("--window-blocks", type=int, default=None)
@click.option("--at", "at_block", default=None)
@click.option("--bootstrap", "resamples", type=int, default=10000,
              show_default=True)
@click.option("--percentiles", default="5,95", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--plot/--no-plot", default=True, show_default=True)
@_domain_errors
def bounds_cmd(method, reports_path, headers_path, sigma, epsilon,
               window_start, window_end, window_blocks, at_block, resamples,
               percentiles, seed, fmt, out, plot):
    """Bounded estimates: Chernoff (status reports) or bootstrap (MoM)."""
    if method == "chernoff":
        if reports_path is None:
            raise click.UsageError("--method chernoff requires --reports")
        reports = read_reports(reports_path)
        by_miner = {}
        for r in reports:
            by_miner.setdefault(r.miner, []).append(r)
        estimates = {label: bounded_estimate(reps, sigma, epsilon)
                     for label, reps in sorted(by_miner.items())}
        rows = _estimate_rows(estimates)
        inputs = {"reports": reports_path}
    else:
        if headers_path is None:
            raise click.UsageError("--method bootstrap requires --headers")
        dataset = read_headers(headers_path)
        window = _resolve_window(dataset, window_start, window_end,
                                 window_blocks, at_block)
        low, high = (float(x) for x in percentiles.split(","))
        boot = BootstrapConfig(resamples=resamples, low_percentile=low,
                               high_percentile=high, seed=seed)
        est = bounded_network_estimate(dataset.headers, window, sigma,
                                       MomSolveConfig(), boot)
        rows = _estimate_rows({"<network>": est})
        inputs = {"headers": headers_path}
    _emit_rows(rows, fmt, out, plot, "bounds",
               {"method": method, "sigma": sigma, "epsilon": epsilon,
                "bootstrap": resamples, "percentiles": percentiles,
                "seed": seed},
               inputs)


# -- risk --------------------------------------------------------------------

def _risk_params(pre_window, threshold, qstar, mode, method, epsilon,
                 resamples, seed, sigma, max_depth) -> RiskParams:
    boot = (BootstrapConfig(resamples=resamples, seed=seed)
            if resamples is not None else None)
    return RiskParams(q_star=qstar, threshold=threshold,
                      pre_window_blocks=pre_window, sigma=sigma,
                      bound_mode=mode, method=method, epsilon=epsilon,
                      bootstrap=boot, max_depth=max_depth)


@main.command("risk")
@click.option("--headers", "headers_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--reports", "reports_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--block", "block_id", required=True)
@click.option("--pre-window", type=int, default=100, show_default=True)
@click.option("--threshold", type=float, default=0.001, show_default=True)
@click.option("--qstar", type=float, default=0.127, show_default=True)
@click.option("--mode", type=click.Choice(["point", "worst", "best"]),
              default="point", show_default=True)
@click.option("--method",
              type=click.Choice(["mom", "status-reports", "combined"]),
              default=None, help="Defaults to status-reports when reports "
              "are given, otherwise mom.")
@click.option("--epsilon", type=float, default=0.05, show_default=True)
@click.option("--bootstrap", "resamples", type=int, default=None)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--max-depth", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--plot/--no-plot", default=True, show_default=True)
@_domain_errors
def risk_cmd(headers_path, reports_path, block_id, pre_window, threshold,
             qstar, mode, method, epsilon, resamples, sigma, max_depth, seed,
             fmt, out, plot):
    """Per-depth double-spend risk assessment for one block."""
    dataset = read_headers(headers_path)
    reports = read_reports(reports_path) if reports_path else None
    if method is None:
        method = "status-reports" if reports else "mom"
    if method == "mom" and mode != "point" and resamples is None:
        resamples = 10000
    params = _risk_params(pre_window, threshold, qstar, mode, method, epsilon,
                          resamples, seed, sigma, max_depth)
    analyzer = RiskAnalyzer(dataset.headers, reports, params)
    assessments = analyzer.assess(block_id)
    out_path = Path(out)
    export_results(assessments, fmt, out_path)
    _write_manifest(out_path, "risk",
                    {"block": block_id, "pre_window": pre_window,
                     "threshold": threshold, "qstar": qstar, "mode": mode,
                     "method": method, "epsilon": epsilon,
                     "bootstrap": resamples, "sigma": sigma, "seed": seed},
                    {k: v for k, v in
                     [("headers", headers_path), ("reports", reports_path)]
                     if v})
    if plot:
        plots.plot_risk_curve(assessments, out_path.with_suffix(".png"),
                              threshold)


@main.command("depth-analysis")
@click.option("--headers", "headers_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--reports", "reports_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sample", "sample_size", type=int, default=300,
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--pre-window", type=int, default=100, show_default=True)
@click.option("--threshold", type=float, default=0.001, show_default=True)
@click.option("--qstar", type=float, default=0.127, show_default=True)
@click.option("--mode", type=click.Choice(["point", "worst", "best"]),
              default="point", show_default=True)
@click.option("--method",
              type=click.Choice(["mom", "status-reports", "combined"]),
              default=None)
@click.option("--epsilon", type=float, default=0.05, show_default=True)
@click.option("--bootstrap", "resamples", type=int, default=None)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--max-depth", type=int, default=50, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--plot/--no-plot", default=True, show_default=True)
@_domain_errors
def depth_analysis_cmd(headers_path, reports_path, sample_size, seed,
                       pre_window, threshold, qstar, mode, method, epsilon,
                       resamples, sigma, max_depth, fmt, out, plot):
    """Release-depth distribution over a random sample of blocks."""
    import numpy as np

    dataset = read_headers(headers_path)
    reports = read_reports(reports_path) if reports_path else None
    if method is None:
        method = "status-reports" if reports else "mom"
    if method == "mom" and mode != "point" and resamples is None:
        resamples = 10000
    params = _risk_params(pre_window, threshold, qstar, mode, method, epsilon,
                          resamples, seed, sigma, max_depth)
    analyzer = RiskAnalyzer(dataset.headers, reports, params)
    eligible = [h.id for i, h in enumerate(analyzer.main)
                if i > pre_window and i + max_depth < len(analyzer.main)]
    if not eligible:
        raise click.ClickException(
            "no blocks with a full pre-window and room to grow")
    rng = np.random.default_rng(seed)
    k = min(sample_size, len(eligible))
    chosen = [eligible[i] for i in
              sorted(rng.choice(len(eligible), size=k, replace=False))]
    results = []
    for block_id in chosen:
        depth, censored = analyzer.release_depth(block_id)
        results.append({"block_id": block_id, "depth": depth,
                        "censored": censored})
    out_path = Path(out)
    export_results(results, fmt, out_path)
    from .risk import DepthResult
    cdf = depth_cdf([DepthResult(**r) for r in results])
    cdf_path = out_path.with_name(out_path.stem + "_cdf" + out_path.suffix)
    export_results([{"depth": z, "fraction": f} for z, f in cdf], fmt,
                   cdf_path, columns=["depth", "fraction"])
    _write_manifest(out_path, "depth-analysis",
                    {"sample": sample_size, "seed": seed,
                     "pre_window": pre_window, "threshold": threshold,
                     "qstar": qstar, "mode": mode, "method": method,
                     "epsilon": epsilon, "bootstrap": resamples,
                     "sigma": sigma, "max_depth": max_depth},
                    {k: v for k, v in
                     [("headers", headers_path), ("reports", reports_path)]
                     if v})
    if plot:
        plots.plot_depth_cdf(cdf, out_path.with_suffix(".png"), threshold)


if __name__ == "__main__":
    sys.exit(main())
