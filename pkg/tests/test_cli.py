import json

import pytest
from click.testing import CliRunner

from powmeter.cli import main
from powmeter.io import write_headers, write_reports


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def trace_files(small_trace, tmp_path_factory):
    root = tmp_path_factory.mktemp("trace")
    write_headers(small_trace.headers, root / "headers.jsonl")
    write_reports(small_trace.reports, root / "reports.jsonl")
    return root


@pytest.fixture(scope="module")
def sim_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "sim.json"
    path.write_text(json.dumps({
        "miners": [
            {"label": "alice", "hash_rate": 5.0e6, "reports_per_block": 4.0},
            {"label": "bob", "hash_rate": 2.0e6},
        ],
        "block_interval_seconds": 600.0,
        "duration_seconds": 600.0 * 60,
    }))
    return path


def test_simulate_writes_outputs_and_manifest(runner, sim_config, tmp_path):
    out = tmp_path / "sim"
    result = runner.invoke(main, ["simulate", "--config", str(sim_config),
                                  "--seed", "5", "--out", str(out)])
    assert result.exit_code == 0, result.output
    for name in ("headers.jsonl", "reports.jsonl", "ground_truth.json",
                 "manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tool"] == "powmeter"
    assert manifest["subcommand"] == "simulate"
    assert manifest["parameters"]["seed"] == 5
    assert "config" in manifest["input_digests"]


def test_simulate_deterministic_output(runner, sim_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        result = runner.invoke(main, ["simulate", "--config", str(sim_config),
                                      "--seed", "7", "--out", str(out)])
        assert result.exit_code == 0, result.output
    assert (a / "headers.jsonl").read_bytes() == (b / "headers.jsonl").read_bytes()
    assert (a / "reports.jsonl").read_bytes() == (b / "reports.jsonl").read_bytes()


def test_estimate_status_reports_json(runner, trace_files, tmp_path):
    out = tmp_path / "est.json"
    result = runner.invoke(main, [
        "estimate", "status-reports",
        "--reports", str(trace_files / "reports.jsonl"),
        "--sigma", "43.5", "--epsilon", "0.05",
        "--out", str(out), "--no-plot", "--verify-chain"])
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())
    labels = [r["miner"] for r in rows]
    assert labels[-1] == "<network>"
    network = rows[-1]
    assert network["rate_low"] < network["rate_point"] < network["rate_high"]
    assert (tmp_path / "est.json.manifest.json").exists()


def test_estimate_status_reports_csv_and_plot(runner, trace_files, tmp_path):
    out = tmp_path / "est.csv"
    result = runner.invoke(main, [
        "estimate", "status-reports",
        "--reports", str(trace_files / "reports.jsonl"),
        "--sigma", "43.5", "--format", "csv", "--out", str(out)])
    assert result.exit_code == 0, result.output
    header = out.read_text().splitlines()[0]
    assert header.startswith("miner,method,sample_size")
    png = tmp_path / "est.png"
    assert png.exists() and png.stat().st_size > 0


def test_estimate_mom_window_flags(runner, trace_files, tmp_path):
    out = tmp_path / "mom.json"
    result = runner.invoke(main, [
        "estimate", "mom", "--headers", str(trace_files / "headers.jsonl"),
        "--window-start", "12000", "--window-end", "90000",
        "--bootstrap", "500", "--seed", "1",
        "--out", str(out), "--no-plot"])
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())
    assert rows[0]["miner"] == "<network>"
    assert rows[0]["rate_low"] <= rows[0]["rate_point"] <= rows[0]["rate_high"]
    # rough magnitude: simulated network runs at 7.2e6 hashes per second
    assert 3e6 < rows[0]["rate_point"] < 1.5e7


def test_estimate_mom_block_window(runner, trace_files, tmp_path):
    # pick a block deep enough for a 30-block lookback
    lines = (trace_files / "headers.jsonl").read_text().strip().splitlines()
    block_id = json.loads(lines[60])["id"]
    out = tmp_path / "mom_at.json"
    result = runner.invoke(main, [
        "estimate", "mom", "--headers", str(trace_files / "headers.jsonl"),
        "--window-blocks", "30", "--at", block_id,
        "--out", str(out), "--no-plot"])
    assert result.exit_code == 0, result.output


def test_estimate_mom_requires_window(runner, trace_files, tmp_path):
    result = runner.invoke(main, [
        "estimate", "mom", "--headers", str(trace_files / "headers.jsonl"),
        "--out", str(tmp_path / "x.json"), "--no-plot"])
    assert result.exit_code == 2
    assert "window" in result.output


def test_estimate_combined(runner, trace_files, tmp_path):
    out = tmp_path / "combined.json"
    result = runner.invoke(main, [
        "estimate", "combined",
        "--headers", str(trace_files / "headers.jsonl"),
        "--reports", str(trace_files / "reports.jsonl"),
        "--window-start", "12000", "--window-end", "90000",
        "--out", str(out), "--no-plot"])
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())
    assert rows[0]["method"] == "combined"


def test_bounds_chernoff(runner, trace_files, tmp_path):
    out = tmp_path / "bounds.json"
    result = runner.invoke(main, [
        "bounds", "--method", "chernoff",
        "--reports", str(trace_files / "reports.jsonl"),
        "--sigma", "43.5", "--epsilon", "0.1",
        "--out", str(out), "--no-plot"])
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())
    for row in rows:
        assert row["theta_low"] < row["theta_point"] < row["theta_high"]


def test_bounds_bootstrap(runner, trace_files, tmp_path):
    out = tmp_path / "boot.json"
    result = runner.invoke(main, [
        "bounds", "--method", "bootstrap",
        "--headers", str(trace_files / "headers.jsonl"),
        "--window-start", "12000", "--window-end", "90000",
        "--bootstrap", "400", "--out", str(out), "--no-plot"])
    assert result.exit_code == 0, result.output


def test_bounds_usage_errors(runner, tmp_path):
    result = runner.invoke(main, ["bounds", "--method", "chernoff",
                                  "--out", str(tmp_path / "x.json")])
    assert result.exit_code == 2


def _some_block_id(trace_files, index=80):
    lines = (trace_files / "headers.jsonl").read_text().strip().splitlines()
    main_rows = [json.loads(l) for l in lines]
    return [r for r in main_rows if not r["ommer"]][index]["id"]


def test_risk_assessment_output(runner, trace_files, tmp_path):
    out = tmp_path / "risk.json"
    block = _some_block_id(trace_files)
    result = runner.invoke(main, [
        "risk", "--headers", str(trace_files / "headers.jsonl"),
        "--reports", str(trace_files / "reports.jsonl"),
        "--block", block, "--pre-window", "40", "--max-depth", "15",
        "--out", str(out)])
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())
    assert rows[0]["depth"] == 0
    assert rows[0]["probability_point"] == 1.0
    decisions = {r["decision"] for r in rows}
    assert decisions <= {"hold", "release"}
    assert (tmp_path / "risk.png").exists()
    manifest = json.loads((tmp_path / "risk.json.manifest.json").read_text())
    assert manifest["parameters"]["method"] == "status-reports"


def test_risk_unknown_block_is_domain_error(runner, trace_files, tmp_path):
    result = runner.invoke(main, [
        "risk", "--headers", str(trace_files / "headers.jsonl"),
        "--block", "ff" * 32, "--out", str(tmp_path / "x.json"), "--no-plot"])
    assert result.exit_code == 1
    assert "unknown block id" in result.output


def test_risk_missing_file_is_domain_error(runner, tmp_path):
    result = runner.invoke(main, [
        "risk", "--headers", str(tmp_path / "nope.jsonl"),
        "--block", "aa" * 32, "--out", str(tmp_path / "x.json")])
    assert result.exit_code == 2  # click validates the path itself


def test_depth_analysis(runner, trace_files, tmp_path):
    out = tmp_path / "depths.json"
    result = runner.invoke(main, [
        "depth-analysis", "--headers", str(trace_files / "headers.jsonl"),
        "--reports", str(trace_files / "reports.jsonl"),
        "--sample", "20", "--pre-window", "40", "--max-depth", "20",
        "--out", str(out)])
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())
    assert 0 < len(rows) <= 20
    cdf = json.loads((tmp_path / "depths_cdf.json").read_text())
    fracs = [r["fraction"] for r in cdf]
    assert all(b >= a for a, b in zip(fracs, fracs[1:]))
    assert (tmp_path / "depths.png").exists()


def test_version_flag(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "powmeter" in result.output
