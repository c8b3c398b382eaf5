"""Regenerate the bundled fixtures under fixtures/.

Both fixtures are simulator outputs with known ground truth; run from the
repository root after installing the package.
"""
from pathlib import Path

from powmeter.chain import BITCOIN_STYLE, ETHEREUM_STYLE
from powmeter.io import write_ground_truth, write_headers, write_reports
from powmeter.simulate import MinerSpec, SimConfig, simulate, target_for_block_interval

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def bitcoin_fixture():
    rates = {"pool-a": 4.0e6, "pool-b": 2.4e6, "pool-c": 1.6e6}
    total = sum(rates.values())
    config = SimConfig(
        miners=tuple(MinerSpec(name, rate, reports_per_block=1.0)
                     for name, rate in rates.items()),
        target=target_for_block_interval(total, 600.0, BITCOIN_STYLE),
        block_interval_seconds=600.0,
        duration_seconds=600.0 * 320,
        seed=2024,
        chain_kind=BITCOIN_STYLE,
    )
    trace = simulate(config)
    write_headers(trace.headers, FIXTURES / "bitcoin_headers.jsonl")
    write_reports(trace.reports, FIXTURES / "bitcoin_reports.jsonl")
    write_ground_truth(trace.ground_truth, FIXTURES / "bitcoin_ground_truth.json")
    return trace


def ethereum_fixture():
    rates = {"pool-a": 1.5e8, "pool-b": 1.0e8, "pool-c": 0.5e8}
    total = sum(rates.values())
    config = SimConfig(
        miners=tuple(MinerSpec(name, rate) for name, rate in rates.items()),
        target=target_for_block_interval(total, 15.0, ETHEREUM_STYLE),
        block_interval_seconds=15.0,
        duration_seconds=15.0 * 3100,
        seed=2024,
        chain_kind=ETHEREUM_STYLE,
        propagation_window_seconds=2.5,  # ~16% ommer rate
    )
    trace = simulate(config)
    write_headers(trace.headers, FIXTURES / "ethereum_headers.jsonl")
    write_ground_truth(trace.ground_truth, FIXTURES / "ethereum_ground_truth.json")
    return trace


if __name__ == "__main__":
    FIXTURES.mkdir(exist_ok=True)
    btc = bitcoin_fixture()
    eth = ethereum_fixture()
    print(f"bitcoin: {len(btc.main_chain) - 1} blocks, {len(btc.reports)} reports")
    eth_ommers = len(eth.headers) - len(eth.main_chain)
    print(f"ethereum: {len(eth.main_chain) - 1} blocks, {eth_ommers} ommers")
