import pathlib

import pytest

from powmeter.chain import BITCOIN_STYLE
from powmeter.simulate import MinerSpec, SimConfig, simulate, target_for_block_interval

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def small_trace():
    """Two-miner bitcoin-style trace with reports, reused across tests."""
    miners = (
        MinerSpec("alice", 6.0e6, reports_per_block=10.0),
        MinerSpec("bob", 1.2e6),
    )
    total = sum(m.hash_rate for m in miners)
    config = SimConfig(
        miners=miners,
        target=target_for_block_interval(total, 600.0, BITCOIN_STYLE),
        block_interval_seconds=600.0,
        duration_seconds=600.0 * 160,
        seed=9,
        chain_kind=BITCOIN_STYLE,
    )
    return simulate(config)
