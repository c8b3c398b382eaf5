import hashlib
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powmeter.chain import (
    BITCOIN_STYLE,
    DIFFICULTY_NUMERATOR,
    ETHEREUM_STYLE,
    HASH_SPACE,
    BlockHeader,
    IntervalGrid,
    Target,
    chain_nonce,
    chain_seed,
    denormalize_fraction,
    difficulty_from_target,
    hash_fraction,
    normalize_hash,
    target_from_difficulty,
    target_from_raw,
    validate_header,
)


def test_hash_space_constant():
    assert HASH_SPACE == 2**256 - 1
    assert DIFFICULTY_NUMERATOR == 2**224


def test_normalize_endpoints():
    assert normalize_hash(0) == 0.0
    assert normalize_hash(HASH_SPACE) == 1.0
    assert normalize_hash(HASH_SPACE // 2) == pytest.approx(0.5)


def test_normalize_out_of_range():
    with pytest.raises(ValueError, match="out of range"):
        normalize_hash(-1)
    with pytest.raises(ValueError, match="out of range"):
        normalize_hash(HASH_SPACE + 1)


@given(st.integers(min_value=0, max_value=HASH_SPACE))
@settings(max_examples=200)
def test_normalize_matches_exact_fraction(v):
    # double-precision value must be the nearest float to the exact ratio
    exact = hash_fraction(v)
    assert normalize_hash(v) == pytest.approx(float(exact), rel=1e-15)
    assert denormalize_fraction(exact) == v


def test_difficulty_round_trip():
    t = target_from_difficulty(1.0)
    assert t.t == DIFFICULTY_NUMERATOR
    assert difficulty_from_target(t.t) == 1.0
    # doubling difficulty halves the target
    t2 = target_from_difficulty(2.0)
    assert t2.t == DIFFICULTY_NUMERATOR // 2


def test_difficulty_validation():
    with pytest.raises(ValueError, match="positive"):
        target_from_difficulty(0)
    with pytest.raises(ValueError, match="exceeds hash space"):
        target_from_difficulty(float(2**226))


def test_target_validation():
    with pytest.raises(ValueError, match="strictly positive"):
        Target(t=0, difficulty=1.0)
    with pytest.raises(ValueError, match="exceeds hash space"):
        Target(t=HASH_SPACE + 1, difficulty=1.0)


def test_chain_kind_defaults():
    assert BITCOIN_STYLE.block_interval_seconds == 600.0
    assert ETHEREUM_STYLE.block_interval_seconds == 15.0


def _header(**kwargs):
    base = dict(
        id="ab" * 32,
        parent_id="cd" * 32,
        timestamp=100,
        pow_hash=5,
        target=target_from_raw(1000),
        miner="m",
    )
    base.update(kwargs)
    return BlockHeader(**base)


def test_validate_header_ok():
    assert validate_header(_header()) == []


def test_validate_header_pow_exceeds_target():
    violations = validate_header(_header(pow_hash=1001))
    assert any("does not meet target" in v for v in violations)


def test_validate_header_missing_fields():
    violations = validate_header(_header(id="", miner="", timestamp=-1))
    assert len(violations) == 3


def test_chain_nonce_is_sha256():
    prev = b"\x01" * 32
    nonce = 7
    expected = int.from_bytes(
        hashlib.sha256(prev + nonce.to_bytes(32, "big")).digest(), "big")
    assert chain_nonce(prev, nonce) == expected


def test_chain_seed_requires_hex64():
    assert chain_seed("00" * 32) == b"\x00" * 32
    with pytest.raises(ValueError, match="32 bytes"):
        chain_seed("abcd")


def test_interval_grid_y_bar():
    grid = IntervalGrid(start=0.0, end=10.0, sigma=1.0, interval_count=10,
                        observations=((2, HASH_SPACE // 2), (7, HASH_SPACE // 4)))
    assert grid.y_bar == pytest.approx(0.075, rel=1e-12)
    assert grid.normalized_observations == pytest.approx([0.5, 0.25])


def test_interval_grid_rejects_out_of_range_observation():
    with pytest.raises(ValueError, match="outside interval grid"):
        IntervalGrid(start=0.0, end=10.0, sigma=1.0, interval_count=10,
                     observations=((10, 5),))
