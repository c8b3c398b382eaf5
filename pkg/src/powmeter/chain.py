"""Shared data model: hash values, targets, headers, status reports, grids.

All estimation arithmetic happens on unit-normalized hashes (``u = v / S``)
in double precision; 256-bit integers appear only at I/O and validation
boundaries.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

# Size of the hash space: hashes are uniform on [0, S].
HASH_SPACE = 2**256 - 1

# Difficulty convention shared by both chain kinds: D = 2^224 / t.
DIFFICULTY_NUMERATOR = 2**224


@dataclass(frozen=True)
class ChainKind:
    name: str
    block_interval_seconds: float
    propagation_window_seconds: float


BITCOIN_STYLE = ChainKind("bitcoin-style", 600.0, 1.0)
ETHEREUM_STYLE = ChainKind("ethereum-style", 15.0, 10.0)

CHAIN_KINDS = {k.name: k for k in (BITCOIN_STYLE, ETHEREUM_STYLE)}


def normalize_hash(v: int) -> float:
    """Map a hash value in [0, S] to the unit interval."""
    if not 0 <= v <= HASH_SPACE:
        raise ValueError(f"hash value out of range [0, 2^256-1]: {v}")
    return v / HASH_SPACE


def hash_fraction(v: int) -> Fraction:
    """Exact rational form of a normalized hash; oracle for normalize_hash."""
    if not 0 <= v <= HASH_SPACE:
        raise ValueError(f"hash value out of range [0, 2^256-1]: {v}")
    return Fraction(v, HASH_SPACE)


def denormalize_fraction(u: Fraction) -> int:
    """Invert hash_fraction by scaling back to the integer hash space."""
    return round(u * HASH_SPACE)


@dataclass(frozen=True)
class Target:
    """POW target and its difficulty rescaling (D = 2^224 / t)."""

    t: int
    difficulty: float
    chain_kind: ChainKind = BITCOIN_STYLE

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("target must be strictly positive")
        if self.t > HASH_SPACE:
            raise ValueError("target exceeds hash space")

    @property
    def normalized(self) -> float:
        return normalize_hash(self.t)


def target_from_difficulty(difficulty: float, chain_kind: ChainKind = BITCOIN_STYLE) -> Target:
    """Build a Target from a difficulty via t = floor(2^224 / D)."""
    if difficulty <= 0:
        raise ValueError("difficulty must be positive")
    if difficulty == int(difficulty):
        t = DIFFICULTY_NUMERATOR // int(difficulty)
    else:
        t = int(DIFFICULTY_NUMERATOR / difficulty)
    if t == 0:
        raise ValueError("difficulty exceeds hash space")
    return Target(t=t, difficulty=difficulty, chain_kind=chain_kind)


def difficulty_from_target(t: int) -> float:
    if t <= 0:
        raise ValueError("target must be strictly positive")
    return DIFFICULTY_NUMERATOR / t


def target_from_raw(t: int, chain_kind: ChainKind = BITCOIN_STYLE) -> Target:
    return Target(t=t, difficulty=difficulty_from_target(t), chain_kind=chain_kind)


@dataclass(frozen=True)
class BlockHeader:
    """One observed block or ommer."""

    id: str
    parent_id: str
    timestamp: int
    pow_hash: int
    target: Target
    miner: str
    is_ommer: bool = False


def validate_header(header: BlockHeader) -> list[str]:
    """Check field well-formedness; returns a list of violations (empty = ok)."""
    violations = []
    if not 0 <= header.pow_hash <= HASH_SPACE:
        violations.append("POW hash out of range")
    elif header.pow_hash > header.target.t:
        violations.append("POW does not meet target")
    if header.target.t <= 0:
        violations.append("target must be positive")
    if not header.id:
        violations.append("missing id")
    if header.timestamp < 0:
        violations.append("negative timestamp")
    if not header.miner:
        violations.append("missing miner label")
    return violations


@dataclass(frozen=True)
class StatusReport:
    """A miner's per-interval minimum-hash announcement with chained nonce."""

    miner: str
    interval_index: int
    interval_seconds: float
    min_hash: int
    report_nonce: int
    chained_nonce: int
    prior_block_id: str


def _to_bytes32(value: int) -> bytes:
    return value.to_bytes(32, "big")


def chain_nonce(prev_chained: bytes, report_nonce: int) -> int:
    """One chaining step: H(prev_chained || report_nonce) over 32-byte values."""
    digest = hashlib.sha256(prev_chained + _to_bytes32(report_nonce)).digest()
    return int.from_bytes(digest, "big")


def chain_seed(prior_block_id: str) -> bytes:
    """Seed for report 0 of a chain: the prior block's hash identifier."""
    raw = bytes.fromhex(prior_block_id)
    if len(raw) != 32:
        raise ValueError("prior block id must be 32 bytes of hex")
    return raw


@dataclass(frozen=True)
class IntervalGrid:
    """Sigma-second segmentation of a time window with observed minima."""

    start: float
    end: float
    sigma: float
    interval_count: int
    observations: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.end <= self.start:
            raise ValueError("window must be non-empty")
        for idx, _ in self.observations:
            if idx >= self.interval_count:
                raise ValueError("observation outside interval grid")

    @property
    def y_bar(self) -> float:
        """Sample mean of censored observations over all intervals (normalized)."""
        return sum(normalize_hash(v) for _, v in self.observations) / self.interval_count

    @property
    def normalized_observations(self) -> list[float]:
        return [normalize_hash(v) for _, v in self.observations]


@dataclass
class HashRateEstimate:
    """Point estimate plus bounded hash counts and method metadata.

    theta_* are hashes per sigma-second interval; rate_* are hashes per second.
    beta_point is the survival parameter on the hash-value scale (beta * theta = S).
    """

    theta_point: float
    rate_point: float
    beta_point: float
    method: str
    sample_size: int
    sigma: float
    theta_low: Optional[float] = None
    theta_high: Optional[float] = None
    rate_low: Optional[float] = None
    rate_high: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.theta_point <= 0:
            raise ValueError("theta_point must be positive")
        if self.theta_low is not None and self.theta_high is not None:
            if not (self.theta_low <= self.theta_point <= self.theta_high):
                raise ValueError("theta bounds must bracket the point estimate")

    @property
    def has_bounds(self) -> bool:
        return self.theta_low is not None and self.theta_high is not None
