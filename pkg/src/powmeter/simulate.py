"""Synthetic chain generation with known ground-truth hash rates.

Block arrivals follow a Poisson process at the network hash rate; report
minima are drawn as exact first-order statistics via inverse transform, so
the cost is independent of the number of hashes simulated.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .chain import (
    BITCOIN_STYLE,
    HASH_SPACE,
    BlockHeader,
    ChainKind,
    StatusReport,
    Target,
    chain_nonce,
    chain_seed,
    target_from_raw,
)

GENESIS_PARENT = "0" * 64


@dataclass(frozen=True)
class MinerSpec:
    label: str
    hash_rate: float
    reports_per_block: float = 0.0

    def __post_init__(self):
        if self.hash_rate <= 0:
            raise ValueError("hash_rate must be positive")
        if self.reports_per_block < 0:
            raise ValueError("reports_per_block must be non-negative")


@dataclass(frozen=True)
class AttackerSpec:
    label: str
    total_rate: float
    divert_fraction: float
    fork_time: float

    def __post_init__(self):
        if not 0.0 <= self.divert_fraction <= 1.0:
            raise ValueError("divert_fraction must be in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    miners: tuple[MinerSpec, ...]
    target: Target
    block_interval_seconds: float
    duration_seconds: float
    seed: int
    report_sigma: Optional[float] = None
    attacker: Optional[AttackerSpec] = None
    chain_kind: ChainKind = BITCOIN_STYLE
    propagation_window_seconds: Optional[float] = None

    def __post_init__(self):
        if not self.miners:
            raise ValueError("at least one miner is required")
        total = sum(m.hash_rate for m in self.miners)
        if self.attacker is not None:
            if any(m.label == self.attacker.label for m in self.miners):
                raise ValueError("attacker label collides with an honest miner")
            total += self.attacker.total_rate
        expected = HASH_SPACE / (self.target.t * total)
        if abs(expected - self.block_interval_seconds) > 0.01 * self.block_interval_seconds:
            raise ValueError(
                "target inconsistent with block interval: expected time-to-block "
                f"{expected:.1f}s vs configured {self.block_interval_seconds:.1f}s"
            )

    @property
    def propagation_window(self) -> float:
        if self.propagation_window_seconds is not None:
            return self.propagation_window_seconds
        return self.chain_kind.propagation_window_seconds


def target_for_block_interval(total_rate: float, block_interval_seconds: float,
                              chain_kind: ChainKind = BITCOIN_STYLE) -> Target:
    """Target whose expected time-to-block matches the interval at a total rate."""
    t = round(HASH_SPACE / (total_rate * block_interval_seconds))
    return target_from_raw(t, chain_kind)


@dataclass(frozen=True)
class GroundTruthSegment:
    start: float
    end: float
    rates: dict
    total_rate: float


@dataclass(frozen=True)
class SyntheticTrace:
    headers: tuple[BlockHeader, ...]
    reports: tuple[StatusReport, ...]
    ground_truth: tuple[GroundTruthSegment, ...]
    config: SimConfig

    @property
    def main_chain(self) -> list[BlockHeader]:
        return [h for h in self.headers if not h.is_ommer]


def _block_id(seed: int, counter: int) -> str:
    return hashlib.sha256(f"blk-{seed}-{counter}".encode()).hexdigest()


def _draw_pow_hash(rng: np.random.Generator, t: int) -> int:
    # A winning hash is uniform on [0, t]; 53-bit granularity is ample for
    # estimation arithmetic, which runs in normalized doubles anyway.
    return min(int(rng.random() * (t + 1)), t)


def draw_interval_minimum(rng: np.random.Generator, theta: int,
                          above_target: Optional[int] = None) -> int:
    """Minimum of theta uniform draws on [0, S] via inverse transform.

    With ``above_target`` set, the draw is conditioned on exceeding the
    target (a smaller minimum would have been broadcast as a block).
    """
    if theta < 1:
        raise ValueError("interval too short for miner rate")
    # Survival U' = (1 - V/S)^theta is uniform on (0, 1); conditioning on
    # V > t restricts U' below (1 - t/S)^theta.
    u = rng.random()
    if above_target is not None:
        cap = math.exp(theta * math.log1p(-above_target / HASH_SPACE))
        u = u * cap
    v = HASH_SPACE * -math.expm1(math.log(max(u, 1e-300)) / theta)
    v_int = int(v)
    if above_target is not None and v_int <= above_target:
        v_int = above_target + 1
    return min(v_int, HASH_SPACE)


def emit_report(miner: MinerSpec, interval_index: int, sigma: float,
                prev_chained: bytes, prior_block_id: str,
                rng: np.random.Generator,
                above_target: Optional[int] = None) -> StatusReport:
    """Draw one status report for an interval of sigma seconds."""
    theta = round(miner.hash_rate * sigma)
    if theta < 1:
        raise ValueError("interval too short for miner rate")
    min_hash = draw_interval_minimum(rng, theta, above_target=above_target)
    report_nonce = int.from_bytes(rng.bytes(32), "big")
    chained = chain_nonce(prev_chained, report_nonce)
    return StatusReport(
        miner=miner.label,
        interval_index=interval_index,
        interval_seconds=sigma,
        min_hash=min_hash,
        report_nonce=report_nonce,
        chained_nonce=chained,
        prior_block_id=prior_block_id,
    )


def _segments(config: SimConfig) -> list[GroundTruthSegment]:
    rates = {m.label: m.hash_rate for m in config.miners}
    atk = config.attacker
    if atk is None:
        return [GroundTruthSegment(0.0, config.duration_seconds, rates,
                                   sum(rates.values()))]
    pre = dict(rates)
    pre[atk.label] = atk.total_rate
    if atk.divert_fraction == 0.0 or atk.fork_time >= config.duration_seconds:
        return [GroundTruthSegment(0.0, config.duration_seconds, pre,
                                   sum(pre.values()))]
    if atk.fork_time < 0:
        raise ValueError("fork_time outside trace duration")
    post = dict(rates)
    post[atk.label] = atk.total_rate * (1.0 - atk.divert_fraction)
    if post[atk.label] == 0.0:
        del post[atk.label]
    return [
        GroundTruthSegment(0.0, atk.fork_time, pre, sum(pre.values())),
        GroundTruthSegment(atk.fork_time, config.duration_seconds, post,
                           sum(post.values())),
    ]


class _ReportClock:
    """Per-miner report emission aligned to the current chain tip."""

    def __init__(self, config: SimConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.tip_id = ""
        self.tip_time = 0.0
        self.next_index: dict[str, int] = {}
        self.chained: dict[str, bytes] = {}

    def sigma_for(self, miner: MinerSpec) -> Optional[float]:
        if miner.reports_per_block <= 0:
            return None
        if self.config.report_sigma is not None:
            return self.config.report_sigma
        # Partial intervals are discarded when the counter resets at a new
        # tip, so with exponential gaps of mean b the realized rate is
        # 1/(e^{sigma/b} - 1) reports per block. Inverting that keeps
        # reports_per_block an average over the emitted trace.
        return self.config.block_interval_seconds * math.log(
            1.0 + 1.0 / miner.reports_per_block)

    def reset(self, tip_id: str, tip_time: float):
        self.tip_id = tip_id
        self.tip_time = tip_time
        self.next_index.clear()
        self.chained.clear()

    def emit_until(self, end_time: float, segment_rates: dict,
                   out: list[StatusReport]):
        for m in self.config.miners:
            sigma = self.sigma_for(m)
            if sigma is None or m.label not in segment_rates:
                continue
            spec = MinerSpec(m.label, segment_rates[m.label], m.reports_per_block)
            idx = self.next_index.get(m.label, 0)
            prev = self.chained.get(m.label, chain_seed(self.tip_id))
            while self.tip_time + (idx + 1) * sigma <= end_time:
                rep = emit_report(spec, idx, sigma, prev, self.tip_id,
                                  self.rng)
                out.append(rep)
                prev = rep.chained_nonce.to_bytes(32, "big")
                idx += 1
            self.next_index[m.label] = idx
            self.chained[m.label] = prev


def simulate(config: SimConfig) -> SyntheticTrace:
    """Generate a synthetic trace: main-chain blocks, ommers, and reports.

    Deterministic for a fixed (config, seed). Report clocks are per miner and
    reset at each new chain tip.
    """
    rng = np.random.default_rng(config.seed)
    t = config.target.t
    t_u = t / HASH_SPACE
    segments = _segments(config)
    prop_window = config.propagation_window

    headers: list[BlockHeader] = []
    reports: list[StatusReport] = []
    counter = 0

    genesis_id = _block_id(config.seed, counter)
    counter += 1
    headers.append(BlockHeader(id=genesis_id, parent_id=GENESIS_PARENT,
                               timestamp=0, pow_hash=0, target=config.target,
                               miner="genesis"))

    clock = _ReportClock(config, rng)
    clock.reset(genesis_id, 0.0)
    tip_id = genesis_id
    tip_ts = 0
    blocks_emitted = 0
    now = 0.0

    for seg in segments:
        now = max(now, seg.start)
        labels = list(seg.rates.keys())
        rates = np.array([seg.rates[l] for l in labels])
        total = rates.sum()
        weights = rates / total
        block_rate = total * t_u  # blocks per second
        while True:
            arrival = now + rng.exponential(1.0 / block_rate)
            if arrival >= seg.end:
                clock.emit_until(seg.end, seg.rates, reports)
                now = seg.end
                break
            clock.emit_until(arrival, seg.rates, reports)
            proposer = labels[int(rng.choice(len(labels), p=weights))]
            ts = max(int(arrival), tip_ts + 1)
            block_id = _block_id(config.seed, counter)
            counter += 1
            headers.append(BlockHeader(
                id=block_id, parent_id=tip_id, timestamp=ts,
                pow_hash=_draw_pow_hash(rng, t), target=config.target,
                miner=proposer))
            blocks_emitted += 1
            # a competing block within the propagation window becomes an ommer
            if rng.random() < prop_window * block_rate:
                ommer_miner = labels[int(rng.choice(len(labels), p=weights))]
                ommer_id = _block_id(config.seed, counter)
                counter += 1
                headers.append(BlockHeader(
                    id=ommer_id, parent_id=tip_id, timestamp=ts,
                    pow_hash=_draw_pow_hash(rng, t), target=config.target,
                    miner=ommer_miner, is_ommer=True))
            tip_id = block_id
            tip_ts = ts
            now = arrival
            clock.reset(tip_id, arrival)

    if blocks_emitted == 0:
        raise ValueError("empty trace: duration too short to produce a block")

    return SyntheticTrace(headers=tuple(headers), reports=tuple(reports),
                          ground_truth=tuple(segments), config=config)


def inject_attacker(trace: SyntheticTrace, attacker: AttackerSpec) -> SyntheticTrace:
    """Re-run the trace's scenario with an attacker diverting power post-fork."""
    if any(m.label == attacker.label for m in trace.config.miners):
        raise ValueError("attacker label collides with an honest miner")
    if attacker.fork_time > trace.config.duration_seconds:
        raise ValueError("fork_time outside trace duration")
    cfg = replace(trace.config, attacker=attacker)
    return simulate(cfg)
