"""Hash-rate estimation from miner status reports, with Chernoff tail bounds.

The minimum hash a miner reports for a sigma-second interval is (in the
large-hash-space limit) exponential with survival parameter beta = S / theta,
so the sample mean of reported minima estimates beta and its reciprocal the
per-interval hash count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .chain import (
    HASH_SPACE,
    HashRateEstimate,
    StatusReport,
    chain_nonce,
    chain_seed,
    normalize_hash,
)

PI_MIN = 1e-9
PI_MAX = 1e9


@dataclass(frozen=True)
class ChernoffQuery:
    n: int
    epsilon: float
    tail: str  # "upper" | "lower"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        if self.tail not in ("upper", "lower"):
            raise ValueError("tail must be 'upper' or 'lower'")


@dataclass(frozen=True)
class ChainVerdict:
    ok: bool
    first_mismatch_index: Optional[int] = None
    mismatched_indices: tuple[int, ...] = ()


def estimate_from_minima(minima: Sequence[float] | np.ndarray,
                         sigma: float) -> HashRateEstimate:
    """Point estimate from normalized interval minima (unit-interval values)."""
    arr = np.asarray(minima, dtype=float)
    if arr.size == 0:
        raise ValueError("no reports")
    if np.any(arr <= 0.0):
        raise ValueError("degenerate report: zero minimum hash")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    beta_u = float(arr.mean())
    theta = 1.0 / beta_u
    return HashRateEstimate(
        theta_point=theta,
        rate_point=theta / sigma,
        beta_point=beta_u * HASH_SPACE,
        method="status-reports",
        sample_size=int(arr.size),
        sigma=sigma,
    )


def estimate_miner_rate(reports: Sequence[StatusReport],
                        sigma: float) -> HashRateEstimate:
    """Point estimate of one miner's hash rate from its status reports."""
    if not reports:
        raise ValueError("no reports")
    labels = {r.miner for r in reports}
    if len(labels) > 1:
        raise ValueError(f"reports from multiple miners: {sorted(labels)}")
    minima = [normalize_hash(r.min_hash) for r in reports]
    if any(r.min_hash == 0 for r in reports):
        raise ValueError("degenerate report: zero minimum hash")
    return estimate_from_minima(minima, sigma)


def log_chernoff_upper_tail(n: int, pi: float) -> float:
    """log P[(beta - beta_hat)/beta_hat >= pi] bound."""
    return n * (pi / (1.0 + pi) - math.log1p(pi))


def log_chernoff_lower_tail(n: int, pi: float) -> float:
    """log P[(beta_hat - beta)/beta >= pi] bound."""
    return -math.log1p(pi) - n * (pi - math.log1p(pi))


def chernoff_upper_tail(n: int, pi: float) -> float:
    """Bound on the probability that beta exceeds its estimate by a factor 1+pi."""
    if n < 1 or pi <= 0:
        raise ValueError("require n >= 1 and pi > 0")
    return math.exp(log_chernoff_upper_tail(n, pi))


def chernoff_lower_tail(n: int, pi: float) -> float:
    """Bound on the probability that the estimate exceeds beta by a factor 1+pi."""
    if n < 1 or pi <= 0:
        raise ValueError("require n >= 1 and pi > 0")
    return math.exp(log_chernoff_lower_tail(n, pi))


def solve_pi(query: ChernoffQuery, rel_tol: float = 1e-9) -> float:
    """Smallest relative deviation pi whose tail bound is at or below epsilon.

    Binary search exploits that both bounds are strictly decreasing in pi.
    """
    log_bound = (log_chernoff_upper_tail if query.tail == "upper"
                 else log_chernoff_lower_tail)
    target = math.log(query.epsilon)
    n = query.n
    if log_bound(n, PI_MIN) <= target:
        return PI_MIN
    if log_bound(n, PI_MAX) > target:
        raise ValueError("unachievable confidence: bound above epsilon at pi=1e9")
    lo, hi = PI_MIN, PI_MAX  # bound(lo) > eps >= bound(hi)
    while (hi - lo) > rel_tol * lo:
        mid = math.sqrt(lo * hi)
        if log_bound(n, mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def bounded_estimate(reports: Sequence[StatusReport], sigma: float,
                     epsilon: float) -> HashRateEstimate:
    """Point estimate with Chernoff-bounded hash counts at threshold epsilon."""
    est = estimate_miner_rate(reports, sigma)
    return attach_chernoff_bounds(est, epsilon)


def attach_chernoff_bounds(est: HashRateEstimate,
                           epsilon: float) -> HashRateEstimate:
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    n = est.sample_size
    pi_up = solve_pi(ChernoffQuery(n=n, epsilon=epsilon, tail="upper"))
    pi_lo = solve_pi(ChernoffQuery(n=n, epsilon=epsilon, tail="lower"))
    # beta_low = beta_hat / (1 + pi_up)  =>  theta_high = theta_hat * (1 + pi_up)
    # beta_high = beta_hat * (1 + pi_lo) =>  theta_low = theta_hat / (1 + pi_lo)
    est.theta_high = est.theta_point * (1.0 + pi_up)
    est.theta_low = est.theta_point / (1.0 + pi_lo)
    est.rate_high = est.theta_high / est.sigma
    est.rate_low = est.theta_low / est.sigma
    est.metadata.update({"epsilon": epsilon, "pi_upper": pi_up, "pi_lower": pi_lo})
    return est


def verify_report_chain(reports: Sequence[StatusReport]) -> ChainVerdict:
    """Recompute chained nonces from the prior block id and check every link."""
    if not reports:
        return ChainVerdict(ok=True)
    prev = chain_seed(reports[0].prior_block_id)
    prior = reports[0].prior_block_id
    mismatches = []
    for i, rep in enumerate(reports):
        if rep.prior_block_id != prior:
            # a new prior block starts a fresh chain segment
            prior = rep.prior_block_id
            prev = chain_seed(prior)
        expected = chain_nonce(prev, rep.report_nonce)
        if expected != rep.chained_nonce:
            mismatches.append(i)
        prev = expected.to_bytes(32, "big")
    if mismatches:
        return ChainVerdict(ok=False, first_mismatch_index=mismatches[0],
                            mismatched_indices=tuple(mismatches))
    return ChainVerdict(ok=True)
