"""Blockchain-only hash-rate estimation via method of moments.

Each sigma-second interval contributes a censored observation: the interval's
minimum hash if it fell at or below the target (i.e. a block or ommer was
published), zero otherwise. The sample mean of these censored values is
matched against its closed-form expectation to recover the survival
parameter, and hence the per-interval hash count.

All values in this module are unit-normalized (hash / S).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .chain import (
    HASH_SPACE,
    BlockHeader,
    HashRateEstimate,
    IntervalGrid,
    StatusReport,
    normalize_hash,
)
from . import status as status_mod

DEFAULT_SIGMA = 1.0
TWO_OVER_E = 2.0 / math.e
# Root of e^x = 1 + x + x^2: E[Y] as a function of beta peaks at
# beta = t / X_PEAK, where d/dbeta E[Y] = 1 - e^{-x}(1 + x + x^2) vanishes.
X_PEAK = 1.793282132900761


@dataclass(frozen=True)
class MomSolveConfig:
    """Binary-search controls for inverting the expectation equation.

    ``tau`` is the absolute tolerance on the expectation match, in normalized
    units; None picks 1e-9 relative to the observed sample mean.
    """

    tau: Optional[float] = None
    branch: str = "plus"  # "plus": beta > t; "minus": beta < t
    max_iterations: int = 200

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.branch not in ("plus", "minus"):
            raise ValueError("branch must be 'plus' or 'minus'")

    def effective_tau(self, y_bar: float) -> float:
        if self.tau is not None:
            return self.tau
        return 1e-9 * y_bar


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 10_000
    low_percentile: float = 5.0
    high_percentile: float = 95.0
    seed: int = 0

    def __post_init__(self):
        if self.resamples < 1:
            raise ValueError("resamples must be positive")
        if not 0.0 < self.low_percentile < self.high_percentile < 100.0:
            raise ValueError("percentiles must satisfy 0 < low < high < 100")


def build_interval_grid(headers: Sequence[BlockHeader],
                        window: tuple[float, float],
                        sigma: float = DEFAULT_SIGMA,
                        miner_filter: Optional[Callable[[str], bool]] = None
                        ) -> IntervalGrid:
    """Grid of censored observations from in-window headers, ommers included."""
    start, end = window
    if end <= start:
        raise ValueError("window must be non-empty")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    interval_count = math.ceil((end - start) / sigma)
    obs = []
    for h in headers:
        if not (start <= h.timestamp < end):
            continue
        if miner_filter is not None and not miner_filter(h.miner):
            continue
        obs.append((int((h.timestamp - start) // sigma), h.pow_hash))
    obs.sort(key=lambda o: o[0])
    return IntervalGrid(start=start, end=end, sigma=sigma,
                        interval_count=interval_count,
                        observations=tuple(obs))


def expected_y(beta: float, t: float) -> float:
    """E[Y] for censoring threshold t: beta - beta e^{-t/beta}(t/beta + 1).

    Evaluated as beta * g(x), x = t/beta, with a series for small x to avoid
    the catastrophic cancellation of the direct form when beta >> t.
    """
    if beta <= 0 or t <= 0:
        raise ValueError("beta and t must be positive")
    x = t / beta
    return beta * _g(x)


def _g(x: float) -> float:
    # g(x) = 1 - e^{-x}(1 + x) = sum_{k>=2} (-1)^k x^k (k-1)/k!
    if x >= 0.9:
        return 1.0 - math.exp(-x) * (1.0 + x)
    total = 0.0
    term = x * x / 2.0  # k = 2 term of sum_{k>=2} (-1)^k x^k (k-1)/k!
    k = 2
    while True:
        total += term
        term *= -x * k / ((k - 1) * (k + 1))
        k += 1
        if abs(term) <= 1e-20 * abs(total):
            break
    return total


def expected_y_argmax(t: float) -> float:
    """The beta maximizing E[Y] at censoring threshold t."""
    return t / X_PEAK


def expected_y_max(t: float) -> float:
    """Global maximum of E[Y] over beta, attained at beta = t / X_PEAK."""
    return expected_y(t / X_PEAK, t)


def solve_beta(y_bar: float, t: float,
               config: MomSolveConfig = MomSolveConfig()) -> float:
    """Invert E[Y]_beta = y_bar by binary search on the configured branch."""
    if y_bar <= 0.0:
        raise ValueError("no blocks observed")
    y_max = expected_y_max(t)
    if y_bar > y_max:
        raise ValueError(
            "no solution: sample mean exceeds maximum of E[Y] "
            f"({y_bar:.3e} > {y_max:.3e})")
    tau = config.effective_tau(y_bar)
    peak = expected_y_argmax(t)
    if abs(y_bar - y_max) <= tau:
        return peak

    # Bracket beta on the requested branch. E[Y] decreases in beta above the
    # peak (plus branch) and increases below it (minus branch).
    if config.branch == "plus":
        lo, hi = peak, 2.0 * t
        while expected_y(hi, t) > y_bar:
            lo = hi
            hi *= 4.0
            if hi > 1e40:
                raise ValueError("failed to bracket beta on the plus branch")
        increasing = False
    else:
        lo, hi = peak / 2.0, peak
        while expected_y(lo, t) > y_bar:
            hi = lo
            lo /= 4.0
            if lo < 1e-320:
                raise ValueError("failed to bracket beta on the minus branch")
        increasing = True

    for _ in range(config.max_iterations):
        mid = math.sqrt(lo * hi)
        val = expected_y(mid, t)
        if abs(val - y_bar) <= tau:
            return mid
        if (val > y_bar) == increasing:
            hi = mid
        else:
            lo = mid
    raise ValueError(
        f"max_iterations exceeded; bracketing interval [{lo:.6e}, {hi:.6e}]")


def _estimate_from_grid(grid: IntervalGrid,
                        t_normalized: float,
                        config: MomSolveConfig,
                        method: str) -> HashRateEstimate:
    if not grid.observations:
        raise ValueError("no blocks observed")
    y_bar = grid.y_bar
    beta = solve_beta(y_bar, t_normalized, config)
    theta = 1.0 / beta
    return HashRateEstimate(
        theta_point=theta,
        rate_point=theta / grid.sigma,
        beta_point=beta * HASH_SPACE,
        method=method,
        sample_size=len(grid.observations),
        sigma=grid.sigma,
        metadata={"y_bar": y_bar, "interval_count": grid.interval_count},
    )


def _target_normalized(headers: Sequence[BlockHeader]) -> float:
    targets = {h.target.t for h in headers}
    if len(targets) != 1:
        raise ValueError("headers must share one target within a window")
    return normalize_hash(targets.pop())


def estimate_network_rate(headers: Sequence[BlockHeader],
                          window: tuple[float, float],
                          sigma: float = DEFAULT_SIGMA,
                          config: MomSolveConfig = MomSolveConfig()
                          ) -> HashRateEstimate:
    """Network-wide hash-rate estimate from blocks and ommers in a window."""
    grid = build_interval_grid(headers, window, sigma)
    in_window = [h for h in headers if window[0] <= h.timestamp < window[1]]
    if not in_window:
        raise ValueError("no blocks observed")
    return _estimate_from_grid(grid, _target_normalized(in_window), config, "mom")


def estimate_subset_rate(headers: Sequence[BlockHeader],
                         miner_labels: set[str] | Sequence[str],
                         window: tuple[float, float],
                         sigma: float = DEFAULT_SIGMA,
                         config: MomSolveConfig = MomSolveConfig()
                         ) -> HashRateEstimate:
    """Hash-rate estimate restricted to blocks mined by the given miners."""
    labels = set(miner_labels)
    grid = build_interval_grid(headers, window, sigma,
                               miner_filter=lambda m: m in labels)
    if not grid.observations:
        raise ValueError("no blocks observed")
    in_window = [h for h in headers if window[0] <= h.timestamp < window[1]]
    est = _estimate_from_grid(grid, _target_normalized(in_window), config, "mom")
    est.metadata["miners"] = sorted(labels)
    return est


def combined_estimate(headers: Sequence[BlockHeader],
                      reports: Sequence[StatusReport],
                      window: tuple[float, float],
                      sigma: float = DEFAULT_SIGMA,
                      epsilon: Optional[float] = None,
                      config: MomSolveConfig = MomSolveConfig(),
                      boot_config: Optional[BootstrapConfig] = None
                      ) -> HashRateEstimate:
    """Sum of status-report rates (reporting miners) and subset MoM (the rest).

    ``reports`` must already be restricted to the window of interest.
    """
    by_miner: dict[str, list[StatusReport]] = {}
    for r in reports:
        by_miner.setdefault(r.miner, []).append(r)

    rate = 0.0
    rate_low = 0.0
    rate_high = 0.0
    have_bounds = epsilon is not None
    n_total = 0
    for label, reps in sorted(by_miner.items()):
        rsig = reps[0].interval_seconds
        est = status_mod.estimate_miner_rate(reps, rsig)
        if epsilon is not None:
            est = status_mod.attach_chernoff_bounds(est, epsilon)
            rate_low += est.rate_low
            rate_high += est.rate_high
        rate += est.rate_point
        n_total += est.sample_size

    reporting = set(by_miner)
    in_window = [h for h in headers
                 if window[0] <= h.timestamp < window[1]
                 and h.miner not in reporting]
    if in_window:
        grid = build_interval_grid(headers, window, sigma,
                                   miner_filter=lambda m: m not in reporting)
        t_u = _target_normalized(in_window)
        mom_est = _estimate_from_grid(grid, t_u, config, "mom")
        rate += mom_est.rate_point
        n_total += mom_est.sample_size
        if boot_config is not None:
            _, _, th_lo, th_hi = bootstrap_bounds(grid, t_u, config, boot_config)
            rate_low += th_lo / sigma
            rate_high += th_hi / sigma
        elif have_bounds:
            # no tail bound available for the MoM share without a bootstrap
            have_bounds = False
    elif not by_miner:
        raise ValueError("no blocks observed and no reports provided")

    if rate <= 0:
        raise ValueError("combined estimate degenerate: zero total rate")
    est = HashRateEstimate(
        theta_point=rate * sigma,
        rate_point=rate,
        beta_point=HASH_SPACE / (rate * sigma),
        method="combined",
        sample_size=n_total,
        sigma=sigma,
        metadata={"reporting_miners": sorted(reporting)},
    )
    if have_bounds and rate_low > 0:
        est.rate_low, est.rate_high = rate_low, rate_high
        est.theta_low, est.theta_high = rate_low * sigma, rate_high * sigma
    return est


def bootstrap_y_bars(grid: IntervalGrid,
                     boot_config: BootstrapConfig) -> np.ndarray:
    """Resampled sample means via interval-level resampling.

    Each resample draws interval_count intervals with replacement; an interval
    is occupied with probability n / interval_count, so the number of nonzero
    picks is binomial and the occupied picks are drawn from the observed
    values. This keeps the block-count variance in the resampled means, which
    a fixed-count resample of only the nonzero observations would discard.
    """
    obs = np.array(grid.normalized_observations)
    n = obs.size
    if n < 2:
        raise ValueError("bootstrap requires at least 2 observations")
    rng = np.random.default_rng(boot_config.seed)
    n_int = grid.interval_count
    resamples = boot_config.resamples
    if n_int <= n:
        # every interval occupied; plain resample of the observations
        idx = rng.integers(0, n, size=(resamples, n_int))
        return obs[idx].sum(axis=1) / n_int
    counts = rng.binomial(n_int, n / n_int, size=resamples)
    draws = obs[rng.integers(0, n, size=int(counts.sum()))]
    cum = np.concatenate([[0.0], np.cumsum(draws)])
    ends = np.cumsum(counts)
    sums = cum[ends] - cum[ends - counts]
    return sums / n_int


def bootstrap_bounds(grid: IntervalGrid, t_normalized: float,
                     solve_config: MomSolveConfig = MomSolveConfig(),
                     boot_config: BootstrapConfig = BootstrapConfig()
                     ) -> tuple[float, float, float, float]:
    """Percentile bootstrap bounds (beta_low, beta_high, theta_low, theta_high).

    Resampled means that exceed the E[Y] maximum are mapped to the argmax
    (the largest feasible hash count on the plus branch).
    """
    bounds, _ = _bootstrap_bounds_full(grid, t_normalized, solve_config,
                                       boot_config)
    return bounds


def _bootstrap_bounds_full(grid, t_normalized, solve_config, boot_config):
    y_bars = bootstrap_y_bars(grid, boot_config)
    y_max = expected_y_max(t_normalized)
    infeasible = float(np.mean(y_bars > y_max))
    y_bars = np.minimum(y_bars, y_max)
    y_lo = float(np.percentile(y_bars, boot_config.low_percentile))
    y_hi = float(np.percentile(y_bars, boot_config.high_percentile))

    def solve(y):
        if y <= 0.0:
            return math.inf  # empty resampled window: no lower rate bound
        return solve_beta(min(y, y_max), t_normalized, solve_config)

    beta_from_lo = solve(y_lo)
    beta_from_hi = solve(y_hi)
    # On the plus branch E[Y] decreases in beta, so the low-percentile mean
    # maps to the largest beta (smallest theta) and vice versa.
    beta_low = min(beta_from_lo, beta_from_hi)
    beta_high = max(beta_from_lo, beta_from_hi)
    theta_low = 1.0 / beta_high if math.isfinite(beta_high) else 0.0
    theta_high = 1.0 / beta_low
    return (beta_low, beta_high, theta_low, theta_high), infeasible


def bounded_network_estimate(headers: Sequence[BlockHeader],
                             window: tuple[float, float],
                             sigma: float = DEFAULT_SIGMA,
                             config: MomSolveConfig = MomSolveConfig(),
                             boot_config: BootstrapConfig = BootstrapConfig()
                             ) -> HashRateEstimate:
    """Network MoM estimate with bootstrap percentile bounds attached."""
    est = estimate_network_rate(headers, window, sigma, config)
    in_window = [h for h in headers if window[0] <= h.timestamp < window[1]]
    grid = build_interval_grid(headers, window, sigma)
    if len(grid.observations) >= 2:
        (_, _, th_lo, th_hi), infeasible = _bootstrap_bounds_full(
            grid, _target_normalized(in_window), config, boot_config)
        est.theta_low = min(th_lo, est.theta_point)
        est.theta_high = max(th_hi, est.theta_point)
        est.rate_low = est.theta_low / sigma
        est.rate_high = est.theta_high / sigma
        est.metadata["bootstrap"] = {
            "resamples": boot_config.resamples,
            "percentiles": [boot_config.low_percentile,
                            boot_config.high_percentile],
            "seed": boot_config.seed,
            "infeasible_fraction": infeasible,
        }
    return est


def naive_difficulty_rate(difficulty: float,
                          block_interval_seconds: float) -> float:
    """Difficulty-implied hashes per second: 2^32 * D / block interval."""
    if difficulty <= 0:
        raise ValueError("difficulty must be positive")
    if block_interval_seconds <= 0:
        raise ValueError("block interval must be positive")
    return (2.0**32) * difficulty / block_interval_seconds


def window_ending_at(headers: Sequence[BlockHeader], block_id: str,
                     n_blocks: int) -> tuple[float, float]:
    """Time window spanning the last ``n_blocks`` main-chain blocks ending at
    ``block_id``: (parent-of-first timestamp, last timestamp], as a half-open
    [start, end) grid window.
    """
    main = [h for h in headers if not h.is_ommer]
    by_id = {h.id: h for h in main}
    if block_id not in by_id:
        raise ValueError(f"unknown block id: {block_id}")
    chain = []
    cur = by_id[block_id]
    for _ in range(n_blocks):
        chain.append(cur)
        cur = by_id.get(cur.parent_id)
        if cur is None:
            raise ValueError("insufficient history before block "
                             f"{block_id}: need {n_blocks} blocks")
    start = cur.timestamp + 1  # exclude the block before the window
    end = by_id[block_id].timestamp + 1
    return (float(start), float(end))
