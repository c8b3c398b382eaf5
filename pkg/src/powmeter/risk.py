"""Double-spend risk: attacker fractions, success probabilities, release depths.

The attacker fraction inferred for a block is the complement of the ratio of
post-window to pre-window hash rate; the success probability is a race
formula with a residual attacker share assumed to persist beyond the
observed window.
"""
from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .chain import BlockHeader, StatusReport, normalize_hash
from .mom import (
    BootstrapConfig,
    MomSolveConfig,
    bootstrap_bounds,
    build_interval_grid,
    expected_y_max,
    solve_beta,
)
from .status import ChernoffQuery, solve_pi

DEFAULT_Q_STAR = 0.127
DEFAULT_THRESHOLD = 0.001


def _poisson_race(lam: float, z: int, ratio: float) -> float:
    """1 - sum_{k=0}^{z} pois(k; lam) (1 - ratio^{z-k}), in log space."""
    if ratio >= 1.0:
        return 1.0
    # = P(K > z) + sum_k pois(k) ratio^{z-k}
    log_ratio = math.log(ratio) if ratio > 0.0 else None
    cdf = 0.0
    catch = 0.0
    for k in range(z + 1):
        if lam == 0.0:
            log_pmf = 0.0 if k == 0 else None
        else:
            log_pmf = k * math.log(lam) - lam - math.lgamma(k + 1)
        if log_pmf is None:
            continue
        pmf = math.exp(log_pmf)
        cdf += pmf
        d = z - k
        if d == 0:
            catch += pmf
        elif log_ratio is not None:
            catch += math.exp(log_pmf + d * log_ratio)
    prob = (1.0 - cdf) + catch
    return min(max(prob, 0.0), 1.0)


def nakamoto_double_spend(q: float, z: int) -> float:
    """Probability an attacker with fraction q out-mines z confirmations."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be in [0, 1]")
    if z < 0:
        raise ValueError("z must be non-negative")
    if q >= 0.5:
        return 1.0
    p = 1.0 - q
    lam = z * q / p
    return _poisson_race(lam, z, q / p)


def revised_double_spend(q_i: float, z: int,
                         q_star: float = DEFAULT_Q_STAR) -> float:
    """Race probability with a residual attacker share q_star past the window."""
    if not 0.0 <= q_i <= 1.0:
        raise ValueError("q_i must be in [0, 1]")
    if not 0.0 < q_star < 0.5:
        raise ValueError("q_star must be in (0, 1/2)")
    if z < 0:
        raise ValueError("z must be non-negative")
    if q_i >= 0.5:
        return 1.0
    lam = z * q_i / (1.0 - q_i)
    return _poisson_race(lam, z, q_star / (1.0 - q_star))


def attacker_fraction(theta_0: float, theta_i: float) -> float:
    """Inferred attacker fraction 1 - theta_i / theta_0, clamped to [0, 1]."""
    if theta_0 <= 0:
        raise ValueError("empty pre-window estimate")
    if theta_i < 0:
        raise ValueError("theta_i must be non-negative")
    return min(max(1.0 - theta_i / theta_0, 0.0), 1.0)


def bounded_attacker_fractions(pre, post) -> tuple[float, float]:
    """(q_iL, q_iH): worst case pairs pre-upper with post-lower and vice versa."""
    if not (pre.has_bounds and post.has_bounds):
        raise ValueError("bounds required on both window estimates")
    q_il = min(max(1.0 - post.theta_low / pre.theta_high, 0.0), 1.0)
    q_ih = min(max(1.0 - post.theta_high / pre.theta_low, 0.0), 1.0)
    return q_il, q_ih


@dataclass
class MonteCarloResult:
    probability: float
    stderr: float
    trials: int


def monte_carlo_double_spend(q: float, z: int, trials: int,
                             seed: int = 0) -> MonteCarloResult:
    """Simulated race oracle: Poisson attacker progress, then ruin catch-up."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if q >= 1.0:
        return MonteCarloResult(1.0, 0.0, trials)
    rng = np.random.default_rng(seed)
    p = 1.0 - q
    lam = z * q / p
    k = rng.poisson(lam, size=trials)
    deficit = np.clip(z - k, 0, None)
    ratio = q / p
    if ratio >= 1.0:
        catch = np.ones(trials)
    else:
        catch = ratio ** deficit.astype(float)
    success = rng.random(trials) < catch
    mean = float(success.mean())
    se = float(success.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MonteCarloResult(mean, se, trials)


@dataclass(frozen=True)
class RiskParams:
    q_star: float = DEFAULT_Q_STAR
    threshold: float = DEFAULT_THRESHOLD
    pre_window_blocks: int = 100
    sigma: float = 1.0
    bound_mode: str = "point"  # point | worst | best
    method: str = "mom"  # mom | status-reports | combined
    epsilon: float = 0.05
    bootstrap: Optional[BootstrapConfig] = None
    solve: MomSolveConfig = field(default_factory=MomSolveConfig)
    max_depth: int = 50

    def __post_init__(self):
        if not 0.0 < self.q_star < 0.5:
            raise ValueError("q_star must be in (0, 1/2)")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if self.pre_window_blocks < 1:
            raise ValueError("pre-window must span at least one block")
        if self.bound_mode not in ("point", "worst", "best"):
            raise ValueError("bound_mode must be point, worst, or best")
        if self.method not in ("mom", "status-reports", "combined"):
            raise ValueError("unknown estimation method")

    @property
    def needs_bounds(self) -> bool:
        return self.bound_mode != "point"


@dataclass
class RiskAssessment:
    block_id: str
    depth: int
    theta_0: float
    theta_i: float
    q_i: float
    probability_point: float
    decision: str
    theta_0_low: Optional[float] = None
    theta_0_high: Optional[float] = None
    theta_i_low: Optional[float] = None
    theta_i_high: Optional[float] = None
    q_i_low: Optional[float] = None
    q_i_high: Optional[float] = None
    probability_worst: Optional[float] = None
    probability_best: Optional[float] = None


@dataclass
class _WindowEstimate:
    rate: float
    rate_low: Optional[float] = None
    rate_high: Optional[float] = None

    @property
    def has_bounds(self):
        return self.rate_low is not None and self.rate_high is not None

    # theta aliases used by bounded_attacker_fractions (rate ratios equal
    # theta ratios at a shared sigma)
    @property
    def theta_low(self):
        return self.rate_low

    @property
    def theta_high(self):
        return self.rate_high


class RiskAnalyzer:
    """Windowed estimation over one chain, shared across many assessed blocks.

    Precomputes prefix sums over blocks and per-miner reports so each
    (pre-window, post-window) estimate costs O(log n).
    """

    def __init__(self, headers: Sequence[BlockHeader],
                 reports: Optional[Sequence[StatusReport]] = None,
                 params: RiskParams = RiskParams()):
        self.params = params
        self.headers = list(headers)
        self.by_id = {h.id: h for h in self.headers}
        main = [h for h in self.headers if not h.is_ommer]
        self.main = self._order_main(main)
        self.main_pos = {h.id: i for i, h in enumerate(self.main)}
        targets = {h.target.t for h in self.headers}
        if len(targets) != 1:
            raise ValueError("headers must share one target")
        self.t_u = normalize_hash(targets.pop())

        # all headers (incl. ommers) by timestamp, with prefix sums of
        # normalized hashes, for MoM windows
        ordered = sorted((h for h in self.headers if h.miner != "genesis"),
                         key=lambda h: h.timestamp)
        self.obs_ts = np.array([h.timestamp for h in ordered], dtype=float)
        obs_u = np.array([normalize_hash(h.pow_hash) for h in ordered])
        self.obs_u = obs_u
        self.obs_cum = np.concatenate([[0.0], np.cumsum(obs_u)])

        # per-miner report times and prefix sums of normalized minima
        self.report_index: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray, float]] = {}
        if reports:
            per: dict[str, list[tuple[float, float, float]]] = {}
            for r in reports:
                prior = self.by_id.get(r.prior_block_id)
                if prior is None:
                    continue
                when = prior.timestamp + (r.interval_index + 1) * r.interval_seconds
                per.setdefault(r.miner, []).append(
                    (when, normalize_hash(r.min_hash), r.interval_seconds))
            for miner, rows in per.items():
                rows.sort()
                times = np.array([w for w, _, _ in rows])
                mins = np.array([u for _, u, _ in rows])
                cum = np.concatenate([[0.0], np.cumsum(mins)])
                sig = rows[0][2]
                self.report_index[miner] = (times, mins, cum, sig)

    @staticmethod
    def _order_main(main: list[BlockHeader]) -> list[BlockHeader]:
        by_parent = {h.parent_id: h for h in main}
        ids = {h.id for h in main}
        roots = [h for h in main if h.parent_id not in ids]
        if len(roots) != 1:
            raise ValueError("main chain must have exactly one root")
        chain = [roots[0]]
        while chain[-1].id in by_parent:
            chain.append(by_parent[chain[-1].id])
        if len(chain) != len(main):
            raise ValueError("main-chain headers do not form a single path")
        return chain

    # -- window estimates ---------------------------------------------------

    def _mom_window(self, start: float, end: float,
                    with_bounds: bool) -> _WindowEstimate:
        sigma = self.params.sigma
        i0 = int(np.searchsorted(self.obs_ts, start, side="left"))
        i1 = int(np.searchsorted(self.obs_ts, end, side="left"))
        if i1 <= i0:
            return _WindowEstimate(0.0, 0.0, 0.0)
        intervals = math.ceil((end - start) / sigma)
        y_bar = (self.obs_cum[i1] - self.obs_cum[i0]) / intervals
        y_max = expected_y_max(self.t_u)
        beta = solve_beta(min(y_bar, y_max), self.t_u, self.params.solve)
        rate = (1.0 / beta) / sigma
        est = _WindowEstimate(rate)
        if with_bounds:
            boot = self.params.bootstrap or BootstrapConfig()
            obs = self.obs_u[i0:i1]
            if obs.size >= 2:
                grid = _SliceGrid(obs, intervals, sigma)
                _, _, th_lo, th_hi = bootstrap_bounds(grid, self.t_u,
                                                      self.params.solve, boot)
                est.rate_low = min(th_lo / sigma, rate)
                est.rate_high = max(th_hi / sigma, rate)
            else:
                est.rate_low, est.rate_high = 0.0, rate
        return est

    def _status_window(self, start: float, end: float,
                       with_bounds: bool) -> _WindowEstimate:
        rate = 0.0
        var_weight = 0.0  # sum of r_m^2 / n_m, for the aggregate bound
        eps = self.params.epsilon
        for miner, (times, _, cum, sig) in self.report_index.items():
            j0 = int(np.searchsorted(times, start, side="left"))
            j1 = int(np.searchsorted(times, end, side="left"))
            n = j1 - j0
            if n == 0:
                continue
            v_bar = (cum[j1] - cum[j0]) / n
            r = 1.0 / (v_bar * sig)
            rate += r
            var_weight += r * r / n
        est = _WindowEstimate(rate)
        if with_bounds and rate > 0:
            # Independent per-miner errors average out in the network sum;
            # bound the total at the effective sample size implied by the
            # inverse-variance combination (equals n summed over miners when
            # rates are equal, and the single miner's n when there is one).
            n_eff = max(int(rate * rate / var_weight), 1)
            pi_up = solve_pi(ChernoffQuery(n=n_eff, epsilon=eps, tail="upper"))
            pi_lo = solve_pi(ChernoffQuery(n=n_eff, epsilon=eps, tail="lower"))
            est.rate_high = rate * (1.0 + pi_up)
            est.rate_low = rate / (1.0 + pi_lo)
        elif with_bounds:
            est.rate_low, est.rate_high = 0.0, 0.0
        return est

    def _combined_window(self, start: float, end: float,
                         with_bounds: bool) -> _WindowEstimate:
        status = self._status_window(start, end, with_bounds)
        reporting = {m for m, (times, _, _, _) in self.report_index.items()
                     if np.searchsorted(times, end, "left")
                     > np.searchsorted(times, start, "left")}
        sigma = self.params.sigma
        i0 = int(np.searchsorted(self.obs_ts, start, side="left"))
        i1 = int(np.searchsorted(self.obs_ts, end, side="left"))
        window_headers = [h for h in self.headers if h.miner != "genesis"
                          and start <= h.timestamp < end
                          and h.miner not in reporting]
        if not window_headers:
            return status
        intervals = math.ceil((end - start) / sigma)
        y_bar = (sum(normalize_hash(h.pow_hash) for h in window_headers)
                 / intervals)
        y_max = expected_y_max(self.t_u)
        beta = solve_beta(min(y_bar, y_max), self.t_u, self.params.solve)
        mom_rate = (1.0 / beta) / sigma
        est = _WindowEstimate(status.rate + mom_rate)
        if with_bounds:
            boot = self.params.bootstrap or BootstrapConfig()
            obs = np.array([normalize_hash(h.pow_hash) for h in window_headers])
            if obs.size >= 2:
                grid = _SliceGrid(obs, intervals, sigma)
                _, _, th_lo, th_hi = bootstrap_bounds(grid, self.t_u,
                                                      self.params.solve, boot)
                est.rate_low = status.rate_low + min(th_lo / sigma, mom_rate)
                est.rate_high = status.rate_high + max(th_hi / sigma, mom_rate)
            else:
                est.rate_low = status.rate_low
                est.rate_high = status.rate_high + mom_rate
        return est

    def _window_estimate(self, start: float, end: float,
                         with_bounds: bool) -> _WindowEstimate:
        method = self.params.method
        if method == "mom":
            return self._mom_window(start, end, with_bounds)
        if method == "status-reports":
            return self._status_window(start, end, with_bounds)
        return self._combined_window(start, end, with_bounds)

    # -- assessments ---------------------------------------------------------

    def _pre_window(self, b0: BlockHeader) -> tuple[float, float]:
        pos = self.main_pos[b0.id]
        w = self.params.pre_window_blocks
        if pos - w < 0:
            raise ValueError("insufficient pre-window history")
        start = self.main[pos - w].timestamp + 1
        return float(start), float(b0.timestamp + 1)

    def assess(self, block_id: str,
               max_depth: Optional[int] = None) -> list[RiskAssessment]:
        """Per-depth risk assessments for the block, as the chain grows past it."""
        params = self.params
        if block_id not in self.main_pos:
            raise ValueError(f"unknown block id: {block_id}")
        b1 = self.by_id[block_id]
        b0 = self.by_id.get(b1.parent_id)
        if b0 is None or b0.id not in self.main_pos:
            raise ValueError("block has no main-chain parent")
        pre_start, pre_end = self._pre_window(b0)
        want_bounds = params.needs_bounds
        pre = self._window_estimate(pre_start, pre_end, want_bounds)
        if pre.rate <= 0:
            raise ValueError("empty pre-window estimate")

        pos1 = self.main_pos[block_id]
        limit = max_depth if max_depth is not None else params.max_depth
        # depth 0: unconfirmed transaction, probability 1 by construction
        out = [RiskAssessment(block_id=block_id, depth=0,
                              theta_0=pre.rate * params.sigma, theta_i=0.0,
                              q_i=1.0, probability_point=1.0, decision="hold",
                              probability_worst=1.0 if want_bounds else None,
                              probability_best=1.0 if want_bounds else None)]
        for i in range(1, limit + 1):
            if pos1 + i - 1 >= len(self.main):
                break
            b_i = self.main[pos1 + i - 1]
            post = self._window_estimate(float(b0.timestamp + 1),
                                         float(b_i.timestamp + 1), want_bounds)
            q_i = attacker_fraction(pre.rate, post.rate)
            prob = revised_double_spend(q_i, i, params.q_star)
            a = RiskAssessment(
                block_id=block_id, depth=i,
                theta_0=pre.rate * params.sigma,
                theta_i=post.rate * params.sigma,
                q_i=q_i, probability_point=prob, decision="hold")
            if want_bounds:
                q_il, q_ih = bounded_attacker_fractions(pre, post)
                a.q_i_low, a.q_i_high = q_il, q_ih
                a.theta_0_low = pre.rate_low * params.sigma
                a.theta_0_high = pre.rate_high * params.sigma
                a.theta_i_low = post.rate_low * params.sigma
                a.theta_i_high = post.rate_high * params.sigma
                a.probability_worst = revised_double_spend(q_il, i, params.q_star)
                a.probability_best = revised_double_spend(q_ih, i, params.q_star)
            selected = {"point": a.probability_point,
                        "worst": a.probability_worst,
                        "best": a.probability_best}[params.bound_mode]
            a.decision = "release" if selected <= params.threshold else "hold"
            out.append(a)
        return out

    def release_depth(self, block_id: str,
                      max_depth: Optional[int] = None) -> tuple[int, bool]:
        """Minimal depth clearing the threshold; (depth, censored)."""
        limit = max_depth if max_depth is not None else self.params.max_depth
        assessments = self.assess(block_id, limit)
        for a in assessments:
            if a.decision == "release":
                return a.depth, False
        reached = assessments[-1].depth if assessments else 0
        return reached, True


def assess_block(headers: Sequence[BlockHeader],
                 reports: Optional[Sequence[StatusReport]],
                 block_id: str,
                 params: RiskParams = RiskParams()) -> list[RiskAssessment]:
    return RiskAnalyzer(headers, reports, params).assess(block_id)


@dataclass
class DepthResult:
    block_id: str
    depth: int
    censored: bool


def depth_to_threshold(headers: Sequence[BlockHeader],
                       reports: Optional[Sequence[StatusReport]],
                       sampled_blocks: Sequence[str],
                       params: RiskParams = RiskParams()) -> list[DepthResult]:
    """Release depth per sampled block (censored when never clearing)."""
    analyzer = RiskAnalyzer(headers, reports, params)
    out = []
    for block_id in sampled_blocks:
        depth, censored = analyzer.release_depth(block_id)
        out.append(DepthResult(block_id=block_id, depth=depth,
                               censored=censored))
    return out


def depth_cdf(results: Sequence[DepthResult]) -> list[tuple[int, float]]:
    """Empirical CDF of release depths (censored blocks never counted as released)."""
    if not results:
        return []
    max_d = max(r.depth for r in results)
    total = len(results)
    cdf = []
    for z in range(0, max_d + 1):
        frac = sum(1 for r in results if not r.censored and r.depth <= z) / total
        cdf.append((z, frac))
    return cdf


class _SliceGrid:
    """Adapter exposing an observation slice to the bootstrap machinery."""

    def __init__(self, obs_u: np.ndarray, interval_count: int, sigma: float):
        self._obs = obs_u
        self.interval_count = interval_count
        self.sigma = sigma

    @property
    def normalized_observations(self):
        return self._obs
