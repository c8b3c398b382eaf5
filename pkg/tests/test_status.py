import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powmeter.chain import HASH_SPACE, StatusReport, chain_nonce, chain_seed
from powmeter.status import (
    ChernoffQuery,
    attach_chernoff_bounds,
    bounded_estimate,
    chernoff_lower_tail,
    chernoff_upper_tail,
    estimate_from_minima,
    estimate_miner_rate,
    solve_pi,
    verify_report_chain,
)

# independently evaluated bound values at n=100, pi=0.5:
#   upper: exp(100 * (0.5/1.5 - ln 1.5)) = exp(100/3 - 100 ln 1.5)
#   lower: (1/1.5) * exp(-100 * (0.5 - ln 1.5))
UPPER_100_05 = math.exp(100.0 / 3.0 - 100.0 * math.log(1.5))
LOWER_100_05 = math.exp(-100.0 * (0.5 - math.log(1.5))) / 1.5


def test_chernoff_frozen_values():
    assert UPPER_100_05 == pytest.approx(7.36812e-4, rel=1e-4)
    assert LOWER_100_05 == pytest.approx(5.22770e-5, rel=1e-4)
    assert chernoff_upper_tail(100, 0.5) == pytest.approx(UPPER_100_05, rel=1e-12)
    assert chernoff_lower_tail(100, 0.5) == pytest.approx(LOWER_100_05, rel=1e-12)


def test_chernoff_decreasing_in_pi_and_n():
    pis = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0]
    for n in (10, 100, 1000):
        uppers = [chernoff_upper_tail(n, p) for p in pis]
        lowers = [chernoff_lower_tail(n, p) for p in pis]
        assert uppers == sorted(uppers, reverse=True)
        assert lowers == sorted(lowers, reverse=True)
    for pi in pis:
        by_n = [chernoff_upper_tail(n, pi) for n in (10, 100, 1000)]
        assert by_n == sorted(by_n, reverse=True)


def test_chernoff_validation():
    with pytest.raises(ValueError):
        chernoff_upper_tail(0, 0.5)
    with pytest.raises(ValueError):
        chernoff_lower_tail(10, 0.0)


@given(st.integers(min_value=1, max_value=100_000),
       st.floats(min_value=1e-6, max_value=0.5))
@settings(max_examples=100)
def test_solve_pi_is_tight(n, epsilon):
    query = ChernoffQuery(n=n, epsilon=epsilon, tail="upper")
    pi = solve_pi(query)
    assert chernoff_upper_tail(n, pi) <= epsilon
    # just below the solution the bound must exceed epsilon (tightness),
    # except when the solver hit its lower search limit
    if pi > 2e-9:
        assert chernoff_upper_tail(n, pi * (1 - 1e-6)) > epsilon * (1 - 1e-4)


def test_solve_pi_lower_tail():
    pi = solve_pi(ChernoffQuery(n=720, epsilon=0.05, tail="lower"))
    assert chernoff_lower_tail(720, pi) <= 0.05
    assert chernoff_lower_tail(720, pi * 0.999) > 0.05


def test_solve_pi_small_pi_approximation():
    # for large n the solution approaches sqrt(2 ln(1/eps) / n)
    n = 10**6
    pi = solve_pi(ChernoffQuery(n=n, epsilon=0.05, tail="upper"))
    approx = math.sqrt(2.0 * math.log(1 / 0.05) / n)
    assert pi == pytest.approx(approx, rel=0.05)


def test_query_validation():
    with pytest.raises(ValueError):
        ChernoffQuery(n=0, epsilon=0.05, tail="upper")
    with pytest.raises(ValueError):
        ChernoffQuery(n=10, epsilon=1.5, tail="upper")
    with pytest.raises(ValueError):
        ChernoffQuery(n=10, epsilon=0.05, tail="sideways")


def _reports_from_minima(minima, sigma=1.0, prior="00" * 32):
    rng = np.random.default_rng(0)
    prev = chain_seed(prior)
    out = []
    for i, v in enumerate(minima):
        nonce = int.from_bytes(rng.bytes(32), "big")
        chained = chain_nonce(prev, nonce)
        out.append(StatusReport(miner="m", interval_index=i,
                                interval_seconds=sigma, min_hash=int(v),
                                report_nonce=nonce, chained_nonce=chained,
                                prior_block_id=prior))
        prev = chained.to_bytes(32, "big")
    return out


def test_estimate_recovers_known_rate():
    # exponential minima with survival parameter S/theta recover theta
    rng = np.random.default_rng(42)
    theta = 5.0e6
    n = 50_000
    minima = rng.exponential(1.0 / theta, size=n)
    est = estimate_from_minima(minima, sigma=1.0)
    assert est.rate_point == pytest.approx(theta, rel=4.0 / math.sqrt(n))
    assert est.method == "status-reports"
    assert est.sample_size == n


def test_estimate_scale_equivariance():
    rng = np.random.default_rng(7)
    minima = rng.exponential(1e-7, size=100)
    a = estimate_from_minima(minima, sigma=1.0)
    b = estimate_from_minima(minima * 2.0, sigma=1.0)
    assert b.theta_point == pytest.approx(a.theta_point / 2.0, rel=1e-12)


def test_estimate_sigma_scaling():
    rng = np.random.default_rng(8)
    minima = rng.exponential(1e-7, size=100)
    a = estimate_from_minima(minima, sigma=1.0)
    b = estimate_from_minima(minima, sigma=2.0)
    assert b.theta_point == a.theta_point
    assert b.rate_point == pytest.approx(a.rate_point / 2.0, rel=1e-12)


def test_estimate_errors():
    with pytest.raises(ValueError, match="no reports"):
        estimate_from_minima([], sigma=1.0)
    with pytest.raises(ValueError, match="degenerate report"):
        estimate_from_minima([0.0, 0.5], sigma=1.0)
    with pytest.raises(ValueError, match="no reports"):
        estimate_miner_rate([], sigma=1.0)


def test_estimate_rejects_mixed_miners():
    reports = _reports_from_minima([100, 200])
    other = dataclasses.replace(reports[1], miner="other")
    with pytest.raises(ValueError, match="multiple miners"):
        estimate_miner_rate([reports[0], other], sigma=1.0)


def test_bounds_bracket_point():
    reports = _reports_from_minima(
        np.random.default_rng(3).exponential(1e70, size=200).astype(object))
    est = bounded_estimate(reports, sigma=1.0, epsilon=0.05)
    assert est.theta_low < est.theta_point < est.theta_high
    assert est.metadata["epsilon"] == 0.05
    # bound arithmetic: theta_high = theta * (1 + pi_upper)
    assert est.theta_high == pytest.approx(
        est.theta_point * (1 + est.metadata["pi_upper"]), rel=1e-12)
    assert est.theta_low == pytest.approx(
        est.theta_point / (1 + est.metadata["pi_lower"]), rel=1e-12)


def test_bounds_widen_for_smaller_epsilon():
    reports = _reports_from_minima(
        np.random.default_rng(4).exponential(1e70, size=100).astype(object))
    wide = bounded_estimate(reports, sigma=1.0, epsilon=0.01)
    narrow = bounded_estimate(reports, sigma=1.0, epsilon=0.2)
    assert wide.theta_high > narrow.theta_high
    assert wide.theta_low < narrow.theta_low


def test_attach_bounds_epsilon_validation():
    reports = _reports_from_minima([10, 20, 30])
    est = estimate_miner_rate(reports, sigma=1.0)
    with pytest.raises(ValueError, match="epsilon"):
        attach_chernoff_bounds(est, 0.0)


def test_verify_chain_accepts_valid_sequence():
    reports = _reports_from_minima(list(range(1, 20)))
    verdict = verify_report_chain(reports)
    assert verdict.ok
    assert verdict.first_mismatch_index is None


def test_verify_chain_empty_ok():
    assert verify_report_chain([]).ok


def test_verify_chain_flags_tampered_nonce_and_all_later():
    reports = _reports_from_minima(list(range(1, 12)))
    bad = dataclasses.replace(reports[4], report_nonce=12345)
    tampered = reports[:4] + [bad] + reports[5:]
    verdict = verify_report_chain(tampered)
    assert not verdict.ok
    assert verdict.first_mismatch_index == 4
    # recomputed chain diverges, so every later link also mismatches
    assert verdict.mismatched_indices == tuple(range(4, 11))


def test_verify_chain_flags_swapped_reports():
    reports = _reports_from_minima(list(range(1, 10)))
    swapped = reports[:3] + [reports[4], reports[3]] + reports[5:]
    assert not verify_report_chain(swapped).ok


def test_verify_chain_reseeds_on_new_prior_block():
    first = _reports_from_minima([5, 6, 7], prior="11" * 32)
    second = _reports_from_minima([8, 9], prior="22" * 32)
    assert verify_report_chain(first + second).ok
