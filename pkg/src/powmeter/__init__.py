"""Proof-of-work hash rate estimation and double-spend risk assessment."""

from .chain import (
    HASH_SPACE,
    BlockHeader,
    HashRateEstimate,
    IntervalGrid,
    StatusReport,
    Target,
    normalize_hash,
    target_from_difficulty,
    validate_header,
)
from .simulate import (
    AttackerSpec,
    MinerSpec,
    SimConfig,
    SyntheticTrace,
    inject_attacker,
    simulate,
    target_for_block_interval,
)
from .status import (
    ChernoffQuery,
    bounded_estimate,
    chernoff_lower_tail,
    chernoff_upper_tail,
    estimate_miner_rate,
    solve_pi,
    verify_report_chain,
)
from .io import (
    ChainDataError,
    ChainDataset,
    export_results,
    import_results,
    read_headers,
    read_reports,
    write_headers,
    write_reports,
)
from .mom import (
    BootstrapConfig,
    MomSolveConfig,
    bootstrap_bounds,
    bounded_network_estimate,
    build_interval_grid,
    combined_estimate,
    estimate_network_rate,
    estimate_subset_rate,
    expected_y,
    expected_y_argmax,
    expected_y_max,
    naive_difficulty_rate,
    solve_beta,
    window_ending_at,
)
from .risk import (
    RiskAnalyzer,
    RiskAssessment,
    RiskParams,
    assess_block,
    attacker_fraction,
    bounded_attacker_fractions,
    depth_to_threshold,
    monte_carlo_double_spend,
    nakamoto_double_spend,
    revised_double_spend,
)

__version__ = "0.1.0"
