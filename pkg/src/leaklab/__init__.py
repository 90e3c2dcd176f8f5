"""leaklab: a discrete-time queueing side-channel laboratory.

Simulates a shared slotted scheduler serving a regular user and a probing
attacker, evaluates closed-form information-leakage rates and bounds for
FCFS, LQF, round robin, WC-TDMA and the deterministic work-conserving
class, and verifies every formula against simulation-based oracles.
"""

from .analytic import (
    BusyPeriodDist,
    DetWcBoundPoint,
    LeakageResult,
    alpha,
    binary_entropy,
    binomial_entropy,
    busy_period_closed_form,
    busy_period_crosscheck,
    busy_period_pmf,
    conditional_arrangement_entropy,
    detwc_root,
    detwc_root_residual,
    leakage_detwc_lower,
    leakage_fcfs,
    leakage_lqf,
    leakage_rr_lower,
    leakage_wctdma_lower,
    optimal_sampling_entropy_rate,
    sampling_gap_mixture,
)
from .estimate import (
    BruteForceResult,
    BusyPeriodSample,
    ConvexityReport,
    EntropyEstimate,
    SampledCounts,
    brute_force_sampling_entropy,
    decode_fcfs_counts,
    decode_lqf,
    empirical_entropy_rate,
    empirical_leakage,
    extract_busy_periods,
    midpoint_convexity_check,
)
from .experiments import (
    ExperimentSpec,
    VerificationReport,
    rows_to_csv,
    run_analytic,
    run_empirical,
    run_figure2,
    run_verify,
)
from .simulate import (
    ArrivalTrace,
    AttackObservation,
    QueueTrace,
    SimConfig,
    SimResult,
    run_simulation,
    simulate,
    write_trace_dump,
)

__version__ = "0.1.0"
