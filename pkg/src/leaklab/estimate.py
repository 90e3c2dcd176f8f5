"""Simulation-side verification: decoders, empirical estimators, brute-force oracles.

Everything here works from traces produced by :mod:`leaklab.simulate` (or any
observation with the same shape) and is used to confirm the closed-form
results in :mod:`leaklab.analytic` against independent computations.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import analytic
from .analytic import (
    LeakageResult,
    binary_entropy,
    binomial_entropy,
    conditional_arrangement_entropy,
)
from .simulate import AttackObservation, SimConfig, simulate

__all__ = [
    "LqfDecoding",
    "SampledCounts",
    "BusyPeriodSample",
    "EntropyEstimate",
    "BruteForceResult",
    "ConvexityReport",
    "EmpiricalLeakage",
    "decode_lqf",
    "decode_fcfs_counts",
    "extract_busy_periods",
    "empirical_entropy_rate",
    "brute_force_sampling_entropy",
    "midpoint_convexity_check",
    "empirical_leakage",
]


@dataclass(frozen=True)
class LqfDecoding:
    """Reconstructed user arrival sequence from an LQF nonstop-monitoring trace.

    ``slots[t-1]`` is the decoded indicator for slot t; slots past
    ``covered_until`` carry the decoder's default of 1 but were never probed.
    """

    slots: np.ndarray
    covered_until: int


def decode_lqf(obs: AttackObservation, n: int) -> LqfDecoding:
    """Recover the user's arrivals from LQF departure times.

    Slot i is decoded as 0 exactly when some attacker departure equals i+1
    (the attacker got served during slot i, so the user cannot have had a
    job there).  Requires a nonstop-monitoring observation.
    """
    if obs.m >= 2 and not np.array_equal(obs.arrivals[1:], obs.departures[:-1]):
        raise ValueError("observation is not nonstop monitoring (A_k != D_{k-1})")
    decoded = np.ones(n, dtype=np.uint8)
    service_slots = obs.departures - 1
    service_slots = service_slots[service_slots <= n]
    decoded[service_slots - 1] = 0
    covered = int(min(n, obs.departures[-1] - 1)) if obs.m else 0
    return LqfDecoding(slots=decoded, covered_until=covered)


@dataclass(frozen=True)
class SampledCounts:
    """User arrival counts per attacker inter-arrival window under FCFS.

    Window k spans slots ``[A_k, A_{k+1} - 1]``.  Where the implied queue at
    the window's end is positive the count is exact (``exact_mask`` true);
    where the queue emptied only the range ``[0, upper_bounds[k]]`` is known
    and ``counts[k]`` stores the conservative lower end, 0.
    """

    counts: np.ndarray
    exact_mask: np.ndarray
    upper_bounds: np.ndarray


def decode_fcfs_counts(obs: AttackObservation) -> SampledCounts:
    """Decode per-window user arrival counts from FCFS probe delays.

    The delay of probe k reveals the backlog ahead of it,
    ``q(A_k) = D_k - A_k - 1``; consecutive backlogs and the gap give the
    window count exactly whenever the queue did not empty inside the window.
    Inconsistent delays (a negative implied count) mean the observation did
    not come from FCFS.
    """
    if obs.m < 2:
        return SampledCounts(
            counts=np.zeros(0, dtype=np.int64),
            exact_mask=np.zeros(0, dtype=bool),
            upper_bounds=np.zeros(0, dtype=np.int64),
        )
    q = obs.departures - obs.arrivals - 1
    if (q < 0).any():
        raise ValueError("delays below service time: not a valid observation")
    gaps = np.diff(obs.arrivals)
    x = q[1:] - q[:-1] - 1 + gaps
    exact = q[1:] > 0
    if (x[exact] < 0).any() or (x[exact] > gaps[exact]).any():
        raise ValueError("inconsistent delays: observation is not FCFS")
    slack = gaps - q[:-1] - 1
    if (slack[~exact] < 0).any():
        raise ValueError("inconsistent delays: observation is not FCFS")
    counts = np.where(exact, x, 0).astype(np.int64)
    upper = np.where(exact, x, slack).astype(np.int64)
    return SampledCounts(counts=counts, exact_mask=exact, upper_bounds=upper)


@dataclass(frozen=True)
class BusyPeriodSample:
    """Observed busy periods (slots between successive empty-queue sightings)."""

    periods: np.ndarray
    scheduler: str


def extract_busy_periods(obs: AttackObservation, scheduler: str) -> BusyPeriodSample:
    """Split the timeline at probes that found nothing queued.

    A probe with delay 1 saw the user idle (round robin: empty queue;
    WC-TDMA odd-slot probe: empty queue and no fresh arrival).  Periods are
    the gaps between successive such probes; the offset before the first
    sighting is a boundary artefact and is not a period.
    """
    scheduler = scheduler.upper()
    if scheduler not in ("RR", "WCTDMA"):
        raise ValueError(f"busy periods are defined for RR or WCTDMA, got {scheduler}")
    delays = obs.delays()
    if len(delays) and not np.isin(delays, (1, 2)).all():
        raise ValueError("probe delays outside {1, 2}: wrong scheduler/attack pairing")
    if scheduler == "RR":
        if obs.m >= 2 and not np.array_equal(obs.arrivals[1:], obs.departures[:-1]):
            raise ValueError("round-robin busy periods need a nonstop-monitoring trace")
    else:
        expected = 1 + 2 * np.arange(obs.m, dtype=np.int64)
        if not np.array_equal(obs.arrivals, expected):
            raise ValueError("WC-TDMA busy periods need the odd-slots attack")
    sightings = obs.arrivals[delays == 1]
    periods = np.diff(sightings)
    return BusyPeriodSample(periods=periods, scheduler=scheduler)


@dataclass(frozen=True)
class EntropyEstimate:
    """Plug-in entropy with Miller-Madow correction and a bootstrap CI."""

    bits: float
    ci_low: float
    ci_high: float
    n_samples: int
    n_distinct: int


def _plugin_entropy_bits(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    h = float(-np.sum(p * np.log2(p)))
    return h + (len(p) - 1) / (2.0 * n * math.log(2.0))


def empirical_entropy_rate(
    samples: np.ndarray,
    bootstrap: int = 200,
    seed: int = 0,
    min_samples: int = 10_000,
) -> EntropyEstimate:
    """Entropy per symbol of a discrete sample, in bits, with a 95% CI.

    Uses the plug-in estimator with Miller-Madow bias correction; the CI is
    a percentile bootstrap (multinomial resampling of the empirical PMF).
    Warns when the alphabet is large relative to the sample (undersampled
    regime, where even the corrected estimate is biased low).
    """
    samples = np.asarray(samples)
    n = len(samples)
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    _, counts = np.unique(samples, return_counts=True)
    k = len(counts)
    if k > n / 10:
        warnings.warn(
            f"{k} distinct symbols in {n} samples: entropy estimate is undersampled",
            stacklevel=2,
        )
    h = _plugin_entropy_bits(counts, n)
    rng = np.random.default_rng(seed)
    resampled = rng.multinomial(n, counts / n, size=bootstrap)
    hs = np.empty(bootstrap)
    for i in range(bootstrap):
        hs[i] = _plugin_entropy_bits(resampled[i], n)
    lo, hi = np.percentile(hs, [2.5, 97.5])
    return EntropyEstimate(
        bits=h, ci_low=float(lo), ci_high=float(hi), n_samples=n, n_distinct=k
    )


@dataclass(frozen=True)
class BruteForceResult:
    """Outcome of exhaustively scoring every sampling pattern on a small horizon."""

    horizon: int
    budget: int
    lam: float
    best_entropy: float
    best_pattern: tuple[int, ...]
    maximizer_gap_multisets: tuple[tuple[int, ...], ...]
    near_uniform_pattern: tuple[int, ...]
    near_uniform_entropy: float
    near_uniform_is_max: bool


def _pattern_entropy_map(n: int, lam: float):
    """Probability and cumulative-count tables over all 2^n arrival strings."""
    codes = np.arange(2**n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    ones = bits.sum(axis=1)
    if lam in (0.0, 1.0):
        probs = np.where(ones == (n if lam == 1.0 else 0), 1.0, 0.0).astype(float)
    else:
        probs = lam**ones * (1.0 - lam) ** (n - ones)
    cum = np.cumsum(bits, axis=1)
    return probs, cum


def _joint_entropy_of_pattern(pattern, probs, cum, n) -> float:
    cols = np.asarray(pattern) - 1
    counts = cum[:, cols]
    powers = (n + 1) ** np.arange(len(cols), dtype=np.int64)
    keys = counts @ powers
    order = np.argsort(keys, kind="stable")
    keys_sorted = keys[order]
    p_sorted = probs[order]
    starts = np.flatnonzero(np.concatenate(([True], keys_sorted[1:] != keys_sorted[:-1])))
    mass = np.add.reduceat(p_sorted, starts)
    mass = mass[mass > 0]
    return float(-np.sum(mass * np.log2(mass)))


def near_uniform_pattern(n: int, k: int) -> tuple[int, ...]:
    """Sampling times whose gap multiset is drawn from {floor(n/k), ceil(n/k)}."""
    lo, hi = n // k, -(-n // k)
    n_lo = k * hi - n if hi != lo else k
    gaps = [hi] * (k - n_lo) + [lo] * n_lo
    return tuple(itertools.accumulate(gaps))


def brute_force_sampling_entropy(n: int, k: int, lam: float) -> BruteForceResult:
    """Exact joint entropy of every k-sample pattern on an n-slot horizon.

    The oracle enumerates all 2^n arrival strings, groups them by the
    observed cumulative-count vector of each pattern, and sums -p*log2(p)
    over the groups; nothing is taken from the closed-form path.  Verifies
    that the maximising patterns use gaps from {floor(n/k), ceil(n/k)}.
    """
    if n > 14:
        raise ValueError(f"exhaustive oracle limited to n <= 14, got {n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}")
    probs, cum = _pattern_entropy_map(n, lam)
    best = -np.inf
    best_pattern: tuple[int, ...] = ()
    maximizers: list[tuple[int, ...]] = []
    for pattern in itertools.combinations(range(1, n + 1), k):
        h = _joint_entropy_of_pattern(pattern, probs, cum, n)
        if h > best + 1e-12:
            best = h
            best_pattern = pattern
            maximizers = [pattern]
        elif h >= best - 1e-12:
            maximizers.append(pattern)

    def gap_multiset(pattern):
        gaps = np.diff(np.concatenate(([0], pattern)))
        return tuple(sorted(int(g) for g in gaps))

    uniform = near_uniform_pattern(n, k)
    uniform_h = _joint_entropy_of_pattern(uniform, probs, cum, n)
    return BruteForceResult(
        horizon=n,
        budget=k,
        lam=lam,
        best_entropy=best,
        best_pattern=best_pattern,
        maximizer_gap_multisets=tuple(sorted(set(gap_multiset(p) for p in maximizers))),
        near_uniform_pattern=uniform,
        near_uniform_entropy=uniform_h,
        near_uniform_is_max=uniform_h >= best - 1e-12,
    )


@dataclass(frozen=True)
class ConvexityReport:
    """Mid-point convexity audit of the arrangement-entropy function."""

    lam: float
    i_max: int
    max_violation: float
    equality_deviation: float
    pairs_checked: int

    @property
    def passed(self) -> bool:
        return self.max_violation <= 1e-10 and self.equality_deviation <= 1e-10


def midpoint_convexity_check(lam: float, i_max: int = 40) -> ConvexityReport:
    """Verify H(a) + H(b) >= H(floor((a+b)/2)) + H(ceil((a+b)/2)) for all pairs.

    Also measures how tightly equality holds on the b in {a, a+1} pairs.
    ``i_max`` is capped at 60 where exact binomial-entropy summation stays
    comfortable.
    """
    if i_max > 60:
        raise ValueError(f"i_max above 60 not supported, got {i_max}")
    values = [conditional_arrangement_entropy(i, lam) for i in range(1, i_max + 1)]

    def h(i: int) -> float:
        return values[i - 1]

    worst = 0.0
    eq_dev = 0.0
    pairs = 0
    for a in range(1, i_max + 1):
        for b in range(a, i_max + 1):
            lhs = h(a) + h(b)
            rhs = h((a + b) // 2) + h(-((a + b) // -2))
            gap = lhs - rhs
            pairs += 1
            worst = max(worst, -gap)
            if b in (a, a + 1):
                eq_dev = max(eq_dev, abs(gap))
    return ConvexityReport(
        lam=lam,
        i_max=i_max,
        max_violation=max(0.0, worst),
        equality_deviation=eq_dev,
        pairs_checked=pairs,
    )


@dataclass(frozen=True)
class EmpiricalLeakage:
    """Empirical leakage estimate plus the side information reports care about."""

    result: LeakageResult
    trial_rates: np.ndarray
    exact_window_fraction: float | None = None


_SUPPORTED_PAIRS = {
    ("LQF", "nonstop"),
    ("RR", "nonstop"),
    ("WCTDMA", "odd-slots"),
    ("FCFS", "periodic"),
}


def _trial_seed(base_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([base_seed, trial]).generate_state(1)[0])


def _rate_lqf(result) -> float:
    dec = decode_lqf(result.observation, result.config.horizon)
    cov = dec.covered_until
    if cov == 0:
        return 0.0
    truth = result.arrivals.slots[:cov]
    frac = float(np.mean(dec.slots[:cov] == truth))
    return frac * binary_entropy(result.config.lam)


def _rate_busy(result, scheduler: str) -> tuple[float, int]:
    sample = extract_busy_periods(result.observation, scheduler)
    periods = sample.periods
    if len(periods) < 2:
        return 0.0, len(periods)
    est = empirical_entropy_rate(periods, min_samples=2, bootstrap=1)
    return est.bits / float(np.mean(periods)), len(periods)


def _rate_fcfs(result) -> tuple[float, float]:
    counts = decode_fcfs_counts(result.observation)
    gaps = np.diff(result.observation.arrivals)
    exact_frac = float(np.mean(counts.exact_mask)) if len(counts.exact_mask) else 0.0
    # conditional per-sample entropy H(X | gap), over exactly decoded windows
    total_bits = 0.0
    n_windows = len(gaps)
    if n_windows == 0:
        return 0.0, 0.0
    for g in np.unique(gaps):
        sel = (gaps == g) & counts.exact_mask
        n_g = int(sel.sum())
        if n_g < 2:
            continue
        vals, cnt = np.unique(counts.counts[sel], return_counts=True)
        h_g = _plugin_entropy_bits(cnt, n_g)
        total_bits += (n_g / n_windows) * h_g
    return total_bits / float(np.mean(gaps)), exact_frac


def empirical_leakage(config: SimConfig, trials: int = 10) -> EmpiricalLeakage:
    """Estimate the per-slot leakage rate from the scheduler's sufficient statistic.

    LQF uses the decoder-exact fraction times H(lam); round robin and
    WC-TDMA use the busy-period entropy rate H(B)/E[B]; FCFS uses the
    decoded window-count entropy rate at the configured sampling rate.
    Pairs without a decoder are refused.  The CI is a normal interval over
    independent trials (seeds derived from the config seed).
    """
    pair = (config.scheduler, config.attacker)
    if pair not in _SUPPORTED_PAIRS:
        raise ValueError(f"no decoder for scheduler/attacker pair {pair}")
    if trials < 1:
        raise ValueError("need at least one trial")

    rates = np.empty(trials)
    exact_fracs = []
    for trial in range(trials):
        cfg = SimConfig(
            scheduler=config.scheduler,
            lam=config.lam,
            horizon=config.horizon,
            seed=_trial_seed(config.seed, trial),
            tie_break=config.tie_break,
            attacker=config.attacker,
            omega=config.omega,
            fcfs_attacker_enqueues_first=config.fcfs_attacker_enqueues_first,
        )
        result = simulate(cfg)
        if config.scheduler == "LQF":
            rates[trial] = _rate_lqf(result)
        elif config.scheduler in ("RR", "WCTDMA"):
            rates[trial], _ = _rate_busy(result, config.scheduler)
        else:
            rates[trial], frac = _rate_fcfs(result)
            exact_fracs.append(frac)

    mean = float(np.mean(rates))
    if trials >= 2:
        half = 1.96 * float(np.std(rates, ddof=1)) / math.sqrt(trials)
        ci = (mean - half, mean + half)
    else:
        ci = (math.nan, math.nan)
    h = binary_entropy(config.lam)
    ratio = mean / h if h > 0 else 0.0
    result = LeakageResult(
        scheduler=config.scheduler,
        lam=config.lam,
        leakage_bits_per_slot=mean,
        ratio=ratio,
        kind="empirical",
        ci_low=ci[0],
        ci_high=ci[1],
    )
    return EmpiricalLeakage(
        result=result,
        trial_rates=rates,
        exact_window_fraction=float(np.mean(exact_fracs)) if exact_fracs else None,
    )
