"""Closed-form entropy and leakage-rate formulas for slotted two-source queues.

All entropies are in bits (log base 2); per-slot quantities are bits per time
slot.  The functions here are pure and deterministic; the simulation-side
counterparts that verify them live in :mod:`leaklab.estimate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

__all__ = [
    "LeakageResult",
    "BusyPeriodDist",
    "DetWcBoundPoint",
    "binary_entropy",
    "alpha",
    "sampling_gap_mixture",
    "binomial_entropy",
    "conditional_arrangement_entropy",
    "optimal_sampling_entropy_rate",
    "leakage_lqf",
    "leakage_fcfs",
    "busy_period_pmf",
    "busy_period_closed_form",
    "busy_period_crosscheck",
    "leakage_rr_lower",
    "leakage_wctdma_lower",
    "detwc_root",
    "detwc_root_residual",
    "leakage_detwc_lower",
]

_LN2 = math.log(2.0)

# Mean busy-period lengths implied by the first-return chain, used as
# consistency targets by tests and the verification suite.
def rr_busy_mean(lam: float) -> float:
    """Mean round-robin busy period, 1/(1-2*lam), for lam < 0.5."""
    return 1.0 / (1.0 - 2.0 * lam)


def wctdma_busy_mean(lam: float) -> float:
    """Mean work-conserving-TDMA busy period, (2-2*lam)/(1-2*lam)."""
    return (2.0 - 2.0 * lam) / (1.0 - 2.0 * lam)


def binary_entropy(p: float) -> float:
    """Entropy of a Bernoulli(p) bit, in bits.  0*log0 is taken as 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must be in [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def sampling_gap_mixture(rate: float) -> tuple[int, int, float]:
    """Split a sampling rate into its two neighbouring integer gaps.

    Returns ``(lo, hi, weight)`` such that inter-sample gaps drawn as ``lo``
    with probability ``weight`` and ``hi`` otherwise have mean ``1/rate``.
    When ``1/rate`` is an integer the mixture degenerates: ``lo == hi`` and
    ``weight == 1``.  Integer detection uses a relative tolerance of 1e-9 so
    rates like 0.1 (whose reciprocal is not exactly representable) are
    treated as integer-gap rates.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    inv = 1.0 / rate
    nearest = round(inv)
    if abs(inv - nearest) <= 1e-9 * max(1.0, inv):
        return int(nearest), int(nearest), 1.0
    lo = math.floor(inv)
    hi = math.ceil(inv)
    return int(lo), int(hi), (hi - inv) / (hi - lo)


def alpha(eps: float) -> float:
    """Interpolation weight (ceil(1/eps) - 1/eps) / (ceil(1/eps) - floor(1/eps)).

    Defined for eps in (0, 1).  At integer 1/eps the defining fraction is
    0/0; the convention here is 1 (the gap mixture collapses to the single
    value 1/eps), which is the convention the integer-rate leakage formulas
    reduce under.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"rate must be in (0, 1), got {eps}")
    return sampling_gap_mixture(eps)[2]


def binomial_entropy(k: int, p: float) -> float:
    """Shannon entropy of Binomial(k, p) in bits, by exact PMF summation.

    The PMF is evaluated in log space (via gammaln) for numerical stability
    at large k.
    """
    if k < 1 or int(k) != k:
        raise ValueError(f"k must be a positive integer, got {k}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must be in [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    k = int(k)
    i = np.arange(k + 1)
    logpmf = (
        gammaln(k + 1)
        - gammaln(i + 1)
        - gammaln(k - i + 1)
        + i * math.log(p)
        + (k - i) * math.log1p(-p)
    )
    pmf = np.exp(logpmf)
    return float(-np.sum(pmf * logpmf) / _LN2)


def conditional_arrangement_entropy(i: int, lam: float) -> float:
    """Entropy of i Bernoulli(lam) slots given their total count, in bits.

    Equals ``i*H(lam) - H(Binomial(i, lam))``: the residual uncertainty in
    where the arrivals sit once the attacker knows how many there were.
    """
    if i < 1:
        raise ValueError(f"i must be >= 1, got {i}")
    return i * binary_entropy(lam) - binomial_entropy(i, lam)


def optimal_sampling_entropy_rate(omega: float, lam: float) -> float:
    """Best-achievable entropy per sample when probing Bernoulli(lam) at rate omega.

    Achieved by the two-gap periodic sampler; the value is the gap-mixture
    average of the binomial window entropies.  ``omega`` may be 1 (every
    slot sampled), in which case this is just the binary entropy.
    """
    lo, hi, w = sampling_gap_mixture(omega)
    if lo == hi:
        return binomial_entropy(lo, lam)
    return w * binomial_entropy(lo, lam) + (1.0 - w) * binomial_entropy(hi, lam)


@dataclass(frozen=True)
class LeakageResult:
    """Leakage rate of one (scheduler, lam) point, in bits per slot."""

    scheduler: str
    lam: float
    leakage_bits_per_slot: float
    ratio: float
    kind: str  # "exact" | "lower-bound" | "empirical"
    ci_low: float | None = None
    ci_high: float | None = None


def leakage_lqf(lam: float) -> LeakageResult:
    """Exact leakage of longest-queue-first: the full arrival entropy rate."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lam must be in (0, 1), got {lam}")
    return LeakageResult("LQF", lam, binary_entropy(lam), 1.0, "exact")


def leakage_fcfs(lam: float) -> LeakageResult:
    """Exact leakage of first-come-first-serve.

    The best attacker samples the queue at rate 1-lam, so the rate equals
    ``(1-lam)`` times the optimal per-sample entropy at that rate.  When
    1/(1-lam) is an integer this collapses to
    ``(1-lam) * H(Binomial(1/(1-lam), lam))``.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lam must be in (0, 1), got {lam}")
    bits = (1.0 - lam) * optimal_sampling_entropy_rate(1.0 - lam, lam)
    return LeakageResult("FCFS", lam, bits, bits / binary_entropy(lam), "exact")


@dataclass(frozen=True)
class BusyPeriodDist:
    """Truncated PMF of the busy period seen by a probing attacker.

    ``support_values`` are odd (round robin, B = 2s-1) or even (WC-TDMA,
    B' = 2s) according to ``scheduler``; ``probs`` aligns with it.  The
    tail beyond the computed support carries ``truncation_mass``;
    ``mean_tail_bound`` and ``entropy_tail_bound`` estimate what the tail
    could contribute to the mean and entropy (geometric-decay estimates).
    """

    scheduler: str
    lam: float
    support_values: np.ndarray
    probs: np.ndarray
    truncation_mass: float
    mean: float
    entropy: float
    mean_tail_bound: float
    entropy_tail_bound: float


def _first_return_pmf(lam: float, tail_eps: float, max_terms: int) -> tuple[np.ndarray, float]:
    """PMF of the first-return-to-empty step count s of the probe chain.

    The chain: from the empty state, step to state 1 w.p. lam, else return
    immediately; from state i >= 1, step down w.p. (1-lam)^2, stay w.p.
    2*lam*(1-lam), step up w.p. lam^2.  Computed by dynamic programming over
    step counts until the not-yet-returned mass drops below ``tail_eps``.
    Returns ``(pmf, alive)`` where ``pmf[j]`` is P(s = j+1) and ``alive`` is
    the residual mass still in flight.
    """
    down = (1.0 - lam) ** 2
    stay = 2.0 * lam * (1.0 - lam)
    up = lam * lam
    probs = [1.0 - lam]  # s = 1: immediate return
    # alive[i] = P(currently at state i+1, never returned)
    alive = np.zeros(64)
    alive[0] = lam
    alive_mass = lam
    s = 1
    while alive_mass > tail_eps and s < max_terms:
        s += 1
        probs.append(alive[0] * down)
        new = alive * stay
        new[1:] += alive[:-1] * up
        new[:-1] += alive[1:] * down
        alive = new
        alive_mass -= probs[-1]
        if alive[-1] > 1e-280:  # excursion about to outgrow the state buffer
            alive = np.concatenate([alive, np.zeros(len(alive))])
    return np.asarray(probs), max(alive_mass, 0.0)


def busy_period_pmf(
    lam: float,
    tail_eps: float = 1e-12,
    scheduler: str = "RR",
    max_terms: int = 1_000_000,
) -> BusyPeriodDist:
    """Truncated busy-period distribution from the first-return chain.

    This dynamic program over the empty/queued Markov chain is the
    authoritative computation; see :func:`busy_period_closed_form` for the
    literal closed-form evaluator it is cross-checked against.  Round-robin
    periods are ``2s - 1`` probes-and-slots long, WC-TDMA periods ``2s``.

    Requires ``lam < 0.5`` (the chain drifts back to empty only below that
    rate, which is what makes the truncation terminate).
    """
    if not 0.0 < lam < 0.5:
        raise ValueError(f"lam must be in (0, 0.5), got {lam}")
    if not 0.0 < tail_eps < 1.0:
        raise ValueError(f"tail_eps must be in (0, 1), got {tail_eps}")
    scheduler = scheduler.upper()
    if scheduler not in ("RR", "WCTDMA"):
        raise ValueError(f"scheduler must be RR or WCTDMA, got {scheduler}")

    pmf_s, tail = _first_return_pmf(lam, tail_eps, max_terms)
    s = np.arange(1, len(pmf_s) + 1)
    support = 2 * s - 1 if scheduler == "RR" else 2 * s

    nz = pmf_s > 0.0
    entropy = float(-np.sum(pmf_s[nz] * np.log2(pmf_s[nz])))
    mean = float(np.sum(support * pmf_s))

    # Tail estimates from the asymptotic per-step survival factor 4*lam*(1-lam).
    r = min(4.0 * lam * (1.0 - lam), 1.0 - 1e-12)
    s_max = len(pmf_s)
    tail_mean_s = tail * (s_max + 1.0 / (1.0 - r))
    mean_tail_bound = 2.0 * tail_mean_s  # covers both the 2s-1 and 2s mappings
    if tail > 0.0:
        # entropy of the tail <= mass * (conditional max-entropy + surprisal of the mass)
        cond_mean = 1.0 / (1.0 - r)
        q = cond_mean / (1.0 + cond_mean)
        geom_bits = binary_entropy(q) / (1.0 - q)
        entropy_tail_bound = tail * geom_bits + tail * math.log2(1.0 / tail)
    else:
        entropy_tail_bound = 0.0

    return BusyPeriodDist(
        scheduler=scheduler,
        lam=lam,
        support_values=support,
        probs=pmf_s,
        truncation_mass=tail,
        mean=mean,
        entropy=entropy,
        mean_tail_bound=mean_tail_bound,
        entropy_tail_bound=entropy_tail_bound,
    )


def busy_period_closed_form(lam: float, r: int) -> float:
    """Literal ballot-path closed form for the busy-period PMF at B = 2r - 1.

    Evaluates, verbatim,
    ``2^(r-1) * lam^(r-1) * (1-lam)^r * max{ sum_{j=1}^{floor((r-2)/2)}
    (r-2)! / ((r-2-2j)! j! (j+1)!) * 2^(-2j-1), 1 }``.

    Kept as a secondary evaluator only: with its inner sum starting at j = 1
    and the max-with-1 guard, it disagrees with the first-return dynamic
    program at small r (a factor 2 at r = 2 and r = 3); starting the sum at
    j = 0 and dropping the guard recovers the DP exactly.  Use
    :func:`busy_period_crosscheck` to see the discrepancy.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    total = 0.0
    for j in range(1, (r - 2) // 2 + 1):
        total += (
            math.factorial(r - 2)
            / (math.factorial(r - 2 - 2 * j) * math.factorial(j) * math.factorial(j + 1))
            * 2.0 ** (-2 * j - 1)
        )
    return 2.0 ** (r - 1) * lam ** (r - 1) * (1.0 - lam) ** r * max(total, 1.0)


def busy_period_crosscheck(lam: float, r_max: int = 10) -> list[dict]:
    """Compare the DP busy-period PMF against the literal closed form.

    Returns one row per r with both values and their absolute difference.
    The small-r rows are expected to disagree (documented inconsistency in
    the source formula); the DP is the ground truth used everywhere else.
    """
    dist = busy_period_pmf(lam, tail_eps=1e-14)
    rows = []
    for r in range(1, r_max + 1):
        dp = float(dist.probs[r - 1]) if r <= len(dist.probs) else 0.0
        literal = busy_period_closed_form(lam, r)
        rows.append(
            {
                "r": r,
                "busy_period": 2 * r - 1,
                "dp_pmf": dp,
                "closed_form_pmf": literal,
                "abs_diff": abs(dp - literal),
            }
        )
    return rows


def leakage_rr_lower(lam: float, tail_eps: float = 1e-12) -> LeakageResult:
    """Round-robin leakage lower bound ``(1 - 2*lam) * H(B)`` in bits/slot."""
    if not 0.0 < lam < 0.5:
        raise ValueError(f"lam must be in (0, 0.5), got {lam}")
    dist = busy_period_pmf(lam, tail_eps=tail_eps, scheduler="RR")
    bits = (1.0 - 2.0 * lam) * dist.entropy
    return LeakageResult("RR", lam, bits, bits / binary_entropy(lam), "lower-bound")


def leakage_wctdma_lower(lam: float, tail_eps: float = 1e-12) -> LeakageResult:
    """WC-TDMA leakage lower bound ``(1-2*lam)/(2-2*lam) * H(B)`` in bits/slot."""
    if not 0.0 < lam < 0.5:
        raise ValueError(f"lam must be in (0, 0.5), got {lam}")
    dist = busy_period_pmf(lam, tail_eps=tail_eps, scheduler="WCTDMA")
    bits = (1.0 - 2.0 * lam) / (2.0 - 2.0 * lam) * dist.entropy
    return LeakageResult("WCTDMA", lam, bits, bits / binary_entropy(lam), "lower-bound")


class RootBracketError(RuntimeError):
    """No sign change found while growing the bracket for the queue root."""


def detwc_root_residual(lam: float, omega: float, z: float) -> float:
    """Residual of the sampled-queue root equation, normalised by z^ceil(1/omega).

    The equation states that the generating function of the per-gap backlog
    increment equals ``z^c`` (c = ceil(1/omega)); the increment for a gap of
    g slots is ``(c - g) + 1 + Binomial(g, lam)``, so each gap contributes
    ``z^(1-g) * (1 - lam + lam*z)^g`` after the z^c normalisation.  The
    normalised form keeps residuals meaningful when the root is large.
    """
    lo, hi, w = sampling_gap_mixture(omega)
    wz = (1.0 - lam + lam * z) / z
    if lo == hi:
        return z * wz**lo - 1.0
    return w * z * wz**lo + (1.0 - w) * z * wz**hi - 1.0


def detwc_root(lam: float, omega: float) -> float:
    """Real root z0 > 1 of the sampled-queue root equation.

    ``(z0 - 1)/z0`` is the steady-state probability that a periodic-sampling
    probe at rate omega finds nothing queued ahead of it; each gap branch is
    weighted by its own gap probability, which is the form that reproduces
    simulated empty-queue frequencies.  Bracketing starts just outside 1 and
    doubles the upper end until the sign changes, then Brent's method
    polishes to residual below 1e-10.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lam must be in (0, 1), got {lam}")
    if not 0.0 < omega < 1.0 - lam:
        raise ValueError(f"omega must be in (0, 1 - lam), got {omega}")

    def g(z: float) -> float:
        return detwc_root_residual(lam, omega, z)

    lo = 1.0 + 1e-9
    if g(lo) >= 0.0:
        raise RootBracketError(
            f"no root above 1 at lam={lam}, omega={omega}: system too close to saturation"
        )
    # The root scales like lam**(-floor(1/omega)) for lightly loaded systems,
    # so the bracket cap must be generous; beyond it the empty-probability is
    # 1 to machine precision anyway and callers treat the point as degenerate.
    hi = 2.0
    while g(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e250:
            raise RootBracketError(
                f"no sign change in (1, 1e250] at lam={lam}, omega={omega}"
            )
    z0 = float(brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200))
    if abs(g(z0)) > 1e-10:
        raise RootBracketError(f"root residual {g(z0):.3e} exceeds 1e-10")
    return z0


@dataclass(frozen=True)
class DetWcBoundPoint:
    """Universal lower bound for deterministic work-conserving schedulers."""

    lam: float
    omega: float  # attacker sampling rate achieving the bound
    z0: float
    empty_prob: float  # (z0 - 1) / z0
    bound_bits_per_slot: float
    residual: float

    @property
    def ratio(self) -> float:
        return self.bound_bits_per_slot / binary_entropy(self.lam)


def leakage_detwc_lower(lam: float, grid_size: int = 512) -> DetWcBoundPoint:
    """Maximise ``omega * (z0 - 1) / (2 * z0) * H(lam)`` over the sampling rate.

    The objective is scanned on a uniform grid over (1e-3, 1 - lam - 1e-3)
    with the integer-reciprocal breakpoints added explicitly (the objective
    is smooth between them), then refined by golden-section passes around
    the best grid point.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lam must be in (0, 1), got {lam}")
    lo_edge, hi_edge = 1e-3, 1.0 - lam - 1e-3
    if hi_edge <= lo_edge:
        raise ValueError(f"lam={lam} leaves no sampling-rate room")

    def objective(om: float) -> float:
        try:
            z = detwc_root(lam, om)
        except RootBracketError:
            return -math.inf
        return om * (z - 1.0) / (2.0 * z)

    omegas = list(np.linspace(lo_edge, hi_edge, grid_size))
    m = 2
    while 1.0 / m > lo_edge:
        if 1.0 / m < hi_edge:
            omegas.append(1.0 / m)
        m += 1
    omegas = sorted(set(omegas))
    values = [objective(om) for om in omegas]
    best = int(np.argmax(values))

    # Golden-section refinement between the neighbours of the best grid point.
    a = omegas[max(best - 1, 0)]
    b = omegas[min(best + 1, len(omegas) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(48):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    candidates = [(values[best], omegas[best]), (fc, c), (fd, d)]
    best_val, best_om = max((float(v), float(om)) for v, om in candidates)

    z0 = detwc_root(lam, best_om)
    return DetWcBoundPoint(
        lam=lam,
        omega=best_om,
        z0=z0,
        empty_prob=(z0 - 1.0) / z0,
        bound_bits_per_slot=best_val * binary_entropy(lam),
        residual=detwc_root_residual(lam, best_om, z0),
    )
