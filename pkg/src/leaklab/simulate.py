"""Slot-by-slot simulation of a two-source queue behind one scheduler.

Time is slotted and 1-indexed.  At the beginning of slot t, jobs finishing
in slot t-1 depart (their departure timestamp is t), then arrivals enter the
buffer, then the scheduler picks one job to serve during t.  A job served in
an otherwise empty system therefore has delay exactly 1.  Queue lengths
reported per slot are measured after arrivals, before service.

Two engines produce bit-identical traces: a numba-compiled kernel (default)
and a plain-Python reference built from the scheduler_step /
attacker_next_arrival contracts, kept around as a cross-check oracle.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numba
import numpy as np

from .analytic import sampling_gap_mixture

__all__ = [
    "SCHEDULERS",
    "TIE_BREAKS",
    "ATTACKERS",
    "SimConfig",
    "ArrivalTrace",
    "AttackObservation",
    "QueueTrace",
    "SimResult",
    "QueueState",
    "scheduler_step",
    "attacker_next_arrival",
    "run_simulation",
    "simulate",
    "write_trace_dump",
]

SCHEDULERS = ("FCFS", "LQF", "RR", "WCTDMA", "TDMA")
TIE_BREAKS = ("user-first", "attacker-first")
ATTACKERS = ("nonstop", "periodic", "odd-slots", "silent")

_SCHED_CODE = {name: i for i, name in enumerate(SCHEDULERS)}
_TIE_CODE = {name: i for i, name in enumerate(TIE_BREAKS)}
_ATT_CODE = {name: i for i, name in enumerate(ATTACKERS)}


@dataclass(frozen=True)
class SimConfig:
    """Full description of one run.

    ``lam`` is the user's Bernoulli arrival rate.  ``omega`` is only
    meaningful for the periodic-sampling attacker and must leave the queue
    stable (omega < 1 - lam).  The nonstop attacker against round robin and
    the odd-slots attacker are only well-defined for lam <= 0.5 (they consume
    half the service capacity).  ``lam = 0`` is accepted for degenerate
    diagnostic runs even though real experiments use lam in (0, 1).
    """

    scheduler: str
    lam: float
    horizon: int
    seed: int
    tie_break: str = "user-first"
    attacker: str = "nonstop"
    omega: float | None = None
    fcfs_attacker_enqueues_first: bool = True

    def __post_init__(self):
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {self.scheduler!r}; choose from {SCHEDULERS}")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie_break {self.tie_break!r}; choose from {TIE_BREAKS}")
        if self.attacker not in ATTACKERS:
            raise ValueError(f"unknown attacker {self.attacker!r}; choose from {ATTACKERS}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lam must be in [0, 1), got {self.lam}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.attacker == "periodic":
            if self.omega is None or not 0.0 < self.omega < 1.0 - self.lam:
                raise ValueError(
                    f"periodic sampling needs omega in (0, 1 - lam), got {self.omega}"
                )
        elif self.omega is not None:
            raise ValueError(f"omega is only meaningful for the periodic attacker")
        if self.attacker == "odd-slots" and self.lam > 0.5:
            raise ValueError("odd-slots attack requires lam <= 0.5")
        if self.attacker == "nonstop" and self.scheduler == "RR" and self.lam > 0.5:
            raise ValueError("nonstop monitoring of round robin requires lam <= 0.5")


@dataclass(frozen=True)
class ArrivalTrace:
    """The user's arrival indicator sequence over the horizon.

    ``slots[t-1]`` is 1 iff the user issued a job at the beginning of slot t.
    """

    slots: np.ndarray
    rate: float

    @property
    def horizon(self) -> int:
        return len(self.slots)


@dataclass(frozen=True)
class AttackObservation:
    """Arrival and departure slot numbers of the attacker's jobs.

    Only jobs that both arrived within the horizon and departed by slot n+1
    are kept, so the two arrays always align.
    """

    arrivals: np.ndarray
    departures: np.ndarray

    @property
    def m(self) -> int:
        return len(self.arrivals)

    def delays(self) -> np.ndarray:
        return self.departures - self.arrivals

    def service_starts(self) -> np.ndarray:
        """Earliest slot each job could be served: max(A_k, D_{k-1})."""
        prev = np.concatenate(([0], self.departures[:-1]))
        return np.maximum(self.arrivals, prev)


@dataclass(frozen=True)
class QueueTrace:
    """Per-slot user queue length (after arrivals) and cumulative count."""

    user_queue_len: np.ndarray
    cumulative_user_count: np.ndarray


@dataclass(frozen=True)
class SimResult:
    """Everything one run produced, including per-slot service bookkeeping."""

    config: SimConfig
    arrivals: ArrivalTrace
    observation: AttackObservation
    queues: QueueTrace
    served: np.ndarray  # per slot: 0 idle, 1 user, 2 attacker
    attacker_queue_len: np.ndarray
    attacker_arrival_flags: np.ndarray  # per slot, includes jobs later dropped


# --- engine kernels ---------------------------------------------------------

@numba.njit(cache=True)
def _kernel(n, sched, tie, attacker, fcfs_att_first, delta, gaps):
    a_times = np.zeros(n + 2, dtype=np.int64)
    d_times = np.zeros(n + 2, dtype=np.int64)
    q_user = np.zeros(n + 1, dtype=np.int32)
    q_att = np.zeros(n + 1, dtype=np.int32)
    served = np.zeros(n + 1, dtype=np.int8)

    ring = np.zeros(n + 2, dtype=np.int64)  # FCFS shared buffer: 0 user, k>0 attacker job k
    head = 0
    tail = 0

    u = 0  # user jobs in buffer
    a = 0  # attacker jobs in buffer
    att_next_to_serve = 1  # FIFO within the attacker's own jobs (non-FCFS policies)
    n_att = 0
    next_arrival = 1  # nonstop and periodic attackers start at slot 1
    gap_idx = 0
    last_served = 2 if tie == 0 else 1  # RR pointer; tie-break owner moves first

    for t in range(1, n + 1):
        if attacker == 0 or attacker == 1:  # nonstop, periodic
            arrive = t == next_arrival
        elif attacker == 2:  # odd-slots
            arrive = t % 2 == 1
        else:  # silent
            arrive = False

        if arrive:
            n_att += 1
            a_times[n_att] = t
            a += 1
            if attacker == 1:
                next_arrival = t + gaps[gap_idx]
                gap_idx += 1
        du = delta[t]
        u += du

        if sched == 0:  # FCFS: same-slot enqueue order is configurable
            if fcfs_att_first:
                if arrive:
                    ring[tail] = n_att
                    tail += 1
                if du == 1:
                    ring[tail] = 0
                    tail += 1
            else:
                if du == 1:
                    ring[tail] = 0
                    tail += 1
                if arrive:
                    ring[tail] = n_att
                    tail += 1

        q_user[t] = u
        q_att[t] = a

        srv = 0
        att_job = 0
        if sched == 0:  # FCFS
            if head < tail:
                tag = ring[head]
                head += 1
                if tag == 0:
                    srv = 1
                else:
                    srv = 2
                    att_job = tag
        elif sched == 1:  # LQF
            if u + a > 0:
                if u > a:
                    srv = 1
                elif a > u:
                    srv = 2
                else:
                    srv = 1 if tie == 0 else 2
        elif sched == 2:  # RR: switch away from the source just served
            if last_served == 2:
                if u > 0:
                    srv = 1
                elif a > 0:
                    srv = 2
            else:
                if a > 0:
                    srv = 2
                elif u > 0:
                    srv = 1
        elif sched == 3:  # WCTDMA: odd slots reserved for the user
            if t % 2 == 1:
                if u > 0:
                    srv = 1
                elif a > 0:
                    srv = 2
            else:
                if a > 0:
                    srv = 2
                elif u > 0:
                    srv = 1
        else:  # TDMA idles on a reserved slot whose owner has no job
            if t % 2 == 1:
                if u > 0:
                    srv = 1
            else:
                if a > 0:
                    srv = 2

        if srv == 1:
            u -= 1
            last_served = 1
        elif srv == 2:
            a -= 1
            if sched != 0:
                att_job = att_next_to_serve
                att_next_to_serve += 1
            d_times[att_job] = t + 1
            last_served = 2
            if attacker == 0:
                next_arrival = t + 1
        served[t] = srv

    return a_times, d_times, n_att, q_user, q_att, served


# --- reference engine (contract-level, used as a cross-check oracle) --------

@dataclass
class QueueState:
    """Scheduler-visible state at one slot, after arrivals."""

    user_len: int
    attacker_len: int
    rr_last_served: str  # "user" or "attacker"
    fcfs_head: str | None = None  # source at the head of the shared buffer


def scheduler_step(policy: str, tie_break: str, state: QueueState, slot: int) -> str | None:
    """Which source is served this slot: "user", "attacker", or None (idle).

    Total on valid states; the decision depends only on the policy, the
    tie-break rule, queue contents, slot parity, and the round-robin turn.
    """
    u, a = state.user_len, state.attacker_len
    if policy == "FCFS":
        return state.fcfs_head
    if policy == "LQF":
        if u + a == 0:
            return None
        if u > a:
            return "user"
        if a > u:
            return "attacker"
        return "user" if tie_break == "user-first" else "attacker"
    if policy == "RR":
        first = "user" if state.rr_last_served == "attacker" else "attacker"
        second = "attacker" if first == "user" else "user"
        for src in (first, second):
            if (u if src == "user" else a) > 0:
                return src
        return None
    if policy == "WCTDMA":
        reserved = "user" if slot % 2 == 1 else "attacker"
        other = "attacker" if reserved == "user" else "user"
        for src in (reserved, other):
            if (u if src == "user" else a) > 0:
                return src
        return None
    if policy == "TDMA":
        reserved = "user" if slot % 2 == 1 else "attacker"
        if (u if reserved == "user" else a) > 0:
            return reserved
        return None
    raise ValueError(f"unknown policy {policy!r}")


def attacker_next_arrival(
    strategy: str, slot: int, last_departure: int | None, next_planned: int | None
) -> bool:
    """Does the attacker issue a job at the beginning of this slot?

    Nonstop monitoring arrives at slot 1 and then exactly at each previous
    departure; periodic sampling follows its pre-drawn gap schedule
    (``next_planned``); the odd-slots attack fires on every odd slot.
    """
    if strategy == "nonstop":
        return slot == 1 or slot == last_departure
    if strategy == "periodic":
        return slot == next_planned
    if strategy == "odd-slots":
        return slot % 2 == 1
    if strategy == "silent":
        return False
    raise ValueError(f"unknown strategy {strategy!r}")


def _reference_engine(config: SimConfig, delta: np.ndarray, gaps: np.ndarray):
    n = config.horizon
    a_times = np.zeros(n + 2, dtype=np.int64)
    d_times = np.zeros(n + 2, dtype=np.int64)
    q_user = np.zeros(n + 1, dtype=np.int32)
    q_att = np.zeros(n + 1, dtype=np.int32)
    served = np.zeros(n + 1, dtype=np.int8)

    ring: deque = deque()
    u = a = 0
    att_fifo: deque = deque()
    n_att = 0
    last_departure: int | None = None
    next_planned = 1 if config.attacker == "periodic" else None
    gap_idx = 0
    rr_last = "attacker" if config.tie_break == "user-first" else "user"

    for t in range(1, n + 1):
        arrive = attacker_next_arrival(config.attacker, t, last_departure, next_planned)
        if arrive:
            n_att += 1
            a_times[n_att] = t
            a += 1
            att_fifo.append(n_att)
            if config.attacker == "periodic":
                next_planned = t + int(gaps[gap_idx])
                gap_idx += 1
        du = int(delta[t])
        u += du
        if config.scheduler == "FCFS":
            newcomers = []
            if config.fcfs_attacker_enqueues_first:
                if arrive:
                    newcomers.append(n_att)
                if du:
                    newcomers.append(0)
            else:
                if du:
                    newcomers.append(0)
                if arrive:
                    newcomers.append(n_att)
            ring.extend(newcomers)

        q_user[t] = u
        q_att[t] = a

        head = None
        if config.scheduler == "FCFS" and ring:
            head = "user" if ring[0] == 0 else "attacker"
        state = QueueState(u, a, rr_last, head)
        decision = scheduler_step(config.scheduler, config.tie_break, state, t)

        if decision == "user":
            u -= 1
            rr_last = "user"
            served[t] = 1
            if config.scheduler == "FCFS":
                ring.popleft()
        elif decision == "attacker":
            a -= 1
            if config.scheduler == "FCFS":
                job = ring.popleft()
                att_fifo.popleft()
            else:
                job = att_fifo.popleft()
            d_times[job] = t + 1
            last_departure = t + 1
            rr_last = "attacker"
            served[t] = 2

    return a_times, d_times, n_att, q_user, q_att, served


def _draw_inputs(config: SimConfig):
    """User arrivals and attacker gap draws come from independent streams,
    so changing the attacker never perturbs the user's trace."""
    user_ss, attacker_ss = np.random.SeedSequence(config.seed).spawn(2)
    n = config.horizon
    delta = np.zeros(n + 1, dtype=np.uint8)
    delta[1:] = np.random.default_rng(user_ss).random(n) < config.lam
    if config.attacker == "periodic":
        lo, hi, w = sampling_gap_mixture(config.omega)
        draws = np.random.default_rng(attacker_ss).random(n)
        gaps = np.where(draws < w, lo, hi).astype(np.int64)
    else:
        gaps = np.zeros(0, dtype=np.int64)
    return delta, gaps


def simulate(config: SimConfig, engine: str = "compiled") -> SimResult:
    """Run one configuration and return the full trace set.

    Deterministic given the seed; ``engine="python"`` selects the reference
    implementation (identical output, much slower).
    """
    delta, gaps = _draw_inputs(config)
    n = config.horizon
    if engine == "compiled":
        a_times, d_times, n_att, q_user, q_att, served = _kernel(
            n,
            _SCHED_CODE[config.scheduler],
            _TIE_CODE[config.tie_break],
            _ATT_CODE[config.attacker],
            config.fcfs_attacker_enqueues_first,
            delta,
            gaps,
        )
    elif engine == "python":
        a_times, d_times, n_att, q_user, q_att, served = _reference_engine(config, delta, gaps)
    else:
        raise ValueError(f"unknown engine {engine!r}")

    arrivals_all = a_times[1 : n_att + 1]
    departures_all = d_times[1 : n_att + 1]
    kept = departures_all > 0  # jobs still in the buffer at the horizon are dropped
    obs = AttackObservation(
        arrivals=arrivals_all[kept].copy(), departures=departures_all[kept].copy()
    )

    flags = np.zeros(n, dtype=np.uint8)
    flags[arrivals_all - 1] = 1

    trace = ArrivalTrace(slots=delta[1:].copy(), rate=config.lam)
    queues = QueueTrace(
        user_queue_len=q_user[1:].copy(),
        cumulative_user_count=np.cumsum(delta[1:], dtype=np.int64),
    )
    return SimResult(
        config=config,
        arrivals=trace,
        observation=obs,
        queues=queues,
        served=served[1:].copy(),
        attacker_queue_len=q_att[1:].copy(),
        attacker_arrival_flags=flags,
    )


def run_simulation(config: SimConfig, engine: str = "compiled"):
    """Simulate and return ``(ArrivalTrace, AttackObservation, QueueTrace)``."""
    result = simulate(config, engine=engine)
    return result.arrivals, result.observation, result.queues


_SERVED_CHAR = {0: "-", 1: "U", 2: "A"}


def write_trace_dump(result: SimResult, path) -> None:
    """Debug dump, one line per slot:
    ``slot,delta,attacker_arrival,served{U|A|-},q_user,q_attacker``."""
    with open(path, "w", newline="\n") as fh:
        for i in range(result.arrivals.horizon):
            fh.write(
                f"{i + 1},{result.arrivals.slots[i]},{result.attacker_arrival_flags[i]},"
                f"{_SERVED_CHAR[int(result.served[i])]},{result.queues.user_queue_len[i]},"
                f"{result.attacker_queue_len[i]}\n"
            )
