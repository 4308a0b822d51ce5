"""Slotted hybrid-offloading environment.

A single edge user drains a deadline-constrained workload backlog by
splitting each time slot between RF energy harvesting, active (RF)
offloading, passive (backscatter) offloading, and concurrent local
computation.  The channel follows a finite-state Markov chain, energy
lives in a finite buffer, and the per-slot reward is processed bits per
joule spent (zeroed on a deadline miss).

All stepping is purely functional: ``step`` maps (state, action, models,
rng) to a :class:`StepOutcome` without mutating its inputs, so replaying
an rng substream reproduces a trajectory exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InfeasiblePower, InvalidAction

# Mode indices used by the discrete action space, the policies and the
# metrics. Order also defines greedy's tie-break preference.
MODE_HARVEST = 0
MODE_ACTIVE = 1
MODE_PASSIVE = 2
MODE_LOCAL = 3
MODE_NAMES = ("harvest", "active", "passive", "local")
NUM_MODES = 4

_ROW_SUM_TOL = 1e-9


# ---------------------------------------------------------------------------
# model types
# ---------------------------------------------------------------------------

@dataclass
class ChannelModel:
    """Finite-state Markov channel: power gains plus a transition matrix."""

    gains: np.ndarray                 # (num_states,), strictly increasing, > 0
    transition: np.ndarray            # (num_states, num_states), row-stochastic

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        n = self.gains.shape[0]
        if n < 1 or self.gains.ndim != 1:
            raise ConfigError("channel gains must be a non-empty vector")
        if np.any(self.gains <= 0) or np.any(np.diff(self.gains) <= 0):
            raise ConfigError("channel gains must be strictly positive and increasing")
        if self.transition.shape != (n, n):
            raise ConfigError(f"transition matrix must be {n}x{n}")
        if np.any(self.transition < 0) or np.any(self.transition > 1):
            raise ConfigError("transition entries must lie in [0, 1]")
        if np.any(np.abs(self.transition.sum(axis=1) - 1.0) > _ROW_SUM_TOL):
            raise ConfigError("transition rows must sum to 1")
        # Per-row cumulative sums; sampling one next-state is a searchsorted.
        self._cum = np.cumsum(self.transition, axis=1)
        self._cum[:, -1] = 1.0

    @property
    def num_states(self):
        return self.gains.shape[0]


@dataclass
class PhyParams:
    """Radio and CPU parameters. Rates are per slot; powers in watts."""

    hbs_tx_power: float               # HBS downlink power feeding the harvester
    harvest_efficiency: float         # RF-to-DC conversion, in (0, 1]
    noise_power: float
    bandwidth: float                  # Hz
    active_rate: float                # bits per slot, held fixed (power adapts)
    passive_rate: float               # bits per slot
    passive_circuit_power: float      # backscatter circuit draw while reflecting
    local_cpu_rate: float             # bits per slot
    local_energy_per_bit: float       # joules per bit computed locally
    max_active_tx_power: float

    def __post_init__(self):
        if not 0 < self.harvest_efficiency <= 1:
            raise ConfigError("harvest_efficiency must lie in (0, 1]")
        for name in ("hbs_tx_power", "noise_power", "bandwidth", "active_rate",
                     "passive_rate", "passive_circuit_power", "local_cpu_rate",
                     "local_energy_per_bit", "max_active_tx_power"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.passive_rate >= self.active_rate:
            raise ConfigError("passive_rate must be below active_rate")


@dataclass
class AmbientPowerModel:
    """Random ambient RF power density (watts) incident on the harvester."""

    mean_density: float
    kind: str = "constant"            # constant | uniform | exponential
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.mean_density < 0:
            raise ConfigError("ambient mean_density must be nonnegative")
        if self.kind == "uniform":
            if self.low < 0 or self.high < self.low:
                raise ConfigError("uniform ambient needs 0 <= low <= high")
            if abs(0.5 * (self.low + self.high) - self.mean_density) > 1e-9 * max(1.0, self.mean_density):
                raise ConfigError("uniform ambient bounds must average to mean_density")
        elif self.kind not in ("constant", "exponential"):
            raise ConfigError(f"unknown ambient distribution '{self.kind}'")

    @classmethod
    def constant(cls, mean):
        return cls(mean_density=mean, kind="constant")

    @classmethod
    def uniform(cls, low, high):
        return cls(mean_density=0.5 * (low + high), kind="uniform", low=low, high=high)

    @classmethod
    def exponential(cls, mean):
        return cls(mean_density=mean, kind="exponential")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.mean_density
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high)
        return rng.exponential(self.mean_density)


@dataclass
class WorkloadModel:
    """Per-slot workload arrivals with a hard completion deadline."""

    deadline_slots: int               # D: service slots before a task expires
    kind: str = "constant"            # constant | uniform
    arrival_bits: float = 0.0         # constant value, or unused for uniform
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.deadline_slots < 1:
            raise ConfigError("deadline_slots must be >= 1")
        if self.kind == "constant":
            if self.arrival_bits < 0:
                raise ConfigError("arrival_bits must be nonnegative")
        elif self.kind == "uniform":
            if self.low < 0 or self.high < self.low:
                raise ConfigError("uniform arrivals need 0 <= low <= high")
        else:
            raise ConfigError(f"unknown workload distribution '{self.kind}'")

    @classmethod
    def constant(cls, bits, deadline_slots):
        return cls(deadline_slots=deadline_slots, kind="constant", arrival_bits=bits)

    @classmethod
    def uniform(cls, low, high, deadline_slots):
        return cls(deadline_slots=deadline_slots, kind="uniform", low=low, high=high)

    def sample_arrival(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.arrival_bits
        return rng.uniform(self.low, self.high)

    @property
    def mean_arrival(self) -> float:
        if self.kind == "constant":
            return self.arrival_bits
        return 0.5 * (self.low + self.high)

    @property
    def max_arrival(self) -> float:
        if self.kind == "constant":
            return self.arrival_bits
        return self.high


@dataclass
class EnvModels:
    """Bundle of all environment models plus slot-level constants."""

    channel: ChannelModel
    phy: PhyParams
    ambient: AmbientPowerModel
    workload: WorkloadModel
    slot_seconds: float = 1.0
    capacity: float = 0.5             # energy buffer, joules
    initial_energy: float = 0.25
    horizon_slots: int = 200          # episode length; terminal at horizon only
    reward_eps: float = 1e-6          # energy floor in the reward denominator
    reward_norm: float = 1e-4         # scales bits/joule into roughly [0, 10]

    def __post_init__(self):
        if self.slot_seconds <= 0 or self.capacity <= 0:
            raise ConfigError("slot_seconds and capacity must be positive")
        if not 0 <= self.initial_energy <= self.capacity:
            raise ConfigError("initial_energy must lie in [0, capacity]")
        if self.horizon_slots < 1:
            raise ConfigError("horizon_slots must be >= 1")
        # The backscatter circuit must be the cheapest radio at every channel
        # state, otherwise the passive mode loses its reason to exist.
        for g in self.channel.gains:
            try:
                p = active_tx_power(self.phy, float(g), self.slot_seconds)
            except InfeasiblePower:
                continue
            if self.phy.passive_circuit_power >= p:
                raise ConfigError(
                    f"passive_circuit_power {self.phy.passive_circuit_power} not below "
                    f"active tx power {p:.6g} at gain {g}")
        # Feature scaling for the backlog: D slots of worst-case arrivals.
        self.backlog_norm = max(
            self.workload.deadline_slots * max(self.workload.max_arrival, 1.0), 1.0)


@dataclass
class ActionAllocation:
    """Sub-slot time shares plus the concurrent local-compute share."""

    t_h: float = 0.0
    t_a: float = 0.0
    t_p: float = 0.0
    l_loc: float = 0.0

    def validate(self):
        for name in ("t_h", "t_a", "t_p", "l_loc"):
            v = getattr(self, name)
            if not (-1e-9 <= v <= 1.0 + 1e-9) or math.isnan(v):
                raise InvalidAction(f"{name}={v} outside [0, 1]")
        if self.t_h + self.t_a + self.t_p > 1.0 + 1e-9:
            raise InvalidAction(
                f"radio shares sum to {self.t_h + self.t_a + self.t_p:.6g} > 1")

    def as_tuple(self):
        return (self.t_h, self.t_a, self.t_p, self.l_loc)


@dataclass
class EnvState:
    """MDP state: channel index, buffered energy, backlog, slot counter.

    ``backlog`` is a list of ``[bits_remaining, slots_until_deadline]``
    pairs ordered oldest-deadline-first.
    """

    channel_state: int
    energy: float
    backlog: list
    slot_index: int = 0

    def total_backlog(self) -> float:
        return sum(item[0] for item in self.backlog)

    def min_deadline(self):
        return min((item[1] for item in self.backlog), default=None)


@dataclass
class StepOutcome:
    next_state: EnvState
    reward: float
    processed_bits: float
    energy_spent: float
    energy_harvested: float
    outage: bool
    allocation_executed: ActionAllocation
    bits_active: float = 0.0
    bits_passive: float = 0.0
    bits_local: float = 0.0


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------

def channel_step(model: ChannelModel, s: int, rng: np.random.Generator) -> int:
    """Draw the next channel state from row ``s`` of the transition matrix."""
    if not 0 <= s < model.num_states:
        raise ConfigError(f"channel state {s} out of range")
    u = rng.random()
    row = model._cum[s]
    # Tiny row: linear scan beats searchsorted's call overhead.
    for j in range(row.shape[0]):
        if u < row[j]:
            return j
    return row.shape[0] - 1


def harvest_energy(phy: PhyParams, gain: float, ambient: float, t_h: float,
                   slot_seconds: float) -> float:
    """Joules collected during the harvesting sub-slot."""
    return phy.harvest_efficiency * (phy.hbs_tx_power * gain + ambient) * t_h * slot_seconds


def active_tx_power(phy: PhyParams, gain: float, slot_seconds: float = 1.0) -> float:
    """Transmit power (W) that sustains the fixed active rate at this gain.

    Inverts Shannon capacity for the configured bandwidth; raises
    :class:`InfeasiblePower` when the deep-fade requirement exceeds the
    transmit power cap (callers treat active as unavailable then).
    """
    rate_hz = phy.active_rate / slot_seconds / phy.bandwidth
    p = phy.noise_power * (2.0 ** rate_hz - 1.0) / gain
    if p > phy.max_active_tx_power:
        raise InfeasiblePower(
            f"required {p:.6g} W exceeds cap {phy.max_active_tx_power} W at gain {gain}")
    return p


def reward(processed_bits: float, energy_spent: float, outage: bool,
           eps: float = 1e-6, norm: float = 1e-4) -> float:
    """Energy efficiency of the slot: processed bits per joule, zero on outage."""
    if outage:
        return 0.0
    return processed_bits / (energy_spent + eps) * norm


def step(state: EnvState, action: ActionAllocation, models: EnvModels,
         rng: np.random.Generator) -> StepOutcome:
    """Execute one slot. Pure: returns a fresh state, inputs untouched.

    Order of effects: harvest (ambient sampled), energy-budget truncation
    (active, then passive, then local), backlog drain oldest-first,
    deadline decrement with outage check, arrival append, buffer update,
    channel transition.
    """
    action.validate()
    phy = models.phy
    dt = models.slot_seconds
    gain = float(models.channel.gains[state.channel_state])

    ambient = models.ambient.sample(rng)
    harvested = harvest_energy(phy, gain, ambient, action.t_h, dt)
    available = state.energy + harvested

    # Deep fade: active offloading is a zero-bit no-op at zero energy cost.
    try:
        p_active = active_tx_power(phy, gain, dt)
        t_a = action.t_a
    except InfeasiblePower:
        p_active = 0.0
        t_a = 0.0
    t_p = action.t_p

    backlog_bits = state.total_backlog()
    local_attempt = min(phy.local_cpu_rate * action.l_loc, backlog_bits)

    # Truncate in the fixed order active -> passive -> local until the
    # demanded energy fits inside buffer + fresh harvest. Cuts happen in
    # energy units so the executed total never overshoots the budget.
    e_active = p_active * t_a * dt
    e_passive = phy.passive_circuit_power * t_p * dt
    e_local = phy.local_energy_per_bit * local_attempt
    over = e_active + e_passive + e_local - available
    if over > 0.0:
        cut = min(e_active, over)
        e_active -= cut
        over -= cut
        if over > 0.0:
            cut = min(e_passive, over)
            e_passive -= cut
            over -= cut
        if over > 0.0:
            e_local = max(0.0, e_local - over)
        t_a = e_active / (p_active * dt) if p_active > 0.0 else 0.0
        t_p = e_passive / (phy.passive_circuit_power * dt)
        local_attempt = e_local / phy.local_energy_per_bit

    spent = e_active + e_passive + e_local
    executed = ActionAllocation(
        t_h=action.t_h, t_a=t_a, t_p=t_p,
        l_loc=local_attempt / phy.local_cpu_rate if phy.local_cpu_rate > 0 else 0.0)

    # Drain the backlog oldest-deadline-first; attribute bits in the same
    # fixed order as truncation. Local energy was charged on the attempt,
    # so bits it finds already drained are simply wasted effort.
    capacity_by_mode = (phy.active_rate * t_a, phy.passive_rate * t_p, local_attempt)
    remaining = backlog_bits
    drained = [0.0, 0.0, 0.0]
    for i, cap in enumerate(capacity_by_mode):
        take = min(cap, remaining)
        drained[i] = take
        remaining -= take
    processed = drained[0] + drained[1] + drained[2]

    new_backlog = []
    to_remove = processed
    for bits, deadline in state.backlog:
        if to_remove >= bits:
            to_remove -= bits
            continue
        new_backlog.append([bits - to_remove, deadline])
        to_remove = 0.0

    # Deadlines tick after service; expiring tasks are dropped and zero the
    # slot's reward.
    outage = False
    ticked = []
    for bits, deadline in new_backlog:
        deadline -= 1
        if deadline <= 0:
            outage = True
        else:
            ticked.append([bits, deadline])

    arrival = models.workload.sample_arrival(rng)
    if arrival > 0.0:
        ticked.append([arrival, models.workload.deadline_slots])

    energy_next = min(models.capacity, max(0.0, state.energy + harvested - spent))
    next_state = EnvState(
        channel_state=channel_step(models.channel, state.channel_state, rng),
        energy=energy_next,
        backlog=ticked,
        slot_index=state.slot_index + 1)

    return StepOutcome(
        next_state=next_state,
        reward=reward(processed, spent, outage, models.reward_eps, models.reward_norm),
        processed_bits=processed,
        energy_spent=spent,
        energy_harvested=harvested,
        outage=outage,
        allocation_executed=executed,
        bits_active=drained[0],
        bits_passive=drained[1],
        bits_local=drained[2])


def encode_state(state: EnvState, models: EnvModels) -> np.ndarray:
    """Fixed-length feature vector for the function approximators.

    One-hot channel state, normalized energy, normalized total backlog,
    and the tightest deadline over D (1.0 when the backlog is empty).
    """
    n = models.channel.num_states
    out = np.zeros(n + 3)
    out[state.channel_state] = 1.0
    out[n] = state.energy / models.capacity
    out[n + 1] = min(state.total_backlog() / models.backlog_norm, 2.0)
    md = state.min_deadline()
    out[n + 2] = 1.0 if md is None else md / models.workload.deadline_slots
    return out


def feature_length(models: EnvModels) -> int:
    return models.channel.num_states + 3


def stationary_distribution(transition: np.ndarray, tol: float = 1e-12,
                            max_iter: int = 10000) -> np.ndarray:
    """Stationary row vector of a row-stochastic matrix, by power iteration."""
    n = transition.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ transition
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    return pi


def reset(models: EnvModels, rng: np.random.Generator) -> EnvState:
    """Fresh episode state: stationary channel draw, one pending arrival."""
    pi = stationary_distribution(models.channel.transition)
    u = rng.random()
    s = int(np.searchsorted(np.cumsum(pi), u))
    s = min(s, models.channel.num_states - 1)
    backlog = []
    arrival = models.workload.sample_arrival(rng)
    if arrival > 0.0:
        backlog.append([arrival, models.workload.deadline_slots])
    return EnvState(channel_state=s, energy=models.initial_energy,
                    backlog=backlog, slot_index=0)


def quantize_action(mode_index: int, K: int, sub_slot_position: int) -> ActionAllocation:
    """Allocation putting exactly 1/K of the slot into one mode."""
    if K < 1:
        raise InvalidAction(f"K={K} must be >= 1")
    if not 0 <= sub_slot_position < K:
        raise InvalidAction(f"sub-slot position {sub_slot_position} outside [0, {K})")
    share = 1.0 / K
    if mode_index == MODE_HARVEST:
        return ActionAllocation(t_h=share)
    if mode_index == MODE_ACTIVE:
        return ActionAllocation(t_a=share)
    if mode_index == MODE_PASSIVE:
        return ActionAllocation(t_p=share)
    if mode_index == MODE_LOCAL:
        return ActionAllocation(l_loc=share)
    raise InvalidAction(f"unknown mode index {mode_index}")


# ---------------------------------------------------------------------------
# stepping wrappers
# ---------------------------------------------------------------------------

class SubSlotEnv:
    """Per-sub-slot decision surface over the slot-level MDP.

    Each slot is split into K equal sub-slots; the agent commits one mode
    per sub-slot and the accumulated allocation executes when the K-th
    commitment lands. Intermediate decisions earn zero reward; the slot
    reward arrives with the final sub-slot. Features are the encoded slot
    state plus the four within-slot committed shares.
    """

    def __init__(self, models: EnvModels, K: int, rng: np.random.Generator):
        if K < 1:
            raise ConfigError("K must be >= 1")
        self.models = models
        self.K = K
        self.rng = rng
        self.state = None
        self._counts = [0, 0, 0, 0]

    @property
    def feature_dim(self) -> int:
        return feature_length(self.models) + NUM_MODES

    def reset(self) -> np.ndarray:
        self.state = reset(self.models, self.rng)
        self._counts = [0, 0, 0, 0]
        return self.features()

    def features(self) -> np.ndarray:
        base = encode_state(self.state, self.models)
        shares = np.asarray(self._counts, dtype=float) / self.K
        return np.concatenate([base, shares])

    def commit(self, mode_index: int):
        """Commit one sub-slot to ``mode_index``.

        Returns ``(reward, slot_done, episode_done, outcome)`` where
        ``outcome`` is the slot's :class:`StepOutcome` when it executed,
        else None.
        """
        if not 0 <= mode_index < NUM_MODES:
            raise InvalidAction(f"unknown mode index {mode_index}")
        self._counts[mode_index] += 1
        if sum(self._counts) < self.K:
            return 0.0, False, False, None
        alloc = ActionAllocation(
            t_h=self._counts[MODE_HARVEST] / self.K,
            t_a=self._counts[MODE_ACTIVE] / self.K,
            t_p=self._counts[MODE_PASSIVE] / self.K,
            l_loc=self._counts[MODE_LOCAL] / self.K)
        outcome = step(self.state, alloc, self.models, self.rng)
        self.state = outcome.next_state
        self._counts = [0, 0, 0, 0]
        episode_done = self.state.slot_index >= self.models.horizon_slots
        return outcome.reward, True, episode_done, outcome

    @property
    def committed_counts(self):
        return tuple(self._counts)


class SlotEnv:
    """Slot-level stepping surface for continuous-action agents."""

    def __init__(self, models: EnvModels, rng: np.random.Generator):
        self.models = models
        self.rng = rng
        self.state = None

    @property
    def feature_dim(self) -> int:
        return feature_length(self.models)

    def reset(self) -> np.ndarray:
        self.state = reset(self.models, self.rng)
        return encode_state(self.state, self.models)

    def step(self, action: ActionAllocation):
        """Returns ``(features, reward, episode_done, outcome)``."""
        outcome = step(self.state, action, self.models, self.rng)
        self.state = outcome.next_state
        done = self.state.slot_index >= self.models.horizon_slots
        return encode_state(self.state, self.models), outcome.reward, done, outcome


# ---------------------------------------------------------------------------
# calibrated defaults
# ---------------------------------------------------------------------------

DEFAULT_GAINS = (0.2, 0.5, 1.0, 2.0)


def default_transition(num_states: int, stay: float = 0.6) -> np.ndarray:
    """Birth-death chain: ``stay`` self-loop, rest split between neighbours."""
    move = 1.0 - stay
    P = np.zeros((num_states, num_states))
    for i in range(num_states):
        P[i, i] = stay
        neighbours = [j for j in (i - 1, i + 1) if 0 <= j < num_states]
        for j in neighbours:
            P[i, j] = move / len(neighbours)
    return P


def default_models(ambient_mean: float = 1.0) -> EnvModels:
    """Environment defaults used by the experiment harness.

    Calibrated so that passive offloading is the cheapest bits-per-joule
    option but rate-limited below the arrival rate (meeting a deadline
    takes an active top-up), active offloading is fast but power-hungry
    (and infeasible in the deepest fade), and the harvest budget at low
    ambient density cannot sustain an active-heavy schedule.
    """
    channel = ChannelModel(gains=np.array(DEFAULT_GAINS),
                           transition=default_transition(len(DEFAULT_GAINS)))
    phy = PhyParams(
        hbs_tx_power=0.01,
        harvest_efficiency=0.6,
        noise_power=2.6e-3,
        bandwidth=1000.0,
        active_rate=6000.0,
        passive_rate=1600.0,
        passive_circuit_power=2e-2,
        local_cpu_rate=1000.0,
        local_energy_per_bit=4e-5,
        max_active_tx_power=0.35)
    ambient = AmbientPowerModel.uniform(0.5 * ambient_mean, 1.5 * ambient_mean)
    workload = WorkloadModel.uniform(1400.0, 3400.0, deadline_slots=2)
    return EnvModels(channel=channel, phy=phy, ambient=ambient, workload=workload)
