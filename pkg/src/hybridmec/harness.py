"""Experiment configuration, seeded runs, sweeps, and CSV reporting.

A run is fully described by an :class:`ExperimentConfig` plus one seed.
Training happens first (learners only; the fixed policies just act),
then a greedy evaluation phase with exploration switched off. Per-slot
metrics cover both phases; the converged summary covers evaluation
only. Everything downstream of ``(config, seed)`` is deterministic.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from hybridmec import env as env_mod
from hybridmec import policies
from hybridmec.agents import DDPGAgent, DDPGConfig, DQNAgent, DQNConfig
from hybridmec.env import (
    ActionAllocation,
    AmbientPowerModel,
    ChannelModel,
    EnvModels,
    PhyParams,
    SlotEnv,
    SubSlotEnv,
    WorkloadModel,
    default_transition,
)
from hybridmec.errors import ConfigError, EmptyInput

AGENT_KINDS = ("hybrid_dqn", "hybrid_ddqn", "hybrid_dueling", "hybrid_ddpg",
               "active_offload", "greedy", "random")
LEARNER_KINDS = ("hybrid_dqn", "hybrid_ddqn", "hybrid_dueling", "hybrid_ddpg",
                 "active_offload")

METRICS_HEADER = ("run_id,seed,slot,episode,reward,outage,energy_j,"
                  "backlog_bits,t_h,t_a,t_p,l_loc,bits_active,bits_passive,"
                  "bits_local")
SUMMARY_HEADER = ("config_id,agent,param_name,param_value,mean_reward,"
                  "std_reward,outage_rate,frac_active,frac_passive,"
                  "frac_local")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Flat bag of every knob a run can turn.

    Field names double as the config-file keys; the shipped README
    lists them all. Tuples are written as comma-separated values.
    """

    # channel
    channel_gains: tuple = (0.2, 0.5, 1.0, 2.0)
    channel_stay: float = 0.6
    # radio and compute physics
    hbs_tx_power: float = 0.01
    harvest_efficiency: float = 0.6
    noise_power: float = 2.6e-3
    bandwidth: float = 1000.0
    active_rate: float = 6000.0
    passive_rate: float = 1600.0
    passive_circuit_power: float = 2e-2
    local_cpu_rate: float = 1000.0
    local_energy_per_bit: float = 4e-5
    max_active_tx_power: float = 0.35
    # slot bookkeeping
    slot_seconds: float = 1.0
    capacity: float = 0.5
    initial_energy: float = 0.25
    horizon_slots: int = 200
    reward_eps: float = 1e-6
    reward_norm: float = 1e-4
    # exogenous processes
    ambient_kind: str = "uniform"      # constant | uniform | exponential
    ambient_mean_density: float = 1.0
    arrival_kind: str = "uniform"      # constant | uniform
    arrival_bits: float = 2400.0
    arrival_spread: float = 1000.0     # uniform half-width around arrival_bits
    deadline_slots: int = 2
    # run shape
    agent: str = "hybrid_dqn"
    K: int = 4
    training_slots: int = 12_000
    eval_slots: int = 3_000
    seeds: tuple = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    out_dir: str = "runs"
    # discrete learner knobs
    hidden: tuple = (64, 64)
    gamma: float = 0.95
    lr: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 50_000
    warmup: int = 500
    train_every: int = 1
    target_sync: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.6        # of training decisions
    per: bool = True
    per_alpha: float = 0.6
    per_beta0: float = 0.4
    per_beta_frac: float = 0.6         # of training gradient steps
    per_eps: float = 1e-3
    # continuous learner knobs
    actor_lr: float = 2e-4
    critic_lr: float = 1e-3
    tau: float = 0.005
    noise_start: float = 0.2
    noise_end: float = 0.02
    noise_decay_frac: float = 0.6      # of training slots
    ddpg_updates_per_slot: int = 2

    def __post_init__(self):
        self.channel_gains = tuple(float(g) for g in self.channel_gains)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"agent must be one of {AGENT_KINDS}, "
                              f"got '{self.agent}'")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.training_slots < 1:
            raise ConfigError("training_slots must be positive")
        if self.eval_slots < 0:
            raise ConfigError("eval_slots must be nonnegative")
        for name in ("eps_start", "eps_end", "per_alpha", "per_beta0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("eps_decay_frac", "per_beta_frac", "noise_decay_frac",
                     "tau"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        for name in ("lr", "actor_lr", "critic_lr", "slot_seconds",
                     "bandwidth", "active_rate", "passive_rate",
                     "local_cpu_rate", "capacity"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.arrival_spread <= self.arrival_bits:
            raise ConfigError("arrival_spread must lie in [0, arrival_bits]")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("need buffer_capacity >= batch_size >= 1")
        if self.train_every < 1 or self.target_sync < 1:
            raise ConfigError("train_every and target_sync must be >= 1")
        if self.ddpg_updates_per_slot < 1:
            raise ConfigError("ddpg_updates_per_slot must be >= 1")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden must be a nonempty tuple of sizes")
        if self.agent == "hybrid_dueling" and len(self.hidden) < 2:
            raise ConfigError("hybrid_dueling needs at least two hidden sizes")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    default = _FIELDS[key].default
    if isinstance(default, tuple) or key in ("channel_gains", "hidden", "seeds"):
        default = _FIELDS[key].default
        elem = int if key in ("hidden", "seeds") else float
        parts = [p for p in raw.replace(",", " ").split() if p]
        try:
            return tuple(elem(p) for p in parts)
        except ValueError:
            raise ConfigError(f"key '{key}': cannot parse '{raw}' as a "
                              f"{elem.__name__} list") from None
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"key '{key}': expected a boolean, got '{raw}'")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key '{key}': expected an integer, "
                              f"got '{raw}'") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key '{key}': expected a number, "
                              f"got '{raw}'") from None
    return raw


def parse_config(path) -> ExperimentConfig:
    """Read a flat ``key = value`` file; unknown keys are an error."""
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got '{line}'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            overrides[key] = _coerce(key, value)
    return ExperimentConfig(**overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render a config as the same text format parse_config reads."""
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            rendered = ",".join(repr(x) for x in v)
        elif isinstance(v, bool):
            rendered = "true" if v else "false"
        else:
            rendered = repr(v) if not isinstance(v, str) else v
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def build_models(cfg: ExperimentConfig) -> EnvModels:
    channel = ChannelModel(
        gains=np.asarray(cfg.channel_gains, dtype=float),
        transition=default_transition(len(cfg.channel_gains), cfg.channel_stay))
    phy = PhyParams(
        hbs_tx_power=cfg.hbs_tx_power,
        harvest_efficiency=cfg.harvest_efficiency,
        noise_power=cfg.noise_power,
        bandwidth=cfg.bandwidth,
        active_rate=cfg.active_rate,
        passive_rate=cfg.passive_rate,
        passive_circuit_power=cfg.passive_circuit_power,
        local_cpu_rate=cfg.local_cpu_rate,
        local_energy_per_bit=cfg.local_energy_per_bit,
        max_active_tx_power=cfg.max_active_tx_power)
    if cfg.ambient_kind == "constant":
        ambient = AmbientPowerModel.constant(cfg.ambient_mean_density)
    elif cfg.ambient_kind == "uniform":
        ambient = AmbientPowerModel.uniform(0.5 * cfg.ambient_mean_density,
                                            1.5 * cfg.ambient_mean_density)
    elif cfg.ambient_kind == "exponential":
        ambient = AmbientPowerModel.exponential(cfg.ambient_mean_density)
    else:
        raise ConfigError(f"unknown ambient_kind '{cfg.ambient_kind}'")
    if cfg.arrival_kind == "constant":
        workload = WorkloadModel.constant(cfg.arrival_bits, cfg.deadline_slots)
    elif cfg.arrival_kind == "uniform":
        workload = WorkloadModel.uniform(cfg.arrival_bits - cfg.arrival_spread,
                                         cfg.arrival_bits + cfg.arrival_spread,
                                         cfg.deadline_slots)
    else:
        raise ConfigError(f"unknown arrival_kind '{cfg.arrival_kind}'")
    return EnvModels(channel=channel, phy=phy, ambient=ambient,
                     workload=workload, slot_seconds=cfg.slot_seconds,
                     capacity=cfg.capacity, initial_energy=cfg.initial_energy,
                     horizon_slots=cfg.horizon_slots,
                     reward_eps=cfg.reward_eps, reward_norm=cfg.reward_norm)


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

@dataclass
class MetricsRow:
    run_id: str
    seed: int
    slot: int
    episode: int
    reward: float
    outage: int
    energy_j: float
    backlog_bits: float
    t_h: float
    t_a: float
    t_p: float
    l_loc: float
    bits_active: float
    bits_passive: float
    bits_local: float


@dataclass
class SummaryRow:
    config_id: str
    agent: str
    param_name: str
    param_value: float
    mean_reward: float
    std_reward: float
    outage_rate: float
    frac_active: float
    frac_passive: float
    frac_local: float


@dataclass
class RunResult:
    run_id: str
    config_id: str
    seed: int
    agent: str
    param_name: str
    param_value: float
    rows: list = field(default_factory=list)
    summary: SummaryRow | None = None


def _make_ids(cfg, seed, param_name, param_value):
    if param_name == "default":
        config_id = f"{cfg.agent}-default"
    else:
        config_id = f"{cfg.agent}-{param_name}{param_value:g}"
    return f"{config_id}-s{seed}", config_id


def _summarize_eval(run_id, cfg, eval_rows, param_name, param_value):
    rewards = np.array([r.reward for r in eval_rows])
    outages = np.array([r.outage for r in eval_rows], dtype=float)
    bits = np.array([[r.bits_active, r.bits_passive, r.bits_local]
                     for r in eval_rows])
    totals = bits.sum(axis=0)
    grand = totals.sum()
    fracs = totals / grand if grand > 0 else np.zeros(3)
    return SummaryRow(
        config_id=run_id.rsplit("-s", 1)[0],
        agent=cfg.agent,
        param_name=param_name,
        param_value=float(param_value),
        mean_reward=float(rewards.mean()),
        std_reward=float(rewards.std()),
        outage_rate=float(outages.mean()),
        frac_active=float(fracs[0]),
        frac_passive=float(fracs[1]),
        frac_local=float(fracs[2]))


# ---------------------------------------------------------------------------
# experiment execution
# ---------------------------------------------------------------------------

def _discrete_spec(cfg: ExperimentConfig, feature_dim: int) -> DQNConfig:
    decisions = cfg.training_slots * cfg.K
    mask = (policies.NO_BACKSCATTER if cfg.agent == "active_offload"
            else policies.FULL_HYBRID)
    return DQNConfig(
        feature_dim=feature_dim,
        mask=mask,
        hidden=cfg.hidden,
        gamma=cfg.gamma,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        buffer_capacity=cfg.buffer_capacity,
        warmup=cfg.warmup,
        train_every=cfg.train_every,
        target_sync=cfg.target_sync,
        eps_start=cfg.eps_start,
        eps_end=cfg.eps_end,
        eps_decay_steps=max(1, int(cfg.eps_decay_frac * decisions)),
        double=cfg.agent in ("hybrid_ddqn", "hybrid_dueling"),
        dueling=cfg.agent == "hybrid_dueling",
        per=cfg.per,
        per_alpha=cfg.per_alpha,
        per_beta0=cfg.per_beta0,
        per_beta_steps=max(1, int(cfg.per_beta_frac * decisions
                                  / cfg.train_every)),
        per_eps=cfg.per_eps)


def _run_subslot(cfg, models, seed, param_name, param_value):
    rng = np.random.default_rng(seed)
    sub = SubSlotEnv(models, K=cfg.K, rng=rng)
    run_id, config_id = _make_ids(cfg, seed, param_name, param_value)

    learner = None
    if cfg.agent in LEARNER_KINDS:
        learner = DQNAgent(_discrete_spec(cfg, sub.feature_dim), rng)
        choose = None
    elif cfg.agent == "greedy":
        pol = policies.GreedyPolicy(models)
        choose = lambda feats, training: pol.select(sub)
    else:
        pol = policies.RandomPolicy()
        choose = lambda feats, training: pol.select(sub, rng)

    rows = []
    slot_idx = 0
    episode = 0
    feats = sub.reset()
    for phase_slots, training in ((cfg.training_slots, True),
                                  (cfg.eval_slots, False)):
        for _ in range(phase_slots):
            outcome = None
            for _k in range(cfg.K):
                if learner is not None:
                    a = learner.act(feats, explore=training)
                else:
                    a = choose(feats, training)
                r, _slot_done, ep_done, oc = sub.commit(a)
                feats2 = sub.features()
                if learner is not None and training:
                    learner.observe(feats, a, r, feats2, ep_done)
                feats = feats2
                if oc is not None:
                    outcome = oc
            al = outcome.allocation_executed
            rows.append(MetricsRow(
                run_id=run_id, seed=seed, slot=slot_idx, episode=episode,
                reward=outcome.reward, outage=int(outcome.outage),
                energy_j=outcome.next_state.energy,
                backlog_bits=outcome.next_state.total_backlog(),
                t_h=al.t_h, t_a=al.t_a, t_p=al.t_p, l_loc=al.l_loc,
                bits_active=outcome.bits_active,
                bits_passive=outcome.bits_passive,
                bits_local=outcome.bits_local))
            slot_idx += 1
            if outcome.next_state.slot_index >= models.horizon_slots:
                episode += 1
                feats = sub.reset()
    return run_id, config_id, rows


def _run_slotwise(cfg, models, seed, param_name, param_value):
    rng = np.random.default_rng(seed)
    slot_env = SlotEnv(models, rng)
    run_id, config_id = _make_ids(cfg, seed, param_name, param_value)
    ddpg_cfg = DDPGConfig(
        feature_dim=slot_env.feature_dim,
        hidden=cfg.hidden,
        gamma=cfg.gamma,
        actor_lr=cfg.actor_lr,
        critic_lr=cfg.critic_lr,
        tau=cfg.tau,
        batch_size=cfg.batch_size,
        buffer_capacity=cfg.buffer_capacity,
        warmup=cfg.warmup,
        noise_start=cfg.noise_start,
        noise_end=cfg.noise_end,
        noise_decay_steps=max(1, int(cfg.noise_decay_frac
                                     * cfg.training_slots)),
        updates_per_step=cfg.ddpg_updates_per_slot)
    agent = DDPGAgent(ddpg_cfg, rng)

    rows = []
    slot_idx = 0
    episode = 0
    feats = slot_env.reset()
    for phase_slots, training in ((cfg.training_slots, True),
                                  (cfg.eval_slots, False)):
        for _ in range(phase_slots):
            a = agent.act(feats, explore=training)
            alloc = ActionAllocation(t_h=float(a[0]), t_a=float(a[1]),
                                     t_p=float(a[2]), l_loc=float(a[3]))
            feats2, r, done, outcome = slot_env.step(alloc)
            if training:
                agent.observe(feats, a, r, feats2, done)
            feats = feats2
            al = outcome.allocation_executed
            rows.append(MetricsRow(
                run_id=run_id, seed=seed, slot=slot_idx, episode=episode,
                reward=outcome.reward, outage=int(outcome.outage),
                energy_j=outcome.next_state.energy,
                backlog_bits=outcome.next_state.total_backlog(),
                t_h=al.t_h, t_a=al.t_a, t_p=al.t_p, l_loc=al.l_loc,
                bits_active=outcome.bits_active,
                bits_passive=outcome.bits_passive,
                bits_local=outcome.bits_local))
            slot_idx += 1
            if done:
                episode += 1
                feats = slot_env.reset()
    return run_id, config_id, rows


def run_experiment(cfg: ExperimentConfig, seed: int,
                   param_name: str = "default",
                   param_value: float = 0.0) -> RunResult:
    """Train (learners only) then evaluate greedily; fully seeded."""
    models = build_models(cfg)
    if cfg.agent == "hybrid_ddpg":
        run_id, config_id, rows = _run_slotwise(cfg, models, seed,
                                                param_name, param_value)
    else:
        run_id, config_id, rows = _run_subslot(cfg, models, seed,
                                               param_name, param_value)
    result = RunResult(run_id=run_id, config_id=config_id, seed=seed,
                       agent=cfg.agent, param_name=param_name,
                       param_value=float(param_value), rows=rows)
    if cfg.eval_slots > 0:
        eval_rows = rows[cfg.training_slots:]
        result.summary = _summarize_eval(run_id, cfg, eval_rows,
                                         param_name, param_value)
    return result


SWEEPABLE = ("ambient_mean_density", "K")


def sweep(cfg: ExperimentConfig, param: str, values, seeds=None):
    """One run per (value, seed), everything else shared."""
    if param not in SWEEPABLE:
        raise ConfigError(f"sweep parameter must be one of {SWEEPABLE}, "
                          f"got '{param}'")
    seeds = cfg.seeds if seeds is None else tuple(seeds)
    results = []
    for value in values:
        point = dataclasses.replace(
            cfg, **{param: int(value) if param == "K" else float(value)})
        for seed in seeds:
            results.append(run_experiment(point, seed, param_name=param,
                                          param_value=float(value)))
    return results


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def moving_average(x, window: int = 200) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        raise EmptyInput("cannot smooth an empty series")
    window = min(int(window), len(x))
    if window < 1:
        raise EmptyInput("window must be >= 1")
    kernel = np.full(window, 1.0 / window)
    return np.convolve(x, kernel, mode="valid")


def aggregate(results, window: int = 200):
    """Cross-seed summary per config plus smoothed learning curves.

    Returns (summary_rows, curves) where curves maps config_id to the
    moving-average of the seed-mean slot reward.
    """
    if not results:
        raise EmptyInput("no results to aggregate")
    groups = {}
    for res in results:
        groups.setdefault(res.config_id, []).append(res)
    summaries = []
    curves = {}
    for config_id in sorted(groups):
        runs = groups[config_id]
        per_seed = [r.summary for r in runs if r.summary is not None]
        if per_seed:
            means = np.array([s.mean_reward for s in per_seed])
            summaries.append(SummaryRow(
                config_id=config_id,
                agent=runs[0].agent,
                param_name=runs[0].param_name,
                param_value=runs[0].param_value,
                mean_reward=float(means.mean()),
                std_reward=float(means.std()),
                outage_rate=float(np.mean([s.outage_rate for s in per_seed])),
                frac_active=float(np.mean([s.frac_active for s in per_seed])),
                frac_passive=float(np.mean([s.frac_passive for s in per_seed])),
                frac_local=float(np.mean([s.frac_local for s in per_seed]))))
        lengths = {len(r.rows) for r in runs}
        if len(lengths) == 1 and lengths != {0}:
            stacked = np.array([[row.reward for row in r.rows] for r in runs])
            curves[config_id] = moving_average(stacked.mean(axis=0), window)
    return summaries, curves


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def _format_cell(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def write_csv(rows, path, header: str) -> None:
    """Write dataclass rows under an exact header; floats get 6 sig digits."""
    names = header.split(",")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(getattr(row, n)) for n in names)
                     + "\n")


def read_summary_csv(path):
    """Parse a summary CSV back into SummaryRow records."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != SUMMARY_HEADER:
            raise ConfigError(f"{path}: unexpected header '{header}'")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append(SummaryRow(
                config_id=parts[0], agent=parts[1], param_name=parts[2],
                param_value=float(parts[3]), mean_reward=float(parts[4]),
                std_reward=float(parts[5]), outage_rate=float(parts[6]),
                frac_active=float(parts[7]), frac_passive=float(parts[8]),
                frac_local=float(parts[9])))
    return rows


def merge_summaries(per_run_rows):
    """Aggregate per-run summary rows (one per seed) across seeds."""
    if not per_run_rows:
        raise EmptyInput("no summary rows to merge")
    groups = {}
    for row in per_run_rows:
        groups.setdefault(row.config_id, []).append(row)
    merged = []
    for config_id in sorted(groups):
        rows = groups[config_id]
        means = np.array([r.mean_reward for r in rows])
        merged.append(SummaryRow(
            config_id=config_id,
            agent=rows[0].agent,
            param_name=rows[0].param_name,
            param_value=rows[0].param_value,
            mean_reward=float(means.mean()),
            std_reward=float(means.std()),
            outage_rate=float(np.mean([r.outage_rate for r in rows])),
            frac_active=float(np.mean([r.frac_active for r in rows])),
            frac_passive=float(np.mean([r.frac_passive for r in rows])),
            frac_local=float(np.mean([r.frac_local for r in rows]))))
    return merged
