"""Train a small hybrid agent and compare it with the baselines.

Uses a shortened schedule (4000 training slots) so the script finishes
in a couple of minutes; the shipped defaults train for 12000 slots.
The printed table is the evaluation phase only.
"""

import time

from hybridmec.harness import ExperimentConfig, run_experiment

SHORT = dict(training_slots=4_000, eval_slots=2_000)

print(f"{'agent':16s} {'reward':>8s} {'outage':>8s} "
      f"{'active':>8s} {'passive':>8s} {'local':>8s} {'secs':>6s}")
for agent in ("random", "greedy", "active_offload", "hybrid_dqn"):
    t0 = time.time()
    result = run_experiment(ExperimentConfig(agent=agent, **SHORT), seed=0)
    s = result.summary
    print(f"{agent:16s} {s.mean_reward:8.3f} {s.outage_rate:8.3f} "
          f"{s.frac_active:8.2f} {s.frac_passive:8.2f} {s.frac_local:8.2f} "
          f"{time.time() - t0:6.1f}")

print("\nThe learned policy should sit above greedy on reward and below")
print("active_offload on outage; train longer for a bigger margin.")
