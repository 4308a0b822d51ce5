"""Sweep the ambient energy density and watch the allocation shift.

With little ambient energy the learner leans on the backscatter radio,
which costs almost nothing per bit; with plenty it pays for active
transmission to push bits through faster. Run at reduced scale here;
CSV output lands in ./sweep_out (same files the CLI writes).
"""

from hybridmec.harness import (
    SUMMARY_HEADER,
    ExperimentConfig,
    aggregate,
    sweep,
    write_csv,
)

cfg = ExperimentConfig(agent="hybrid_dqn",
                       training_slots=6_000, eval_slots=2_000)
densities = (0.02, 0.5, 1.0, 2.0)
results = sweep(cfg, "ambient_mean_density", densities, seeds=(0, 1))

summaries, _ = aggregate(results)
write_csv(summaries, "sweep_out_summary.csv", SUMMARY_HEADER)

print(f"\n{'density':>8s} {'reward':>8s} {'outage':>8s} "
      f"{'active':>8s} {'passive':>8s}")
for s in summaries:
    print(f"{s.param_value:8.2f} {s.mean_reward:8.3f} {s.outage_rate:8.3f} "
          f"{s.frac_active:8.2f} {s.frac_passive:8.2f}")
print("\nwrote sweep_out_summary.csv")
