"""Step through the offloading environment by hand.

Builds the default models, prints the physics they imply (harvest
income, active transmit powers, per-bit energy costs), then walks a few
slots with hand-picked allocations to show harvesting, draining,
deadline expiry, and the deep-fade behavior.
"""

import numpy as np

from hybridmec.env import (
    ActionAllocation,
    EnvState,
    default_models,
    active_tx_power,
    reset,
    step,
)
from hybridmec.errors import InfeasiblePower

models = default_models()
phy = models.phy

print("channel gains:", models.channel.gains)
print(f"passive rate {phy.passive_rate:.0f} b/slot at "
      f"{phy.passive_circuit_power * 1e3:.0f} mW "
      f"({phy.passive_circuit_power / phy.passive_rate:.2e} J/bit)")
print(f"local rate {phy.local_cpu_rate:.0f} b/slot at "
      f"{phy.local_energy_per_bit:.1e} J/bit")
for g in models.channel.gains:
    try:
        p = active_tx_power(phy, g)
        print(f"active at gain {g}: {p * 1e3:6.1f} mW for "
              f"{phy.active_rate:.0f} b/slot ({p / phy.active_rate:.2e} J/bit)")
    except InfeasiblePower:
        print(f"active at gain {g}: infeasible, the power cap "
              f"({phy.max_active_tx_power} W) is below what the fade demands")

rng = np.random.default_rng(3)
state = reset(models, rng)
print(f"\nstart: gain index {state.channel_state}, "
      f"energy {state.energy:.3f} J, backlog {state.total_backlog():.0f} bits")

# A slot split evenly between harvesting and backscatter, with the CPU
# on for the whole slot.
out = step(state, ActionAllocation(t_h=0.5, t_p=0.5, l_loc=1.0), models, rng)
print(f"\nharvest+passive slot: +{out.energy_harvested:.3f} J harvested, "
      f"{out.energy_spent:.4f} J spent, {out.processed_bits:.0f} bits served "
      f"(passive {out.bits_passive:.0f}, local {out.bits_local:.0f}), "
      f"reward {out.reward:.2f}")
state = out.next_state

# All-in active transmission at the best gain; the executed share
# shrinks whenever the battery cannot cover the whole allocation.
strong = EnvState(channel_state=3, energy=0.05,
                  backlog=[[2600.0, 1], [1800.0, 2]])
out = step(strong, ActionAllocation(t_a=1.0), models, rng)
exe = out.allocation_executed
print(f"all-active slot at gain 2 on a thin battery: asked t_a=1.0, "
      f"executed t_a={exe.t_a:.2f}, {out.bits_active:.0f} bits active, "
      f"reward {out.reward:.2f}")

# Force a deep fade with a due task bigger than the backscatter rate:
# active is infeasible there, so the deadline is missed and the slot
# pays the outage (reward zero, task dropped).
doomed = EnvState(channel_state=0, energy=0.4,
                  backlog=[[3000.0, 1], [1500.0, 2]])
out = step(doomed, ActionAllocation(t_a=0.5, t_p=0.5), models, rng)
print(f"\ndeep fade, 3000 bits due now: active share executed "
      f"{out.allocation_executed.t_a:.2f}, served {out.processed_bits:.0f} "
      f"bits, outage={out.outage}, reward {out.reward:.2f}")

# Same fade, but the due task fits behind the backscatter rate.
savable = EnvState(channel_state=0, energy=0.4,
                   backlog=[[1200.0, 1], [1500.0, 2]])
out = step(savable, ActionAllocation(t_p=1.0), models, rng)
print(f"deep fade, 1200 bits due now: served {out.processed_bits:.0f} bits "
      f"passively, outage={out.outage}, reward {out.reward:.2f}")
