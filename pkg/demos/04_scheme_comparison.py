"""Scheme comparison on a few Monte-Carlo drops.

Compares the joint design against two references: a fixed half-wavelength
array with the same number of RF chains (power-minimizing beamforming under
the same floors), and the same waveguide hardware with the ratio vector
frozen at the equal split.
"""

import numpy as np

from passwpt import ScenarioConfig, sample_user_drop
from passwpt.baselines import equal_power_pass, mimo_swipt
from passwpt.multi_user import solve_multi_user

cfg = ScenarioConfig(max_outer_iters=12)
rows = []
for seed in range(5):
    layout = sample_user_drop(cfg, seed=seed)
    eq = equal_power_pass(cfg, layout, max_outer=4)
    sr = solve_multi_user(cfg, layout, "sr", max_outer=4,
                          warm_start=(eq.w, eq.placement, eq.alpha))
    pc = solve_multi_user(cfg, layout, "pce", max_outer=5)
    mm = mimo_swipt(cfg, layout)
    rows.append({
        "drop": seed,
        "joint_pce": pc.report.objective_trace[-1],
        "equal_pce": eq.metrics.pce,
        "array_pce": mm.metrics.pce if mm.metrics else float("nan"),
        "joint_rate": sr.report.objective_trace[-1],
        "equal_rate": eq.metrics.sum_rate,
        "array_rate": mm.metrics.sum_rate if mm.metrics else float("nan"),
    })

print(f"{'drop':>4} {'joint pce':>12} {'equal pce':>12} {'array pce':>12} "
      f"{'joint rate':>11} {'equal rate':>11} {'array rate':>11}")
for r in rows:
    print(f"{r['drop']:>4} {r['joint_pce']:>12.3e} {r['equal_pce']:>12.3e} "
          f"{r['array_pce']:>12.3e} {r['joint_rate']:>11.2f} "
          f"{r['equal_rate']:>11.2f} {r['array_rate']:>11.2f}")

med = lambda k: np.median([r[k] for r in rows])
print(f"\nmedians: pce {med('joint_pce'):.3e} > {med('equal_pce'):.3e} > "
      f"{med('array_pce'):.3e}")
print(f"         rate {med('joint_rate'):.2f} >= {med('equal_rate'):.2f} > "
      f"{med('array_rate'):.2f}")
