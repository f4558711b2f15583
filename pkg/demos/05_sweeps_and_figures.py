"""Monte-Carlo sweeps and figure-series emission.

Runs a small budget sweep through the experiment harness (per-drop seeds are
counter-based, so reruns are byte-identical) and writes the CSV series for
the rate-versus-budget figure family.
"""

from pathlib import Path

from passwpt.harness import ExperimentSpec, emit_figure_data, run_experiment
from passwpt.scenario import ScenarioConfig

base = ScenarioConfig(
    num_waveguides=2, waveguide_y=(0.0, 10.0), num_idrs=2, num_ehrs=2,
    zeta=(0.5, 0.5), gamma_min=2.0, p_min=1e-12, p_max=25.0,
)
spec = ExperimentSpec(
    base=base, axis="p_max", values=(25.0, 50.0, 100.0),
    schemes=("pass_wpt", "pass_equal", "mimo"), drops=3,
    out_dir="results/demo_sweep", seed=1, max_outer=6, max_workers=2,
)
report = run_experiment(spec)
ok = sum(1 for r in report.rows if r["ok"])
print(f"{len(report.rows)} rows ({ok} ok) in {spec.out_dir}/rows.csv")

path = emit_figure_data(report, "rate_vs_pmax", spec.out_dir)
print(f"figure series written to {path}:")
print(Path(path).read_text())
