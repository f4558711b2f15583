"""Reference schemes: fixed-array SWIPT power minimization and equal-ratio
waveguide transmission.

Both baselines reuse the effective-channel and metrics code paths of the
primary scheme; only the geometry (fixed half-wavelength array) or the frozen
ratio vector differs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .channel import EffectiveChannels, _spherical_row, effective_channels
from .metrics import MetricsReport, evaluate_metrics, pce, transmit_power
from .multi_user import min_power_beamforming, solve_multi_user
from .report import SolveReport
from .scenario import ScenarioConfig, UserLayout


@dataclass
class BaselineResult:
    scheme: str
    metrics: MetricsReport | None
    tx_power: float
    trace: list = field(default_factory=list)   # per-iteration dict rows
    feasible: bool = True
    report: SolveReport | None = None
    w: np.ndarray | None = None
    alpha: np.ndarray | None = None
    placement: object = None


def mimo_array_rows(layout: UserLayout, config: ScenarioConfig):
    """Channels of a half-wavelength uniform linear array at the first feed.

    The array has the same number of RF chains as there are waveguides; its
    elements sit at the first feed point, so there is no placement gain.
    """
    n = config.num_waveguides
    spacing = config.wavelength / 2.0
    elements = np.stack([
        np.array([i * spacing, config.waveguide_y[0], config.waveguide_height])
        for i in range(n)
    ])
    rows_id = np.stack([_spherical_row(elements, u, config)
                        for u in layout.idr_positions])
    rows_eh = np.stack([_spherical_row(elements, u, config)
                        for u in layout.ehr_positions])
    return rows_id, rows_eh


def mimo_swipt(config: ScenarioConfig, layout: UserLayout) -> BaselineResult:
    """Transmit-power minimization for the fixed array under the same floors.

    Reports conversion efficiency and sum rate at the optimum. The power
    minimization has no budget constraint; an infeasible restriction sequence
    is flagged rather than raised.
    """
    start = time.perf_counter()
    rows_id, rows_eh = mimo_array_rows(layout, config)
    w, powers, feasible, history = min_power_beamforming(
        rows_id, rows_eh, config,
        enforce_harvest=config.mimo_require_harvest,
        max_rounds=config.max_outer_iters,
        tol=config.solver_tol,
        keep_history=True,
    )
    report = SolveReport()
    trace = []
    for it, w_t in enumerate(history):
        eff_t = EffectiveChannels(c=np.conj(rows_id), d=np.conj(rows_eh),
                                  s=rows_id @ w_t)
        trace.append({
            "iteration": it,
            "tx_power": transmit_power(w_t),
            "objective": pce(eff_t, w_t, config),
        })
        report.objective_trace.append(trace[-1]["objective"])
    eff = EffectiveChannels(c=np.conj(rows_id), d=np.conj(rows_eh), s=rows_id @ w)
    metrics = evaluate_metrics(eff, w, config) if feasible else None
    report.feasible = feasible
    report.converged = feasible and len(powers) < config.max_outer_iters
    report.iterations = len(powers)
    report.runtime_s = time.perf_counter() - start
    return BaselineResult(scheme="mimo", metrics=metrics,
                          tx_power=transmit_power(w), trace=trace,
                          feasible=feasible, report=report, w=w)


def equal_power_pass(config: ScenarioConfig, layout: UserLayout,
                     max_outer: int | None = None) -> BaselineResult:
    """Waveguide transmission with the ratio vector frozen at sqrt(1/L).

    Beams are optimized for the sum rate with the same solver the primary
    scheme uses; positions stay at the first valid placement.
    """
    result = solve_multi_user(config, layout, "sr", freeze_alpha=True,
                              freeze_placement=True, max_outer=max_outer)
    from .channel import build_channel_set
    channels = build_channel_set(result.placement, layout, config)
    eff = effective_channels(channels, result.alpha, result.w,
                             config.num_waveguides)
    metrics = evaluate_metrics(eff, result.w, config)
    trace = [{"iteration": i, "objective": v}
             for i, v in enumerate(result.report.objective_trace)]
    return BaselineResult(scheme="pass_equal", metrics=metrics,
                          tx_power=transmit_power(result.w), trace=trace,
                          feasible=True, report=result.report,
                          w=result.w, alpha=result.alpha,
                          placement=result.placement)
