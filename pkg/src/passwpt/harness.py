"""Monte-Carlo experiment harness: scheme comparisons, parameter sweeps, and
figure-series emission.

This is the only layer that converts between dB/dBm and linear/watt units;
everything below it works in SI. Drops use counter-based per-drop seeds, so
results are independent of execution order and safe to parallelize.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import equal_power_pass, mimo_swipt
from .channel import build_channel_set, effective_channels
from .metrics import MetricsReport, evaluate_metrics
from .multi_user import InfeasibleStart, solve_multi_user
from .radiation import equal_power_alpha
from .report import SolveReport
from .scenario import ConfigError, Placement, ScenarioConfig, UserLayout, \
    load_config, sample_user_drop
from .two_user import solve_two_user_pce, solve_two_user_sum_rate


class IoError(OSError):
    """Output location unusable."""


class MissingAxis(ValueError):
    """Requested figure needs a sweep axis the report does not cover."""


SCHEMES = ("pass_wpt", "pass_equal", "mimo")
SWEEP_AXES = ("iterations", "gamma_min", "grid_density", "pas_per_waveguide", "p_max")
FIGURES = ("convergence", "power_vs_sinr", "txpower_trace", "pce_vs_grid",
           "rate_vs_l", "rate_vs_pmax")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(max(watt, 1e-300) * 1000.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(linear: float) -> float:
    return 10.0 * math.log10(max(linear, 1e-300))


_UNIT_SUFFIXES = (("_dbm", dbm_to_watt), ("_db", db_to_linear))


def convert_config_units(data: dict) -> dict:
    """Translate *_dbm and *_db keys into their SI counterparts."""
    out = {}
    for key, value in data.items():
        for suffix, conv in _UNIT_SUFFIXES:
            if key.endswith(suffix):
                out[key[: -len(suffix)]] = conv(float(value))
                break
        else:
            out[key] = value
    return out


@dataclass
class ExperimentSpec:
    """One sweep: base scenario, axis, values, schemes, drops, output folder."""

    base: ScenarioConfig
    axis: str = "iterations"
    values: tuple = (1,)
    schemes: tuple = SCHEMES
    drops: int = 10
    out_dir: str = "results"
    seed: int = 0
    max_outer: int | None = None   # optional round cap for comparison runs
    max_workers: int = 1

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        vals = [float(v) for v in self.values]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        if self.drops < 1:
            raise ConfigError("drops must be >= 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ConfigError(f"unknown schemes {sorted(unknown)}")


def load_experiment_spec(path: str | Path, **overrides) -> ExperimentSpec:
    from .scenario import _load_mapping

    data = _load_mapping(path)
    data.update(overrides)
    base_data = convert_config_units(data.pop("scenario", {}))
    for key in ("waveguide_y", "candidate_x", "zeta"):
        if key in base_data and base_data[key] is not None:
            base_data[key] = tuple(base_data[key])
    base = ScenarioConfig(**base_data)
    for key in ("values", "schemes"):
        if key in data:
            data[key] = tuple(data[key])
    return ExperimentSpec(base=base, **data)


def _config_for_value(base: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "iterations":
        return base
    if axis == "gamma_min":
        return base.with_updates(gamma_min=float(value))
    if axis == "p_max":
        return base.with_updates(p_max=float(value))
    if axis == "pas_per_waveguide":
        return base.with_updates(pas_per_waveguide=int(value))
    if axis == "grid_density":
        count = int(value)
        if count < base.pas_per_waveguide:
            raise ConfigError("grid density below antennas per waveguide")
        candidates = tuple(np.linspace(0.0, base.x_max, count)[1:])
        return base.with_updates(candidate_x=candidates)
    raise ConfigError(f"unknown sweep axis {axis!r}")


def _pad_alpha(alpha: np.ndarray, old_l: int, new_l: int, n: int) -> np.ndarray:
    """Zero-pad each waveguide block when antennas are added (sweep warm start)."""
    blocks = alpha.reshape(n, old_l)
    padded = np.zeros((n, new_l))
    padded[:, :old_l] = blocks
    return padded.ravel()


def _extend_placement(placement: Placement, config: ScenarioConfig) -> Placement | None:
    """Add antennas at unused grid points, keeping the spacing rule."""
    from .scenario import candidate_positions, validate_placement

    cands = candidate_positions(config)
    rows = []
    need = config.pas_per_waveguide
    for row in placement.x:
        row = list(row)
        for c in cands:
            if len(row) >= need:
                break
            trial = sorted(row + [float(c)])
            if all(b - a >= config.grid_step - 1e-9 for a, b in zip(trial, trial[1:])):
                row = trial
        if len(row) != need:
            return None
        rows.append(row)
    extended = Placement(x=np.asarray(rows, dtype=float))
    return extended if validate_placement(extended, config).ok else None


def _two_user_scenario(config: ScenarioConfig) -> bool:
    return config.num_idrs == 1 and config.num_ehrs == 1 and config.num_waveguides == 1


def _solve_pass_wpt(config, layout, max_outer, warm=None):
    """Primary scheme: efficiency maximization plus rate-objective solve.

    Returns merged metrics (efficiency metrics from the efficiency stage,
    rate metrics from the rate stage), the efficiency trace, and both
    operating points for warm-start chaining across sweep values.
    """
    if _two_user_scenario(config):
        state = solve_two_user_pce(config, layout)
        alpha, sr_report = solve_two_user_sum_rate(state, config, layout)
        channels = build_channel_set(state.placement, layout, config)
        w1 = state.w1.reshape(-1, 1)
        eff = effective_channels(channels, alpha, w1, config.num_waveguides)
        metrics = evaluate_metrics(eff, w1, config)
        trace = [{"iteration": i, "objective": row["beta"]}
                 for i, row in enumerate(state.report.aux_trace)]
        return metrics, trace, state.report.converged, {
            "pce": (w1, state.placement, alpha), "sr": (w1, state.placement, alpha)}
    warm = warm or {}
    pce_res = solve_multi_user(config, layout, "pce", max_outer=max_outer,
                               warm_start=warm.get("pce"))
    sr_res = solve_multi_user(config, layout, "sr", max_outer=max_outer,
                              warm_start=warm.get("sr"))
    channels = build_channel_set(sr_res.placement, layout, config)
    eff = effective_channels(channels, sr_res.alpha, sr_res.w, config.num_waveguides)
    rate_metrics = evaluate_metrics(eff, sr_res.w, config)
    channels_p = build_channel_set(pce_res.placement, layout, config)
    eff_p = effective_channels(channels_p, pce_res.alpha, pce_res.w,
                               config.num_waveguides)
    pce_metrics = evaluate_metrics(eff_p, pce_res.w, config)
    merged = MetricsReport(
        sinr=rate_metrics.sinr, rates=rate_metrics.rates,
        sum_rate=rate_metrics.sum_rate, harvested=pce_metrics.harvested,
        pce=pce_metrics.pce, tx_power=pce_metrics.tx_power,
    )
    trace = [{"iteration": i, "objective": v}
             for i, v in enumerate(pce_res.report.objective_trace)]
    return merged, trace, pce_res.report.converged, {
        "pce": (pce_res.w, pce_res.placement, pce_res.alpha),
        "sr": (sr_res.w, sr_res.placement, sr_res.alpha)}


def run_drop(config: ScenarioConfig, scheme: str, drop: int, seed: int,
             max_outer: int | None = None, warm: dict | None = None) -> dict:
    """Solve one scheme on one drop; failures are recorded, never raised."""
    layout = sample_user_drop(config, seed=_drop_seed(seed, drop))
    row = {"scheme": scheme, "drop": drop, "ok": True, "error": "",
           "converged": True}
    try:
        if scheme == "pass_wpt":
            metrics, trace, converged, state = _solve_pass_wpt(
                config, layout, max_outer, warm)
            row["converged"] = converged
            row["_state"] = state
        elif scheme == "pass_equal":
            res = equal_power_pass(config, layout, max_outer=max_outer)
            metrics, trace = res.metrics, res.trace
            row["converged"] = res.report.converged
        elif scheme == "mimo":
            res = mimo_swipt(config, layout)
            metrics, trace = res.metrics, res.trace
            row["ok"] = res.feasible
            row["converged"] = res.report.converged
        else:
            raise ConfigError(f"unknown scheme {scheme!r}")
    except Exception as exc:  # noqa: BLE001 - per-drop failures are recorded
        row.update(ok=False, error=f"{type(exc).__name__}: {exc}", trace=[])
        return row
    if metrics is not None:
        row.update(metrics.to_dict())
    row["trace"] = trace
    return row


def _drop_seed(seed: int, drop: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(drop,))
               .generate_state(1)[0])


def _adapt_warm(state: dict | None, old_cfg: ScenarioConfig,
                new_cfg: ScenarioConfig, axis: str) -> dict | None:
    """Carry a solved operating point into the next sweep value.

    Budget growth keeps the point valid as-is; extra antennas join with zero
    ratio (identical metrics); denser grids keep the placement when its
    coordinates survive. The warm point then seeds a monotone ascent, so the
    next value's result can never fall below the previous one.
    """
    from .scenario import validate_placement

    if state is None:
        return None
    adapted = {}
    for key, triple in state.items():
        if triple is None:
            continue
        w, placement, alpha = triple
        if axis == "pas_per_waveguide":
            extended = _extend_placement(placement, new_cfg)
            if extended is None:
                continue
            # added antennas start at zero ratio; surviving antennas keep
            # their ratio by coordinate, not by index (insertions reorder)
            old_l = old_cfg.pas_per_waveguide
            alpha_old = np.asarray(alpha).reshape(new_cfg.num_waveguides, old_l)
            alpha_new = np.zeros((new_cfg.num_waveguides,
                                  new_cfg.pas_per_waveguide))
            for wg in range(new_cfg.num_waveguides):
                lookup = {round(float(x), 9): alpha_old[wg, j]
                          for j, x in enumerate(placement.x[wg])}
                for j, x in enumerate(extended.x[wg]):
                    alpha_new[wg, j] = lookup.get(round(float(x), 9), 0.0)
            alpha = alpha_new.ravel()
            placement = extended
        elif axis == "grid_density":
            if not validate_placement(placement, new_cfg).ok:
                continue
        adapted[key] = (np.asarray(w), placement, np.asarray(alpha))
    return adapted or None


def _run_chain(args):
    """All sweep values for one (scheme, drop), warm-started in ascending order."""
    base, axis, values, scheme, drop, seed, max_outer = args
    rows = []
    state = None
    prev_cfg = None
    for value in values:
        config = _config_for_value(base, axis, value)
        warm = _adapt_warm(state, prev_cfg, config, axis)             if scheme == "pass_wpt" and prev_cfg is not None else None
        row = run_drop(config, scheme, drop, seed, max_outer=max_outer, warm=warm)
        row["value"] = value
        if scheme == "pass_wpt" and row["ok"]:
            state = row.get("_state")
        row.pop("_state", None)
        rows.append(row)
        prev_cfg = config
    return rows


@dataclass
class ExperimentReport:
    spec_axis: str
    values: tuple
    schemes: tuple
    drops: int
    seed: int
    rows: list                      # one dict per (scheme, value, drop)
    aggregates: dict                # (scheme, value) -> statistics
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "spec_axis": self.spec_axis, "values": list(self.values),
            "schemes": list(self.schemes), "drops": self.drops,
            "seed": self.seed, "rows": self.rows,
            "aggregates": {f"{k[0]}|{k[1]}": v for k, v in self.aggregates.items()},
            "provenance": self.provenance,
        }


_AGG_FIELDS = ("pce", "sum_rate", "tx_power")


def _aggregate(rows: list, schemes, values) -> dict:
    out = {}
    for scheme in schemes:
        for value in values:
            sub = [r for r in rows
                   if r["scheme"] == scheme and r["value"] == value and r["ok"]]
            stats = {"count": len(sub)}
            for name in _AGG_FIELDS:
                data = np.array([r[name] for r in sub if name in r], dtype=float)
                if data.size:
                    stats[name] = {
                        "mean": float(np.mean(data)),
                        "median": float(np.median(data)),
                        "p10": float(np.percentile(data, 10)),
                        "p90": float(np.percentile(data, 90)),
                    }
            out[(scheme, value)] = stats
    return out


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Execute the sweep, writing rows incrementally and aggregating at the end.

    Deterministic for a fixed (spec, seed): per-drop seeds are counter-based
    and rows are emitted in sorted order regardless of worker scheduling.
    Per-drop solver failures are recorded in the row, never fatal.
    """
    out_dir = Path(spec.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc

    rows = []
    rows_path = out_dir / "rows.csv"
    fieldnames = ["scheme", "value", "drop", "ok", "error", "converged",
                  "pce", "sum_rate", "tx_power", "sinr", "rates", "harvested"]
    tasks = [(spec.base, spec.axis, tuple(spec.values), scheme, drop,
              spec.seed, spec.max_outer)
             for scheme in spec.schemes for drop in range(spec.drops)]
    with rows_path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        if spec.max_workers > 1:
            # pool.map preserves submission order, so output stays deterministic
            with ProcessPoolExecutor(max_workers=spec.max_workers) as pool:
                chains = pool.map(_run_chain, tasks)
                for chain in chains:
                    for row in chain:
                        rows.append(row)
                        writer.writerow(_csv_row(row))
        else:
            for task in tasks:
                for row in _run_chain(task):
                    rows.append(row)
                    writer.writerow(_csv_row(row))

    aggregates = _aggregate(rows, spec.schemes, spec.values)
    provenance = {
        "config_hash": hashlib.sha256(
            json.dumps(asdict(spec.base), sort_keys=True, default=list).encode()
        ).hexdigest()[:16],
        "seed": spec.seed,
        "version": __version__,
    }
    report = ExperimentReport(
        spec_axis=spec.axis, values=tuple(spec.values), schemes=tuple(spec.schemes),
        drops=spec.drops, seed=spec.seed, rows=rows, aggregates=aggregates,
        provenance=provenance,
    )
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=1, sort_keys=True, default=_json_default))
    return report


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def _csv_row(row: dict) -> dict:
    out = dict(row)
    for key in ("sinr", "rates", "harvested"):
        if key in out and not isinstance(out[key], str):
            out[key] = ";".join(repr(float(v)) for v in out[key])
    for key in ("pce", "sum_rate", "tx_power"):
        if key in out:
            out[key] = repr(float(out[key]))
    out.pop("trace", None)
    return out


_FIGURE_AXES = {
    "convergence": "iterations",
    "power_vs_sinr": "gamma_min",
    "txpower_trace": "iterations",
    "pce_vs_grid": "grid_density",
    "rate_vs_l": "pas_per_waveguide",
    "rate_vs_pmax": "p_max",
}


def emit_figure_data(report: ExperimentReport, figure: str,
                     out_dir: str | Path) -> Path:
    """Write the CSV series behind one figure family; returns the file path."""
    if figure not in FIGURES:
        raise MissingAxis(f"unknown figure {figure!r}")
    required = _FIGURE_AXES[figure]
    if report.spec_axis != required:
        raise MissingAxis(
            f"figure {figure!r} needs a {required!r} sweep, report has "
            f"{report.spec_axis!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{figure}.csv"

    if figure in ("convergence", "txpower_trace"):
        key = "objective" if figure == "convergence" else "tx_power"
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            header = "objective" if figure == "convergence" else "tx_power_dbm"
            writer.writerow(["iteration", "scheme", header])
            for scheme in report.schemes:
                traces = [r["trace"] for r in report.rows
                          if r["scheme"] == scheme and r["ok"] and r.get("trace")]
                if not traces:
                    continue
                depth = max(len(t) for t in traces)
                for it in range(depth):
                    vals = [t[min(it, len(t) - 1)].get(key) for t in traces]
                    vals = [v for v in vals if v is not None]
                    if not vals:
                        continue
                    mean = float(np.mean(vals))
                    if figure == "txpower_trace":
                        mean = watt_to_dbm(mean)
                    writer.writerow([it, scheme, repr(mean)])
        return path

    metric = {"power_vs_sinr": "tx_power", "pce_vs_grid": "pce",
              "rate_vs_l": "sum_rate", "rate_vs_pmax": "sum_rate"}[figure]
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        xlabel = {"power_vs_sinr": "gamma_min_db", "pce_vs_grid": "grid_positions",
                  "rate_vs_l": "antennas_per_waveguide",
                  "rate_vs_pmax": "p_max_dbm"}[figure]
        cols = [xlabel]
        for scheme in report.schemes:
            cols += [f"{scheme}_mean", f"{scheme}_p10", f"{scheme}_p90"]
        writer.writerow(cols)
        for value in report.values:
            x = value
            if figure == "power_vs_sinr":
                x = linear_to_db(value)
            elif figure == "rate_vs_pmax":
                x = watt_to_dbm(value)
            row = [repr(float(x))]
            for scheme in report.schemes:
                stats = report.aggregates.get((scheme, value), {}).get(metric)
                if stats is None:
                    row += ["", "", ""]
                    continue
                mean, p10, p90 = stats["mean"], stats["p10"], stats["p90"]
                if figure == "power_vs_sinr":
                    mean, p10, p90 = (watt_to_dbm(mean), watt_to_dbm(p10),
                                      watt_to_dbm(p90))
                row += [repr(float(mean)), repr(float(p10)), repr(float(p90))]
            writer.writerow(row)
    return path
