"""Scenario geometry, physical constants, and the discrete antenna position grid.

All quantities are SI (meters, watts, Hz, linear ratios). dB/dBm conversion is
handled by the experiment harness, never here.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class ConfigError(ValueError):
    """Invalid or inconsistent scenario parameters."""


class NonPositiveStep(ConfigError):
    """Grid step must be strictly positive."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical, geometric, and solver parameters for one experiment.

    Defaults reproduce the desk-scale evaluation setup: 28 GHz carrier,
    waveguide refractive index 1.4, -80 dBm noise, waveguides 5 m high at
    y in {0, 10, 20, 30} m, four pre-installed antennas per waveguide on the
    candidate x-grid {8, 16, 24, 32} m, users dropped in a 10 x 10 m region,
    20 dB SINR floor, interior-point relative tolerance 1e-4, at most 60
    outer rounds, 100 Monte-Carlo drops.
    """

    carrier_frequency: float = 28e9        # Hz
    n_eff: float = 1.4                     # waveguide effective refractive index
    noise_power: float = 1e-11             # W  (-80 dBm)
    waveguide_height: float = 5.0          # m
    waveguide_y: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0)  # m, one per waveguide
    x_max: float = 32.0                    # m, service length along x
    grid_step: float | None = None         # m, min antenna spacing; None -> lambda/2
    candidate_x: tuple[float, ...] | None = (8.0, 16.0, 24.0, 32.0)
    region_x: float = 10.0                 # m, user-drop rectangle
    region_y: float = 10.0                 # m
    num_waveguides: int = 4                # N
    pas_per_waveguide: int = 4             # L
    num_idrs: int = 4                      # K, information users
    num_ehrs: int = 4                      # Q, energy harvesters
    p_max: float = 100.0                   # W, transmit power budget
    p_min: float = 1e-9                    # W, harvested-power floor per EHR
    p_circuit: float = 1e-5                # W, storage circuit power per EHR
    phi: float = 2.5                       # reciprocal of PA drain efficiency
    zeta: tuple[float, ...] | None = None  # RF->DC efficiency per EHR, in (0,1)
    gamma_min: float = 100.0               # linear SINR floor (20 dB)
    r_min: float = 1.0                     # bits/s/Hz floor per information user
    rho_min: float = 1e-12                 # power-conversion-efficiency floor
    solver_tol: float = 1e-4               # relative tolerance, all iterative loops
    max_outer_iters: int = 60
    mc_drops: int = 100
    rng_seed: int = 0
    scaling_factor: float = 1.25           # growth factor for barrier/search schedules
    mimo_require_harvest: bool = True      # MIMO baseline enforces the P_min floor

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ConfigError("carrier_frequency must be > 0")
        if self.n_eff < 1:
            raise ConfigError("n_eff must be >= 1")
        if self.noise_power <= 0:
            raise ConfigError("noise_power must be > 0")
        if self.p_max <= 0:
            raise ConfigError("p_max must be > 0")
        if self.gamma_min <= 0:
            raise ConfigError("gamma_min must be > 0")
        if len(self.waveguide_y) != self.num_waveguides:
            raise ConfigError(
                f"waveguide_y has {len(self.waveguide_y)} entries, "
                f"expected num_waveguides={self.num_waveguides}"
            )
        if self.grid_step is None:
            object.__setattr__(self, "grid_step", self.wavelength / 2.0)
        if self.grid_step <= 0:
            raise NonPositiveStep("grid_step must be > 0")
        if self.grid_step < self.wavelength / 2.0 - 1e-12:
            raise ConfigError("grid_step below half wavelength violates the spacing rule")
        if self.zeta is None:
            object.__setattr__(self, "zeta", (0.5,) * self.num_ehrs)
        if len(self.zeta) != self.num_ehrs:
            raise ConfigError("zeta needs one entry per EHR")
        if any(not (0.0 < z < 1.0) for z in self.zeta):
            raise ConfigError("each zeta must lie in (0, 1)")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def guided_wavelength(self) -> float:
        return self.wavelength / self.n_eff

    def with_updates(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class UserLayout:
    """Receiver drop: ground-level (z = 0) positions inside the service rectangle."""

    idr_positions: np.ndarray  # (K, 3)
    ehr_positions: np.ndarray  # (Q, 3)

    def __post_init__(self):
        for arr in (self.idr_positions, self.ehr_positions):
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise ConfigError("positions must be (count, 3) arrays")
            if np.any(arr[:, 2] != 0.0):
                raise ConfigError("receivers sit at ground level z = 0")


@dataclass(frozen=True)
class PositionGrid:
    """Discrete candidate x-coordinates shared by every waveguide."""

    candidates: np.ndarray      # sorted, strictly increasing
    count_per_waveguide: int    # number of candidates


@dataclass(frozen=True)
class Placement:
    """Antenna x-coordinates, one strictly increasing row per waveguide."""

    x: np.ndarray  # (N, L)

    def row(self, n: int) -> np.ndarray:
        return self.x[n]

    def key(self) -> tuple:
        """Lexicographic tie-break key (row-major coordinate tuple)."""
        return tuple(np.round(self.x, 12).ravel())


@dataclass(frozen=True)
class PlacementValidation:
    ok: bool
    violations: tuple[str, ...]


def build_position_grid(config: ScenarioConfig) -> PositionGrid:
    """Uniform candidate grid {b * step : b = 0 .. floor(x_max/step)}."""
    step = config.grid_step
    if step is None or step <= 0:
        raise NonPositiveStep("grid_step must be > 0")
    if config.x_max <= 0:
        raise ConfigError("x_max must be > 0")
    count = int(math.floor(config.x_max / step + 1e-12)) + 1
    candidates = step * np.arange(count, dtype=float)
    return PositionGrid(candidates=candidates, count_per_waveguide=count)


def candidate_positions(config: ScenarioConfig) -> np.ndarray:
    """Candidate x-coordinates: explicit list when configured, else the uniform grid."""
    if config.candidate_x is not None:
        arr = np.asarray(sorted(config.candidate_x), dtype=float)
        if arr.size == 0:
            raise ConfigError("candidate_x must be non-empty")
        return arr
    return build_position_grid(config).candidates


def sample_user_drop(config: ScenarioConfig, seed: int) -> UserLayout:
    """One i.i.d. uniform receiver drop over the service rectangle.

    Uses a counter-based generator keyed only by the seed, so drops are
    reproducible independent of execution order.
    """
    if config.region_x <= 0 or config.region_y <= 0:
        raise ConfigError("drop region must have positive area")
    rng = np.random.Generator(np.random.Philox(key=seed))
    k, q = config.num_idrs, config.num_ehrs
    xy = rng.uniform(0.0, 1.0, size=(k + q, 2)) * np.array([config.region_x, config.region_y])
    pos = np.column_stack([xy, np.zeros(k + q)])
    return UserLayout(idr_positions=pos[:k], ehr_positions=pos[k:])


def validate_placement(placement: Placement, config: ScenarioConfig) -> PlacementValidation:
    """Check ordering, minimum spacing, bounds, and grid membership of every row."""
    x = np.asarray(placement.x, dtype=float)
    n, l = config.num_waveguides, config.pas_per_waveguide
    violations: list[str] = []
    if x.shape != (n, l):
        return PlacementValidation(False, (f"shape {x.shape} != ({n}, {l})",))
    cands = candidate_positions(config)
    step = config.grid_step
    for wg in range(n):
        row = x[wg]
        diffs = np.diff(row)
        if np.any(diffs <= 0):
            violations.append(f"waveguide {wg}: positions not strictly increasing")
        if np.any(diffs < step - 1e-9):
            violations.append(f"waveguide {wg}: adjacent spacing below {step:.6g} m")
        if np.any(row < -1e-9) or np.any(row > config.x_max + 1e-9):
            violations.append(f"waveguide {wg}: position outside [0, {config.x_max}] m")
        off_grid = np.min(np.abs(row[:, None] - cands[None, :]), axis=1) > 1e-9
        if np.any(off_grid):
            violations.append(f"waveguide {wg}: position not on the candidate grid")
    return PlacementValidation(len(violations) == 0, tuple(violations))


def enumerate_row_choices(config: ScenarioConfig,
                          candidates: np.ndarray | None = None) -> list[tuple[float, ...]]:
    """All valid per-waveguide position rows (sorted L-subsets meeting the spacing rule)."""
    cands = candidate_positions(config) if candidates is None else np.asarray(candidates, float)
    l, step = config.pas_per_waveguide, config.grid_step
    rows = []
    for combo in itertools.combinations(sorted(cands), l):
        arr = np.asarray(combo)
        if l == 1 or np.all(np.diff(arr) >= step - 1e-9):
            rows.append(tuple(float(v) for v in combo))
    return rows


def enumerate_placements(config: ScenarioConfig,
                         candidates: np.ndarray | None = None,
                         cap: int = 4096) -> list[Placement] | None:
    """Full cartesian placement set across waveguides, or None when it exceeds `cap`."""
    rows = enumerate_row_choices(config, candidates)
    if not rows:
        return []
    total = len(rows) ** config.num_waveguides
    if total > cap:
        return None
    placements = []
    for combo in itertools.product(rows, repeat=config.num_waveguides):
        placements.append(Placement(x=np.asarray(combo, dtype=float)))
    return placements


def placement_neighbors(placement: Placement, config: ScenarioConfig,
                        candidates: np.ndarray | None = None) -> list[Placement]:
    """Single-coordinate moves of one antenna to another valid grid point."""
    cands = candidate_positions(config) if candidates is None else np.asarray(candidates, float)
    step = config.grid_step
    base = np.asarray(placement.x, dtype=float)
    out = []
    n, l = base.shape
    for wg in range(n):
        for j in range(l):
            for c in cands:
                if abs(c - base[wg, j]) < 1e-9:
                    continue
                row = base[wg].copy()
                row[j] = c
                row.sort()
                if np.any(np.diff(row) < step - 1e-9):
                    continue
                cand = base.copy()
                cand[wg] = row
                out.append(Placement(x=cand))
    # drop duplicates, deterministic order
    seen, uniq = set(), []
    for p in out:
        k = p.key()
        if k not in seen:
            seen.add(k)
            uniq.append(p)
    return uniq


def _load_mapping(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    raise ConfigError(f"unsupported config format: {path.suffix}")


def load_config(path: str | Path, **overrides) -> ScenarioConfig:
    """Load a ScenarioConfig from TOML or JSON, applying keyword overrides last."""
    data = _load_mapping(path)
    data.update(overrides)
    for key in ("waveguide_y", "candidate_x", "zeta"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
