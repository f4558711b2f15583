"""Adjustable power-radiation model and feasible regions for the ratio vector.

The ratio vector alpha (length N*L, waveguide-major) is the decision variable
of every refinement step; the coupled-mode map is a forward utility only.
Feasible regions are constraint sets, not element-wise boxes: quadratic lower
bounds (SINR and harvested-power floors), per-waveguide norm balls, and
nonnegativity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, alpha_linear_forms, waveguide_aggregate
from .scenario import ScenarioConfig


class InfeasibleAlpha(ValueError):
    """Ratio vector violates nonnegativity or a per-waveguide norm bound."""


class EmptyRegion(ValueError):
    """No probed point satisfies the region constraints."""


def coupled_mode_alpha(activation: np.ndarray, coupling: np.ndarray,
                       d_y_max: float) -> np.ndarray:
    """Forward coupled-mode map from activations and coupling coefficients.

    Each active antenna radiates sin(eps_l * d) of the power still guided past
    it; the residual factor removes what antenna i already took, so the
    squared ratios always sum to at most one.
    """
    a = np.asarray(activation, dtype=float)
    eps = np.asarray(coupling, dtype=float)
    s = np.sin(eps * d_y_max)
    residual = np.concatenate([[1.0], np.cumprod(1.0 - a * s**2)[:-1]])
    return a * s * np.sqrt(np.clip(residual, 0.0, None))


@dataclass(frozen=True)
class RadiationState:
    """Ratio vector together with its block-diagonal matrix form."""

    alpha: np.ndarray          # (N*L,) nonnegative
    lambda_matrix: np.ndarray  # (N*L, N): column n carries waveguide n's ratios
    num_waveguides: int
    pas_per_waveguide: int


def per_waveguide_norms(alpha: np.ndarray, num_waveguides: int) -> np.ndarray:
    return np.linalg.norm(np.asarray(alpha).reshape(num_waveguides, -1), axis=1)


def assemble_lambda(alpha: np.ndarray, num_waveguides: int) -> RadiationState:
    """Validate alpha and build the (N*L, N) block-diagonal ratio matrix."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size % num_waveguides != 0:
        raise InfeasibleAlpha(f"alpha length {alpha.size} not divisible by {num_waveguides}")
    if np.any(alpha < -1e-12):
        raise InfeasibleAlpha("negative radiation ratio")
    norms = per_waveguide_norms(alpha, num_waveguides)
    if np.any(norms > 1.0 + 1e-9):
        raise InfeasibleAlpha(f"per-waveguide norm exceeds 1: {norms}")
    per = alpha.size // num_waveguides
    lam = np.zeros((alpha.size, num_waveguides))
    for n in range(num_waveguides):
        lam[n * per:(n + 1) * per, n] = alpha[n * per:(n + 1) * per]
    return RadiationState(alpha=alpha, lambda_matrix=lam,
                          num_waveguides=num_waveguides, pas_per_waveguide=per)


def equal_power_alpha(config: ScenarioConfig) -> np.ndarray:
    """Per-waveguide equal split: every ratio sqrt(1/L)."""
    size = config.num_waveguides * config.pas_per_waveguide
    return np.full(size, np.sqrt(1.0 / config.pas_per_waveguide))


@dataclass(frozen=True)
class ModulusFloor:
    """||forms @ alpha||^2 >= threshold, with complex coefficient rows."""

    forms: np.ndarray   # (m, N*L)
    threshold: float
    label: str = ""

    def margin(self, alpha: np.ndarray) -> float:
        return float(np.sum(np.abs(self.forms @ alpha) ** 2) - self.threshold)


@dataclass(frozen=True)
class SinrFloor:
    """|desired @ alpha|^2 >= gamma * (||interference @ alpha||^2 + sigma2)."""

    desired: np.ndarray        # (N*L,)
    interference: np.ndarray   # (m, N*L), m may be 0
    gamma: float
    sigma2: float
    label: str = ""

    def margin(self, alpha: np.ndarray) -> float:
        sig = np.abs(self.desired @ alpha) ** 2
        itf = float(np.sum(np.abs(self.interference @ alpha) ** 2)) if self.interference.size else 0.0
        return float(sig - self.gamma * (itf + self.sigma2))


@dataclass(frozen=True)
class AlphaFeasibleRegion:
    """Constraint set for the ratio vector at fixed beams and positions."""

    modulus_floors: tuple[ModulusFloor, ...]
    sinr_floors: tuple[SinrFloor, ...]
    num_waveguides: int
    pas_per_waveguide: int
    norm_upper: float = 1.0
    nonneg: bool = True

    def violations(self, alpha: np.ndarray, tol: float = 1e-9) -> list[str]:
        alpha = np.asarray(alpha, dtype=float)
        out = []
        if self.nonneg and np.any(alpha < -tol):
            out.append("nonnegativity")
        norms = per_waveguide_norms(alpha, self.num_waveguides)
        scale_ball = max(self.norm_upper, 1.0)
        if np.any(norms > self.norm_upper + tol * scale_ball):
            out.append("per-waveguide norm bound")
        for fl in self.modulus_floors:
            if fl.margin(alpha) < -tol * max(fl.threshold, 1e-30):
                out.append(fl.label or "modulus floor")
        for fl in self.sinr_floors:
            if fl.margin(alpha) < -tol * max(self.gamma_scale(fl), 1e-30):
                out.append(fl.label or "sinr floor")
        return out

    @staticmethod
    def gamma_scale(fl: SinrFloor) -> float:
        return fl.gamma * fl.sigma2

    def contains(self, alpha: np.ndarray, tol: float = 1e-9) -> bool:
        return not self.violations(alpha, tol)


def _probe_points(region: AlphaFeasibleRegion,
                  reference: np.ndarray | None) -> list[np.ndarray]:
    n, per = region.num_waveguides, region.pas_per_waveguide
    probes = []
    if reference is not None:
        probes.append(np.asarray(reference, dtype=float))
    probes.append(np.full(n * per, np.sqrt(1.0 / per)) * region.norm_upper)
    for fl in region.modulus_floors:
        weights = np.linalg.norm(fl.forms, axis=0)
        probes.append(_normalize_per_waveguide(weights, n, region.norm_upper))
    for fl in region.sinr_floors:
        probes.append(_normalize_per_waveguide(np.abs(fl.desired), n, region.norm_upper))
    return probes


def _normalize_per_waveguide(v: np.ndarray, num_waveguides: int, bound: float) -> np.ndarray:
    v = np.clip(np.asarray(v, dtype=float), 0.0, None)
    blocks = v.reshape(num_waveguides, -1)
    norms = np.linalg.norm(blocks, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return (bound * blocks / norms).ravel()


def probe_feasible(region: AlphaFeasibleRegion,
                   reference: np.ndarray | None = None,
                   tol: float = 1e-9) -> np.ndarray | None:
    """Return a probe point inside the region, or None if every probe fails."""
    for p in _probe_points(region, reference):
        if region.contains(p, tol):
            return p
    return None


def feasible_region_two_user(phi_i: np.ndarray, phi_e: np.ndarray,
                             config: ScenarioConfig,
                             reference: np.ndarray | None = None) -> AlphaFeasibleRegion:
    """Single-IDR / single-EHR region: rate floor, harvest floor, ball, orthant.

    `phi_i`/`phi_e` are the coefficient vectors of the received-signal linear
    forms, i.e. signal = conj(phi)^T alpha.
    """
    rows_i = np.conj(np.atleast_2d(phi_i))
    rows_e = np.conj(np.atleast_2d(phi_e))
    floors = (
        ModulusFloor(rows_i, config.gamma_min * config.noise_power, "idr rate floor"),
        ModulusFloor(rows_e, config.p_min / config.zeta[0], "ehr harvest floor"),
    )
    region = AlphaFeasibleRegion(
        modulus_floors=floors, sinr_floors=(),
        num_waveguides=config.num_waveguides,
        pas_per_waveguide=config.pas_per_waveguide,
    )
    if probe_feasible(region, reference) is None:
        raise EmptyRegion("no probed ratio vector satisfies the two-user floors")
    return region


def feasible_region_multi(channels: ChannelSet, w_star: np.ndarray,
                          config: ScenarioConfig,
                          gamma_req: float | None = None,
                          extra_floors: tuple[ModulusFloor, ...] = (),
                          reference: np.ndarray | None = None,
                          check: bool = True) -> AlphaFeasibleRegion:
    """Multi-user region: per-IDR SINR quadratics, per-EHR harvest floors, ball, orthant."""
    gamma = config.gamma_min if gamma_req is None else gamma_req
    n = config.num_waveguides
    t_id = alpha_linear_forms(channels.h_idr, channels.g_phase, w_star, n)   # (K, K, NL)
    t_eh = alpha_linear_forms(channels.h_ehr, channels.g_phase, w_star, n)   # (Q, K, NL)
    k = t_id.shape[0]
    sinr = []
    for kk in range(k):
        others = np.delete(np.arange(k), kk)
        sinr.append(SinrFloor(
            desired=t_id[kk, kk],
            interference=t_id[kk, others],
            gamma=gamma, sigma2=config.noise_power,
            label=f"sinr floor user {kk}",
        ))
    floors = [
        ModulusFloor(t_eh[q], config.p_min / config.zeta[q], f"harvest floor ehr {q}")
        for q in range(t_eh.shape[0])
    ]
    floors.extend(extra_floors)
    region = AlphaFeasibleRegion(
        modulus_floors=tuple(floors), sinr_floors=tuple(sinr),
        num_waveguides=n, pas_per_waveguide=config.pas_per_waveguide,
    )
    if check and probe_feasible(region, reference) is None:
        raise EmptyRegion("no probed ratio vector satisfies the multi-user floors")
    return region


def pce_floor(channels: ChannelSet, w_star: np.ndarray, config: ScenarioConfig) -> ModulusFloor:
    """Conversion-efficiency floor as a quadratic lower bound on alpha at fixed beams."""
    n = config.num_waveguides
    t_eh = alpha_linear_forms(channels.h_ehr, channels.g_phase, w_star, n)
    scaled = np.concatenate([np.sqrt(config.zeta[q]) * t_eh[q] for q in range(t_eh.shape[0])])
    den = config.phi * float(np.sum(np.abs(w_star) ** 2)) + config.num_ehrs * config.p_circuit
    return ModulusFloor(scaled, config.rho_min * den, "conversion efficiency floor")
