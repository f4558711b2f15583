"""Single-IDR / single-EHR solvers: fractional-programming upper level and
MMSE-based ratio refinement.

The upper level maximizes conversion efficiency over the beamformer and the
discrete positions by combining a parametric difference iteration with
alternating updates: the beam direction mixes the two effective channels
through a nonnegative scalar found by one-dimensional search, transmit power
sits at the budget whenever the rate floor allows it, and positions come from
exhaustive enumeration. The lower level then refines the radiation ratios for
the data rate inside the feasible region the upper level certifies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import convex_core
from .channel import alpha_linear_forms, build_channel_set, waveguide_aggregate
from .convex_core import QcqpProblem, fix_phase, solve_qcqp
from .radiation import (
    AlphaFeasibleRegion,
    equal_power_alpha,
    feasible_region_two_user,
)
from .report import SolveReport
from .scenario import Placement, ScenarioConfig, UserLayout, enumerate_placements


class DegenerateChannel(ValueError):
    """Effective channel with zero energy; direction functions undefined."""


class InfeasibleLambda(ValueError):
    """No transmit power in (0, p_max] meets the rate floor at this mixing value."""


class InfeasibleScenario(RuntimeError):
    """No candidate (placement, mixing value) satisfies the floors."""


@dataclass(frozen=True)
class DirectionPair:
    """Normalized beam gains toward the information and energy receivers."""

    f_id: float
    f_eh: float
    big_c: float    # ||c||^2
    big_d: float    # ||d||^2
    delta0: float   # Re{c^H d}


def direction_functions(c1: np.ndarray, d1: np.ndarray, lambda0: float) -> DirectionPair:
    """Gains of the mixed beam (c + lambda d) projected on each receiver channel.

    f_id = (C + l*delta)^2 / q(l) and f_eh = (delta + l*D)^2 / q(l) with
    q(l) = C + 2 l delta + l^2 D = ||c + l d||^2.
    """
    big_c = float(np.linalg.norm(c1) ** 2)
    big_d = float(np.linalg.norm(d1) ** 2)
    if big_c <= 0.0 or big_d <= 0.0:
        raise DegenerateChannel("zero effective channel")
    delta0 = float(np.real(np.vdot(c1, d1)))
    q_val = big_c + 2.0 * lambda0 * delta0 + lambda0**2 * big_d
    f_id = (big_c + lambda0 * delta0) ** 2 / q_val
    f_eh = (delta0 + lambda0 * big_d) ** 2 / q_val
    return DirectionPair(f_id=f_id, f_eh=f_eh, big_c=big_c, big_d=big_d, delta0=delta0)


def align_ehr_phase(c1: np.ndarray, d1: np.ndarray) -> np.ndarray:
    """Rotate the energy channel so c^H d is real nonnegative.

    A unit-phase rotation of d changes neither |d^H w| nor the span of the
    mixing family, and it makes the direction-function formulas exact rather
    than real-part lower bounds.
    """
    inner = np.vdot(c1, d1)
    if abs(inner) == 0.0:
        return np.asarray(d1, dtype=complex)
    return np.asarray(d1, dtype=complex) * np.exp(-1j * np.angle(inner))


def p0_star(lambda0: float, c1: np.ndarray, d1: np.ndarray,
            config: ScenarioConfig) -> float:
    """Largest feasible transmit power for the mixed beam at this mixing value.

    The rate floor imposes p >= gamma * sigma^2 / f_id(lambda0); the budget
    caps p at p_max. Returns p_max or raises when the floor exceeds it.
    """
    pair = direction_functions(c1, d1, lambda0)
    if pair.f_id <= 0.0:
        raise InfeasibleLambda("mixed beam is orthogonal to the rate user")
    p_floor = config.gamma_min * config.noise_power / pair.f_id
    if p_floor > config.p_max * (1.0 + 1e-12):
        raise InfeasibleLambda(
            f"rate floor needs {p_floor:.3e} W, budget is {config.p_max:.3e} W")
    return config.p_max


def mixed_beam(c1: np.ndarray, d1: np.ndarray, lambda0: float, p0: float) -> np.ndarray:
    """Beamformer sqrt(p) (c + lambda d) / ||c + lambda d||."""
    direction = c1 + lambda0 * d1
    return np.sqrt(p0) * direction / np.linalg.norm(direction)


def dinkelbach_beta_update(w1: np.ndarray, d1: np.ndarray,
                           config: ScenarioConfig) -> float:
    """Ratio of harvested power to consumed power at the current beam."""
    harvested = config.zeta[0] * abs(np.vdot(d1, w1)) ** 2
    consumed = config.phi * float(np.real(np.vdot(w1, w1))) + config.p_circuit
    return float(harvested / consumed)


def lambda0_search_grid(c1: np.ndarray, d1: np.ndarray, points: int = 201,
                        saturation: float = 0.999) -> np.ndarray:
    """Zero plus a geometric grid reaching the energy-gain saturation plateau."""
    pair0 = direction_functions(c1, d1, 0.0)
    scale = np.sqrt(pair0.big_c / pair0.big_d)
    lam_hi = max(scale, 1e-6)
    for _ in range(200):
        if direction_functions(c1, d1, lam_hi).f_eh >= saturation * pair0.big_d:
            break
        lam_hi *= 2.0
    lam_lo = lam_hi * 1e-8
    grid = np.concatenate([[0.0], np.geomspace(lam_lo, lam_hi, points - 1)])
    return grid


def _golden_refine(fun, lo, hi, iters=40):
    """Deterministic golden-section maximization of a unimodal section."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return (a + b) / 2.0


@dataclass
class TwoUserState:
    """Converged upper-level solution for the single-IDR / single-EHR scenario."""

    beta0: float
    lambda0: float
    p0: float
    w1: np.ndarray
    placement: Placement
    region: AlphaFeasibleRegion
    report: SolveReport


def _placement_table(config, layout, placements, alpha):
    """Effective channel pair (phase-aligned) per candidate placement."""
    table = []
    for placement in placements:
        channels = build_channel_set(placement, layout, config)
        c1 = np.conj(waveguide_aggregate(channels.h_idr, channels.g_phase, alpha,
                                         config.num_waveguides)[0])
        d1_raw = np.conj(waveguide_aggregate(channels.h_ehr, channels.g_phase, alpha,
                                             config.num_waveguides)[0])
        d1 = align_ehr_phase(c1, d1_raw)
        table.append((placement, channels, c1, d1))
    return table


def solve_two_user_pce(config: ScenarioConfig, layout: UserLayout,
                       lambda0_grid: np.ndarray | None = None,
                       refine: bool = True,
                       candidates: list[Placement] | None = None) -> TwoUserState:
    """Upper-level conversion-efficiency maximization for one IDR and one EHR.

    Outer parametric-difference loop over the auxiliary ratio; inner exhaustive
    argmax over (placement, mixing value) with transmit power pinned at the
    budget. Radiation ratios stay at the equal split here; the feasible region
    they may later move in is returned alongside the beam and positions.
    """
    if config.num_idrs != 1 or config.num_ehrs != 1:
        raise ValueError("two-user solver expects exactly one IDR and one EHR")
    start = time.perf_counter()
    alpha = equal_power_alpha(config)
    placements = candidates if candidates is not None else enumerate_placements(config)
    if placements is None:
        raise ValueError("placement set too large to enumerate; pass explicit candidates")
    if not placements:
        raise InfeasibleScenario("no valid placements on the candidate grid")
    table = _placement_table(config, layout, placements, alpha)

    sigma2 = config.noise_power
    zeta1 = config.zeta[0]
    den = config.phi * config.p_max + config.p_circuit

    def candidate_value(c1, d1, lam):
        """(num, den, p0) of the parametric objective, or None when infeasible."""
        pair = direction_functions(c1, d1, lam)
        if pair.f_id <= 0.0:
            return None
        p_floor = config.gamma_min * sigma2 / pair.f_id
        if p_floor > config.p_max * (1.0 + 1e-12):
            return None
        harvested = zeta1 * config.p_max * pair.f_eh
        if harvested < config.p_min * (1.0 - 1e-12):
            return None
        return harvested, den, config.p_max

    report = SolveReport()
    beta = 0.0
    best = None
    converged = False
    for it in range(config.max_outer_iters):
        best = None
        for idx, (placement, channels, c1, d1) in enumerate(table):
            grid = (lambda0_grid if lambda0_grid is not None
                    else lambda0_search_grid(c1, d1))
            vals = []
            for lam in grid:
                cand = candidate_value(c1, d1, lam)
                if cand is None:
                    vals.append(-np.inf)
                    continue
                num, d_val, p0 = cand
                vals.append(num - beta * d_val)
            vals = np.asarray(vals)
            if not np.any(np.isfinite(vals)):
                continue
            j = int(np.argmax(vals))
            lam_best, val_best = float(grid[j]), float(vals[j])
            if refine and 0 < j < len(grid) - 1:
                def section(lam):
                    cand = candidate_value(c1, d1, lam)
                    return -np.inf if cand is None else cand[0] - beta * cand[1]
                lam_ref = _golden_refine(section, grid[j - 1], grid[j + 1])
                if section(lam_ref) > val_best:
                    lam_best, val_best = lam_ref, section(lam_ref)
            key = (val_best, -idx)  # deterministic placement tie-break
            if best is None or key > (best[0], -best[1]):
                best = (val_best, idx, lam_best)
        if best is None:
            raise InfeasibleScenario("no (placement, mixing value) meets the floors")
        val, idx, lam = best
        placement, channels, c1, d1 = table[idx]
        num, d_val, p0 = candidate_value(c1, d1, lam)
        residual = num - beta * d_val
        report.objective_trace.append(beta)
        report.aux_trace.append({"iteration": it, "beta": beta, "lambda0": lam,
                                 "p0": p0, "objective": val,
                                 "residual": residual})
        if residual / d_val < config.solver_tol and it >= 1:
            converged = True
            break
        beta = num / d_val

    val, idx, lam = best
    placement, channels, c1, d1 = table[idx]
    p0 = p0_star(lam, c1, d1, config)
    w1 = mixed_beam(c1, d1, lam, p0).reshape(-1, 1)
    beta = dinkelbach_beta_update(w1[:, 0], d1, config)

    forms_i = alpha_linear_forms(channels.h_idr, channels.g_phase, w1,
                                 config.num_waveguides)[0, 0]
    forms_e = alpha_linear_forms(channels.h_ehr, channels.g_phase, w1,
                                 config.num_waveguides)[0, 0]
    region = feasible_region_two_user(np.conj(forms_i), np.conj(forms_e), config,
                                      reference=alpha)
    report.converged = converged
    report.iterations = len(report.aux_trace)
    report.runtime_s = time.perf_counter() - start
    report.feasible = True
    return TwoUserState(beta0=beta, lambda0=lam, p0=p0, w1=w1[:, 0],
                        placement=placement, region=region, report=report)


def wmmse_filter(e_i: complex, noise: float) -> complex:
    """Scalar MMSE receive filter e / (|e|^2 + sigma^2)."""
    return e_i / (abs(e_i) ** 2 + noise)


def _region_constraints(region: AlphaFeasibleRegion, alpha_ref: np.ndarray):
    """Phase-fixed convex restriction of the region, tight at the reference.

    The imaginary part of the harvest form is pinned to zero only when that
    floor is close to binding (within a factor four); a deeply slack floor
    keeps the plain half-space restriction, which leaves the iteration free
    to rotate the received phase.
    """
    n_dim = alpha_ref.size
    lin_rows, lin_rhs = [], []
    eq_rows, eq_rhs = [], []
    pinned = None
    pinned_row = -1
    for floor in region.modulus_floors:
        phi = np.conj(floor.forms[0])
        fixed = fix_phase(phi, alpha_ref, floor.threshold)
        lin_rows.append(-fixed.re_row)
        lin_rhs.append(-np.sqrt(floor.threshold))
        if "harvest" in floor.label and floor.threshold > 0:
            near_binding = abs(np.conj(phi) @ alpha_ref) ** 2 < 4.0 * floor.threshold
            if near_binding:
                eq_rows.append(fixed.im_row)
                eq_rhs.append(0.0)
                pinned = fixed
                pinned_row = len(lin_rows) - 1
    quad = []
    per = region.pas_per_waveguide
    for n in range(region.num_waveguides):
        sel = np.zeros((n_dim, n_dim))
        idx = slice(n * per, (n + 1) * per)
        sel[idx, idx] = np.eye(per)
        quad.append((sel, np.zeros(n_dim), -region.norm_upper**2))
    lin_a = np.vstack([np.asarray(lin_rows), -np.eye(n_dim)]) if lin_rows else -np.eye(n_dim)
    lin_b = (np.concatenate([np.asarray(lin_rhs), np.zeros(n_dim)]) if lin_rhs
             else np.zeros(n_dim))
    eq_a = np.asarray(eq_rows) if eq_rows else None
    eq_b = np.asarray(eq_rhs) if eq_rhs else None
    return lin_a, lin_b, eq_a, eq_b, quad, pinned, pinned_row


def solve_two_user_sum_rate(state: TwoUserState, config: ScenarioConfig,
                            layout: UserLayout,
                            alpha0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """Lower-level rate maximization over the radiation ratios.

    Alternates the scalar MMSE filter with the phase-fixed convex quadratic
    program inside the certified region. The plain MMSE step improves the
    rate by only O(sigma^2 / |e|^2) per round, which stalls at high SNR, so
    each round also takes a phase-rotated linear ascent step over the same
    restricted region; both steps share their fixed points and the rate trace
    stays non-decreasing.
    """
    start = time.perf_counter()
    channels = build_channel_set(state.placement, layout, config)
    w1 = state.w1.reshape(-1, 1)
    t_i = alpha_linear_forms(channels.h_idr, channels.g_phase, w1,
                             config.num_waveguides)[0, 0]
    region = state.region
    n_dim = config.num_waveguides * config.pas_per_waveguide
    alpha = equal_power_alpha(config) if alpha0 is None else np.asarray(alpha0, float)
    if not region.contains(alpha, tol=1e-7):
        from .radiation import probe_feasible
        found = probe_feasible(region, reference=alpha)
        if found is None:
            raise InfeasibleScenario("no feasible starting ratios for the refinement")
        alpha = found

    sigma2 = config.noise_power
    report = SolveReport()
    rate_of = lambda a: float(np.log2(1.0 + abs(t_i @ a) ** 2 / sigma2))
    last_cert = None
    eta_mult = 0.0
    pin_residual = 0.0
    rate = rate_of(alpha)
    report.objective_trace.append(rate)
    for it in range(config.max_outer_iters):
        e_i = complex(t_i @ alpha)
        u = wmmse_filter(e_i, sigma2)
        lin_a, lin_b, eq_a, eq_b, quad, pinned, pinned_row = _region_constraints(region, alpha)

        # MMSE-equivalent quadratic step (exact subproblem of the refinement)
        q_mat = abs(u) ** 2 * np.real(np.outer(t_i, np.conj(t_i)))
        q_lin = -2.0 * np.real(np.conj(u) * t_i)
        problem = QcqpProblem(n=n_dim, q_mat=q_mat, q_lin=q_lin,
                              lin_a=lin_a, lin_b=lin_b, eq_a=eq_a, eq_b=eq_b,
                              quad=quad)
        alpha_mse, cert = solve_qcqp(problem, tol=1e-8, growth=config.scaling_factor)
        if rate_of(alpha_mse) >= rate:
            alpha, rate, last_cert = alpha_mse, rate_of(alpha_mse), cert

        # phase-rotated linear ascent over the same restriction: maximizes
        # Re{e^{-j angle(e)} t @ alpha}, tight at the reference, removing the
        # high-SNR crawl of the plain MMSE update
        theta = float(np.angle(t_i @ alpha)) if abs(t_i @ alpha) > 0 else 0.0
        boost_row = np.real(np.exp(-1j * theta) * t_i)
        lin_a, lin_b, eq_a, eq_b, quad, pinned, pinned_row = _region_constraints(region, alpha)
        boost = QcqpProblem(n=n_dim, q_lin=-boost_row,
                            lin_a=lin_a, lin_b=lin_b, eq_a=eq_a, eq_b=eq_b,
                            quad=quad)
        alpha_boost, cert_boost = solve_qcqp(boost, tol=1e-8, growth=config.scaling_factor)
        if rate_of(alpha_boost) > rate:
            alpha, rate, last_cert = alpha_boost, rate_of(alpha_boost), cert_boost

        report.objective_trace.append(rate)
        report.aux_trace.append({"iteration": it, "u_re": u.real, "u_im": u.imag,
                                 "rate": rate})
        if pinned is not None and last_cert is not None \
                and len(last_cert.multipliers["lin"]) > pinned_row >= 0:
            eta_mult = float(last_cert.multipliers["lin"][pinned_row])
            pin_residual = abs(pinned.re_row @ alpha - np.sqrt(pinned.threshold))
        if it >= 1 and abs(report.objective_trace[-1] - report.objective_trace[-2]) \
                < config.solver_tol * max(1.0, rate):
            report.converged = True
            break
    report.iterations = len(report.aux_trace)
    report.runtime_s = time.perf_counter() - start
    if last_cert is not None:
        report.kkt_residuals = {
            "primal": last_cert.primal_residual,
            "dual": last_cert.dual_residual,
            "complementarity": last_cert.complementarity,
            "eta": eta_mult,
            "harvest_pin_residual": pin_residual,
        }
    return alpha, report
