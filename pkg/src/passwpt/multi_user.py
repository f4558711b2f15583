"""Unified surrogate-based solver for the multi-user network.

Both objectives (conversion efficiency and sum rate) run the same loop:
closed-form auxiliary tightening, a convex beamformer update, a discrete
position argmax, and a convex radiation-ratio update inside the certified
feasible region. The quadratic-transform surrogate handles the fractional
efficiency objective; the rate surrogate replaces each log term with its
tight concave lower bound. Every step preserves feasibility and the true
objective trace is non-decreasing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .channel import (
    ChannelSet,
    alpha_linear_forms,
    build_channel_set,
    effective_channels,
    waveguide_aggregate,
)
from .convex_core import QcqpProblem, complex_form_rows, solve_qcqp
from .metrics import evaluate_metrics, harvested_power, pce, sinr, sum_rate, transmit_power
from .radiation import (
    AlphaFeasibleRegion,
    equal_power_alpha,
    feasible_region_multi,
    pce_floor,
)
from .report import SolveReport
from .scenario import (
    Placement,
    ScenarioConfig,
    UserLayout,
    enumerate_placements,
    enumerate_row_choices,
    placement_neighbors,
)


class InfeasibleStart(RuntimeError):
    """No beamformer within the budget meets the floors at the initial point."""


# ---------------------------------------------------------------------------
# real lifting helpers for beamformer-space programs
# ---------------------------------------------------------------------------

def bilinear_form_rows(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real rows of the unconjugated form r^T z on the lifted vector [Re z; Im z]."""
    re = np.concatenate([np.real(r), -np.imag(r)])
    im = np.concatenate([np.imag(r), np.real(r)])
    return re, im


def hermitian_real_quad(a_mat: np.ndarray) -> np.ndarray:
    """Real symmetric matrix Q with z^H A z = x^T Q x for Hermitian A."""
    return np.block([[np.real(a_mat), -np.imag(a_mat)],
                     [np.imag(a_mat), np.real(a_mat)]])


def beam_form_vector(row: np.ndarray, beam: int, num_beams: int) -> np.ndarray:
    """Coefficients r with r^T vec(W) = row @ w_beam (column-major stacking)."""
    n = row.size
    r = np.zeros(n * num_beams, dtype=complex)
    r[beam * n:(beam + 1) * n] = row
    return r


def lift_w(w: np.ndarray) -> np.ndarray:
    z = w.reshape(-1, order="F")
    return np.concatenate([z.real, z.imag])


def unlift_w(x: np.ndarray, n: int, k: int) -> np.ndarray:
    half = x.size // 2
    z = x[:half] + 1j * x[half:]
    return z.reshape((n, k), order="F")


def sinr_soc_constraint(rows_id: np.ndarray, k: int, w_ref: np.ndarray,
                        gamma_req: float, noise: float):
    """Cone ||(sqrt(g) interference, sqrt(g*noise))|| <= Re{rotated desired beam}."""
    n, num_k = w_ref.shape
    a_rows, b_vals = [], []
    for j in range(num_k):
        if j == k:
            continue
        r = beam_form_vector(rows_id[k], j, num_k)
        re, im = bilinear_form_rows(r)
        a_rows.append(np.sqrt(gamma_req) * re)
        a_rows.append(np.sqrt(gamma_req) * im)
        b_vals.append(0.0)
        b_vals.append(0.0)
    a_rows.append(np.zeros(2 * n * num_k))
    b_vals.append(-np.sqrt(gamma_req * noise))
    s_kk_ref = rows_id[k] @ w_ref[:, k]
    theta = float(np.angle(s_kk_ref)) if abs(s_kk_ref) > 0 else 0.0
    r_des = np.exp(-1j * theta) * beam_form_vector(rows_id[k], k, num_k)
    c_row, _ = bilinear_form_rows(r_des)
    return np.asarray(a_rows), np.asarray(b_vals), c_row, 0.0


def harvest_cs_constraint(rows_eh: np.ndarray, q: int, w_ref: np.ndarray,
                          zeta_q: float, p_floor: float):
    """Linear restriction Re{u^H v_q(W)} >= sqrt(p_floor), tight at the reference."""
    n, num_k = w_ref.shape
    v_ref = np.sqrt(zeta_q) * (rows_eh[q] @ w_ref)
    norm = np.linalg.norm(v_ref)
    if norm < 1e-30:
        u = np.zeros(num_k, dtype=complex)
        u[0] = 1.0
    else:
        u = v_ref / norm
    combined = np.zeros(2 * n * num_k)
    for k in range(num_k):
        r = np.sqrt(zeta_q) * beam_form_vector(rows_eh[q], k, num_k)
        re, im = bilinear_form_rows(r)
        # Re{conj(u_k) (p + j q)} = Re(u_k) p + Im(u_k) q
        combined += np.real(u[k]) * re + np.imag(u[k]) * im
    return combined, np.sqrt(p_floor)


def min_power_beamforming(rows_id: np.ndarray, rows_eh: np.ndarray,
                          config: ScenarioConfig, gamma_req: float | None = None,
                          enforce_harvest: bool = True,
                          w0: np.ndarray | None = None,
                          max_rounds: int = 40,
                          tol: float | None = None,
                          keep_history: bool = False):
    """Transmit-power minimization under SINR floors and optional harvest floors.

    Successive convex restriction: each round rotates the desired-signal
    phases and the harvest references at the incumbent, then solves the
    resulting SOCP. Returns (W, per-round power trace, feasible_flag).
    """
    n = rows_id.shape[1]
    num_k = rows_id.shape[0]
    num_q = rows_eh.shape[0] if rows_eh is not None else 0
    gamma = config.gamma_min if gamma_req is None else gamma_req
    tol = config.solver_tol if tol is None else tol
    if w0 is None:
        w = np.stack([np.conj(rows_id[k]) / np.linalg.norm(rows_id[k])
                      for k in range(num_k)], axis=1)
        w = w * np.sqrt(config.p_max / max(transmit_power(w), 1e-30))
        if enforce_harvest and num_q:
            # seed a small energy component so the harvest references are defined
            for q in range(num_q):
                w[:, 0] += 0.1 * np.sqrt(config.p_max) \
                    * np.conj(rows_eh[q]) / np.linalg.norm(rows_eh[q]) / num_q
            w = w * np.sqrt(config.p_max / max(transmit_power(w), 1e-30))
    else:
        w = np.array(w0, dtype=complex)
    dim = 2 * n * num_k
    trace = []
    history = []
    feasible = True
    warm = None
    for _ in range(max_rounds):
        soc = [sinr_soc_constraint(rows_id, k, w, gamma, config.noise_power)
               for k in range(num_k)]
        lin_rows, lin_rhs = [], []
        if enforce_harvest and num_q:
            for q in range(num_q):
                row, rhs = harvest_cs_constraint(rows_eh, q, w,
                                                 config.zeta[q], config.p_min)
                lin_rows.append(-row)
                lin_rhs.append(-rhs)
        problem = QcqpProblem(
            n=dim, q_mat=np.eye(dim), q_lin=np.zeros(dim),
            lin_a=np.asarray(lin_rows) if lin_rows else None,
            lin_b=np.asarray(lin_rhs) if lin_rhs else None,
            soc=list(soc),
        )
        p_est = max(transmit_power(w), config.p_max)
        try:
            x, _ = solve_qcqp(problem, tol=1e-8, growth=2.0, x0=warm,
                              var_scale=np.sqrt(p_est / dim))
        except Exception:
            feasible = False
            break
        w_new = unlift_w(x, n, num_k)
        power = transmit_power(w_new)
        trace.append(power)
        history.append(w_new)
        if len(trace) >= 2 and abs(trace[-2] - power) <= tol * max(power, 1e-30):
            w = w_new
            break
        w = w_new
        # inflating the incumbent keeps every floor strictly slack: a valid
        # warm start for the re-rotated program of the next round
        warm = lift_w(1.05 * w)
    if keep_history:
        return w, trace, feasible, history
    return w, trace, feasible


# ---------------------------------------------------------------------------
# conversion-efficiency surrogate machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PceAux:
    """Quadratic-transform auxiliaries for the efficiency ratio."""

    u_e: np.ndarray   # (Q*K,) unit-ball vector
    rho: complex


@dataclass(frozen=True)
class SrAux:
    """Rate-surrogate auxiliaries: per-user ratio and MMSE-like scalar."""

    gamma: np.ndarray  # (K,) nonnegative
    nu: np.ndarray     # (K,) complex


@dataclass(frozen=True)
class SurrogateValue:
    value: float
    tight_at_reference: bool


def stack_harvest_forms(eff_d: np.ndarray, w: np.ndarray,
                        zeta: tuple[float, ...]) -> np.ndarray:
    """v[q*K + k] = sqrt(zeta_q) d_q^H w_k."""
    num_q = eff_d.shape[0]
    num_k = w.shape[1]
    v = np.empty(num_q * num_k, dtype=complex)
    for q in range(num_q):
        v[q * num_k:(q + 1) * num_k] = np.sqrt(zeta[q]) * (np.conj(eff_d[q]) @ w)
    return v


def pce_denominator(w: np.ndarray, config: ScenarioConfig) -> float:
    return config.phi * transmit_power(w) + config.num_ehrs * config.p_circuit


def pce_aux_update(eff, w: np.ndarray, config: ScenarioConfig,
                   eps: float = 1e-12) -> PceAux:
    """Closed-form auxiliaries making the quadratic-transform surrogate tight."""
    v = stack_harvest_forms(eff.d, w, config.zeta)
    u_e = v / max(np.linalg.norm(v), eps)
    rho = complex(np.vdot(u_e, v) / pce_denominator(w, config))
    return PceAux(u_e=u_e, rho=rho)


def pce_surrogate(aux: PceAux, eff, w: np.ndarray,
                  config: ScenarioConfig) -> SurrogateValue:
    """2 Re{rho* u^H v} - |rho|^2 den; equals the true ratio at tight auxiliaries."""
    v = stack_harvest_forms(eff.d, w, config.zeta)
    den = pce_denominator(w, config)
    value = float(2.0 * np.real(np.conj(aux.rho) * np.vdot(aux.u_e, v))
                  - abs(aux.rho) ** 2 * den)
    truth = float(np.linalg.norm(v) ** 2 / den)
    return SurrogateValue(value=value, tight_at_reference=abs(value - truth) < 1e-9)


def _pce_beam_coefficients(aux: PceAux, eff_d: np.ndarray,
                           config: ScenarioConfig) -> np.ndarray:
    """Per-beam linear coefficients a_k = rho sum_q sqrt(zeta_q) u_qk d_q."""
    num_q, n = eff_d.shape
    num_k = aux.u_e.size // num_q
    a = np.zeros((n, num_k), dtype=complex)
    for k in range(num_k):
        for q in range(num_q):
            a[:, k] += np.sqrt(config.zeta[q]) * aux.rho \
                * aux.u_e[q * num_k + k] * eff_d[q]
    return a


def pce_w_closed_form(aux: PceAux, eff_d: np.ndarray,
                      config: ScenarioConfig) -> tuple[np.ndarray, float]:
    """Stationary beamformer of the efficiency surrogate under the power budget.

    w_k = a_k / (|rho|^2 phi + mu) with mu = 0 when the unconstrained point
    fits the budget, otherwise the rescaling root that lands exactly on it.
    """
    a = _pce_beam_coefficients(aux, eff_d, config)
    if abs(aux.rho) < 1e-30:
        return np.zeros_like(a), 0.0
    base = abs(aux.rho) ** 2 * config.phi
    norm_a = np.linalg.norm(a)
    if norm_a ** 2 / base ** 2 <= config.p_max:
        mu = 0.0
    else:
        mu = norm_a / np.sqrt(config.p_max) - base
    return a / (base + mu), float(mu)


def pce_w_step(aux: PceAux, eff_d: np.ndarray,
               config: ScenarioConfig) -> np.ndarray:
    """Numeric optimum of the efficiency surrogate under the power budget alone."""
    a = _pce_beam_coefficients(aux, eff_d, config)
    n, num_k = a.shape
    if abs(aux.rho) < 1e-30:
        return np.zeros_like(a)
    dim = 2 * n * num_k
    a_flat = a.reshape(-1, order="F")
    lin = -2.0 * complex_form_rows(a_flat)[0]
    q_mat = abs(aux.rho) ** 2 * config.phi * np.eye(dim)
    problem = QcqpProblem(n=dim, q_mat=q_mat, q_lin=lin,
                          quad=[(np.eye(dim), np.zeros(dim), -config.p_max)])
    x, _ = solve_qcqp(problem, tol=1e-10, growth=2.0,
                      var_scale=np.sqrt(config.p_max / dim))
    return unlift_w(x, n, num_k)


# ---------------------------------------------------------------------------
# rate surrogate machinery
# ---------------------------------------------------------------------------

def sr_aux_update(eff, noise: float) -> SrAux:
    """Tight auxiliaries: gamma_k at the current ratio, nu_k the MMSE-like scalar."""
    s = eff.s
    num_k = s.shape[0]
    gamma = np.empty(num_k)
    nu = np.empty(num_k, dtype=complex)
    for k in range(num_k):
        total = float(np.sum(np.abs(s[k]) ** 2)) + noise
        desired = abs(s[k, k]) ** 2
        gamma[k] = desired / (total - desired)
        nu[k] = np.sqrt(1.0 + gamma[k]) * np.conj(s[k, k]) / total
    return SrAux(gamma=gamma, nu=nu)


def sr_surrogate(eff, aux: SrAux, noise: float) -> SurrogateValue:
    """Concave lower bound on the sum rate, tight right after the aux update."""
    s = eff.s
    num_k = s.shape[0]
    total_phi = 0.0
    for k in range(num_k):
        d_k = float(np.sum(np.abs(s[k]) ** 2)) + noise
        phi_k = (np.log1p(aux.gamma[k]) - aux.gamma[k]
                 + 2.0 * np.real(np.sqrt(1.0 + aux.gamma[k]) * aux.nu[k] * s[k, k])
                 - abs(aux.nu[k]) ** 2 * d_k)
        total_phi += phi_k
    value = float(total_phi / np.log(2.0))
    truth = sum_rate(eff, noise)
    return SurrogateValue(value=value, tight_at_reference=abs(value - truth) < 1e-9)


def sr_w_quadratic(aux: SrAux, rows_id: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-beam quadratic matrix and per-user linear coefficients of the surrogate."""
    num_k, n = rows_id.shape
    m = np.zeros((n, n), dtype=complex)
    for k in range(num_k):
        m += abs(aux.nu[k]) ** 2 * np.outer(np.conj(rows_id[k]), rows_id[k])
    # cross term 2 Re{sqrt(1+g) nu_k s_kk} as a_k^H w_k needs a_k conjugated
    a = np.stack([np.sqrt(1.0 + aux.gamma[k]) * np.conj(aux.nu[k] * rows_id[k])
                  for k in range(num_k)], axis=1)
    return m, a


def _w_surrogate_value(objective, aux, rows_id, rows_eh, w, config):
    """Fixed-aux surrogate value as a function of the beams alone."""
    if objective == "pce":
        v = np.concatenate([np.sqrt(config.zeta[q]) * (rows_eh[q] @ w)
                            for q in range(rows_eh.shape[0])])
        den = pce_denominator(w, config)
        return float(2.0 * np.real(np.conj(aux.rho) * np.vdot(aux.u_e, v))
                     - abs(aux.rho) ** 2 * den)
    s = rows_id @ w
    total = 0.0
    for k in range(rows_id.shape[0]):
        d_k = float(np.sum(np.abs(s[k]) ** 2)) + config.noise_power
        total += (np.log1p(aux.gamma[k]) - aux.gamma[k]
                  + 2.0 * np.real(np.sqrt(1.0 + aux.gamma[k]) * aux.nu[k] * s[k, k])
                  - abs(aux.nu[k]) ** 2 * d_k)
    return float(total / np.log(2.0))


def _restricted_w_solve(objective, aux, rows_id, rows_eh, w_ref, config,
                        gamma_req, enforce_floors=True):
    """One surrogate maximization under restrictions rotated at the reference."""
    n, num_k = w_ref.shape
    dim = 2 * n * num_k
    if objective == "pce":
        a = _pce_beam_coefficients(aux, np.conj(rows_eh), config)
        q_mat = abs(aux.rho) ** 2 * config.phi * np.eye(dim)
    else:
        m, a = sr_w_quadratic(aux, rows_id)
        q_mat = hermitian_real_quad(np.kron(np.eye(num_k), m))
    lin = -2.0 * complex_form_rows(a.reshape(-1, order="F"))[0]
    soc, lin_rows, lin_rhs = [], [], []
    if enforce_floors:
        for k in range(num_k):
            soc.append(sinr_soc_constraint(rows_id, k, w_ref, gamma_req,
                                           config.noise_power))
        for q in range(rows_eh.shape[0]):
            row, rhs = harvest_cs_constraint(rows_eh, q, w_ref,
                                             config.zeta[q], config.p_min)
            lin_rows.append(-row)
            lin_rhs.append(-rhs)
    problem = QcqpProblem(
        n=dim, q_mat=q_mat, q_lin=lin,
        lin_a=np.asarray(lin_rows) if lin_rows else None,
        lin_b=np.asarray(lin_rhs) if lin_rhs else None,
        quad=[(np.eye(dim), np.zeros(dim), -config.p_max)],
        soc=soc,
    )
    x, _ = solve_qcqp(problem, tol=1e-6, growth=3.0,
                      x0=lift_w(w_ref), var_scale=np.sqrt(config.p_max / dim))
    return unlift_w(x, n, num_k)


def sr_w_step(aux: SrAux, rows_id: np.ndarray, rows_eh: np.ndarray,
              w_ref: np.ndarray, config: ScenarioConfig,
              gamma_req: float, enforce_floors: bool = True,
              inner_rounds: int = 1) -> np.ndarray:
    """Maximize the rate surrogate over beams under budget and restricted floors.

    The restrictions rotate at the reference; `inner_rounds` > 1 re-rotates at
    each intermediate solution until the surrogate stops improving, which
    brings the step to the fixed point of its own restriction.
    """
    w = w_ref
    val = _w_surrogate_value("sr", aux, rows_id, rows_eh, w, config)
    for _ in range(max(inner_rounds, 1)):
        try:
            w_new = _restricted_w_solve("sr", aux, rows_id, rows_eh, w, config,
                                        gamma_req, enforce_floors)
        except Exception:
            break
        val_new = _w_surrogate_value("sr", aux, rows_id, rows_eh, w_new, config)
        if not np.isfinite(val_new) or val_new < val - 1e-12:
            break
        improved = val_new - val > 1e-6 * max(abs(val), 1e-30)
        w, val = w_new, val_new
        if not improved:
            break
    return w


# ---------------------------------------------------------------------------
# radiation-ratio steps
# ---------------------------------------------------------------------------

def region_restriction(region: AlphaFeasibleRegion, alpha_ref: np.ndarray):
    """Convex restriction of the region, tight at the reference ratios."""
    n_dim = alpha_ref.size
    lin_rows, lin_rhs, soc = [], [], []
    for floor in region.modulus_floors:
        t_rows = floor.forms
        v_ref = t_rows @ alpha_ref
        norm = np.linalg.norm(v_ref)
        if floor.threshold <= 0.0 or norm**2 > 1e6 * floor.threshold:
            # vacuous or 60 dB slack at the reference: the linearization could
            # only cut the set; membership is still checked on acceptance
            continue
        if norm < 1e-30:
            u = np.zeros(t_rows.shape[0], dtype=complex)
            u[0] = 1.0
        else:
            u = v_ref / norm
        row = np.real(np.conj(u) @ t_rows)
        lin_rows.append(-row)
        lin_rhs.append(-np.sqrt(floor.threshold))
    for fl in region.sinr_floors:
        if fl.gamma <= 0.0:
            continue
        if fl.margin(alpha_ref) > 1e6 * fl.gamma * fl.sigma2:
            continue
        m = fl.interference.shape[0] if fl.interference.size else 0
        a_rows = np.zeros((2 * m + 1, n_dim))
        b_vals = np.zeros(2 * m + 1)
        for j in range(m):
            a_rows[2 * j] = np.sqrt(fl.gamma) * np.real(fl.interference[j])
            a_rows[2 * j + 1] = np.sqrt(fl.gamma) * np.imag(fl.interference[j])
        b_vals[-1] = -np.sqrt(fl.gamma * fl.sigma2)
        val_ref = fl.desired @ alpha_ref
        theta = float(np.angle(val_ref)) if abs(val_ref) > 0 else 0.0
        c_row = np.real(np.exp(-1j * theta) * fl.desired)
        soc.append((a_rows, b_vals, c_row, 0.0))
    per = region.pas_per_waveguide
    quad = []
    for n in range(region.num_waveguides):
        sel = np.zeros((n_dim, n_dim))
        idx = slice(n * per, (n + 1) * per)
        sel[idx, idx] = np.eye(per)
        quad.append((sel, np.zeros(n_dim), -region.norm_upper**2))
    lin_a = np.vstack([np.asarray(lin_rows), -np.eye(n_dim)]) if lin_rows else -np.eye(n_dim)
    lin_b = (np.concatenate([np.asarray(lin_rhs), np.zeros(n_dim)]) if lin_rhs
             else np.zeros(n_dim))
    return lin_a, lin_b, quad, soc


def pce_alpha_step(aux: PceAux, channels: ChannelSet, w: np.ndarray,
                   region: AlphaFeasibleRegion, config: ScenarioConfig,
                   alpha_ref: np.ndarray, inner_rounds: int = 1,
                   tol: float = 1e-8):
    """Linear-objective program of the efficiency surrogate in the ratios.

    Restrictions are rotated at the reference and re-rotated `inner_rounds`
    times so the step reaches the fixed point of its own restriction.
    """
    num_k = w.shape[1]
    t_eh = alpha_linear_forms(channels.h_ehr, channels.g_phase, w,
                              config.num_waveguides)
    num_q = t_eh.shape[0]
    r = np.zeros(alpha_ref.size, dtype=complex)
    for q in range(num_q):
        for k in range(num_k):
            r += np.sqrt(config.zeta[q]) * np.conj(aux.rho) \
                * np.conj(aux.u_e[q * num_k + k]) * t_eh[q, k]
    lin_coeff = 2.0 * np.real(r)
    alpha, cert = alpha_ref, None
    val = lin_coeff @ alpha
    for _ in range(max(inner_rounds, 1)):
        lin_a, lin_b, quad, soc = region_restriction(region, alpha)
        problem = QcqpProblem(n=alpha_ref.size, q_lin=-lin_coeff,
                              lin_a=lin_a, lin_b=lin_b, quad=quad, soc=soc)
        alpha_new, cert_new = solve_qcqp(problem, tol=tol, growth=2.0)
        cert = cert_new  # certificate of the latest successful solve
        val_new = lin_coeff @ alpha_new
        if not np.isfinite(val_new) or val_new < val - 1e-12:
            break
        improved = val_new - val > 1e-6 * max(abs(val), 1e-30)
        alpha, val = alpha_new, val_new
        if not improved:
            break
    return alpha, cert


def sr_alpha_quadratic(aux: SrAux, channels: ChannelSet, w: np.ndarray,
                       num_waveguides: int):
    """Real quadratic form and linear coefficients of the rate surrogate in alpha."""
    t_id = alpha_linear_forms(channels.h_idr, channels.g_phase, w, num_waveguides)
    num_k = t_id.shape[0]
    n_dim = t_id.shape[2]
    b_mat = np.zeros((n_dim, n_dim), dtype=complex)
    r_b = np.zeros(n_dim, dtype=complex)
    for k in range(num_k):
        for j in range(num_k):
            b_mat += abs(aux.nu[k]) ** 2 * np.outer(t_id[k, j], np.conj(t_id[k, j]))
        r_b += np.sqrt(1.0 + aux.gamma[k]) * aux.nu[k] * t_id[k, k]
    return np.real(b_mat), np.real(r_b)


def sr_alpha_step(aux: SrAux, channels: ChannelSet, w: np.ndarray,
                  region: AlphaFeasibleRegion, config: ScenarioConfig,
                  alpha_ref: np.ndarray, inner_rounds: int = 1,
                  tol: float = 1e-8):
    """Convex quadratic program of the rate surrogate in the ratios."""
    b_real, r_real = sr_alpha_quadratic(aux, channels, w, config.num_waveguides)
    # symmetric PSD by construction; clip roundoff
    b_real = 0.5 * (b_real + b_real.T)
    if np.abs(b_real).max() < 1e-300 and np.abs(r_real).max() < 1e-300:
        return alpha_ref.copy(), None  # degenerate auxiliaries: objective constant
    alpha, cert = alpha_ref, None
    val = 2.0 * r_real @ alpha - alpha @ b_real @ alpha
    for _ in range(max(inner_rounds, 1)):
        lin_a, lin_b, quad, soc = region_restriction(region, alpha)
        problem = QcqpProblem(n=alpha_ref.size, q_mat=b_real, q_lin=-2.0 * r_real,
                              lin_a=lin_a, lin_b=lin_b, quad=quad, soc=soc)
        alpha_new, cert_new = solve_qcqp(problem, tol=tol, growth=2.0)
        cert = cert_new  # certificate of the latest successful solve
        val_new = 2.0 * r_real @ alpha_new - alpha_new @ b_real @ alpha_new
        if not np.isfinite(val_new) or val_new < val - 1e-12:
            break
        improved = val_new - val > 1e-6 * max(abs(val), 1e-30)
        alpha, val = alpha_new, val_new
        if not improved:
            break
    return alpha, cert


def sr_alpha_closed_form(aux: SrAux, channels: ChannelSet, w: np.ndarray,
                         config: ScenarioConfig,
                         ball_multipliers: np.ndarray | None = None,
                         ridge: float = 0.0) -> np.ndarray:
    """Stationary ratios (B + sum lambda_n P_n)^+ b for a given active set.

    With all multipliers zero this is the unconstrained stationary point of
    the surrogate; waveguide-ball multipliers add their selector blocks.
    """
    b_real, r_real = sr_alpha_quadratic(aux, channels, w, config.num_waveguides)
    n_dim = r_real.size
    per = config.pas_per_waveguide
    system = 0.5 * (b_real + b_real.T)
    if ball_multipliers is not None:
        for n, lam in enumerate(ball_multipliers):
            idx = slice(n * per, (n + 1) * per)
            system[idx, idx] += lam * np.eye(per)
    if ridge > 0:
        system = system + ridge * np.eye(n_dim)
    return np.linalg.pinv(system) @ r_real


# ---------------------------------------------------------------------------
# discrete position selection and the outer loop
# ---------------------------------------------------------------------------

def _floors_hold(eff, w, config, gamma_req, slack=1e-9):
    num_k = eff.s.shape[0]
    num_q = eff.d.shape[0]
    for k in range(num_k):
        if sinr(k, eff, config.noise_power) < gamma_req * (1.0 - slack) - 1e-30:
            return False
    for q in range(num_q):
        if harvested_power(q, eff, w, config.zeta[q]) < config.p_min * (1.0 - slack):
            return False
    return True


def _objective_value(objective, eff, w, config):
    if objective == "pce":
        return pce(eff, w, config)
    return sum_rate(eff, config.noise_power)


def x_select(candidates: list[tuple[Placement, ChannelSet]], w: np.ndarray,
             alpha: np.ndarray, config: ScenarioConfig, objective: str,
             gamma_req: float, incumbent_key=None):
    """Feasibility-preserving argmax of the true objective over placements.

    Ties break lexicographically on the coordinate tuple. Candidates that
    violate the floors at the current (beams, ratios) are skipped.
    """
    best = None
    for placement, channels in candidates:
        eff = effective_channels(channels, alpha, w, config.num_waveguides)
        if not _floors_hold(eff, w, config, gamma_req):
            continue
        value = _objective_value(objective, eff, w, config)
        key = (-value, placement.key())
        if best is None or key < best[0]:
            best = (key, placement, channels, eff, value)
    if best is None:
        return None
    return best[1], best[2], best[3], best[4]


def pce_x_select(candidates: list[tuple[Placement, ChannelSet]], w: np.ndarray,
                 alpha: np.ndarray, config: ScenarioConfig):
    """Efficiency argmax over an explicit placement set (ties lexicographic)."""
    picked = x_select(candidates, w, alpha, config, "pce", config.gamma_min)
    if picked is None:
        raise InfeasibleStart("no candidate placement keeps the floors satisfiable")
    return picked[0]


@dataclass
class MultiUserResult:
    w: np.ndarray
    placement: Placement
    alpha: np.ndarray
    region: AlphaFeasibleRegion | None
    report: SolveReport


def _seed_placement(config: ScenarioConfig) -> Placement:
    rows = enumerate_row_choices(config)
    if not rows:
        raise InfeasibleStart("candidate grid admits no valid antenna row")
    return Placement(x=np.asarray([rows[0]] * config.num_waveguides, dtype=float))


def _candidate_set(config, layout, placement, cache, full_set):
    """Placement candidates with cached channels: full set when small, else
    the incumbent's single-move neighborhood."""
    if full_set is not None:
        pls = full_set
    else:
        pls = [placement] + placement_neighbors(placement, config)
    out = []
    for p in pls:
        key = p.key()
        if key not in cache:
            cache[key] = build_channel_set(p, layout, config)
        out.append((p, cache[key]))
    return out


def _aux_for(objective, eff, w, config):
    if objective == "pce":
        return pce_aux_update(eff, w, config)
    return sr_aux_update(eff, config.noise_power)


def _w_block(objective, channels, w, alpha, eff, config, gamma_req,
             cap: int, stall: float):
    """Beam block: alternate closed-form auxiliaries with restricted solves
    until the true objective stalls. Every accepted sub-step keeps the floors
    and never lowers the objective."""
    rows_id = waveguide_aggregate(channels.h_idr, channels.g_phase, alpha,
                                  config.num_waveguides)
    rows_eh = waveguide_aggregate(channels.h_ehr, channels.g_phase, alpha,
                                  config.num_waveguides)
    val = _objective_value(objective, eff, w, config)
    for _ in range(cap):
        aux = _aux_for(objective, eff, w, config)
        try:
            if objective == "pce":
                w_new = _restricted_w_solve("pce", aux, rows_id, rows_eh, w,
                                            config, gamma_req, True)
            else:
                w_new = _restricted_w_solve("sr", aux, rows_id, rows_eh, w,
                                            config, gamma_req, True)
        except Exception:
            break
        if transmit_power(w_new) > config.p_max * (1 + 1e-9):
            break
        eff_new = effective_channels(channels, alpha, w_new, config.num_waveguides)
        if not _floors_hold(eff_new, w_new, config, gamma_req):
            break
        val_new = _objective_value(objective, eff_new, w_new, config)
        if val_new < val - 1e-18:
            break
        w, eff, gain, val = w_new, eff_new, val_new - val, val_new
        # uniform power rescaling to the budget is monotone-safe when it
        # helps; it breaks the slow power creep at high SNR
        scaled = w * np.sqrt(0.999 * config.p_max / max(transmit_power(w), 1e-30))
        eff_scaled = effective_channels(channels, alpha, scaled,
                                        config.num_waveguides)
        if _floors_hold(eff_scaled, scaled, config, gamma_req):
            val_scaled = _objective_value(objective, eff_scaled, scaled, config)
            if val_scaled > val:
                w, eff, gain, val = scaled, eff_scaled, val_scaled - val, val_scaled
        if gain <= stall * max(abs(val), 1e-30):
            break
    return w, eff, val


def _alpha_block(objective, channels, w, alpha, eff, config, gamma_req,
                 cap: int, stall: float):
    """Ratio block: alternate auxiliaries with region-restricted solves."""
    val = _objective_value(objective, eff, w, config)
    cert_out = None
    for _ in range(cap):
        aux = _aux_for(objective, eff, w, config)
        extra = (pce_floor(channels, w, config),) if objective == "sr" else ()
        region = feasible_region_multi(channels, w, config, gamma_req=gamma_req,
                                       extra_floors=extra, reference=alpha,
                                       check=False)
        try:
            if objective == "pce":
                alpha_new, cert = pce_alpha_step(aux, channels, w, region,
                                                 config, alpha, inner_rounds=1,
                                                 tol=1e-6)
            else:
                alpha_new, cert = sr_alpha_step(aux, channels, w, region,
                                                config, alpha, inner_rounds=1,
                                                tol=1e-6)
        except Exception:
            break
        alpha_new = np.clip(alpha_new, 0.0, None)
        eff_new = effective_channels(channels, alpha_new, w, config.num_waveguides)
        if not _floors_hold(eff_new, w, config, gamma_req, slack=1e-7):
            break
        val_new = _objective_value(objective, eff_new, w, config)
        if val_new < val - 1e-18:
            break
        if cert is not None:
            cert_out = cert
        alpha, eff, gain, val = alpha_new, eff_new, val_new - val, val_new
        if gain <= stall * max(abs(val), 1e-30):
            break
    return alpha, eff, val, cert_out


def _pce_mixing_start(channels, w_rate, config: ScenarioConfig,
                      gamma_req: float):
    """Two-direction initializer for the efficiency objective.

    Beams are scanned along the segment between the floor-satisfying
    minimum-power solution and the dominant harvest direction, while the
    ratios are scanned between the equal split and a harvest-weighted split;
    the best floor-feasible combination seeds the block iteration. This is
    the multi-beam analog of the two-channel mixing the single-pair solver
    searches over.
    """
    n = config.num_waveguides
    alpha_eq = equal_power_alpha(config)
    per = config.pas_per_waveguide
    # harvest-weighted ratio profile from per-antenna energy coupling
    weights = np.zeros(n * per)
    for q in range(channels.h_ehr.shape[0]):
        weights += config.zeta[q] * np.abs(channels.h_ehr[q]) ** 2
    weights = np.sqrt(weights)
    alpha_eh = np.zeros_like(weights)
    for wg in range(n):
        block = weights[wg * per:(wg + 1) * per]
        norm = np.linalg.norm(block)
        alpha_eh[wg * per:(wg + 1) * per] = block / norm if norm > 0 else \
            np.sqrt(1.0 / per)
    best = None
    for upsilon in np.linspace(0.0, 0.9, 7):
        alpha = (1.0 - upsilon) * alpha_eq + upsilon * alpha_eh
        blocks = alpha.reshape(n, per)
        norms = np.maximum(np.linalg.norm(blocks, axis=1, keepdims=True), 1e-30)
        alpha = (blocks / norms).ravel()
        rows_eh = waveguide_aggregate(channels.h_ehr, channels.g_phase, alpha, n)
        m_eh = np.zeros((n, n), dtype=complex)
        for q in range(rows_eh.shape[0]):
            m_eh += config.zeta[q] * np.outer(np.conj(rows_eh[q]), rows_eh[q])
        eigvals, eigvecs = np.linalg.eigh(0.5 * (m_eh + m_eh.conj().T))
        h_dom = eigvecs[:, -1]
        num_k = w_rate.shape[1]
        w_harv = np.tile(h_dom[:, None], (1, num_k)) / np.sqrt(num_k)
        w_harv *= np.sqrt(transmit_power(w_rate) / max(transmit_power(w_harv), 1e-30))
        for tau in np.linspace(0.0, 0.95, 13):
            w_mix = (1.0 - tau) * w_rate + tau * w_harv
            power = transmit_power(w_mix)
            w_mix = w_mix * np.sqrt(0.999 * config.p_max / max(power, 1e-30))
            eff = effective_channels(channels, alpha, w_mix, n)
            if not _floors_hold(eff, w_mix, config, gamma_req):
                continue
            value = pce(eff, w_mix, config)
            if best is None or value > best[0]:
                best = (value, w_mix, alpha)
    return best


def solve_multi_user(config: ScenarioConfig, layout: UserLayout, objective: str,
                     warm_start: tuple | None = None,
                     candidates: list[Placement] | None = None,
                     freeze_alpha: bool = False,
                     freeze_placement: bool = False,
                     w_block_cap: int = 12,
                     alpha_block_cap: int = 10,
                     max_outer: int | None = None) -> MultiUserResult:
    """Alternating surrogate maximization of one objective over (W, X, alpha).

    objective: "pce" or "sr". One outer round performs the auxiliary update,
    a beam block solved to stall, the discrete position argmax, and a ratio
    block solved to stall; the true objective trace is non-decreasing and the
    loop stops when its relative change drops below the configured tolerance.
    warm_start, when given, is a (w, placement, alpha) triple that must
    satisfy the floors; otherwise a feasible start is built by power
    minimization at the equal ratio split, scaled up to the budget.
    """
    if objective not in ("pce", "sr"):
        raise ValueError("objective must be 'pce' or 'sr'")
    start_time = time.perf_counter()
    gamma_req = config.gamma_min if objective == "pce" \
        else max(config.gamma_min, 2.0 ** config.r_min - 1.0)
    cache: dict = {}
    if candidates is not None:
        full_set = candidates
    else:
        full_set = enumerate_placements(config, cap=64)

    if warm_start is not None:
        w, placement, alpha = warm_start
        w = np.array(w, dtype=complex)
        alpha = np.array(alpha, dtype=float)
    else:
        placement = full_set[0] if full_set else _seed_placement(config)
        alpha = equal_power_alpha(config)
        channels = build_channel_set(placement, layout, config)
        rows_id = waveguide_aggregate(channels.h_idr, channels.g_phase, alpha,
                                      config.num_waveguides)
        rows_eh = waveguide_aggregate(channels.h_ehr, channels.g_phase, alpha,
                                      config.num_waveguides)
        # a coarse power minimization is enough for a strictly feasible start
        w, _, ok = min_power_beamforming(rows_id, rows_eh, config,
                                         gamma_req=gamma_req,
                                         max_rounds=8, tol=1e-2)
        if not ok or transmit_power(w) > config.p_max * (1 + 1e-9):
            raise InfeasibleStart(
                f"floors need {transmit_power(w):.3e} W, budget {config.p_max:.3e} W")
        if objective == "pce" and not freeze_alpha:
            seeded = _pce_mixing_start(channels, w, config, gamma_req)
            if seeded is not None:
                _, w, alpha = seeded
            else:
                w = w * np.sqrt(0.999 * config.p_max / max(transmit_power(w), 1e-30))
        else:
            # uniform scaling to the budget never lowers an SINR or harvest
            # level, and starting with slack floors avoids crawling out of the
            # min-power corner where every floor binds
            w = w * np.sqrt(0.999 * config.p_max / max(transmit_power(w), 1e-30))
        cache[placement.key()] = channels

    key = placement.key()
    if key not in cache:
        cache[key] = build_channel_set(placement, layout, config)
    channels = cache[key]
    eff = effective_channels(channels, alpha, w, config.num_waveguides)
    if not _floors_hold(eff, w, config, gamma_req, slack=1e-6):
        raise InfeasibleStart("warm start violates the floors")

    report = SolveReport()
    obj = _objective_value(objective, eff, w, config)
    report.objective_trace.append(obj)
    last_cert = None
    block_stall = 0.02 * config.solver_tol
    rounds = config.max_outer_iters if max_outer is None else max_outer
    for it in range(rounds):
        aux = _aux_for(objective, eff, w, config)
        if objective == "pce":
            surr = pce_surrogate(aux, eff, w, config)
        else:
            surr = sr_surrogate(eff, aux, config.noise_power)

        w, eff, obj = _w_block(objective, channels, w, alpha, eff, config,
                               gamma_req, w_block_cap, block_stall)

        if not freeze_placement:
            cands = _candidate_set(config, layout, placement, cache, full_set)
            picked = x_select(cands, w, alpha, config, objective, gamma_req)
            if picked is not None and picked[3] >= obj - 1e-18:
                placement, channels, eff, obj = picked

        if not freeze_alpha:
            alpha, eff, obj, cert = _alpha_block(objective, channels, w, alpha,
                                                 eff, config, gamma_req,
                                                 alpha_block_cap, block_stall)
            if cert is not None:
                last_cert = cert

        report.objective_trace.append(obj)
        report.aux_trace.append({
            "iteration": it, "objective": obj,
            "surrogate": surr.value, "tight": surr.tight_at_reference,
        })
        prev = report.objective_trace[-2]
        if it >= 1 and abs(obj - prev) <= config.solver_tol * max(abs(obj), 1e-30):
            report.converged = True
            break

    if not freeze_alpha:
        # certified polish: one tight ratio solve for the KKT residuals
        aux = _aux_for(objective, eff, w, config)
        extra = (pce_floor(channels, w, config),) if objective == "sr" else ()
        polish_region = feasible_region_multi(channels, w, config,
                                              gamma_req=gamma_req,
                                              extra_floors=extra,
                                              reference=alpha, check=False)
        try:
            if objective == "pce":
                alpha_new, cert = pce_alpha_step(aux, channels, w, polish_region,
                                                 config, alpha, tol=1e-8)
            else:
                alpha_new, cert = sr_alpha_step(aux, channels, w, polish_region,
                                                config, alpha, tol=1e-8)
            alpha_new = np.clip(alpha_new, 0.0, None)
            eff_new = effective_channels(channels, alpha_new, w,
                                         config.num_waveguides)
            if (_floors_hold(eff_new, w, config, gamma_req, slack=1e-7)
                    and _objective_value(objective, eff_new, w, config)
                    >= obj - 1e-18):
                alpha, eff = alpha_new, eff_new
                obj = _objective_value(objective, eff, w, config)
                report.objective_trace[-1] = obj
                if cert is not None:
                    last_cert = cert
        except Exception:
            report.notes.append("final polish failed; kept last iterate")

    region = feasible_region_multi(channels, w, config, gamma_req=gamma_req,
                                   reference=alpha, check=False)
    report.iterations = len(report.aux_trace)
    report.runtime_s = time.perf_counter() - start_time
    if last_cert is not None:
        report.kkt_residuals = {
            "primal": last_cert.primal_residual,
            "dual": last_cert.dual_residual,
            "complementarity": last_cert.complementarity,
        }
    return MultiUserResult(w=w, placement=placement, alpha=alpha,
                           region=region, report=report)


def _pce_w_restricted(aux: PceAux, rows_id: np.ndarray, rows_eh: np.ndarray,
                      w_ref: np.ndarray, config: ScenarioConfig,
                      gamma_req: float, inner_rounds: int = 1) -> np.ndarray:
    """Efficiency-surrogate beam update keeping the floors satisfied.

    The bare closed form ignores the floors; here they enter as restrictions
    rotated at the reference (re-rotated `inner_rounds` times), so every
    iterate stays feasible.
    """
    if abs(aux.rho) < 1e-30:
        return w_ref
    w = w_ref
    val = _w_surrogate_value("pce", aux, rows_id, rows_eh, w, config)
    for _ in range(max(inner_rounds, 1)):
        try:
            w_new = _restricted_w_solve("pce", aux, rows_id, rows_eh, w, config,
                                        gamma_req, True)
        except Exception:
            break
        val_new = _w_surrogate_value("pce", aux, rows_id, rows_eh, w_new, config)
        if not np.isfinite(val_new) or val_new < val - 1e-12:
            break
        improved = val_new - val > 1e-6 * max(abs(val), 1e-30)
        w, val = w_new, val_new
        if not improved:
            break
    return w
