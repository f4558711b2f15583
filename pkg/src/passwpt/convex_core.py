"""Dense log-barrier interior-point backend for small QCQPs and SOCPs.

Decision vectors are real (complex quantities enter through explicit
real/imaginary lifting). Problems carry a convex quadratic objective, linear
inequalities and equalities, convex quadratic inequalities, and second-order
cones. Lower-bound (nonconvex) quadratic constraints are rejected; they must
be phase-fixed or surrogate-restricted by the caller first.

Everything is deterministic: identical problems produce bit-identical
iterate sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InfeasibleProblem(RuntimeError):
    """Phase-1 could not produce a strictly feasible point."""


class MaxItersExceeded(RuntimeError):
    """Iteration cap reached before the target tolerance (best iterate attached)."""

    def __init__(self, message, x=None, certificate=None):
        super().__init__(message)
        self.x = x
        self.certificate = certificate


@dataclass
class QcqpProblem:
    """min x'Qx + q'x + const  s.t.  Ax <= b, Ex = f, x'Px + r'x + s <= 0, SOCs.

    Q and every P must be PSD (eigenvalue floor -1e-10 relative); second-order
    cones are given as (A, b, c, d) meaning ||A x - b|| <= c'x + d.
    """

    n: int
    q_mat: np.ndarray | None = None
    q_lin: np.ndarray | None = None
    q_const: float = 0.0
    lin_a: np.ndarray | None = None
    lin_b: np.ndarray | None = None
    eq_a: np.ndarray | None = None
    eq_b: np.ndarray | None = None
    quad: list = field(default_factory=list)   # (P, r, s) triples
    soc: list = field(default_factory=list)    # (A, b, c, d) tuples

    def __post_init__(self):
        if self.q_mat is not None:
            self.q_mat = 0.5 * (self.q_mat + self.q_mat.T)
            scale = max(float(np.abs(self.q_mat).max()), 1e-30)
            if float(np.linalg.eigvalsh(self.q_mat).min()) < -1e-10 * scale:
                raise ValueError("objective quadratic is not PSD")
        if self.q_lin is None:
            self.q_lin = np.zeros(self.n)
        for p_mat, _, _ in self.quad:
            scale = max(float(np.abs(p_mat).max()), 1e-30)
            if float(np.linalg.eigvalsh(0.5 * (p_mat + p_mat.T)).min()) < -1e-10 * scale:
                raise ValueError("quadratic constraint is not PSD (lower bounds must be phase-fixed)")

    def num_ineq(self) -> int:
        m = 0 if self.lin_a is None else self.lin_a.shape[0]
        return m + len(self.quad) + len(self.soc)


@dataclass
class KktCertificate:
    """Residual summary of a primal-dual pair."""

    primal_residual: float
    dual_residual: float
    complementarity: float
    multipliers: dict
    t_final: float = 0.0
    newton_iterations: int = 0
    converged: bool = True
    centering_objectives: tuple = ()

    def max_residual(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.complementarity)


@dataclass(frozen=True)
class PhaseFixedConstraint:
    """Rotated linear restriction of |phi^H alpha| >= sqrt(threshold)."""

    theta: float
    re_row: np.ndarray   # Re{e^{-j theta} phi^H alpha} = re_row @ alpha
    im_row: np.ndarray   # Im part row (pin to zero for the cone-tight variant)
    threshold: float     # lower bound on the squared modulus


def fix_phase(phi: np.ndarray, alpha_prev: np.ndarray, threshold: float) -> PhaseFixedConstraint:
    """Rotate a modulus lower bound into a linear one, tight at the reference point."""
    val = np.conj(phi) @ alpha_prev
    theta = float(np.angle(val)) if abs(val) > 0 else 0.0
    rot = np.exp(-1j * theta) * np.conj(phi)
    return PhaseFixedConstraint(theta=theta, re_row=np.real(rot),
                                im_row=np.imag(rot), threshold=float(threshold))


def complex_form_rows(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real rows of a^H z on the lifted decision [Re z; Im z]."""
    re = np.concatenate([np.real(a), np.imag(a)])
    im = np.concatenate([-np.imag(a), np.real(a)])
    return re, im


def _normalize(problem: QcqpProblem):
    """Row-scale constraints to O(1); returns per-constraint scale factors."""
    scales = {"lin": None, "quad": [], "soc": []}
    if problem.lin_a is not None:
        rho = np.maximum(np.linalg.norm(problem.lin_a, axis=1), 1e-30)
        problem.lin_a = problem.lin_a / rho[:, None]
        problem.lin_b = problem.lin_b / rho
        scales["lin"] = rho
    new_quad = []
    for p_mat, r, s in problem.quad:
        rho = max(float(np.abs(p_mat).max()), float(np.abs(r).max(initial=0.0)), abs(s), 1e-30)
        new_quad.append((p_mat / rho, r / rho, s / rho))
        scales["quad"].append(rho)
    problem.quad = new_quad
    new_soc = []
    for a_mat, b, c, d in problem.soc:
        rho = max(float(np.abs(a_mat).max(initial=0.0)), float(np.abs(b).max(initial=0.0)),
                  float(np.abs(c).max(initial=0.0)), abs(d), 1e-30)
        new_soc.append((a_mat / rho, b / rho, c / rho, d / rho))
        scales["soc"].append(rho)
    problem.soc = new_soc
    return scales


def _objective(problem, x):
    val = problem.q_lin @ x + problem.q_const
    if problem.q_mat is not None:
        val += x @ problem.q_mat @ x
    return float(val)


def _objective_grad_hess(problem, x):
    g = problem.q_lin.copy()
    h = np.zeros((problem.n, problem.n))
    if problem.q_mat is not None:
        g = g + 2.0 * problem.q_mat @ x
        h = 2.0 * problem.q_mat
    return g, h


def _slacks(problem, x):
    """Constraint slack values; all must be strictly positive inside the domain."""
    out = []
    if problem.lin_a is not None:
        out.extend(problem.lin_b - problem.lin_a @ x)
    for p_mat, r, s in problem.quad:
        out.append(-(x @ p_mat @ x + r @ x + s))
    for a_mat, b, c, d in problem.soc:
        u = c @ x + d
        v = a_mat @ x - b
        out.append(u)
        out.append(u * u - v @ v)
    return np.array(out) if out else np.zeros(0)


def _strictly_feasible(problem, x, margin=0.0):
    slack = _slacks(problem, x)
    return bool(np.all(slack > margin))


def _barrier_state(problem, x):
    """(strictly_feasible, barrier_value) from one slack evaluation."""
    slack = _slacks(problem, x)
    if slack.size and np.min(slack) <= 0.0:
        return False, np.inf
    value = -float(np.sum(np.log(slack))) if slack.size else 0.0
    return True, value


def _soc_cache(problem):
    """Constant per-cone products reused across Newton iterations."""
    cache = getattr(problem, "_soc_products", None)
    if cache is None or len(cache) != len(problem.soc):
        cache = []
        for a_mat, b, c, d in problem.soc:
            cache.append((a_mat.T @ a_mat, a_mat.T @ b, 2.0 * np.outer(c, c)))
        problem._soc_products = cache
    return cache


def _barrier_grad_hess(problem, x):
    """Gradient/Hessian of the log-barrier of all inequality constraints."""
    n = problem.n
    g = np.zeros(n)
    h = np.zeros((n, n))
    if problem.lin_a is not None:
        slack = problem.lin_b - problem.lin_a @ x
        inv = 1.0 / slack
        g += problem.lin_a.T @ inv
        h += (problem.lin_a * (inv**2)[:, None]).T @ problem.lin_a
    for p_mat, r, s in problem.quad:
        grad_g = 2.0 * p_mat @ x + r
        u = -(x @ p_mat @ x + r @ x + s)
        g += grad_g / u
        h += 2.0 * p_mat / u + np.outer(grad_g, grad_g) / (u * u)
    products = _soc_cache(problem)
    for (a_mat, b, c, d), (ata, atb, cc2) in zip(problem.soc, products):
        u = c @ x + d
        v = a_mat @ x - b
        f_val = u * u - v @ v
        at_v = ata @ x - atb
        grad_f = 2.0 * u * c - 2.0 * at_v
        hess_f = cc2 - 2.0 * ata
        g += -grad_f / f_val
        h += np.outer(grad_f, grad_f) / (f_val * f_val) - hess_f / f_val
    return g, h


def _barrier_value(problem, x):
    slack = _slacks(problem, x)
    return -float(np.sum(np.log(slack))) if slack.size else 0.0


def _newton_centering(problem, x, t, max_newton=40, tol_decrement=1e-10):
    """Minimize t*f + barrier from a strictly feasible, equality-feasible start.

    Two-phase damping: an Armijo backtracking line search while the Newton
    decrement is large, then pure (feasibility-clipped) Newton steps inside
    the quadratic convergence region, where objective-value comparisons fall
    below float64 resolution at large t.
    """
    n = problem.n
    eq_a = problem.eq_a
    iters = 0
    for _ in range(max_newton):
        gf, hf = _objective_grad_hess(problem, x)
        gb, hb = _barrier_grad_hess(problem, x)
        g = t * gf + gb
        h = t * hf + hb + 1e-12 * np.eye(n)
        if eq_a is not None:
            m = eq_a.shape[0]
            kkt = np.block([[h, eq_a.T], [eq_a, np.zeros((m, m))]])
            rhs = np.concatenate([-g, np.zeros(m)])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            dx, w_eq = sol[:n], sol[n:]
        else:
            try:
                dx = np.linalg.solve(h, -g)
            except np.linalg.LinAlgError:
                dx = np.linalg.lstsq(h, -g, rcond=None)[0]
            w_eq = np.zeros(0)
        decrement = float(-g @ dx)
        if decrement / 2.0 <= tol_decrement:
            return x, w_eq, iters
        step = 1.0
        accepted = False
        if decrement <= 0.1:
            # quadratic convergence region: largest strictly feasible step
            for _ in range(40):
                cand = x + step * dx
                if _strictly_feasible(problem, cand, 0.0):
                    x = cand
                    accepted = True
                    break
                step *= 0.5
        else:
            base = t * _objective(problem, x) + _barrier_value(problem, x)
            for _ in range(60):
                cand = x + step * dx
                inside, bval = _barrier_state(problem, cand)
                if inside:
                    val = t * _objective(problem, cand) + bval
                    if val <= base - 0.25 * step * decrement:
                        x = cand
                        accepted = True
                        break
                step *= 0.5
        iters += 1
        if not accepted:
            return x, w_eq, iters
    return x, w_eq, iters


def _multipliers_at(problem, x, t):
    """Barrier-implied dual variables for every constraint class."""
    mult = {}
    if problem.lin_a is not None:
        slack = problem.lin_b - problem.lin_a @ x
        mult["lin"] = 1.0 / (t * slack)
    else:
        mult["lin"] = np.zeros(0)
    mult["quad"] = np.array([
        1.0 / (t * (-(x @ p @ x + r @ x + s))) for p, r, s in problem.quad
    ]) if problem.quad else np.zeros(0)
    socm = []
    for a_mat, b, c, d in problem.soc:
        u = c @ x + d
        v = a_mat @ x - b
        socm.append(2.0 * u / (t * (u * u - v @ v)))
    mult["soc"] = np.array(socm) if socm else np.zeros(0)
    return mult


def kkt_residual(problem: QcqpProblem, x: np.ndarray, multipliers: dict,
                 eq_mult: np.ndarray | None = None) -> KktCertificate:
    """Stationarity, primal-feasibility, and complementarity residuals of a pair.

    Dual residual and complementarity are reported relative to the objective
    coefficient scale, so tolerances stay meaningful across problems whose
    physical units differ by orders of magnitude.
    """
    gf, _ = _objective_grad_hess(problem, x)
    grad_l = gf.copy()
    primal = 0.0
    comp = 0.0
    if problem.lin_a is not None and multipliers.get("lin") is not None and len(multipliers["lin"]):
        g_vals = problem.lin_a @ x - problem.lin_b
        lam = multipliers["lin"]
        grad_l += problem.lin_a.T @ lam
        primal = max(primal, float(np.max(g_vals, initial=0.0)))
        comp += float(np.sum(np.abs(lam * g_vals)))
    for (p_mat, r, s), lam in zip(problem.quad, multipliers.get("quad", [])):
        g_val = x @ p_mat @ x + r @ x + s
        grad_l += lam * (2.0 * p_mat @ x + r)
        primal = max(primal, g_val)
        comp += abs(lam * g_val)
    for (a_mat, b, c, d), lam in zip(problem.soc, multipliers.get("soc", [])):
        u = c @ x + d
        v = a_mat @ x - b
        nv = float(np.linalg.norm(v))
        g_val = nv - u
        grad_n = a_mat.T @ v / nv if nv > 0 else -c * 0.0
        grad_l += lam * (grad_n - c)
        primal = max(primal, g_val)
        comp += abs(lam * g_val)
    if problem.eq_a is not None:
        if eq_mult is not None and len(eq_mult):
            grad_l += problem.eq_a.T @ eq_mult
        primal = max(primal, float(np.max(np.abs(problem.eq_a @ x - problem.eq_b), initial=0.0)))
    obj_scale = max(
        float(np.abs(problem.q_mat).max()) if problem.q_mat is not None else 0.0,
        float(np.abs(problem.q_lin).max(initial=0.0)) if problem.q_lin is not None else 0.0,
        1e-30,
    )
    return KktCertificate(
        primal_residual=float(max(primal, 0.0)),
        dual_residual=float(np.linalg.norm(grad_l)) / obj_scale,
        complementarity=float(comp) / obj_scale,
        multipliers={**multipliers, "eq": eq_mult if eq_mult is not None else np.zeros(0)},
    )


def _phase1(problem: QcqpProblem, x_hint: np.ndarray | None,
            growth: float, margin: float = 1e-9):
    """Minimize the worst constraint violation; return a strictly feasible point."""
    n = problem.n
    if problem.eq_a is not None:
        x0 = np.linalg.lstsq(problem.eq_a, problem.eq_b, rcond=None)[0]
        if x_hint is not None:
            # project the hint onto the equality manifold
            resid = problem.eq_a @ x_hint - problem.eq_b
            corr = np.linalg.lstsq(problem.eq_a, resid, rcond=None)[0]
            x0 = x_hint - corr
    else:
        x0 = np.zeros(n) if x_hint is None else np.asarray(x_hint, dtype=float).copy()

    slack0 = _slacks(problem, x0)
    if slack0.size == 0 or np.min(slack0) > margin:
        return x0

    # slack variable problem: minimize s with every constraint relaxed by s
    aug = QcqpProblem(
        n=n + 1,
        q_lin=np.concatenate([np.zeros(n), [1.0]]),
        lin_a=None, lin_b=None,
        eq_a=None if problem.eq_a is None else np.hstack([problem.eq_a, np.zeros((problem.eq_a.shape[0], 1))]),
        eq_b=None if problem.eq_b is None else problem.eq_b.copy(),
    )
    if problem.lin_a is not None:
        aug.lin_a = np.hstack([problem.lin_a, -np.ones((problem.lin_a.shape[0], 1))])
        aug.lin_b = problem.lin_b.copy()
    aug.quad = []
    for p_mat, r, s in problem.quad:
        p_aug = np.zeros((n + 1, n + 1))
        p_aug[:n, :n] = p_mat
        r_aug = np.concatenate([r, [-1.0]])
        aug.quad.append((p_aug, r_aug, s))
    aug.soc = []
    for a_mat, b, c, d in problem.soc:
        a_aug = np.hstack([a_mat, np.zeros((a_mat.shape[0], 1))])
        c_aug = np.concatenate([c, [1.0]])
        aug.soc.append((a_aug, b, c_aug, d))

    s0 = float(max(-np.min(slack0), 0.0)) * 2.0 + 1.0
    y = np.concatenate([x0, [s0]])
    # widen s until strictly inside (SOC slacks are quadratic in s)
    for _ in range(60):
        if _strictly_feasible(aug, y, 0.0):
            break
        y[-1] = y[-1] * 2.0 + 1.0
    if not _strictly_feasible(aug, y, 0.0):
        raise InfeasibleProblem("phase-1 could not open the constraint set")

    t = 1.0
    m_total = aug.num_ineq() + len(aug.soc)
    for _ in range(4000):
        y, _, _ = _newton_centering(aug, y, t)
        if y[-1] < -margin:
            return y[:n]
        if m_total / t < 1e-12:
            break
        t *= max(growth, 1.0 + 1e-6)
    if y[-1] < margin:
        # boundary case: nudge strictly inside if possible
        cand = y[:n]
        if _strictly_feasible(problem, cand, 0.0):
            return cand
    raise InfeasibleProblem(f"phase-1 terminated with violation {y[-1]:.3e}")


def solve_qcqp(problem: QcqpProblem, tol: float = 1e-7, max_iters: int = 20000,
               x0: np.ndarray | None = None,
               growth: float = 1.25,
               var_scale: float = 1.0) -> tuple[np.ndarray, KktCertificate]:
    """Barrier solve to complementarity <= tol; raises on infeasibility.

    Returns the final iterate and a KKT certificate with barrier-implied
    multipliers. `growth` is the barrier parameter growth factor per
    centering stage; `var_scale` substitutes x = var_scale * y so the solver
    iterates on O(1) variables (pass the expected magnitude of x). The input
    problem is never mutated.
    """
    s_var = float(var_scale) if var_scale else 1.0
    work = QcqpProblem(
        n=problem.n,
        q_mat=None if problem.q_mat is None else np.array(problem.q_mat, dtype=float) * s_var**2,
        q_lin=(np.zeros(problem.n) if problem.q_lin is None
               else np.array(problem.q_lin, dtype=float) * s_var),
        q_const=float(problem.q_const),
        lin_a=None if problem.lin_a is None else np.array(problem.lin_a, dtype=float) * s_var,
        lin_b=None if problem.lin_b is None else np.array(problem.lin_b, dtype=float),
        eq_a=None if problem.eq_a is None else np.array(problem.eq_a, dtype=float) * s_var,
        eq_b=None if problem.eq_b is None else np.array(problem.eq_b, dtype=float),
        quad=[(np.array(p, dtype=float) * s_var**2, np.array(r, dtype=float) * s_var,
               float(s)) for p, r, s in problem.quad],
        soc=[(np.array(a, dtype=float) * s_var, np.array(b, dtype=float),
              np.array(c, dtype=float) * s_var, float(d)) for a, b, c, d in problem.soc],
    )
    obj_scale = max(
        float(np.abs(work.q_mat).max()) if work.q_mat is not None else 0.0,
        float(np.abs(work.q_lin).max(initial=0.0)),
        1e-30,
    )
    if work.q_mat is not None:
        work.q_mat = work.q_mat / obj_scale
    work.q_lin = work.q_lin / obj_scale
    work.q_const = work.q_const / obj_scale
    scales = _normalize(work)

    y0 = None if x0 is None else np.asarray(x0, dtype=float) / s_var
    warm = False
    if y0 is not None and _strictly_feasible(work, y0, 0.0) and (
            work.eq_a is None or np.max(np.abs(work.eq_a @ y0 - work.eq_b), initial=0.0) < 1e-9):
        x = y0.copy()
        warm = True
    else:
        x = _phase1(work, y0, growth=max(growth, 2.0))

    m_total = work.num_ineq() + len(work.soc)  # SOC barrier has parameter 2
    t = 100.0 if warm else 1.0
    total_newton = 0
    w_eq = np.zeros(0)
    centering_vals = []
    converged = m_total == 0
    while total_newton < max_iters:
        x, w_eq, used = _newton_centering(work, x, t)
        total_newton += max(used, 1)
        centering_vals.append(_objective(work, x))
        if m_total / t <= tol:
            converged = True
            break
        t *= growth
    mult = _multipliers_at(work, x, t)
    # undo objective and constraint scaling so multipliers match the original data
    if scales["lin"] is not None:
        mult["lin"] = mult["lin"] * obj_scale / scales["lin"]
    if len(mult["quad"]):
        mult["quad"] = np.array([m * obj_scale / r for m, r in zip(mult["quad"], scales["quad"])])
    if len(mult["soc"]):
        mult["soc"] = np.array([m * obj_scale / r for m, r in zip(mult["soc"], scales["soc"])])
    eq_mult = w_eq * obj_scale / t if w_eq.size else np.zeros(0)

    x = s_var * x
    cert = kkt_residual(problem, x, mult, eq_mult)
    cert.t_final = t
    cert.newton_iterations = total_newton
    cert.converged = converged
    cert.centering_objectives = tuple(float(v * obj_scale) for v in centering_vals)
    if not converged:
        raise MaxItersExceeded("barrier iteration cap reached", x=x, certificate=cert)
    return x, cert
