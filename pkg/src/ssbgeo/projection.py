"""Orthogonal projection onto implicit surfaces.

A query point is connected to its foot by a homotopy through the iso
surfaces of the level function: the level is swept from its value at the
query to zero while the residual point-to-surface vector stays collinear
with the gradient. The predictor is a bordered linear system integrated
with the adaptive integrator (minimum-step clamp active near focal
surfaces); the corrector re-solves the constrained closest-point problem
on the current iso-surface with projected gradient descent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as num
from .surfaces import ImplicitSurface, weingarten_eigenvalues

__all__ = [
    "FootReport",
    "ProjectionState",
    "FocalPointError",
    "project_point",
    "trace_curve_projection",
    "closest_point_check",
]

LOCALLY_CLOSEST = "locally_closest"
INVALID = "invalid_beyond_curvature"
UNKNOWN = "unknown"


class FocalPointError(RuntimeError):
    """The trace matrix d*(DN) + 1 became singular (query on a focal set)."""


@dataclass
class ProjectionState:
    """Homotopy state: r on the level set lambda = t * sgn(s), with
    d * grad(r) = v - r."""

    t: float
    r: np.ndarray
    d: float


@dataclass
class FootReport:
    q: np.ndarray
    d_signed: float
    validity: str
    kappa_max: float | None = None
    angle: float | None = None
    states: list | None = None


def _corrector_problem(s: ImplicitSurface, v, target):
    return num.ConstrainedProblem(
        constraints=[num.Constraint(
            fun=lambda x: s.level(x) - target,
            grad=lambda x: s.grad(x))],
        goal=lambda x: float((x - v) @ (x - v)),
        goal_grad=lambda x: 2.0 * (x - v),
    )


def _nudge_if_flat(s: ImplicitSurface, r, scale):
    """Deterministic kick off a vanishing-gradient point (focal center)."""
    g = s.grad(r)
    if np.linalg.norm(g) <= 1e-10 * max(1.0, scale):
        r = r.copy()
        r[0] += 1e-4 * max(1.0, scale)
    return r


def project_point(s: ImplicitSurface, v, rtol: float = 1e-10,
                  atol: float = 1e-12, corrector_iters: int = 50,
                  keep_states: bool = False) -> FootReport:
    """Orthogonal projection of v onto the zero level set of s.

    Integrates the bordered homotopy system from the query's level down
    to zero; the last right-hand-side entry pins d(level)/dt to the sign
    of the starting level so the iso-level actually tracks the homotopy
    parameter. Each accepted step is polished by constrained descent
    (minimize |r - v|^2 on the current iso-surface) and the scale factor
    d is refit from the gradient.
    """
    v = np.asarray(v, dtype=float)
    lam0 = s.level(v)
    scale = max(1.0, np.linalg.norm(v))
    n = v.size
    if abs(lam0) <= 1e-12 * scale:
        q = s.project(v)
        return _finish(s, v, q, keep_states, [])

    def rhs(tau, y):
        r, d = y[:n], y[n]
        g = s.grad(r)
        h = s.hess(r)
        mat = np.zeros((n + 1, n + 1))
        mat[:n, :n] = d * h + np.eye(n)
        mat[:n, n] = g
        mat[n, :n] = g
        b = np.zeros(n + 1)
        b[n] = 1.0
        try:
            sol = num.solve_square(mat, b)
        except num.SingularMatrixError:
            # focal crossing: pseudo-inverse predictor, corrector cleans up
            sol, *_ = np.linalg.lstsq(mat, b, rcond=None)
        return sol

    states = []

    def corrector(tau, y):
        r, d = y[:n], y[n]
        r = _nudge_if_flat(s, r, scale)
        prob = _corrector_problem(s, v, tau)
        r, rep = num.projected_gradient_descent(
            prob, r, num.PgdOptions(tol_c=1e-10 * max(1.0, abs(lam0)),
                                    tol_g=1e-9 * scale,
                                    max_iter=corrector_iters))
        g = s.grad(r)
        gg = g @ g
        d = float(g @ (v - r) / gg) if gg > 0 else 0.0
        states.append(ProjectionState(t=abs(tau), r=r.copy(), d=d))
        return np.concatenate([r, [d]])

    prob = num.OdeProblem(rhs=rhs, t_span=(lam0, 0.0), corrector=corrector,
                          rtol=rtol, atol=atol)
    y0 = np.concatenate([v, [0.0]])
    traj = num.integrate(prob, y0)
    r_end = traj.end[:n]
    # final polish on the zero level
    r_end = _nudge_if_flat(s, r_end, scale)
    cp = _corrector_problem(s, v, 0.0)
    q, rep = num.projected_gradient_descent(
        cp, r_end, num.PgdOptions(tol_c=1e-12 * scale, tol_g=1e-10 * scale,
                                  max_iter=4 * corrector_iters))
    if not rep.converged and rep.max_constraint > 1e-9 * scale:
        raise num.IntegrationError(
            f"projection corrector did not converge: {rep}", t=0.0, y=q)
    return _finish(s, v, q, keep_states, states)


def _finish(s: ImplicitSurface, v, q, keep_states, states) -> FootReport:
    n_hat = s.unit_normal(q)
    delta = v - q
    dist = np.linalg.norm(delta)
    d_signed = float(n_hat @ delta)
    if dist > 1e-12:
        sin_angle = np.linalg.norm(delta - d_signed * n_hat) / dist
        angle = float(np.arcsin(min(1.0, sin_angle)))
    else:
        angle = 0.0
    validity, kmax = closest_point_check(s, q, d_signed)
    return FootReport(q=q, d_signed=d_signed, validity=validity,
                      kappa_max=kmax, angle=angle,
                      states=states if keep_states else None)


def closest_point_check(s: ImplicitSurface, q, d_signed: float):
    """Local-minimum test of the distance to the surface.

    Along a surface curve the second derivative of |x - v|^2 is
    2(1 - d * kappa_N), so q is locally closest exactly when
    d * kappa_i < 1 for every principal curvature; the critical radius is
    the reciprocal of the largest Weingarten eigenvalue on the side the
    normal bends toward.
    """
    try:
        kappas = weingarten_eigenvalues(s, np.asarray(q, dtype=float))
    except Exception:
        return UNKNOWN, None
    if not kappas:
        return UNKNOWN, None
    worst = max(d_signed * k for k in kappas)
    kmax = max(abs(k) for k in kappas)
    return (LOCALLY_CLOSEST if worst < 1.0 else INVALID), kmax


def trace_curve_projection(s: ImplicitSurface, v_curve, q0, t_span,
                           rtol: float = 1e-9, atol: float = 1e-12):
    """Trace the foot of a moving query point.

    ``v_curve(t)`` returns (v, v_dot). The foot obeys
    (d * DN(q) + 1) q_dot = v_dot - (v_dot . N) N with d_dot = v_dot . N,
    d measured along the unit normal. Each accepted step re-polishes the
    foot with a short constrained descent from the predicted point.
    """
    q0 = np.asarray(q0, dtype=float)
    n = q0.size

    def rhs(t, y):
        q, d = y[:n], y[n]
        v, v_dot = v_curve(t)
        n_hat = s.unit_normal(q)
        dn = s.dnormal_matrix(q)
        rhs_vec = v_dot - (v_dot @ n_hat) * n_hat
        try:
            q_dot = num.solve_square(d * dn + np.eye(n), rhs_vec)
        except num.SingularMatrixError as exc:
            raise FocalPointError(
                f"query point crossed the focal surface: {exc}") from exc
        return np.concatenate([q_dot, [float(v_dot @ n_hat)]])

    def corrector(t, y):
        q = s.project(y[:n])
        v, _ = v_curve(t)
        prob = _corrector_problem(s, v, 0.0)
        q, _ = num.projected_gradient_descent(
            prob, q, num.PgdOptions(tol_c=1e-12 * max(1.0, np.linalg.norm(v)),
                                    tol_g=1e-10, max_iter=30))
        n_hat = s.unit_normal(q)
        return np.concatenate([q, [float(n_hat @ (v - q))]])

    v0, _ = v_curve(t_span[0])
    d0 = float(s.unit_normal(q0) @ (v0 - q0))
    prob = num.OdeProblem(rhs=rhs, t_span=t_span, corrector=corrector,
                          rtol=rtol, atol=atol)
    traj = num.integrate(prob, np.concatenate([q0, [d0]]))
    return [(t, y[:n], float(y[n])) for t, y in traj]
