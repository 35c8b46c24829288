"""Shared numerical engines.

A Dormand-Prince 5(4) integrator with a per-step corrector hook and a
minimum-step clamp (the predictor-corrector division of labor that the
surface and projection trackers rely on), reusable LU solves, a least-norm
solver in the normal-equations form, a restricted generalized symmetric
eigensolver, and projected gradient descent with reactionless masks.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "OdeProblem",
    "Trajectory",
    "IntegrationError",
    "integrate",
    "LuHandle",
    "SingularMatrixError",
    "solve_square",
    "lu_factorize",
    "least_norm_solve",
    "generalized_sym_eig",
    "Constraint",
    "ConstrainedProblem",
    "PgdReport",
    "projected_gradient_descent",
]

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
DEFAULT_TOL_C = 1e-9
DEFAULT_TOL_G = 1e-7


# ---------------------------------------------------------------------------
# adaptive explicit integration (Dormand-Prince 5(4))
# ---------------------------------------------------------------------------

# Butcher tableau of the DOPRI 5(4) pair
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_ERR = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])


class IntegrationError(RuntimeError):
    """Right-hand-side or corrector failure; carries the last good state."""

    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = y


@dataclass
class OdeProblem:
    """An explicit initial value problem with an optional per-step corrector.

    The corrector maps an accepted state back onto whatever constraint set
    the right-hand side assumes; when error control asks for a step below
    ``min_step`` the step is forced at ``min_step`` and the corrector is
    mandatory (the predictor alone is unreliable there).
    """

    rhs: Callable[[float, np.ndarray], np.ndarray]
    t_span: tuple
    corrector: Callable[[float, np.ndarray], np.ndarray] | None = None
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    min_step: float | None = None
    max_step: float | None = None

    def __post_init__(self):
        t0, t1 = self.t_span
        span = abs(t1 - t0)
        if self.min_step is None:
            self.min_step = 1e-8 * span
        if self.max_step is None:
            self.max_step = span if span > 0 else 1.0
        if self.min_step > self.max_step:
            raise ValueError("min_step must not exceed max_step")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class Trajectory:
    """Accepted states (t_i, y_i), t_0 and t_end included."""

    ts: list
    ys: list
    n_steps: int = 0
    n_rejected: int = 0
    n_clamped: int = 0

    def __iter__(self):
        return iter(zip(self.ts, self.ys))

    @property
    def end(self) -> np.ndarray:
        return self.ys[-1]


def integrate(problem: OdeProblem, y0) -> Trajectory:
    """Dormand-Prince 5(4) with PI step control and corrector hook."""
    t0, t1 = problem.t_span
    y = np.asarray(y0, dtype=float).copy()
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    traj = Trajectory(ts=[t0], ys=[y.copy()])
    if span == 0.0:
        return traj

    def call_rhs(t, yv):
        try:
            out = np.asarray(problem.rhs(t, yv), dtype=float)
        except (np.linalg.LinAlgError, SingularMatrixError, FloatingPointError) as exc:
            raise IntegrationError(f"right-hand side failed at t={t}: {exc}",
                                   t=traj.ts[-1], y=traj.ys[-1]) from exc
        if not np.all(np.isfinite(out)):
            raise IntegrationError(f"right-hand side not finite at t={t}",
                                   t=traj.ts[-1], y=traj.ys[-1])
        return out

    t = t0
    f0 = call_rhs(t, y)
    # initial step heuristic
    scale = problem.atol + problem.rtol * np.abs(y)
    d0 = np.linalg.norm(y / scale) / np.sqrt(y.size)
    d1 = np.linalg.norm(f0 / scale) / np.sqrt(y.size)
    h = 0.01 * d0 / d1 if (d0 > 1e-5 and d1 > 1e-5) else 1e-6 * span
    h = min(max(h, problem.min_step), problem.max_step)
    err_prev = 1.0
    k = np.empty((7, y.size))
    while (t1 - t) * direction > 1e-15 * span:
        h = min(h, abs(t1 - t))
        clamped = h <= problem.min_step
        if clamped:
            h = min(problem.min_step, abs(t1 - t))
        hs = direction * h
        k[0] = f0
        for i in range(1, 7):
            yi = y + hs * (k[:i].T @ _DP_A[i])
            k[i] = call_rhs(t + _DP_C[i] * hs, yi)
        y5 = y + hs * (k.T @ _DP_B5)
        err_vec = hs * (k.T @ _DP_ERR)
        scale = problem.atol + problem.rtol * np.maximum(np.abs(y), np.abs(y5))
        err = np.linalg.norm(err_vec / scale) / np.sqrt(y.size)
        if err <= 1.0 or clamped:
            t = t + hs
            y = y5
            if problem.corrector is not None:
                y = np.asarray(problem.corrector(t, y), dtype=float)
            traj.ts.append(t)
            traj.ys.append(y.copy())
            traj.n_steps += 1
            if clamped:
                traj.n_clamped += 1
            if (t1 - t) * direction > 1e-15 * span:
                f0 = call_rhs(t, y)
            # PI controller (order 5, embedded 4)
            fac = 0.9 * err ** -0.2 * err_prev ** 0.04 if err > 0 else 5.0
            err_prev = max(err, 1e-10)
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
            traj.n_rejected += 1
        h = min(max(h * min(5.0, max(0.2, fac)), problem.min_step), problem.max_step)
    return traj


# ---------------------------------------------------------------------------
# linear solves
# ---------------------------------------------------------------------------


class SingularMatrixError(np.linalg.LinAlgError):
    """Numerically singular solve; carries a condition estimate."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class LuHandle:
    """A reusable LU factorization (partial pivoting)."""

    def __init__(self, a: np.ndarray, pivot_tol: float = 1e-14):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self._lu, self._piv = scipy.linalg.lu_factor(a)
        diag = np.abs(np.diag(self._lu))
        scale = diag.max() if diag.size else 0.0
        if scale == 0.0 or diag.min() < pivot_tol * scale:
            cond = np.inf if diag.min() == 0.0 else scale / diag.min()
            raise SingularMatrixError(
                f"matrix numerically singular (pivot ratio {diag.min() / scale if scale else 0:.2e})",
                cond=cond,
            )
        self.shape = a.shape

    def solve(self, b) -> np.ndarray:
        return scipy.linalg.lu_solve((self._lu, self._piv), np.asarray(b, dtype=float))


def lu_factorize(a) -> LuHandle:
    return LuHandle(a)


def solve_square(a, b) -> np.ndarray:
    """LU solve with pivoting; raises SingularMatrixError on tiny pivots."""
    return LuHandle(a).solve(b)


def least_norm_solve(a, b) -> np.ndarray:
    """Minimum-2-norm x with A x = b for full-row-rank A (m <= n).

    Uses the normal-equations form x = A^T (A A^T)^{-1} b with a Cholesky
    factorization of A A^T.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    gram = a @ a.T
    try:
        cf = scipy.linalg.cho_factor(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"A A^T not positive definite: {exc}") from exc
    return a.T @ scipy.linalg.cho_solve(cf, b)


def generalized_sym_eig(l_mat, g_mat, known_kernel=None):
    """Eigenpairs of L v = kappa g v with g positive (semi)definite.

    If ``known_kernel`` is given, the problem is solved on the orthogonal
    complement of that vector (where g must be positive definite); returned
    eigenvectors live in the full space and are g-orthonormal.
    """
    l_mat = np.asarray(l_mat, dtype=float)
    g_mat = np.asarray(g_mat, dtype=float)
    n = l_mat.shape[0]
    if known_kernel is not None:
        kn = np.asarray(known_kernel, dtype=float)
        kn = kn / np.linalg.norm(kn)
        basis = scipy.linalg.null_space(kn[None, :])
    else:
        basis = np.eye(n)
    lr = basis.T @ l_mat @ basis
    gr = basis.T @ g_mat @ basis
    lr = 0.5 * (lr + lr.T)
    gr = 0.5 * (gr + gr.T)
    try:
        w, vecs = scipy.linalg.eigh(lr, gr)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularMatrixError(
            f"metric not positive definite on the reduced space: {exc}") from exc
    full = basis @ vecs
    return [(float(w[i]), full[:, i]) for i in range(w.size)]


# ---------------------------------------------------------------------------
# projected gradient descent with reactionless masks
# ---------------------------------------------------------------------------


@dataclass
class Constraint:
    """Scalar equality constraint c(x) = 0 with gradient.

    ``mask`` (same length as x, 0/1) zeroes chosen gradient components
    before any projection computation: the constraint then exerts no
    influence on the masked variables.
    """

    fun: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    mask: np.ndarray | None = None

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = np.asarray(self.grad(x), dtype=float)
        if self.mask is not None:
            g = g * self.mask
        return g


@dataclass
class ConstrainedProblem:
    """min G(x) subject to c_i(x) = 0 with optional reactionless masks."""

    constraints: Sequence[Constraint]
    goal: Callable[[np.ndarray], float] | None = None
    goal_grad: Callable[[np.ndarray], np.ndarray] | None = None
    goal_mask: np.ndarray | None = None

    def goal_gradient(self, x: np.ndarray) -> np.ndarray:
        if self.goal_grad is None:
            return np.zeros_like(x)
        g = np.asarray(self.goal_grad(x), dtype=float)
        if self.goal_mask is not None:
            g = g * self.goal_mask
        return g

    def goal_value(self, x: np.ndarray) -> float:
        return 0.0 if self.goal is None else float(self.goal(x))


@dataclass
class PgdReport:
    converged: bool
    iterations: int
    max_constraint: float
    grad_norm: float
    goal: float
    message: str = ""


@dataclass
class PgdOptions:
    tol_c: float = DEFAULT_TOL_C
    tol_g: float = DEFAULT_TOL_G
    max_iter: int = 500
    gamma0: float = 0.5
    gamma_grow: float = 1.2
    gamma_max: float = 1.0
    max_step: float | None = None  # trust radius per iteration
    # reject iterates whose worst violation exceeds this multiple of the
    # starting violation (plus a floor); keeps the descent in its basin
    max_violation_growth: float | None = None


def _projection_step(c_vals, grads):
    """Least-squares point z-x within span{c~_i} closest to all hyperplanes.

    Hyperplane i is {y : c_i + y . c~_i = 0}; restricting y to the span of
    the constraint gradients and weighting distances by 1/|c~_i| makes plain
    Newton a special case (square nonsingular gradient matrix).
    """
    C = np.asarray(grads)
    norms = np.linalg.norm(C, axis=1)
    keep = norms > 0
    if not np.any(keep):
        return np.zeros(C.shape[1])
    C = C[keep]
    c = np.asarray(c_vals)[keep]
    w = 1.0 / np.linalg.norm(C, axis=1)
    gram = C @ C.T
    a, *_ = np.linalg.lstsq((w[:, None] * gram), -(w * c), rcond=None)
    return C.T @ a


def projected_gradient_descent(problem: ConstrainedProblem, x0,
                               opts: PgdOptions | None = None):
    """The descent loop: x := z + gamma * delta.

    z is the least-squares-to-hyperplanes point within the constraint
    gradient span, delta the negative goal gradient projected onto the
    orthogonal complement of that span; gamma halves when the goal
    increases and grows 1.2x on success.
    """
    opts = opts or PgdOptions()
    x = np.asarray(x0, dtype=float).copy()
    gamma = opts.gamma0

    def evaluate(xv):
        c_vals = np.array([c.fun(xv) for c in problem.constraints], dtype=float)
        max_c = float(np.max(np.abs(c_vals))) if c_vals.size else 0.0
        return c_vals, max_c, problem.goal_value(xv)

    c_vals, max_c, goal = evaluate(x)
    violation_cap = None
    if opts.max_violation_growth is not None:
        violation_cap = max(opts.max_violation_growth * max_c, 100.0 * opts.tol_c)
    delta_norm = np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        grads = [c.gradient(x) for c in problem.constraints]
        gg = problem.goal_gradient(x)
        if grads:
            C = np.asarray(grads)
            nz = np.linalg.norm(C, axis=1) > 0
            if np.any(nz):
                coeff, *_ = np.linalg.lstsq(C[nz] @ C[nz].T, C[nz] @ gg, rcond=None)
                delta = -(gg - C[nz].T @ coeff)
            else:
                delta = -gg
            y = _projection_step(c_vals, grads)
        else:
            delta = -gg
            y = np.zeros_like(x)
        delta_norm = float(np.linalg.norm(delta))
        if max_c <= opts.tol_c and delta_norm <= opts.tol_g:
            return x, PgdReport(True, it, max_c, delta_norm, goal)
        step = y + gamma * delta
        if opts.max_step is not None:
            nrm = np.linalg.norm(step)
            if nrm > opts.max_step:
                step = step * (opts.max_step / nrm)
        x_new = x + step
        c_new, max_c_new, goal_new = evaluate(x_new)
        if violation_cap is not None and max_c_new > violation_cap:
            gamma = max(gamma * 0.5, 1e-10)
            continue
        goal_worse = problem.goal is not None and goal_new > goal + 1e-15 * abs(goal)
        feas_worse = max_c_new > max(1.5 * max_c, opts.tol_c)
        if goal_worse and feas_worse:
            # the goal pull is dragging the iterate off the constraint set
            # (it could hop through an infeasible band into another basin):
            # shrink and retry from the same point
            gamma = max(gamma * 0.5, 1e-10)
            continue
        gamma = max(gamma * 0.5, 1e-10) if goal_worse \
            else min(gamma * opts.gamma_grow, opts.gamma_max)
        x, c_vals, max_c, goal = x_new, c_new, max_c_new, goal_new
    return x, PgdReport(False, it, max_c, delta_norm, goal,
                        message="iteration cap reached")
