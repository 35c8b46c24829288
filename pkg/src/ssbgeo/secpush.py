"""Pushing an operating point away from solution space boundaries.

The operating point, its per-contingency voltage solutions, inequality
slacks, and one foot (closest boundary point, with its normal and slack)
per tracked perpendicular form a joint KKT system: the main goal stays
stationary while every foot minimizes its distance to the operating
point. Differentiating the whole stack with respect to the protection
level t gives the predictor ODE; the corrector re-solves the coupled
optimization problems with reactionless projected gradient descent
(distance constraints do not move feet, foot goals do not move the
operating point) and then re-estimates the multipliers by least squares.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as num
from . import quadmap as qm

__all__ = [
    "QuadraticFunction",
    "BoundaryModel",
    "ImplicitCurveBoundary",
    "QuadraticMapBoundary",
    "Foot",
    "SecurityProblem",
    "SecurityState",
    "PredictorSingularError",
    "CorrectorFailure",
    "kkt_residual",
    "kkt_jacobian",
    "predictor_step",
    "corrector",
    "discover_feet",
    "initialize_state",
    "push",
    "PushResult",
]


def _sgn(x: float) -> float:
    """sign with sgn(0) = +1 (the null set is ignored; the corrector mends)."""
    return 1.0 if x >= 0.0 else -1.0


@dataclass
class QuadraticFunction:
    """f(x) = 0.5 x^T Q x + b.x + c with exact derivatives."""

    Q: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def value(self, x):
        return float(0.5 * x @ self.Q @ x + self.b @ x + self.c)

    def grad(self, x):
        return self.Q @ x + self.b

    def hess(self, x):
        return self.Q


def goal_towards(target, weight: float = 1.0) -> QuadraticFunction:
    """|x - target|^2 scaled; the standard toy goal."""
    target = np.asarray(target, dtype=float)
    n = target.size
    return QuadraticFunction(Q=2.0 * weight * np.eye(n),
                             b=-2.0 * weight * target,
                             c=weight * float(target @ target))


class BoundaryModel:
    """One boundary instance: the image map F and membership constraints.

    ``membership(w, k) = 0`` pins (w, k) to the boundary with k the unit
    power-space normal; for quadratic power-flow maps these are the left
    kernel conditions, for analytic toy curves the level equation plus
    normal pinning.
    """

    dim_w: int
    dim_k: int
    n_membership: int

    def f_value(self, w):
        raise NotImplementedError

    def f_jac(self, w):
        raise NotImplementedError

    def f_hess_weighted(self, z):
        """sum_i z_i * (Hessian of F_i)."""
        raise NotImplementedError

    def membership(self, w, k):
        raise NotImplementedError

    def membership_jac_w(self, w, k):
        raise NotImplementedError

    def membership_jac_k(self, w, k):
        raise NotImplementedError

    def statw_extra_jac_w(self, w, k, mu):
        """d/dw of (dB/dw)^T mu."""
        raise NotImplementedError

    def statw_extra_jac_k(self, w, k, mu):
        raise NotImplementedError

    def statk_extra_jac_w(self, w, k, mu):
        """d/dw of (dB/dk)^T mu."""
        raise NotImplementedError

    def statk_extra_jac_k(self, w, k, mu):
        raise NotImplementedError

    def normal_at(self, w):
        """Unit power-space normal for a boundary point."""
        raise NotImplementedError

    def foot_guesses(self, p):
        """Deterministic seeds for global foot discovery."""
        return []


class ImplicitCurveBoundary(BoundaryModel):
    """Boundary given by a level function directly in power space.

    w lives in power space, F is the identity embedding, and membership
    pins level(w) = 0 and k = N(w). Used by the analytic toys (circle,
    ellipse); the statw curvature block is differenced because the toy
    dimension is tiny.
    """

    def __init__(self, level, grad, hess, dim: int = 2, n_seeds: int = 16,
                 seed_radius=None):
        self.level = level
        self.lgrad = grad
        self.lhess = hess
        self.dim_w = dim
        self.dim_k = dim
        self.n_membership = 1 + dim
        self._n_seeds = n_seeds
        self._seed_radius = seed_radius or 2.0

    def f_value(self, w):
        return np.asarray(w, dtype=float)

    def f_jac(self, w):
        return np.eye(self.dim_w)

    def f_hess_weighted(self, z):
        return np.zeros((self.dim_w, self.dim_w))

    def normal_at(self, w):
        g = self.lgrad(w)
        return g / np.linalg.norm(g)

    def membership(self, w, k):
        return np.concatenate([[self.level(w)], k - self.normal_at(w)])

    def membership_jac_w(self, w, k):
        out = np.zeros((self.n_membership, self.dim_w))
        out[0] = self.lgrad(w)
        g = self.lgrad(w)
        r = np.linalg.norm(g)
        n_vec = g / r
        h = self.lhess(w)
        out[1:] = -((np.eye(self.dim_w) - np.outer(n_vec, n_vec)) @ h / r)
        return out

    def membership_jac_k(self, w, k):
        out = np.zeros((self.n_membership, self.dim_k))
        out[1:] = np.eye(self.dim_k)
        return out

    def _fd_block(self, fun, x, dim, h=1e-6):
        cols = []
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = h
            cols.append((fun(x + e) - fun(x - e)) / (2 * h))
        return np.column_stack(cols)

    def statw_extra_jac_w(self, w, k, mu):
        def term(ww):
            return self.membership_jac_w(ww, k).T @ mu
        return self._fd_block(term, np.asarray(w, dtype=float), self.dim_w)

    def statw_extra_jac_k(self, w, k, mu):
        return np.zeros((self.dim_w, self.dim_k))

    def statk_extra_jac_w(self, w, k, mu):
        return np.zeros((self.dim_k, self.dim_w))

    def statk_extra_jac_k(self, w, k, mu):
        return np.zeros((self.dim_k, self.dim_k))

    def foot_guesses(self, p):
        # points around the curve, projected later by the discovery solver
        seeds = []
        for i in range(self._n_seeds):
            ang = 2 * np.pi * i / self._n_seeds
            w = self._seed_radius * np.array([np.cos(ang), np.sin(ang)])
            if self.dim_w > 2:
                w = np.concatenate([w, np.zeros(self.dim_w - 2)])
            seeds.append(w)
        return seeds


class QuadraticMapBoundary(BoundaryModel):
    """The solution space boundary of a quadratic power-flow map.

    Membership: (DF(w))^T k = 0 and |k|^2 = 1; every block of the KKT
    Jacobian is exact because the map is quadratic.
    """

    def __init__(self, m: qm.QuadraticMap):
        self.map = m
        self.dim_w = m.n
        self.dim_k = m.n
        self.n_membership = m.n + 1

    def f_value(self, w):
        return qm.evaluate(self.map, w)

    def f_jac(self, w):
        return qm.jacobian(self.map, w)

    def f_hess_weighted(self, z):
        return qm.hessian_weighted(self.map, z)

    def normal_at(self, w):
        return qm.eigen_data(self.map, w).ktilde

    def membership(self, w, k):
        return np.concatenate([self.f_jac(w).T @ k, [float(k @ k) - 1.0]])

    def membership_jac_w(self, w, k):
        out = np.zeros((self.n_membership, self.dim_w))
        out[:-1] = qm.hessian_weighted(self.map, k)
        return out

    def membership_jac_k(self, w, k):
        out = np.zeros((self.n_membership, self.dim_k))
        out[:-1] = self.f_jac(w).T
        out[-1] = 2.0 * k
        return out

    def statw_extra_jac_w(self, w, k, mu):
        return np.zeros((self.dim_w, self.dim_w))

    def statw_extra_jac_k(self, w, k, mu):
        return qm.jacobian(self.map, mu[:-1]).T

    def statk_extra_jac_w(self, w, k, mu):
        return qm.jacobian(self.map, mu[:-1])

    def statk_extra_jac_k(self, w, k, mu):
        return 2.0 * mu[-1] * np.eye(self.dim_k)


@dataclass
class Foot:
    """A tracked perpendicular foot on one boundary instance."""

    boundary: int
    w: np.ndarray
    k: np.ndarray
    sigma: float
    lam_d: float = 0.0
    mu: np.ndarray | None = None


@dataclass
class ContingencyBlock:
    """Equality constraints M(o, v) = S o + s0 - F(v) = 0."""

    boundary: int
    S: np.ndarray
    s0: np.ndarray

    def value(self, prob, o, v):
        return self.S @ o + self.s0 - prob.boundaries[self.boundary].f_value(v)


@dataclass
class SecurityProblem:
    goal: QuadraticFunction
    boundaries: list
    p_matrix: np.ndarray
    p_offset: np.ndarray
    inequalities: list = field(default_factory=list)
    contingencies: list = field(default_factory=list)
    epsilon: float = 0.05
    tol_kkt: float = 1e-8

    def p_of(self, o):
        return self.p_matrix @ o + self.p_offset

    @property
    def dim_o(self):
        return self.p_matrix.shape[1]


@dataclass
class SecurityState:
    t: float
    o: np.ndarray
    s: np.ndarray
    feet: list
    v: list = field(default_factory=list)
    lam_m: list = field(default_factory=list)
    lam_l: np.ndarray | None = None

    def copy(self):
        return SecurityState(
            t=self.t, o=self.o.copy(), s=self.s.copy(),
            feet=[replace(f, w=f.w.copy(), k=f.k.copy(),
                          mu=None if f.mu is None else f.mu.copy())
                  for f in self.feet],
            v=[vv.copy() for vv in self.v],
            lam_m=[l.copy() for l in self.lam_m],
            lam_l=None if self.lam_l is None else self.lam_l.copy())


class PredictorSingularError(RuntimeError):
    """KKT Jacobian singular: an active-set change is imminent."""


class CorrectorFailure(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def foot_distance(prob: SecurityProblem, st: SecurityState, f: Foot) -> float:
    p = prob.p_of(st.o)
    return abs(float(f.k @ (p - prob.boundaries[f.boundary].f_value(f.w))))


# ---------------------------------------------------------------------------
# variable layout
# ---------------------------------------------------------------------------


class _Layout:
    """Flat packing of primal variables and multipliers."""

    def __init__(self, prob: SecurityProblem, st: SecurityState):
        self.prob = prob
        idx = {}
        pos = 0

        def block(name, size):
            nonlocal pos
            idx[name] = slice(pos, pos + size)
            pos += size

        block("o", prob.dim_o)
        for ci, c in enumerate(prob.contingencies):
            block(f"v{ci}", prob.boundaries[c.boundary].dim_w)
        block("s", len(prob.inequalities))
        block("sigma", len(st.feet))
        for fi, f in enumerate(st.feet):
            b = prob.boundaries[f.boundary]
            block(f"w{fi}", b.dim_w)
            block(f"k{fi}", b.dim_k)
        self.n_primal = pos
        for ci, c in enumerate(prob.contingencies):
            block(f"lam_m{ci}", c.S.shape[0])
        block("lam_l", len(prob.inequalities))
        block("lam_d", len(st.feet))
        for fi, f in enumerate(st.feet):
            block(f"mu{fi}", prob.boundaries[f.boundary].n_membership)
        self.n_total = pos
        self.idx = idx

    def pack(self, st: SecurityState) -> np.ndarray:
        y = np.zeros(self.n_total)
        y[self.idx["o"]] = st.o
        for ci, vv in enumerate(st.v):
            y[self.idx[f"v{ci}"]] = vv
        y[self.idx["s"]] = st.s
        y[self.idx["sigma"]] = [f.sigma for f in st.feet]
        for fi, f in enumerate(st.feet):
            y[self.idx[f"w{fi}"]] = f.w
            y[self.idx[f"k{fi}"]] = f.k
            if f.mu is not None:
                y[self.idx[f"mu{fi}"]] = f.mu
        for ci, lm in enumerate(st.lam_m):
            y[self.idx[f"lam_m{ci}"]] = lm
        if st.lam_l is not None:
            y[self.idx["lam_l"]] = st.lam_l
        y[self.idx["lam_d"]] = [f.lam_d for f in st.feet]
        return y

    def unpack(self, y, t) -> SecurityState:
        prob = self.prob
        feet = []
        sigmas = y[self.idx["sigma"]]
        lam_ds = y[self.idx["lam_d"]]
        for fi in range(len(sigmas)):
            feet.append(Foot(
                boundary=self._foot_boundaries[fi],
                w=y[self.idx[f"w{fi}"]].copy(),
                k=y[self.idx[f"k{fi}"]].copy(),
                sigma=float(sigmas[fi]),
                lam_d=float(lam_ds[fi]),
                mu=y[self.idx[f"mu{fi}"]].copy()))
        return SecurityState(
            t=t, o=y[self.idx["o"]].copy(), s=y[self.idx["s"]].copy(),
            feet=feet,
            v=[y[self.idx[f"v{ci}"]].copy() for ci in range(len(prob.contingencies))],
            lam_m=[y[self.idx[f"lam_m{ci}"]].copy()
                   for ci in range(len(prob.contingencies))],
            lam_l=y[self.idx["lam_l"]].copy())

    def attach_boundaries(self, st):
        self._foot_boundaries = [f.boundary for f in st.feet]
        return self


# ---------------------------------------------------------------------------
# KKT residual and Jacobian
# ---------------------------------------------------------------------------


def kkt_residual(prob: SecurityProblem, st: SecurityState) -> np.ndarray:
    """Stacked stationarity, complementarity, and feasibility residuals."""
    p = prob.p_of(st.o)
    rows = []
    # stationarity in o
    r_o = prob.goal.grad(st.o).astype(float).copy()
    for ci, c in enumerate(prob.contingencies):
        r_o += c.S.T @ st.lam_m[ci]
    for li, ineq in enumerate(prob.inequalities):
        r_o += st.lam_l[li] * ineq.grad(st.o)
    for f in st.feet:
        b = prob.boundaries[f.boundary]
        sg = _sgn(float(f.k @ (p - b.f_value(f.w))))
        r_o += f.lam_d * sg * (prob.p_matrix.T @ f.k)
    rows.append(r_o)
    # stationarity in v per contingency
    for ci, c in enumerate(prob.contingencies):
        b = prob.boundaries[c.boundary]
        rows.append(-(b.f_jac(st.v[ci]).T @ st.lam_m[ci]))
    # complementarity
    rows.append(np.array([-2.0 * st.lam_l[li] * st.s[li]
                          for li in range(len(prob.inequalities))]))
    rows.append(np.array([-2.0 * f.lam_d * f.sigma for f in st.feet]))
    # feasibility
    for ci, c in enumerate(prob.contingencies):
        rows.append(c.value(prob, st.o, st.v[ci]))
    rows.append(np.array([ineq.value(st.o) - st.s[li] ** 2
                          for li, ineq in enumerate(prob.inequalities)]))
    rows.append(np.array([
        abs(float(f.k @ (p - prob.boundaries[f.boundary].f_value(f.w))))
        - st.t - f.sigma ** 2 for f in st.feet]))
    # per-foot stationarity and membership
    for f in st.feet:
        b = prob.boundaries[f.boundary]
        z = b.f_value(f.w) - p
        mu = f.mu if f.mu is not None else np.zeros(b.n_membership)
        rows.append(2.0 * (b.f_jac(f.w).T @ z) + b.membership_jac_w(f.w, f.k).T @ mu)
        rows.append(b.membership_jac_k(f.w, f.k).T @ mu)
        rows.append(b.membership(f.w, f.k))
    return np.concatenate(rows)


def _row_layout(prob, st):
    """Slices of the residual stack, mirroring kkt_residual's order."""
    rows = {}
    pos = 0

    def block(name, size):
        nonlocal pos
        rows[name] = slice(pos, pos + size)
        pos += size

    block("stat_o", prob.dim_o)
    for ci, c in enumerate(prob.contingencies):
        block(f"stat_v{ci}", prob.boundaries[c.boundary].dim_w)
    block("comp_l", len(prob.inequalities))
    block("comp_d", len(st.feet))
    for ci, c in enumerate(prob.contingencies):
        block(f"feas_m{ci}", c.S.shape[0])
    block("feas_l", len(prob.inequalities))
    block("feas_d", len(st.feet))
    for fi, f in enumerate(st.feet):
        b = prob.boundaries[f.boundary]
        block(f"stat_w{fi}", b.dim_w)
        block(f"stat_k{fi}", b.dim_k)
        block(f"memb{fi}", b.n_membership)
    return rows, pos


def kkt_jacobian(prob: SecurityProblem, st: SecurityState):
    """Jacobian of the residual stack in the flat variable layout."""
    lay = _Layout(prob, st).attach_boundaries(st)
    rows, n_rows = _row_layout(prob, st)
    jac = np.zeros((n_rows, lay.n_total))
    p = prob.p_of(st.o)
    P = prob.p_matrix
    idx = lay.idx

    # stat_o
    jac[rows["stat_o"], idx["o"]] = prob.goal.hess(st.o)
    for li, ineq in enumerate(prob.inequalities):
        jac[rows["stat_o"], idx["o"]] += st.lam_l[li] * ineq.hess(st.o)
        jac[rows["stat_o"], idx["lam_l"].start + li] = ineq.grad(st.o)
    for ci, c in enumerate(prob.contingencies):
        jac[rows["stat_o"], idx[f"lam_m{ci}"]] = c.S.T
    for fi, f in enumerate(st.feet):
        b = prob.boundaries[f.boundary]
        sg = _sgn(float(f.k @ (p - b.f_value(f.w))))
        jac[rows["stat_o"], idx[f"k{fi}"]] = f.lam_d * sg * P.T
        jac[rows["stat_o"], idx["lam_d"].start + fi] = sg * (P.T @ f.k)
    # stat_v
    for ci, c in enumerate(prob.contingencies):
        b = prob.boundaries[c.boundary]
        r = rows[f"stat_v{ci}"]
        jac[r, idx[f"v{ci}"]] = -b.f_hess_weighted(st.lam_m[ci])
        jac[r, idx[f"lam_m{ci}"]] = -b.f_jac(st.v[ci]).T
    # complementarity
    for li in range(len(prob.inequalities)):
        r = rows["comp_l"].start + li
        jac[r, idx["s"].start + li] = -2.0 * st.lam_l[li]
        jac[r, idx["lam_l"].start + li] = -2.0 * st.s[li]
    for fi, f in enumerate(st.feet):
        r = rows["comp_d"].start + fi
        jac[r, idx["sigma"].start + fi] = -2.0 * f.lam_d
        jac[r, idx["lam_d"].start + fi] = -2.0 * f.sigma
    # feas_m
    for ci, c in enumerate(prob.contingencies):
        b = prob.boundaries[c.boundary]
        r = rows[f"feas_m{ci}"]
        jac[r, idx["o"]] = c.S
        jac[r, idx[f"v{ci}"]] = -b.f_jac(st.v[ci])
    # feas_l
    for li, ineq in enumerate(prob.inequalities):
        r = rows["feas_l"].start + li
        jac[r, idx["o"]] = ineq.grad(st.o)
        jac[r, idx["s"].start + li] = -2.0 * st.s[li]
    # feas_d
    for fi, f in enumerate(st.feet):
        b = prob.boundaries[f.boundary]
        r = rows["feas_d"].start + fi
        z = p - b.f_value(f.w)
        sg = _sgn(float(f.k @ z))
        jac[r, idx["o"]] = sg * (f.k @ P)
        jac[r, idx[f"k{fi}"]] = sg * z
        jac[r, idx[f"w{fi}"]] = -sg * (f.k @ b.f_jac(f.w))
        jac[r, idx["sigma"].start + fi] = -2.0 * f.sigma
    # per-foot stationarity and membership
    for fi, f in enumerate(st.feet):
        b = prob.boundaries[f.boundary]
        mu = f.mu if f.mu is not None else np.zeros(b.n_membership)
        jf = b.f_jac(f.w)
        z = b.f_value(f.w) - p
        rw = rows[f"stat_w{fi}"]
        jac[rw, idx[f"w{fi}"]] = (2.0 * (jf.T @ jf) + 2.0 * b.f_hess_weighted(z)
                                  + b.statw_extra_jac_w(f.w, f.k, mu))
        jac[rw, idx["o"]] = -2.0 * (jf.T @ P)
        jac[rw, idx[f"k{fi}"]] = b.statw_extra_jac_k(f.w, f.k, mu)
        jac[rw, idx[f"mu{fi}"]] = b.membership_jac_w(f.w, f.k).T
        rk = rows[f"stat_k{fi}"]
        jac[rk, idx[f"w{fi}"]] = b.statk_extra_jac_w(f.w, f.k, mu)
        jac[rk, idx[f"k{fi}"]] = b.statk_extra_jac_k(f.w, f.k, mu)
        jac[rk, idx[f"mu{fi}"]] = b.membership_jac_k(f.w, f.k).T
        rm = rows[f"memb{fi}"]
        jac[rm, idx[f"w{fi}"]] = b.membership_jac_w(f.w, f.k)
        jac[rm, idx[f"k{fi}"]] = b.membership_jac_k(f.w, f.k)
    return jac, lay, rows


def predictor_step(prob: SecurityProblem, st: SecurityState):
    """d(state)/dt from implicit differentiation of the KKT stack.

    Only the distance rows depend explicitly on t (with coefficient -1),
    so the right-hand side is the indicator of those rows. A singular
    Jacobian signals an active-set change; the caller should fall back to
    a corrector-only step.
    """
    jac, lay, rows = kkt_jacobian(prob, st)
    rhs = np.zeros(jac.shape[0])
    rhs[rows["feas_d"]] = 1.0
    try:
        ydot = num.solve_square(jac, rhs)
    except num.SingularMatrixError as exc:
        raise PredictorSingularError(str(exc)) from exc
    return ydot, lay


# ---------------------------------------------------------------------------
# corrector
# ---------------------------------------------------------------------------


class _CorrectorSetup:
    """Reactionless constrained problem over (o, v, w_i, k_i).

    Slack-carrying constraints are handled by an explicit active set: an
    active row enforces the underlying quantity at its bound (inequality
    functions at zero, foot distances at t), an inactive one is only
    monitored and its slack is reconstructed afterwards. Distance-row
    gradients are masked on the foot variables; foot-goal gradients are
    masked on the operating point (reactionless coupling).
    """

    def __init__(self, prob: SecurityProblem, st: SecurityState):
        self.prob = prob
        self.st = st
        idx = {}
        pos = 0

        def block(name, size):
            nonlocal pos
            idx[name] = slice(pos, pos + size)
            pos += size

        block("o", prob.dim_o)
        for ci, c in enumerate(prob.contingencies):
            block(f"v{ci}", prob.boundaries[c.boundary].dim_w)
        for fi, f in enumerate(st.feet):
            b = prob.boundaries[f.boundary]
            block(f"w{fi}", b.dim_w)
            block(f"k{fi}", b.dim_k)
        self.idx = idx
        self.n = pos

    def pack(self, st):
        x = np.zeros(self.n)
        x[self.idx["o"]] = st.o
        for ci, vv in enumerate(st.v):
            x[self.idx[f"v{ci}"]] = vv
        for fi, f in enumerate(st.feet):
            x[self.idx[f"w{fi}"]] = f.w
            x[self.idx[f"k{fi}"]] = f.k
        return x

    def ineq_value(self, x, li):
        return float(self.prob.inequalities[li].value(x[self.idx["o"]]))

    def dist_value(self, x, fi):
        prob, idx = self.prob, self.idx
        f = self.st.feet[fi]
        b = prob.boundaries[f.boundary]
        o = x[idx["o"]]
        h = float(x[idx[f"k{fi}"]] @ (prob.p_of(o) - b.f_value(x[idx[f"w{fi}"]])))
        return abs(h)

    def build(self, active_l, active_d):
        prob, st, idx, n = self.prob, self.st, self.idx, self.n
        P = prob.p_matrix
        constraints = []
        for ci, c in enumerate(prob.contingencies):
            b = prob.boundaries[c.boundary]
            for row in range(c.S.shape[0]):
                def fun(x, ci=ci, row=row, c=c):
                    return float(c.value(prob, x[idx["o"]], x[idx[f"v{ci}"]])[row])

                def grad(x, ci=ci, row=row, c=c, b=b):
                    g = np.zeros(n)
                    g[idx["o"]] = c.S[row]
                    g[idx[f"v{ci}"]] = -b.f_jac(x[idx[f"v{ci}"]])[row]
                    return g

                constraints.append(num.Constraint(fun=fun, grad=grad))
        for li in active_l:
            ineq = prob.inequalities[li]

            def fun(x, ineq=ineq):
                return float(ineq.value(x[idx["o"]]))

            def grad(x, ineq=ineq):
                g = np.zeros(n)
                g[idx["o"]] = ineq.grad(x[idx["o"]])
                return g

            constraints.append(num.Constraint(fun=fun, grad=grad))
        for fi in active_d:
            f = st.feet[fi]
            b = prob.boundaries[f.boundary]

            def fun(x, fi=fi, b=b):
                return self.dist_value(x, fi) - st.t

            def grad(x, fi=fi, b=b):
                # reactionless: acts on the operating point only
                o = x[idx["o"]]
                w = x[idx[f"w{fi}"]]
                k = x[idx[f"k{fi}"]]
                h = float(k @ (prob.p_of(o) - b.f_value(w)))
                g = np.zeros(n)
                g[idx["o"]] = _sgn(h) * (k @ P)
                return g

            constraints.append(num.Constraint(fun=fun, grad=grad))
        for fi, f in enumerate(st.feet):
            b = prob.boundaries[f.boundary]
            for row in range(b.n_membership):
                def fun(x, fi=fi, b=b, row=row):
                    return float(b.membership(x[idx[f"w{fi}"]],
                                              x[idx[f"k{fi}"]])[row])

                def grad(x, fi=fi, b=b, row=row):
                    g = np.zeros(n)
                    w = x[idx[f"w{fi}"]]
                    k = x[idx[f"k{fi}"]]
                    g[idx[f"w{fi}"]] = b.membership_jac_w(w, k)[row]
                    g[idx[f"k{fi}"]] = b.membership_jac_k(w, k)[row]
                    return g

                constraints.append(num.Constraint(fun=fun, grad=grad))

        def goal(x):
            total = prob.goal.value(x[idx["o"]])
            for fi, f in enumerate(st.feet):
                b = prob.boundaries[f.boundary]
                z = b.f_value(x[idx[f"w{fi}"]]) - prob.p_of(x[idx["o"]])
                total += float(z @ z)
            return total

        def goal_grad(x):
            g = np.zeros(n)
            g[idx["o"]] = prob.goal.grad(x[idx["o"]])
            for fi, f in enumerate(st.feet):
                b = prob.boundaries[f.boundary]
                w = x[idx[f"w{fi}"]]
                z = b.f_value(w) - prob.p_of(x[idx["o"]])
                # foot goal moves the foot only: operating-point part masked
                g[idx[f"w{fi}"]] += 2.0 * (b.f_jac(w).T @ z)
            return g

        return num.ConstrainedProblem(constraints=constraints, goal=goal,
                                      goal_grad=goal_grad)


def _estimate_multipliers(prob, st):
    """Least squares on the stationarity rows (linear in the multipliers),
    with complementarity rows pinning inactive-constraint multipliers."""
    lay = _Layout(prob, st).attach_boundaries(st)
    n_mult = lay.n_total - lay.n_primal
    if n_mult == 0:
        return st
    p = prob.p_of(st.o)
    rows = []
    rhs = []

    def mcol(sl):
        return slice(sl.start - lay.n_primal, sl.stop - lay.n_primal)

    # stat_o
    block = np.zeros((prob.dim_o, n_mult))
    for ci, c in enumerate(prob.contingencies):
        block[:, mcol(lay.idx[f"lam_m{ci}"])] = c.S.T
    for li, ineq in enumerate(prob.inequalities):
        block[:, mcol(lay.idx["lam_l"]).start + li] = ineq.grad(st.o)
    for fi, f in enumerate(st.feet):
        b = prob.boundaries[f.boundary]
        sg = _sgn(float(f.k @ (p - b.f_value(f.w))))
        block[:, mcol(lay.idx["lam_d"]).start + fi] = sg * (prob.p_matrix.T @ f.k)
    rows.append(block)
    rhs.append(-prob.goal.grad(st.o))
    # stat_v
    for ci, c in enumerate(prob.contingencies):
        b = prob.boundaries[c.boundary]
        block = np.zeros((b.dim_w, n_mult))
        block[:, mcol(lay.idx[f"lam_m{ci}"])] = -b.f_jac(st.v[ci]).T
        rows.append(block)
        rhs.append(np.zeros(b.dim_w))
    # per-foot stationarity
    for fi, f in enumerate(st.feet):
        b = prob.boundaries[f.boundary]
        z = b.f_value(f.w) - p
        block = np.zeros((b.dim_w, n_mult))
        block[:, mcol(lay.idx[f"mu{fi}"])] = b.membership_jac_w(f.w, f.k).T
        rows.append(block)
        rhs.append(-2.0 * (b.f_jac(f.w).T @ z))
        block = np.zeros((b.dim_k, n_mult))
        block[:, mcol(lay.idx[f"mu{fi}"])] = b.membership_jac_k(f.w, f.k).T
        rows.append(block)
        rhs.append(np.zeros(b.dim_k))
    # complementarity pins
    for li in range(len(prob.inequalities)):
        block = np.zeros((1, n_mult))
        block[0, mcol(lay.idx["lam_l"]).start + li] = st.s[li]
        rows.append(block)
        rhs.append(np.zeros(1))
    for fi, f in enumerate(st.feet):
        block = np.zeros((1, n_mult))
        block[0, mcol(lay.idx["lam_d"]).start + fi] = f.sigma
        rows.append(block)
        rhs.append(np.zeros(1))
    a = np.vstack(rows)
    b_vec = np.concatenate(rhs)
    mult, *_ = np.linalg.lstsq(a, b_vec, rcond=None)
    out = st.copy()
    for ci in range(len(prob.contingencies)):
        out.lam_m[ci] = mult[mcol(lay.idx[f"lam_m{ci}"])].copy()
    out.lam_l = mult[mcol(lay.idx["lam_l"])].copy()
    lam_d = mult[mcol(lay.idx["lam_d"])]
    for fi, f in enumerate(out.feet):
        f.lam_d = float(lam_d[fi])
        f.mu = mult[mcol(lay.idx[f"mu{fi}"])].copy()
    return out


def corrector(prob: SecurityProblem, st: SecurityState,
              max_iter: int = 1500, act_tol: float = 1e-7) -> SecurityState:
    """Re-solve the coupled optimization problems at the current t.

    Reactionless projected gradient descent over the joint primal
    variables, with slack-carrying constraints handled by an explicit
    active set (a squared or absolute slack parameterization stalls or
    oscillates exactly where a slack sits at zero). Activity is revised
    between descent runs: violated inactive rows activate, active rows
    whose multiplier estimate has the releasing sign deactivate. Slacks
    are rebuilt from the converged point and the Lagrange multipliers are
    re-estimated by least squares.
    """
    setup = _CorrectorSetup(prob, st)
    x = setup.pack(st)
    # a row is tentatively active if its slack or margin is tight OR its
    # incoming multiplier is nonzero (the predictor preserves the active
    # set; measuring margins against predictor-transported feet is noisy)
    lam_scale = 1e-8 * (1.0 + np.linalg.norm(prob.goal.grad(st.o)))
    active_l = {li for li in range(len(prob.inequalities))
                if st.s[li] <= act_tol or setup.ineq_value(x, li) <= act_tol
                or (st.lam_l is not None and abs(st.lam_l[li]) > lam_scale)}
    active_d = {fi for fi, f in enumerate(st.feet)
                if f.sigma <= act_tol
                or setup.dist_value(x, fi) - st.t <= act_tol
                or abs(f.lam_d) > lam_scale}
    trust = 10.0 * prob.epsilon * max(1.0, np.linalg.norm(st.o))
    rep = None
    for _ in range(6):
        cp = setup.build(sorted(active_l), sorted(active_d))
        x, rep = num.projected_gradient_descent(
            cp, x, num.PgdOptions(tol_c=1e-11, tol_g=1e-9, max_iter=max_iter,
                                  max_step=trust, max_violation_growth=20.0))
        changed = False
        for li in range(len(prob.inequalities)):
            if li not in active_l and setup.ineq_value(x, li) < -act_tol:
                active_l.add(li)
                changed = True
        for fi in range(len(st.feet)):
            if fi not in active_d and setup.dist_value(x, fi) - st.t < -act_tol:
                active_d.add(fi)
                changed = True
        if not changed:
            released = _release_inactive(prob, st, setup, x, active_l, active_d,
                                         cp)
            if not released:
                break
    if rep is not None and not rep.converged and rep.max_constraint > 1e-9:
        raise CorrectorFailure(f"reactionless descent did not converge: {rep}",
                               report=rep)
    out = st.copy()
    out.o = x[setup.idx["o"]].copy()
    out.v = [x[setup.idx[f"v{ci}"]].copy()
             for ci in range(len(prob.contingencies))]
    # slacks of active rows are exactly zero; the square root would turn
    # solver-precision feasibility noise into visible complementarity error
    out.s = np.array([
        0.0 if li in active_l else np.sqrt(max(setup.ineq_value(x, li), 0.0))
        for li in range(len(prob.inequalities))])
    for fi, f in enumerate(out.feet):
        f.w = x[setup.idx[f"w{fi}"]].copy()
        f.k = x[setup.idx[f"k{fi}"]].copy()
        nk = np.linalg.norm(f.k)
        if nk > 0:
            f.k = f.k / nk
        f.sigma = 0.0 if fi in active_d else float(
            np.sqrt(max(setup.dist_value(x, fi) - st.t, 0.0)))
    out = _estimate_multipliers(prob, out)
    return _newton_polish(prob, out)


def _newton_polish(prob, st, iters: int = 12, act_tol: float = 1e-7):
    """Sharpen the descent output with Newton on the active-set-reduced stack.

    Active slacks are pinned at zero (their columns and complementarity
    rows removed): the reduced system's zeros all live on the current
    active-set branch, so Newton cannot wander to a stationary point of a
    different activity pattern. Steps are trust-limited and must reduce
    the residual; failures leave the state as is.
    """
    budget = 10.0 * prob.epsilon * max(1.0, float(np.linalg.norm(st.o)))
    for _ in range(iters):
        r = kkt_residual(prob, st)
        norm = np.linalg.norm(r, ord=np.inf)
        if norm <= 1e-13 or budget <= 0:
            break
        try:
            jac, lay, rows = kkt_jacobian(prob, st)
        except num.SingularMatrixError:
            break
        drop_cols = []
        drop_rows = []
        for li in range(len(prob.inequalities)):
            if st.s[li] <= act_tol:
                drop_cols.append(lay.idx["s"].start + li)
                drop_rows.append(rows["comp_l"].start + li)
        for fi, f in enumerate(st.feet):
            if f.sigma <= act_tol:
                drop_cols.append(lay.idx["sigma"].start + fi)
                drop_rows.append(rows["comp_d"].start + fi)
        keep_rows = np.setdiff1d(np.arange(jac.shape[0]), drop_rows)
        keep_cols = np.setdiff1d(np.arange(jac.shape[1]), drop_cols)
        try:
            delta_red = num.solve_square(jac[np.ix_(keep_rows, keep_cols)],
                                         r[keep_rows])
        except num.SingularMatrixError:
            break
        delta = np.zeros(jac.shape[1])
        delta[keep_cols] = delta_red
        move = float(np.linalg.norm(delta[: lay.n_primal]))
        if move > budget:
            delta = delta * (budget / move)
            move = budget
        cand = lay.unpack(lay.pack(st) - delta, st.t)
        for f in cand.feet:
            f.sigma = abs(f.sigma)
            nk = np.linalg.norm(f.k)
            if nk > 0:
                f.k = f.k / nk
        cand.s = np.abs(cand.s)
        if np.linalg.norm(kkt_residual(prob, cand), ord=np.inf) < norm:
            st = cand
            budget -= move
        else:
            break
    return st


def _release_inactive(prob, st, setup, x, active_l, active_d, cp):
    """Release active rows whose multiplier sign says the optimum is
    interior (for min G with c >= 0, KKT needs mu >= 0 in
    grad G = mu * grad c)."""
    o = x[setup.idx["o"]]
    rows = []
    labels = []
    for li in sorted(active_l):
        rows.append(prob.inequalities[li].grad(o))
        labels.append(("l", li))
    for fi in sorted(active_d):
        f = st.feet[fi]
        b = prob.boundaries[f.boundary]
        h = float(x[setup.idx[f"k{fi}"]] @ (
            prob.p_of(o) - b.f_value(x[setup.idx[f"w{fi}"]])))
        rows.append(_sgn(h) * (x[setup.idx[f"k{fi}"]] @ prob.p_matrix))
        labels.append(("d", fi))
    if not rows:
        return False
    a = np.asarray(rows).T
    g = prob.goal.grad(o)
    scale = 1.0 + np.linalg.norm(g)

    def fit_residual(cols):
        if not cols:
            return np.linalg.norm(g)
        sub = a[:, cols]
        _, res, *_ = np.linalg.lstsq(sub, g, rcond=None)
        mu_fit, *_ = np.linalg.lstsq(sub, g, rcond=None)
        return np.linalg.norm(sub @ mu_fit - g)

    cols = list(range(len(labels)))
    base = fit_residual(cols)
    released = False
    # redundant rows first (near-duplicate active gradients explain nothing)
    for j in list(cols):
        if len(cols) == 1:
            break
        rest = [c for c in cols if c != j]
        if fit_residual(rest) <= base + 1e-9 * scale:
            kind, i = labels[j]
            (active_l if kind == "l" else active_d).discard(i)
            cols = rest
            released = True
    if cols:
        mu, *_ = np.linalg.lstsq(a[:, cols], g, rcond=None)
        for j, m in zip(cols, mu):
            kind, i = labels[j]
            if m < -1e-6 * scale:
                (active_l if kind == "l" else active_d).discard(i)
                released = True
    return released


# ---------------------------------------------------------------------------
# foot discovery
# ---------------------------------------------------------------------------


def _local_foot(prob, boundary_index, p, w_init, k_init=None):
    """Steps 2-3: slide a candidate to a locally closest boundary point."""
    b = prob.boundaries[boundary_index]
    if k_init is None:
        try:
            k_init = b.normal_at(np.asarray(w_init, dtype=float))
        except Exception:
            k_init = np.zeros(b.dim_k)
            k_init[0] = 1.0
    nw = b.dim_w

    def fun_rows(x):
        return b.membership(x[:nw], x[nw:])

    cons = []
    for row in range(b.n_membership):
        def fun(x, row=row):
            return float(fun_rows(x)[row])

        def grad(x, row=row):
            w, k = x[:nw], x[nw:]
            return np.concatenate([b.membership_jac_w(w, k)[row],
                                   b.membership_jac_k(w, k)[row]])

        cons.append(num.Constraint(fun=fun, grad=grad))

    def goal(x):
        z = b.f_value(x[:nw]) - p
        return float(z @ z)

    def goal_grad(x):
        w = x[:nw]
        z = b.f_value(w) - p
        return np.concatenate([2.0 * (b.f_jac(w).T @ z), np.zeros(b.dim_k)])

    prob2 = num.ConstrainedProblem(constraints=cons, goal=goal,
                                   goal_grad=goal_grad)
    x0 = np.concatenate([np.asarray(w_init, dtype=float), k_init])
    x, rep = num.projected_gradient_descent(
        prob2, x0, num.PgdOptions(tol_c=1e-11, tol_g=1e-8, max_iter=600))
    if rep.max_constraint > 1e-8:
        return None
    w, k = x[:nw], x[nw:]
    nk = np.linalg.norm(k)
    if nk == 0:
        return None
    return w, k / nk


def _equal_distance_seed(prob, boundary_index, p, w_init, target):
    """Step 1: a boundary point at the prescribed distance from the OP.

    Same projection solver with a constant goal; the distance equation is
    |F(y) - p| = target. A non-converged iterate is still returned as a
    seed for the local minimization (infeasibility of the equality system
    manifests as convergence back to a known foot).
    """
    b = prob.boundaries[boundary_index]
    nw = b.dim_w

    def dist_fun(x):
        z = b.f_value(x[:nw]) - p
        return float(np.linalg.norm(z) - target)

    def dist_grad(x):
        w = x[:nw]
        z = b.f_value(w) - p
        nz = np.linalg.norm(z)
        g = np.zeros(nw + b.dim_k)
        if nz > 1e-12:
            g[:nw] = (b.f_jac(w).T @ z) / nz
        return g

    cons = [num.Constraint(fun=dist_fun, grad=dist_grad)]
    for row in range(b.n_membership):
        def fun(x, row=row):
            return float(b.membership(x[:nw], x[nw:])[row])

        def grad(x, row=row):
            w, k = x[:nw], x[nw:]
            return np.concatenate([b.membership_jac_w(w, k)[row],
                                   b.membership_jac_k(w, k)[row]])

        cons.append(num.Constraint(fun=fun, grad=grad))
    try:
        k_init = b.normal_at(np.asarray(w_init, dtype=float))
    except Exception:
        k_init = np.zeros(b.dim_k)
        k_init[0] = 1.0
    x0 = np.concatenate([np.asarray(w_init, dtype=float), k_init])
    prob2 = num.ConstrainedProblem(constraints=cons)
    x, rep = num.projected_gradient_descent(
        prob2, x0, num.PgdOptions(tol_c=1e-10, tol_g=1e-8, max_iter=150))
    return x[:nw]


def discover_feet(prob: SecurityProblem, st: SecurityState,
                  rounds: int = 3, wide: bool = False) -> list:
    """Search for new perpendicular feet within epsilon of the closest.

    Seeds are reflections of known feet through the operating point (the
    configuration in which a cut-locus crossing spawns a second foot);
    ``wide`` adds the boundary's own deterministic seed set for the
    initial global search. Each seed is pulled onto the boundary at the
    equal-distance level, slid to a local distance minimum, and kept only
    if it at least ties the closest known foot.
    """
    p = prob.p_of(st.o)
    new_feet = []
    for _ in range(rounds):
        dists = [foot_distance(prob, st, f) for f in st.feet + new_feet]
        if not dists:
            return new_feet
        d_best = min(dists)
        target = d_best - prob.epsilon
        added = False
        for bi in range(len(prob.boundaries)):
            b = prob.boundaries[bi]
            seeds = []
            for f in st.feet + new_feet:
                if f.boundary != bi:
                    continue
                fw = b.f_value(f.w)
                seeds.append(2.0 * p - fw if b.dim_w == fw.size else f.w)
            if wide:
                seeds.extend(b.foot_guesses(p))
            for seed in seeds:
                w_seed = _equal_distance_seed(prob, bi, p, seed,
                                              max(target, 1e-9))
                cand = _local_foot(prob, bi, p, w_seed)
                if cand is None:
                    continue
                w, k = cand
                dup = False
                for f in st.feet + new_feet:
                    if f.boundary == bi and np.linalg.norm(f.w - w) <= 1e-3 * (
                            1.0 + np.linalg.norm(f.w)):
                        dup = True
                        break
                if dup:
                    continue
                dist = abs(float(k @ (p - b.f_value(w))))
                # a discovered foot must be at least tied with the closest
                # known one; farther local minima are not yet relevant
                if dist > d_best + 1e-5 * (1.0 + d_best):
                    continue
                sigma = np.sqrt(max(dist - st.t, 0.0))
                new_feet.append(Foot(boundary=bi, w=w, k=k, sigma=float(sigma)))
                added = True
        if not added:
            break
    return new_feet


def prune_feet(prob: SecurityProblem, st: SecurityState) -> SecurityState:
    """Drop near-duplicate feet and feet far beyond the closest one."""
    dists = [foot_distance(prob, st, f) for f in st.feet]
    if not dists:
        return st
    d_best = min(dists)
    kept = []
    for f, d in zip(st.feet, dists):
        if any(f.boundary == g.boundary and np.linalg.norm(f.w - g.w)
               <= 1e-3 * (1.0 + np.linalg.norm(g.w)) for g in kept):
            continue
        if d > 2.0 * d_best + prob.epsilon:
            continue
        kept.append(f)
    out = st.copy()
    out.feet = kept
    return out


# ---------------------------------------------------------------------------
# the push loop
# ---------------------------------------------------------------------------


@dataclass
class PushResult:
    states: list
    status: str
    message: str = ""

    @property
    def end(self) -> SecurityState:
        return self.states[-1]


def circle_boundary(radius: float = 1.0) -> ImplicitCurveBoundary:
    r2 = radius * radius
    return ImplicitCurveBoundary(
        level=lambda w: float(w @ w - r2),
        grad=lambda w: 2.0 * np.asarray(w, dtype=float),
        hess=lambda w: 2.0 * np.eye(2),
        seed_radius=2.0 * radius)


def ellipse_boundary(a: float = 2.0, b: float = 1.0) -> ImplicitCurveBoundary:
    d = np.array([1.0 / a**2, 1.0 / b**2])
    return ImplicitCurveBoundary(
        level=lambda w: float(w @ (d * w) - 1.0),
        grad=lambda w: 2.0 * d * np.asarray(w, dtype=float),
        hess=lambda w: 2.0 * np.diag(d),
        seed_radius=2.0 * max(a, b))


def disk_toy(goal_target=(2.0, 0.0), inequalities=None,
             epsilon: float = 0.05) -> SecurityProblem:
    """Unit-circle boundary, quadratic goal pulling outward."""
    return SecurityProblem(
        goal=goal_towards(goal_target),
        boundaries=[circle_boundary(1.0)],
        p_matrix=np.eye(2), p_offset=np.zeros(2),
        inequalities=inequalities or [],
        epsilon=epsilon)


def ellipse_toy(goal_target=(0.3, 2.0), a: float = 2.0, b: float = 1.0,
                epsilon: float = 0.05) -> SecurityProblem:
    return SecurityProblem(
        goal=goal_towards(goal_target),
        boundaries=[ellipse_boundary(a, b)],
        p_matrix=np.eye(2), p_offset=np.zeros(2),
        epsilon=epsilon)


def initialize_state(prob: SecurityProblem, o0, v0=None,
                     feet: list | None = None) -> SecurityState:
    """Build a KKT-consistent starting state at t = current closest distance."""
    o0 = np.asarray(o0, dtype=float)
    p = prob.p_of(o0)
    if feet is None:
        feet = []
        for bi, b in enumerate(prob.boundaries):
            best = None
            for seed in b.foot_guesses(p):
                cand = _local_foot(prob, bi, p, seed)
                if cand is None:
                    continue
                w, k = cand
                d = abs(float(k @ (p - b.f_value(w))))
                if best is None or d < best[0]:
                    best = (d, w, k)
            if best is not None:
                feet.append(Foot(boundary=bi, w=best[1], k=best[2], sigma=0.0))
        if not feet:
            raise ValueError("no feet found; supply them explicitly")
    dists = []
    st = SecurityState(
        t=0.0, o=o0.copy(),
        s=np.array([np.sqrt(max(ineq.value(o0), 0.0))
                    for ineq in prob.inequalities]),
        feet=feet,
        v=[np.asarray(v0[ci], dtype=float).copy()
           for ci in range(len(prob.contingencies))] if v0 else [],
        lam_m=[np.zeros(c.S.shape[0]) for c in prob.contingencies],
        lam_l=np.zeros(len(prob.inequalities)))
    dists = [foot_distance(prob, st, f) for f in st.feet]
    st.t = min(dists)
    for f, d in zip(st.feet, dists):
        f.sigma = float(np.sqrt(max(d - st.t, 0.0)))
    st = corrector(prob, st)
    extra = discover_feet(prob, st, wide=True)
    if extra:
        st.feet.extend(extra)
        st = prune_feet(prob, st)
        st = corrector(prob, st)
        # corrected feet may have merged
        pruned = prune_feet(prob, st)
        if len(pruned.feet) != len(st.feet):
            st = corrector(prob, pruned)
    return st


def push(prob: SecurityProblem, st0: SecurityState, t_target: float,
         kkt_tol: float | None = None) -> PushResult:
    """Increase the protected distance from st0.t to t_target.

    Euler-predicts all variables and multipliers from the differentiated
    stack, re-solves with the corrector, and scans for newly relevant
    feet after every step; a singular predictor (active-set change)
    degrades that step to corrector-only. Stops early with a terminal
    report when the corrector cannot restore feasibility.
    """
    tol = kkt_tol if kkt_tol is not None else prob.tol_kkt
    states = [st0]
    st = st0
    if t_target <= st.t + 1e-15:
        return PushResult(states=states, status="done",
                          message="target at or below the starting level")
    max_steps = 20 * int(np.ceil((t_target - st.t) / prob.epsilon)) + 50
    steps = 0
    while st.t < t_target - 1e-12:
        steps += 1
        if steps > max_steps:
            return PushResult(states=states, status="stalled",
                              message=f"step budget exhausted at t={st.t}")
        h = min(prob.epsilon, t_target - st.t)
        try:
            ydot, lay = predictor_step(prob, st)
            # keep the physical motion per step at the discovery resolution;
            # exploding derivatives signal the feasibility limit
            speed = float(np.linalg.norm(ydot[: lay.n_primal], ord=np.inf))
            if speed * h > prob.epsilon:
                h = prob.epsilon / speed
            if h < 1e-6 * prob.epsilon:
                return PushResult(
                    states=states, status="infeasible",
                    message=f"level derivative diverges at t={st.t}: the "
                            f"feasible set is exhausting")
            t_next = st.t + h
            y = lay.pack(st) + h * ydot
            st_pred = lay.unpack(y, t_next)
        except PredictorSingularError:
            t_next = st.t + h
            st_pred = st.copy()
            st_pred.t = t_next
        # keep slacks consistent with the new level before correcting
        for f in st_pred.feet:
            d = foot_distance(prob, st_pred, f)
            f.sigma = float(np.sqrt(max(d - t_next, 0.0)))
        try:
            st_new = corrector(prob, st_pred)
            extra = discover_feet(prob, st_new)
            if extra:
                st_new.feet.extend(extra)
                st_new = prune_feet(prob, st_new)
                st_new = corrector(prob, st_new)
                pruned = prune_feet(prob, st_new)
                if len(pruned.feet) != len(st_new.feet):
                    st_new = corrector(prob, pruned)
        except CorrectorFailure as exc:
            return PushResult(states=states, status="infeasible",
                              message=f"{exc} at t={t_next}")
        res = np.linalg.norm(kkt_residual(prob, st_new), ord=np.inf)
        if res > tol:
            return PushResult(states=states, status="stalled",
                              message=f"KKT residual {res:.2e} at t={t_next}")
        st = st_new
        states.append(st)
    return PushResult(states=states, status="done")
