"""High-precision local inversion of the power-flow map near the boundary.

The preimage point is carried as v = q + d*w(q) with q on the boundary and
w either the kernel of DF(q) or the level-set gradient (the normal). The
quadratic map makes the Taylor expansion of F around q exact at second
order, so differentiating it gives well-conditioned linear systems for
(q_dot, k_dot, d_dot) even where DF(v) is nearly singular. The kernel
variant with the kernel derivative as an explicit unknown avoids
differentiating the kernel field altogether.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import numerics as num
from . import quadmap as qm
from .surfaces import SsbSurface

__all__ = [
    "SplitState",
    "InversionRun",
    "ContinuationError",
    "TangencyError",
    "split_init",
    "invert_step_kernel",
    "invert_step_normal",
    "invert_step_second_order",
    "continue_curve",
    "continue_on_ssb",
    "on_ssb_second_step",
]

KERNEL = "kernel"
NORMAL = "normal"

SWITCH_TO_NORMAL_DEG = 80.0
SWITCH_TO_KERNEL_DEG = 60.0


class ContinuationError(RuntimeError):
    def __init__(self, message, state=None, t=None):
        super().__init__(message)
        self.state = state
        self.t = t


class TangencyError(ContinuationError):
    """The kernel is (nearly) tangential: the split is unreliable."""


@dataclass
class SplitState:
    """v = q + d * w(q) with q on the boundary.

    For the kernel representation w = k (unit); for the normal
    representation w is the unnormalized level-set gradient at q.
    """

    map: qm.QuadraticMap
    q: np.ndarray
    d: float
    k: np.ndarray
    w_kind: str = KERNEL
    surface: SsbSurface | None = field(default=None, repr=False)

    def w(self) -> np.ndarray:
        if self.w_kind == KERNEL:
            return self.k
        return self.surface.grad(self.q)

    @property
    def v(self) -> np.ndarray:
        return self.q + self.d * self.w()

    def reconstruct_power(self) -> np.ndarray:
        return qm.evaluate(self.map, self.v)

    def taylor_power(self) -> np.ndarray:
        """F(q) + d (DF(q)) w + d^2/2 w^T (HF) w — exact for quadratics."""
        w = self.w()
        j = qm.jacobian(self.map, self.q)
        jw = qm.jacobian(self.map, w)
        return (qm.evaluate(self.map, self.q) + self.d * (j @ w)
                + 0.5 * self.d**2 * (jw @ w))


@dataclass
class InversionRun:
    method: str
    ts: list
    states: list
    residuals: list
    step_seconds: list
    switches: list = field(default_factory=list)

    @property
    def end(self) -> SplitState:
        return self.states[-1]


def _kernel_at(m, v, align=None):
    ev = qm.eigen_data(m, v, sign_convention=align is None)
    k = ev.k
    if align is not None and k @ align < 0:
        k = -k
    return k, ev


def _surface_for(m, level_mode):
    return SsbSurface(m, level_mode=level_mode)


def split_init(m: qm.QuadraticMap, v0, w_kind: str = KERNEL,
               level_mode: str = "eig", max_iter: int = 40,
               line_method: str | None = None) -> SplitState:
    """Find the boundary anchor q and offset d for a solution point v0.

    Kernel variant: alternate a boundary line search along the current
    kernel estimate with kernel re-extraction until v0 - q is collinear
    with k(q). Normal variant: orthogonal projection of v0.
    """
    v0 = np.asarray(v0, dtype=float)
    surface = _surface_for(m, level_mode)
    if line_method is None:
        line_method = "pencil" if m.n > 60 else "poly"
    if w_kind == NORMAL:
        from .projection import project_point
        rep = project_point(surface, v0)
        q = rep.q
        g = surface.grad(q)
        d = float(g @ (v0 - q) / (g @ g))
        k, _ = _kernel_at(m, q)
        st = SplitState(map=m, q=q, d=d, k=k, w_kind=NORMAL, surface=surface)
    else:
        k, ev = _kernel_at(m, v0)
        q = v0.copy()
        for _ in range(max_iter):
            roots = qm.locate_ssb_on_line(m, v0, k, bracket=(-3.0, 3.0),
                                          method=line_method)
            if roots.identically_zero:
                q = v0.copy()
                break
            if not roots.roots:
                raise ContinuationError("no boundary point along the kernel line")
            t_star = min(roots.roots, key=abs)
            q = v0 + t_star * k
            k_new, _ = _kernel_at(m, q, align=k)
            resid = v0 - q
            off = resid - (resid @ k_new) * k_new
            k = k_new
            if np.linalg.norm(off) <= 1e-12 * (1.0 + np.linalg.norm(resid)):
                break
        d = float((v0 - q) @ k)
        st = SplitState(map=m, q=q, d=d, k=k, w_kind=KERNEL, surface=surface)
    # the exact second-order expansion must reproduce F(v0)
    target = qm.evaluate(m, v0)
    err = np.linalg.norm(st.taylor_power() - target)
    if err > 1e-8 * (1.0 + np.linalg.norm(target)):
        raise ContinuationError(
            f"split reconstruction residual {err:.3e}; v0 may be far from "
            f"the boundary or the kernel line search failed", state=st)
    return st


def _kernel_system(m, st, with_linear):
    n = m.n
    j_q = qm.jacobian(m, st.q)
    j_k = qm.jacobian(m, st.k)
    phi = j_k @ st.k  # k^T (HF) k = 2 F(k)
    a = np.zeros((2 * n + 1, 2 * n + 1))
    if with_linear:
        a[:n, :n] = j_q + st.d * j_k
        a[:n, n:2 * n] = st.d * j_q + st.d**2 * j_k
        a[:n, 2 * n] = j_q @ st.k + st.d * phi
    else:
        a[:n, :n] = j_q
        a[:n, n:2 * n] = st.d**2 * j_k
        a[:n, 2 * n] = st.d * phi
    a[n:2 * n, :n] = j_k
    a[n:2 * n, n:2 * n] = j_q
    a[2 * n, n:2 * n] = st.k
    return a, j_q, j_k, phi


def invert_step_kernel(m: qm.QuadraticMap, st: SplitState, p_dot,
                       with_linear: bool = True):
    """(q_dot, k_dot, d_dot) from the kernel-representation system.

    The second block keeps the kernel property along the motion, the last
    row keeps it normalized; k^T (HF) blocks are realized as DF evaluated
    at k. ``with_linear`` differentiates the full exact expansion instead
    of dropping the theoretically-zero linear term, which costs nothing
    and reduces roundoff amplification.
    """
    if st.w_kind != KERNEL:
        raise ValueError("state does not use the kernel representation")
    n = m.n
    a, *_ = _kernel_system(m, st, with_linear)
    rhs = np.concatenate([np.asarray(p_dot, dtype=float), np.zeros(n + 1)])
    try:
        sol = num.solve_square(a, rhs)
    except num.SingularMatrixError as exc:
        raise TangencyError(f"kernel-representation system singular: {exc}",
                            state=st) from exc
    return sol[:n], sol[n:2 * n], float(sol[2 * n])


def invert_step_normal(m: qm.QuadraticMap, st: SplitState, p_dot):
    """(q_dot, d_dot) for the normal representation w = grad(level).

    Uses the full differentiated expansion with Dw the level Hessian and
    closes the system with the tangency row N^T q_dot = 0.
    """
    n = m.n
    surface = st.surface
    w = surface.grad(st.q)
    dw = surface.hess(st.q)
    j_q = qm.jacobian(m, st.q)
    j_w = qm.jacobian(m, w)
    phi = j_w @ w
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = j_q + st.d * j_w + (st.d * j_q + st.d**2 * j_w) @ dw
    a[:n, n] = j_q @ w + st.d * phi
    n_hat = w / np.linalg.norm(w)
    a[n, :n] = n_hat
    rhs = np.concatenate([np.asarray(p_dot, dtype=float), [0.0]])
    try:
        sol = num.solve_square(a, rhs)
    except num.SingularMatrixError as exc:
        raise ContinuationError(f"normal-representation system singular: {exc}",
                                state=st) from exc
    return sol[:n], float(sol[n])


def invert_step_second_order(m: qm.QuadraticMap, st: SplitState, p_dot,
                             p_ddot, first=None, with_linear: bool = True):
    """Second derivatives (q_ddot, k_ddot, d_ddot) | (q_ddot, d_ddot).

    Kernel representation: differentiate the first-order system again;
    it reuses the same matrix, only the right-hand side changes. Normal
    representation: differentiate the expansion with the normal's second
    directional derivative obtained from the third-order eigenvalue
    system, closed by N q_ddot = -((DN) q_dot) . q_dot.
    """
    n = m.n
    p_ddot = np.asarray(p_ddot, dtype=float)
    if st.w_kind == KERNEL:
        if first is None:
            first = invert_step_kernel(m, st, p_dot, with_linear=False)
        q_dot, k_dot, d_dot = first
        a, j_q, j_k, phi = _kernel_system(m, st, with_linear=False)
        j_qd = qm.jacobian(m, q_dot)
        j_kd = qm.jacobian(m, k_dot)
        r1 = (p_ddot - j_qd @ q_dot - 4.0 * st.d * d_dot * (j_k @ k_dot)
              - st.d**2 * (j_kd @ k_dot) - d_dot**2 * phi)
        r2 = -2.0 * (j_kd @ q_dot)
        r3 = -float(k_dot @ k_dot)
        rhs = np.concatenate([r1, r2, [r3]])
        try:
            sol = num.solve_square(a, rhs)
        except num.SingularMatrixError as exc:
            raise TangencyError(f"second-order system singular: {exc}",
                                state=st) from exc
        return sol[:n], sol[n:2 * n], float(sol[2 * n])
    # normal representation
    surface = st.surface
    if first is None:
        first = invert_step_normal(m, st, p_dot)
    q_dot, d_dot = first
    w = surface.grad(st.q)
    dw = surface.hess(st.q)
    w_dot = dw @ q_dot
    hw_qq = surface.grad_dir2(st.q, q_dot)  # (Hw) q_dot q_dot
    j_q = qm.jacobian(m, st.q)
    j_w = qm.jacobian(m, w)
    j_qd = qm.jacobian(m, q_dot)
    j_wd = qm.jacobian(m, w_dot)
    phi = j_w @ w
    d = st.d
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = j_q + d * j_w + (d * j_q + d**2 * j_w) @ dw
    a[:n, n] = j_q @ w + d * phi
    known = (j_qd @ q_dot + 2.0 * d_dot * (j_qd @ w + j_q @ w_dot)
             + 2.0 * d * (j_qd @ w_dot)
             + (d * j_q + d**2 * j_w) @ hw_qq
             + d_dot**2 * phi + 4.0 * d * d_dot * (j_w @ w_dot)
             + d**2 * (j_wd @ w_dot))
    n_hat = w / np.linalg.norm(w)
    dn_qd = surface.dnormal(st.q, q_dot)
    a[n, :n] = n_hat
    rhs = np.concatenate([p_ddot - known, [-float(dn_qd @ q_dot)]])
    try:
        sol = num.solve_square(a, rhs)
    except num.SingularMatrixError as exc:
        raise ContinuationError(f"second-order normal system singular: {exc}",
                                state=st) from exc
    return sol[:n], float(sol[n])


# ---------------------------------------------------------------------------
# curve continuation
# ---------------------------------------------------------------------------


def _project_q_along(st: SplitState, direction, max_iter: int = 5):
    """Newton for level(q + tau * direction) = 0 along a fixed direction."""
    surface = st.surface
    q = st.q
    for _ in range(max_iter):
        lam = surface.level(q)
        scale = max(1.0, np.linalg.norm(q))
        if abs(lam) <= 1e-13 * scale:
            break
        slope = surface.grad(q) @ direction
        if slope == 0.0:
            break
        step = lam / slope
        if abs(step) > 0.5 * scale:
            break
        q = q - step * direction
    return q


def _correct_state(st: SplitState, p_target, refit_iters: int = 3) -> SplitState:
    """Project q back to the boundary along w, refresh k, refit d."""
    w_dir = st.k if st.w_kind == KERNEL else st.surface.unit_normal(st.q)
    q = _project_q_along(st, w_dir)
    k, _ = _kernel_at(st.map, q, align=st.k)
    st = SplitState(map=st.map, q=q, d=st.d, k=k, w_kind=st.w_kind,
                    surface=st.surface)
    w = st.w()
    d = st.d
    for _ in range(refit_iters):
        v = st.q + d * w
        r = qm.evaluate(st.map, v) - p_target
        jd = qm.jacobian(st.map, v) @ w
        denom = jd @ jd
        if denom == 0.0:
            break
        d = d - float(r @ jd) / denom
    st.d = float(d)
    return st


def continue_curve(m: qm.QuadraticMap, p_curve, st0: SplitState, t_span,
                   method: str = "kernel_with_linear", n_steps: int | None = None,
                   rtol: float = 1e-10, residual_cap: float = 1e-4,
                   stepper: str = "rk4") -> InversionRun:
    """Trace the preimage of the power-space curve p_curve(t) -> (p, p_dot).

    With ``n_steps`` set, takes fixed steps of the named explicit stepper
    (euler or rk4) with the corrector after each step; otherwise uses the
    adaptive integrator. ``method`` is one of kernel_no_linear,
    kernel_with_linear, normal, auto; auto switches representation on
    kernel-tangency hysteresis.
    """
    if method not in ("kernel_no_linear", "kernel_with_linear", "normal", "auto"):
        raise ValueError(f"unknown method {method!r}")
    t0, t1 = t_span
    run = InversionRun(method=method, ts=[t0], states=[st0], residuals=[0.0],
                       step_seconds=[])
    st = st0
    mode = NORMAL if method == "normal" else KERNEL
    with_linear = method != "kernel_no_linear"

    def tangency_angle(state):
        n_hat = state.surface.unit_normal(state.q)
        c = abs(float(state.k @ n_hat))
        return np.degrees(np.arccos(min(1.0, c)))

    def derivative(t, state):
        _, p_dot = p_curve(t)
        if state.w_kind == KERNEL:
            return invert_step_kernel(m, state, p_dot, with_linear=with_linear)
        return invert_step_normal(m, state, p_dot)

    def advance(state, t, h):
        if state.w_kind == KERNEL:
            def f(tt, y):
                s2 = SplitState(map=m, q=y[:m.n], d=float(y[2 * m.n]),
                                k=y[m.n:2 * m.n], w_kind=KERNEL,
                                surface=state.surface)
                qd, kd, dd = derivative(tt, s2)
                return np.concatenate([qd, kd, [dd]])
            y = np.concatenate([state.q, state.k, [state.d]])
        else:
            def f(tt, y):
                s2 = SplitState(map=m, q=y[:m.n], d=float(y[m.n]),
                                k=state.k, w_kind=NORMAL, surface=state.surface)
                qd, dd = invert_step_normal(m, s2, p_curve(tt)[1])
                return np.concatenate([qd, [dd]])
            y = np.concatenate([state.q, [state.d]])
        if stepper == "euler":
            y = y + h * f(t, y)
        else:
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if state.w_kind == KERNEL:
            k_new = y[m.n:2 * m.n]
            k_new = k_new / np.linalg.norm(k_new)
            return SplitState(map=m, q=y[:m.n], d=float(y[2 * m.n]), k=k_new,
                              w_kind=KERNEL, surface=state.surface)
        return SplitState(map=m, q=y[:m.n], d=float(y[m.n]), k=state.k,
                          w_kind=NORMAL, surface=state.surface)

    def check_residual(state, t):
        p_target, _ = p_curve(t)
        resid = float(np.linalg.norm(state.reconstruct_power() - p_target))
        if not np.isfinite(resid) or resid > residual_cap * (1.0 + np.linalg.norm(p_target)):
            raise ContinuationError(
                f"reconstruction residual {resid:.3e} at t={t}: the preimage "
                f"may have ceased to exist (fold crossing)", state=state, t=t)
        return resid

    def maybe_switch(state, t):
        if method != "auto":
            return state
        ang = tangency_angle(state)
        if state.w_kind == KERNEL and ang > SWITCH_TO_NORMAL_DEG:
            from .projection import project_point
            rep = project_point(state.surface, state.v)
            g = state.surface.grad(rep.q)
            d = float(g @ (state.v - rep.q) / (g @ g))
            state = SplitState(map=m, q=rep.q, d=d, k=state.k, w_kind=NORMAL,
                               surface=state.surface)
            run.switches.append((t, NORMAL))
        elif state.w_kind == NORMAL and ang < SWITCH_TO_KERNEL_DEG:
            state = split_init(m, state.v, w_kind=KERNEL,
                               level_mode=state.surface.level_mode)
            run.switches.append((t, KERNEL))
        return state

    if n_steps is not None:
        h = (t1 - t0) / n_steps
        t = t0
        for _ in range(n_steps):
            tic = time.perf_counter()
            st = maybe_switch(st, t)
            st = advance(st, t, h)
            t += h
            p_target, _ = p_curve(t)
            st = _correct_state(st, p_target)
            run.step_seconds.append(time.perf_counter() - tic)
            run.ts.append(t)
            run.states.append(st)
            run.residuals.append(check_residual(st, t))
        return run

    # adaptive path: the shared integrator drives the step operation with
    # the state corrector applied after each accepted step
    if st.w_kind != KERNEL:
        raise ValueError("adaptive continuation currently drives the kernel "
                         "representation; pass n_steps for the normal method")
    n = m.n

    def rhs(t, y):
        s2 = SplitState(map=m, q=y[:n], d=float(y[2 * n]), k=y[n:2 * n],
                        w_kind=KERNEL, surface=st0.surface)
        qd, kd, dd = invert_step_kernel(m, s2, p_curve(t)[1],
                                        with_linear=with_linear)
        return np.concatenate([qd, kd, [dd]])

    def corrector(t, y):
        s2 = SplitState(map=m, q=y[:n], d=float(y[2 * n]),
                        k=y[n:2 * n] / np.linalg.norm(y[n:2 * n]),
                        w_kind=KERNEL, surface=st0.surface)
        s2 = _correct_state(s2, p_curve(t)[0])
        run.ts.append(t)
        run.states.append(s2)
        run.residuals.append(check_residual(s2, t))
        return np.concatenate([s2.q, s2.k, [s2.d]])

    prob = num.OdeProblem(rhs=rhs, t_span=t_span, corrector=corrector,
                          rtol=rtol, atol=1e-14)
    num.integrate(prob, np.concatenate([st.q, st.k, [st.d]]))
    return run


def continue_on_ssb(m: qm.QuadraticMap, p_curve, q0, k0, t_span,
                    n_steps: int = 100, level_mode: str = "eig") -> list:
    """Trace a preimage of a curve running inside the boundary image.

    The d = 0 specialization of the kernel system: overdetermined but
    consistent while the curve stays on the image; solved in the
    least-squares sense with the residual monitored.
    """
    n = m.n
    t0, t1 = t_span
    h = (t1 - t0) / n_steps
    q = np.asarray(q0, dtype=float).copy()
    k = np.asarray(k0, dtype=float).copy()
    out = [(t0, q.copy(), k.copy())]
    t = t0
    surface = _surface_for(m, level_mode)

    def f(tt, y):
        qq, kk = y[:n], y[n:]
        a = np.zeros((2 * n + 1, 2 * n))
        a[:n, :n] = qm.jacobian(m, qq)
        a[n:2 * n, :n] = qm.jacobian(m, kk)
        a[n:2 * n, n:] = qm.jacobian(m, qq)
        a[2 * n, n:] = kk
        _, p_dot = p_curve(tt)
        rhs = np.concatenate([p_dot, np.zeros(n + 1)])
        sol, res, *_ = np.linalg.lstsq(a, rhs, rcond=None)
        fit = a @ sol - rhs
        if np.linalg.norm(fit) > 1e-6 * (1.0 + np.linalg.norm(p_dot)):
            raise ContinuationError(
                f"curve leaves the boundary image (residual {np.linalg.norm(fit):.2e})",
                t=tt)
        return sol

    for _ in range(n_steps):
        y = np.concatenate([q, k])
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        q, k = y[:n], y[n:]
        # corrector: back to the boundary along k, renormalize
        st = SplitState(map=m, q=q, d=0.0, k=k / np.linalg.norm(k),
                        w_kind=KERNEL, surface=surface)
        q = _project_q_along(st, st.k)
        k_new, _ = _kernel_at(m, q, align=st.k)
        k = k_new
        t += h
        out.append((t, q.copy(), k.copy()))
    return out


def on_ssb_second_step(m: qm.QuadraticMap, q, k, q_dot, k_dot, p_ddot):
    """(q_ddot, k_ddot) for on-boundary continuation, same matrix."""
    n = m.n
    a = np.zeros((2 * n + 1, 2 * n))
    a[:n, :n] = qm.jacobian(m, q)
    a[n:2 * n, :n] = qm.jacobian(m, k)
    a[n:2 * n, n:] = qm.jacobian(m, q)
    a[2 * n, n:] = k
    r1 = np.asarray(p_ddot, dtype=float) - qm.jacobian(m, q_dot) @ q_dot
    r2 = -2.0 * (qm.jacobian(m, k_dot) @ q_dot)
    r3 = -float(k_dot @ k_dot)
    rhs = np.concatenate([r1, r2, [r3]])
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    return sol[:n], sol[n:]
