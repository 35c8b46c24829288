"""Experiment harnesses: sectional-curvature cross-validation and the
local-inversion round-trip benchmark.

These reproduce the published experiment shapes at desk scale: the
curvature protocol projects random sphere points onto the boundary,
integrates a geodesic with its Jacobi field, and compares the intrinsic
(Jacobi) sectional curvature against the extrinsic (Weingarten) one; the
inversion protocol maps seeded voltage-space curves through the power
flow map and inverts them back, comparing endpoint errors across methods
and against a naive Newton continuation.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import continuation as cont
from . import numerics as num
from . import projection as proj
from . import quadmap as qm
from . import surfaces as srf

__all__ = [
    "SectionalReport",
    "sectional_validation",
    "RoundTripReport",
    "boundary_anchor",
    "round_trip_run",
    "naive_newton_run",
    "fold_crossing_runs",
    "inversion_bench",
]


@dataclass
class SectionalReport:
    trials: int
    attempts: int
    max_relative_error: float
    errors: list = field(default_factory=list)

    def summary(self) -> str:
        return (f"{self.trials} trials ({self.attempts} attempts): max relative "
                f"discrepancy {self.max_relative_error:.3e}")


def sectional_validation(m: qm.QuadraticMap, trials: int = 100, seed: int = 0,
                         lengths=(0.1, 1.1), rtol: float = 1e-11,
                         max_attempts: int | None = None) -> SectionalReport:
    """Cross-validate the two sectional-curvature routes on the boundary.

    Each trial: a random point on the unit sphere is orthogonally
    projected onto the boundary, an orthonormal tangent pair is drawn,
    the geodesic+Jacobi system is integrated for a random length, and the
    intrinsic and extrinsic sectional curvatures at the endpoint are
    compared (relative to their average, as the published experiment
    measures). Queries whose projection runs into a degenerate spot
    (vanishing gradient, complex eigenvalue pair) are resampled
    deterministically.
    """
    surface = srf.SsbSurface(m)
    rng = np.random.default_rng(seed)
    if max_attempts is None:
        max_attempts = 60 * trials
    errors = []
    attempts = 0
    while len(errors) < trials and attempts < max_attempts:
        attempts += 1
        x = rng.standard_normal(m.n)
        x /= np.linalg.norm(x)
        length = rng.uniform(*lengths)
        try:
            rep = proj.project_point(surface, x)
            p = rep.q
            if np.linalg.norm(p) < 1e-3:
                continue
            basis = surface.tangent_basis(p)
            coeff = rng.standard_normal((basis.shape[1], 2))
            q_mat, _ = np.linalg.qr(coeff)
            v_dir = basis @ q_mat[:, 0]
            w_dir = basis @ q_mat[:, 1]
            traj = srf.jacobi_trace(surface, p, v_dir, w_dir, length,
                                    rtol=rtol)
            st = traj[-1]
            j_vec = st.gamma_prime
            if np.linalg.norm(j_vec) < 1e-6:
                continue
            jdd = srf.jacobi_second_derivative(surface, st)
            kappa_j = srf.sectional_curvature_jacobi(
                j_vec, jdd, st.alpha, surface.unit_normal(st.gamma),
                surface.dnormal(st.gamma, st.alpha))
            e1 = st.alpha / np.linalg.norm(st.alpha)
            e2 = j_vec - (j_vec @ e1) * e1
            e2 /= np.linalg.norm(e2)
            kappa_e = srf.sectional_curvature_extrinsic(surface, st.gamma,
                                                        e1, e2)
        except (num.IntegrationError, num.SingularMatrixError, ValueError,
                RuntimeError):
            continue
        avg = 0.5 * abs(kappa_j + kappa_e)
        if avg < 1e-12:
            continue
        errors.append(abs(kappa_j - kappa_e) / avg)
    if len(errors) < trials:
        raise RuntimeError(
            f"only {len(errors)} of {trials} trials completed in "
            f"{max_attempts} attempts")
    return SectionalReport(trials=trials, attempts=attempts,
                           max_relative_error=float(np.max(errors)),
                           errors=errors)


# ---------------------------------------------------------------------------
# inversion round trip
# ---------------------------------------------------------------------------


@dataclass
class RoundTripReport:
    method: str
    h: float
    n_steps: int
    endpoint_error: float
    mean_error: float
    mean_step_seconds: float
    diverged: bool = False


def boundary_anchor(m: qm.QuadraticMap, seed: int = 0, max_tries: int = 40):
    """A boundary point with its kernel, found by line search from a flat
    voltage profile."""
    rng = np.random.default_rng(seed)
    method = "pencil" if m.n > 60 else "poly"
    flat = np.zeros(m.n)
    flat[:] = 0.1
    flat[::2] = 1.0  # real parts near nominal, imaginary small
    for _ in range(max_tries):
        u = rng.standard_normal(m.n)
        u /= np.linalg.norm(u)
        try:
            roots = qm.locate_ssb_on_line(m, flat, u, bracket=(-4.0, 4.0),
                                          method=method)
        except FloatingPointError:
            continue
        if roots.identically_zero or not roots.roots:
            continue
        t_star = min(roots.roots, key=abs)
        q = flat + t_star * u
        ev = qm.eigen_data(m, q)
        if ev.complex_pair:
            continue
        scale = np.linalg.norm(ev.J, 2)
        if np.linalg.norm(ev.J @ ev.k) > 1e-8 * max(scale, 1e-12):
            continue
        if abs(ev.k @ ev.ktilde) < 1e-4:
            continue
        return q, ev.k
    raise RuntimeError("no usable boundary anchor found")


def _seeded_curve(m, seed, d0):
    q, k = boundary_anchor(m, seed)
    rng = np.random.default_rng(seed + 10_000)
    v_base = q + d0 * k
    u = rng.standard_normal(m.n)
    u /= np.linalg.norm(u)

    def v_true(t):
        return v_base + t * u

    def p_curve(t):
        v = v_true(t)
        return qm.evaluate(m, v), qm.jacobian(m, v) @ u

    return v_base, v_true, p_curve


def round_trip_run(m: qm.QuadraticMap, seed: int, h: float, n_steps: int,
                   method: str, d0: float = 0.05) -> RoundTripReport:
    """Invert the image of a seeded voltage line back and compare."""
    v_base, v_true, p_curve = _seeded_curve(m, seed, d0)
    st0 = cont.split_init(m, v_base)
    tic = time.perf_counter()
    run = cont.continue_curve(m, p_curve, st0, (0.0, n_steps * h),
                              method=method, n_steps=n_steps, stepper="euler")
    elapsed = time.perf_counter() - tic
    errs = [np.linalg.norm(s.v - v_true(t)) for t, s in zip(run.ts, run.states)]
    return RoundTripReport(method=method, h=h, n_steps=n_steps,
                           endpoint_error=float(errs[-1]),
                           mean_error=float(np.mean(errs)),
                           mean_step_seconds=elapsed / n_steps)


def naive_newton_run(m: qm.QuadraticMap, seed: int, h: float, n_steps: int,
                     d0: float = 0.05, curve=None) -> RoundTripReport:
    """Euler/Newton continuation directly on F(v) = p(t): the baseline
    that fails near the boundary."""
    if curve is None:
        v_base, v_true, p_curve = _seeded_curve(m, seed, d0)
    else:
        v_base, v_true, p_curve = curve
    v = v_base.copy()
    errs = []
    tic = time.perf_counter()
    diverged = False
    scale0 = np.linalg.norm(v_base)
    for i in range(1, n_steps + 1):
        t = i * h
        p_target, p_dot = p_curve(t)
        try:
            j = qm.jacobian(m, v)
            v = v + h * np.linalg.solve(j, p_dot)
            for _ in range(12):
                r = qm.evaluate(m, v) - p_target
                if np.linalg.norm(r) <= 1e-12 * (1 + np.linalg.norm(p_target)):
                    break
                v = v - np.linalg.solve(qm.jacobian(m, v), r)
        except np.linalg.LinAlgError:
            diverged = True
            break
        if not np.all(np.isfinite(v)) or np.linalg.norm(v) > 1e3 * max(scale0, 1.0):
            diverged = True
            break
        res = np.linalg.norm(qm.evaluate(m, v) - p_target)
        if res > 1e-3 * (1 + np.linalg.norm(p_target)):
            diverged = True
            break
        errs.append(np.linalg.norm(v - v_true(t)))
    elapsed = time.perf_counter() - tic
    endpoint = errs[-1] if errs and not diverged else np.inf
    return RoundTripReport(method="naive_newton", h=h, n_steps=n_steps,
                           endpoint_error=float(endpoint),
                           mean_error=float(np.mean(errs)) if errs else np.inf,
                           mean_step_seconds=elapsed / max(len(errs), 1),
                           diverged=diverged)


def fold_crossing_runs(m: qm.QuadraticMap, seed: int = 0, d0: float = 1e-4,
                       n_steps: int = 100):
    """Stress pair: a curve that dives through the fold.

    The preimage slides along the kernel line from distance d0 to -d0,
    crossing the boundary; in power space the curve descends to the fold
    image and returns. The split representation carries d through zero;
    the naive continuation must fail near the fold.
    """
    q, k = boundary_anchor(m, seed)
    h = 2.0 * d0 / n_steps

    def v_true(t):
        return q + (d0 - t) * k

    def p_curve(t):
        v = v_true(t)
        return qm.evaluate(m, v), qm.jacobian(m, v) @ (-k)

    v_base = v_true(0.0)
    st0 = cont.split_init(m, v_base)
    run = cont.continue_curve(m, p_curve, st0, (0.0, n_steps * h),
                              method="kernel_with_linear", n_steps=n_steps,
                              stepper="euler")
    split_err = float(np.linalg.norm(run.end.v - v_true(run.ts[-1])))
    naive = naive_newton_run(m, seed, h, n_steps,
                             curve=(v_base, v_true, p_curve))
    return split_err, naive


def inversion_bench(named_maps, step_sizes=(1e-7, 1e-9), n_steps: int = 100,
                    methods=("kernel_no_linear", "kernel_with_linear"),
                    seeds=(0, 1, 2), d0: float = 0.05):
    """Round-trip error table across networks, step sizes, and methods."""
    rows = []
    for name, m in named_maps:
        for h in step_sizes:
            for method in methods:
                errs = []
                secs = []
                for seed in seeds:
                    rep = round_trip_run(m, seed, h, n_steps, method, d0=d0)
                    errs.append(rep.endpoint_error)
                    secs.append(rep.mean_step_seconds)
                rows.append({
                    "network": name,
                    "n": m.n,
                    "step_size": h,
                    "method": method,
                    "median_endpoint_error": float(np.median(errs)),
                    "max_endpoint_error": float(np.max(errs)),
                    "mean_step_seconds": float(np.mean(secs)),
                })
    return rows
