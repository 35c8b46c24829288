"""Implicit surfaces with geodesics, Jacobi fields, and sectional curvature.

A surface is the zero set of a smooth level function; everything the
tracers need is the gradient, the unit normal N, the action (DN)u of the
normal's Jacobian, and (for the second-derivative Jacobi variant) the
second directional action ((DDN)u)u. Analytic quadrics provide these in
closed form; the power-flow boundary adapter obtains them from the
bordered eigen-derivative systems (or, for maps whose zero eigenvalue is
defective, from exact polynomial differentiation of det DF along lines).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as num
from . import quadmap as qm
from . import ssb as ssbmod

__all__ = [
    "ImplicitSurface",
    "Sphere",
    "Ellipsoid",
    "SsbSurface",
    "GeodesicState",
    "ConstraintSet",
    "ScalarConstraint",
    "surface_constraint",
    "sphere_constraint",
    "coordinate_plane_constraint",
    "geodesic_trace",
    "jacobi_trace",
    "sectional_curvature_extrinsic",
    "sectional_curvature_jacobi",
    "geodesic_codim_m",
    "geodesic_fan",
    "fan_directions",
    "stereographic_project",
    "stereographic_inverse",
    "surface_forms",
    "weingarten_eigenvalues",
]

ON_SURFACE_TOL = 1e-9


def _unit_field_derivatives(g, gp, gpp=None):
    """(N, N', N'') of the normalized field t -> g(t)/|g(t)| at t=0."""
    g = np.asarray(g, dtype=float)
    gp = np.asarray(gp, dtype=float)
    r = np.linalg.norm(g)
    n_vec = g / r
    n_p = gp / r - g * (g @ gp) / r**3
    if gpp is None:
        return n_vec, n_p, None
    gpp = np.asarray(gpp, dtype=float)
    n_pp = (gpp / r
            - (2.0 * gp * (g @ gp) + g * (gp @ gp + g @ gpp)) / r**3
            + 3.0 * g * (g @ gp) ** 2 / r**5)
    return n_vec, n_p, n_pp


class ImplicitSurface:
    """Zero level set of a scalar function with derivative actions."""

    tag = "custom"
    is_cone = False

    def level(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        """Hessian of the level function (dense)."""
        raise NotImplementedError

    def grad_dir(self, x, u) -> np.ndarray:
        """Directional derivative of the gradient along u."""
        return self.hess(x) @ np.asarray(u, dtype=float)

    def grad_dir2(self, x, u) -> np.ndarray:
        """Second directional derivative of the gradient along u."""
        raise NotImplementedError

    def unit_normal(self, x) -> np.ndarray:
        g = self.grad(x)
        r = np.linalg.norm(g)
        if r == 0.0:
            raise num.SingularMatrixError("level gradient vanishes")
        return g / r

    def dnormal(self, x, u) -> np.ndarray:
        """(DN)u for the unit-normal field (any u, extended-field sense)."""
        _, n_p, _ = _unit_field_derivatives(self.grad(x), self.grad_dir(x, u))
        return n_p

    def ddnormal(self, x, u) -> np.ndarray:
        """((DDN)u)u, the second derivative of N along the straight line."""
        _, _, n_pp = _unit_field_derivatives(
            self.grad(x), self.grad_dir(x, u), self.grad_dir2(x, u))
        return n_pp

    def dnormal_matrix(self, x) -> np.ndarray:
        g = self.grad(x)
        r = np.linalg.norm(g)
        n_vec = g / r
        h = self.hess(x)
        return (np.eye(x.size) - np.outer(n_vec, n_vec)) @ h / r

    def project(self, x, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
        """Newton along the gradient onto the zero level set.

        Converges on the level value or, near steep/ill-conditioned spots
        (coalescing eigenvalues blow up the gradient while the position is
        already pinned to machine precision), on the Newton step length.
        """
        x = np.asarray(x, dtype=float).copy()
        scale = max(1.0, np.linalg.norm(x))
        best = None
        best_lam = np.inf
        for _ in range(max_iter):
            lam = self.level(x)
            if abs(lam) < best_lam:
                best, best_lam = x.copy(), abs(lam)
            if abs(lam) <= tol * scale:
                return x
            g = self.grad(x)
            gg = g @ g
            if gg == 0.0:
                raise num.SingularMatrixError("cannot project: zero gradient")
            step = (lam / gg) * g
            if np.linalg.norm(step) <= 1e-15 * scale:
                return x
            x = x - step
        if best_lam > 100 * tol * scale:
            g = self.grad(best)
            if best_lam / max(np.linalg.norm(g), 1e-300) > 1e-12 * scale:
                raise RuntimeError("surface projection did not converge")
        return best

    def tangent_basis(self, x) -> np.ndarray:
        return ssbmod._householder_complement(self.unit_normal(x))


class Sphere(ImplicitSurface):
    """|x - center|^2 - radius^2 = 0."""

    tag = "sphere"

    def __init__(self, radius: float = 1.0, center=None, dim: int = 3):
        self.radius = float(radius)
        self.center = np.zeros(dim) if center is None else np.asarray(center, float)
        self.dim = self.center.size

    def level(self, x):
        d = np.asarray(x, float) - self.center
        return float(d @ d - self.radius**2)

    def grad(self, x):
        return 2.0 * (np.asarray(x, float) - self.center)

    def hess(self, x):
        return 2.0 * np.eye(self.dim)

    def grad_dir(self, x, u):
        return 2.0 * np.asarray(u, float)

    def grad_dir2(self, x, u):
        return np.zeros(self.dim)

    def project(self, x, tol=1e-12, max_iter=60):
        d = np.asarray(x, float) - self.center
        return self.center + d * (self.radius / np.linalg.norm(d))


class Ellipsoid(ImplicitSurface):
    """sum (x_i / a_i)^2 - 1 = 0."""

    tag = "ellipsoid"

    def __init__(self, axes):
        self.axes = np.asarray(axes, dtype=float)
        self._d = 1.0 / self.axes**2
        self.dim = self.axes.size

    def level(self, x):
        x = np.asarray(x, float)
        return float(x @ (self._d * x) - 1.0)

    def grad(self, x):
        return 2.0 * self._d * np.asarray(x, float)

    def hess(self, x):
        return 2.0 * np.diag(self._d)

    def grad_dir(self, x, u):
        return 2.0 * self._d * np.asarray(u, float)

    def grad_dir2(self, x, u):
        return np.zeros(self.dim)


class _SsbPointData:
    """Per-point bundle for the boundary adapter (eig level mode)."""

    def __init__(self, m, x):
        self.eigen = qm.eigen_data(m, x)
        self.engine = ssbmod.EigenDerivativeEngine(m, x, self.eigen)


class SsbSurface(ImplicitSurface):
    """The solution space boundary of a quadratic map as a level set.

    ``level_mode="eig"`` (generic maps) uses the smallest eigenvalue of DF
    with derivatives from the bordered systems. ``"det"`` uses det DF with
    exact polynomial differentiation along lines; required for maps with a
    defective zero eigenvalue (e.g. the exact three-plane fixture), where
    the eigenvalue is not differentiable across the boundary.
    """

    tag = "ssb"
    is_cone = True

    def __init__(self, m: qm.QuadraticMap, level_mode: str = "eig",
                 cache_size: int = 32):
        if level_mode not in ("eig", "det"):
            raise ValueError("level_mode must be 'eig' or 'det'")
        self.map = m
        self.level_mode = level_mode
        self.dim = m.n
        self._cache = {}
        self._cache_size = cache_size

    # -- eig mode helpers ------------------------------------------------

    def _point(self, x) -> _SsbPointData:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        data = self._cache.get(key)
        if data is None:
            try:
                data = _SsbPointData(self.map, x)
            except ssbmod.DegeneratePointError as exc:
                raise ssbmod.DegeneratePointError(
                    f"{exc}; for defective maps construct the surface with "
                    f"level_mode='det'") from exc
            if len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = data
        return data

    # -- det mode helpers: exact polynomial differentiation ---------------

    def _grad_line_fit(self, x, u):
        """Chebyshev fits of grad-det components along x + s u.

        Each component is a polynomial of degree n-1 in s, so the fit
        through n Chebyshev nodes is exact up to conditioning.
        """
        n = self.map.n
        nodes = np.cos(np.pi * (np.arange(n) + 0.5) / n)
        samples = np.array([qm.grad_det_jacobian(self.map, x + s * u)
                            for s in nodes])
        return [np.polynomial.chebyshev.Chebyshev.fit(nodes, samples[:, i],
                                                      deg=n - 1)
                for i in range(n)]

    # -- interface --------------------------------------------------------

    def level(self, x):
        if self.level_mode == "det":
            return qm.det_jacobian(self.map, x)
        return float(self._point(x).eigen.lam0)

    def grad(self, x):
        if self.level_mode == "det":
            return qm.grad_det_jacobian(self.map, x)
        return self._point(x).engine.lam_grad

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        if self.level_mode == "det":
            n = self.map.n
            eye = np.eye(n)
            cols = [np.array([f.deriv()(0.0) for f in self._grad_line_fit(x, eye[i])])
                    for i in range(n)]
            h = np.column_stack(cols)
            return 0.5 * (h + h.T)
        return self._point(x).engine.lam_hessian()

    def grad_dir(self, x, u):
        if self.level_mode == "det":
            fits = self._grad_line_fit(np.asarray(x, float), np.asarray(u, float))
            return np.array([f.deriv()(0.0) for f in fits])
        return self._point(x).engine.lam_hessian() @ np.asarray(u, float)

    def grad_dir2(self, x, u):
        if self.level_mode == "det":
            fits = self._grad_line_fit(np.asarray(x, float), np.asarray(u, float))
            return np.array([f.deriv(2)(0.0) for f in fits])
        return self._point(x).engine.lam_third_basis_dir(np.asarray(u, float))


# ---------------------------------------------------------------------------
# geodesics and Jacobi fields
# ---------------------------------------------------------------------------


@dataclass
class GeodesicState:
    """Position/velocity (and optional variation pair) at parameter t."""

    t: float
    gamma: np.ndarray
    alpha: np.ndarray
    gamma_prime: np.ndarray | None = None
    alpha_prime: np.ndarray | None = None


def _prepare_start(s: ImplicitSurface, x0, direction):
    x0 = s.project(np.asarray(x0, dtype=float))
    d = np.asarray(direction, dtype=float).copy()
    n_vec = s.unit_normal(x0)
    d -= n_vec * (n_vec @ d)
    nrm = np.linalg.norm(d)
    if nrm == 0.0:
        raise ValueError("start direction has no tangential component")
    return x0, d / nrm


def geodesic_trace(s: ImplicitSurface, x0, direction, length: float,
                   rtol: float = 1e-10, atol: float = 1e-12,
                   max_step: float | None = None):
    """Integrate gamma_dot = alpha, alpha_dot = kappa_N(alpha) N.

    The per-step corrector projects back to the level set and
    retangentializes/renormalizes the velocity; the endpoint is the value
    of the exponential map at length * direction.
    """
    x0, d0 = _prepare_start(s, x0, direction)
    n = x0.size

    def rhs(t, y):
        gamma, alpha = y[:n], y[n:]
        n_vec = s.unit_normal(gamma)
        kappa = -(alpha @ s.dnormal(gamma, alpha))
        return np.concatenate([alpha, kappa * n_vec])

    def corrector(t, y):
        gamma = s.project(y[:n])
        alpha = y[n:].copy()
        n_vec = s.unit_normal(gamma)
        alpha -= n_vec * (n_vec @ alpha)
        alpha /= np.linalg.norm(alpha)
        return np.concatenate([gamma, alpha])

    prob = num.OdeProblem(rhs=rhs, t_span=(0.0, float(length)),
                          corrector=corrector, rtol=rtol, atol=atol,
                          max_step=max_step)
    traj = num.integrate(prob, np.concatenate([x0, d0]))
    return [GeodesicState(t=t, gamma=y[:n], alpha=y[n:]) for t, y in traj]


def jacobi_trace(s: ImplicitSurface, x0, direction, dir_prime, length: float,
                 mode: str = "corrector", rtol: float = 1e-10,
                 atol: float = 1e-12):
    """Geodesic plus Jacobi pair (gamma', alpha').

    ``second_derivative`` mode integrates the raw variation equations,
    evaluating the normal component of alpha'-dot from the second normal
    derivative ((DDN)alpha)alpha. ``corrector`` mode instead keeps the
    tangency identities gamma'.N = 0 and alpha'.N = -gamma'.(DN)alpha
    pinned: with b the tangential part of alpha', the pair (gamma', b)
    evolves by first normal derivatives alone, so no second derivatives
    of the level function are ever needed; this also tolerates surfaces
    with sharp bends.
    """
    if mode not in ("corrector", "second_derivative"):
        raise ValueError("mode must be 'corrector' or 'second_derivative'")
    x0, d0 = _prepare_start(s, x0, direction)
    n = x0.size
    dp = np.asarray(dir_prime, dtype=float).copy()
    n_vec0 = s.unit_normal(x0)
    dp -= n_vec0 * (n_vec0 @ dp)

    if mode == "second_derivative":
        def rhs(t, y):
            gamma, alpha, gp, ap = y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:]
            n_vec = s.unit_normal(gamma)
            dn_alpha = s.dnormal(gamma, alpha)
            kappa = -(alpha @ dn_alpha)
            alpha_dot = kappa * n_vec
            # tangential part of alpha'-dot is (alpha_dot . N)(DN)gamma'
            tang = kappa * s.dnormal(gamma, gp)
            inner = s.dnormal(gamma, alpha_dot) + s.ddnormal(gamma, alpha)
            normal_comp = -2.0 * (ap @ dn_alpha) - gp @ inner
            return np.concatenate([alpha, alpha_dot, ap, tang + normal_comp * n_vec])

        def corrector(t, y):
            gamma = s.project(y[:n])
            alpha = y[n:2 * n].copy()
            n_vec = s.unit_normal(gamma)
            alpha -= n_vec * (n_vec @ alpha)
            alpha /= np.linalg.norm(alpha)
            return np.concatenate([gamma, alpha, y[2 * n:3 * n], y[3 * n:]])

        y0 = np.concatenate([x0, d0, np.zeros(n), dp])
        traj = num.integrate(num.OdeProblem(rhs=rhs, t_span=(0.0, float(length)),
                                            corrector=corrector, rtol=rtol,
                                            atol=atol), y0)
        return [GeodesicState(t=t, gamma=y[:n], alpha=y[n:2 * n],
                              gamma_prime=y[2 * n:3 * n], alpha_prime=y[3 * n:])
                for t, y in traj]

    # corrector mode: state block 4 holds b = tangential part of alpha'
    def rhs(t, y):
        gamma, alpha, gp, b = y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:]
        n_vec = s.unit_normal(gamma)
        dn_alpha = s.dnormal(gamma, alpha)
        kappa = -(alpha @ dn_alpha)
        alpha_dot = kappa * n_vec
        phi = -(gp @ dn_alpha)  # alpha'.N pinned by the tangency identity
        gp_dot = b + phi * n_vec
        b_dot = kappa * s.dnormal(gamma, gp) - phi * dn_alpha \
            - (dn_alpha @ b) * n_vec
        return np.concatenate([alpha, alpha_dot, gp_dot, b_dot])

    def corrector(t, y):
        gamma = s.project(y[:n])
        alpha = y[n:2 * n].copy()
        n_vec = s.unit_normal(gamma)
        alpha -= n_vec * (n_vec @ alpha)
        alpha /= np.linalg.norm(alpha)
        gp = y[2 * n:3 * n].copy()
        b = y[3 * n:].copy()
        gp -= n_vec * (n_vec @ gp)
        b -= n_vec * (n_vec @ b)
        return np.concatenate([gamma, alpha, gp, b])

    y0 = np.concatenate([x0, d0, np.zeros(n), dp])
    traj = num.integrate(num.OdeProblem(rhs=rhs, t_span=(0.0, float(length)),
                                        corrector=corrector, rtol=rtol,
                                        atol=atol), y0)
    out = []
    for t, y in traj:
        gamma, alpha = y[:n], y[n:2 * n]
        gp, b = y[2 * n:3 * n], y[3 * n:]
        n_vec = s.unit_normal(gamma)
        phi = -(gp @ s.dnormal(gamma, alpha))
        out.append(GeodesicState(t=t, gamma=gamma, alpha=alpha,
                                 gamma_prime=gp, alpha_prime=b + phi * n_vec))
    return out


def jacobi_second_derivative(s: ImplicitSurface, state: GeodesicState):
    """alpha'-dot at a state (the Jacobi field's second derivative).

    Only the tangential part is meaningful to sectional curvature; the
    normal component from the corrector-mode right-hand side is returned
    as is.
    """
    gamma, alpha = state.gamma, state.alpha
    gp, ap = state.gamma_prime, state.alpha_prime
    n_vec = s.unit_normal(gamma)
    dn_alpha = s.dnormal(gamma, alpha)
    kappa = -(alpha @ dn_alpha)
    tang = kappa * s.dnormal(gamma, gp)
    normal_comp = -2.0 * (ap @ dn_alpha) - gp @ s.dnormal(gamma, kappa * n_vec)
    return tang + normal_comp * n_vec


def sectional_curvature_extrinsic(s: ImplicitSurface, p, v, w) -> float:
    """det of the normal-derivative form on the plane spanned by (v, w)."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    n_vec = s.unit_normal(p)
    for u in (v, w):
        if abs(u @ n_vec) > 1e-6 * np.linalg.norm(u):
            raise ValueError("sectional directions must be tangential")
    if abs(v @ w) > 1e-6 or abs(np.linalg.norm(v) - 1) > 1e-6 \
            or abs(np.linalg.norm(w) - 1) > 1e-6:
        raise ValueError("sectional directions must be orthonormal")
    dnv = s.dnormal(p, v)
    dnw = s.dnormal(p, w)
    return float((v @ dnv) * (w @ dnw) - (w @ dnv) * (v @ dnw))


def sectional_curvature_jacobi(j_vec, j_ddot, gamma_dot, n_vec, dn_gamma_dot) -> float:
    """Sectional curvature from an integrated Jacobi field.

    Uses the tangency identities maintained by the corrector
    (J.N = 0 and J'.N = -J.(DN)gamma_dot), so only the Jacobi value, its
    second derivative (normal part irrelevant), the geodesic tangent and
    (DN)gamma_dot are needed.
    """
    j_vec = np.asarray(j_vec, dtype=float)
    gamma_dot = np.asarray(gamma_dot, dtype=float)
    denom = (j_vec @ j_vec) * (gamma_dot @ gamma_dot) - (j_vec @ gamma_dot) ** 2
    if abs(denom) < 1e-12:
        raise ValueError("Jacobi field and tangent nearly parallel")
    jp_n = -(j_vec @ np.asarray(dn_gamma_dot, dtype=float))
    return float((jp_n * (j_vec @ dn_gamma_dot) - j_vec @ np.asarray(j_ddot, float))
                 / denom)


# ---------------------------------------------------------------------------
# higher codimension
# ---------------------------------------------------------------------------


@dataclass
class ScalarConstraint:
    fun: object
    grad: object
    hess_quad: object  # (x, u) -> u^T (HC) u


class ConstraintSet:
    """C: R^n -> R^m with Jacobian and Hessian contraction."""

    def __init__(self, constraints):
        self.constraints = list(constraints)
        self.m = len(self.constraints)

    def value(self, x):
        return np.array([c.fun(x) for c in self.constraints], dtype=float)

    def jac(self, x):
        return np.array([c.grad(x) for c in self.constraints], dtype=float)

    def hess_quad(self, x, u):
        return np.array([c.hess_quad(x, u) for c in self.constraints], dtype=float)


def surface_constraint(s: ImplicitSurface) -> ScalarConstraint:
    return ScalarConstraint(
        fun=lambda x: s.level(x),
        grad=lambda x: s.grad(x),
        hess_quad=lambda x, u: float(np.asarray(u) @ s.grad_dir(x, u)),
    )


def sphere_constraint(radius: float = 1.0) -> ScalarConstraint:
    return ScalarConstraint(
        fun=lambda x: float(x @ x - radius**2),
        grad=lambda x: 2.0 * np.asarray(x, dtype=float),
        hess_quad=lambda x, u: float(2.0 * np.asarray(u) @ np.asarray(u)),
    )


def coordinate_plane_constraint(index: int) -> ScalarConstraint:
    def grad(x):
        g = np.zeros(len(x))
        g[index] = 1.0
        return g
    return ScalarConstraint(fun=lambda x: float(x[index]), grad=grad,
                            hess_quad=lambda x, u: 0.0)


def _constraint_project(c: ConstraintSet, x, tol=1e-12, max_iter=50):
    x = np.asarray(x, dtype=float).copy()
    for _ in range(max_iter):
        vals = c.value(x)
        if np.max(np.abs(vals)) <= tol:
            return x
        jac = c.jac(x)
        x = x - num.least_norm_solve(jac, vals)
    return x


def geodesic_codim_m(c: ConstraintSet, x0, direction, length: float,
                     rtol: float = 1e-10, atol: float = 1e-12):
    """Geodesics on the joint zero set of m constraints.

    The acceleration is the least-norm solution of
    DC gamma_ddot = -gamma_dot^T (HC) gamma_dot; after each step the
    position is pulled back onto C = 0 and the velocity is orthogonalized
    against all constraint gradients and renormalized.
    """
    x0 = _constraint_project(c, x0)
    d0 = np.asarray(direction, dtype=float).copy()
    jac0 = c.jac(x0)
    d0 -= num.least_norm_solve(jac0, jac0 @ d0)
    nrm = np.linalg.norm(d0)
    if nrm == 0.0:
        raise ValueError("direction has no component tangent to the set")
    d0 /= nrm
    n = x0.size

    def rhs(t, y):
        gamma, alpha = y[:n], y[n:]
        jac = c.jac(gamma)
        if np.linalg.matrix_rank(jac) < c.m:
            raise num.SingularMatrixError("constraint Jacobian lost rank")
        acc = num.least_norm_solve(jac, -c.hess_quad(gamma, alpha))
        return np.concatenate([alpha, acc])

    def corrector(t, y):
        gamma = _constraint_project(c, y[:n])
        alpha = y[n:].copy()
        jac = c.jac(gamma)
        alpha -= num.least_norm_solve(jac, jac @ alpha)
        alpha /= np.linalg.norm(alpha)
        return np.concatenate([gamma, alpha])

    prob = num.OdeProblem(rhs=rhs, t_span=(0.0, float(length)),
                          corrector=corrector, rtol=rtol, atol=atol)
    traj = num.integrate(prob, np.concatenate([x0, d0]))
    return [GeodesicState(t=t, gamma=y[:n], alpha=y[n:]) for t, y in traj]


# ---------------------------------------------------------------------------
# fans and projections
# ---------------------------------------------------------------------------


def _fibonacci_sphere(count: int) -> np.ndarray:
    """Deterministic low-discrepancy directions on S^2."""
    i = np.arange(count, dtype=float) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / count)
    golden = np.pi * (1.0 + np.sqrt(5.0))
    theta = golden * i
    return np.column_stack([np.cos(theta) * np.sin(phi),
                            np.sin(theta) * np.sin(phi),
                            np.cos(phi)])


def fan_directions(basis: np.ndarray, count: int, seed: int = 0) -> list:
    """``count`` unit directions spread over span(basis).

    dim 1: alternating signs; dim 2: uniform rotation angles; dim 3: a
    spherical Fibonacci set; higher: seeded Halton points mapped through
    the normal quantile and normalized.
    """
    dim = basis.shape[1]
    if dim < 1:
        raise ValueError("empty tangent basis")
    if dim == 1:
        coeffs = np.array([[1.0 if i % 2 == 0 else -1.0] for i in range(count)])
    elif dim == 2:
        ang = 2.0 * np.pi * np.arange(count) / count
        coeffs = np.column_stack([np.cos(ang), np.sin(ang)])
    elif dim == 3:
        coeffs = _fibonacci_sphere(count)
    else:
        from scipy.stats import norm, qmc
        sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
        raw = sampler.random(count)
        coeffs = norm.ppf(np.clip(raw, 1e-12, 1 - 1e-12))
        coeffs /= np.linalg.norm(coeffs, axis=1, keepdims=True)
    return [basis @ c for c in coeffs]


def geodesic_fan(target, x0, count: int, length: float, seed: int = 0,
                 rtol: float = 1e-9, atol: float = 1e-12):
    """A family of geodesics from one point, directions spread uniformly.

    For cone-structured boundaries the start directions are restricted to
    the orthogonal complement of the radial direction inside the tangent
    space (the radial rulings are trivial geodesics).
    """
    x0 = np.asarray(x0, dtype=float)
    if isinstance(target, ConstraintSet):
        x0 = _constraint_project(target, x0)
        jac = target.jac(x0)
        import scipy.linalg
        basis = scipy.linalg.null_space(jac)
        dirs = fan_directions(basis, count, seed)
        return [geodesic_codim_m(target, x0, d, length, rtol=rtol, atol=atol)
                for d in dirs]
    s = target
    x0 = s.project(x0)
    basis = s.tangent_basis(x0)
    if s.is_cone:
        # remove the radial ruling direction from the span
        radial = basis.T @ x0
        nrm = np.linalg.norm(radial)
        if nrm > 1e-12 * np.linalg.norm(x0):
            radial = radial / nrm
            comp = ssbmod._householder_complement(radial)
            basis = basis @ comp
    dirs = fan_directions(basis, count, seed)
    return [geodesic_trace(s, x0, d, length, rtol=rtol, atol=atol)
            for d in dirs]


def stereographic_project(points, pole_tol: float = 1e-9):
    """Stereographic map of unit-sphere points from the pole (0,..,0,1).

    Points are first normalized onto the sphere; the returned mask flags
    pole-proximal points whose image is effectively at infinity.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot radially project the origin")
    pts = pts / norms
    denom = 1.0 - pts[:, -1]
    at_pole = denom < pole_tol
    out = np.full((pts.shape[0], pts.shape[1] - 1), np.inf)
    ok = ~at_pole
    out[ok] = pts[ok, :-1] / denom[ok, None]
    return out, at_pole


def stereographic_inverse(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r2 = np.sum(pts**2, axis=1)
    out = np.empty((pts.shape[0], pts.shape[1] + 1))
    out[:, :-1] = 2.0 * pts / (1.0 + r2)[:, None]
    out[:, -1] = (r2 - 1.0) / (r2 + 1.0)
    return out


# ---------------------------------------------------------------------------
# curvature forms of generic implicit surfaces
# ---------------------------------------------------------------------------


def surface_forms(s: ImplicitSurface, x) -> ssbmod.FundamentalForms:
    """Fundamental forms on an orthonormal tangent basis (W = -DN)."""
    x = np.asarray(x, dtype=float)
    basis = s.tangent_basis(x)
    dim = basis.shape[1]
    l_mat = np.empty((dim, dim))
    for i in range(dim):
        dn_i = s.dnormal(x, basis[:, i])
        for j in range(dim):
            l_mat[i, j] = -(basis[:, j] @ dn_i)
    l_mat = 0.5 * (l_mat + l_mat.T)
    return ssbmod.FundamentalForms(g=np.eye(dim), l=l_mat, basis=basis,
                                   space="ambient")


def weingarten_eigenvalues(s: ImplicitSurface, x):
    forms = surface_forms(s, x)
    return [k for k, _ in ssbmod.principal_curvatures(forms)]
