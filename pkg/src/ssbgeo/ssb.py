"""Differential geometry of the solution space boundary of a quadratic map.

The boundary is the level set {lambda0 = 0} of the smallest-magnitude
eigenvalue of DF. Its power-space normal is the left kernel vector; the
voltage-space normal is grad lambda0, obtained from a bordered linear
system built from the left eigenpair equations. That one (n+1) x (n+1)
matrix, factorized once per point, yields eigenvalue and eigenvector
derivatives of every order (the right-hand sides change, the matrix does
not, since DF is linear in the voltage and its second derivative vanishes).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as num
from . import quadmap as qm

__all__ = [
    "SsbPoint",
    "FundamentalForms",
    "DegeneratePointError",
    "NotOnSurfaceError",
    "boundary_point",
    "EigenDerivativeEngine",
    "normal_power",
    "normal_voltage",
    "eig_derivatives",
    "dnormal_power_tangential",
    "normal_curvature",
    "normal_curvature_from_accel",
    "geodesic_accel_voltage",
    "tangent_basis",
    "shape_operator_voltage",
    "shape_operator_apply_power",
    "curve_image_accel_power",
    "fundamental_forms",
    "principal_curvatures",
]

TOL_SSB = 1e-9
RANK_TOL = 1e-9


class DegeneratePointError(num.SingularMatrixError):
    """rank DF <= n-2 (or defective eigenstructure): geometry undefined.

    Subclasses the singular-solve error so integrators treat a degenerate
    evaluation point like any other failed inner solve.
    """


class NotOnSurfaceError(ValueError):
    pass


def _householder_complement(n_vec: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of n_vec, deterministic.

    Columns 2..n of the Householder reflection mapping e_1 to the unit
    normal; falls back to identity columns for a zero vector.
    """
    n_vec = np.asarray(n_vec, dtype=float)
    dim = n_vec.size
    norm = np.linalg.norm(n_vec)
    if norm == 0.0:
        return np.eye(dim)[:, 1:]
    u = n_vec / norm
    sign = 1.0 if u[0] >= 0 else -1.0
    w = u + sign * np.eye(dim)[0]
    w = w / np.linalg.norm(w)
    h = np.eye(dim) - 2.0 * np.outer(w, w)
    return h[:, 1:]


class EigenDerivativeEngine:
    """Derivatives of the smallest eigenpair (lambda0, ktilde) of DF(v).

    Valid wherever the eigenvalue is real and simple; works off the
    boundary too (the bordered matrix keeps DF - lambda0*1). All orders
    share one LU factorization; right-hand sides of the same order can be
    solved in one batched call.
    """

    def __init__(self, m: qm.QuadraticMap, v, eigen: qm.JacobianEval | None = None):
        self.map = m
        self.v = np.asarray(v, dtype=float)
        self.eigen = eigen if eigen is not None else qm.eigen_data(m, self.v)
        if self.eigen.complex_pair:
            raise DegeneratePointError(
                "smallest-magnitude eigenvalue is part of a complex pair")
        n = m.n
        J = self.eigen.J
        kt = self.eigen.ktilde
        b = np.zeros((n + 1, n + 1))
        b[:n, :n] = (J - self.eigen.lam0 * np.eye(n)).T
        b[:n, n] = -kt
        b[n, :n] = kt
        try:
            self._lu = num.lu_factorize(b)
        except num.SingularMatrixError as exc:
            raise DegeneratePointError(
                f"bordered eigen-derivative matrix singular: {exc}") from exc
        self._bordered = b
        # S(x) with x=ktilde: column i of the stacked first-order RHS
        self._s_ktilde = qm.hessian_weighted(m, kt)
        self._first_basis = None  # (lam_grad, ktilde_jac)
        self._lam_hess = None

    # -- first order --------------------------------------------------

    def first_basis(self):
        """(grad lambda0, dktilde/dV as columns), batched over the basis."""
        if self._first_basis is None:
            n = self.map.n
            rhs = np.zeros((n + 1, n))
            rhs[:n, :] = -self._s_ktilde
            sol = self._lu.solve(rhs)
            self._first_basis = (sol[n, :].copy(), sol[:n, :].copy())
        return self._first_basis

    def first(self, u):
        """(dlambda0/du, dktilde/du) for an arbitrary direction."""
        u = np.asarray(u, dtype=float)
        rhs = np.concatenate([-(self._s_ktilde @ u), [0.0]])
        sol = self._lu.solve(rhs)
        return float(sol[-1]), sol[:-1]

    @property
    def lam_grad(self) -> np.ndarray:
        return self.first_basis()[0]

    @property
    def ktilde_jac(self) -> np.ndarray:
        return self.first_basis()[1]

    # -- second order --------------------------------------------------

    def _second_rhs(self, du_pack, dw_pack, gu, gw):
        """RHS of the second-order system for direction pair (u, w).

        ``*_pack`` is (dlam, dktilde); ``gu/gw`` the constant contraction
        matrices DF(u), DF(w).
        """
        lu_, ku_ = du_pack
        lw_, kw_ = dw_pack
        top = -(gu.T @ kw_) - (gw.T @ ku_) + lw_ * ku_ + lu_ * kw_
        bottom = -float(ku_ @ kw_)
        return np.concatenate([top, [bottom]])

    def second(self, u, w):
        """(d2lambda0/dudw, d2ktilde/dudw)."""
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        gu = qm.jacobian(self.map, u)
        gw = qm.jacobian(self.map, w)
        pu = self.first(u)
        pw = self.first(w) if w is not u else pu
        sol = self._lu.solve(self._second_rhs(pu, pw, gu, gw))
        return float(sol[-1]), sol[:-1]

    def lam_hessian(self) -> np.ndarray:
        """Full Hessian of lambda0 via the left-null-vector contraction.

        Dotting the second-order system with the right kernel k eliminates
        the unknown second eigenvector derivative, giving the eigenvalue
        Hessian from first-order data alone.
        """
        if self._lam_hess is not None:
            return self._lam_hess
        k = self.eigen.k
        kt = self.eigen.ktilde
        denom = float(k @ kt)
        g, Y = self.first_basis()
        T = qm.jacobian(self.map, k)  # T[:, i] = DF(e_i) k
        m1 = T.T @ Y
        w = Y.T @ k
        hess = (m1 + m1.T - np.outer(g, w) - np.outer(w, g)) / denom
        self._lam_hess = 0.5 * (hess + hess.T)
        return self._lam_hess

    def lam_second_dir(self, u) -> float:
        """d2lambda0/du2 without solving for the eigenvector second."""
        u = np.asarray(u, dtype=float)
        k = self.eigen.k
        kt = self.eigen.ktilde
        lu_, ku_ = self.first(u)
        gu = qm.jacobian(self.map, u)
        top = -2.0 * (gu.T @ ku_) + 2.0 * lu_ * ku_
        return float(-(k @ top) / (k @ kt))

    # -- third order ---------------------------------------------------

    def lam_third_basis_dir(self, u) -> np.ndarray:
        """Components d3lambda0/dV_i du du over the basis directions i.

        This is the second directional derivative (along u) of the
        gradient of lambda0, the ingredient of the second normal
        derivative of the boundary level set.
        """
        u = np.asarray(u, dtype=float)
        n = self.map.n
        k = self.eigen.k
        kt = self.eigen.ktilde
        denom = float(k @ kt)
        g, Y = self.first_basis()
        lu_, ku_ = self.first(u)
        gu = qm.jacobian(self.map, u)
        # second-order data: (u,u) and (e_i, u) for all i, batched
        sol_uu = self._lu.solve(self._second_rhs((lu_, ku_), (lu_, ku_), gu, gu))
        lam_uu, k_uu = float(sol_uu[-1]), sol_uu[:-1]
        rhs = np.zeros((n + 1, n))
        s_ku = qm.hessian_weighted(self.map, ku_)
        # top_i = -G_i^T ku - G_u^T Y_i + lu * Y_i + g_i * ku
        rhs[:n, :] = -s_ku - gu.T @ Y + lu_ * Y + np.outer(ku_, g)
        rhs[n, :] = -(Y.T @ ku_)
        sol_iu = self._lu.solve(rhs)
        lam_iu, k_iu = sol_iu[n, :], sol_iu[:n, :]
        # third-order RHS for (e_i, u, u), contracted with k
        s_kuu = qm.hessian_weighted(self.map, k_uu)
        top = (-s_kuu - 2.0 * (gu.T @ k_iu)
               + g[None, :] * k_uu[:, None] + 2.0 * lu_ * k_iu
               + lam_uu * Y + 2.0 * lam_iu[None, :] * ku_[:, None])
        return -(k @ top) / denom


@dataclass
class SsbPoint:
    """A point on the boundary with cached eigen-data and derivatives."""

    map: qm.QuadraticMap
    v: np.ndarray
    eigen: qm.JacobianEval
    rank: int
    _engine: EigenDerivativeEngine | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.map.n

    @property
    def degenerate(self) -> bool:
        return self.rank <= self.n - 2

    def require_regular(self):
        if self.degenerate:
            raise DegeneratePointError(
                f"rank DF = {self.rank} <= n-2 at this point; no tangent space")

    @property
    def engine(self) -> EigenDerivativeEngine:
        self.require_regular()
        if self._engine is None:
            self._engine = EigenDerivativeEngine(self.map, self.v, self.eigen)
        return self._engine


def boundary_point(m: qm.QuadraticMap, v, tol_ssb: float = TOL_SSB,
                   require_on_surface: bool = True) -> SsbPoint:
    """Validate and wrap a boundary point."""
    v = np.asarray(v, dtype=float)
    eigen = qm.eigen_data(m, v)
    scale = np.linalg.norm(eigen.J, 2)
    if require_on_surface and abs(eigen.lam0) > tol_ssb * max(scale, 1e-12):
        raise NotOnSurfaceError(
            f"|lambda0| = {abs(eigen.lam0):.3e} exceeds {tol_ssb:.1e} * ||DF||"
            f" = {tol_ssb * scale:.3e}")
    rank = qm.rank_profile(m, v, RANK_TOL)
    return SsbPoint(map=m, v=v, eigen=eigen, rank=rank)


def _bordered_matrix(pt: SsbPoint) -> np.ndarray:
    return pt.engine._bordered


# ---------------------------------------------------------------------------
# normals
# ---------------------------------------------------------------------------


def normal_power(pt: SsbPoint) -> np.ndarray:
    """Unit normal of the boundary image in power space (left kernel)."""
    pt.require_regular()
    return pt.eigen.ktilde


def normal_voltage(pt: SsbPoint) -> np.ndarray:
    """Unnormalized voltage-space normal, the gradient of the level set.

    Generically this is grad lambda0 from the bordered eigen-derivative
    system. Where the zero eigenvalue is defective (left and right kernels
    orthogonal, e.g. the exact three-plane fixture whose small eigenvalues
    behave like +-sqrt off the sheet), lambda0 is not differentiable and
    the gradient of det DF - collinear with it at rank n-1 points - is
    used instead.
    """
    pt.require_regular()
    try:
        g = pt.engine.lam_grad
    except DegeneratePointError:
        g = qm.grad_det_jacobian(pt.map, pt.v)
    if np.linalg.norm(g) == 0.0:
        raise DegeneratePointError("level-set gradient vanishes")
    return g


def eig_derivatives(pt: SsbPoint, order: int = 1, directions=None):
    """Eigenpair derivatives along given directions (or the basis).

    order=1: returns (dlam array, dktilde matrix with one column per
    direction); order=2 expects direction pairs and returns the list of
    (d2lam, d2ktilde).
    """
    eng = pt.engine
    if order == 1:
        if directions is None:
            g, Y = eng.first_basis()
            return g.copy(), Y.copy()
        packs = [eng.first(u) for u in directions]
        return (np.array([p[0] for p in packs]),
                np.column_stack([p[1] for p in packs]))
    if order == 2:
        if directions is None:
            n = pt.n
            eye = np.eye(n)
            directions = [(eye[i], eye[j]) for i in range(n) for j in range(i, n)]
        return [eng.second(u, w) for (u, w) in directions]
    raise ValueError("order must be 1 or 2")


def dnormal_power_tangential(pt: SsbPoint, i: int, j: int) -> float:
    """dktilde/dv_j . dF/dv_i = -ktilde . d2F/dv_i dv_j (constant Hessian)."""
    pt.require_regular()
    return float(-qm.hessian_weighted(pt.map, pt.eigen.ktilde)[i, j])


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


def normal_curvature(n_vec, dn_dir, c_dot) -> float:
    """kappa_N(c_dot) from an (un)normalized normal and its derivative.

    The scale-invariant Weingarten form: with unit N it reduces to
    -(dN/dc_dot) . c_dot.
    """
    n_vec = np.asarray(n_vec, dtype=float)
    dn_dir = np.asarray(dn_dir, dtype=float)
    c_dot = np.asarray(c_dot, dtype=float)
    norm = np.linalg.norm(n_vec)
    if norm == 0.0:
        raise ValueError("zero normal vector")
    return float((n_vec @ dn_dir) / norm**3 * (n_vec @ c_dot)
                 - (dn_dir @ c_dot) / norm)


def normal_curvature_from_accel(n_vec, c_ddot) -> float:
    """kappa_N = (N/|N|) . c_ddot for a surface curve's acceleration."""
    n_vec = np.asarray(n_vec, dtype=float)
    norm = np.linalg.norm(n_vec)
    if norm == 0.0:
        raise ValueError("zero normal vector")
    return float((n_vec / norm) @ np.asarray(c_ddot, dtype=float))


def geodesic_accel_voltage(pt: SsbPoint, c_dot, check_tangent: bool = True):
    """Geodesic acceleration on the boundary in voltage space.

    Solves the kernel-evolution least-squares system for kdot, then the
    bordered acceleration system for (lam, kddot); the acceleration is
    lam * unit-normal. Returns (c_ddot, k_dot, lam).
    """
    pt.require_regular()
    c_dot = np.asarray(c_dot, dtype=float)
    m = pt.map
    n_v = normal_voltage(pt)
    n_hat = n_v / np.linalg.norm(n_v)
    if check_tangent and abs(c_dot @ n_hat) > 1e-8 * max(np.linalg.norm(c_dot), 1e-12):
        raise ValueError("direction is not tangential to the boundary")
    k = pt.eigen.k
    j_c = pt.eigen.J
    j_k = qm.jacobian(m, k)
    # kernel transport: n+1 consistent equations for the n unknowns kdot
    a27 = np.vstack([j_c, k[None, :]])
    rhs27 = np.concatenate([-(j_k @ c_dot), [0.0]])
    k_dot, *_ = np.linalg.lstsq(a27, rhs27, rcond=None)
    # acceleration system: unknowns (lam, kddot)
    mat = np.zeros((m.n + 1, m.n + 1))
    mat[: m.n, 0] = j_k @ n_hat
    mat[: m.n, 1:] = j_c
    mat[m.n, 1:] = k
    rhs = np.concatenate([-2.0 * (qm.jacobian(m, c_dot) @ k_dot),
                          [-float(k_dot @ k_dot)]])
    try:
        sol = num.solve_square(mat, rhs)
    except num.SingularMatrixError as exc:
        raise DegeneratePointError(f"geodesic acceleration system singular: {exc}") from exc
    lam = float(sol[0])
    return lam * n_hat, k_dot, lam


def tangent_basis(pt: SsbPoint) -> np.ndarray:
    """Orthonormal voltage-space tangent basis (complement of the normal)."""
    return _householder_complement(normal_voltage(pt))


@dataclass
class FundamentalForms:
    """First/second fundamental forms in a stated basis.

    ``basis`` columns span the tangent space when present; otherwise the
    forms live in the full coordinate space with ``kernel`` marking the
    metric's null direction (the parameterization view of the power-space
    boundary image).
    """

    g: np.ndarray
    l: np.ndarray
    basis: np.ndarray | None = None
    kernel: np.ndarray | None = None
    space: str = "voltage"


def shape_operator_voltage(pt: SsbPoint):
    """Shape operator on the voltage-space tangent basis.

    The second fundamental form is filled by the triangular substitution
    scheme from (n^2-n)/2 normal curvature evaluations: the diagonal from
    basis directions, off-diagonals from pairwise sums. Returns
    (W, FundamentalForms, evaluation count).
    """
    pt.require_regular()
    basis = tangent_basis(pt)
    n_v = normal_voltage(pt)
    n_hat = n_v / np.linalg.norm(n_v)
    dim = basis.shape[1]

    evals = 0

    def kappa(u):
        nonlocal evals
        evals += 1
        c_ddot, _, _ = geodesic_accel_voltage(pt, u, check_tangent=False)
        return float(n_hat @ c_ddot)

    l_mat = np.zeros((dim, dim))
    for i in range(dim):
        l_mat[i, i] = kappa(basis[:, i])
    for i in range(dim):
        for j in range(i + 1, dim):
            mixed = kappa(basis[:, i] + basis[:, j])
            l_mat[i, j] = l_mat[j, i] = 0.5 * (mixed - l_mat[i, i] - l_mat[j, j])
    g = basis.T @ basis
    w = np.linalg.solve(g, l_mat)
    forms = FundamentalForms(g=g, l=l_mat, basis=basis, space="voltage")
    return w, forms, evals


def shape_operator_apply_power(pt: SsbPoint, c_dot) -> np.ndarray:
    """W(c_dot) for the power-space image, in voltage coordinates.

    Solves (g + eps N N^T) W = (1 - N N^T) Ltilde c_dot with g = J^T J,
    N the unit kernel direction of g, and eps = trace(g)/n shifting the
    zero metric eigenvalue so the solve is well posed; the solution is
    automatically orthogonal to N.
    """
    pt.require_regular()
    c_dot = np.asarray(c_dot, dtype=float)
    j = pt.eigen.J
    g = j.T @ j
    k = pt.eigen.k
    lt = qm.hessian_weighted(pt.map, pt.eigen.ktilde)
    eps = np.trace(g) / pt.n
    proj_rhs = lt @ c_dot
    proj_rhs = proj_rhs - k * (k @ proj_rhs)
    try:
        sol = num.solve_square(g + eps * np.outer(k, k), proj_rhs)
    except num.SingularMatrixError as exc:
        raise DegeneratePointError(
            f"metric kernel dimension exceeds one: {exc}") from exc
    return sol


def curve_image_accel_power(m: qm.QuadraticMap, v, c_dot, c_ddot) -> np.ndarray:
    """Second derivative of F(c(t)): (DF(c_dot)) c_dot + (DF(c)) c_ddot."""
    return qm.jacobian(m, c_dot) @ np.asarray(c_dot, dtype=float) \
        + qm.jacobian(m, v) @ np.asarray(c_ddot, dtype=float)


def fundamental_forms(pt: SsbPoint, space: str = "power") -> FundamentalForms:
    """Forms of the boundary in the requested space.

    Power space uses the parameterization view (g = J^T J, L the
    normal-weighted Hessian stack) restricted to the voltage tangent
    space, which is a complement of the metric's kernel: surface curves
    through the point have a unique tangent representative there, so the
    second form is well defined.
    """
    pt.require_regular()
    if space == "power":
        j = pt.eigen.J
        basis = tangent_basis(pt)
        g = j.T @ j
        l_full = qm.hessian_weighted(pt.map, pt.eigen.ktilde)
        return FundamentalForms(
            g=basis.T @ g @ basis,
            l=basis.T @ l_full @ basis,
            basis=basis,
            space="power",
        )
    if space == "voltage":
        _, forms, _ = shape_operator_voltage(pt)
        return forms
    raise ValueError("space must be 'power' or 'voltage'")


def principal_curvatures(forms: FundamentalForms, count: int | None = None):
    """Solve L v = kappa g v on the tangent complement; |kappa| descending."""
    pairs = num.generalized_sym_eig(forms.l, forms.g, known_kernel=forms.kernel)
    if forms.basis is not None:
        pairs = [(k, forms.basis @ v) for k, v in pairs]
    pairs.sort(key=lambda kv: -abs(kv[0]))
    if count is not None:
        pairs = pairs[:count]
    return pairs
