"""Algebra of homogeneous quadratic maps F(v) = (v^T A_1 v, ..., v^T A_n v).

Everything downstream (boundary geometry, continuation, projection) reduces
to a handful of exact identities of these maps: the Jacobian row i is
2 v^T A_i, the Hessian stack is constant, and det DF is a homogeneous
polynomial of degree n whose zero set is the solution space boundary (SSB).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

__all__ = [
    "QuadraticMap",
    "JacobianEval",
    "LineRoots",
    "evaluate",
    "jacobian",
    "hessian_apply",
    "hessian_weighted",
    "det_jacobian",
    "grad_det_jacobian",
    "eigen_data",
    "rank_profile",
    "locate_ssb_on_line",
    "three_plane_map",
    "random_quadratic_map",
]

# Gradient of det DF switches from the cofactor sum to the trace identity
# above this dimension (the trace form needs a nonsingular Jacobian).
_GRAD_DET_TRACE_DIM = 50
_SINGULAR_COND = 1e12


class QuadraticMap:
    """A map F: R^n -> R^n with components F_i(v) = v^T A_i v, A_i symmetric.

    The matrices are stored both as a list (sparse or dense) and as a single
    vertically stacked sparse matrix so that the full Jacobian is one
    matrix-vector product.
    """

    def __init__(self, matrices):
        mats = []
        n = len(matrices)
        for a in matrices:
            if sp.issparse(a):
                a = a.tocsr()
                asym = abs(a - a.T)
                if asym.nnz and asym.max() > 0:
                    raise ValueError("quadratic form matrices must be symmetric")
            else:
                a = np.asarray(a, dtype=float)
                if not np.array_equal(a, a.T):
                    raise ValueError("quadratic form matrices must be symmetric")
                a = sp.csr_matrix(a)
            if a.shape != (n, n):
                raise ValueError(f"expected {n} matrices of shape {(n, n)}, got {a.shape}")
            mats.append(a)
        self.n = n
        self.matrices = mats
        # rows [i*n:(i+1)*n] hold A_i; (stack @ v).reshape(n, n) has rows A_i v
        self._stack = sp.vstack(mats, format="csr")

    def __repr__(self):
        nnz = sum(a.nnz for a in self.matrices)
        return f"QuadraticMap(n={self.n}, nnz={nnz})"

    def _contract(self, v: np.ndarray) -> np.ndarray:
        """Rows A_i v for all i, as an (n, n) array."""
        return (self._stack @ v).reshape(self.n, self.n)

    def dense_matrices(self):
        return [a.toarray() for a in self.matrices]


@dataclass
class JacobianEval:
    """DF at a point, with eigen-data for the smallest-magnitude eigenvalue.

    ``complex_pair`` is set when the minimum-|lambda| eigenvalue belongs to a
    conjugate pair; k/ktilde then come from the singular pair of the smallest
    singular value and lam0 is reported as the (complex) eigenvalue's modulus
    owner, see ``eigen_data``.
    """

    v: np.ndarray
    J: np.ndarray
    det: float | None = None
    lam0: float | None = None
    k: np.ndarray | None = None
    ktilde: np.ndarray | None = None
    complex_pair: bool = field(default=False)


class EigenConvergenceError(np.linalg.LinAlgError):
    """Eigen extraction failed the residual contract."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def _check_dim(m: QuadraticMap, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (m.n,):
        raise ValueError(f"expected vector of dimension {m.n}, got shape {v.shape}")
    return v


def evaluate(m: QuadraticMap, v) -> np.ndarray:
    """F(v), component i equal to v^T A_i v."""
    v = _check_dim(m, v)
    return m._contract(v) @ v


def jacobian(m: QuadraticMap, v) -> np.ndarray:
    """DF(v); row i is 2 v^T A_i.

    Because each A_i is symmetric, (DF(x))v = (DF(v))x for all x, v, and
    the directional derivative of DF along u is the constant matrix DF(u).
    """
    v = _check_dim(m, v)
    return 2.0 * m._contract(v)


def hessian_apply(m: QuadraticMap, v) -> np.ndarray:
    """Contraction v^T (HF) of the constant Hessian stack; equals DF(v)."""
    return jacobian(m, v)


def hessian_weighted(m: QuadraticMap, weights) -> np.ndarray:
    """The symmetric matrix sum_i weights_i * 2 A_i.

    This is the matrix (u, w) -> weights . (u^T HF w); with the power-space
    normal as weights it is the second-fundamental-form matrix of the SSB
    image.
    """
    weights = _check_dim(m, weights)
    out = sp.csr_matrix((m.n, m.n))
    for wi, a in zip(weights, m.matrices):
        if wi != 0.0:
            out = out + (2.0 * wi) * a
    return out.toarray()


def det_jacobian(m: QuadraticMap, v) -> float:
    """det DF(v), a degree-n homogeneous polynomial in v."""
    return float(np.linalg.det(jacobian(m, v)))


def _adjugate(J: np.ndarray) -> np.ndarray:
    """Adjugate via SVD; well defined (and frequently zero) at singular J."""
    u, s, vt = np.linalg.svd(J)
    n = J.shape[0]
    # prod of all singular values except the i-th, stable against zeros
    d = np.empty(n)
    for i in range(n):
        d[i] = np.prod(np.delete(s, i))
    sign = np.linalg.det(u @ vt)
    return sign * (vt.T * d) @ u.T


def grad_det_jacobian(m: QuadraticMap, v) -> np.ndarray:
    """Gradient of det DF at v.

    Component i is the cofactor sum over single-column replacements of DF
    with the corresponding column of the constant contraction DF(e_i);
    evaluated through the adjugate, which keeps it exact where DF drops
    rank (there the whole gradient vanishes together with the cofactors).
    For large nonsingular Jacobians the equivalent trace identity
    grad_i = det(J) tr(J^{-1} DF(e_i)) is cheaper.
    """
    v = _check_dim(m, v)
    J = jacobian(m, v)
    n = m.n
    use_trace = n > _GRAD_DET_TRACE_DIM
    if use_trace:
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] <= sv[0] / _SINGULAR_COND:
            use_trace = False
    grad = np.empty(n)
    if use_trace:
        det = np.linalg.det(J)
        lu, piv = scipy.linalg.lu_factor(J)
        for i in range(n):
            gi = 2.0 * m._contract(np.eye(n)[i])
            grad[i] = det * np.trace(scipy.linalg.lu_solve((lu, piv), gi))
        return grad
    C = _adjugate(J).T  # cofactor matrix
    eye = np.eye(n)
    for i in range(n):
        gi = 2.0 * m._contract(eye[i])
        grad[i] = np.sum(C * gi)
    return grad


def _fix_sign(x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Flip so the first significantly nonzero component is positive."""
    scale = np.max(np.abs(x))
    if scale == 0.0:
        return x
    for xi in x:
        if abs(xi) > tol * scale:
            return x if xi > 0 else -x
    return x


def eigen_data(m: QuadraticMap, v, sign_convention: bool = True) -> JacobianEval:
    """Smallest-magnitude eigenvalue of DF(v) with unit right/left vectors.

    On (or numerically at) the boundary the vectors are taken from the
    singular pair of the smallest singular value, which is the stable way
    to extract the kernel. A minimum-|lambda| eigenvalue that is part of a
    conjugate pair is flagged via ``complex_pair`` and the vectors likewise
    fall back to the singular pair.
    """
    v = _check_dim(m, v)
    J = jacobian(m, v)
    scale = np.linalg.norm(J, 2)
    if scale == 0.0:
        k = np.zeros(m.n)
        k[0] = 1.0
        return JacobianEval(v=v, J=J, det=0.0, lam0=0.0, k=k.copy(), ktilde=k.copy())
    w, vl, vr = scipy.linalg.eig(J, left=True, right=True)
    order = np.lexsort((np.arange(m.n), np.abs(w)))
    idx = order[0]
    lam = w[idx]
    complex_pair = bool(abs(lam.imag) > 1e-12 * scale)
    lam0 = float(lam.real)
    near_kernel = abs(lam) <= 1e-9 * scale
    if complex_pair or near_kernel:
        # singular pair of sigma_min: the stable kernel extraction
        u, s, vt = np.linalg.svd(J)
        k = vt[-1]
        ktilde = u[:, -1]
        if complex_pair:
            lam0 = float(abs(lam))
    else:
        k = np.real(vr[:, idx])
        ktilde = np.real(vl[:, idx])
        k = k / np.linalg.norm(k)
        ktilde = ktilde / np.linalg.norm(ktilde)
        res = max(np.linalg.norm(J @ k - lam0 * k), np.linalg.norm(J.T @ ktilde - lam0 * ktilde))
        if res > 1e-10 * scale:
            raise EigenConvergenceError(
                f"eigenpair residual {res:.3e} exceeds 1e-10 * ||DF|| = {1e-10 * scale:.3e}",
                residual=res,
            )
    if sign_convention:
        k = _fix_sign(k)
        ktilde = _fix_sign(ktilde)
    return JacobianEval(
        v=v, J=J, det=float(np.linalg.det(J)), lam0=lam0, k=k, ktilde=ktilde,
        complex_pair=complex_pair,
    )


def rank_profile(m: QuadraticMap, v, tol: float = 1e-9) -> int:
    """Numerical rank of DF(v) by relative singular-value threshold."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = np.linalg.svd(jacobian(m, v), compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


@dataclass
class LineRoots:
    """Roots of det DF(a + t b) = 0 along a line.

    ``identically_zero`` marks lines lying inside the boundary (the fitted
    polynomial vanishes at every sample); the root list is then empty.
    """

    roots: list
    identically_zero: bool = False

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)


def locate_ssb_on_line(m: QuadraticMap, a, b, bracket: tuple = (-4.0, 4.0),
                       newton_steps: int = 2, method: str = "poly") -> LineRoots:
    """All real t in ``bracket`` with det DF(a + t b) = 0.

    DF is linear in the voltage, so p(t) = det DF(a + t b) is a polynomial
    of degree exactly n; it is recovered from n+1 Chebyshev samples and the
    real roots come out of the companion eigenvalue problem, each polished
    by Newton steps on det itself. ``method="pencil"`` instead solves the
    generalized eigenvalue problem DF(a) x = -t DF(b) x, which has the same
    roots but no determinant evaluation; det overflows float64 once n gets
    past roughly 100, so large maps must use the pencil.
    """
    a = _check_dim(m, a)
    b = _check_dim(m, b)
    if not np.any(b):
        raise ValueError("line direction b must be nonzero")
    lo, hi = bracket
    n = m.n
    if method == "pencil":
        ja = jacobian(m, a)
        jb = jacobian(m, b)
        w = scipy.linalg.eigvals(ja, -jb)
        finite = w[np.isfinite(w)]
        real = finite[np.abs(finite.imag) <= 1e-8 * (1.0 + np.abs(finite))].real
        real = real[(real >= lo) & (real <= hi)]
        if real.size == n and n > 0:
            # the whole pencil is singular: line inside the boundary
            scale = max(np.linalg.norm(ja), np.linalg.norm(jb))
            if all(np.linalg.svd(jacobian(m, a + t * b), compute_uv=False)[-1] < 1e-9 * scale
                   for t in np.linspace(lo, hi, 5)):
                return LineRoots(roots=[], identically_zero=True)
        roots = real
    else:
        nodes = np.cos(np.pi * (np.arange(n + 1) + 0.5) / (n + 1))
        ts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes
        samples = np.array([det_jacobian(m, a + t * b) for t in ts])
        if not np.all(np.isfinite(samples)):
            raise FloatingPointError(
                "det DF overflowed while sampling the line; use method='pencil'")
        scale = np.max(np.abs(samples))
        if scale == 0.0 or scale < 1e-13 * max(1.0, np.linalg.norm(a) + np.linalg.norm(b)) ** n:
            return LineRoots(roots=[], identically_zero=True)
        cheb = np.polynomial.chebyshev.Chebyshev.fit(ts, samples, deg=n, domain=[lo, hi])
        croots = cheb.roots()
        real = croots[np.abs(croots.imag) < 1e-8 * max(1.0, np.abs(croots).max())].real
        margin = 1e-8 * (hi - lo)
        roots = real[(real >= lo - margin) & (real <= hi + margin)]
    polished = []
    steps = 0 if method == "pencil" else newton_steps
    for t in np.sort(roots):
        for _ in range(steps):
            x = a + t * b
            d = det_jacobian(m, x)
            dd = grad_det_jacobian(m, x) @ b
            if dd == 0.0:
                break
            step = d / dd
            if abs(step) > 0.1 * (hi - lo):
                break
            t = t - step
        if not polished or abs(t - polished[-1]) > 1e-9 * max(1.0, abs(t)):
            polished.append(float(t))
    return LineRoots(roots=polished)


def three_plane_map(eps: float = 0.0) -> QuadraticMap:
    """The 3-d example map whose boundary is a union of three planes.

    det DF = 24 y (z^2 - x^2), so the boundary is {y=0} U {z=x} U {z=-x}
    with non-manifold lines along the pairwise intersections. A small
    ``eps`` perturbs the first form so the boundary becomes a manifold
    away from the origin.
    """
    a1 = np.array([[1.0, 0.0, 0.0], [0.0, -3.0, 0.0], [0.0, 0.0, 1.0]])
    a2 = np.array([[0.0, 0.0, 3.0], [0.0, 2.0, 0.0], [3.0, 0.0, 0.0]])
    a3 = np.array([[2.0, 0.0, 0.0], [0.0, -5.0, 0.0], [0.0, 0.0, 2.0]])
    if eps:
        a1 = a1 + np.array([[0.0, eps, 0.0], [eps, 0.0, eps / 2.0], [0.0, eps / 2.0, 0.0]])
    return QuadraticMap([a1, a2, a3])


def random_quadratic_map(n: int, seed: int = 0, density: float = 1.0) -> QuadraticMap:
    """A seeded random map with symmetric (optionally sparsified) forms."""
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(n):
        raw = rng.standard_normal((n, n))
        if density < 1.0:
            mask = rng.random((n, n)) < density
            raw = raw * mask
        mats.append(0.5 * (raw + raw.T))
    return QuadraticMap(mats)
