"""Boundary geometry: normals, eigenpair derivatives, curvatures, shape
operators. Generic behavior is exercised on the 3-bus network map (n=5)
and the perturbed three-plane map; the exact three-plane sheet checks the
flat/degenerate special cases."""
import numpy as np
import pytest

from ssbgeo import quadmap as qm
from ssbgeo import ssb
from conftest import sample_boundary_points


@pytest.fixture(scope="module")
def m3():
    return qm.three_plane_map()


@pytest.fixture(scope="module")
def m3_sheet_point(m3):
    return ssb.boundary_point(m3, np.array([1.0, 0.0, 2.0]))


@pytest.fixture(scope="module")
def bus3_points(three_bus_map):
    qmap, _ = three_bus_map
    rng = np.random.default_rng(7)
    return qmap, sample_boundary_points(qmap, rng, 12)


class TestNormalPower:
    def test_m3_left_kernel(self, m3_sheet_point):
        n_p = ssb.normal_power(m3_sheet_point)
        expect = np.array([2.0, 0.0, -1.0]) / np.sqrt(5)
        assert min(np.linalg.norm(n_p - expect), np.linalg.norm(n_p + expect)) < 1e-12

    def test_coordinate_map(self):
        m = qm.QuadraticMap([np.diag([1.0, 0, 0]), np.diag([0, 1.0, 0]),
                             np.diag([0, 0, 1.0])])
        pt = ssb.boundary_point(m, np.array([1.0, 0.0, 2.0]))
        n_p = ssb.normal_power(pt)
        np.testing.assert_allclose(np.abs(n_p), [0, 1, 0], atol=1e-12)

    def test_columns_orthogonal(self, bus3_points):
        _, pts = bus3_points
        for pt in pts:
            n_p = ssb.normal_power(pt)
            assert np.max(np.abs(n_p @ pt.eigen.J)) <= 1e-8 * np.linalg.norm(pt.eigen.J, 2)


class TestEigDerivatives:
    def test_finite_difference_first_order(self, bus3_points):
        qmap, pts = bus3_points
        h = 1e-6
        rng = np.random.default_rng(3)
        for pt in pts[:5]:
            u = rng.standard_normal(qmap.n)
            u /= np.linalg.norm(u)
            dlam, _ = pt.engine.first(u)
            lp = qm.eigen_data(qmap, pt.v + h * u).lam0
            lm = qm.eigen_data(qmap, pt.v - h * u).lam0
            fd = (lp - lm) / (2 * h)
            assert dlam == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_second_derivative_symmetry(self, bus3_points):
        qmap, pts = bus3_points
        rng = np.random.default_rng(4)
        for pt in pts[:5]:
            u = rng.standard_normal(qmap.n)
            w = rng.standard_normal(qmap.n)
            luw, _ = pt.engine.second(u, w)
            lwu, _ = pt.engine.second(w, u)
            assert luw == pytest.approx(lwu, rel=1e-10, abs=1e-8)

    def test_lam_hessian_against_pairs(self, bus3_points):
        qmap, pts = bus3_points
        pt = pts[0]
        hess = pt.engine.lam_hessian()
        eye = np.eye(qmap.n)
        for i in range(qmap.n):
            for j in range(i, qmap.n):
                d2, _ = pt.engine.second(eye[i], eye[j])
                assert hess[i, j] == pytest.approx(d2, rel=1e-9, abs=1e-10)

    def test_hessian_finite_difference(self, bus3_points):
        qmap, pts = bus3_points
        pt = pts[1]
        rng = np.random.default_rng(5)
        u = rng.standard_normal(qmap.n)
        u /= np.linalg.norm(u)
        d2 = pt.engine.lam_second_dir(u)
        h = 1e-5
        lp = qm.eigen_data(qmap, pt.v + h * u).lam0
        l0 = pt.eigen.lam0
        lm = qm.eigen_data(qmap, pt.v - h * u).lam0
        fd = (lp - 2 * l0 + lm) / h**2
        assert d2 == pytest.approx(fd, rel=1e-3, abs=1e-4)

    def test_defective_point_raises(self, m3_sheet_point):
        with pytest.raises(ssb.DegeneratePointError):
            _ = m3_sheet_point.engine

    def test_op_wrapper_shapes(self, bus3_points):
        qmap, pts = bus3_points
        g, Y = ssb.eig_derivatives(pts[0], order=1)
        assert g.shape == (qmap.n,)
        assert Y.shape == (qmap.n, qmap.n)
        out = ssb.eig_derivatives(pts[0], order=2,
                                  directions=[(np.eye(qmap.n)[0], np.eye(qmap.n)[1])])
        assert len(out) == 1


class TestNormalVoltage:
    def test_m3_sheet_direction(self, m3_sheet_point):
        n_v = ssb.normal_voltage(m3_sheet_point)
        n_hat = n_v / np.linalg.norm(n_v)
        np.testing.assert_allclose(np.abs(n_hat), [0, 1, 0], atol=1e-12)

    def test_radial_tangency(self, bus3_points):
        # the boundary is a cone: the position vector is tangential
        _, pts = bus3_points
        for pt in pts:
            n_v = ssb.normal_voltage(pt)
            assert abs(n_v @ pt.v) <= 1e-8 * np.linalg.norm(n_v) * np.linalg.norm(pt.v)

    def test_collinear_with_grad_det(self, bus3_points):
        qmap, pts = bus3_points
        for pt in pts:
            n_v = ssb.normal_voltage(pt)
            gd = qm.grad_det_jacobian(qmap, pt.v)
            cosang = abs(n_v @ gd) / (np.linalg.norm(n_v) * np.linalg.norm(gd))
            assert np.sqrt(max(0.0, 1 - cosang**2)) <= 1e-6


class TestDnormalPowerTangential:
    def test_m3_value(self, m3_sheet_point):
        # -ktilde . d2F/dy2 with ktilde = +-(2,0,-1)/sqrt5 and
        # d2F/dy2 = (-6, 4, -10)
        val = ssb.dnormal_power_tangential(m3_sheet_point, 1, 1)
        assert abs(val) == pytest.approx(2.0 / np.sqrt(5), rel=1e-12)

    def test_symmetry(self, bus3_points):
        _, pts = bus3_points
        pt = pts[0]
        for i in range(pt.n):
            for j in range(pt.n):
                a = ssb.dnormal_power_tangential(pt, i, j)
                b = ssb.dnormal_power_tangential(pt, j, i)
                assert a == pytest.approx(b, abs=1e-12)

    def test_consistent_with_eigen_derivatives(self, bus3_points):
        # dktilde/du . (DF column i) for tangential u, computed two
        # independent ways (the identity differentiates ktilde . DF_col = 0
        # along the surface, so the derivative direction must be tangent)
        _, pts = bus3_points
        for pt in pts[:5]:
            Y = pt.engine.ktilde_jac
            J = pt.eigen.J
            scale = np.linalg.norm(J, 2)
            s_kt = qm.hessian_weighted(pt.map, pt.eigen.ktilde)
            for u in ssb.tangent_basis(pt).T:
                lhs = (Y @ u) @ J
                rhs = -(s_kt @ u)
                assert np.max(np.abs(lhs - rhs)) <= 1e-7 * max(1.0, scale)


class TestNormalCurvature:
    def test_unit_sphere_form(self):
        # level |x|^2 - 1: N = 2x, dN/dc = 2c for any direction c
        x = np.array([1.0, 0.0, 0.0])
        c = np.array([0.0, 1.0, 0.0])
        assert ssb.normal_curvature(2 * x, 2 * c, c) == pytest.approx(-1.0)
        # scale invariance in the normal field
        assert ssb.normal_curvature(6 * x, 6 * c, c) == pytest.approx(-1.0)

    def test_cylinder(self):
        # radius r cylinder around z: level x^2+y^2-r^2, N = 2(x, y, 0)
        r = 2.0
        x = np.array([r, 0.0, 0.0])
        n_vec = 2 * np.array([x[0], x[1], 0.0])
        axis = np.array([0.0, 0.0, 1.0])
        hoop = np.array([0.0, 1.0, 0.0])
        assert ssb.normal_curvature(n_vec, np.zeros(3), axis) == pytest.approx(0.0)
        assert ssb.normal_curvature(n_vec, 2 * hoop, hoop) == pytest.approx(-1.0 / r)

    def test_accel_variant_flat_sheet(self, m3_sheet_point):
        pt = m3_sheet_point
        n_v = ssb.normal_voltage(pt)
        for c_dot in (np.array([1.0, 0, 0]), np.array([0.0, 0, 1.0]), pt.v):
            c_ddot, _, lam = ssb.geodesic_accel_voltage(pt, c_dot)
            assert abs(lam) < 1e-9
            assert abs(ssb.normal_curvature_from_accel(n_v, c_ddot)) < 1e-9


class TestGeodesicAccel:
    def test_radial_ruling_straight(self, bus3_points):
        _, pts = bus3_points
        for pt in pts[:6]:
            c_dot = pt.v / np.linalg.norm(pt.v)
            _, k_dot, lam = ssb.geodesic_accel_voltage(pt, c_dot)
            assert abs(lam) <= 1e-7
            assert np.linalg.norm(k_dot) <= 1e-6

    def test_two_route_curvature_consistency(self, bus3_points):
        # acceleration route vs Weingarten-form route
        qmap, pts = bus3_points
        rng = np.random.default_rng(11)
        checked = 0
        for pt in pts:
            n_v = ssb.normal_voltage(pt)
            n_hat = n_v / np.linalg.norm(n_v)
            basis = ssb.tangent_basis(pt)
            u = basis @ rng.standard_normal(basis.shape[1])
            u /= np.linalg.norm(u)
            c_ddot, _, _ = ssb.geodesic_accel_voltage(pt, u)
            kappa_accel = ssb.normal_curvature_from_accel(n_v, c_ddot)
            dn_dir = pt.engine.lam_hessian() @ u
            kappa_form = ssb.normal_curvature(n_v, dn_dir, u)
            assert kappa_accel == pytest.approx(kappa_form, rel=1e-6, abs=1e-8)
            checked += 1
        assert checked >= 10

    def test_nontangent_rejected(self, bus3_points):
        _, pts = bus3_points
        pt = pts[0]
        n_v = ssb.normal_voltage(pt)
        with pytest.raises(ValueError):
            ssb.geodesic_accel_voltage(pt, n_v / np.linalg.norm(n_v))


class TestShapeOperatorVoltage:
    def test_flat_sheet_zero(self, m3_sheet_point):
        w, _, _ = ssb.shape_operator_voltage(m3_sheet_point)
        assert np.max(np.abs(w)) <= 1e-7

    def test_self_adjoint_wrt_metric(self, bus3_points):
        _, pts = bus3_points
        for pt in pts[:5]:
            w, forms, _ = ssb.shape_operator_voltage(pt)
            gw = forms.g @ w
            scale = max(1.0, np.max(np.abs(gw)))
            assert np.max(np.abs(gw - gw.T)) <= 1e-8 * scale

    def test_evaluation_count(self, bus3_points):
        _, pts = bus3_points
        pt = pts[0]
        n = pt.n
        _, _, evals = ssb.shape_operator_voltage(pt)
        assert evals == (n * n - n) // 2

    def test_matches_direct_curvature(self, bus3_points):
        # W u . u reproduces the normal curvature of direction u
        _, pts = bus3_points
        pt = pts[0]
        w, forms, _ = ssb.shape_operator_voltage(pt)
        n_v = ssb.normal_voltage(pt)
        rng = np.random.default_rng(13)
        y = rng.standard_normal(forms.basis.shape[1])
        y /= np.linalg.norm(y)
        u = forms.basis @ y
        c_ddot, _, _ = ssb.geodesic_accel_voltage(pt, u)
        kappa = ssb.normal_curvature_from_accel(n_v, c_ddot)
        assert (w @ y) @ forms.g @ y == pytest.approx(kappa, rel=1e-6, abs=1e-8)


class TestShapeOperatorPower:
    def test_solution_orthogonal_to_kernel(self, bus3_points):
        _, pts = bus3_points
        rng = np.random.default_rng(17)
        for pt in pts[:5]:
            u = rng.standard_normal(pt.n)
            u = u - pt.eigen.k * (pt.eigen.k @ u)
            w = ssb.shape_operator_apply_power(pt, u)
            assert abs(w @ pt.eigen.k) <= 1e-8 * max(1.0, np.linalg.norm(w))

    def test_epsilon_robust(self, bus3_points):
        _, pts = bus3_points
        pt = pts[0]
        u = ssb.tangent_basis(pt)[:, 0]
        u = u - pt.eigen.k * (pt.eigen.k @ u)
        base = ssb.shape_operator_apply_power(pt, u)
        j = pt.eigen.J
        g = j.T @ j
        lt = qm.hessian_weighted(pt.map, pt.eigen.ktilde)
        k = pt.eigen.k
        eps = 10.0 * np.trace(g) / pt.n
        rhs = lt @ u
        rhs = rhs - k * (k @ rhs)
        import scipy.linalg
        other = scipy.linalg.solve(g + eps * np.outer(k, k), rhs)
        assert np.linalg.norm(base - other) <= 1e-9 * max(1.0, np.linalg.norm(base))

    def test_consistency_with_image_acceleration(self, bus3_points):
        # normal curvature of the power image two ways
        qmap, pts = bus3_points
        for pt in pts[:5]:
            u = ssb.tangent_basis(pt)[:, 0]
            w_u = ssb.shape_operator_apply_power(pt, u)
            j = pt.eigen.J
            g = j.T @ j
            kappa_w = (w_u @ g @ u) / (u @ g @ u)
            c_ddot, _, _ = ssb.geodesic_accel_voltage(pt, u, check_tangent=False)
            p_dd = ssb.curve_image_accel_power(qmap, pt.v, u, c_ddot)
            kappa_c = (pt.eigen.ktilde @ p_dd) / (u @ g @ u)
            assert kappa_w == pytest.approx(kappa_c, rel=1e-6, abs=1e-9)


class TestCurveImageAccel:
    def test_basis_direction_formula(self, m3):
        e0 = np.array([1.0, 0.0, 0.0])
        out = ssb.curve_image_accel_power(m3, np.zeros(3), e0, np.zeros(3))
        np.testing.assert_allclose(out, qm.jacobian(m3, e0) @ e0)

    def test_ruling_euler_identity(self, m3):
        v = np.array([1.0, 0.3, 2.0])
        out = ssb.curve_image_accel_power(m3, v, v, np.zeros(3))
        np.testing.assert_allclose(out, 2.0 * qm.evaluate(m3, v), rtol=1e-13)

    def test_finite_difference(self, m3):
        rng = np.random.default_rng(19)
        c = rng.standard_normal(3)
        cd = rng.standard_normal(3)
        cdd = rng.standard_normal(3)
        got = ssb.curve_image_accel_power(m3, c, cd, cdd)
        h = 1e-4
        def curve(t):
            return qm.evaluate(m3, c + t * cd + 0.5 * t * t * cdd)
        fd = (curve(h) - 2 * curve(0.0) + curve(-h)) / h**2
        np.testing.assert_allclose(got, fd, rtol=1e-7, atol=1e-6)


class TestPrincipalCurvatures:
    def test_flat_sheet_zero(self, m3_sheet_point):
        _, forms, _ = ssb.shape_operator_voltage(m3_sheet_point)
        pairs = ssb.principal_curvatures(forms)
        for kappa, _ in pairs:
            assert abs(kappa) <= 1e-7

    def test_rayleigh_bound_power(self, bus3_points):
        # sampled |normal curvature| over random tangents approaches the
        # largest principal curvature from below
        qmap, pts = bus3_points
        rng = np.random.default_rng(23)
        for pt in pts[:3]:
            forms = ssb.fundamental_forms(pt, "power")
            pairs = ssb.principal_curvatures(forms)
            kmax = max(abs(k) for k, _ in pairs)
            dim = forms.g.shape[0]
            # uniform over unit tangents of the image surface: whiten by g
            import scipy.linalg
            chol = scipy.linalg.cholesky(forms.g, lower=False)
            best = 0.0
            for _ in range(500):
                z = rng.standard_normal(dim)
                y = scipy.linalg.solve_triangular(chol, z, lower=False)
                quo = abs(y @ forms.l @ y) / (y @ forms.g @ y)
                best = max(best, quo)
            assert best <= kmax * (1 + 1e-9)
            assert best >= 0.95 * kmax

    def test_count_truncation(self, bus3_points):
        _, pts = bus3_points
        forms = ssb.fundamental_forms(pts[0], "power")
        pairs = ssb.principal_curvatures(forms, count=2)
        assert len(pairs) == 2
        kappas = [abs(k) for k, _ in pairs]
        assert kappas == sorted(kappas, reverse=True)


class TestDegenerateRefusal:
    def test_rank1_point_refused(self, m3):
        pt = ssb.boundary_point(m3, np.array([1.0, 0.0, 1.0]))
        assert pt.degenerate
        with pytest.raises(ssb.DegeneratePointError):
            ssb.normal_voltage(pt)
        with pytest.raises(ssb.DegeneratePointError):
            ssb.geodesic_accel_voltage(pt, np.array([1.0, 0, 1.0]))
        with pytest.raises(ssb.DegeneratePointError):
            ssb.shape_operator_voltage(pt)
