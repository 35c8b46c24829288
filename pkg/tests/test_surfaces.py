"""Geodesic tracing, Jacobi fields, sectional curvature (two routes),
higher-codimension geodesics, fans, stereographic projection."""
import numpy as np
import pytest

from ssbgeo import quadmap as qm
from ssbgeo import ssb
from ssbgeo import surfaces as srf
from conftest import sample_boundary_points


class Cylinder(srf.ImplicitSurface):
    def __init__(self, r):
        self.r = r

    def level(self, x):
        return float(x[0] ** 2 + x[1] ** 2 - self.r ** 2)

    def grad(self, x):
        return np.array([2 * x[0], 2 * x[1], 0.0])

    def hess(self, x):
        return np.diag([2.0, 2.0, 0.0])

    def grad_dir2(self, x, u):
        return np.zeros(3)


@pytest.fixture(scope="module")
def m3_surface():
    return srf.SsbSurface(qm.three_plane_map(), level_mode="det")


@pytest.fixture(scope="module")
def bus3_surface(three_bus_map):
    qmap, _ = three_bus_map
    return srf.SsbSurface(qmap)


class TestGeodesicTrace:
    def test_quarter_great_circle(self):
        s = srf.Sphere()
        traj = srf.geodesic_trace(s, [1.0, 0, 0], [0.0, 1, 0], np.pi / 2)
        np.testing.assert_allclose(traj[-1].gamma, [0, 1, 0], atol=1e-8)

    def test_closed_great_circle(self):
        s = srf.Sphere()
        traj = srf.geodesic_trace(s, [1.0, 0, 0], [0.0, 1, 0], 2 * np.pi)
        np.testing.assert_allclose(traj[-1].gamma, [1, 0, 0], atol=1e-7)

    def test_flat_sheet_straight(self, m3_surface):
        x0 = np.array([1.0, 0.0, 2.0])
        d = np.array([1.0, 0.0, 0.0])
        traj = srf.geodesic_trace(m3_surface, x0, d, 0.5)
        np.testing.assert_allclose(traj[-1].gamma, x0 + 0.5 * d, atol=1e-9)

    def test_corrector_invariants(self, bus3_surface):
        rng = np.random.default_rng(7)
        pts = sample_boundary_points(bus3_surface.map, rng, 1)
        x0 = pts[0].v
        basis = bus3_surface.tangent_basis(x0)
        traj = srf.geodesic_trace(bus3_surface, x0, basis[:, 0], 0.5)
        for st in traj:
            ev = qm.eigen_data(bus3_surface.map, st.gamma)
            assert abs(ev.lam0) <= 1e-9 * max(1.0, np.linalg.norm(ev.J, 2))
            assert abs(np.linalg.norm(st.alpha) - 1.0) <= 1e-9


class TestJacobiTrace:
    def test_sphere_jacobi_norm_is_sine(self):
        s = srf.Sphere()
        traj = srf.jacobi_trace(s, [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1], 3.0)
        for st in traj:
            assert abs(np.linalg.norm(st.gamma_prime) - abs(np.sin(st.t))) <= 1e-6

    def test_flat_sheet_linear_growth(self, m3_surface):
        x0 = np.array([1.0, 0.0, 2.0])
        d = np.array([1.0, 0.0, 0.0])
        dp = np.array([0.0, 0.0, 1.0])
        traj = srf.jacobi_trace(m3_surface, x0, d, dp, 0.5)
        for st in traj:
            np.testing.assert_allclose(st.gamma_prime, st.t * dp, atol=1e-9)

    def test_modes_agree_on_ellipsoid(self):
        s = srf.Ellipsoid([1.0, 1.0, 0.5])
        x0 = s.project(np.array([0.9, 0.1, 0.2]))
        basis = s.tangent_basis(x0)
        d, dp = basis[:, 0], basis[:, 1]
        t1 = srf.jacobi_trace(s, x0, d, dp, 1.0, mode="corrector")
        t2 = srf.jacobi_trace(s, x0, d, dp, 1.0, mode="second_derivative")
        np.testing.assert_allclose(t1[-1].gamma, t2[-1].gamma, atol=1e-8)
        np.testing.assert_allclose(t1[-1].gamma_prime, t2[-1].gamma_prime,
                                   atol=1e-6)

    def test_gauss_lemma(self):
        # start-direction variation orthogonal to the direction keeps the
        # Jacobi field orthogonal to the geodesic tangent
        for s, x0 in [(srf.Sphere(), np.array([1.0, 0, 0])),
                      (srf.Ellipsoid([1.0, 1.0, 0.5]), np.array([0.7, 0.3, 0.25]))]:
            x0 = s.project(x0)
            basis = s.tangent_basis(x0)
            traj = srf.jacobi_trace(s, x0, basis[:, 0], basis[:, 1], 2.0)
            for st in traj:
                jn = np.linalg.norm(st.gamma_prime)
                if jn > 1e-3:
                    assert abs(st.gamma_prime @ st.alpha) <= 1e-6 * jn


class TestSectionalExtrinsic:
    def test_unit_sphere(self):
        s = srf.Sphere()
        p = np.array([0.0, 0.0, 1.0])
        assert srf.sectional_curvature_extrinsic(
            s, p, np.array([1.0, 0, 0]), np.array([0.0, 1, 0])) == pytest.approx(1.0)

    def test_flat_sheet(self, m3_surface):
        p = np.array([1.0, 0.0, 2.0])
        v = np.array([1.0, 0.0, 0.0])
        w = np.array([0.0, 0.0, 1.0])
        assert abs(srf.sectional_curvature_extrinsic(m3_surface, p, v, w)) <= 1e-9

    def test_cylinder(self):
        s = Cylinder(2.0)
        p = np.array([2.0, 0.0, 0.0])
        axis = np.array([0.0, 0.0, 1.0])
        hoop = np.array([0.0, 1.0, 0.0])
        assert srf.sectional_curvature_extrinsic(s, p, axis, hoop) == pytest.approx(0.0)

    def test_nontangent_rejected(self):
        s = srf.Sphere()
        with pytest.raises(ValueError):
            srf.sectional_curvature_extrinsic(
                s, np.array([1.0, 0, 0]), np.array([1.0, 0, 0]),
                np.array([0.0, 1, 0]))


class TestSectionalJacobi:
    def test_unit_sphere_value(self):
        s = srf.Sphere()
        traj = srf.jacobi_trace(s, [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1], 1.2)
        st = traj[-1]
        jdd = srf.jacobi_second_derivative(s, st)
        kappa = srf.sectional_curvature_jacobi(
            st.gamma_prime, jdd, st.alpha, s.unit_normal(st.gamma),
            s.dnormal(st.gamma, st.alpha))
        assert kappa == pytest.approx(1.0, abs=1e-6)

    def test_flat_sheet_zero(self, m3_surface):
        x0 = np.array([1.0, 0.0, 2.0])
        traj = srf.jacobi_trace(m3_surface, x0, [1.0, 0, 0], [0.0, 0, 1], 0.4)
        st = traj[-1]
        jdd = srf.jacobi_second_derivative(m3_surface, st)
        kappa = srf.sectional_curvature_jacobi(
            st.gamma_prime, jdd, st.alpha, m3_surface.unit_normal(st.gamma),
            m3_surface.dnormal(st.gamma, st.alpha))
        assert abs(kappa) <= 1e-9

    def test_agreement_on_boundary(self, bus3_surface):
        # both routes on a generic curved boundary patch; traces that run
        # into a degenerate locus are skipped
        rng = np.random.default_rng(11)
        pts = sample_boundary_points(bus3_surface.map, rng, 6)
        checked = 0
        for pt in pts:
            basis = bus3_surface.tangent_basis(pt.v)
            v_dir, w_dir = basis[:, 0], basis[:, 1]
            try:
                traj = srf.jacobi_trace(bus3_surface, pt.v, v_dir, w_dir,
                                        0.6, rtol=1e-11)
            except num.IntegrationError:
                continue
            st = traj[-1]
            j_vec = st.gamma_prime
            if np.linalg.norm(j_vec) < 1e-3:
                continue
            jdd = srf.jacobi_second_derivative(bus3_surface, st)
            kappa_j = srf.sectional_curvature_jacobi(
                j_vec, jdd, st.alpha, bus3_surface.unit_normal(st.gamma),
                bus3_surface.dnormal(st.gamma, st.alpha))
            e1 = st.alpha / np.linalg.norm(st.alpha)
            e2 = j_vec - (j_vec @ e1) * e1
            e2 /= np.linalg.norm(e2)
            kappa_e = srf.sectional_curvature_extrinsic(bus3_surface, st.gamma,
                                                        e1, e2)
            denom = max(abs(kappa_e), 1e-9)
            assert abs(kappa_j - kappa_e) / denom <= 1e-6
            checked += 1
        assert checked >= 2


class TestCodimM:
    def test_embedded_subsphere(self):
        cons = srf.ConstraintSet([srf.sphere_constraint(1.0),
                                  srf.coordinate_plane_constraint(3)])
        x0 = np.array([1.0, 0.0, 0.0, 0.0])
        d = np.array([0.0, 1.0, 0.0, 0.0])
        length = 1.1
        traj = srf.geodesic_codim_m(cons, x0, d, length)
        expect = np.array([np.cos(length), np.sin(length), 0.0, 0.0])
        np.testing.assert_allclose(traj[-1].gamma, expect, atol=1e-7)

    def test_m1_matches_hypersurface(self):
        s = srf.Sphere()
        cons = srf.ConstraintSet([srf.sphere_constraint(1.0)])
        x0 = np.array([1.0, 0.0, 0.0])
        d = np.array([0.0, 0.6, 0.8])
        t1 = srf.geodesic_codim_m(cons, x0, d, 1.3)
        t2 = srf.geodesic_trace(s, x0, d, 1.3)
        np.testing.assert_allclose(t1[-1].gamma, t2[-1].gamma, atol=1e-8)

    def test_boundary_sphere_intersection(self):
        m = qm.random_quadratic_map(4, seed=3)
        rng = np.random.default_rng(5)
        pts = sample_boundary_points(m, rng, 1, radius=1.0)
        x0 = pts[0].v / np.linalg.norm(pts[0].v)  # cone: still on boundary
        surf = srf.SsbSurface(m)
        cons = srf.ConstraintSet([srf.surface_constraint(surf),
                                  srf.sphere_constraint(1.0)])
        jac = cons.jac(x0)
        import scipy.linalg
        null = scipy.linalg.null_space(jac)
        traj = srf.geodesic_codim_m(cons, x0, null[:, 0], 0.6)
        for st in traj:
            assert np.max(np.abs(cons.value(st.gamma))) <= 1e-9

    def test_rank_loss_raises(self):
        cons = srf.ConstraintSet([srf.coordinate_plane_constraint(0),
                                  srf.coordinate_plane_constraint(0)])
        with pytest.raises((num.SingularMatrixError, np.linalg.LinAlgError,
                            num.IntegrationError)):
            srf.geodesic_codim_m(cons, np.zeros(3), np.array([0.0, 1.0, 0.0]), 0.5)


class TestFans:
    def test_sphere_fan_distinct_endpoints(self):
        s = srf.Sphere()
        fans = srf.geodesic_fan(s, np.array([0.0, 0.0, 1.0]), 8, 1.0)
        ends = np.array([f[-1].gamma for f in fans])
        assert len(fans) == 8
        for i in range(8):
            for j in range(i + 1, 8):
                assert np.linalg.norm(ends[i] - ends[j]) > 1e-3

    def test_ellipsoid_fan_coverage(self):
        s = srf.Ellipsoid([1.0, 1.0, 0.5])
        fans = srf.geodesic_fan(s, np.array([0.0, 0.0, 0.5]), 64, 1.2,
                                rtol=1e-8)
        ends = np.array([f[-1].gamma for f in fans])
        w = ends / s.axes  # normalize onto the sphere
        az = np.sort(np.arctan2(w[:, 1], w[:, 0]))
        gaps = np.diff(np.concatenate([az, [az[0] + 2 * np.pi]]))
        assert gaps.max() < 2 * np.pi / 32

    def test_boundary_fan_stays_on_surface(self):
        m = qm.random_quadratic_map(4, seed=4)
        rng = np.random.default_rng(2)
        pts = sample_boundary_points(m, rng, 1, radius=1.0)
        surf = srf.SsbSurface(m)
        fans = srf.geodesic_fan(surf, pts[0].v, 6, 0.8, rtol=1e-10)
        for traj in fans:
            for st in traj:
                ev = qm.eigen_data(m, st.gamma)
                assert abs(ev.lam0) <= 1e-8 * max(1.0, np.linalg.norm(ev.J, 2))
            # radial-orthogonal start
            assert abs(traj[0].alpha @ traj[0].gamma) <= 1e-8 * np.linalg.norm(
                traj[0].gamma)

    def test_degenerate_locus_fails_gracefully(self):
        # rays of this fan run into a self-intersection line of the cone;
        # the trace must surface an integration error with the last state
        m = qm.random_quadratic_map(4, seed=0)
        rng = np.random.default_rng(2)
        pts = sample_boundary_points(m, rng, 1, radius=1.0)
        surf = srf.SsbSurface(m)
        with pytest.raises(num.IntegrationError) as exc:
            srf.geodesic_fan(surf, pts[0].v, 6, 0.8, rtol=1e-10)
        assert exc.value.y is not None


class TestStereographic:
    def test_equator(self):
        pts = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                        [np.sqrt(0.5), -np.sqrt(0.5), 0.0]])
        out, mask = srf.stereographic_project(pts)
        np.testing.assert_allclose(out, pts[:, :2], atol=1e-15)
        assert not mask.any()

    def test_south_pole_to_origin(self):
        out, mask = srf.stereographic_project(np.array([[0.0, 0.0, -1.0]]))
        np.testing.assert_allclose(out, [[0.0, 0.0]])
        assert not mask.any()

    def test_north_pole_flagged(self):
        out, mask = srf.stereographic_project(np.array([[0.0, 0.0, 1.0]]))
        assert mask.all()
        assert np.isinf(out).all()

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((50, 4))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        pts = pts[pts[:, -1] < 0.9]
        proj, mask = srf.stereographic_project(pts)
        back = srf.stereographic_inverse(proj)
        np.testing.assert_allclose(back, pts, atol=1e-12)


class TestSurfaceForms:
    def test_sphere_principal_curvatures(self):
        s = srf.Sphere()
        kappas = srf.weingarten_eigenvalues(s, np.array([0.0, 1.0, 0.0]))
        np.testing.assert_allclose(kappas, [-1.0, -1.0], atol=1e-12)

    def test_cylinder_curvatures(self):
        s = Cylinder(2.0)
        kappas = sorted(srf.weingarten_eigenvalues(s, np.array([2.0, 0, 0])),
                        key=abs)
        assert kappas[0] == pytest.approx(0.0, abs=1e-12)
        assert kappas[1] == pytest.approx(-0.5, abs=1e-12)


import ssbgeo.numerics as num  # noqa: E402 (used in codim rank test)
