import numpy as np
import pytest

from ssbgeo import ingest
from ssbgeo import quadmap as qm
from ssbgeo import ssb


def sample_boundary_points(m, rng, count, max_tries=200, radius=2.0,
                           method="poly"):
    """Regular boundary points found by random line searches."""
    pts = []
    tries = 0
    while len(pts) < count and tries < max_tries:
        tries += 1
        a = radius * rng.standard_normal(m.n)
        b = rng.standard_normal(m.n)
        try:
            roots = qm.locate_ssb_on_line(m, a, b, method=method)
        except FloatingPointError:
            continue
        if roots.identically_zero:
            continue
        for t in roots:
            v = a + t * b
            if np.linalg.norm(v) < 0.2:
                continue
            try:
                pt = ssb.boundary_point(m, v, tol_ssb=1e-8)
            except (ssb.NotOnSurfaceError, qm.EigenConvergenceError):
                continue
            if pt.degenerate or pt.eigen.complex_pair:
                continue
            if abs(pt.eigen.k @ pt.eigen.ktilde) < 1e-4:
                continue  # near-defective eigenstructure
            pts.append(pt)
            if len(pts) >= count:
                break
    if len(pts) < count:
        raise RuntimeError(f"only found {len(pts)} boundary points")
    return pts


@pytest.fixture(scope="session")
def three_bus_map():
    net = ingest.three_bus_network()
    qmap, layout, _ = ingest.network_map(net)
    return qmap, layout
