import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spindle_radon import microlocal as ml
from spindle_radon.errors import InvalidSampleError, UnsupportedFamilyError
from spindle_radon.geometry import TorusParams, frame_rows, psi
from spindle_radon.transforms import RestrictedParams, restricted_nodes
from spindle_radon.volume import GridSpec
from spindle_radon.verify import full_phase_closed, full_phase_fd, random_restricted_samples


def cylinder(sigma=1.3, t=0.8, z=0.7, beta=0.6, theta=0.9, alpha=0.4):
    return ml.cylinder_sample(sigma, np.array([0.1, 0.2, -0.3]), alpha, beta, ml.CylinderPoint(theta, z, t))


def test_dt_example():
    c = ml.CanonicalSampleFull(1.0, 1.0, np.zeros(3), 0.0, 0.0, np.array([3.0, 0.0, 0.5]))
    assert ml.phase_derivatives_full("apple", c).dT[0] == -4.0


@pytest.mark.parametrize("kind", ["apple", "lemon"])
def test_grad_x0_is_minus_grad_x(kind):
    c = ml.random_full_samples(kind, 200, np.random.default_rng(0))
    d = ml.phase_derivatives_full(kind, c)
    assert np.array_equal(d.gradX0, -d.gradX)


def test_cylinder_grad_x0_is_axial():
    c = cylinder()
    r3 = frame_rows(c.alpha, c.beta)[0, 2]
    np.testing.assert_allclose(ml.phase_derivatives_full("apple", c).gradX0[0], -2 * 1.3 * 0.7 * r3, rtol=1e-13)


def test_cylinder_angle_derivatives():
    sig, t, z, beta, theta = 1.3, 0.8, 0.7, 0.6, 0.9
    c = cylinder(sig, t, z, beta, theta)
    d = ml.phase_derivatives_full("apple", c)
    # the alpha derivative carries the sign that central differences give
    assert d.dAlpha[0] == pytest.approx(2 * sig * t * z * np.cos(theta) * np.sin(beta), rel=1e-12)
    assert d.dBeta[0] == pytest.approx(-2 * sig * t * z * np.sin(theta), rel=1e-12)
    fd = full_phase_fd("apple", c)[0]
    closed = full_phase_closed("apple", c)[0]
    np.testing.assert_allclose(fd, closed, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("kind", ["apple", "lemon"])
def test_sigma_homogeneity(kind):
    rng = np.random.default_rng(1)
    c = ml.random_full_samples(kind, 100, rng)
    lam = 2.5
    a = ml.left_projection_full(kind, c)
    b = ml.left_projection_full(kind, ml.CanonicalSampleFull(lam * c.sigma, c.t, c.x0, c.alpha, c.beta, c.x))
    deriv, base = list(ml.PROJECTION_DERIVATIVE_COLUMNS), list(ml.PROJECTION_BASE_COLUMNS)
    np.testing.assert_allclose(b[:, deriv], lam * a[:, deriv], rtol=1e-14)
    assert np.array_equal(b[:, base], a[:, base])


def test_det_gradx0_examples():
    c = ml.CanonicalSampleFull(0.5, 1.0, np.zeros(3), 0.0, 0.0, np.array([2.0, 0.0, 0.3]))
    assert ml.det_gradx0_block("apple", c)[0] == pytest.approx(-0.5, rel=1e-15)
    assert np.linalg.det(ml.gradx0_jacobian("apple", c))[0] == pytest.approx(-0.5, rel=1e-12)
    on_cyl = cylinder()
    assert abs(ml.det_gradx0_block("apple", on_cyl)[0]) < 1e-14


def test_lemon_det_gradx0_sign():
    c = ml.random_full_samples("lemon", 1000, np.random.default_rng(2))
    det = ml.det_gradx0_block("lemon", c)
    assert np.all(det != 0)
    assert np.array_equal(np.sign(det), -np.sign(c.sigma ** 3))


def test_det_m_cylinder_example():
    c = cylinder(sigma=1.0, t=1.0, z=1.0, beta=np.pi / 4, theta=0.0)
    assert ml.det_M_cylinder(c)[0] == pytest.approx(-16 / np.sqrt(2), rel=1e-12)
    assert ml.det_M_cylinder_closed(c)[0] == pytest.approx(-16 / np.sqrt(2), rel=1e-14)


def test_det_m_degenerate_height():
    c = cylinder(z=0.0)
    assert abs(ml.det_M_cylinder(c)[0]) < 1e-12


def test_alpha_form_vanishes_at_quarter_turn():
    assert abs(ml.alpha_quadratic_form(cylinder(theta=np.pi / 2))[0]) < 1e-14


def test_printed_block_requires_cylinder():
    c = ml.random_full_samples("apple", 5, np.random.default_rng(3))
    with pytest.raises(InvalidSampleError):
        ml.m_matrix_printed(c)


def test_true_minors_never_vanish_together():
    rng = np.random.default_rng(4)
    th = rng.uniform(0, 2 * np.pi, 500)
    c = ml.cylinder_sample(1.0, np.zeros(3), 0.3, rng.uniform(0.05, 1.5, 500),
                           ml.CylinderPoint(th, rng.uniform(0.2, 1.0, 500), 0.7))
    a, b = ml.cylinder_minors_closed(c)
    assert np.all(np.hypot(a, b) > 0)


def restricted_example():
    return ml.CanonicalSampleRestricted(1.0, 0.0, 0.0, np.array([1.0, 0.0, 2.0]))


def test_restricted_projection_example():
    np.testing.assert_array_equal(ml.restricted_projection("apple", restricted_example())[0],
                                  [1, 0, 0, 16, -16, 0])


def test_restricted_determinant_example():
    c = restricted_example()
    assert ml.det_restricted_jacobian("apple", c)[0] == -16384.0
    fd = np.linalg.det(ml.restricted_projection_fd_jacobian("apple", c))[0]
    assert fd == pytest.approx(-16384.0, rel=1e-5)


def test_restricted_determinant_zero_sets():
    rho = 0.7
    hyper = ml.CanonicalSampleRestricted(1.0, 0.0, 0.0, np.array([rho, 0.0, np.sqrt(1 + rho ** 2)]))
    assert abs(ml.det_restricted_jacobian("apple", hyper)[0]) < 1e-12
    flat = ml.CanonicalSampleRestricted(1.0, 0.0, 0.0, np.array([0.4, 0.1, 0.0]))
    assert ml.det_restricted_jacobian("lemon", flat)[0] == 0.0


@settings(max_examples=60)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 3), st.floats(0, 2 * np.pi))
def test_restricted_projection_is_even_in_z(x0, y0, rho, th):
    x = np.array([x0 + rho * np.cos(th), y0 + rho * np.sin(th), 0.8])
    up = ml.CanonicalSampleRestricted(1.1, x0, y0, x)
    down = ml.CanonicalSampleRestricted(1.1, x0, y0, x * [1, 1, -1])
    assert np.array_equal(ml.restricted_projection("lemon", up), ml.restricted_projection("lemon", down))


@pytest.mark.parametrize("kind", ["apple", "lemon"])
def test_p_recovered_on_surface(kind):
    rp = RestrictedParams(6.0, 0.3, -0.2)
    torus = rp.to_torus(kind)
    pts, _ = restricted_nodes(rp, kind)
    c = ml.CanonicalSampleRestricted(1.0, rp.x0, rp.y0, pts)
    f = ml.restricted_fields(c)
    np.testing.assert_allclose(f.h ** 2 / f.g4, rp.p, rtol=1e-9)
    assert np.abs(psi(torus, pts)).max() < 1e-9


def test_amplitude_example_and_phase_gradient():
    c = restricted_example()
    assert ml.amplitude_restricted(c)[0] == pytest.approx(8 * np.sqrt(20), rel=1e-14)
    grad = ml.phase_derivatives_restricted(c).gradX
    assert ml.amplitude_restricted(c)[0] == pytest.approx(np.linalg.norm(grad), rel=1e-14)


@pytest.mark.parametrize("kind", ["apple", "lemon"])
def test_amplitude_positive_and_matches_gradient(kind):
    rng = np.random.default_rng(5)
    c = ml.random_full_samples(kind, 2000, rng)
    a = ml.amplitude_full(kind, c)
    d = ml.phase_derivatives_full(kind, ml.CanonicalSampleFull(1.0, c.t, c.x0, c.alpha, c.beta, c.x))
    assert np.all(a > 0)
    np.testing.assert_allclose(a, np.linalg.norm(d.gradX, axis=1), rtol=1e-14)
    r = random_restricted_samples(kind, 2000, rng)
    assert np.all(ml.amplitude_restricted(r) > 0)


def test_amplitude_dispatch():
    p = TorusParams(4, 1, kind="lemon")
    x = np.array([[1.0, 0.2, 0.5]])
    c = ml.CanonicalSampleFull(1.0, 1.0, np.zeros(3), 0.0, 0.0, x)
    assert ml.amplitude(p, x)[0] == ml.amplitude_full("lemon", c)[0]
    assert ml.amplitude(RestrictedParams(4.0), np.array([[1.0, 0.0, 2.0]]))[0] == pytest.approx(8 * np.sqrt(20))


def test_sylvester_examples():
    assert ml.sylvester_check(np.zeros((3, 2)), np.zeros((2, 3))) == (1.0, 1.0)
    u, v = np.array([[1.0], [2.0], [3.0]]), np.array([[0.5, -1.0, 2.0]])
    a, b = ml.sylvester_check(u, v)
    assert a == pytest.approx(1 + (v @ u).item(), rel=1e-14) and b == pytest.approx(a, rel=1e-14)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1))
def test_sylvester_random_pairs(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((3, 2)), rng.standard_normal((2, 3))
    a, b = ml.sylvester_check(A, B)
    assert abs(a - b) <= 1e-12 * max(abs(a), abs(b), 1.0)


# --- Bolker scans at reduced size -------------------------------------------

def test_restricted_lemon_upper_half_injective():
    rep = ml.bolker_scan("Restricted_Lemon", "z>0", 20_000)
    assert rep.passed and rep.min_immersion > 0


def test_restricted_lemon_symmetric_collisions_are_reflections():
    rep = ml.bolker_scan("Restricted_Lemon", "z-sym", 20_000)
    assert rep.n_collisions > 0 and rep.all_collisions_are_reflections
    assert rep.expectation_met and not rep.passed


def test_restricted_apple_regions():
    assert ml.bolker_scan("Restricted_Apple", "u>2", 20_000).passed
    hyper = ml.bolker_scan("Restricted_Apple", "u=2", 5_000)
    assert hyper.max_immersion <= 1e-8 and hyper.expectation_met


@pytest.mark.parametrize("family", ["Full7D_Apple", "Full7D_Lemon"])
def test_full_family_scan(family):
    rep = ml.bolker_scan(family, n_samples=1000)
    assert rep.passed and rep.min_immersion >= 1e-6


def test_bolker_report_text_is_deterministic():
    a = ml.bolker_scan("Restricted_Lemon", "z-sym", 2000, seed=3).to_text()
    b = ml.bolker_scan("Restricted_Lemon", "z-sym", 2000, seed=3).to_text()
    assert a == b and "expectation_met: true" in a


def test_bolker_rejects_unknown_region():
    with pytest.raises(UnsupportedFamilyError):
        ml.bolker_scan("Full7D_Lemon", "cylinder")


def test_find_collisions_detects_planted_pair():
    rng = np.random.default_rng(6)
    out = rng.standard_normal((100, 4))
    out[70] = out[12]
    pts = rng.standard_normal((100, 3))
    np.testing.assert_array_equal(ml.find_collisions(out, pts), [[12, 70]])


# --- artifact prediction -----------------------------------------------------

def test_restricted_apple_rings():
    arts = ml.predict_artifacts("Restricted_Apple", RestrictedParams(4.0, 0.3, -0.2))
    assert arts.ring_z == pytest.approx((np.sqrt(2), -np.sqrt(2)))
    for ring in arts.rings:
        assert ring.radius == 1.0
        np.testing.assert_allclose(ring.center[:2], [0.3, -0.2])


def test_restricted_ring_points_on_surface_and_hyperboloid():
    rp = RestrictedParams(4.0, 0.3, -0.2)
    pts = ml.predict_artifacts("Restricted_Apple", rp).ring_points(50)
    assert np.abs(psi(rp.to_torus("apple"), pts)).max() < 1e-10
    f = ml.restricted_fields(ml.CanonicalSampleRestricted(1.0, rp.x0, rp.y0, pts))
    assert np.abs(f.u - 2.0).max() < 1e-10


def test_full_apple_ring_points_on_cylinder():
    p = TorusParams(3.0, 0.7, (0.5, -1.0, 2.0), 1.2, 0.8, "apple")
    pts = ml.predict_artifacts("Full7D_Apple", p).ring_points(40)
    rows = frame_rows(p.alpha, p.beta)
    local = (pts - p.center) @ rows.T
    np.testing.assert_allclose(np.hypot(local[:, 0], local[:, 1]), p.t, rtol=1e-12)
    assert np.abs(psi(p, pts)).max() < 1e-10


def test_lemon_prediction_is_empty():
    arts = ml.predict_artifacts("Restricted_Lemon", RestrictedParams(1.0))
    assert arts.empty and arts.kind is ml.ArtifactKind.Z_REFLECTION


def test_ring_mask_hits_ring_voxels():
    arts = ml.predict_artifacts("Restricted_Apple", RestrictedParams(4.0))
    spec = GridSpec.from_bounds(20, (-1.5, -1.5, 0.5), (1.5, 1.5, 2.5))
    mask = arts.mask(spec, 1.0)
    assert mask.any()
    assert np.all(arts.rings[0].distance(spec.centers()[mask]) <= max(spec.spacing) + 1e-12)


def test_cone_angle():
    assert ml.cone_angle(1.0) == pytest.approx(60.0, abs=1e-12)
    assert ml.cone_angle(0.0) == 0.0
    assert ml.cone_angle(1e6) == pytest.approx(90.0, abs=1e-3)
    with pytest.raises(ValueError):
        ml.cone_angle(-0.1)
