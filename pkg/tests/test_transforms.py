import numpy as np
import pytest

from spindle_radon import kernels
from spindle_radon.errors import InvalidParamsError
from spindle_radon.geometry import QuadratureSpec, TorusParams, in_parameter_set_Y, surface_area
from spindle_radon.transforms import (DataGrid, RestrictedParams, SurfaceProjector, adjoint_project,
                                      apple_transform, forward_project, lemon_transform, restricted_nodes,
                                      restricted_transform, smoothed_delta_integral, surface_transform)
from spindle_radon.volume import GridSpec, VoxelGrid

QUAD = QuadratureSpec(24, 32)


def random_full_params(rng, n, kind="apple"):
    """Tori whose singular points avoid the unit ball and which still cut it."""
    out = []
    while len(out) < n:
        t = rng.uniform(0.3, 1.0)
        s = t * t + rng.uniform(1.2, 3.0) ** 2
        axis_dir = rng.uniform(0, 2 * np.pi), rng.uniform(0, np.pi / 2)
        p = TorusParams(s, t, rng.uniform(-0.3, 0.3, 3), *axis_dir, kind)
        if in_parameter_set_Y(p):
            out.append(p)
    return out


def random_restricted_params(rng, n):
    return [RestrictedParams(p, x, y) for p, x, y in
            zip(rng.uniform(0.5, 12, n), rng.uniform(-0.8, 0.8, n), rng.uniform(-0.8, 0.8, n))]


def relerr(a, b):
    return abs(a - b) / max(abs(a), abs(b))


@pytest.mark.parametrize("kind", ["apple", "lemon"])
def test_constant_field_gives_surface_area(kind):
    p = TorusParams(4, 1, kind=kind)
    val = surface_transform(lambda x: np.ones(len(x)), p, QuadratureSpec(256, 256), clip=kernels.CLIP_NONE)
    assert relerr(val, surface_area(p)) < 1e-3


def test_zero_field_gives_zero():
    p = TorusParams(4, 1)
    assert apple_transform(lambda x: np.zeros(len(x)), p) == 0.0
    assert lemon_transform(lambda x: np.zeros(len(x)), p) == 0.0
    assert restricted_transform(lambda x: np.zeros(len(x)), RestrictedParams(4), "apple") == 0.0


def test_disjoint_ball_gives_zero():
    p = TorusParams(4, 1, kind="lemon")
    far = lambda x: (np.linalg.norm(x - np.array([0.0, 0.0, 0.5]), axis=1) < 0.2).astype(float)
    assert surface_transform(far, p, QUAD, clip=kernels.CLIP_NONE) == 0.0


def test_invalid_params_rejected_for_clipped_transform():
    with pytest.raises(InvalidParamsError):
        apple_transform(lambda x: np.ones(len(x)), TorusParams(1.21, 1))


@pytest.mark.parametrize("kind,sign", [("apple", 1.0), ("lemon", -1.0)])
def test_restricted_nodes_satisfy_phase_identities(kind, sign):
    rp = RestrictedParams(5.0, 0.2, -0.3)
    pts, _ = restricted_nodes(rp, kind, QuadratureSpec(30, 20))
    dx, dy, z = pts[:, 0] - rp.x0, pts[:, 1] - rp.y0, pts[:, 2]
    rho = np.hypot(dx, dy)
    h = rho ** 2 + z ** 2 - 1.0
    assert np.abs(h - sign * 2 * rp.t * rho).max() < 1e-9
    assert np.abs(h ** 2 / rho ** 2 - rp.p).max() < 1e-9 * rp.p


def test_restricted_apple_clip_is_z_above_one():
    pts, _ = restricted_nodes(RestrictedParams(3.0), "apple", QUAD)
    assert len(pts) and pts[:, 2].min() > 1.0


@pytest.mark.parametrize("kind", ["apple", "lemon"])
def test_smoothed_delta_oracle_matches_quadrature(kind):
    f = lambda x: np.exp(-np.sum((x - np.array([0.3, -0.2, 0.4])) ** 2, axis=-1)) * (1 + 0.5 * x[..., 0])
    p = TorusParams(0.36, 0.2, (0.05, -0.1, 0.02), 0.7, 0.5, kind)
    oracle = smoothed_delta_integral(f, p, 1e-2)
    quad = surface_transform(f, p, QuadratureSpec(128, 128), clip=kernels.CLIP_NONE)
    assert relerr(oracle, quad) < 1e-2


def test_empty_param_list_gives_empty_data():
    spec = GridSpec.cube(8)
    dg = forward_project(VoxelGrid.zeros(spec), [], "apple", QUAD)
    assert len(dg) == 0 and dg.values.shape == (0,)
    assert np.all(adjoint_project(np.zeros(0), [], "apple", QUAD, spec).values == 0)


def test_batch_of_one_equals_scalar_transform():
    rng = np.random.default_rng(1)
    spec = GridSpec.cube(12)
    vol = VoxelGrid(spec, rng.random(spec.dims))
    p = random_full_params(rng, 1)[0]
    batch = forward_project(vol, [p], None, QUAD).values[0]
    assert batch == surface_transform(vol, p, QUAD)


def test_constant_volume_matches_clipped_area():
    p = TorusParams(2, 0.5, (0, 0, 0), kind="lemon")
    spec = GridSpec.cube(24, 1.5)
    vol = VoxelGrid(spec, np.full(spec.dims, 2.0))
    quad = QuadratureSpec(128, 128)
    exact = 2.0 * surface_transform(lambda x: np.ones(len(x)), p, quad)
    assert exact > 0
    assert relerr(forward_project(vol, [p], None, quad).values[0], exact) < 1e-12


def test_zero_data_gives_zero_volume():
    rng = np.random.default_rng(2)
    plist = random_restricted_params(rng, 10)
    out = adjoint_project(np.zeros(10), plist, "apple", QUAD, GridSpec.from_bounds(8, (-1, -1, 1), (1, 1, 3)))
    assert not out.values.any()


def test_single_node_splat_weights_sum_to_node_weight():
    spec = GridSpec.cube(6)
    out = np.zeros(spec.dims)
    pt = np.array([[0.13, -0.27, 0.41]])
    kernels.splat_points(out, spec.origin, spec.spacing, pt, np.array([0.75]))
    assert out.sum() == pytest.approx(0.75, rel=1e-15)


@pytest.mark.parametrize("n,kind", [(8, "apple"), (12, "lemon"), (16, "apple")])
def test_dot_product_restricted(n, kind):
    rng = np.random.default_rng(n)
    spec = GridSpec.from_bounds(n, (-1, -1, 1), (1, 1, 3)) if kind == "apple" else GridSpec.cube(n)
    plist = random_restricted_params(rng, 60)
    proj = SurfaceProjector(plist, kind, QUAD, threads=1)
    f = rng.standard_normal(spec.dims)
    d = rng.standard_normal(len(plist))
    lhs = np.dot(proj.forward(VoxelGrid(spec, f)), d)
    rhs = np.vdot(f, proj.adjoint(d, spec).values)
    assert relerr(lhs, rhs) <= 1e-6


def test_dot_product_full_family():
    rng = np.random.default_rng(5)
    spec = GridSpec.cube(10)
    plist = random_full_params(rng, 50, "lemon") + random_full_params(rng, 50, "apple")
    proj = SurfaceProjector(plist, None, QUAD, threads=1)
    f = rng.standard_normal(spec.dims)
    d = rng.standard_normal(len(plist))
    assert relerr(np.dot(proj.forward(VoxelGrid(spec, f)), d), np.vdot(f, proj.adjoint(d, spec).values)) <= 1e-6


def test_restricted_kind_required():
    with pytest.raises(InvalidParamsError):
        SurfaceProjector([RestrictedParams(1.0)], None)


def test_invalid_restricted_param_reports_index():
    with pytest.raises(InvalidParamsError) as exc:
        SurfaceProjector([RestrictedParams(1.0), RestrictedParams(-1.0)], "apple")
    assert exc.value.index == 1


def test_forward_independent_of_thread_count():
    rng = np.random.default_rng(3)
    spec = GridSpec.from_bounds(10, (-1, -1, 1), (1, 1, 3))
    vol = VoxelGrid(spec, rng.random(spec.dims))
    plist = random_restricted_params(rng, 40)
    a = SurfaceProjector(plist, "apple", QUAD, threads=1).forward(vol)
    b = SurfaceProjector(plist, "apple", QUAD, threads=4).forward(vol)
    assert np.array_equal(a, b)


def test_adjoint_reproducible_for_fixed_thread_count():
    rng = np.random.default_rng(4)
    spec = GridSpec.from_bounds(10, (-1, -1, 1), (1, 1, 3))
    plist = random_restricted_params(rng, 40)
    d = rng.standard_normal(40)
    proj = SurfaceProjector(plist, "apple", QUAD, threads=3)
    assert proj.adjoint(d, spec) == proj.adjoint(d, spec)
    single = SurfaceProjector(plist, "apple", QUAD, threads=1).adjoint(d, spec).values
    np.testing.assert_allclose(proj.adjoint(d, spec).values, single, rtol=1e-12, atol=1e-14)


def test_data_grid_rejects_length_mismatch():
    with pytest.raises(ValueError):
        DataGrid([RestrictedParams(1.0)], [1.0, 2.0])
