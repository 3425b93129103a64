import numpy as np
import pytest

from spindle_radon.errors import DivergenceError, SizeLimitError, UnsupportedFamilyError
from spindle_radon.geometry import QuadratureSpec
from spindle_radon.phantoms import Ball, GaussianBlob, PhantomSpec, rasterize
from spindle_radon.recon import (ExperimentSetup, LandweberConfig, LinearOperator, artifact_experiment,
                                 build_dense_operator, estimate_operator_norm, landweber)
from spindle_radon.transforms import RestrictedParams, SurfaceProjector
from spindle_radon.volume import GridSpec, VoxelGrid

QUAD = QuadratureSpec(24, 32)


def params(rng, n):
    return [RestrictedParams(p, x, y) for p, x, y in
            zip(rng.uniform(0.5, 12, n), rng.uniform(-1, 1, n), rng.uniform(-1, 1, n))]


def apple_grid(n):
    return GridSpec.from_bounds(n, (-1, -1, 1), (1, 1, 3))


def test_norm_of_identity():
    op = LinearOperator.from_matrix(np.eye(5))
    assert float(estimate_operator_norm(op)) == pytest.approx(1.0, abs=1e-6)


def test_norm_of_diagonal():
    op = LinearOperator.from_matrix(np.diag([3.0, 1.0]))
    assert float(estimate_operator_norm(op)) == pytest.approx(3.0, rel=1e-6)


def test_norm_matches_dense_svd():
    rng = np.random.default_rng(0)
    spec = apple_grid(6)
    plist = params(rng, 60)
    M = build_dense_operator(plist, "apple", QUAD, spec)
    est = estimate_operator_norm(LinearOperator.from_projector(SurfaceProjector(plist, "apple", QUAD, 1), spec),
                                 iters=100)
    assert est.converged
    assert est.value == pytest.approx(np.linalg.norm(M, 2), rel=1e-4)
    assert np.all(np.diff(est.history) >= -1e-12 * est.value)


def test_norm_warns_when_not_converged():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((30, 30))
    with pytest.warns(RuntimeWarning):
        est = estimate_operator_norm(LinearOperator.from_matrix(M), iters=2, rtol=1e-12)
    assert not est.converged


@pytest.mark.parametrize("n,kind", [(4, "apple"), (5, "lemon")])
def test_dense_columns_equal_forward_of_unit_vectors(n, kind):
    rng = np.random.default_rng(n)
    spec = apple_grid(n) if kind == "apple" else GridSpec.cube(n)
    plist = params(rng, 25)
    M = build_dense_operator(plist, kind, QUAD, spec)
    proj = SurfaceProjector(plist, kind, QUAD, threads=1)
    for j in rng.choice(spec.size, 12, replace=False):
        e = np.zeros(spec.size)
        e[j] = 1.0
        np.testing.assert_allclose(M[:, j], proj.forward(VoxelGrid(spec, e.reshape(spec.dims))),
                                   rtol=1e-12, atol=1e-14)


def test_dense_transpose_equals_adjoint():
    rng = np.random.default_rng(2)
    spec = apple_grid(12)
    plist = params(rng, 60)
    M = build_dense_operator(plist, "apple", QUAD, spec)
    d = rng.standard_normal(len(plist))
    adj = SurfaceProjector(plist, "apple", QUAD, 1).adjoint(d, spec).values.reshape(-1)
    dense = M.T @ d
    assert np.linalg.norm(adj - dense) <= 1e-10 * np.linalg.norm(dense)


def test_dense_dot_product_exact():
    rng = np.random.default_rng(3)
    spec = apple_grid(5)
    M = build_dense_operator(params(rng, 30), "apple", QUAD, spec)
    f, d = rng.standard_normal(spec.size), rng.standard_normal(30)
    a, b = (M @ f) @ d, f @ (M.T @ d)
    assert abs(a - b) <= 1e-12 * abs(a)


def test_dense_size_limits():
    with pytest.raises(SizeLimitError):
        build_dense_operator([RestrictedParams(1.0)], "apple", QUAD, apple_grid(13))
    with pytest.raises(SizeLimitError):
        build_dense_operator([RestrictedParams(1.0)] * 501, "apple", QUAD, apple_grid(4))


def test_landweber_zero_data():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((10, 6))
    rep = landweber(np.zeros(10), LinearOperator.from_matrix(M), LandweberConfig(iterations=20))
    assert not rep.volume.any()
    assert rep.residual_norms == [0.0] * 21


@pytest.mark.parametrize("scale", [0.5, 1.0, 1.9])
def test_landweber_residual_monotone(scale):
    rng = np.random.default_rng(5)
    spec = apple_grid(6)
    plist = params(rng, 80)
    op = LinearOperator.from_projector(SurfaceProjector(plist, "apple", QUAD, 1), spec)
    d = rng.standard_normal(len(plist))
    rep = landweber(d, op, LandweberConfig(scale, 40))
    assert np.all(np.diff(rep.residual_norms) <= 1e-12 * rep.residual_norms[0])


@pytest.mark.parametrize("n,kind", [(2, "apple"), (3, "lemon")])
def test_landweber_reaches_least_squares(n, kind):
    rng = np.random.default_rng(0)
    spec = apple_grid(n) if kind == "apple" else GridSpec.cube(n, 0.6)
    plist = params(rng, 40 * (n - 1))
    M = build_dense_operator(plist, kind, QUAD, spec)
    d = M @ rng.random(spec.size) + 0.01 * rng.standard_normal(len(plist))
    x_ls = np.linalg.lstsq(M, d, rcond=None)[0]  # minimum-norm solution, the limit from x0 = 0
    rep = landweber(d, LinearOperator.from_matrix(M, spec.dims), LandweberConfig(1.9, 20_000),
                    norm=np.linalg.norm(M, 2))
    assert np.linalg.norm(rep.volume.ravel() - x_ls) <= 1e-3 * np.linalg.norm(x_ls)


def test_landweber_consistent_data_on_8_cube():
    spec = apple_grid(8)
    phantom = PhantomSpec([GaussianBlob((0.0, 0.0, 2.0), 0.3)])
    truth = rasterize(phantom, spec)
    plist = ExperimentSetup(n_p=8, n_xy=7).params()
    proj = SurfaceProjector(plist, "apple", QUAD, 1)
    d = proj.forward(truth)
    rep = landweber(d, LinearOperator.from_projector(proj, spec), LandweberConfig(1.9, 50))
    assert rep.residual_norms[-1] < 0.05 * rep.residual_norms[0]
    assert np.all(np.diff(rep.residual_norms) <= 0)


def test_landweber_nonnegativity():
    rng = np.random.default_rng(7)
    M = rng.standard_normal((20, 8))
    rep = landweber(rng.standard_normal(20), LinearOperator.from_matrix(M), LandweberConfig(1.0, 30, True))
    assert rep.volume.min() >= 0.0


def test_landweber_detects_divergence():
    M = np.diag([2.0, 1.0])
    with pytest.raises(DivergenceError):
        landweber(np.ones(2), LinearOperator.from_matrix(M), LandweberConfig(1.9, 10), norm=1.0)


@pytest.mark.parametrize("bad", [0.0, 2.0, -1.0])
def test_step_scale_range(bad):
    with pytest.raises(ValueError):
        LandweberConfig(step_scale=bad)


def test_landweber_rejects_nonfinite_data():
    with pytest.raises(ValueError):
        landweber(np.array([1.0, np.nan]), LinearOperator.from_matrix(np.eye(2)))


def test_residual_csv_and_text():
    rep = landweber(np.ones(3), LinearOperator.from_matrix(np.eye(3)), LandweberConfig(1.0, 3), norm=1.0)
    assert rep.residual_csv().splitlines()[0] == "iteration,residual"
    assert len(rep.residual_csv().splitlines()) == 5
    assert "ratio: undefined" in rep.to_text()


def test_artifact_experiment_zero_phantom_ratio_undefined():
    rep = artifact_experiment(PhantomSpec([]), "Restricted_Apple")
    assert np.isnan(rep.ratio)
    assert "ratio: undefined" in rep.to_text()


def test_artifact_experiment_rejects_full_family():
    with pytest.raises(UnsupportedFamilyError):
        artifact_experiment(PhantomSpec([Ball((0, 0, 2), 0.2)]), "Full7D_Apple")


def test_artifact_experiment_small_setup_runs():
    setup = ExperimentSetup(grid_n=10, n_p=6, n_xy=5, quad=QuadratureSpec(16, 24))
    rep = artifact_experiment(PhantomSpec([Ball((0.2, -0.1, 1.9), 0.2)]), "Restricted_Apple",
                              LandweberConfig(iterations=5), setup)
    assert np.isfinite(rep.ratio) and rep.notes[0].startswith("ring voxels:")
    assert len(rep.residual_norms) == 6
