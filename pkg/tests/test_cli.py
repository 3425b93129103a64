import numpy as np
import pytest

from spindle_radon import cli
from spindle_radon.formats import load_data, save_data, save_params
from spindle_radon.phantoms import Ball, PhantomSpec, save_phantom
from spindle_radon.transforms import RestrictedParams
from spindle_radon.verify import SuiteReport
from spindle_radon.volume import GridSpec, VoxelGrid, load_volume, save_volume

GRID = ["--grid", "8,8,8", "--bounds", "-1,-1,1,1,1,3"]
QUAD = ["--quad", "16,24"]


@pytest.fixture
def files(tmp_path):
    save_phantom(PhantomSpec([Ball((0.1, 0.0, 2.0), 0.4)]), tmp_path / "ph.txt")
    rng = np.random.default_rng(0)
    plist = [RestrictedParams(p, x, y) for p, x, y in
             zip(rng.uniform(1, 8, 20), rng.uniform(-0.5, 0.5, 20), rng.uniform(-0.5, 0.5, 20))]
    save_params(tmp_path / "p.csv", plist, "apple")
    return tmp_path


def test_phantom_project_adjoint_recon(files):
    t = files
    assert cli.run(["phantom", "--spec", str(t / "ph.txt"), *GRID, "--out", str(t / "v.raw")]) == 0
    vol = load_volume(t / "v.raw")
    assert vol.dims == (8, 8, 8) and vol.values.max() == 1.0
    assert cli.run(["project", "--vol", str(t / "v.raw"), "--params", str(t / "p.csv"), *QUAD,
                    "--out", str(t / "d.csv")]) == 0
    data = load_data(t / "d.csv")
    assert data.shape == (20,) and data.max() > 0
    assert cli.run(["adjoint", "--data", str(t / "d.csv"), "--params", str(t / "p.csv"), *QUAD, *GRID,
                    "--out", str(t / "a.raw")]) == 0
    adj = load_volume(t / "a.raw")
    # adjoint w.r.t. the plain voxel sum; float32 storage limits agreement
    assert data @ data == pytest.approx(np.vdot(vol.values, adj.values), rel=1e-5)
    assert cli.run(["recon", "--data", str(t / "d.csv"), "--params", str(t / "p.csv"), *QUAD, *GRID,
                    "--iters", "5", "--out", str(t / "r.raw"), "--report", str(t / "r.txt")]) == 0
    assert load_volume(t / "r.raw").dims == (8, 8, 8)
    assert (t / "r.txt.residuals.csv").read_text().splitlines()[0] == "iteration,residual"
    assert "iterations: 5" in (t / "r.txt").read_text()


def test_empty_params_give_header_only(tmp_path):
    save_volume(VoxelGrid.zeros(GridSpec.cube(4)), tmp_path / "v.raw")
    (tmp_path / "p.csv").write_text("")
    assert cli.run(["project", "--vol", str(tmp_path / "v.raw"), "--params", str(tmp_path / "p.csv"),
                    "--kind", "apple", "--out", str(tmp_path / "d.csv")]) == 0
    assert (tmp_path / "d.csv").read_text().strip() == "index,value"


def test_bad_params_exit_invalid(tmp_path, capsys):
    save_volume(VoxelGrid.zeros(GridSpec.cube(4)), tmp_path / "v.raw")
    (tmp_path / "p.csv").write_text("kind,p,x0,y0\napple,-1,0,0\n")
    code = cli.run(["project", "--vol", str(tmp_path / "v.raw"), "--params", str(tmp_path / "p.csv"),
                    "--out", str(tmp_path / "d.csv")])
    assert code == cli.EXIT_INVALID
    assert capsys.readouterr().err.startswith("error code=")


def test_missing_input_file(tmp_path, capsys):
    assert cli.run(["project", "--vol", str(tmp_path / "nope.raw"), "--params", "x", "--out", "y"]) == 1
    assert "error code=" in capsys.readouterr().err


def test_unknown_subcommand():
    assert cli.run(["frobnicate"]) == cli.EXIT_INVALID


def test_verify_exit_codes(capsys, monkeypatch):
    assert cli.run(["verify", "--suite", "geometry", "--samples", "1000", "--seed", "7"]) == cli.EXIT_OK
    assert "status: PASS" in capsys.readouterr().out
    monkeypatch.setattr(cli, "run_suite", lambda *a: SuiteReport("geometry", 1, 0, [cli_fail_check()]))
    assert cli.run(["verify", "--suite", "geometry"]) == cli.EXIT_SUITE


def cli_fail_check():
    from spindle_radon.verify import Check
    return Check("broken", 1, 1.0, 0.0)


def test_verify_report_file(tmp_path, capsys):
    assert cli.run(["verify", "--suite", "geometry", "--samples", "50", "--report", str(tmp_path / "r.txt")]) == 0
    assert (tmp_path / "r.txt").read_text().startswith("suite: geometry")
    assert capsys.readouterr().out == "status: PASS\n"


def test_cone_angle(capsys):
    assert cli.run(["predict", "--cone-angle", "--epsilon", "1"]) == 0
    assert capsys.readouterr().out == "cone_angle_deg: 60\n"


def test_predict_rings_and_mask(tmp_path, capsys):
    assert cli.run(["predict", "--family", "Restricted_Apple", "--params", "1,0.2,-0.1", "--points", "8",
                    "--mask-out", str(tmp_path / "m.raw"), *GRID]) == 0
    assert capsys.readouterr().out
    mask = load_volume(tmp_path / "m.raw")
    assert set(np.unique(mask.values)) <= {0.0, 1.0}


def test_predict_negative_params_parsed(capsys):
    assert cli.run(["predict", "--family", "Restricted_Apple", "--params", "-1,0,0"]) == cli.EXIT_INVALID
    assert "error code=" in capsys.readouterr().err


def test_mask_needs_grid(tmp_path, capsys):
    code = cli.run(["predict", "--family", "Restricted_Apple", "--params", "1,0,0", "--mask-out",
                    str(tmp_path / "m.raw")])
    assert code == cli.EXIT_INVALID


def test_negative_bounds_parsed(tmp_path, files):
    assert cli.run(["phantom", "--spec", str(files / "ph.txt"), "--grid", "4,4,4", "--bounds", "-2,-2,0,2,2,4",
                    "--out", str(tmp_path / "v.raw")]) == 0
    assert load_volume(tmp_path / "v.raw").spec.origin == (-2.0, -2.0, 0.0)


def test_bolker_exit_codes(capsys):
    assert cli.run(["bolker", "--family", "Restricted_Lemon", "--samples", "500"]) == cli.EXIT_OK
    assert "expectation_met: true" in capsys.readouterr().out
    assert cli.run(["bolker", "--family", "Restricted_Lemon", "--region", "u>2"]) == cli.EXIT_INVALID


def test_wfset_window_error(tmp_path, capsys):
    save_volume(VoxelGrid.zeros(GridSpec.cube(10)), tmp_path / "v.raw")
    assert cli.run(["wfset", "--vol", str(tmp_path / "v.raw")]) == cli.EXIT_INVALID
    assert "error code=" in capsys.readouterr().err


def test_wfset_writes_csv(tmp_path):
    spec = GridSpec.cube(20)
    from spindle_radon.phantoms import rasterize
    save_volume(rasterize(PhantomSpec([Ball((0, 0, 0), 0.5)]), spec), tmp_path / "v.raw")
    assert cli.run(["wfset", "--vol", str(tmp_path / "v.raw"), "--directions", "16",
                    "--out", str(tmp_path / "wf.csv")]) == 0
    assert (tmp_path / "wf.csv").read_text().splitlines()[0] == "x,y,z,dx,dy,dz,exponent"


def test_version(capsys):
    assert cli.run(["--version"]) == 0
