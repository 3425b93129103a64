"""Command-line interface.

Exit status is 0 on success, 1 when inputs fail validation and 2 when a
verification suite or scan does not meet its expectation. Errors are
printed to stderr as one machine-readable line::

    error code=invalid-params message="parameter 3: need s > t^2, ..."
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path


from . import __version__
from .errors import SpindleRadonError
from .formats import load_data, load_params, save_data
from .geometry import QuadratureSpec, SurfaceKind, TorusParams
from .microlocal import REGIONS, Family, bolker_scan, cone_angle, predict_artifacts
from .phantoms import load_phantom, rasterize
from .recon import LandweberConfig, LinearOperator, estimate_operator_norm, landweber
from .transforms import RestrictedParams, SurfaceProjector
from .verify import SUITES, run_suite
from .volume import GridSpec, VoxelGrid, load_volume, save_volume
from .wavefront import DEFAULT_EXPONENT_CUTOFF, DEFAULT_WINDOW_RADIUS, hemisphere_directions, wf_detect

EXIT_OK, EXIT_INVALID, EXIT_SUITE = 0, 1, 2


class UsageError(Exception):
    code = "invalid-arguments"


def _ints(text, n, name):
    try:
        vals = [int(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"{name} must be {n} comma-separated integers, got {text!r}") from None
    if len(vals) != n or min(vals) < 1:
        raise UsageError(f"{name} must be {n} positive comma-separated integers, got {text!r}")
    return vals


def _floats(text, name):
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"{name} must be comma-separated numbers, got {text!r}") from None


def _grid(args) -> GridSpec:
    dims = _ints(args.grid, 3, "--grid")
    b = _floats(args.bounds, "--bounds")
    if len(b) != 6 or not all(lo < hi for lo, hi in zip(b[:3], b[3:])):
        raise UsageError("--bounds must be xmin,ymin,zmin,xmax,ymax,zmax with min < max")
    return GridSpec.from_bounds(dims, b[:3], b[3:])


def _quad(args) -> QuadratureSpec:
    n_psi, n_theta = _ints(args.quad, 2, "--quad")
    if n_psi < 2 or n_theta < 2:
        raise UsageError("--quad needs at least 2 nodes per direction")
    return QuadratureSpec(n_psi, n_theta)


def _need_file(path, flag):
    if not Path(path).is_file():
        raise UsageError(f"{flag}: no such file {path}")


def _need_volume(path, flag):
    _need_file(path, flag)
    _need_file(str(path) + ".json", flag + " header")


def _need_outdir(path, flag):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"{flag}: directory {parent} does not exist")


def _projector(args):
    plist, kinds = load_params(args.params)
    kind = SurfaceKind.parse(args.kind) if args.kind else None
    if plist and isinstance(plist[0], RestrictedParams) and kind is None:
        if len(set(kinds)) > 1:
            raise UsageError("translated-family rows mix apple and lemon; pass --kind")
        kind = kinds[0]
    return SurfaceProjector(plist, kind, _quad(args), threads=args.threads)


def _write(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_phantom(args):
    _need_file(args.spec, "--spec")
    _need_outdir(args.out, "--out")
    spec = _grid(args)
    save_volume(rasterize(load_phantom(args.spec), spec), args.out)
    return EXIT_OK


def cmd_project(args):
    _need_volume(args.vol, "--vol")
    _need_file(args.params, "--params")
    _need_outdir(args.out, "--out")
    proj = _projector(args)
    vol = load_volume(args.vol)
    save_data(args.out, proj.forward(vol))
    return EXIT_OK


def cmd_adjoint(args):
    _need_file(args.data, "--data")
    _need_file(args.params, "--params")
    _need_outdir(args.out, "--out")
    spec = _grid(args)
    proj = _projector(args)
    data = load_data(args.data)
    save_volume(proj.adjoint(data, spec), args.out)
    return EXIT_OK


def cmd_recon(args):
    for path, flag in ((args.data, "--data"), (args.params, "--params")):
        _need_file(path, flag)
    for path, flag in ((args.out, "--out"), (args.report, "--report")):
        if path:
            _need_outdir(path, flag)
    spec = _grid(args)
    cfg = LandweberConfig(args.step_scale, args.iters, args.nonneg)
    proj = _projector(args)
    data = load_data(args.data)
    if len(data) != len(proj):
        raise UsageError(f"{len(data)} data values for {len(proj)} parameters")
    op = LinearOperator.from_projector(proj, spec)
    norm = estimate_operator_norm(op, iters=args.norm_iters, seed=args.seed)
    rep = landweber(data, op, cfg, norm=norm.value)
    rep.notes.append(f"norm converged: {norm.converged}")
    save_volume(VoxelGrid(spec, rep.volume), args.out)
    if args.report:
        Path(args.report).write_text(rep.to_text())
        Path(str(args.report) + ".residuals.csv").write_text(rep.residual_csv())
    return EXIT_OK


def cmd_verify(args):
    if args.report:
        _need_outdir(args.report, "--report")
    rep = run_suite(args.suite, args.samples, args.seed)
    text = rep.to_text()
    _write(text, args.report)
    if args.report:
        sys.stdout.write(f"status: {'PASS' if rep.passed else 'FAIL'}\n")
    return EXIT_OK if rep.passed else EXIT_SUITE


def cmd_bolker(args):
    if args.report:
        _need_outdir(args.report, "--report")
    family = Family.parse(args.family)
    rep = bolker_scan(family, args.region, args.samples, args.seed)
    _write(rep.to_text(), args.report)
    return EXIT_OK if rep.expectation_met else EXIT_SUITE


def _parse_family_params(family: Family, text: str):
    vals = _floats(text, "--params")
    if family.restricted:
        if len(vals) != 3:
            raise UsageError("translated families take --params p,x0,y0")
        return RestrictedParams(*vals)
    if len(vals) != 7:
        raise UsageError("full families take --params s,t,x0,y0,z0,alpha,beta")
    s, t, x0, y0, z0, alpha, beta = vals
    return TorusParams(s, t, (x0, y0, z0), alpha, beta, family.kind)


def cmd_predict(args):
    if args.cone_angle:
        if args.epsilon is None:
            raise UsageError("--cone-angle needs --epsilon")
        sys.stdout.write(f"cone_angle_deg: {cone_angle(args.epsilon):.15g}\n")
        return EXIT_OK
    if not args.family or args.params is None:
        raise UsageError("predict needs --family and --params (or --cone-angle --epsilon E)")
    for path, flag in ((args.out, "--out"), (args.mask_out, "--mask-out")):
        if path:
            _need_outdir(path, flag)
    family = Family.parse(args.family)
    arts = predict_artifacts(family, _parse_family_params(family, args.params))
    _write(arts.to_text(args.points), args.out)
    if args.mask_out:
        spec = _grid(args)
        save_volume(VoxelGrid(spec, arts.mask(spec, args.dilation).astype(float)), args.mask_out)
    return EXIT_OK


def cmd_wfset(args):
    _need_volume(args.vol, "--vol")
    if args.out:
        _need_outdir(args.out, "--out")
    vol = load_volume(args.vol)
    rep = wf_detect(vol, directions=hemisphere_directions(args.directions), window_radius=args.window_radius,
                    exponent_cutoff=args.cutoff, threads=args.threads)
    _write(rep.to_csv(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--grid", required=True, help="NX,NY,NZ")
    grid.add_argument("--bounds", default="-1,-1,-1,1,1,1", help="xmin,ymin,zmin,xmax,ymax,zmax")

    surf = argparse.ArgumentParser(add_help=False)
    surf.add_argument("--params", required=True, help="parameter CSV")
    surf.add_argument("--kind", choices=("apple", "lemon"), help="override the kind column")
    surf.add_argument("--quad", default="64,64", help="NPSI,NTHETA")

    p = argparse.ArgumentParser(prog="spindle-radon", description=__doc__.splitlines()[0],
                                parents=[common])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", parents=[common, grid], help="rasterize a phantom file")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("project", parents=[common, surf], help="surface integrals of a volume")
    s.add_argument("--vol", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("adjoint", parents=[common, surf, grid], help="back-project data onto a grid")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_adjoint)

    s = sub.add_parser("recon", parents=[common, surf, grid], help="Landweber reconstruction")
    s.add_argument("--data", required=True)
    s.add_argument("--iters", type=int, default=50)
    s.add_argument("--step-scale", type=float, default=1.0)
    s.add_argument("--nonneg", action="store_true")
    s.add_argument("--norm-iters", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_recon)

    s = sub.add_parser("verify", parents=[common], help="run the numerical identity suites")
    s.add_argument("--suite", choices=("all",) + SUITES, default="all")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bolker", parents=[common], help="sample the injectivity and immersion conditions")
    s.add_argument("--family", required=True, choices=[f.value for f in Family])
    s.add_argument("--region", help="; ".join(f"{f.value}: {', '.join(r)}" for f, r in REGIONS.items()))
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report")
    s.set_defaults(func=cmd_bolker)

    s = sub.add_parser("predict", parents=[common], help="predicted artifact rings, or the cone angle")
    s.add_argument("--family", choices=[f.value for f in Family])
    s.add_argument("--params", help="p,x0,y0 or s,t,x0,y0,z0,alpha,beta")
    s.add_argument("--out")
    s.add_argument("--points", type=int, default=64, help="sample points per ring")
    s.add_argument("--mask-out", help="write a ring mask volume (needs --grid)")
    s.add_argument("--grid")
    s.add_argument("--bounds", default="-1,-1,-1,1,1,1")
    s.add_argument("--dilation", type=float, default=2.0, help="mask dilation in voxels")
    s.add_argument("--cone-angle", action="store_true")
    s.add_argument("--epsilon", type=float)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("wfset", parents=[common], help="detect singular (point, direction) pairs")
    s.add_argument("--vol", required=True)
    s.add_argument("--out")
    s.add_argument("--window-radius", type=int, default=DEFAULT_WINDOW_RADIUS)
    s.add_argument("--cutoff", type=float, default=DEFAULT_EXPONENT_CUTOFF)
    s.add_argument("--directions", type=int, default=128, help="number of hemisphere directions")
    s.set_defaults(func=cmd_wfset)
    return p


def _error_line(code, message) -> str:
    message = str(message).replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
    return f'error code={code} message="{message}"\n'


_VALUE_FLAGS = ("--bounds", "--params", "--epsilon")


def _attach_negative_values(argv):
    """Rewrite ``--bounds -1,...`` as ``--bounds=-1,...`` so argparse does not read an option."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and nxt[1:2].replace(".", "").isdigit():
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def run(argv=None) -> int:
    parser = build_parser()
    argv = _attach_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.command == "predict" and args.mask_out and not args.grid:
        sys.stderr.write(_error_line(UsageError.code, "--mask-out needs --grid"))
        return EXIT_INVALID
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK
    except (UsageError, SpindleRadonError) as exc:
        sys.stderr.write(_error_line(exc.code, exc))
    except (ValueError, OSError) as exc:
        sys.stderr.write(_error_line("invalid-input", exc))
    return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
