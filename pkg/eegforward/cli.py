"""
Command-line front end.

    python -m eegforward element-error --shape tri --ratios 0.5,1,5 --orders 2,4,6
    python -m eegforward solve --mesh head.mesh --dipole 0,0,0.05,0,0,1e-8 --method as
    python -m eegforward sphere-study --config studies/sphere.conf --out sphere.csv
    python -m eegforward dref-study --config studies/dref.conf --out dref.csv
    python -m eegforward benchmark --elements 100000 --out bench.csv
    python -m eegforward build-mesh --radii 0.092,0.078 --level 2 --out sphere.mesh
    python -m eegforward serve --port 8000

--log-level (before the subcommand) overrides LOG_LEVEL for one run.

Results go to --out or standard output as CSV. Errors are printed as
"error: <message>" on standard error with exit status 1.
"""
import argparse
import dataclasses
import logging
import sys

from .config import (
    DrefStudyConfig,
    SphereStudyConfig,
    configure_logging,
    load_settings,
    load_study_config,
    validate_config,
)
from .errors import ForwardModelError
from .mesh import build_layered_sphere_mesh, load_mesh, save_mesh
from .model import SourceMethod, forward_solve
from .potentials import Dipole
from .studies import (
    BENCHMARK_COLUMNS,
    DREF_COLUMNS,
    ELEMENT_ERROR_COLUMNS,
    SOLVE_COLUMNS,
    SPHERE_COLUMNS,
    benchmark_rows,
    dref_study_rows,
    element_error_rows,
    solve_rows,
    sphere_study_rows,
    write_csv,
)

logger = logging.getLogger(__name__)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _dipole(text: str) -> Dipole:
    try:
        return Dipole.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _anisotropy(text: str) -> tuple[int, float, float]:
    parts = text.split(":")
    try:
        return int(parts[0]), float(parts[1]), float(parts[2])
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"expected LAYER:SIGMA_RADIAL:SIGMA_TANGENTIAL, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegforward", description="EEG forward solver (subtraction FEM)")
    parser.add_argument("--log-level", type=str.upper,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        help="overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("element-error", help="FS element-vector error vs d/a")
    p.add_argument("--shape", choices=["tri", "tet"], default="tri")
    p.add_argument("--ratios", type=_float_list, default=[0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0])
    p.add_argument("--orders", type=_int_list, default=[2, 4, 6])
    p.add_argument("--side", type=float, default=1.0, help="element side length in m")
    p.add_argument("--out")

    p = commands.add_parser("solve", help="single forward solve on a mesh file")
    p.add_argument("--mesh", required=True)
    p.add_argument("--dipole", type=_dipole, required=True, help="x,y,z,qx,qy,qz")
    p.add_argument("--method", choices=[m.value for m in SourceMethod], default="as")
    p.add_argument("--order", type=int, choices=[2, 4, 6])
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")

    for name, help_text in (("sphere-study", "layered-sphere accuracy vs the series reference"),
                            ("dref-study", "FS-vs-AS differences vs d/a")):
        p = commands.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value study file")
        p.add_argument("--seed", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--out")

    p = commands.add_parser("benchmark", help="per-element cost of AS vs FS source vectors")
    p.add_argument("--elements", type=int, default=100_000, help="evaluations per shape and method")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = commands.add_parser("build-mesh", help="write a layered-sphere mesh")
    p.add_argument("--radii", type=_float_list, required=True, help="outermost first, in m")
    p.add_argument("--conductivities", type=_float_list)
    p.add_argument("--level", type=int, default=2)
    p.add_argument("--electrode-level", type=int, default=2)
    p.add_argument("--shells-per-layer", type=int, default=1)
    p.add_argument("--anisotropy", type=_anisotropy, action="append", default=[],
                   help="LAYER:SIGMA_RADIAL:SIGMA_TANGENTIAL (repeatable)")
    p.add_argument("--out", required=True)

    p = commands.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _study_config(args, model):
    config = load_study_config(args.config, model) if args.config else model()
    overrides = {key: getattr(args, key) for key in ("seed", "tol") if getattr(args, key) is not None}
    if overrides:
        config = validate_config({**config.model_dump(), **overrides}, model)
    return config


def cmd_element_error(args) -> None:
    rows = element_error_rows(args.shape, args.ratios, args.orders, side=args.side)
    write_csv(rows, ELEMENT_ERROR_COLUMNS, args.out)


def cmd_solve(args) -> None:
    mesh = load_mesh(args.mesh)
    solution = forward_solve(mesh, args.dipole, SourceMethod(args.method), args.order, rel_tol=args.tol)
    write_csv(solve_rows(solution), SOLVE_COLUMNS, args.out)


def cmd_sphere_study(args) -> None:
    rows = sphere_study_rows(_study_config(args, SphereStudyConfig))
    write_csv(rows, SPHERE_COLUMNS, args.out)


def cmd_dref_study(args) -> None:
    rows = dref_study_rows(_study_config(args, DrefStudyConfig))
    write_csv(rows, DREF_COLUMNS, args.out)


def cmd_benchmark(args) -> None:
    write_csv(benchmark_rows(args.elements, seed=args.seed), BENCHMARK_COLUMNS, args.out)


def cmd_build_mesh(args) -> None:
    anisotropy = {layer: (sigma_r, sigma_t) for layer, sigma_r, sigma_t in args.anisotropy}
    mesh = build_layered_sphere_mesh(
        args.radii,
        args.level,
        args.conductivities,
        anisotropy=anisotropy or None,
        electrode_level=args.electrode_level,
        shells_per_layer=args.shells_per_layer,
    )
    save_mesh(mesh, args.out)


def cmd_serve(args) -> None:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port)


COMMANDS = {
    "element-error": cmd_element_error,
    "solve": cmd_solve,
    "sphere-study": cmd_sphere_study,
    "dref-study": cmd_dref_study,
    "benchmark": cmd_benchmark,
    "build-mesh": cmd_build_mesh,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
        if args.log_level:
            settings = dataclasses.replace(settings, log_level=args.log_level)
        configure_logging(settings)
        COMMANDS[args.command](args)
    except (ForwardModelError, OSError, ValueError) as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0
