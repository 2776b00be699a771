#command line entry point

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import CalibrationError, ConfigError, QkdSimError
from .harness import (
    SessionResult, calibrate_fiber, eye_diagram, polarimeter_sweep, run_scenario, sweep
)
from .logging_config import setup_logging
from .models import Basis, RunMode, SweepAxis
from .persistence import (
    load_config, load_targets, save_fiber, write_calibration, write_eye, write_polarimeter,
    write_qber_estimate, write_results, write_sifted_key, write_time_tags
)
from .protocol import qber

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CALIBRATION = 4


def parse_values(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"--values must be a comma-separated list of numbers: {e}") from e
    if not values:
        raise ConfigError("--values is empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdsim",
        description="Polarization BB84 link simulator for incoherent light sources"
    )
    parser.add_argument("--version", action="version", version=f"qkdsim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug output on the console")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one scenario")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--mode", choices=["analytic", "mc", "montecarlo"])
    run.add_argument("--out", required=True)
    run.add_argument("--timing", action="store_true", help="add a wall_seconds column")
    run.add_argument("--export-dir", help="write time tags, sifted keys and QBER per session (mc only)")

    sw = commands.add_parser("sweep", help="sweep one axis of a scenario")
    sw.add_argument("--config", required=True)
    sw.add_argument("--axis", required=True, choices=["ob", "length", "fiber_length", "dlambda", "delta_lambda"])
    sw.add_argument("--values", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--mode", choices=["analytic", "mc", "montecarlo"])
    sw.add_argument("--workers", type=int)
    sw.add_argument("--timing", action="store_true")

    eye = commands.add_parser("eye", help="classical eye diagram at one analyzer port")
    eye.add_argument("--config", required=True)
    eye.add_argument("--traces", type=int)
    eye.add_argument("--basis", choices=[b.value for b in Basis])
    eye.add_argument("--out", required=True)
    eye.add_argument("--seed", type=int)

    pol = commands.add_parser("polarimeter", help="wavelength-swept output SOP over time")
    pol.add_argument("--config", required=True)
    pol.add_argument("--out", required=True)
    pol.add_argument("--seed", type=int)

    cal = commands.add_parser("calibrate", help="fit the PMD coefficient to QBER targets")
    cal.add_argument("--targets", required=True)
    cal.add_argument("--out", required=True)
    cal.add_argument("--fiber-out", help="also save the calibrated fiber section as JSON")

    view = commands.add_parser("view", help="open a result table in the desktop viewer")
    view.add_argument("--results", required=True)
    return parser


def _scenario(args):
    config = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "mode", None):
        changes["mode"] = RunMode.parse(args.mode)
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    return config.with_updates(**changes) if changes else config


def export_sessions(sessions: List[SessionResult], directory) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for i, session in enumerate(sessions):
        write_time_tags(session.tags, out / f"session{i}.tags")
        write_sifted_key(session.key, out / f"session{i}.key")
        if len(session.key):
            write_qber_estimate(qber(session.key), out / f"session{i}.qber")
    logger.info(f"Exported {len(sessions)} sessions to {out}")


def cmd_run(args) -> int:
    config = _scenario(args)
    sessions: Optional[List[SessionResult]] = [] if args.export_dir else None
    if sessions is not None and config.mode is not RunMode.MONTECARLO:
        logger.warning("--export-dir only applies to montecarlo runs, ignored")
        sessions = None
    record = run_scenario(config, sessions=sessions)
    write_results([record], args.out, config.seed, args.timing)
    if sessions is not None:
        export_sessions(sessions, args.export_dir)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _scenario(args)
    records = sweep(config, SweepAxis.parse(args.axis), parse_values(args.values))
    write_results(records, args.out, config.seed, args.timing)
    failed = sum(1 for r in records if r.error)
    if failed:
        logger.warning(f"{failed} of {len(records)} sweep points failed")
    return EXIT_OK


def cmd_eye(args) -> int:
    config = _scenario(args)
    basis = Basis(args.basis) if args.basis else None
    eye = eye_diagram(config, basis, args.traces)
    write_eye(eye, args.out, config.seed)
    return EXIT_OK


def cmd_polarimeter(args) -> int:
    config = _scenario(args)
    spec = config.polarimeter
    result = polarimeter_sweep(config.fiber, spec.slice_nm, spec.min_nm, spec.max_nm, spec.steps,
                               spec.interval_min, config.seed, spec.input_stokes)
    write_polarimeter(result, args.out, config.seed)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    template, targets, search = load_targets(args.targets)
    result = calibrate_fiber(template, targets, **search)
    write_calibration(result, targets, args.out, template.seed)
    if args.fiber_out:
        save_fiber(result.fiber, args.fiber_out)
    return EXIT_OK


def cmd_view(args) -> int:
    app = create_application()
    from .ui_results import ResultsWindow
    window = ResultsWindow(args.results)
    window.show()
    return app.exec()


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "eye": cmd_eye,
    "polarimeter": cmd_polarimeter,
    "calibrate": cmd_calibrate,
    "view": cmd_view,
}


def create_application():
    #qt is only needed by the viewer
    from PySide6.QtWidgets import QApplication, QStyleFactory

    app = QApplication.instance() or QApplication(sys.argv[:1])
    app.setApplicationName("qkdsim")
    app.setOrganizationName("qkdsim")

    #use fusion style
    fusion_style = QStyleFactory.create("Fusion")
    if fusion_style:
        app.setStyle(fusion_style)
    apply_dark_theme(app)
    return app


#dark theme, limited to what the results viewer shows

DARK_PALETTE = {
    "Window": (53, 53, 53),
    "WindowText": (255, 255, 255),
    "Base": (35, 35, 35),
    "AlternateBase": (42, 42, 42),
    "Text": (255, 255, 255),
    "Highlight": (42, 130, 218),
    "HighlightedText": (255, 255, 255),
}

RESULTS_STYLESHEET = """
    QTableWidget { gridline-color: #666666; border: 1px solid #555555; }
    QHeaderView::section { background-color: #3a3a3a; color: #ffffff; padding: 6px; font-weight: bold; }
    QStatusBar { background-color: #232323; }
"""


def apply_dark_theme(app) -> None:
    from PySide6.QtGui import QColor, QPalette

    palette = QPalette()
    for role, rgb in DARK_PALETTE.items():
        palette.setColor(getattr(QPalette.ColorRole, role), QColor(*rgb))
    app.setPalette(palette)
    app.setStyleSheet(RESULTS_STYLESHEET)


def run_application(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG

    setup_logging(args.verbose)
    logger.debug(f"qkdsim {__version__}: {args.command}")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except CalibrationError as e:
        logger.error(f"Calibration failed: {e}")
        return EXIT_CALIBRATION
    except (QkdSimError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(run_application())
