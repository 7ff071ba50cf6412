"""Command-line entry point for GReg."""
import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from config import Config, load_config, validate_config
from utils.errors import CHECK_FAILURE_EXIT_CODE, ConfigError, GRegError, UsageError

logger = logging.getLogger(__name__)

COMMANDS = ("synth", "register", "shoot", "evaluate", "table", "check")
SCENARIOS = ("rectangle", "wheel", "bump", "noise")
IO_EXIT_CODE = 2


@dataclass
class CliConfig:
    """Parsed command line: the subcommand, its paths and options, and the merged configuration."""
    command: str
    config: Config
    options: Dict[str, Any] = field(default_factory=dict)
    config_path: Optional[str] = None


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so usage errors get our exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _settings_parser() -> argparse.ArgumentParser:
    """Flags that override configuration keys; every default is None so unset flags never win."""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("configuration overrides")
    group.add_argument("--config", dest="config_path", help="key = value configuration file")
    group.add_argument("--n", type=int, help="synthetic grid size")
    group.add_argument("--band-width", dest="band_width", type=float, help="interface band width (domain units)")
    group.add_argument("--inertia-kind", dest="inertia_kind", choices=("gaussian_kernel", "helmholtz"))
    group.add_argument("--sigma", type=float, help="Gaussian kernel width (domain units)")
    group.add_argument("--alpha", type=float, help="Helmholtz Laplacian weight")
    group.add_argument("--helmholtz-gamma", dest="gamma", type=float, help="Helmholtz identity weight")
    group.add_argument("--order", type=int, help="Helmholtz power")
    group.add_argument("--steps", type=int, help="time steps over unit time")
    group.add_argument("--sim-kind", dest="sim_kind", choices=("lncc", "ssd"))
    group.add_argument("--lncc-window", dest="lncc_window", type=float, help="LNCC window std in pixels")
    group.add_argument("--reg-weight", dest="reg_weight", type=float)
    group.add_argument("--iters", type=int, help="optimizer iterations")
    group.add_argument("--step-size", dest="step_size", type=float, help="initial line-search step")
    group.add_argument("--tol", type=float, help="relative energy decrease to stop at")
    group.add_argument("--line-search", dest="line_search", action=argparse.BooleanOptionalAction, default=None)
    group.add_argument("--multires", action=argparse.BooleanOptionalAction, default=None)
    group.add_argument("--threads", type=int)
    group.add_argument("--seed", type=int)
    group.add_argument("--log-level", dest="log_level")
    return parent


SETTING_DESTS = ("n", "band_width", "inertia_kind", "sigma", "alpha", "gamma", "order", "steps", "sim_kind",
                 "lncc_window", "reg_weight", "iters", "step_size", "tol", "line_search", "multires",
                 "threads", "seed", "log_level")

# option -> must exist on disk
INPUT_OPTIONS = ("moving", "fixed", "boundary", "m0", "gamma_path", "warped")


def build_parser() -> argparse.ArgumentParser:
    settings = _settings_parser()
    parser = _Parser(prog="greg", description="Piecewise-diffeomorphic sliding registration")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    synth = sub.add_parser("synth", parents=[settings], help="generate a synthetic scenario")
    synth.add_argument("--scenario", choices=SCENARIOS, required=True)
    synth.add_argument("--shift", type=float, default=0.1, help="rectangle sliding shift")
    synth.add_argument("--degrees", type=float, default=5.0, help="wheel rotation in degrees")
    synth.add_argument("--out", required=True)

    register = sub.add_parser("register", parents=[settings], help="register a moving image to a fixed image")
    register.add_argument("--moving", required=True)
    register.add_argument("--fixed", required=True)
    register.add_argument("--boundary", help="interface sdf field or label image; omit for LDDMM")
    register.add_argument("--out", required=True)
    register.add_argument("--render", action="store_true", help="also write PNG renders")

    shoot = sub.add_parser("shoot", parents=[settings], help="integrate the Euler-Arnold system from a momentum")
    shoot.add_argument("--m0", required=True)
    shoot.add_argument("--gamma", dest="gamma_path", help="interface sdf field; omit for smooth mode")
    shoot.add_argument("--form", choices=("euler_arnold", "epdiff"), default="euler_arnold")
    shoot.add_argument("--out", required=True)

    evaluate = sub.add_parser("evaluate", parents=[settings], help="Re_SSD, NCC and SSIM of a warped image")
    evaluate.add_argument("--moving", required=True)
    evaluate.add_argument("--fixed", required=True)
    evaluate.add_argument("--warped", required=True)

    table = sub.add_parser("table", parents=[settings], help="Before/LDDMM/Proposed comparison CSV")
    table.add_argument("--scenarios", default="rectangle,wheel")
    table.add_argument("--methods", default="lddmm,groupoid")
    table.add_argument("--out", required=True)
    table.add_argument("--reference", action="store_true", help="also print the published rows for each scenario")

    check = sub.add_parser("check", parents=[settings], help="run the invariant suites")
    check.add_argument("--suite", default="all")
    return parser


def _split(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def parse_args(argv: Optional[Sequence[str]] = None) -> CliConfig:
    """
    Parse the command line into a CliConfig.

    Flags override the config file, which overrides the environment and
    the defaults.

    Raises:
        UsageError: Unknown flag, missing subcommand or missing input file
        ConfigError: Unknown config key or invalid setting
    """
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command", None)
    if command is None:
        raise UsageError(f"a subcommand is required: {', '.join(COMMANDS)}")
    config_path = args.pop("config_path", None)
    overrides = {key: args.pop(key) for key in SETTING_DESTS if key in args}
    config = load_config(config_path, overrides)
    problems = validate_config(config)
    if problems:
        raise ConfigError("; ".join(problems))
    for key in INPUT_OPTIONS:
        path = args.get(key)
        if path is not None and not (os.path.exists(path) or os.path.exists(f"{path}.raw")):
            raise UsageError(f"input not found: {path}")
    return CliConfig(command=command, config=config, options=args, config_path=config_path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _run_synth(cli: CliConfig) -> int:
    from generators.scenario_generator import gen_bump_pair, gen_noise_pair, gen_rectangle, gen_wheel
    from storage.field_store import ResultStore, save_element, save_field, save_image, save_interface

    opts = cli.options
    n = cli.config.grid.n
    store = ResultStore(opts["out"])
    name = opts["scenario"]
    if name == "rectangle":
        scenario = gen_rectangle(n, opts["shift"])
    elif name == "wheel":
        scenario = gen_wheel(n, opts["degrees"])
    else:
        scenario = None
    if scenario is None:
        images = gen_bump_pair(n) if name == "bump" else gen_noise_pair(n, cli.config.app.seed)
    else:
        images = (scenario.moving, scenario.fixed)
        save_interface(scenario.truth_interface, store.path("boundary"))
        if scenario.truth_element is not None:
            save_element(scenario.truth_element, store.path("truth"))
    for label, image in zip(("moving", "fixed"), images):
        save_image(image, store.path(f"{label}.png"))
        save_field(image, store.path(label))
    logger.info(f"Wrote {name} scenario ({n}x{n}) to {store.root}")
    return 0


def _run_register(cli: CliConfig) -> int:
    from analyzers.metrics import ncc_metric, re_ssd, ssim
    from analyzers.registration import register
    from generators.report_generator import FigureRenderer, problem_from_config
    from storage.field_store import ResultStore, load_interface, load_scalar

    opts = cli.options
    config = cli.config
    moving = load_scalar(opts["moving"])
    fixed = load_scalar(opts["fixed"], moving.grid)
    interface = None
    if opts.get("boundary"):
        interface = load_interface(opts["boundary"], moving.grid, config.grid.band_width)
    problem = problem_from_config(moving, fixed, interface, config)
    result = register(problem, config.optimizer)
    store = ResultStore(opts["out"])
    store.save_registration(result)
    if opts.get("render"):
        FigureRenderer().render_registration(result, moving, fixed, store.path("figures"))
    print(f"Re_SSD = {re_ssd(moving, fixed, result.warped):.4f}%  NCC = {ncc_metric(fixed, result.warped):.6f}  "
          f"SSIM = {ssim(fixed, result.warped):.6f}  converged = {result.converged}")
    return 0


def _run_shoot(cli: CliConfig) -> int:
    from engines.mechanics_engine import shoot
    from models.algebroid_models import InertiaOperator
    from storage.field_store import ResultStore, load_interface, load_momentum

    opts = cli.options
    config = cli.config
    gamma = None
    if opts.get("gamma_path"):
        gamma = load_interface(opts["gamma_path"], band_width=config.grid.band_width)
    m0 = load_momentum(opts["m0"], gamma)
    inertia = InertiaOperator.from_config(config.inertia)
    traj = shoot(m0, gamma, config.registration.steps, inertia, opts["form"])
    ResultStore(opts["out"]).save_trajectory(traj, inertia)
    return 0


def _run_evaluate(cli: CliConfig) -> int:
    from analyzers.metrics import ncc_metric, re_ssd, ssim
    from storage.field_store import load_scalar

    opts = cli.options
    moving = load_scalar(opts["moving"])
    fixed = load_scalar(opts["fixed"], moving.grid)
    warped = load_scalar(opts["warped"], moving.grid)
    print(f"re_ssd_percent,{re_ssd(moving, fixed, warped):.4f}")
    print(f"ncc,{ncc_metric(fixed, warped):.6f}")
    print(f"ssim,{ssim(fixed, warped):.6f}")
    return 0


def _run_table(cli: CliConfig) -> int:
    from generators.report_generator import METHODS, reference_rows, run_table, write_csv
    from generators.scenario_generator import gen_rectangle, gen_wheel

    builders = {"rectangle": gen_rectangle, "wheel": gen_wheel}
    names = _split(cli.options["scenarios"])
    unknown = [s for s in names if s not in builders]
    if unknown or not names:
        raise UsageError(f"unknown scenario(s) {unknown or names}; expected any of {list(builders)}")
    methods = _split(cli.options["methods"])
    if not methods or any(m not in METHODS for m in methods):
        raise UsageError(f"methods must be drawn from {list(METHODS)}, got {methods}")
    scenarios = [builders[name](cli.config.grid.n) for name in names]
    rows = run_table(scenarios, cli.config, methods)
    write_csv(rows, cli.options["out"])
    for row in rows:
        print(",".join(row.as_csv()))
    if cli.options["reference"]:
        for name in names:
            for row in reference_rows(name):
                print("reference," + ",".join(row.as_csv()))
    return 0


def _run_check(cli: CliConfig) -> int:
    from analyzers.property_suite import run_suites

    try:
        results = run_suites(cli.options["suite"], cli.config.app.seed)
    except ValueError as e:
        raise UsageError(str(e))
    for result in results:
        print(result.summary())
    return 0 if all(r.passed for r in results) else CHECK_FAILURE_EXIT_CODE


HANDLERS = {
    "synth": _run_synth,
    "register": _run_register,
    "shoot": _run_shoot,
    "evaluate": _run_evaluate,
    "table": _run_table,
    "check": _run_check,
}


def run(cli: CliConfig) -> int:
    """
    Dispatch a parsed command.

    Returns:
        0 on success, 1 for usage or configuration errors, 2 for I/O
        failures, 3 for numerical failures and 4 when a check suite fails
    """
    try:
        return HANDLERS[cli.command](cli)
    except GRegError as e:
        logger.error(f"{cli.command} failed: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{cli.command} failed with an I/O error: {e}")
        return IO_EXIT_CODE


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cli = parse_args(argv)
    except GRegError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    logging.basicConfig(
        level=getattr(logging, cli.config.app.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return run(cli)


if __name__ == "__main__":
    sys.exit(main())
