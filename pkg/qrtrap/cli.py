"""cli.py

Command-line front end.

Commands:
- units           scaled sigma, gamma and time/energy scales for a species or explicit values
- simulate        one propagation, series CSV to stdout or --out
- sweep           a plan file (or a bundled plan name) into a result bundle
- phase-diagram   variational running coupling plus the discrepancy audit
- critical-gamma  dynamical bisection of the collapse threshold

Common flags: --config, --out, --profile, --workers, --print-defaults.
Exit codes: 0 success, 2 usage/config error, 3 numerical failure,
4 bracket/plan validation error.

Env vars (optional, also read from .env):
- QRTRAP_LOG_LEVEL=WARNING
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from .config import get_default_config, load_config
from .errors import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, InvalidParameterError, handle_errors
from .experiments import bundled_plan_path, load_plan, run_sweep
from .model import initial_packet
from .observables import CollapseReport, detect_collapse
from .propagator import evolve
from .units import (
    CONSTANTS_TABLE,
    ELECTRON_MASSES_PER_AMU,
    energy_to_nanokelvin,
    get_species,
    initial_kinetic_energy_physical,
    radial_gamma,
    radial_gamma_uncertainty,
    scaled_packet_kinetic_energy,
    scaled_sigma,
    seconds_per_tau,
)
from .variational import critical_gamma_dynamic, phase_diagram, write_audit


LOGGER = logging.getLogger("qrtrap.cli")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_L = 4.47e5


def _overrides(args: argparse.Namespace, keys: List[str]) -> Dict[str, Any]:
    out = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if getattr(args, "out", None):
        out["output_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        out["workers"] = args.workers
    return out


def _resolve(args: argparse.Namespace, keys: List[str]):
    return load_config(getattr(args, "config", None), getattr(args, "profile", None), _overrides(args, keys))


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, ensure_ascii=False, indent=2))


@handle_errors
def cli_units(args: argparse.Namespace) -> int:
    config = _resolve(args, ["a"])
    L = float(args.L)

    if args.species:
        sp = get_species(args.species)
        beta4, a_int, mass = sp.beta4, sp.a_int, sp.mass
        uncertainty = sp.a_int_uncertainty
        label = sp.name
    else:
        if args.beta4 is None or args.a_int is None:
            raise InvalidParameterError("give --species or both --beta4 and --a-int")
        beta4, a_int = float(args.beta4), float(args.a_int)
        mass = float(args.mass_amu) * ELECTRON_MASSES_PER_AMU if args.mass_amu else None
        uncertainty = None
        label = "custom"

    payload: Dict[str, Any] = {
        "species": label,
        "L": L,
        "sigma": scaled_sigma(L, beta4),
        "gamma": radial_gamma(a_int, L),
        "gamma_uncertainty": radial_gamma_uncertainty(uncertainty, L),
        "a": config.a,
        "kinetic_energy_scaled": scaled_packet_kinetic_energy(config.a),
    }
    if mass is not None:
        energy = initial_kinetic_energy_physical(config.a, mass, L)
        payload.update(
            seconds_per_tau=seconds_per_tau(mass, L),
            kinetic_energy_hartree=energy,
            kinetic_energy_nK=energy_to_nanokelvin(energy),
        )
    if args.show_constants:
        payload["constants"] = CONSTANTS_TABLE
    _print_json(payload)
    return EXIT_OK


@handle_errors
def cli_simulate(args: argparse.Namespace) -> int:
    config = _resolve(args, ["sigma", "gamma", "a", "tau_end"])
    prop = config.propagator_config()
    series = evolve(initial_packet(config.a, prop.grid), prop, config.tau_end, sample_every=config.sample_every)

    if len(series) >= 2:
        report = detect_collapse(series, config.thresholds())
    else:
        report = CollapseReport(collapsed=False)
    if series.terminated == "collapse-suspected" and not report.collapsed:
        report = CollapseReport(True, series.terminated_tau, "fixed-point-failure")

    if getattr(args, "out", None):
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "series.csv")
        series.to_csv(path)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as f:
            json.dump({**report.to_dict(), "terminated": series.terminated, "config": config.to_mapping()}, f, indent=2)
        LOGGER.info("Wrote %s", path)
    else:
        series.to_csv(sys.stdout)

    print(f"collapse: {json.dumps(report.to_dict())}", file=sys.stderr)
    if series.terminated == "numerical-blowup":
        print(f"error: non-finite amplitudes at tau={series.terminated_tau:.6g}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


@handle_errors
def cli_sweep(args: argparse.Namespace) -> int:
    base = _resolve(args, [])
    path = args.plan if os.path.exists(args.plan) else bundled_plan_path(args.plan)
    plan = load_plan(path, base=base, output_dir=getattr(args, "out", None))
    bundle = run_sweep(plan, workers=base.workers, echo=True)
    failed = [r for r in bundle.results if r.status.startswith("error")]
    _print_json(
        {
            "summary": os.path.abspath(bundle.summary_path),
            "manifest": os.path.abspath(bundle.manifest_path),
            "runs": len(bundle.results),
            "failed": len(failed),
        }
    )
    return EXIT_OK


@handle_errors
def cli_phase_diagram(args: argparse.Namespace) -> int:
    config = _resolve(args, [])
    if not args.sigmas:
        raise InvalidParameterError("--sigmas needs at least one value")
    diagram = phase_diagram(args.sigmas, (args.alpha_min, args.alpha_max), args.n_alpha)

    os.makedirs(config.output_dir, exist_ok=True)
    csv_path = os.path.join(config.output_dir, "phase_diagram.csv")
    diagram.to_csv(csv_path)
    audit_csv, notes = write_audit(diagram, config.output_dir)
    _print_json(
        {
            "phase_diagram": os.path.abspath(csv_path),
            "audit": os.path.abspath(audit_csv),
            "notes": os.path.abspath(notes),
            "rows": len(diagram),
        }
    )
    return EXIT_OK


@handle_errors
def cli_critical_gamma(args: argparse.Namespace) -> int:
    config = _resolve(args, ["sigma", "a"])
    gamma_c = critical_gamma_dynamic(
        config.sigma,
        config.propagator_config(),
        bracket=(args.bracket[0], args.bracket[1]),
        tol=args.tol,
        a=config.a,
        horizon=args.horizon if args.horizon is not None else config.critical_horizon,
        sample_every=config.sample_every,
        thresholds=config.thresholds(),
    )
    _print_json({"sigma": config.sigma, "gamma_c": gamma_c, "bracket": list(args.bracket), "tol": args.tol})
    return EXIT_OK


def _common_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand from resetting flags given before it
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--profile", choices=["paper", "fast"], default=argparse.SUPPRESS)
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    p.add_argument("--print-defaults", action="store_true", default=argparse.SUPPRESS)
    return p


def build_argparser() -> argparse.ArgumentParser:
    common = _common_parser()
    p = argparse.ArgumentParser(prog="qrtrap", description="Quantum-reflection trap simulator", parents=[common])
    sub = p.add_subparsers(dest="cmd")

    p_units = sub.add_parser("units", parents=[common], help="Scaled parameters for a species")
    p_units.add_argument("--species")
    p_units.add_argument("--L", type=float, default=DEFAULT_L, help="trap radius in Bohr radii")
    p_units.add_argument("--beta4", type=float)
    p_units.add_argument("--a-int", dest="a_int", type=float)
    p_units.add_argument("--mass-amu", dest="mass_amu", type=float)
    p_units.add_argument("--a", type=float)
    p_units.add_argument("--show-constants", action="store_true")
    p_units.set_defaults(func=cli_units)

    p_sim = sub.add_parser("simulate", parents=[common], help="Propagate one packet")
    p_sim.add_argument("--sigma", type=float)
    p_sim.add_argument("--gamma", type=float)
    p_sim.add_argument("--a", type=float)
    p_sim.add_argument("--tau-end", dest="tau_end", type=float)
    p_sim.set_defaults(func=cli_simulate)

    p_sweep = sub.add_parser("sweep", parents=[common], help="Run a sweep plan")
    p_sweep.add_argument("plan", help="plan JSON file or bundled plan name (table2, table3, collapse)")
    p_sweep.set_defaults(func=cli_sweep)

    p_phase = sub.add_parser("phase-diagram", parents=[common], help="Variational running coupling")
    p_phase.add_argument("--sigmas", type=float, nargs="*", default=[10.0, 20.0, 30.0, 40.0, 50.0])
    p_phase.add_argument("--alpha-min", type=float, default=0.05)
    p_phase.add_argument("--alpha-max", type=float, default=1.0)
    p_phase.add_argument("--n-alpha", type=int, default=96)
    p_phase.set_defaults(func=cli_phase_diagram)

    p_crit = sub.add_parser("critical-gamma", parents=[common], help="Bisect the collapse threshold")
    p_crit.add_argument("--sigma", type=float)
    p_crit.add_argument("--a", type=float)
    p_crit.add_argument("--bracket", type=float, nargs=2, default=[-0.70, -0.45], metavar=("LO", "HI"))
    p_crit.add_argument("--tol", type=float, default=0.005)
    p_crit.add_argument("--horizon", type=float)
    p_crit.set_defaults(func=cli_critical_gamma)

    return p


@handle_errors
def cli_print_defaults(args: argparse.Namespace) -> int:
    _print_json(get_default_config(getattr(args, "profile", None) or "paper"))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.environ.get("QRTRAP_LOG_LEVEL", "WARNING").upper(),
        format=LOG_FORMAT,
    )
    parser = build_argparser()
    args = parser.parse_args(argv)

    if getattr(args, "print_defaults", False):
        return int(cli_print_defaults(args))

    if hasattr(args, "func"):
        return int(args.func(args))

    parser.print_help()
    return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
