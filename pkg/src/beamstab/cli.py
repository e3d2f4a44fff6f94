"""Command-line entry point: ``beamstab <subcommand>``.

Exit codes: 0 success, 1 input/validation error, 2 LMI infeasible,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import decay_fit, energy_series, read_energy_csv, write_energy_csv
from .certify import Certificate, lyapunov_aux, make_certificate, solve_lmi
from .config import load_config, load_reference_config, read_certificate, write_certificate
from .exceptions import LMIInfeasible, NumericalError, ValidationError
from .model import Scenario, ScenarioConfig, validate_gains, validate_system
from .pdesim import simulate, write_boundary_csv, write_state_csv
from .resolvent import xi_scan

log = logging.getLogger("beamstab")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3


class Manifest:
    """``manifest.json`` in the output directory, written before any result file."""

    def __init__(self, out: Path, command: str, config_path: str | None, seed: int, sim: ScenarioConfig):
        self.path = out / "manifest.json"
        self.data = {
            "tool": "beamstab",
            "version": __version__,
            "command": command,
            "config": config_path,
            "seed": seed,
            "scenario_config": {**asdict(sim), "scenario": sim.scenario.name.lower()},
            "certificate": None,
            "output_dir": str(out),
            "files": [],
            "status": "running",
        }
        self.write()

    def write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def finish(self, status: str) -> None:
        out = self.path.parent
        self.data["files"] = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
        self.data["status"] = status
        self.write()


def _load(args):
    cfg = load_config(args.config) if args.config else load_reference_config()
    problems = validate_system(cfg.system, cfg.tolerances).violations + validate_gains(cfg.gains, cfg.tolerances).violations
    if problems:
        raise ValidationError("; ".join(problems))
    return cfg


def _sim_config(cfg, args, scenario=None) -> ScenarioConfig:
    sim = cfg.sim
    kw = {}
    for name in ("nx", "dt", "t_final", "stride"):
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    if scenario is not None:
        kw["scenario"] = scenario
    return replace(sim, **kw) if kw else sim


def _certificate(cfg, args) -> Certificate:
    opts = cfg.certify
    return solve_lmi(
        cfg.system, cfg.gains, margin_tol=opts.margin_tol, restarts=opts.restarts,
        iterations=opts.iterations, seed=args.seed,
    )


def _weights(cfg, args):
    """Energy weights: from ``--certificate`` if given, else solved, else unit weights."""
    path = getattr(args, "certificate", None)
    if path:
        c = read_certificate(path)
        return make_certificate(cfg.system, cfg.gains, np.diag(c["P_diag"]), np.diag(c["S_diag"]))
    try:
        return _certificate(cfg, args)
    except LMIInfeasible as exc:
        log.warning("no dissipativity certificate (%s); energies use unit weights", exc)
        n = cfg.system.n
        return make_certificate(cfg.system, cfg.gains, np.eye(n), np.eye(n))


# -- subcommands --------------------------------------------------------------------------


def cmd_certify(args, cfg, out: Path, manifest: Manifest) -> int:
    try:
        cert = _certificate(cfg, args)
    except LMIInfeasible as exc:
        print(f"infeasible: best margin {exc.margin:.6g}")
        return EXIT_INFEASIBLE
    o = cfg.certify
    aux = lyapunov_aux(cert, cfg.system, cfg.gains, o.alpha, o.beta, o.slack)
    path = out / "certificate.ini"
    write_certificate(path, cert, aux)
    manifest.data["certificate"] = str(path)
    print(f"margin {cert.margin:.6g}")
    print(f"P_diag {np.diag(cert.P)}")
    print(f"S_diag {np.diag(cert.S)}")
    print(f"tau {aux.tau:.6g}  c0 {aux.c0:.6g}  epsilon {aux.epsilon:.6g}")
    return EXIT_OK


def _run_one(cfg, sim: ScenarioConfig, cert: Certificate, out: Path, backend=None, integrator="trapezoid"):
    traj = simulate(sim, cfg.system, cfg.gains, cfg.ic, backend=backend, integrator=integrator)
    series = energy_series(traj, cert.P, cert.S)
    tag = sim.scenario.value
    write_state_csv(out / f"state_{tag}.csv", traj)
    write_boundary_csv(out / f"boundary_{tag}.csv", traj, series.W)
    write_energy_csv(out / f"energy_{tag}.csv", series)
    return series


def cmd_simulate(args, cfg, out: Path, manifest: Manifest) -> int:
    sim = _sim_config(cfg, args, args.scenario)
    cert = _weights(cfg, args)
    series = _run_one(cfg, sim, cert, out, args.backend, args.integrator)
    print(f"scenario {sim.scenario.value}: W(0)={series.W[0]:.6g} W(T)={series.W[-1]:.6g}")
    return EXIT_OK


def cmd_resolvent(args, cfg, out: Path, manifest: Manifest) -> int:
    if args.lambda_count < 0 or not (0 < args.lambda_min <= args.lambda_max):
        raise ValidationError("need 0 < lambda-min <= lambda-max and lambda-count >= 0")
    lams = np.logspace(np.log10(args.lambda_min), np.log10(args.lambda_max), args.lambda_count)
    rows = xi_scan(cfg.system, cfg.gains, lams, args.basis)
    with open(out / "resolvent_scan.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "det", "normalized_det", "cond", "flagged"])
        for r in rows:
            w.writerow([format(r.lam, ".17g"), format(r.det, ".17g"), format(r.normalized_det, ".17g"),
                        format(r.cond, ".17g"), int(r.flagged)])
    flagged = sum(r.flagged for r in rows)
    print(f"flagged {flagged} of {len(rows)}")
    return EXIT_OK


def _fit_row(est):
    return [format(v, ".17g") for v in (est.mu, est.delta, est.r_squared, est.window[0], est.window[1])] + [est.npoints]


FIT_HEADER = ["mu", "delta", "r_squared", "window_start", "window_end", "npoints"]


def cmd_decay_fit(args, cfg, out: Path, manifest: Manifest) -> int:
    t, W = read_energy_csv(args.energy)
    est = decay_fit(t, W, (args.window_start, args.window_end))
    print(f"mu {est.mu:.6g}  delta {est.delta:.6g}  r2 {est.r_squared:.6f}  "
          f"window [{est.window[0]:g}, {est.window[1]:g}]" + ("" if est.reliable else "  (poor fit)"))
    with open(out / "decay_fit.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_HEADER)
        w.writerow(_fit_row(est))
    return EXIT_OK


def cmd_reproduce(args, cfg, out: Path, manifest: Manifest) -> int:
    scenarios = [Scenario.parse(s) for s in (args.only.split(",") if args.only else ["a", "b", "c"])]
    code = EXIT_OK
    try:
        cert = _certificate(cfg, args)
        o = cfg.certify
        write_certificate(out / "certificate.ini", cert, lyapunov_aux(cert, cfg.system, cfg.gains, o.alpha, o.beta, o.slack))
        manifest.data["certificate"] = str(out / "certificate.ini")
    except LMIInfeasible as exc:
        log.warning("certificate infeasible (margin %.3g); energies use unit weights", exc.margin)
        code = EXIT_INFEASIBLE
        cert = make_certificate(cfg.system, cfg.gains, np.eye(cfg.system.n), np.eye(cfg.system.n))

    sims = [_sim_config(cfg, args, s) for s in scenarios]
    with ThreadPoolExecutor(max_workers=len(sims)) as pool:
        futures = [pool.submit(_run_one, cfg, sim, cert, out, args.backend) for sim in sims]
        results = [f.result() for f in futures]

    header = ["scenario", "W0", "WT", "WT_over_W0"] + FIT_HEADER
    rows = []
    for sim, series in zip(sims, results):
        est = decay_fit(series.t, series.W, (args.window_start, args.window_end))
        rows.append([sim.scenario.value, format(series.W[0], ".17g"), format(series.W[-1], ".17g"),
                     format(series.W[-1] / series.W[0], ".17g")] + _fit_row(est))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"{'case':<5}{'W(0)':>14}{'W(T)':>14}{'delta':>11}{'r2':>9}")
    for r in rows:
        print(f"{r[0]:<5}{float(r[1]):>14.6g}{float(r[2]):>14.6g}{float(r[5]):>11.4g}{float(r[6]):>9.4f}")
    return code


# -- parser -------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; argparse's own status 2 would read as "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="beamstab", description="Certify and simulate boundary-stabilized coupled beams.")
    p.add_argument("--config", help="INI configuration (default: bundled worked example)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=0, help="seed for the LMI solver restarts")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("certify", help="solve the dissipativity LMI and write certificate.ini")

    def grid_flags(sp):
        sp.add_argument("--nx", type=int, help="grid intervals (overrides config)")
        sp.add_argument("--dt", type=float, help="time step")
        sp.add_argument("--t-final", dest="t_final", type=float, help="horizon")
        sp.add_argument("--stride", type=int, help="snapshot stride in steps")
        sp.add_argument("--backend", choices=("compiled", "python"), help="stepping loop backend")

    sp = sub.add_parser("simulate", help="run one scenario and write CSVs")
    sp.add_argument("--scenario", help="a (open loop), b (first order) or c (full); default from config")
    sp.add_argument("--certificate", help="certificate file providing the energy weights")
    sp.add_argument("--integrator", choices=("trapezoid", "exponential"), default="trapezoid")
    grid_flags(sp)

    sp = sub.add_parser("resolvent-check", help="scan det Xi(lambda) on a log grid")
    sp.add_argument("--lambda-min", type=float, default=1e-3)
    sp.add_argument("--lambda-max", type=float, default=1e2)
    sp.add_argument("--lambda-count", type=int, default=50)
    sp.add_argument("--basis", choices=("cauchy", "exponential"), default="cauchy")

    sp = sub.add_parser("decay-fit", help="fit mu, delta to an energy CSV")
    sp.add_argument("energy", help="CSV with columns t and W")
    sp.add_argument("--window-start", type=float)
    sp.add_argument("--window-end", type=float)

    sp = sub.add_parser("reproduce", help="certificate, all three scenarios and decay fits")
    sp.add_argument("--only", help="comma-separated subset of a,b,c")
    sp.add_argument("--window-start", type=float)
    sp.add_argument("--window-end", type=float)
    grid_flags(sp)
    return p


COMMANDS = {
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "resolvent-check": cmd_resolvent,
    "decay-fit": cmd_decay_fit,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    manifest = None
    try:
        cfg = _load(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        sim = _sim_config(cfg, args, getattr(args, "scenario", None))
        manifest = Manifest(out, args.command, args.config, args.seed, sim)
        code = COMMANDS[args.command](args, cfg, out, manifest)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except LMIInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        code = EXIT_INFEASIBLE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    if manifest is not None:
        manifest.finish("ok" if code == EXIT_OK else f"exit {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
