"""Command-line entry point.

Each subcommand reads a scenario, runs one pipeline and writes its files
plus ``manifest.json`` into the output directory.  Exit status is 0 on
success, 1 on a model or solver error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .analysis import (
    cobweb,
    confirm_signs,
    find_fixed_points,
    forward_iteration_check,
)
from .dynamics import (
    EconomyState,
    LocationMapConfig,
    sigmoid_three_equilibria_config,
    simulate,
    stationary_capital_controls,
)
from .econometrics import generate_cross_section, misspecification_report
from .equilibrium import (
    accommodation_rule,
    compare_regimes,
    follower_G,
    leader_G,
    solve_follower,
    solve_leader,
)
from .exceptions import ModelError
from .scenario import Scenario, ScenarioError, parse_scenario
from .transcription import finite_horizon_optimize

log = logging.getLogger("govinvest")

OUT_ENV = "GOVINVEST_OUT_DIR"
DEFAULT_OUT = "govinvest-out"
SUBCOMMANDS = ("simulate", "solve", "compare", "statics", "stability", "econ-demo")
EXIT_OK, EXIT_MODEL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


class OutputDir:
    """Collects emitted files; each write lands via a temp file and rename."""

    def __init__(self, path: Path):
        self.path = path
        self.files = {}

    def write(self, name: str, text: str):
        self.path.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        fd, tmp = tempfile.mkstemp(dir=self.path, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, self.path / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files[name] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        log.info("wrote %s", self.path / name)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def _follower(sc: Scenario):
    return solve_follower(sc.params, sc.closure_rule, q_target=sc.q_target)


def run_simulate(sc: Scenario, out: OutputDir):
    P = sc.params
    needs_ss = sc.regime != "leader" or None in (sc.K0, sc.L0, sc.U0) or sc.controls == "optimal"
    ss = _follower(sc) if needs_ss else None
    K0 = sc.K0 if sc.K0 is not None else ss.K
    L0 = sc.L0 if sc.L0 is not None else ss.L
    U0 = sc.U0 if sc.U0 is not None else ss.U
    initial = EconomyState(K=K0, L=L0, U=U0)
    G_policy = leader_G(P) if sc.regime == "leader" else accommodation_rule(P)
    if sc.controls == "optimal":
        if sc.horizon < 2:
            raise ScenarioError("controls = optimal needs horizon >= 2")
        G_path = leader_G(P) if sc.regime == "leader" else follower_G(L0 / P.Q, P)
        paths, _ = finite_horizon_optimize(P, K0, L0, U0, G_path, sc.horizon,
                                           terminal=(ss.mu, ss.theta))
        controls = list(zip(paths.I, paths.N))
    else:
        controls = stationary_capital_controls(P)
    traj = simulate(P, initial, controls, G_policy, sc.horizon)
    out.write("trajectory.csv", traj.to_csv())


def run_solve(sc: Scenario, out: OutputDir):
    ss = None
    if sc.regime in ("follower", "both"):
        ss = _follower(sc)
        out.write("steady_state.json", ss.to_json())
    if sc.regime in ("leader", "both"):
        out.write("leader.json", solve_leader(sc.params, sc.L_hat, sc.K0).to_json())
    if sc.regime == "both":
        cmp = compare_regimes(sc.params, sc.L_hat, sc.K0, sc.closure_rule, q_target=sc.q_target, follower=ss)
        out.write("comparison.json", cmp.to_json())


def run_compare(sc: Scenario, out: OutputDir):
    if sc.L_hat is None or sc.K0 is None:
        raise ScenarioError("compare requires leader inputs L_hat and K0")
    cmp = compare_regimes(sc.params, sc.L_hat, sc.K0, sc.closure_rule, q_target=sc.q_target)
    out.write("comparison.json", cmp.to_json())


def run_statics(sc: Scenario, out: OutputDir):
    steps = (sc.rel_step, sc.rel_step / 10.0, sc.rel_step / 2.0)
    tables, unstable = confirm_signs(sc.params, sc.closure_rule, steps, q_target=sc.q_target)
    out.write("sign_table.csv", tables[0].to_csv())
    report = tables[0].diff().report()
    report += "\nconfirmation steps: " + ", ".join(repr(s) for s in steps[1:]) + "\n"
    if unstable:
        report += "cells whose sign changes with the step:\n"
        report += "".join(f"  d{r}/d{c}\n" for r, c in unstable)
    else:
        report += "all cells keep their sign at every step\n"
    out.write("table1_diff.txt", report)


def _stability_config(sc: Scenario) -> LocationMapConfig:
    if sc.stability_map == "sigmoid":
        return sigmoid_three_equilibria_config()
    s_hat = float(sc.params.forms.creation.value(leader_G(sc.params), sc.params)
                  - sc.params.forms.destruction.value(leader_G(sc.params), sc.params))
    return LocationMapConfig.from_params(sc.params, s_hat)


def run_stability(sc: Scenario, out: OutputDir):
    config = _stability_config(sc)
    points = find_fixed_points(config, sc.stability_L_max, 1000)
    doc = {
        "map": sc.stability_map,
        "phi": config.phi,
        "Q": config.Q,
        "constant_s": None if not config.constant_s else config.s(0.0),
        "L_max": sc.stability_L_max,
        "fixed_points": [
            {**fp.to_dict(), "forward_iteration_agrees": forward_iteration_check(fp, config)}
            for fp in points
        ],
    }
    out.write("fixed_points.json", _dump(doc))
    series = cobweb(config, sc.stability_L0, sc.horizon, L_max=sc.stability_L_max)
    out.write("cobweb.csv", series.to_csv())
    for i, fp in enumerate(points):
        if fp.classification == "unstable":
            for tag, L0 in (("above", fp.L_star + 1e-3), ("below", fp.L_star - 1e-3)):
                if L0 > 0.0:
                    s = cobweb(config, L0, sc.horizon, L_max=sc.stability_L_max)
                    out.write(f"cobweb_fp{i}_{tag}.csv", s.to_csv())


def run_econ(sc: Scenario, out: OutputDir):
    data = generate_cross_section(n=sc.econ_n, noise_sd=sc.econ_noise_sd, seed=sc.seed,
                                  base=sc.params, closure=sc.closure_rule, q_target=sc.q_target)
    report = misspecification_report(data, n_boot=sc.econ_bootstrap, base=sc.params)
    out.write("cross_section.csv", data.to_csv())
    out.write("econ_report.json", report.to_json())
    out.write("econ_report.txt", report.to_text())


PIPELINES = {
    "simulate": run_simulate,
    "solve": run_solve,
    "compare": run_compare,
    "statics": run_statics,
    "stability": run_stability,
    "econ-demo": run_econ,
}


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run(subcommand: str, scenario: Scenario, out_dir) -> dict:
    """Execute one subcommand and write its manifest; returns the manifest.

    Errors propagate after the manifest (with the error recorded) is
    written.
    """
    if subcommand not in PIPELINES:
        raise UsageError(f"unknown subcommand {subcommand!r}")
    out = OutputDir(Path(out_dir))
    manifest = {
        "artifact_version": __version__,
        "subcommand": subcommand,
        "scenario_hash": scenario.hash(),
        "started": _now(),
    }
    try:
        PIPELINES[subcommand](scenario, out)
        manifest["status"] = "ok"
    except BaseException as exc:
        manifest["status"] = "error"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest["finished"] = _now()
        manifest["files"] = [{"name": k, **v} for k, v in sorted(out.files.items())]
        out.write("manifest.json", _dump(manifest))
        out.files.pop("manifest.json")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="govinvest",
        description="Government investment, location and business creation: solvers and experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario file (key = value lines)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--regime", choices=("follower", "leader", "both"))
    common.add_argument("--closure", choices=("fixed-q", "rent", "public-good"))
    common.add_argument("--horizon", type=int, metavar="T", help="simulation horizon")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "simulate": "forward-simulate states under the regime's public-investment rule",
        "solve": "solve the follower and/or leader steady state",
        "compare": "compare business creation across regimes",
        "statics": "comparative-statics sign table and its diff against the reference",
        "stability": "fixed points and cobweb series of the location map",
        "econ-demo": "synthetic cross-section and the misspecification report",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _load_scenario(args) -> Scenario:
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    sc = parse_scenario(text)
    overrides = {k: getattr(args, k) for k in ("seed", "regime", "closure", "horizon")
                 if getattr(args, k) is not None}
    return sc.replace(**overrides) if overrides else sc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    try:
        scenario = _load_scenario(args)
    except (UsageError, ScenarioError) as exc:
        log.error("%s", exc)
        _failure_manifest(out_dir, args.command, exc)
        return EXIT_USAGE
    except ModelError as exc:
        log.error("%s", exc)
        _failure_manifest(out_dir, args.command, exc)
        return EXIT_MODEL

    try:
        run(args.command, scenario, out_dir)
    except ScenarioError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except ModelError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_MODEL
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_USAGE
    return EXIT_OK


def _failure_manifest(out_dir, command, exc):
    try:
        OutputDir(Path(out_dir)).write("manifest.json", _dump({
            "artifact_version": __version__,
            "subcommand": command,
            "scenario_hash": None,
            "started": _now(),
            "finished": _now(),
            "status": "error",
            "error": f"{type(exc).__name__}: {exc}",
            "files": [],
        }))
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
