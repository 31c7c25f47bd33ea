"""Command-line interface: validate, run, compare, arterial, generate.

Exit codes: 0 success, 1 input or runtime error, 2 validation or semantic failure.
Defaults can come from an INI file (``--config`` or the SEWERRISK_CONFIG
environment variable) with a ``[run]`` section and an optional ``[damage]``
section; command-line flags take precedence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .analysis import CapacityBasis
from .compare import ModelRunError, run_matrix
from .damage import DamageModel, DamageModelError
from .hydraulics.routing import RoutingError, SolverConfig
from .inp import InpError, InpSemanticError, read_inp, write_geojson, write_inp, write_results_csv
from .montecarlo import (MODEL_NAMES, ConvergenceConfig, ModelRunResult, ModelSpec,
                         ScenarioFailure, run_model)
from .network import ArterialUndefinedError, Network, NetworkError, extract_arterial, validate
from .synth import SynthesisParams, generate_synthetic

CONFIG_ENV = "SEWERRISK_CONFIG"
DEFAULTS = {
    "seed": 0, "batch": 100, "target_cov": 0.1, "max_sims": 10_000, "duration": 3600.0,
    "dt": 2.0, "workers": 1, "crn": False, "basis": "effective", "damage": None,
}
EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class CliConfig:
    seed: int
    batch: int
    target_cov: float
    max_sims: int
    duration: float
    dt: float
    workers: int
    crn: bool
    basis: CapacityBasis
    damage: DamageModel

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, duration=self.duration)

    @property
    def convergence(self) -> ConvergenceConfig:
        return ConvergenceConfig(self.batch, self.target_cov, self.max_sims)


def _bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_CASTS = {"seed": int, "batch": int, "target_cov": float, "max_sims": int, "duration": float,
          "dt": float, "workers": int, "crn": _bool, "basis": str, "damage": str}


def _load_damage(spec: str | None, cp: configparser.ConfigParser | None) -> DamageModel:
    if spec is None:
        if cp is not None and cp.has_section("damage"):
            return DamageModel.from_config(cp)
        return DamageModel.default()
    if spec.lower() in ("none", "undamaged"):
        return DamageModel.undamaged()
    if spec.lower() == "default":
        return DamageModel.default()
    return DamageModel.from_config(spec)


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """Merge defaults, the config file and explicit flags (in increasing priority)."""
    values = dict(DEFAULTS)
    path = args.config or os.environ.get(CONFIG_ENV)
    cp = None
    if path:
        cp = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        if cp.has_section("run"):
            for key, raw in cp.items("run"):
                key = key.replace("-", "_")
                if key not in _CASTS:
                    raise CliError(f"config {path}: unknown key {key!r}")
                try:
                    values[key] = _CASTS[key](raw)
                except ValueError as exc:
                    raise CliError(f"config {path}: bad value for {key}: {exc}") from exc
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        basis = CapacityBasis(str(values["basis"]).lower())
        damage = _load_damage(values["damage"], cp)
        cfg = CliConfig(seed=values["seed"], batch=values["batch"],
                        target_cov=values["target_cov"], max_sims=values["max_sims"],
                        duration=values["duration"], dt=values["dt"],
                        workers=max(1, values["workers"]), crn=bool(values["crn"]),
                        basis=basis, damage=damage)
        cfg.solver, cfg.convergence  # validate eagerly
    except (ValueError, DamageModelError) as exc:
        raise CliError(str(exc)) from exc
    return cfg


def _read_network(path: str, strict: bool = True) -> tuple[Network, list[str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    try:
        return read_inp(text, strict=strict)
    except InpSemanticError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INVALID) from exc
    except InpError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_model_outputs(out: Path, network: Network, result: ModelRunResult) -> None:
    name = result.spec.name
    _write(out / f"{name}.geojson", write_geojson(network, result.estimates, name))
    _write(out / f"{name}.csv", write_results_csv(result.estimates, name, network.nodes))


# --- commands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    network, notes = _read_network(args.network, strict=False)
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    report = validate(network)
    print(report.format())
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    network, notes = _read_network(args.network)
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    spec = ModelSpec.from_name(args.model)
    try:
        result = run_model(network, spec, cfg.damage, cfg.solver, cfg.convergence, cfg.seed,
                           workers=cfg.workers, crn=cfg.crn, basis=cfg.basis)
    except ArterialUndefinedError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    except ScenarioFailure as exc:
        raise CliError(f"{exc}\nreplay with --seed {cfg.seed} (scenario seed {exc.seed}, "
                       f"simulation index {exc.sim_index})") from exc
    out = Path(args.out)
    _write_model_outputs(out, network, result)
    _write(out / f"{spec.name}_summary.txt", result.summary(timings=False) + "\n")
    _write(out / f"{spec.name}_timing.txt",
           f"total_time_s={result.total_time:.3g}\n"
           f"time_per_simulation_s={result.time_per_simulation:.3g}\n")
    print(result.summary())
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = resolve_config(args)
    network, notes = _read_network(args.network)
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    out = Path(args.out_dir)
    try:
        report = run_matrix(network, cfg.damage, cfg.solver, cfg.convergence, cfg.seed,
                            crn=cfg.crn, workers=cfg.workers, basis=cfg.basis,
                            concurrent=args.concurrent,
                            on_result=lambda r: _write_model_outputs(out, network, r))
    except ModelRunError as exc:
        code = EXIT_INVALID if isinstance(exc.cause, ArterialUndefinedError) else EXIT_ERROR
        raise CliError(f"{exc} (outputs of finished models kept in {out})", code) from exc
    for a, b in report.scatter_pairs():
        _write(out / f"scatter_{a}_vs_{b}.csv", report.scatter_csv(a, b))
    _write(out / "report.txt", report.text(timings=False))
    _write(out / "report.kv", report.key_values())
    _write(out / "timing.kv", report.timing_key_values())
    print(report.text(), end="")
    return EXIT_OK


def cmd_arterial(args) -> int:
    network, _ = _read_network(args.network)
    try:
        arterial, mapping = extract_arterial(network)
    except ArterialUndefinedError as exc:
        raise CliError(f"arterial undefined: {exc}", EXIT_INVALID) from exc
    out = Path(args.out)
    mapping_path = Path(args.mapping) if args.mapping else out.with_name(out.stem + "_mapping.csv")
    _write(out, write_inp(arterial))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("node_id", "arterial_node"))
    for nid in network.nodes:
        w.writerow((nid, nid if nid in network.outfall_ids else mapping[nid]))
    _write(mapping_path, buf.getvalue())
    print(f"arterial network: {len(arterial.nodes)} of {len(network.nodes)} nodes -> {out}")
    print(f"mapping -> {mapping_path}")
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        params = SynthesisParams(node_count=args.nodes, pump_count=args.pumps,
                                 tank_count=args.tanks)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    network = generate_synthetic(params, args.seed)
    text = write_inp(network, title=f"synthetic network, {args.nodes} nodes, seed {args.seed}")
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _write(Path(args.out), text)
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("network", help="network in INP format")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--batch", type=int, help="simulations per batch (default 100)")
    p.add_argument("--target-cov", dest="target_cov", type=float,
                   help="stop when the average delta_pm falls below this (default 0.1)")
    p.add_argument("--max-sims", dest="max_sims", type=int,
                   help="simulation cap (default 10000)")
    p.add_argument("--duration", type=float, help="simulated time in s (default 3600)")
    p.add_argument("--dt", type=float, help="routing step in s (default 2)")
    p.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    p.add_argument("--damage", help="damage model INI file, or 'undamaged' / 'default'")
    p.add_argument("--basis", choices=[b.value for b in CapacityBasis],
                   help="capacity used for the 80%% utilization test (default effective)")
    p.add_argument("--config", help=f"INI config file (default ${CONFIG_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sewerrisk",
                                     description="Risk analysis of wastewater networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a network")
    p.add_argument("network")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="Monte Carlo estimate of nodal PM for one model")
    _add_run_flags(p)
    p.add_argument("--model", required=True, type=str.upper, choices=MODEL_NAMES)
    p.add_argument("--crn", action=argparse.BooleanOptionalAction, default=None,
                   help="use the master seed directly instead of a per-model stream")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run all six models and compare them")
    _add_run_flags(p)
    p.add_argument("--crn", type=_bool, metavar="{on,off}",
                   help="common random numbers across models (default off)")
    p.add_argument("--concurrent", action="store_true",
                   help="run the six models in parallel (timings become unreliable)")
    p.add_argument("--out-dir", dest="out_dir", default="compare_out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("arterial", help="extract the arterial network")
    p.add_argument("network")
    p.add_argument("--out", required=True, help="arterial INP path")
    p.add_argument("--mapping", help="mapping CSV path (default <out>_mapping.csv)")
    p.set_defaults(func=cmd_arterial)

    p = sub.add_parser("generate", help="write a seeded synthetic network")
    p.add_argument("--nodes", type=int, default=500)
    p.add_argument("--pumps", type=int, default=3)
    p.add_argument("--tanks", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="INP path, or - for stdout")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (NetworkError, RoutingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
