"""Command-line front end: validated experiment configs in, CSV/JSON out.

Every run writes its declared outputs plus a manifest.json recording the
resolved configuration, library versions, wall time, and a sha256 checksum
per output file. All randomness flows through the single `seed` parameter;
reruns of an identical config reproduce every output byte for byte (the
manifest's wall-time field is the one legitimately volatile value).

Exit codes: 0 success, 2 config validation failure, 3 numerical guard
(stability, capacity), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .branchstats import (
    branch_tree_to_csv,
    central_moment,
    convergence_demo,
    convergence_to_csv,
    enumerate_branch_tree,
    expected_frequency,
)
from .errors import DomainError, GuardError, MvLabError, ProtocolError
from .evolution import (
    classical_ensemble_evolve,
    classical_to_csv,
    evolution_to_csv,
    evolve_schrodinger,
)
from .fields import (
    PhysicalParams,
    SpatialGrid,
    free_potential,
    harmonic_potential,
    make_gaussian_packet,
)
from .madelung import decompose, polar_to_csv, quantum_potential, quantum_potential_to_csv
from .spins import (
    Direction,
    apply_measurement,
    branches_to_json,
    chsh,
    classical_chsh_bound,
    correlation,
    rotate_second_basis,
    singlet,
    unset_pointers,
)
from .universes import (
    crossing_count,
    density_transport_check,
    integrate_universes,
    stratified_positions,
    trajectories_to_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_IO = 4


class ConfigError(MvLabError):
    """Configuration rejected before any computation ran."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    parameters: dict


class Param:
    """One schema entry: name, JSON kind, optional range check."""

    def __init__(self, name, kind, required=True, default=None, check=None, note=""):
        self.name = name
        self.kind = kind  # int | float | str | int_list | float_list
        self.required = required
        self.default = default
        self.check = check
        self.note = note


def _coerce(param: Param, value):
    kind = param.kind
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"parameter {param.name!r} must be an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"parameter {param.name!r} must be a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"parameter {param.name!r} must be a string, got {value!r}")
        return value
    if kind in ("int_list", "float_list"):
        if not isinstance(value, (list, tuple)) or len(value) == 0:
            raise ConfigError(f"parameter {param.name!r} must be a nonempty list, got {value!r}")
        out = []
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"parameter {param.name!r} must contain numbers, got {item!r}")
            if kind == "int_list":
                if not isinstance(item, int):
                    raise ConfigError(f"parameter {param.name!r} must contain integers, got {item!r}")
                out.append(item)
            else:
                out.append(float(item))
        return out
    raise AssertionError(f"unhandled parameter kind {kind}")


def _validate(schema: list[Param], raw: dict, experiment: str) -> dict:
    by_name = {p.name: p for p in schema}
    for key in raw:
        if key not in by_name:
            raise ConfigError(f"unknown parameter {key!r} for experiment {experiment!r}")
    out = {}
    for param in schema:
        if param.name in raw:
            value = _coerce(param, raw[param.name])
        elif param.required:
            raise ConfigError(f"missing required parameter {param.name!r} for {experiment!r}")
        else:
            value = param.default
        if value is not None and param.check is not None and not param.check(value):
            raise ConfigError(
                f"parameter {param.name!r} out of range: {value!r} (expected {param.note})"
            )
        out[param.name] = value
    return out


_GRID = [
    Param("x_min", "float"),
    Param("x_max", "float"),
    Param("n_points", "int", check=lambda v: v >= 8, note="n_points >= 8"),
    Param("boundary", "str", check=lambda v: v in ("periodic", "dirichlet"),
          note="'periodic' or 'dirichlet'"),
]
_PHYSICS = [
    Param("hbar", "float", check=lambda v: v > 0, note="hbar > 0"),
    Param("mass", "float", check=lambda v: v > 0, note="mass > 0"),
]
_PACKET = [
    Param("x0", "float"),
    Param("sigma", "float", check=lambda v: v > 0, note="sigma > 0"),
    Param("k0", "float"),
]
_NODE_EPS = Param(
    "node_epsilon", "float", required=False, default=1e-6,
    check=lambda v: 0 < v <= 0.1, note="0 < node_epsilon <= 0.1",
)


def _build_grid(p):
    return SpatialGrid(p["x_min"], p["x_max"], p["n_points"], p["boundary"])


def _build_packet(p, grid, params):
    return make_gaussian_packet(grid, p["x0"], p["sigma"], p["k0"], params)


def _build_potential(p, grid, params):
    if p["potential"] == "harmonic":
        if p.get("omega") is None:
            raise ConfigError("parameter 'omega' is required when potential='harmonic'")
        return harmonic_potential(grid, p["omega"], params)
    return free_potential(grid)


def _json_writer(payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    return lambda path: Path(path).write_text(text, newline="\n")


def _run_evolve(p):
    params = PhysicalParams(p["hbar"], p["mass"])
    grid = _build_grid(p)
    wf0 = _build_packet(p, grid, params)
    potential = _build_potential(p, grid, params)
    record = evolve_schrodinger(wf0, potential, params, p["dt"], p["n_steps"], p["snapshot_stride"])
    return {"evolution.csv": lambda path: evolution_to_csv(record, path)}


def _run_decompose(p):
    params = PhysicalParams(p["hbar"], p["mass"])
    grid = _build_grid(p)
    wf = _build_packet(p, grid, params)
    polar = decompose(wf, params, p["node_epsilon"])
    qp = quantum_potential(polar, params)
    return {
        "polar.csv": lambda path: polar_to_csv(polar, path),
        "quantum_potential.csv": lambda path: quantum_potential_to_csv(qp, path),
    }


def _transport_to_csv(report, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("t,fraction,expected,deviation\n")
        for t, frac, dev in zip(report.times, report.fractions, report.deviations):
            fh.write(
                f"{float(t)!r},{float(frac)!r},{float(report.expected)!r},{float(dev)!r}\n"
            )


def _run_universes(p):
    params = PhysicalParams(p["hbar"], p["mass"])
    grid = _build_grid(p)
    wf0 = _build_packet(p, grid, params)
    record = evolve_schrodinger(
        wf0, free_potential(grid), params, p["dt"], p["n_steps"], p["snapshot_stride"]
    )
    polar0 = decompose(record.snapshots[0], params, p["node_epsilon"])
    starts = stratified_positions(polar0, p["n_trajectories"])
    ensemble = integrate_universes(record, starts, params, p["node_epsilon"])
    report = density_transport_check(
        record, ensemble, (p["interval_a"], p["interval_b"]), params, p["node_epsilon"]
    )
    return {
        "trajectories.csv": lambda path: trajectories_to_csv(ensemble, path),
        "transport.csv": lambda path: _transport_to_csv(report, path),
    }


def _run_caustic(p):
    params = PhysicalParams(p["hbar"], p["mass"])
    grid = _build_grid(p)
    if not (p["span"] < min(abs(grid.x_min), abs(grid.x_max))):
        raise ConfigError("parameter 'span' must fit inside the grid")
    positions = np.linspace(-p["span"], p["span"], p["n_trajectories"])
    velocities = -positions / p["focus_time"]
    n_steps = int(round(p["t_total"] / p["dt"]))
    record = classical_ensemble_evolve(
        positions, velocities, free_potential(grid), params, p["dt"], n_steps
    )
    payload = {
        "crossing_count": crossing_count(record.ensemble),
        "n_trajectories": p["n_trajectories"],
        "focus_time": p["focus_time"],
        "t_total": n_steps * p["dt"],
    }
    return {
        "classical.csv": lambda path: classical_to_csv(record, path),
        "caustic.json": _json_writer(payload),
    }


def _run_spin_split(p):
    state = singlet(Direction(0.0))
    if p["theta"] != 0.0:
        state = rotate_second_basis(state, Direction(p["theta"]))
    branches = apply_measurement(state, unset_pointers())
    return {"branches.json": lambda path: branches_to_json(branches, path)}


def _run_branch_stats(p):
    tree = enumerate_branch_tree(p["N"], p["p"])
    payload = {
        "N": p["N"],
        "p": p["p"],
        "expected_frequency": expected_frequency(p["N"], p["p"]),
        "central_moments": {str(m): central_moment(m, p["N"], p["p"]) for m in (2, 3, 4)},
        "tree_frequency_mean": tree.frequency_mean(),
        "tree_variance": tree.frequency_central_moment(2),
    }
    return {
        "branch_tree.csv": lambda path: branch_tree_to_csv(tree, path),
        "moments.json": _json_writer(payload),
    }


def _branch_correlation(theta: float) -> float:
    """Independent route to E(theta): sum of weight * (+-1 product) over branches."""
    state = singlet(Direction(0.0))
    if theta != 0.0:
        state = rotate_second_basis(state, Direction(theta))
    sign = {"up": 1.0, "down": -1.0}
    return sum(
        b.weight * sign[b.spin_labels[0]] * sign[b.spin_labels[1]]
        for b in apply_measurement(state, unset_pointers())
    )


def _run_bell(p):
    thetas = np.linspace(0.0, math.pi, p["n_theta"])

    def write_correlation(path):
        with open(path, "w", newline="\n") as fh:
            fh.write("theta,closed_form,branch_sum\n")
            for theta in thetas:
                t = float(theta)
                fh.write(f"{t!r},{correlation(t)!r},{_branch_correlation(t)!r}\n")

    a, ap, b, bp = p["angles"]
    s = chsh(a, ap, b, bp)
    payload = {
        "angles": {"a": a, "a_prime": ap, "b": b, "b_prime": bp},
        "chsh": s,
        "abs_chsh": abs(s),
        "classical_max": classical_chsh_bound(),
    }
    return {
        "correlation.csv": write_correlation,
        "bell.json": _json_writer(payload),
    }


def _run_convergence(p):
    rows = convergence_demo(p["N_values"], p["p"], p["seed"])
    return {"convergence.csv": lambda path: convergence_to_csv(rows, path)}


EXPERIMENTS = {
    "evolve": (
        _GRID + _PHYSICS + _PACKET + [
            Param("potential", "str", check=lambda v: v in ("free", "harmonic"),
                  note="'free' or 'harmonic'"),
            Param("omega", "float", required=False, check=lambda v: v > 0, note="omega > 0"),
            Param("dt", "float", check=lambda v: v > 0, note="dt > 0"),
            Param("n_steps", "int", check=lambda v: v >= 0, note="n_steps >= 0"),
            Param("snapshot_stride", "int", required=False,
                  check=lambda v: v >= 1, note="snapshot_stride >= 1"),
        ],
        _run_evolve,
    ),
    "decompose": (_GRID + _PHYSICS + _PACKET + [_NODE_EPS], _run_decompose),
    "universes": (
        _GRID + _PHYSICS + _PACKET + [
            Param("dt", "float", check=lambda v: v > 0, note="dt > 0"),
            Param("n_steps", "int", check=lambda v: v >= 1, note="n_steps >= 1"),
            Param("snapshot_stride", "int", required=False,
                  check=lambda v: v >= 1, note="snapshot_stride >= 1"),
            Param("n_trajectories", "int", check=lambda v: v >= 1, note="n_trajectories >= 1"),
            Param("interval_a", "float"),
            Param("interval_b", "float"),
            _NODE_EPS,
        ],
        _run_universes,
    ),
    "caustic": (
        _GRID + _PHYSICS + [
            Param("n_trajectories", "int", check=lambda v: v >= 2, note="n_trajectories >= 2"),
            Param("span", "float", check=lambda v: v > 0, note="span > 0"),
            Param("focus_time", "float", check=lambda v: v > 0, note="focus_time > 0"),
            Param("t_total", "float", check=lambda v: v > 0, note="t_total > 0"),
            Param("dt", "float", check=lambda v: v > 0, note="dt > 0"),
        ],
        _run_caustic,
    ),
    "spin_split": (
        [Param("theta", "float", check=lambda v: 0 <= v <= math.pi, note="0 <= theta <= pi")],
        _run_spin_split,
    ),
    "branch_stats": (
        [
            Param("N", "int", check=lambda v: v >= 1, note="N >= 1"),
            Param("p", "float", check=lambda v: 0 <= v <= 1, note="0 <= p <= 1"),
        ],
        _run_branch_stats,
    ),
    "bell": (
        [
            Param("angles", "float_list", check=lambda v: len(v) == 4,
                  note="exactly 4 analyzer angles"),
            Param("n_theta", "int", check=lambda v: v >= 2, note="n_theta >= 2"),
        ],
        _run_bell,
    ),
    "convergence": (
        [
            Param("N_values", "int_list",
                  check=lambda v: all(n >= 1 for n in v) and all(b > a for a, b in zip(v, v[1:])),
                  note="increasing integers >= 1"),
            Param("p", "float", check=lambda v: 0 <= v <= 1, note="0 <= p <= 1"),
            Param("seed", "int"),
        ],
        _run_convergence,
    ),
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    return {
        "mvlab": __version__,
        "numpy": np.__version__,
        "python": sys.version.split()[0],
        "scipy": scipy.__version__,
    }


def _write_manifest(out_dir: Path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    (out_dir / "manifest.json").write_text(text, newline="\n")


def run(config: ExperimentConfig, out_dir=".", quiet: bool = False) -> int:
    """Execute one experiment; returns the process exit status."""
    if config.experiment not in EXPERIMENTS:
        print(f"error: unknown experiment {config.experiment!r}", file=sys.stderr)
        return EXIT_CONFIG
    schema, pipeline = EXPERIMENTS[config.experiment]
    started = time.perf_counter()
    try:
        parameters = _validate(schema, config.parameters, config.experiment)
        outputs = pipeline(parameters)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardError as exc:
        print(f"error: numerical guard tripped: {exc}", file=sys.stderr)
        return EXIT_GUARD

    out_path = Path(out_dir)
    manifest = {
        "experiment": config.experiment,
        "parameters": parameters,
        "status": "ok",
        "versions": _versions(),
        "outputs": {},
    }
    try:
        out_path.mkdir(parents=True, exist_ok=True)
        for name, writer in outputs.items():
            writer(out_path / name)
            manifest["outputs"][name] = _sha256(out_path / name)
        manifest["wall_time_s"] = time.perf_counter() - started
        _write_manifest(out_path, manifest)
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        manifest["status"] = "failed"
        manifest["error"] = str(exc)
        manifest["wall_time_s"] = time.perf_counter() - started
        try:
            _write_manifest(out_path, manifest)
        except OSError:
            pass
        return EXIT_IO
    if not quiet:
        names = ", ".join(list(outputs) + ["manifest.json"])
        print(f"{config.experiment}: wrote {names} to {out_path}")
    return EXIT_OK


def _parse_set(entries) -> dict:
    overrides = {}
    for entry in entries or []:
        key, sep, raw = entry.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {entry!r}")
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    return overrides


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mvlab",
        description="Run one experiment from a JSON config and emit CSV/JSON artifacts.",
    )
    parser.add_argument("experiment", help=f"one of: {', '.join(sorted(EXPERIMENTS))}")
    parser.add_argument("--config", required=True, help="path to a JSON parameter file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config parameter (value parsed as JSON)")
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--quiet", action="store_true", help="suppress the summary line")
    args = parser.parse_args(argv)

    if args.experiment not in EXPERIMENTS:
        print(f"error: unknown experiment {args.experiment!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(raw, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG

    parameters = dict(raw)
    declared = parameters.pop("experiment", None)
    if declared is not None and declared != args.experiment:
        print(
            f"error: config declares experiment {declared!r} but {args.experiment!r} was requested",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    try:
        parameters.update(_parse_set(args.set))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        schema, _ = EXPERIMENTS[args.experiment]
        if not any(p.name == "seed" for p in schema):
            print(
                f"error: experiment {args.experiment!r} does not accept parameter 'seed'",
                file=sys.stderr,
            )
            return EXIT_CONFIG
        parameters["seed"] = args.seed

    config = ExperimentConfig(args.experiment, parameters)
    return run(config, out_dir=args.out_dir, quiet=args.quiet)


if __name__ == "__main__":
    raise SystemExit(main())
