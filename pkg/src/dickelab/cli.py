"""Config-driven command line interface.

One JSON document declares exactly one command plus its parameters; flags
only choose the config path, output directory, verbosity, and a seed
override.  Every run writes its result artifacts (CSV for grids, JSON for
scalar results) plus manifest.json recording the config echo, package
version, effective seed, wall time, and sha256 checksums of the artifacts.

Exit codes: 0 success, 2 config error, 3 solver failure (non-convergence,
bad bracket), 4 resource limit.  Failures leave a machine-readable
error.json in the output directory when it is writable.

DICKELAB_WORKERS (default 1) fans ed-nscan system sizes out to a process
pool; results are collected in submission order so artifacts stay
byte-identical for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from . import __version__
from .cpb import CpbSpec, write_cpb_csv
from .errors import BracketError, ConfigError, ConvergenceError, ResourceLimitError, SolverError
from .exactdiag import (
    converge_cutoff,
    dump_state,
    ed_csv_header,
    ed_csv_row,
    ed_ground,
)
from .meanfield import (
    DEFAULT_GRID,
    DEFAULT_JUMP_THRESHOLD,
    DEFAULT_X_TOL,
    critical_coupling,
    no_go_check,
    scan_order_parameter,
    transition_to_dict,
    write_scan_csv,
)
from .model import DickeModel, model_from_dict, model_to_dict, trk_report

DEFAULT_SEED = 1234

COMMANDS = ("meanfield-scan", "critical", "no-go", "ed-ground", "ed-nscan",
            "cpb-sweet-spot", "trk-check")

_TOL_DEFAULTS = {
    "x_tol": DEFAULT_X_TOL,
    "jump_threshold": DEFAULT_JUMP_THRESHOLD,
    "grid_points": DEFAULT_GRID,
    "bisect_rel_width": 1e-8,
    "delta_rel": 1e-4,
    "lanczos_tol": 1e-10,
    "tol_e": 1e-8,
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    output: str | None
    echo: dict
    model: DickeModel | None = None
    scan_coupling: tuple[int, int] | None = None
    scan_values: tuple[float, ...] | None = None
    scan_tie: dict | None = None
    bracket: tuple[float, float] | None = None
    lambda_max: float | None = None
    n_points: int = 200
    kappa_rule: str = "fixed"
    ed_n_max: int | None = None
    ed_n_list: tuple[int, ...] | None = None
    ed_max_dim: int = 5_000_000
    ed_dump_state: bool = False
    cpb_specs: tuple[CpbSpec, ...] = ()
    tolerances: Mapping[str, float] = dataclasses.field(default_factory=dict)

    def tol(self, name: str) -> float:
        return self.tolerances.get(name, _TOL_DEFAULTS[name])


def _check_keys(doc: Mapping, allowed: set[str], path: str) -> None:
    if not isinstance(doc, Mapping):
        raise ConfigError(path, "expected a mapping")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")


def _get_number(doc, key, path, default=None, required=False):
    if key not in doc:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required key")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def _get_int(doc, key, path, default=None, required=False):
    if key not in doc:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required key")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {type(v).__name__}")
    return v


def _pair(value, path) -> tuple[int, int]:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
        raise ConfigError(path, "expected a pair of level indices [j, k]")
    j, k = value
    if j == k or j < 0 or k < 0:
        raise ConfigError(path, "level indices must be distinct and nonnegative")
    return (min(j, k), max(j, k))


def _parse_tie(doc, path, d):
    tie = {}
    if not isinstance(doc, Mapping):
        raise ConfigError(path, "expected a mapping of 'j,k' to ratio")
    for key, ratio in doc.items():
        parts = key.split(",")
        if len(parts) != 2:
            raise ConfigError(f"{path}.{key}", "key must look like 'j,k'")
        try:
            pair = _pair([int(parts[0]), int(parts[1])], f"{path}.{key}")
        except ValueError as exc:
            raise ConfigError(f"{path}.{key}", "key must look like 'j,k'") from exc
        if max(pair) >= d:
            raise ConfigError(f"{path}.{key}", f"level index out of range for d={d}")
        if isinstance(ratio, bool) or not isinstance(ratio, (int, float)):
            raise ConfigError(f"{path}.{key}", "expected a number")
        tie[pair] = float(ratio)
    return tie


def _parse_scan(doc, path, command, d):
    keys_by_command = {
        "meanfield-scan": {"coupling", "values", "tie"},
        "critical": {"coupling", "bracket", "tie"},
        "no-go": {"coupling", "lambda_max", "n_points", "kappa_rule"},
    }
    _check_keys(doc, keys_by_command[command], path)
    out: dict = {}
    if "coupling" not in doc:
        raise ConfigError(f"{path}.coupling", "missing required key")
    out["coupling"] = _pair(doc["coupling"], f"{path}.coupling")
    if max(out["coupling"]) >= d:
        raise ConfigError(f"{path}.coupling", f"level index out of range for d={d}")
    if "tie" in doc:
        out["tie"] = _parse_tie(doc["tie"], f"{path}.tie", d)
    if command == "meanfield-scan":
        values = doc.get("values")
        if not isinstance(values, (list, tuple)) or len(values) < 2:
            raise ConfigError(f"{path}.values", "expected a list of at least 2 values")
        vals = []
        for i, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{path}.values[{i}]", "expected a number")
            vals.append(float(v))
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError(f"{path}.values", "values must be strictly ascending")
        out["values"] = tuple(vals)
    elif command == "critical":
        br = doc.get("bracket")
        if not isinstance(br, (list, tuple)) or len(br) != 2:
            raise ConfigError(f"{path}.bracket", "expected [lo, hi]")
        lo = _get_number({"lo": br[0]}, "lo", path, required=True)
        hi = _get_number({"hi": br[1]}, "hi", path, required=True)
        if not 0 <= lo < hi:
            raise ConfigError(f"{path}.bracket", "need 0 <= lo < hi")
        out["bracket"] = (lo, hi)
    else:  # no-go
        lam_max = _get_number(doc, "lambda_max", path, required=True)
        if lam_max <= 0:
            raise ConfigError(f"{path}.lambda_max", "must be positive")
        out["lambda_max"] = lam_max
        n_points = _get_int(doc, "n_points", path, default=200)
        if n_points < 100:
            raise ConfigError(f"{path}.n_points", "must be at least 100")
        out["n_points"] = n_points
        rule = doc.get("kappa_rule", "fixed")
        if rule not in ("fixed", "trk-ground"):
            raise ConfigError(f"{path}.kappa_rule", "expected 'fixed' or 'trk-ground'")
        out["kappa_rule"] = rule
    return out


def _parse_cpb(doc, path) -> tuple[CpbSpec, ...]:
    _check_keys(doc, {"ec", "ej", "ng", "n_cut"}, path)
    lists = {}
    scalars = {}
    for key in ("ec", "ej", "ng"):
        if key not in doc:
            raise ConfigError(f"{path}.{key}", "missing required key")
        v = doc[key]
        if isinstance(v, (list, tuple)):
            vals = []
            for i, x in enumerate(v):
                if isinstance(x, bool) or not isinstance(x, (int, float)):
                    raise ConfigError(f"{path}.{key}[{i}]", "expected a number")
                vals.append(float(x))
            if not vals:
                raise ConfigError(f"{path}.{key}", "sweep list must not be empty")
            lists[key] = vals
        else:
            scalars[key] = _get_number(doc, key, path, required=True)
    if len(lists) > 1:
        raise ConfigError(f"{path}.{sorted(lists)[1]}",
                          "at most one of ec/ej/ng may be a sweep list")
    n_cut = _get_int(doc, "n_cut", path, default=None)
    specs = []
    sweep_key, sweep_vals = (next(iter(lists.items())) if lists else (None, [None]))
    for v in sweep_vals:
        params = dict(scalars)
        if sweep_key is not None:
            params[sweep_key] = v
        kw = {} if n_cut is None else {"n_cut": n_cut}
        try:
            specs.append(CpbSpec(ec=params["ec"], ej=params["ej"], ng=params["ng"], **kw))
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from exc
    return tuple(specs)


def parse_config(doc: Mapping) -> RunConfig:
    """Validate a config document; errors carry the offending field path."""
    top_allowed = {"command", "seed", "output", "model", "scan", "ed", "cpb", "tolerances"}
    _check_keys(doc, top_allowed, "$")
    command = doc.get("command")
    if command not in COMMANDS:
        raise ConfigError("$.command", f"expected one of {', '.join(COMMANDS)}")
    seed = _get_int(doc, "seed", "$", default=DEFAULT_SEED)
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("$.output", "expected a string path")

    tolerances = {}
    if "tolerances" in doc:
        _check_keys(doc["tolerances"], set(_TOL_DEFAULTS), "$.tolerances")
        for key in doc["tolerances"]:
            tolerances[key] = _get_number(doc["tolerances"], key, "$.tolerances", required=True)

    kwargs: dict = {}
    needs_model = command in ("meanfield-scan", "critical", "no-go",
                              "ed-ground", "ed-nscan", "trk-check")
    if needs_model:
        if "model" not in doc:
            raise ConfigError("$.model", "missing required key")
        model = model_from_dict(doc["model"], path="$.model")
        kwargs["model"] = model
        if "cpb" in doc:
            raise ConfigError("$.cpb", f"not used by command {command!r}")
    else:
        if "cpb" not in doc:
            raise ConfigError("$.cpb", "missing required key")
        for stray in ("model", "scan", "ed"):
            if stray in doc:
                raise ConfigError(f"$.{stray}", f"not used by command {command!r}")
        kwargs["cpb_specs"] = _parse_cpb(doc["cpb"], "$.cpb")

    if command in ("meanfield-scan", "critical", "no-go"):
        if "scan" not in doc:
            raise ConfigError("$.scan", "missing required key")
        if "ed" in doc:
            raise ConfigError("$.ed", f"not used by command {command!r}")
        scan = _parse_scan(doc["scan"], "$.scan", command, kwargs["model"].atom.d)
        kwargs["scan_coupling"] = scan["coupling"]
        kwargs["scan_values"] = scan.get("values")
        kwargs["scan_tie"] = scan.get("tie")
        kwargs["bracket"] = scan.get("bracket")
        kwargs["lambda_max"] = scan.get("lambda_max")
        kwargs["n_points"] = scan.get("n_points", 200)
        kwargs["kappa_rule"] = scan.get("kappa_rule", "fixed")
        if kwargs["kappa_rule"] == "trk-ground" and kwargs["model"].atom.energies[1] == 0.0:
            raise ConfigError("$.model.atom.energies", "degenerate ground transition")
    elif command in ("ed-ground", "ed-nscan"):
        if "scan" in doc:
            raise ConfigError("$.scan", f"not used by command {command!r}")
        ed = doc.get("ed", {})
        _check_keys(ed, {"n_max", "n_list", "max_dim", "dump_state"}, "$.ed")
        kwargs["ed_n_max"] = _get_int(ed, "n_max", "$.ed")
        kwargs["ed_max_dim"] = _get_int(ed, "max_dim", "$.ed", default=5_000_000)
        dump = ed.get("dump_state", False)
        if not isinstance(dump, bool):
            raise ConfigError("$.ed.dump_state", "expected a boolean")
        kwargs["ed_dump_state"] = dump
        if command == "ed-nscan":
            n_list = ed.get("n_list")
            if (not isinstance(n_list, (list, tuple)) or not n_list
                    or any(isinstance(n, bool) or not isinstance(n, int) or n < 1
                           for n in n_list)):
                raise ConfigError("$.ed.n_list", "expected a nonempty list of positive integers")
            kwargs["ed_n_list"] = tuple(n_list)
        elif "n_list" in ed:
            raise ConfigError("$.ed.n_list", "only used by ed-nscan")
    elif command == "trk-check":
        for stray in ("scan", "ed"):
            if stray in doc:
                raise ConfigError(f"$.{stray}", f"not used by command {command!r}")
        if kwargs["model"].atom.energies[1] == 0.0:
            raise ConfigError("$.model.atom.energies", "degenerate ground transition")

    return RunConfig(command=command, seed=seed, output=output,
                     echo=json.loads(json.dumps(doc)), tolerances=tolerances, **kwargs)


# ---------------------------------------------------------------------------
# command execution
# ---------------------------------------------------------------------------

def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _ed_result_csv(path: Path, rows: list, model: DickeModel) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ed_csv_header(model.atom.d))
        for result, row_model in rows:
            writer.writerow(ed_csv_row(result, row_model))


def _nscan_job(args):
    model, n, tol_e, lanczos_tol, seed, max_dim = args
    return converge_cutoff(model, tol_e=tol_e, n_atoms=n, tol=lanczos_tol,
                           seed=seed, max_dim=max_dim)


def run(cfg: RunConfig, outdir: Path, verbose: bool = False) -> dict[str, Path]:
    """Execute one parsed config; returns {artifact name: path} incl. manifest."""
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    written: dict[str, Path] = {}

    def emit(name: str) -> Path:
        written[name] = outdir / name
        return written[name]

    if cfg.command == "meanfield-scan":
        sols = scan_order_parameter(
            cfg.model, cfg.scan_coupling, cfg.scan_values, tie=cfg.scan_tie,
            n_grid=int(cfg.tol("grid_points")), x_tol=cfg.tol("x_tol"))
        write_scan_csv(emit("scan.csv"), cfg.scan_values, sols)
    elif cfg.command == "critical":
        tp = critical_coupling(
            cfg.model, cfg.scan_coupling, cfg.bracket, tie=cfg.scan_tie,
            x_tol=cfg.tol("x_tol"), jump_threshold=cfg.tol("jump_threshold"),
            rel_width=cfg.tol("bisect_rel_width"), delta_rel=cfg.tol("delta_rel"),
            n_grid=int(cfg.tol("grid_points")))
        _write_json(emit("transition.json"), transition_to_dict(tp))
    elif cfg.command == "no-go":
        ok = no_go_check(
            cfg.model, cfg.lambda_max, n_points=cfg.n_points,
            which=cfg.scan_coupling, kappa_rule=cfg.kappa_rule,
            x_tol=cfg.tol("x_tol"), n_grid=int(cfg.tol("grid_points")))
        _write_json(emit("nogo.json"), {
            "no_transition": ok,
            "coupling": list(cfg.scan_coupling),
            "lambda_max": cfg.lambda_max,
            "n_points": cfg.n_points,
            "kappa_rule": cfg.kappa_rule,
        })
    elif cfg.command == "ed-ground":
        if cfg.ed_n_max is not None:
            res = ed_ground(cfg.model, cfg.ed_n_max, tol=cfg.tol("lanczos_tol"),
                            seed=cfg.seed, max_dim=cfg.ed_max_dim,
                            keep_state=cfg.ed_dump_state)
        else:
            res = converge_cutoff(cfg.model, tol_e=cfg.tol("tol_e"),
                                  tol=cfg.tol("lanczos_tol"), seed=cfg.seed,
                                  max_dim=cfg.ed_max_dim,
                                  keep_state=cfg.ed_dump_state)
        _ed_result_csv(emit("ed.csv"), [(res, cfg.model)], cfg.model)
        if cfg.ed_dump_state:
            from .exactdiag import build_basis
            basis = build_basis(cfg.model.n_atoms, cfg.model.atom.d,
                                res.n_max_used, max_dim=cfg.ed_max_dim)
            dump_state(emit("psi0.npz"), res.psi0, basis)
    elif cfg.command == "ed-nscan":
        jobs = [(cfg.model, n, cfg.tol("tol_e"), cfg.tol("lanczos_tol"),
                 cfg.seed, cfg.ed_max_dim) for n in cfg.ed_n_list]
        workers = int(os.environ.get("DICKELAB_WORKERS", "1"))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_nscan_job, jobs))
        else:
            results = [_nscan_job(job) for job in jobs]
        rows = [(res, cfg.model.with_n_atoms(n))
                for res, n in zip(results, cfg.ed_n_list)]
        _ed_result_csv(emit("ed.csv"), rows, cfg.model)
    elif cfg.command == "cpb-sweet-spot":
        write_cpb_csv(emit("cpb.csv"), cfg.cpb_specs)
    elif cfg.command == "trk-check":
        report = trk_report(cfg.model)
        _write_json(emit("trk.json"), {
            "kappa": cfg.model.kappa,
            "kappa_min": report.kappa_min,
            "kappa_saturates_ground": report.kappa_saturates_ground,
            "unconstrained_transitions": [list(p) for p in report.unconstrained_transitions],
        })
    else:  # pragma: no cover - parse_config rejects unknown commands
        raise ConfigError("$.command", f"unhandled command {cfg.command!r}")

    wall = time.perf_counter() - t0
    checksums = {}
    for name, path in sorted(written.items()):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        checksums[name] = f"sha256:{digest}"
        if verbose:
            print(f"wrote {path} ({checksums[name][:18]}...)", file=sys.stderr)
    manifest = {
        "artifact_version": __version__,
        "command": cfg.command,
        "config": cfg.echo,
        "seed": cfg.seed,
        "wall_time_s": wall,
        "outputs": checksums,
    }
    _write_json(outdir / "manifest.json", manifest)
    written["manifest.json"] = outdir / "manifest.json"
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dickelab",
        description="Solvers for superradiant transitions in multilevel Dicke models.")
    parser.add_argument("config", help="path to a JSON config document")
    parser.add_argument("-o", "--output-dir", default=None,
                        help="directory for artifacts (default: config 'output' or cwd)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    outdir = Path(args.output_dir) if args.output_dir else None
    try:
        try:
            raw = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError("$", f"cannot read config: {exc}") from exc
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON: {exc}") from exc
        cfg = parse_config(doc)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        outdir = Path(args.output_dir or cfg.output or ".")
        run(cfg, outdir, verbose=args.verbose)
        return 0
    except ConfigError as exc:
        return _fail(outdir, exc, 2)
    except ResourceLimitError as exc:
        return _fail(outdir, exc, 4)
    except (ConvergenceError, BracketError, SolverError) as exc:
        return _fail(outdir, exc, 3)


def _fail(outdir: Path | None, exc: Exception, code: int) -> int:
    print(f"error: {exc}", file=sys.stderr)
    record = {"error_type": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        record["path"] = exc.path
    if isinstance(exc, ResourceLimitError) and exc.trace:
        record["trace"] = [[n, e] for n, e in exc.trace]
    if outdir is not None:
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            _write_json(outdir / "error.json", record)
        except OSError:
            pass
    return code


if __name__ == "__main__":
    raise SystemExit(main())
