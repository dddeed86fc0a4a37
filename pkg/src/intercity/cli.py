"""Command-line front end: ``intercity <command> [options]``.

Commands
--------
estimate      fit the nested logit and print the coefficient table
simulate      run scenarios; write share and induced-travel tables
accessibility per-observation logsum accessibility and destination utilities
synth         simulate choices from given parameters
validate      check spec, parameter, scenario, trip-model and data files
fixture       write the bundled corridor or recovery fixture to a directory

Every command except a dry run writes ``run-manifest.json`` into ``--out``.
Exit status is 0 on success, 1 for input or configuration errors and 2 for
numerical failures or non-convergence.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from ._design import CompiledDataset
from .choice import simulate_choices
from .estimation import estimate, format_report
from .exceptions import ConfigurationError, DomainError, NumericError, ValidationError

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERIC = 2
MANIFEST_NAME = "run-manifest.json"


class RunManifest:
    """Provenance record of one command invocation."""

    def __init__(self, command, argv, seed=None):
        self.command = command
        self.argv = list(argv)
        self.seed = seed
        self.inputs = {}
        self.outputs = []
        self._t0 = time.perf_counter()
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.status = "ok"

    def add_input(self, role, path):
        if path is not None:
            self.inputs[role] = {"path": str(path), "sha256": io.file_sha256(path)}

    def add_output(self, path):
        self.outputs.append(str(path))

    def to_dict(self):
        return {"command": self.command, "argv": self.argv, "tool_version": __version__,
                "seed": self.seed, "inputs": self.inputs, "outputs": self.outputs,
                "started": self.started,
                "elapsed_seconds": round(time.perf_counter() - self._t0, 3),
                "status": self.status}

    def write(self, out_dir):
        path = Path(out_dir) / MANIFEST_NAME
        self.add_output(path)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        return path


def _out_dir(args):
    if not args.out:
        raise ConfigurationError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise ConfigurationError(f"missing required option(s): {', '.join(missing)}")


def _load_spec(args, manifest):
    spec = io.load_model_spec(args.spec)
    manifest.add_input("spec", args.spec)
    return spec


def _load_data(args, manifest, spec, require_choice):
    data, _ = io.load_choice_dataset(args.data, spec, require_choice=require_choice)
    manifest.add_input("data", args.data)
    return data


def _load_params(args, manifest, spec):
    params = io.load_params(args.params, spec)
    manifest.add_input("params", args.params)
    return params


# -- commands ---------------------------------------------------------------

def cmd_estimate(args, manifest):
    _require(args, "spec", "data")
    spec = _load_spec(args, manifest)
    data = _load_data(args, manifest, spec, require_choice=True)
    init = _load_params(args, manifest, spec) if args.params else None
    if args.dry_run:
        return EXIT_OK
    out = _out_dir(args)
    result = estimate(spec, data, init, ll0_convention=args.ll0_convention,
                      max_iter=args.max_iter)
    report = format_report(result, spec)
    print(report)
    for name, writer in (("results.json", lambda p: io.save_results(result, p, spec)),
                         ("params.json", lambda p: io.save_params(result.params, p)),
                         ("report.txt", lambda p: p.write_text(report + "\n", encoding="utf-8"))):
        writer(out / name)
        manifest.add_output(out / name)
    if not result.converged:
        manifest.status = "not-converged"
        print(f"error: estimation did not converge: {result.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _share_rows(results):
    mode_rows, dest_rows, summary = [], [], []
    for sid, r in results.items():
        for cls in sorted(r.mode_shares):
            for mode, share in sorted(r.mode_shares[cls].items()):
                mode_rows.append({"scenario": sid, "distance_class": cls, "mode": mode,
                                  "share": share})
        for zone, share in sorted(r.destination_shares.items()):
            dest_rows.append({"scenario": sid, "zone": zone, "share": share})
        summary.append({"scenario": sid, "n_observations": r.n_observations,
                        "mean_accessibility": r.mean_accessibility,
                        "mean_trip_rate": r.mean_trip_rate,
                        "induced_index": "" if r.induced_index is None else r.induced_index})
    return mode_rows, dest_rows, summary


def cmd_simulate(args, manifest):
    from .scenarios import PURPOSES, run_scenarios

    _require(args, "spec", "params", "data", "scenarios")
    spec = _load_spec(args, manifest)
    params = _load_params(args, manifest, spec)
    data = _load_data(args, manifest, spec, require_choice=False)
    config = io.load_scenarios(args.scenarios)
    manifest.add_input("scenarios", args.scenarios)
    trip_model = None
    if args.trip_model:
        trip_model = io.load_trip_model(args.trip_model)
        manifest.add_input("trip_model", args.trip_model)
    if args.dry_run:
        return EXIT_OK
    out = _out_dir(args)
    purpose = args.purpose or (spec.purpose if spec.purpose in PURPOSES else None)
    results, table = run_scenarios(spec, params, data, config.scenarios,
                                   config.distance_classes, trip_model=trip_model,
                                   base_id=config.base, purpose=purpose,
                                   context=args.context, threads=args.threads)
    mode_rows, dest_rows, summary = _share_rows(results)
    files = {"mode_shares.csv": (mode_rows, ["scenario", "distance_class", "mode", "share"]),
             "destination_shares.csv": (dest_rows, ["scenario", "zone", "share"]),
             "scenario_summary.csv": (summary, None)}
    if table:
        files["induced_travel.csv"] = (table, ["scenario", "mean_trip_rate", "index"])
    for name, (rows, columns) in files.items():
        io.write_rows_csv(rows, out / name, columns)
        manifest.add_output(out / name)
    print(f"{len(results)} scenarios simulated; tables written to {out}")
    return EXIT_OK


def cmd_accessibility(args, manifest):
    _require(args, "spec", "params", "data")
    spec = _load_spec(args, manifest)
    params = _load_params(args, manifest, spec)
    data = _load_data(args, manifest, spec, require_choice=False)
    if args.dry_run:
        return EXIT_OK
    out = _out_dir(args)
    if args.context != "own":
        data = replace(data, observations=tuple(replace(o, context=args.context)
                                                for o in data.observations))
    compiled = CompiledDataset(spec, data, params.names)
    ev = compiled.evaluate(params.values())
    zones = list(spec.zones)
    rows = []
    for n, obs in enumerate(data.observations):
        row = {"obs_id": obs.obs_id, "individual_id": obs.individual_id,
               "context": obs.context, "accessibility": float(ev["access"][n])}
        row.update({f"V_{z}": "" for z in zones})
        rows.append(row)
    for k, (n, z) in enumerate(zip(compiled.nest_obs, compiled.nest_zone)):
        rows[n][f"V_{z}"] = float(ev["Vd"][k])
    path = out / "accessibility.csv"
    io.write_rows_csv(rows, path, ["obs_id", "individual_id", "context", "accessibility"]
                      + [f"V_{z}" for z in zones])
    manifest.add_output(path)
    print(f"accessibility for {len(rows)} observations written to {path}")
    return EXIT_OK


def cmd_synth(args, manifest):
    from .datasets import synthetic_population

    _require(args, "spec", "params")
    spec = _load_spec(args, manifest)
    params = _load_params(args, manifest, spec)
    if args.data:
        templates = _load_data(args, manifest, spec, require_choice=False)
    else:
        templates = synthetic_population(spec, args.n, args.seed)
    if args.dry_run:
        return EXIT_OK
    out = _out_dir(args)
    data = simulate_choices(spec, params, templates, args.seed)
    path = out / "data.csv"
    io.save_choice_dataset(data, path, spec.attributes)
    manifest.add_output(path)
    manifest.add_output(io.manifest_path(path))
    print(f"{len(data.observations)} observations written to {path}")
    return EXIT_OK


def _detect_kind(path):
    if Path(path).suffix.lower() == ".csv":
        return "data"
    d = io._read_json(path)
    for key, kind in (("spec_sha256", "results"), ("scenarios", "scenarios"),
                      ("coefficients", "trip-model"), ("params", "params"),
                      ("modes", "spec")):
        if key in d:
            return kind
    raise ConfigurationError(f"{path}: cannot tell what kind of file this is")


def _validate_one(path, spec):
    kind = _detect_kind(path)
    if kind == "spec":
        io.load_model_spec(path)
    elif kind == "params":
        io.load_params(path, spec)
    elif kind == "scenarios":
        io.load_scenarios(path)
    elif kind == "trip-model":
        io.load_trip_model(path)
    elif kind == "results":
        io.load_results(path)
    else:
        io.load_choice_dataset(path, spec, require_choice=False)
    return kind


def cmd_validate(args, manifest):
    paths = list(args.paths)
    spec = None
    failed = False
    if args.spec:
        try:
            spec = _load_spec(args, manifest)
            print(f"OK   {args.spec} (spec)")
        except (ConfigurationError, DomainError) as exc:
            _print_messages(args.spec, exc)
            failed = True
    if not paths and not args.spec:
        raise ConfigurationError("nothing to validate")
    for path in paths:
        try:
            kind = _validate_one(path, spec)
            manifest.add_input(kind, path)
            print(f"OK   {path} ({kind})")
        except (ConfigurationError, DomainError) as exc:
            _print_messages(path, exc)
            failed = True
    if failed:
        manifest.status = "invalid"
    return EXIT_INPUT if failed else EXIT_OK


def cmd_fixture(args, manifest):
    from .datasets import make_corridor, make_recovery_problem

    out = _out_dir(args)
    files = []
    if args.kind == "corridor":
        fx = make_corridor(args.purpose, args.n, args.seed)
        spec, params, data = fx["spec"], fx["params"], fx["dataset"]
        io.save_trip_model(fx["trip_model"], out / "trip_model.json")
        io.save_scenarios(fx["scenarios"], out / "scenarios.json")
        files += ["trip_model.json", "scenarios.json"]
    else:
        spec, params, data = make_recovery_problem(args.n, args.seed)
    io.save_model_spec(spec, out / "spec.json")
    io.save_params(params, out / "params.json")
    io.save_choice_dataset(data, out / "data.csv", spec.attributes)
    files += ["spec.json", "params.json", "data.csv", "data.manifest.json"]
    for name in files:
        manifest.add_output(out / name)
    print(f"{args.kind} fixture written to {out}")
    return EXIT_OK


# -- parser and dispatch ----------------------------------------------------

def _print_messages(where, exc):
    messages = getattr(exc, "messages", None) or [str(exc)]
    print(f"FAIL {where}", file=sys.stderr)
    for m in messages:
        print(f"  - {m}", file=sys.stderr)


def build_parser():
    parser = argparse.ArgumentParser(prog="intercity", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *extra):
        p.add_argument("--spec", help="model specification (JSON)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--dry-run", action="store_true",
                       help="validate inputs and print the run manifest only")
        for flag in extra:
            if flag == "data":
                p.add_argument("--data", help="long-format choice data (CSV)")
            elif flag == "params":
                p.add_argument("--params", help="parameter file (JSON)")
            elif flag == "seed":
                p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        return p

    p = common(sub.add_parser("estimate", help="estimate the choice model"), "data", "params")
    p.add_argument("--ll0-convention", choices=("equal-shares", "constants-only"),
                   default="equal-shares", help="null model for rho (default equal-shares)")
    p.add_argument("--max-iter", type=int, default=1000)
    p.set_defaults(func=cmd_estimate)

    p = common(sub.add_parser("simulate", help="run policy scenarios"), "data", "params")
    p.add_argument("--scenarios", help="scenario configuration (JSON)")
    p.add_argument("--trip-model", help="Poisson trip-generation model (JSON)")
    p.add_argument("--purpose", choices=("business", "non-business"),
                   help="scenario applicability filter (default: the model's purpose)")
    p.add_argument("--context", choices=("SP", "RP"), default="SP")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("accessibility", help="logsum accessibility per observation"),
               "data", "params")
    p.add_argument("--context", choices=("own", "SP", "RP"), default="own",
                   help="context used for utilities (default: each observation's own)")
    p.set_defaults(func=cmd_accessibility)

    p = common(sub.add_parser("synth", help="simulate choices"), "data", "params", "seed")
    p.add_argument("--n", type=int, default=1000,
                   help="individuals to generate when --data is not given")
    p.set_defaults(func=cmd_synth)

    p = common(sub.add_parser("validate", help="validate input files"))
    p.add_argument("paths", nargs="*", help="files to check (kind detected from content)")
    p.set_defaults(func=cmd_validate)

    p = common(sub.add_parser("fixture", help="write a bundled fixture"), "seed")
    p.add_argument("kind", choices=("corridor", "recovery"))
    p.add_argument("--purpose", choices=("business", "non-business"), default="business")
    p.add_argument("--n", type=int, default=300, help="number of individuals")
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    manifest = RunManifest(args.command, argv, getattr(args, "seed", None))
    try:
        code = args.func(args, manifest)
    except (ValidationError, ConfigurationError, DomainError, KeyError) as exc:
        _print_messages(args.command, exc)
        manifest.status = "input-error"
        code = EXIT_INPUT
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        _print_messages(args.command, exc)
        manifest.status = "numerical-error"
        code = EXIT_NUMERIC
    if args.dry_run:
        print(json.dumps(manifest.to_dict(), indent=2))
    elif args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        manifest.write(args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
