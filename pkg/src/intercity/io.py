"""Reading, validating and writing choice data, model specifications,
parameters, scenario configurations and results.

Choice data is long-format CSV: one row per ``(observation, zone, mode)``
with columns ``individual_id, obs_id, context, zone, mode, chosen, weight``
followed by prefixed attribute columns ``los.<name>``, ``cov.<name>`` and
``zone.<name>``. A sidecar ``<stem>.manifest.json`` carries the schema
version, counts, units and zone attributes. Everything else is JSON.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, ValidationError
from .scenarios import Scenario
from .structures import CONTEXTS, ChoiceDataset, ModelSpec, Observation, ParameterVector, Zone
from .tripgen import PoissonModel

SCHEMA_VERSION = 1
SUPPORTED_SCHEMAS = (1,)
BASE_COLUMNS = ("individual_id", "obs_id", "context", "zone", "mode", "chosen", "weight")
COST_UNIT = "Mil VND"
TIME_UNIT = "min"


@dataclass
class DatasetManifest:
    schema_version: int
    purpose: str
    counts: dict
    n_individuals: int
    n_rows: int
    attributes: dict = field(default_factory=dict)
    availability: dict = field(default_factory=dict)
    zones: dict = field(default_factory=dict)

    def to_dict(self):
        return {"schema_version": self.schema_version, "purpose": self.purpose,
                "counts": dict(self.counts), "n_individuals": self.n_individuals,
                "n_rows": self.n_rows, "attributes": dict(self.attributes),
                "availability": self.availability, "zones": self.zones}


def manifest_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _check_schema(d, what):
    version = d.get("schema_version", SCHEMA_VERSION)
    if version not in SUPPORTED_SCHEMAS:
        raise ValidationError(f"{what}: unsupported schema version {version!r}")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def spec_hash(spec):
    text = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- model specifications ---------------------------------------------------

def _term_attribute(spec, coef):
    """The single level-of-service attribute a coefficient multiplies, if any."""
    attrs = {name for t in spec.mode_terms if t.coef == coef
             for src, name in t.factors if src == "los" and len(t.factors) == 1}
    return attrs.pop() if len(attrs) == 1 else None


def unit_messages(spec):
    msgs = []
    for v in spec.vot:
        for coef, unit in ((v.cost, COST_UNIT), (v.time, TIME_UNIT)):
            attr = _term_attribute(spec, coef)
            if attr is None:
                continue
            declared = spec.attributes.get(attr)
            if declared is None:
                msgs.append(f"VOT {v.label!r}: attribute {attr!r} has no declared unit")
            elif declared != unit:
                msgs.append(f"VOT {v.label!r}: attribute {attr!r} must be in {unit!r}, "
                            f"declared {declared!r}")
    return msgs


def model_spec_from_dict(d):
    _check_schema(d, "model specification")
    spec = ModelSpec.from_dict(d)
    msgs = spec.validation_messages() + unit_messages(spec)
    if msgs:
        raise ValidationError(msgs)
    return spec


def load_model_spec(path):
    return model_spec_from_dict(_read_json(path))


def save_model_spec(spec, path):
    _write_json({"schema_version": SCHEMA_VERSION, **spec.to_dict()}, path)


# -- parameters -------------------------------------------------------------

def params_to_dict(params):
    return {"schema_version": SCHEMA_VERSION,
            "params": {n: {"value": params[n], "fixed": params.is_fixed(n)}
                       for n in params.names}}


def params_from_dict(d, spec=None):
    _check_schema(d, "parameter file")
    if "params" not in d:
        raise ValidationError("parameter file has no 'params' section")
    params = ParameterVector(d["params"])
    if spec is not None:
        msgs = params.check_against(spec)
        if msgs:
            raise ValidationError(msgs)
    return params


def load_params(path, spec=None):
    return params_from_dict(_read_json(path), spec)


def save_params(params, path):
    _write_json(params_to_dict(params), path)


# -- scenario configuration -------------------------------------------------

@dataclass
class ScenarioConfig:
    scenarios: list
    base: str = "S4"
    distance_classes: dict = field(default_factory=dict)

    def get(self, scenario_id):
        for s in self.scenarios:
            if s.id == scenario_id:
                return s
        raise KeyError(scenario_id)


def scenario_config_from_dict(d):
    _check_schema(d, "scenario configuration")
    try:
        scenarios = [Scenario.from_dict(s) for s in d["scenarios"]]
    except KeyError as exc:
        raise ConfigurationError(f"scenario configuration missing key {exc}") from None
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate scenario ids")
    base = d.get("base", "S4")
    if base not in ids:
        raise ValidationError(f"base scenario {base!r} is not defined")
    return ScenarioConfig(scenarios, base, dict(d.get("distance_classes", {})))


def load_scenarios(path):
    return scenario_config_from_dict(_read_json(path))


def save_scenarios(config, path):
    _write_json({"schema_version": SCHEMA_VERSION, "base": config.base,
                 "distance_classes": config.distance_classes,
                 "scenarios": [s.to_dict() for s in config.scenarios]}, path)


# -- trip generation models -------------------------------------------------

def load_trip_model(path):
    d = _read_json(path)
    _check_schema(d, "trip model")
    return PoissonModel.from_dict(d)


def save_trip_model(model, path):
    _write_json(_nan_to_none({"schema_version": SCHEMA_VERSION, **model.to_dict()}), path)


# -- estimation results -----------------------------------------------------

def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def results_to_dict(result, spec):
    return _nan_to_none({
        "schema_version": SCHEMA_VERSION,
        "spec_sha256": spec_hash(spec),
        "purpose": spec.purpose,
        "params": params_to_dict(result.params)["params"],
        "std_errors": dict(result.std_errors),
        "std_errors_available": result.std_errors_available,
        "std_error_method": result.std_error_method,
        "ll0": result.ll0, "ll1": result.ll1, "ll0_convention": result.ll0_convention,
        "rho": result.rho, "rho_adjusted": result.rho_adjusted,
        "n_free_params": result.n_free_params, "n_observations": result.n_observations,
        "converged": result.converged, "iterations": result.iterations,
        "gradient_norm": result.gradient_norm,
        "vot": dict(result.vot), "message": result.message,
    })


def save_results(result, path, spec):
    _write_json(results_to_dict(result, spec), path)


def load_results(path):
    from .estimation import EstimationResult

    d = _read_json(path)
    _check_schema(d, "results file")
    nan = float("nan")
    return EstimationResult(
        params=ParameterVector(d["params"]),
        std_errors={k: nan if v is None else v for k, v in d["std_errors"].items()},
        ll0=d["ll0"], ll1=d["ll1"], rho=d["rho"], rho_adjusted=d["rho_adjusted"],
        n_free_params=d["n_free_params"], n_observations=d["n_observations"],
        converged=d["converged"], iterations=d["iterations"],
        vot={k: nan if v is None else v for k, v in d["vot"].items()},
        std_errors_available=d["std_errors_available"],
        std_error_method=d.get("std_error_method", "hessian"),
        ll0_convention=d.get("ll0_convention", "equal-shares"),
        gradient_norm=nan if d.get("gradient_norm") is None else d["gradient_norm"],
        message=d.get("message", ""))


# -- choice data ------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def build_manifest(dataset, attributes=None):
    counts = {c: 0 for c in CONTEXTS}
    availability = {c: {} for c in CONTEXTS}
    for o in dataset.observations:
        counts[o.context] += 1
        for z, m in o.los:
            availability[o.context].setdefault(z, set()).add(m)
    availability = {c: {z: sorted(ms) for z, ms in sorted(av.items())}
                    for c, av in availability.items()}
    return DatasetManifest(
        schema_version=SCHEMA_VERSION, purpose=dataset.purpose, counts=counts,
        n_individuals=len({o.individual_id for o in dataset.observations}),
        n_rows=sum(len(o.los) for o in dataset.observations),
        attributes=dict(attributes or {}), availability=availability,
        zones={z: dict(zone.attributes) for z, zone in dataset.zones.items()})


def save_choice_dataset(dataset, path, attributes=None):
    """Write long-format CSV plus manifest sidecar; returns the manifest."""
    los_names, cov_names, zone_names = [], [], []
    for o in dataset.observations:
        for cell in o.los.values():
            los_names.extend(k for k in cell if k not in los_names)
        cov_names.extend(k for k in o.covariates if k not in cov_names)
    for zone in dataset.zones.values():
        zone_names.extend(k for k in zone.attributes if k not in zone_names)
    header = (list(BASE_COLUMNS) + [f"los.{n}" for n in los_names]
              + [f"cov.{n}" for n in cov_names] + [f"zone.{n}" for n in zone_names])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for o in dataset.observations:
            for (z, m), cell in o.los.items():
                zattrs = dataset.zones[z].attributes if z in dataset.zones else {}
                row = [o.individual_id, o.obs_id, o.context, z, m,
                       int(o.chosen == (z, m)), _fmt(o.weight)]
                row += [_fmt(cell[n]) if n in cell else "" for n in los_names]
                row += [_fmt(o.covariates[n]) if n in o.covariates else "" for n in cov_names]
                row += [_fmt(zattrs[n]) if n in zattrs else "" for n in zone_names]
                writer.writerow(row)
    manifest = build_manifest(dataset, attributes)
    _write_json(manifest.to_dict(), manifest_path(path))
    return manifest


def _parse_float(text, what, lineno, errors):
    try:
        value = float(text)
    except (TypeError, ValueError):
        errors.append(f"row {lineno}: {what} is not a number ({text!r})")
        return None
    if not math.isfinite(value):
        errors.append(f"row {lineno}: {what} is not finite")
        return None
    return value


def _spec_requirements(spec):
    need = {"los": set(), "cov": set(), "zone": set()}
    terms = list(spec.destination_terms) + list(spec.mode_terms) + list(spec.theta.terms)
    for t in terms:
        for src, name in t.factors:
            need[src].add(name)
    return need


def load_choice_dataset(path, spec=None, require_choice=True):
    """Parse and validate a long-format choice file.

    Every problem is collected before raising :class:`ValidationError`.

    Returns
    -------
    (ChoiceDataset, DatasetManifest)
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    sidecar = None
    if manifest_path(path).exists():
        sidecar = _read_json(manifest_path(path))
        _check_schema(sidecar, "dataset manifest")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = list(reader)
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if header is None or not rows:
        raise ValidationError("no observations")
    missing_cols = [c for c in BASE_COLUMNS if c not in header]
    if missing_cols:
        raise ValidationError(f"missing required columns: {missing_cols}")
    col = {name: i for i, name in enumerate(header)}
    los_cols = [(h[4:], i) for i, h in enumerate(header) if h.startswith("los.")]
    cov_cols = [(h[4:], i) for i, h in enumerate(header) if h.startswith("cov.")]
    zone_cols = [(h[5:], i) for i, h in enumerate(header) if h.startswith("zone.")]
    errors = []
    if spec is not None:
        need = _spec_requirements(spec)
        have = {"los": {n for n, _ in los_cols}, "cov": {n for n, _ in cov_cols},
                "zone": {n for n, _ in zone_cols}}
        if sidecar is not None:
            for attrs in sidecar.get("zones", {}).values():
                have["zone"] |= set(attrs)
        for src in need:
            for name in sorted(need[src] - have[src]):
                errors.append(f"column '{src}.{name}' required by the model is missing")

    zone_attrs = {}
    if sidecar is not None:
        zone_attrs = {z: dict(a) for z, a in sidecar.get("zones", {}).items()}
    groups = {}
    seen = {}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            errors.append(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            continue
        ind, oid, ctx, z, m = (row[col[c]].strip() for c in BASE_COLUMNS[:5])
        key = (ind, oid, z, m)
        if key in seen:
            errors.append(f"row {lineno}: duplicate (individual, trip, zone, mode) key "
                          f"{key} (first at row {seen[key]})")
            continue
        seen[key] = lineno
        if ctx not in CONTEXTS:
            errors.append(f"row {lineno}: context must be RP or SP, got {ctx!r}")
        chosen_text = row[col["chosen"]].strip()
        if chosen_text not in ("0", "1"):
            errors.append(f"row {lineno}: chosen must be 0 or 1, got {chosen_text!r}")
        weight = _parse_float(row[col["weight"]] or "1", "weight", lineno, errors)
        if weight is not None and weight <= 0:
            errors.append(f"row {lineno}: weight must be positive")
        cell = {}
        for name, i in los_cols:
            text = row[i].strip()
            if text == "":
                continue
            v = _parse_float(text, f"los.{name}", lineno, errors)
            if v is not None and v < 0:
                errors.append(f"row {lineno}: negative los.{name} ({v})")
            if v is not None:
                cell[name] = v
        covs = {}
        for name, i in cov_cols:
            text = row[i].strip()
            if text == "":
                errors.append(f"row {lineno}: missing covariate cov.{name}")
                continue
            v = _parse_float(text, f"cov.{name}", lineno, errors)
            if v is not None:
                covs[name] = v
        for name, i in zone_cols:
            text = row[i].strip()
            if text == "":
                continue
            v = _parse_float(text, f"zone.{name}", lineno, errors)
            if v is None:
                continue
            prev = zone_attrs.setdefault(z, {}).get(name)
            if prev is None:
                zone_attrs[z][name] = v
            elif prev != v:
                errors.append(f"row {lineno}: zone.{name} of {z} is {v}, elsewhere {prev}")
        g = groups.setdefault((ind, oid), {"context": ctx, "weight": weight, "covs": covs,
                                           "los": {}, "chosen": [], "first": lineno})
        if g["context"] != ctx:
            errors.append(f"row {lineno}: context differs within observation {oid}")
        if g["weight"] != weight:
            errors.append(f"row {lineno}: weight differs within observation {oid}")
        if g["covs"] != covs:
            errors.append(f"row {lineno}: covariates differ within observation {oid}")
        g["los"][(z, m)] = cell
        if (spec is not None and m in spec.modes and z in spec.zones and ctx in CONTEXTS
                and not spec.modes[m].offered(ctx, z)):
            what = "chosen alternative" if chosen_text == "1" else "alternative"
            errors.append(f"row {lineno}: {what} ({z}, {m}) is unavailable in {ctx} "
                          f"under the model specification")
        if chosen_text == "1":
            g["chosen"].append(((z, m), lineno))

    observations = []
    for (ind, oid), g in groups.items():
        if len(g["chosen"]) > 1:
            errors.append(f"rows {[ln for _, ln in g['chosen']]}: observation {oid} "
                          f"has more than one chosen alternative")
        elif not g["chosen"] and require_choice:
            errors.append(f"row {g['first']}: observation {oid} has no chosen alternative")
        chosen = g["chosen"][0][0] if len(g["chosen"]) == 1 else None
        if spec is not None and spec.modes:
            for (z, m) in g["los"]:
                if m not in spec.modes:
                    errors.append(f"observation {oid}: unknown mode {m!r}")
                if z not in spec.zones:
                    errors.append(f"observation {oid}: unknown zone {z!r}")
        observations.append(Observation(obs_id=oid, individual_id=ind, context=g["context"],
                                        covariates=g["covs"], los=g["los"], chosen=chosen,
                                        weight=g["weight"] if g["weight"] is not None else 1.0))
    zones = {z: Zone(z, a) for z, a in zone_attrs.items()}
    for o in observations:
        for z in o.zones():
            zones.setdefault(z, Zone(z, {}))
    purpose = (sidecar or {}).get("purpose", spec.purpose if spec is not None else "")
    dataset = ChoiceDataset(tuple(observations), zones, purpose)
    units = dict((sidecar or {}).get("attributes", {}))
    if spec is not None:
        for name, unit in spec.attributes.items():
            if name in units and units[name] != unit:
                errors.append(f"attribute {name!r}: data unit {units[name]!r} differs from "
                              f"model unit {unit!r}")
            units.setdefault(name, unit)
    if errors:
        raise ValidationError(errors)
    manifest = build_manifest(dataset, units)
    if sidecar is not None:
        if sidecar.get("counts") and {k: int(v) for k, v in sidecar["counts"].items()} != manifest.counts:
            errors.append(f"manifest counts {sidecar['counts']} do not match data {manifest.counts}")
        if "n_rows" in sidecar and sidecar["n_rows"] != manifest.n_rows:
            errors.append(f"manifest rows {sidecar['n_rows']} do not match data {manifest.n_rows}")
    if errors:
        raise ValidationError(errors)
    return dataset, manifest


def write_rows_csv(rows, path, columns=None):
    """Write a list of flat dicts as CSV (plot-ready tables)."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, (float, np.floating)) else v)
                             for k, v in r.items()})
