"""Policy scenarios: level-of-service transformations, aggregate shares and
induced travel relative to a base scenario."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._design import CompiledDataset
from .exceptions import ConfigurationError, DomainError
from .structures import CONTEXTS, ChoiceDataset, Zone
from .tripgen import predict_rate

ACTIONS = ("scale", "set", "copy", "add-mode", "remove-mode")
PURPOSES = ("business", "non-business")


@dataclass(frozen=True)
class Transformation:
    """One edit of the level of service or of a zone attribute.

    ``target`` selects cells: ``{"mode": m}`` (every zone), ``{"mode": m,
    "zone": z}``, or ``{"zone": z}`` for a zone attribute. ``scale`` and
    ``copy`` read the *baseline* value of ``source`` (default: the target
    cell itself), so ``{"action": "scale", "factor": 0.7, "source":
    {"mode": "airline"}}`` on target ``{"mode": "hsr"}`` sets HSR cost to
    70% of the airline fare offered in the same observation and zone.
    """
    target: dict
    action: str
    attribute: str | None = None
    factor: float | None = None
    value: float | None = None
    source: dict | None = None
    contexts: frozenset = frozenset(CONTEXTS)

    @classmethod
    def from_dict(cls, d):
        action = d.get("action")
        if action not in ACTIONS:
            raise ConfigurationError(f"unknown transformation action {action!r}")
        target = dict(d.get("target") or {})
        if not target or set(target) - {"mode", "zone"}:
            raise ConfigurationError(f"transformation target must use 'mode'/'zone': {target!r}")
        t = cls(target=target, action=action, attribute=d.get("attribute"),
                factor=None if d.get("factor") is None else float(d["factor"]),
                value=None if d.get("value") is None else float(d["value"]),
                source=None if d.get("source") is None else dict(d["source"]),
                contexts=frozenset(d.get("contexts", CONTEXTS)))
        t.check()
        return t

    def check(self):
        if self.action in ("scale", "set", "copy") and not self.attribute:
            raise ConfigurationError(f"{self.action} needs an attribute")
        if self.action == "scale" and (self.factor is None or self.factor <= 0):
            raise ConfigurationError("scale factors must be positive")
        if self.action == "set" and self.value is None:
            raise ConfigurationError("set needs a value")
        if self.action in ("copy", "add-mode") and not self.source:
            raise ConfigurationError(f"{self.action} needs a source")
        if self.action in ("add-mode", "remove-mode") and "mode" not in self.target:
            raise ConfigurationError(f"{self.action} needs a target mode")

    def to_dict(self):
        d = {"target": dict(self.target), "action": self.action}
        for key in ("attribute", "factor", "value", "source"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.contexts != frozenset(CONTEXTS):
            d["contexts"] = sorted(self.contexts)
        return d


@dataclass(frozen=True)
class Scenario:
    id: str
    transformations: tuple = ()
    purposes: frozenset = frozenset(PURPOSES)
    description: str = ""
    note: str = ""

    def applies_to(self, purpose):
        return purpose is None or purpose in self.purposes

    @classmethod
    def from_dict(cls, d):
        purposes = d.get("purposes", PURPOSES)
        if isinstance(purposes, str):
            purposes = list(PURPOSES) if purposes == "both" else [purposes]
        return cls(id=str(d["id"]),
                   transformations=tuple(Transformation.from_dict(t)
                                         for t in d.get("transformations", ())),
                   purposes=frozenset(purposes), description=d.get("description", ""),
                   note=d.get("note", ""))

    def to_dict(self):
        d = {"id": self.id, "purposes": sorted(self.purposes),
             "transformations": [t.to_dict() for t in self.transformations]}
        if self.description:
            d["description"] = self.description
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class ScenarioResult:
    scenario_id: str
    mode_shares: dict
    destination_shares: dict
    mean_accessibility: float
    mean_trip_rate: float = float("nan")
    induced_index: float | None = None
    n_observations: int = 0


def _apply_zone(t, i, base, zones):
    z = t.target["zone"]
    if z not in base.zones:
        raise ConfigurationError(f"transformation {i}: unknown zone {z!r}")
    attrs = dict(zones[z].attributes)
    if t.action == "set":
        attrs[t.attribute] = t.value
    elif t.action in ("scale", "copy"):
        src = (t.source or {}).get("zone", z)
        try:
            ref = base.zones[src].attributes[t.attribute]
        except KeyError:
            raise ConfigurationError(f"transformation {i}: zone {src!r} has no attribute "
                                     f"{t.attribute!r}") from None
        attrs[t.attribute] = ref * (t.factor if t.action == "scale" else 1.0)
    else:
        raise ConfigurationError(f"transformation {i}: {t.action} needs a mode target")
    zones[z] = Zone(z, attrs)


def apply_scenario(base, scenario):
    """Return a transformed copy of ``base``; ``base`` itself is never modified."""
    zones = dict(base.zones)
    obs_los = [{k: dict(v) for k, v in o.los.items()} for o in base.observations]
    for i, t in enumerate(scenario.transformations):
        if "mode" not in t.target:
            _apply_zone(t, i, base, zones)
            continue
        mode = t.target["mode"]
        zone_filter = t.target.get("zone")
        hits = 0
        for n, obs in enumerate(base.observations):
            if obs.context not in t.contexts:
                continue
            los = obs_los[n]
            if t.action == "add-mode":
                src_mode = t.source.get("mode")
                for z in obs.zones():
                    if zone_filter not in (None, z):
                        continue
                    if (z, src_mode) in obs.los and (z, mode) not in los:
                        los[(z, mode)] = dict(obs.los[(z, src_mode)])
                        hits += 1
                continue
            if t.action == "remove-mode":
                for key in [k for k in los if k[1] == mode and zone_filter in (None, k[0])]:
                    del los[key]
                    hits += 1
                if not los:
                    raise ConfigurationError(f"transformation {i}: observation {obs.obs_id} "
                                             f"would have no alternatives left")
                continue
            for key in list(los):
                z, m = key
                if m != mode or zone_filter not in (None, z):
                    continue
                hits += 1
                if t.action == "set":
                    los[key][t.attribute] = t.value
                    continue
                src_key = ((t.source or {}).get("zone", z), (t.source or {}).get("mode", m))
                ref_cell = obs.los.get(src_key)
                if ref_cell is None:
                    # cells added earlier in this scenario fall back to their copied values
                    ref_cell = los.get(src_key) if src_key == key else None
                if ref_cell is None or t.attribute not in ref_cell:
                    raise ConfigurationError(
                        f"transformation {i}: source {src_key}.{t.attribute} unavailable "
                        f"in observation {obs.obs_id}")
                factor = t.factor if t.action == "scale" else 1.0
                los[key][t.attribute] = factor * ref_cell[t.attribute]
        if hits == 0:
            raise ConfigurationError(f"transformation {i}: target {t.target} matches no "
                                     f"alternative in the dataset")
    new_obs = []
    for obs, los in zip(base.observations, obs_los):
        chosen = obs.chosen if obs.chosen in los else None
        new_obs.append(replace(obs, los=los, chosen=chosen))
    return ChoiceDataset(tuple(new_obs), zones, base.purpose)


def _individual_means(compiled, dataset, access):
    """Weight-averaged accessibility per individual, in first-seen order."""
    groups = {}
    for n, obs in enumerate(dataset.observations):
        g = groups.setdefault(obs.individual_id, [obs, 0.0, 0.0, 0])
        g[1] += obs.weight * access[n]
        g[2] += obs.weight
        g[3] += 1
    return [(g[0], g[1] / g[2], g[2] / g[3]) for g in groups.values()]


def simulate_shares(spec, params, dataset, distance_classes, trip_model=None,
                    context="SP", accessibility_feature="accessibility", scenario_id=""):
    """Probability-weighted mode shares by distance class, destination shares,
    mean accessibility and (with ``trip_model``) the mean predicted trip rate.

    Shares are sample enumeration over the observations of ``context`` (all
    observations when ``None``).
    """
    data = dataset.subset(context=context) if context is not None else dataset
    if not data.observations:
        raise DomainError(f"no {context} observations to simulate")
    unknown = sorted({z for o in data.observations for z in o.zones()} - set(distance_classes))
    if unknown:
        raise ConfigurationError(f"zones missing from the distance-class map: {unknown}")
    compiled = CompiledDataset(spec, data, params.names)
    ev = compiled.evaluate(params.values())
    p = compiled.joint_probabilities(params.values())
    pd = np.exp(ev["logPd"])
    w_rows = compiled.weights[compiled.nest_obs[compiled.row_nest]]
    w_nests = compiled.weights[compiled.nest_obs]

    mode_mass = {}
    for (z, m), wp in zip(compiled.row_keys, w_rows * p):
        cls = distance_classes[z]
        mode_mass.setdefault(cls, {}).setdefault(m, 0.0)
        mode_mass[cls][m] += wp
    mode_shares = {}
    for cls, masses in mode_mass.items():
        total = sum(masses.values())
        if total > 0:
            mode_shares[cls] = {m: v / total for m, v in masses.items()}
    dest_mass = {}
    for z, wp in zip(compiled.nest_zone, w_nests * pd):
        dest_mass[z] = dest_mass.get(z, 0.0) + wp
    total = sum(dest_mass.values())
    dest_shares = {z: v / total for z, v in dest_mass.items()}

    people = _individual_means(compiled, data, ev["access"])
    weights = np.array([w for _, _, w in people])
    acc = np.array([a for _, a, _ in people])
    mean_acc = float(np.sum(weights * acc) / np.sum(weights))
    mean_rate = float("nan")
    if trip_model is not None:
        rates = np.array([predict_rate(trip_model, {**obs.covariates, accessibility_feature: a})
                          for obs, a, _ in people])
        mean_rate = float(np.sum(weights * rates) / np.sum(weights))
    return ScenarioResult(scenario_id=scenario_id, mode_shares=mode_shares,
                          destination_shares=dest_shares, mean_accessibility=mean_acc,
                          mean_trip_rate=mean_rate, n_observations=len(data.observations))


def induced_travel_table(results, base_id):
    """Mean trip rate and ``100 * rate / base rate`` per scenario.

    ``results`` maps scenario id to a :class:`ScenarioResult` or directly to a
    mean rate.
    """
    def rate(r):
        return r.mean_trip_rate if isinstance(r, ScenarioResult) else float(r)

    if base_id not in results:
        raise ConfigurationError(f"base scenario {base_id!r} not among results")
    base = rate(results[base_id])
    if base == 0 or not np.isfinite(base):
        raise DomainError(f"base scenario {base_id!r} has trip rate {base}")
    rows = []
    for sid, r in results.items():
        value = rate(r)
        index = 100.0 * (value / base)
        if isinstance(r, ScenarioResult):
            r.induced_index = index
        rows.append({"scenario": sid, "mean_trip_rate": value, "index": index})
    return rows


def run_scenarios(spec, params, dataset, scenarios, distance_classes, trip_model=None,
                  base_id="S4", purpose=None, context="SP", threads=1, include_base_case=False):
    """Apply and simulate every scenario applicable to ``purpose``.

    Returns the ordered result mapping and the induced-travel rows (empty when
    no trip model is supplied). ``include_base_case`` adds the untransformed
    dataset under the id ``"base"``.
    """
    chosen = [s for s in scenarios if s.applies_to(purpose)]
    if include_base_case and not any(s.id == "base" for s in chosen):
        chosen = [Scenario("base")] + chosen

    def one(s):
        return simulate_shares(spec, params, apply_scenario(dataset, s), distance_classes,
                               trip_model=trip_model, context=context, scenario_id=s.id)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, chosen))
    else:
        outcomes = [one(s) for s in chosen]
    results = {s.id: r for s, r in zip(chosen, outcomes)}
    table = []
    if trip_model is not None and base_id in results:
        table = induced_travel_table(results, base_id)
    return results, table
