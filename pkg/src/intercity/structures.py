"""Domain types: zones, modes, utility terms, model specifications,
observations, datasets and parameter vectors.

All containers are immutable by convention. Operations that "modify" a
dataset (scenario transformations, simulation) build new objects.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .exceptions import ConfigurationError

CONTEXTS = ("RP", "SP")
FACTOR_SOURCES = ("los", "zone", "cov")


def parse_factor(text):
    """Split ``"los.cost"`` into ``("los", "cost")``."""
    source, sep, name = str(text).partition(".")
    if not sep or source not in FACTOR_SOURCES or not name:
        raise ConfigurationError(
            f"attribute reference {text!r} must look like '<source>.<name>' "
            f"with source in {FACTOR_SOURCES}")
    return source, name


def _frozen(values):
    if values is None:
        return None
    if isinstance(values, str):
        values = [values]
    return frozenset(str(v) for v in values)


@dataclass(frozen=True)
class Zone:
    id: str
    attributes: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Mode:
    """A travel mode and the (context, zone) cells where it may be offered."""
    id: str
    availability: Mapping[str, frozenset] = field(default_factory=dict)

    def offered(self, context, zone):
        return zone in self.availability.get(context, ())


@dataclass(frozen=True)
class UtilityTerm:
    """One ``coefficient x attribute`` contribution to a linear index.

    ``factors`` is a tuple of ``(source, name)`` pairs whose product is the
    attribute value; an empty tuple is an alternative-specific constant.
    ``modes``/``zones`` restrict the alternatives the term applies to
    (``None`` means all). ``scaled`` marks mode-level terms multiplied by the
    RP/SP scale parameter in the scaled context.
    """
    coef: str
    factors: tuple = ()
    modes: frozenset | None = None
    zones: frozenset | None = None
    contexts: frozenset = frozenset(CONTEXTS)
    scaled: bool = True

    @property
    def is_constant(self):
        return not self.factors

    def applies(self, context, zone, mode=None):
        if context not in self.contexts:
            return False
        if self.zones is not None and zone not in self.zones:
            return False
        if mode is not None and self.modes is not None and mode not in self.modes:
            return False
        return True

    @classmethod
    def from_dict(cls, d):
        attr = d.get("attr", ())
        if isinstance(attr, str):
            attr = [attr]
        contexts = _frozen(d.get("contexts", CONTEXTS))
        bad = contexts - set(CONTEXTS)
        if bad:
            raise ConfigurationError(f"term {d.get('coef')!r}: unknown contexts {sorted(bad)}")
        if "coef" not in d:
            raise ConfigurationError(f"utility term without 'coef': {d!r}")
        return cls(coef=str(d["coef"]),
                   factors=tuple(parse_factor(a) for a in attr),
                   modes=_frozen(d.get("modes")),
                   zones=_frozen(d.get("zones")),
                   contexts=contexts,
                   scaled=bool(d.get("scaled", True)))

    def to_dict(self):
        d = {"coef": self.coef}
        if self.factors:
            d["attr"] = [f"{s}.{n}" for s, n in self.factors]
        if self.modes is not None:
            d["modes"] = sorted(self.modes)
        if self.zones is not None:
            d["zones"] = sorted(self.zones)
        d["contexts"] = [c for c in CONTEXTS if c in self.contexts]
        if not self.scaled:
            d["scaled"] = False
        return d


@dataclass(frozen=True)
class ThetaSpec:
    """Covariates of the logistic logsum coefficient.

    ``fixed`` pins theta to a constant in (0, 1]; ``fixed=1.0`` collapses the
    nest structure to a flat multinomial logit and is meant for testing.
    """
    terms: tuple = ()
    fixed: float | None = None

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return cls()
        fixed = d.get("fixed")
        if fixed is not None and not 0.0 < float(fixed) <= 1.0:
            raise ConfigurationError(f"fixed theta must lie in (0, 1], got {fixed}")
        terms = tuple(UtilityTerm.from_dict(t) for t in d.get("terms", ()))
        for t in terms:
            if any(src == "los" for src, _ in t.factors):
                raise ConfigurationError(
                    f"theta term {t.coef!r} may not reference mode level-of-service attributes")
        return cls(terms=terms, fixed=None if fixed is None else float(fixed))

    def to_dict(self):
        d = {"terms": [t.to_dict() for t in self.terms]}
        if self.fixed is not None:
            d["fixed"] = self.fixed
        return d


@dataclass(frozen=True)
class ScaleSpec:
    """Scale parameter ``coef`` multiplying mode utilities in ``context``."""
    coef: str
    context: str = "SP"


@dataclass(frozen=True)
class VotSpec:
    label: str
    time: str
    cost: str


@dataclass(frozen=True)
class ModelSpec:
    purpose: str
    zones: tuple
    modes: Mapping[str, Mode]
    destination_terms: tuple = ()
    mode_terms: tuple = ()
    theta: ThetaSpec = ThetaSpec()
    scale: ScaleSpec | None = None
    attributes: Mapping[str, str] = field(default_factory=dict)
    vot: tuple = ()

    def coefficient_names(self):
        """Coefficient names in first-reference order."""
        names = []
        seen = set()
        terms = list(self.destination_terms) + list(self.theta.terms) + list(self.mode_terms)
        for t in terms:
            if t.coef not in seen:
                seen.add(t.coef)
                names.append(t.coef)
        if self.scale is not None and self.scale.coef not in seen:
            names.append(self.scale.coef)
        return names

    def modes_offered(self, context, zone):
        return [m for m, mode in self.modes.items() if mode.offered(context, zone)]

    def validation_messages(self):
        msgs = []
        zones = set(self.zones)
        for kind, terms in (("destination", self.destination_terms),
                            ("mode", self.mode_terms),
                            ("theta", self.theta.terms)):
            for t in terms:
                if t.zones is not None and not t.zones <= zones:
                    msgs.append(f"{kind} term {t.coef!r} references unknown zones "
                                f"{sorted(t.zones - zones)}")
                if t.modes is not None and not t.modes <= set(self.modes):
                    msgs.append(f"{kind} term {t.coef!r} references unknown modes "
                                f"{sorted(t.modes - set(self.modes))}")
                if kind != "mode" and t.modes is not None:
                    msgs.append(f"{kind} term {t.coef!r} may not be restricted to modes")
                if kind == "destination" and any(s == "los" for s, _ in t.factors):
                    msgs.append(f"destination term {t.coef!r} may not use mode attributes")
        for mode in self.modes.values():
            for ctx, zs in mode.availability.items():
                if ctx not in CONTEXTS:
                    msgs.append(f"mode {mode.id!r}: unknown context {ctx!r}")
                elif not set(zs) <= zones:
                    msgs.append(f"mode {mode.id!r}: unknown zones {sorted(set(zs) - zones)}")
        if self.scale is not None and self.scale.context not in CONTEXTS:
            msgs.append(f"scale context must be one of {CONTEXTS}, got {self.scale.context!r}")
        # one mode per nest keeps an implicit zero constant
        for ctx in CONTEXTS:
            for z in self.zones:
                offered = self.modes_offered(ctx, z)
                if len(offered) < 2:
                    continue
                with_const = {m for m in offered
                              if any(t.is_constant and t.applies(ctx, z, m)
                                     and t.modes is not None
                                     for t in self.mode_terms)}
                if with_const == set(offered):
                    msgs.append(f"nest ({z}, {ctx}): every offered mode {sorted(offered)} has a "
                                f"free constant; leave one mode without a constant")
        coefs = set(self.coefficient_names())
        for v in self.vot:
            for name in (v.time, v.cost):
                if name not in coefs:
                    msgs.append(f"VOT {v.label!r} references undeclared coefficient {name!r}")
        return msgs

    def validate(self):
        from .exceptions import ValidationError
        msgs = self.validation_messages()
        if msgs:
            raise ValidationError(msgs)
        return self

    @classmethod
    def from_dict(cls, d):
        try:
            modes = {}
            for mid, avail in d["modes"].items():
                modes[str(mid)] = Mode(str(mid), {c: frozenset(map(str, zs))
                                                  for c, zs in avail.items()})
            scale = d.get("scale")
            spec = cls(
                purpose=str(d.get("purpose", "")),
                zones=tuple(str(z) for z in d["zones"]),
                modes=modes,
                destination_terms=tuple(UtilityTerm.from_dict(t)
                                        for t in d.get("destination_terms", ())),
                mode_terms=tuple(UtilityTerm.from_dict(t) for t in d.get("mode_terms", ())),
                theta=ThetaSpec.from_dict(d.get("theta")),
                scale=None if scale is None else ScaleSpec(str(scale["coef"]),
                                                           str(scale.get("context", "SP"))),
                attributes=dict(d.get("attributes", {})),
                vot=tuple(VotSpec(str(v["label"]), str(v["time"]), str(v["cost"]))
                          for v in d.get("vot", ())),
            )
        except KeyError as exc:
            raise ConfigurationError(f"model specification is missing key {exc}") from None
        return spec

    def to_dict(self):
        d = {
            "purpose": self.purpose,
            "zones": list(self.zones),
            "modes": {m: {c: sorted(zs) for c, zs in mode.availability.items()}
                      for m, mode in self.modes.items()},
            "attributes": dict(self.attributes),
            "destination_terms": [t.to_dict() for t in self.destination_terms],
            "mode_terms": [t.to_dict() for t in self.mode_terms],
            "theta": self.theta.to_dict(),
        }
        if self.scale is not None:
            d["scale"] = {"coef": self.scale.coef, "context": self.scale.context}
        if self.vot:
            d["vot"] = [{"label": v.label, "time": v.time, "cost": v.cost} for v in self.vot]
        return d


@dataclass(frozen=True)
class Observation:
    """One RP trip or SP choice task.

    ``los`` maps each available ``(zone, mode)`` pair to its level-of-service
    attributes; the key order is the enumeration order of alternatives.
    ``chosen`` is ``None`` for templates awaiting simulation.
    """
    obs_id: str
    individual_id: str
    context: str
    covariates: Mapping[str, float]
    los: Mapping[tuple, Mapping[str, float]]
    chosen: tuple | None = None
    weight: float = 1.0

    @property
    def availability(self):
        return tuple(self.los)

    def zones(self):
        return tuple(dict.fromkeys(z for z, _ in self.los))

    def modes_at(self, zone):
        return tuple(m for z, m in self.los if z == zone)

    def with_choice(self, chosen):
        return replace(self, chosen=chosen)


@dataclass(frozen=True)
class ChoiceDataset:
    observations: tuple
    zones: Mapping[str, Zone]
    purpose: str = ""

    def __len__(self):
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def subset(self, context=None, predicate=None):
        obs = [o for o in self.observations
               if (context is None or o.context == context)
               and (predicate is None or predicate(o))]
        return replace(self, observations=tuple(obs))

    def zone_attribute(self, zone, name):
        return self.zones[zone].attributes[name]


@dataclass(frozen=True)
class Parameter:
    value: float
    fixed: bool = False


class ParameterVector:
    """Ordered named coefficients with fixed/free flags."""

    def __init__(self, entries=None):
        self._entries = {}
        for name, entry in (entries or {}).items():
            if isinstance(entry, Parameter):
                self._entries[str(name)] = entry
            elif isinstance(entry, Mapping):
                self._entries[str(name)] = Parameter(float(entry["value"]),
                                                     bool(entry.get("fixed", False)))
            else:
                self._entries[str(name)] = Parameter(float(entry))

    @classmethod
    def from_values(cls, values: Mapping[str, float], fixed: Iterable[str] = ()):
        fixed = set(fixed)
        return cls({k: Parameter(float(v), k in fixed) for k, v in values.items()})

    @classmethod
    def defaults(cls, spec: ModelSpec):
        """Zero slopes and constants, theta constant 2, scale 1."""
        values = {name: 0.0 for name in spec.coefficient_names()}
        for t in spec.theta.terms:
            if t.is_constant:
                values[t.coef] = 2.0
        if spec.scale is not None:
            values[spec.scale.coef] = 1.0
        return cls.from_values(values)

    def __contains__(self, name):
        return name in self._entries

    def __getitem__(self, name):
        return self._entries[name].value

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __eq__(self, other):
        return isinstance(other, ParameterVector) and self._entries == other._entries

    def __repr__(self):
        return f"ParameterVector({self.as_dict()})"

    def entry(self, name):
        return self._entries[name]

    def is_fixed(self, name):
        return self._entries[name].fixed

    @property
    def names(self):
        return list(self._entries)

    @property
    def free_names(self):
        return [k for k, e in self._entries.items() if not e.fixed]

    def as_dict(self):
        return {k: e.value for k, e in self._entries.items()}

    def values(self, names=None):
        names = self.names if names is None else names
        return np.array([self._entries[n].value for n in names], dtype=float)

    def replace(self, **values):
        entries = dict(self._entries)
        for k, v in values.items():
            if k not in entries:
                raise KeyError(k)
            entries[k] = Parameter(float(v), entries[k].fixed)
        return ParameterVector(entries)

    def with_free_values(self, x):
        free = self.free_names
        x = np.asarray(x, dtype=float)
        if x.shape != (len(free),):
            raise ValueError(f"expected {len(free)} free values, got shape {x.shape}")
        entries = dict(self._entries)
        for k, v in zip(free, x):
            entries[k] = Parameter(float(v), False)
        return ParameterVector(entries)

    def with_fixed(self, names, fixed=True):
        entries = dict(self._entries)
        for k in names:
            entries[k] = Parameter(entries[k].value, fixed)
        return ParameterVector(entries)

    def check_against(self, spec: ModelSpec):
        """Messages for coefficients the specification references but this vector lacks."""
        return [f"coefficient {name!r} referenced but undeclared"
                for name in spec.coefficient_names() if name not in self._entries]
