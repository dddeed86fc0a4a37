"""Nested destination-and-mode choice: utilities, logsums, probabilities,
accessibility and choice simulation for single observations.

These functions are the readable per-observation path. Likelihood and
simulation over whole datasets go through :class:`CompiledDataset`, and the
test-suite checks that both paths agree.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.special import expit, logsumexp

from ._design import PROB_FLOOR, CompiledDataset, term_value
from .exceptions import ConfigurationError, DomainError, NumericError
from .structures import ChoiceDataset, Zone


def _zone_id(zone):
    return zone.id if isinstance(zone, Zone) else str(zone)


def _zone_map(zone=None, zones=None):
    zones = dict(zones or {})
    if isinstance(zone, Zone):
        zones[zone.id] = zone
    return zones


def _scale(spec, params, context):
    if spec.scale is not None and context == spec.scale.context:
        return params[spec.scale.coef]
    return 1.0


def eval_mode_utility(spec, params, obs, zone, mode, zones=None):
    """Systematic utility of ``mode`` at ``zone``; scaled terms multiply by the
    scale parameter when ``obs`` is in the scaled context."""
    z = _zone_id(zone)
    zmap = _zone_map(zone, zones)
    if (z, mode) not in obs.los:
        raise DomainError(f"({z}, {mode}) is not available in observation {obs.obs_id}")
    scaled = unscaled = 0.0
    for t in spec.mode_terms:
        if not t.applies(obs.context, z, mode):
            continue
        contribution = params[t.coef] * term_value(t, obs, z, mode, zmap)
        if t.scaled:
            scaled += contribution
        else:
            unscaled += contribution
    return _scale(spec, params, obs.context) * scaled + unscaled


def theta_index(spec, params, obs, zone=None, zones=None):
    z = _zone_id(zone) if zone is not None else None
    zmap = _zone_map(zone, zones)
    total = 0.0
    for t in spec.theta.terms:
        if obs.context not in t.contexts:
            continue
        if t.zones is not None and (z is None or z not in t.zones):
            continue
        if any(src == "zone" for src, _ in t.factors) and z is None:
            raise ConfigurationError(f"theta term {t.coef!r} needs a zone")
        total += params[t.coef] * term_value(t, obs, z, None, zmap)
    return total


def eval_theta(spec, params, obs, zone=None, zones=None):
    """Logsum coefficient ``exp(x) / (1 + exp(x))`` of the theta index ``x``."""
    if spec.theta.fixed is not None:
        return spec.theta.fixed
    return float(expit(theta_index(spec, params, obs, zone, zones)))


def _scaled_mode_utilities(spec, params, obs, zone, zones):
    z = _zone_id(zone)
    modes = obs.modes_at(z)
    if not modes:
        raise DomainError(f"no mode available at zone {z} for observation {obs.obs_id}")
    theta = eval_theta(spec, params, obs, zone, zones)
    v = np.array([eval_mode_utility(spec, params, obs, zone, m, zones) for m in modes])
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        s = v / theta
    if not np.all(np.isfinite(s)):
        raise NumericError(f"non-finite scaled utility at zone {z} "
                           f"(observation {obs.obs_id})")
    return modes, s, theta


def inclusive_value(spec, params, obs, zone, zones=None):
    """Logsum ``ln sum_m exp(V_m / theta)`` over the modes available at ``zone``."""
    _, s, _ = _scaled_mode_utilities(spec, params, obs, zone, zones)
    return float(logsumexp(s))


def destination_utility(spec, params, obs, zone, zones=None):
    z = _zone_id(zone)
    zmap = _zone_map(zone, zones)
    base = sum(params[t.coef] * term_value(t, obs, z, None, zmap)
               for t in spec.destination_terms if t.applies(obs.context, z))
    theta = eval_theta(spec, params, obs, zone, zmap)
    return base + theta * inclusive_value(spec, params, obs, zone, zmap)


def destination_utilities(spec, params, obs, zones=None):
    zone_ids = obs.zones()
    if not zone_ids:
        raise DomainError(f"observation {obs.obs_id} has an empty destination set")
    out = {}
    for z in zone_ids:
        v = destination_utility(spec, params, obs, z, zones)
        if not math.isfinite(v):
            raise NumericError(f"non-finite destination utility for zone {z} "
                               f"(observation {obs.obs_id})")
        out[z] = v
    return out


def _softmax(values):
    v = np.asarray(values, dtype=float)
    p = np.exp(v - logsumexp(v))
    p[p < PROB_FLOOR] = 0.0
    return p


def destination_probabilities(spec, params, obs, zones=None):
    """Upper-level choice probabilities keyed by zone id."""
    vd = destination_utilities(spec, params, obs, zones)
    return dict(zip(vd, _softmax(list(vd.values()))))


def mode_probabilities_given_destination(spec, params, obs, zone, zones=None):
    modes, s, _ = _scaled_mode_utilities(spec, params, obs, zone, zones)
    return dict(zip(modes, _softmax(s)))


def joint_probabilities(spec, params, obs, zones=None):
    """``P(zone) * P(mode | zone)`` for every available pair."""
    pd = destination_probabilities(spec, params, obs, zones)
    out = {}
    for z, p in pd.items():
        for m, q in mode_probabilities_given_destination(spec, params, obs, z, zones).items():
            out[(z, m)] = p * q
    return out


def accessibility(spec, params, obs, zones=None, context="SP"):
    """Expected maximum utility ``ln sum_d exp(V_d)`` over the destination set.

    The observation is evaluated in ``context`` (the stated-preference
    utilities by default); pass ``context=None`` to keep its own context.
    """
    if context is not None and obs.context != context:
        obs = replace(obs, context=context)
    vd = destination_utilities(spec, params, obs, zones)
    return float(logsumexp(list(vd.values())))


def simulate_choices(spec, params, population, seed, zones=None, purpose=None):
    """Draw one ``(zone, mode)`` per template from the model probabilities.

    Parameters
    ----------
    population : ChoiceDataset or sequence of Observation
        Templates; any recorded choice is overwritten.
    seed : int or numpy.random.Generator
        All randomness comes from this stream.

    Returns
    -------
    ChoiceDataset
    """
    if isinstance(population, ChoiceDataset):
        zones = population.zones if zones is None else zones
        purpose = population.purpose if purpose is None else purpose
        templates = population.observations
    else:
        templates = tuple(population)
    templates = tuple(replace(o, chosen=None) for o in templates)
    dataset = ChoiceDataset(templates, dict(zones or {}), purpose or spec.purpose)
    compiled = CompiledDataset(spec, dataset, params.names)
    p = compiled.joint_probabilities(params.values())
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random(compiled.n_obs)
    obs_row_start = compiled.nest_start[compiled.obs_start]
    obs_rows = np.diff(np.append(obs_row_start, compiled.n_rows))
    cum = np.cumsum(p)
    before = np.concatenate(([0.0], cum))[obs_row_start]
    totals = np.add.reduceat(p, obs_row_start)
    chosen = []
    for n, obs in enumerate(templates):
        lo = obs_row_start[n]
        local = cum[lo:lo + obs_rows[n]] - before[n]
        j = int(np.searchsorted(local, u[n] * totals[n], side="right"))
        j = min(j, obs_rows[n] - 1)
        # never land on a zero-probability pair through round-off
        while p[lo + j] == 0.0 and j > 0:
            j -= 1
        chosen.append(obs.with_choice(compiled.row_keys[lo + j]))
    return ChoiceDataset(tuple(chosen), dataset.zones, dataset.purpose)
