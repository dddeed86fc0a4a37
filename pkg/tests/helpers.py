"""Small specs and datasets shared across the test modules."""
from __future__ import annotations

from intercity.structures import ChoiceDataset, ModelSpec, Observation, ParameterVector, Zone


def small_spec_dict(n_zones=3, n_modes=3, theta_fixed=None, scale=True, generic_constant=False):
    zones = [f"Z{i + 1}" for i in range(n_zones)]
    modes = [f"m{j + 1}" for j in range(n_modes)]
    d = {
        "purpose": "test",
        "zones": zones,
        "modes": {m: {"RP": zones, "SP": zones} for m in modes},
        "attributes": {"cost": "Mil VND", "time": "min", "size": "index"},
        "destination_terms": [{"coef": "b_size", "attr": "zone.size"}],
        "theta": {"terms": [{"coef": "w_const"}, {"coef": "w_inc", "attr": "cov.income"}]},
        "mode_terms": [{"coef": "b_cost", "attr": "los.cost"},
                       {"coef": "b_time", "attr": "los.time"}]
                      + [{"coef": f"asc_{m}", "modes": [m]} for m in modes[1:]],
        "vot": [{"label": "time", "time": "b_time", "cost": "b_cost"}],
    }
    if theta_fixed is not None:
        d["theta"] = {"fixed": theta_fixed}
    if scale:
        d["scale"] = {"coef": "mu", "context": "SP"}
    if generic_constant:
        d["mode_terms"].append({"coef": "k_all"})
    return d


def small_spec(**kw):
    return ModelSpec.from_dict(small_spec_dict(**kw)).validate()


def random_params(spec, rng, spread=1.0):
    values = {}
    for name in spec.coefficient_names():
        if name == "mu":
            values[name] = float(rng.uniform(0.4, 1.6))
        elif name == "b_time":
            values[name] = float(rng.normal(0, 0.01 * spread))
        else:
            values[name] = float(rng.normal(0, spread))
    return ParameterVector.from_values(values)


def random_dataset(spec, n_obs, rng, contexts=("RP", "SP"), with_choice=True, drop=0.0,
                   zone_sizes=None):
    """Observations with uniform LOS; ``drop`` removes that fraction of pairs
    at random (keeping at least one pair per observation)."""
    zones = {z: Zone(z, {"size": float(rng.uniform(0, 2)) if zone_sizes is None
                         else zone_sizes[z]}) for z in spec.zones}
    observations = []
    for i in range(n_obs):
        ctx = contexts[i % len(contexts)]
        los = {}
        for z in spec.zones:
            for m in spec.modes_offered(ctx, z):
                if rng.random() < drop:
                    continue
                los[(z, m)] = {"cost": float(rng.uniform(0.1, 3.0)),
                               "time": float(rng.uniform(30, 300))}
        if not los:
            z = spec.zones[0]
            m = spec.modes_offered(ctx, z)[0]
            los[(z, m)] = {"cost": 1.0, "time": 60.0}
        keys = list(los)
        chosen = keys[int(rng.integers(len(keys)))] if with_choice else None
        observations.append(Observation(f"o{i}", f"p{i // 2}", ctx,
                                        {"income": float(rng.normal())}, los, chosen,
                                        float(rng.uniform(0.5, 2.0))))
    return ChoiceDataset(tuple(observations), zones, spec.purpose)
