"""Bundled model files and synthetic populations.

``load_published`` returns the shipped business / non-business
specifications with their published coefficients. ``make_corridor`` builds a
seven-zone north-south corridor with plausible level-of-service values for
scenario runs, and ``make_recovery_problem`` a small well-identified model
for parameter-recovery experiments.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .choice import simulate_choices
from .structures import ChoiceDataset, ModelSpec, Observation, ParameterVector, Zone

PUBLISHED = {
    "business": ("business-spec.json", "business-params.json", "tripgen-business.json"),
    "non-business": ("nonbusiness-spec.json", "nonbusiness-params.json",
                     "tripgen-nonbusiness.json"),
}

# distance from the origin in km
CORRIDOR_KM = {"Z2": 150.0, "Z3": 330.0, "Z4": 500.0, "Z5": 660.0, "Z6": 770.0,
               "Z7": 1200.0, "Z8": 1700.0}
CORRIDOR_ZONES = {
    "Z2": {"log_grp": -1.6, "tourists": 3.0},
    "Z3": {"log_grp": -2.0, "tourists": 5.0},
    "Z4": {"log_grp": -1.8, "tourists": 4.0},
    "Z5": {"log_grp": -1.9, "tourists": 2.0},
    "Z6": {"log_grp": -1.2, "tourists": 8.0},
    "Z7": {"log_grp": -1.5, "tourists": 6.0},
    "Z8": {"log_grp": 0.3, "tourists": 15.0},
}


def data_path(name):
    """Filesystem path of a bundled data file."""
    return resources.files("intercity") / "data" / name


def load_published(purpose):
    """``(spec, params, trip_model)`` for ``"business"`` or ``"non-business"``."""
    from .io import load_model_spec, load_params, load_trip_model

    spec_file, params_file, trip_file = PUBLISHED[purpose]
    spec = load_model_spec(data_path(spec_file))
    return (spec, load_params(data_path(params_file), spec),
            load_trip_model(data_path(trip_file)))


def load_hsr_scenarios():
    from .io import load_scenarios

    return load_scenarios(data_path("hsr-scenarios.json"))


def corridor_los(mode, km, rng):
    """Cost (Mil VND), in-vehicle and access+egress minutes for one trip."""
    noise = rng.uniform(0.85, 1.15, size=3)
    airline_cost = 1.0 + 0.0012 * km
    table = {
        "bus": (0.0006 * km, 1.3 * km, 30.0),
        "rail": (0.0008 * km, 1.2 * km, 30.0),
        "car": (0.0015 * km, 1.0 * km, 5.0),
        "airline": (airline_cost, 45.0 + 0.075 * km, 100.0),
        "lcc": (0.6 * airline_cost, 45.0 + 0.075 * km, 110.0),
        "hsr": (airline_cost, 20.0 + 0.2 * km, 45.0),
    }
    cost, ivt, access = np.array(table[mode]) * noise
    return {"cost": float(cost), "ivt": float(ivt), "access_time": float(access)}


def _corridor_person(purpose, rng):
    age = float(rng.integers(20, 61))
    income = float(np.round(rng.uniform(1.5, 20.0), 2))
    married = float(rng.random() < 0.6)
    if purpose == "business":
        occ = rng.choice(["business", "gov", "laborer", "other"], p=[0.3, 0.45, 0.1, 0.15])
        edu = rng.choice(["high", "college", "bachelor", "master", "other"],
                         p=[0.1, 0.15, 0.55, 0.15, 0.05])
        univ = float(edu in ("bachelor", "master"))
        rp_mode = rng.choice(["airline", "lcc", "other"], p=[0.3, 0.2, 0.5])
        return {
            "age": age, "income": income,
            "occ_age": float(occ == "gov") * age,
            "edu_income": univ * income,
            "car_own": float(rng.random() < 0.3),
            "rp_airline": float(rp_mode == "airline"), "rp_lcc": float(rp_mode == "lcc"),
            "occ_gov": float(occ == "gov"), "occ_laborer": float(occ == "laborer"),
            "occ_other": float(occ == "other"),
            "edu_college": float(edu == "college"), "edu_bachelor": float(edu == "bachelor"),
            "edu_master": float(edu == "master"), "edu_other": float(edu == "other"),
        }
    party = float(rng.random() < 0.5)
    rp_mode = rng.choice(["bus", "rail", "airline", "lcc", "car"])
    rp_dest = rng.choice(["Z6", "Z8", "other"], p=[0.25, 0.25, 0.5])
    return {
        "age": age, "income": income, "married": married,
        "income_party": income * party, "working": float(rng.random() < 0.75),
        "summer": float(rng.random() < 0.4),
        "rp_dest_Z6": float(rp_dest == "Z6"), "rp_dest_Z8": float(rp_dest == "Z8"),
        "rp_bus": float(rp_mode == "bus"), "rp_rail": float(rp_mode == "rail"),
        "rp_airline": float(rp_mode == "airline"), "rp_lcc": float(rp_mode == "lcc"),
        "edu_univ": float(rng.random() < 0.6), "male": float(rng.random() < 0.5),
    }


def corridor_templates(spec, n_individuals, seed=0, contexts=("RP", "SP")):
    """Choice templates (no recorded choices) for every individual and context."""
    rng = np.random.default_rng(seed)
    zones = {z: Zone(z, dict(a)) for z, a in CORRIDOR_ZONES.items() if z in spec.zones}
    observations = []
    for i in range(n_individuals):
        covs = _corridor_person(spec.purpose, rng)
        for ctx in contexts:
            los = {}
            for z in spec.zones:
                for m in spec.modes_offered(ctx, z):
                    los[(z, m)] = corridor_los(m, CORRIDOR_KM[z], rng)
            if los:
                observations.append(Observation(f"{i}-{ctx}", str(i), ctx, dict(covs), los))
    return ChoiceDataset(tuple(observations), zones, spec.purpose)


# observed mean annual trips per person in the base scenario
BASE_TRIP_RATE = {"business": 1.455, "non-business": 0.844}


def make_corridor(purpose="non-business", n_individuals=300, seed=0, contexts=("RP", "SP"),
                  calibrate=True):
    """Published model plus a simulated corridor population.

    With ``calibrate`` the trip-model intercept is shifted so that the base
    scenario reproduces the observed mean trip rate; synthetic level of
    service does not match the survey, and the shift leaves every induced
    travel index unchanged.

    Returns
    -------
    dict with keys ``spec``, ``params``, ``trip_model``, ``dataset``,
    ``scenarios`` (the bundled HSR policy scenarios).
    """
    from .scenarios import apply_scenario, simulate_shares
    from .tripgen import shift_intercept

    spec, params, trip_model = load_published(purpose)
    templates = corridor_templates(spec, n_individuals, seed, contexts)
    dataset = simulate_choices(spec, params, templates, seed + 1)
    scenarios = load_hsr_scenarios()
    if calibrate:
        base = apply_scenario(dataset, scenarios.get(scenarios.base))
        current = simulate_shares(spec, params, base, scenarios.distance_classes,
                                  trip_model=trip_model).mean_trip_rate
        trip_model = shift_intercept(trip_model, current, BASE_TRIP_RATE[purpose])
    return {"spec": spec, "params": params, "trip_model": trip_model,
            "dataset": dataset, "scenarios": scenarios}


RECOVERY_SPEC = {
    "purpose": "synthetic",
    "zones": ["Z1", "Z2", "Z3"],
    "modes": {
        "car": {"RP": ["Z1", "Z2", "Z3"], "SP": ["Z1", "Z2", "Z3"]},
        "bus": {"RP": ["Z1", "Z2", "Z3"], "SP": ["Z1", "Z2", "Z3"]},
        "air": {"RP": ["Z2", "Z3"], "SP": ["Z2", "Z3"]},
        "hsr": {"SP": ["Z1", "Z2", "Z3"]},
    },
    "attributes": {"cost": "Mil VND", "time": "min", "headway": "h", "size": "index"},
    "destination_terms": [{"coef": "b_size", "attr": "zone.size"}],
    "theta": {"terms": [{"coef": "w_const"}, {"coef": "w_income", "attr": "cov.income"}]},
    "mode_terms": [
        {"coef": "b_cost", "attr": "los.cost"},
        {"coef": "b_time", "attr": "los.time"},
        {"coef": "b_headway", "attr": "los.headway", "contexts": ["SP"]},
        {"coef": "asc_bus", "modes": ["bus"]},
        {"coef": "asc_air", "modes": ["air"]},
        {"coef": "asc_hsr", "modes": ["hsr"], "contexts": ["SP"]},
    ],
    "scale": {"coef": "mu", "context": "SP"},
    "vot": [{"label": "in-vehicle time", "time": "b_time", "cost": "b_cost"}],
}
RECOVERY_TRUTH = {"b_size": 0.8, "w_const": 0.5, "w_income": 0.6, "b_cost": -1.2,
                  "b_time": -0.012, "b_headway": -0.3, "asc_bus": -0.5, "asc_air": 0.3,
                  "asc_hsr": 0.4, "mu": 0.6}
RECOVERY_ZONES = {"Z1": 1.0, "Z2": 2.0, "Z3": 0.5}
_RECOVERY_LOS = {  # cost range, time range (min)
    "car": ((0.3, 1.5), (60, 300)),
    "bus": ((0.1, 0.8), (90, 400)),
    "air": ((0.8, 3.0), (30, 120)),
    "hsr": ((0.5, 2.5), (40, 200)),
}


def recovery_spec():
    return ModelSpec.from_dict(RECOVERY_SPEC).validate()


def make_recovery_problem(n_individuals=5000, seed=0, sp_per_individual=1):
    """Spec, true parameters and simulated choices for a 10-parameter model."""
    spec = recovery_spec()
    rng = np.random.default_rng(seed)
    zones = {z: Zone(z, {"size": s}) for z, s in RECOVERY_ZONES.items()}
    observations = []
    for i in range(n_individuals):
        income = float(rng.normal())
        contexts = ["RP"] + ["SP"] * sp_per_individual
        for j, ctx in enumerate(contexts):
            los = {}
            for z in spec.zones:
                for m in spec.modes_offered(ctx, z):
                    (c0, c1), (t0, t1) = _RECOVERY_LOS[m]
                    cell = {"cost": float(rng.uniform(c0, c1)), "time": float(rng.uniform(t0, t1))}
                    if ctx == "SP":
                        cell["headway"] = float(rng.uniform(0.0, 3.0))
                    los[(z, m)] = cell
            observations.append(Observation(f"{i}-{j}", str(i), ctx, {"income": income}, los))
    templates = ChoiceDataset(tuple(observations), zones, spec.purpose)
    truth = ParameterVector.from_values(RECOVERY_TRUTH)
    data = simulate_choices(spec, truth, templates, rng)
    return spec, truth, data


def synthetic_population(spec, n_individuals, seed=0, contexts=("RP", "SP")):
    """Generic templates for any spec: uniform covariates and zone attributes on
    [0, 1], level-of-service on [0, 1] scaled by 60 for minute-valued attributes."""
    from .io import _spec_requirements

    need = _spec_requirements(spec)
    rng = np.random.default_rng(seed)
    zones = {z: Zone(z, {a: float(rng.random()) for a in sorted(need["zone"])})
             for z in spec.zones}
    los_names = sorted(need["los"])
    scale = {a: 60.0 if spec.attributes.get(a) == "min" else 1.0 for a in los_names}
    observations = []
    for i in range(n_individuals):
        covs = {c: float(rng.random()) for c in sorted(need["cov"])}
        for ctx in contexts:
            los = {}
            for z in spec.zones:
                for m in spec.modes_offered(ctx, z):
                    los[(z, m)] = {a: float(rng.random() * scale[a]) for a in los_names}
            if los:
                observations.append(Observation(f"{i}-{ctx}", str(i), ctx, covs, los))
    return ChoiceDataset(tuple(observations), zones, spec.purpose)
