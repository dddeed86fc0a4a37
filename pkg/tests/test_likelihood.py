import math
from dataclasses import replace

import numpy as np
import pytest

from helpers import random_dataset, random_params, small_spec, small_spec_dict
from oracles import brute_force_loglik, extrapolated_differences
from intercity.datasets import make_recovery_problem, recovery_spec
from intercity.exceptions import DomainError, NumericError
from intercity.likelihood import JointLikelihood, equal_shares_null, gradient, log_likelihood
from intercity.structures import ChoiceDataset, ModelSpec, Observation, ParameterVector, Zone


def test_brute_force_oracle(rng):
    spec = small_spec()
    for _ in range(20):
        data = random_dataset(spec, 5, rng, drop=0.3)
        params = random_params(spec, rng)
        ll = log_likelihood(spec, params, data).total
        assert ll == pytest.approx(brute_force_loglik(params, data), abs=1e-10)


def test_per_context_and_per_observation_decomposition(rng):
    spec = small_spec()
    data = random_dataset(spec, 12, rng)
    params = random_params(spec, rng)
    value = log_likelihood(spec, params, data, per_observation=True)
    assert value.total == pytest.approx(sum(value.per_context.values()), abs=1e-12)
    assert value.total == pytest.approx(float(np.sum(value.per_observation)), abs=1e-12)
    rp = log_likelihood(spec, params, data.subset(context="RP")).total
    assert value.per_context["RP"] == pytest.approx(rp, abs=1e-12)


def test_two_equiprobable_pairs():
    spec = ModelSpec.from_dict({"purpose": "t", "zones": ["Z1"],
                                "modes": {"a": {"RP": ["Z1"]}, "b": {"RP": ["Z1"]}},
                                "mode_terms": [{"coef": "b_cost", "attr": "los.cost"}]})
    obs = Observation("o", "i", "RP", {}, {("Z1", "a"): {"cost": 1.0}, ("Z1", "b"): {"cost": 1.0}},
                      ("Z1", "b"))
    data = ChoiceDataset((obs,), {"Z1": Zone("Z1", {})}, "t")
    params = ParameterVector.from_values({"b_cost": -0.7})
    assert log_likelihood(spec, params, data).total == pytest.approx(math.log(0.5), abs=1e-15)


def test_theta_one_matches_flat_mnl_likelihood(rng):
    spec = small_spec(theta_fixed=1.0)
    data = random_dataset(spec, 30, rng, drop=0.3)
    params = random_params(spec, rng)
    b = params.as_dict()
    oracle = 0.0
    for obs in data.observations:
        mu = b["mu"] if obs.context == "SP" else 1.0
        u = {k: b["b_size"] * data.zones[k[0]].attributes["size"]
             + mu * (b["b_cost"] * c["cost"] + b["b_time"] * c["time"] + b.get(f"asc_{k[1]}", 0.0))
             for k, c in obs.los.items()}
        oracle += obs.weight * (u[obs.chosen] - math.log(sum(math.exp(v) for v in u.values())))
    assert log_likelihood(spec, params, data).total == pytest.approx(oracle, abs=1e-10)


def test_null_model_counting(rng):
    d = small_spec_dict(scale=False, theta_fixed=1.0)
    d["destination_terms"] = []
    spec = ModelSpec.from_dict(d).validate()
    data = random_dataset(spec, 25, rng, drop=0.4)
    data = replace(data, observations=tuple(replace(o, weight=1.0) for o in data.observations))
    expected = sum(math.log(1 / len(o.zones())) + math.log(1 / len(o.modes_at(o.chosen[0])))
                   for o in data.observations)
    assert equal_shares_null(data) == pytest.approx(expected, abs=1e-12)
    # each zone offering the same number of modes: all-zero parameters reproduce the count
    full = random_dataset(spec, 25, rng, drop=0.0)
    full = replace(full, observations=tuple(replace(o, weight=1.0) for o in full.observations))
    zero = ParameterVector.from_values({n: 0.0 for n in spec.coefficient_names()})
    assert log_likelihood(spec, zero, full).total == pytest.approx(equal_shares_null(full), abs=1e-10)


def test_weight_split_and_permutation_invariance(rng):
    spec = small_spec()
    data = random_dataset(spec, 10, rng)
    params = random_params(spec, rng)
    obs = list(data.observations)
    heavy = replace(obs[0], weight=2.0)
    merged = replace(data, observations=tuple([heavy] + obs[1:]))
    split = replace(data, observations=tuple([replace(heavy, weight=1.0),
                                              replace(heavy, weight=1.0, obs_id="copy")] + obs[1:]))
    assert log_likelihood(spec, params, merged).total == pytest.approx(
        log_likelihood(spec, params, split).total, abs=1e-12)
    perm = rng.permutation(len(obs))
    shuffled = replace(data, observations=tuple(obs[i] for i in perm))
    assert log_likelihood(spec, params, shuffled).total == pytest.approx(
        log_likelihood(spec, params, data).total, abs=1e-12)


def test_zero_probability_names_the_observation():
    # log-space keeps exp(-1000) finite; only an infinite utility gap gives exactly zero
    spec = ModelSpec.from_dict({"purpose": "t", "zones": ["Z1"],
                                "modes": {"a": {"RP": ["Z1"]}, "b": {"RP": ["Z1"]}},
                                "mode_terms": [{"coef": "b_cost", "attr": "los.cost"}],
                                "theta": {"fixed": 1.0}})
    obs = Observation("bad-7", "i", "RP", {},
                      {("Z1", "a"): {"cost": 0.0}, ("Z1", "b"): {"cost": 1000.0}}, ("Z1", "b"))
    data = ChoiceDataset((obs,), {"Z1": Zone("Z1", {})}, "t")
    ll = log_likelihood(spec, ParameterVector.from_values({"b_cost": -1.0}), data).total
    assert ll == pytest.approx(-1000.0, rel=1e-12)
    with pytest.raises(NumericError, match="bad-7"):
        log_likelihood(spec, ParameterVector.from_values({"b_cost": -1e306}), data)


def test_missing_choice_is_rejected(rng):
    spec = small_spec()
    data = random_dataset(spec, 3, rng, with_choice=False)
    with pytest.raises(DomainError):
        log_likelihood(spec, random_params(spec, rng), data)


def test_analytic_gradient_matches_finite_differences(rng):
    spec, truth, data = make_recovery_problem(200, seed=4)
    for _ in range(5):
        values = {n: truth[n] + float(rng.normal(0, 0.2)) * max(abs(truth[n]), 0.05)
                  for n in truth.names}
        params = ParameterVector.from_values(values)
        f = JointLikelihood(spec, data, params)
        x = params.values(f.free_names)
        assert np.max(np.abs(f.gradient(x) - extrapolated_differences(f, x))) < 1e-5


def test_numeric_gradient_method_is_close(rng):
    # the plain fixed-step fallback carries O(h^2) error on minute-scaled attributes
    spec, truth, data = make_recovery_problem(50, seed=4)
    a = gradient(spec, truth, data, method="analytic")
    n = gradient(spec, truth, data, method="numeric")
    assert np.max(np.abs(a - n)) < 1e-3 * max(1.0, np.max(np.abs(a)))


def test_fixed_parameters_are_excluded_from_gradient(rng):
    spec = recovery_spec()
    _, truth, data = make_recovery_problem(50, seed=2)
    params = truth.with_fixed(["mu", "b_size"])
    f = JointLikelihood(spec, data, params)
    assert "mu" not in f.free_names and len(f.free_names) == 8
    assert len(f.gradient(params.values(f.free_names))) == 8


def test_gradient_vanishes_at_a_toy_maximum():
    # two-parameter logit with a closed-form optimum: shares 0.6 / 0.4 and 0.3 / 0.7
    spec = ModelSpec.from_dict({"purpose": "t", "zones": ["Z1"],
                                "modes": {"a": {"RP": ["Z1"]}, "b": {"RP": ["Z1"]}},
                                "mode_terms": [{"coef": "asc_b", "modes": ["b"]},
                                               {"coef": "b_x", "attr": "los.x"}],
                                "theta": {"fixed": 1.0}})
    obs = []
    for i, (x, chosen, w) in enumerate([(0.0, "a", 6), (0.0, "b", 4), (1.0, "a", 3), (1.0, "b", 7)]):
        los = {("Z1", "a"): {"x": 0.0}, ("Z1", "b"): {"x": x}}
        obs.append(Observation(str(i), str(i), "RP", {}, los, ("Z1", chosen), float(w)))
    data = ChoiceDataset(tuple(obs), {"Z1": Zone("Z1", {})}, "t")
    asc = math.log(4 / 6)
    params = ParameterVector.from_values({"asc_b": asc, "b_x": math.log(7 / 3) - asc})
    assert np.linalg.norm(gradient(spec, params, data)) < 1e-5


def test_cost_gradient_sign_flips(rng):
    # every cost pair is chosen both ways, so the concave likelihood peaks at zero
    spec = ModelSpec.from_dict({"purpose": "t", "zones": ["Z1"],
                                "modes": {"a": {"RP": ["Z1"]}, "b": {"RP": ["Z1"]}},
                                "mode_terms": [{"coef": "b_cost", "attr": "los.cost"}]})
    obs = []
    for i in range(10):
        ca, cb = rng.uniform(0.1, 2.0, size=2)
        los = {("Z1", "a"): {"cost": ca}, ("Z1", "b"): {"cost": cb}}
        obs.append(Observation(f"{i}a", str(i), "RP", {}, los, ("Z1", "a")))
        obs.append(Observation(f"{i}b", str(i), "RP", {}, los, ("Z1", "b")))
    data = ChoiceDataset(tuple(obs), {"Z1": Zone("Z1", {})}, "t")
    g_pos = gradient(spec, ParameterVector.from_values({"b_cost": 0.5}), data)[0]
    g_neg = gradient(spec, ParameterVector.from_values({"b_cost": -0.5}), data)[0]
    assert g_pos < 0 < g_neg
    assert g_pos == pytest.approx(-g_neg, rel=1e-10)
