import json

import pytest

from helpers import random_dataset, small_spec, small_spec_dict
from intercity import io
from intercity.datasets import data_path, load_published, load_hsr_scenarios
from intercity.exceptions import ConfigurationError, ValidationError
from intercity.structures import ChoiceDataset, ModelSpec, Observation, ParameterVector, Zone


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def small_dataset():
    zones = {"Z1": Zone("Z1", {"size": 1.0}), "Z2": Zone("Z2", {"size": 2.5})}
    obs = []
    for i in range(2):
        los = {(z, m): {"cost": 0.5 + i, "time": 60.0 + 10 * j}
               for j, (z, m) in enumerate([("Z1", "m1"), ("Z1", "m2"), ("Z2", "m1"), ("Z2", "m2")])}
        obs.append(Observation(f"t{i}", f"p{i}", "RP", {"income": 0.3 * i}, los, ("Z2", "m1")))
    return ChoiceDataset(tuple(obs), zones, "test")


def test_empty_file(tmp_path):
    with pytest.raises(ValidationError, match="no observations"):
        io.load_choice_dataset(write(tmp_path / "empty.csv", ""))
    with pytest.raises(ValidationError, match="no observations"):
        io.load_choice_dataset(write(tmp_path / "header.csv", ",".join(io.BASE_COLUMNS) + "\n"))


def test_two_by_two_by_two_counts(tmp_path):
    path = tmp_path / "d.csv"
    io.save_choice_dataset(small_dataset(), path)
    _, manifest = io.load_choice_dataset(path, small_spec(n_zones=2, n_modes=2))
    assert sum(manifest.counts.values()) == 2
    assert manifest.n_rows == 8
    assert manifest.n_individuals == 2
    assert manifest.availability["RP"] == {"Z1": ["m1", "m2"], "Z2": ["m1", "m2"]}


def test_dataset_round_trip(tmp_path, rng):
    spec = small_spec()
    data = random_dataset(spec, 30, rng, drop=0.3)
    path = tmp_path / "d.csv"
    io.save_choice_dataset(data, path, spec.attributes)
    loaded, manifest = io.load_choice_dataset(path, spec)
    assert loaded == data
    assert manifest.attributes["cost"] == "Mil VND"


def test_errors_are_collected_with_row_numbers(tmp_path):
    header = "individual_id,obs_id,context,zone,mode,chosen,weight,los.cost,los.time,cov.income\n"
    body = ("p1,t1,RP,Z1,m1,1,1,0.5,60,0.1\n"
            "p1,t1,RP,Z1,m2,0,1,-0.5,60,0.1\n"     # negative cost
            "p1,t1,RP,Z1,m2,0,1,0.5,60,0.1\n"      # duplicate key
            "p2,t2,RP,Z1,m1,0,1,0.5,60,\n"         # missing covariate
            "p2,t2,RP,Z2,m1,0,1,0.5,60,0.2\n")     # no chosen alternative for t2
    path = write(tmp_path / "bad.csv", header + body)
    with pytest.raises(ValidationError) as info:
        io.load_choice_dataset(path)
    text = "\n".join(info.value.messages)
    assert "row 3: negative los.cost" in text
    assert "row 4: duplicate" in text and "first at row 3" in text
    assert "row 5: missing covariate cov.income" in text
    assert "observation t2 has no chosen alternative" in text


def test_unavailable_chosen_alternative(tmp_path):
    d = small_spec_dict(n_zones=2, n_modes=2)
    d["modes"]["m2"] = {"RP": ["Z1"], "SP": ["Z1", "Z2"]}
    spec = ModelSpec.from_dict(d).validate()
    header = "individual_id,obs_id,context,zone,mode,chosen,weight,los.cost,los.time,cov.income,zone.size\n"
    body = ("p1,t1,RP,Z1,m1,0,1,0.5,60,0.1,1\n"
            "p1,t1,RP,Z2,m2,1,1,0.5,60,0.1,2\n")
    with pytest.raises(ValidationError, match=r"row 3: chosen alternative \(Z2, m2\) is unavailable"):
        io.load_choice_dataset(write(tmp_path / "u.csv", header + body), spec)


def test_missing_model_column(tmp_path):
    header = "individual_id,obs_id,context,zone,mode,chosen,weight,los.cost\n"
    path = write(tmp_path / "m.csv", header + "p,t,RP,Z1,m1,1,1,0.5\n")
    with pytest.raises(ValidationError, match="los.time"):
        io.load_choice_dataset(path, small_spec())


def test_manifest_schema_and_counts(tmp_path):
    path = tmp_path / "d.csv"
    io.save_choice_dataset(small_dataset(), path)
    sidecar = json.loads(io.manifest_path(path).read_text())
    io.manifest_path(path).write_text(json.dumps({**sidecar, "schema_version": 99}))
    with pytest.raises(ValidationError, match="schema version 99"):
        io.load_choice_dataset(path)
    io.manifest_path(path).write_text(json.dumps({**sidecar, "n_rows": 7}))
    with pytest.raises(ValidationError, match="manifest rows"):
        io.load_choice_dataset(path)


def test_unit_mismatch(tmp_path):
    d = small_spec_dict()
    d["attributes"]["cost"] = "VND"
    with pytest.raises(ValidationError, match="Mil VND"):
        io.model_spec_from_dict(d)


def test_spec_round_trip(tmp_path):
    for purpose in ("business", "non-business"):
        spec, _, _ = load_published(purpose)
        path = tmp_path / f"{purpose}.json"
        io.save_model_spec(spec, path)
        assert io.load_model_spec(path) == spec
        assert io.spec_hash(io.load_model_spec(path)) == io.spec_hash(spec)


def test_params_round_trip_is_bit_exact(tmp_path, rng):
    values = {f"p{i}": float(v) for i, v in enumerate(rng.normal(size=50) * 10.0 ** rng.integers(-300, 300, 50))}
    values["tiny"] = 5e-324
    values["third"] = 1 / 3
    params = ParameterVector.from_values(values, fixed=["p3"])
    path = tmp_path / "p.json"
    io.save_params(params, path)
    loaded = io.load_params(path)
    assert loaded == params
    assert all(loaded[n] == params[n] for n in params.names)
    assert loaded.is_fixed("p3") and not loaded.is_fixed("p4")


def test_shipped_business_table():
    spec, params, trip = load_published("business")
    assert params["b_cost"] == -2.189
    assert params["b_ivt"] == -1.65e-3
    assert params["b_access"] == -3.45e-3
    assert params["w_const"] == 11.675
    assert len(params.free_names) == 32
    assert trip.coefficients["accessibility"] == 0.603


def test_shipped_nonbusiness_table():
    spec, params, trip = load_published("non-business")
    assert params["b_ivt"] == -8.48e-4
    assert params["b_cost"] == -1.073
    assert params["mu"] == 0.672
    assert len(params.free_names) == 61
    assert trip.coefficients["accessibility"] == 1.321


def test_two_free_constants_in_one_nest():
    d = small_spec_dict(n_zones=1, n_modes=2)
    d["mode_terms"].append({"coef": "asc_m1", "modes": ["m1"]})
    with pytest.raises(ValidationError, match="free constant"):
        io.model_spec_from_dict(d)


def test_undeclared_coefficient():
    spec = small_spec()
    params = ParameterVector.from_values({n: 0.0 for n in spec.coefficient_names() if n != "b_cost"})
    with pytest.raises(ValidationError, match="b_cost"):
        io.params_from_dict(io.params_to_dict(params), spec)


def test_schema_rejection(tmp_path):
    d = io.params_to_dict(ParameterVector.from_values({"a": 1.0}))
    d["schema_version"] = 2
    with pytest.raises(ValidationError, match="schema"):
        io.params_from_dict(d)
    with pytest.raises(ConfigurationError, match="invalid JSON"):
        io.load_params(write(tmp_path / "x.json", "{"))
    with pytest.raises(ConfigurationError, match="not found"):
        io.load_params(tmp_path / "nope.json")


def test_scenario_config_round_trip(tmp_path):
    cfg = load_hsr_scenarios()
    path = tmp_path / "s.json"
    io.save_scenarios(cfg, path)
    again = io.load_scenarios(path)
    assert again.scenarios == cfg.scenarios
    assert again.base == cfg.base and again.distance_classes == cfg.distance_classes


def test_results_embed_spec_hash(tmp_path):
    from intercity.datasets import make_recovery_problem
    from intercity.estimation import estimate

    spec, truth, data = make_recovery_problem(200, seed=1)
    result = estimate(spec, data)
    path = tmp_path / "r.json"
    io.save_results(result, path, spec)
    d = json.loads(path.read_text())
    assert d["spec_sha256"] == io.spec_hash(spec)
    again = io.load_results(path)
    assert again.params == result.params
    assert again.ll1 == result.ll1 and again.std_errors == result.std_errors


def test_loading_does_not_touch_files(tmp_path):
    path = tmp_path / "d.csv"
    io.save_choice_dataset(small_dataset(), path)
    before = (io.file_sha256(path), io.file_sha256(io.manifest_path(path)))
    io.load_choice_dataset(path)
    assert (io.file_sha256(path), io.file_sha256(io.manifest_path(path))) == before


def test_shipped_files_validate():
    for name in ("business-spec.json", "nonbusiness-spec.json"):
        io.load_model_spec(data_path(name))
