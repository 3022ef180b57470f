import json
from pathlib import Path

import numpy as np
import pytest

import probmetro
from probmetro.exceptions import ScenarioError
from probmetro.linalg import max_abs
from probmetro.postselect import theorem_chain
from probmetro.scenario import (
    BUILTINS,
    decode_matrix,
    encode_matrix,
    get_scenario,
    load_scenario,
    random_instance,
    save_scenario,
    scenario_digest,
    scenario_from_dict,
)

SHIPPED = Path(probmetro.__file__).parent / "scenarios"


def test_matrix_codec_round_trip():
    A = np.array([[1 + 2j, -0.0], [3.5, -1j]])
    assert np.array_equal(decode_matrix(encode_matrix(A)), A)
    assert encode_matrix(A)[0][1] == [0.0, 0.0]


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtin_round_trip(name, tmp_path):
    sc = BUILTINS[name]()
    path = tmp_path / f"{name}.json"
    save_scenario(sc, path)
    back = load_scenario(path)
    assert back.digest() == sc.digest()
    assert max_abs(back.family.evaluate(0.3) - sc.family.evaluate(0.3)) < 1e-15
    assert back.selection.favorable == sc.selection.favorable
    assert back.interval == tuple(sc.interval)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_shipped_files_match_builtins(name):
    assert load_scenario(SHIPPED / f"{name}.json").digest() == BUILTINS[name]().digest()


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtin_chains_hold(name):
    sc = BUILTINS[name]()
    assert theorem_chain(sc.family, sc.selection, sc.x).ordered_ok


def test_digest_ignores_key_order():
    d = BUILTINS["qubit_phase_pure"]().to_dict()
    shuffled = dict(reversed(list(d.items())))
    assert scenario_digest(d) == scenario_digest(shuffled)
    d2 = json.loads(json.dumps(d))
    d2["x"] = 0.31
    assert scenario_digest(d2) != scenario_digest(d)


def test_schema_error_names_field():
    d = BUILTINS["qubit_phase_pure"]().to_dict()
    d["selection"]["favorable"] = [-1]
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(d)
    assert "selection/favorable/0" in str(info.value)


def test_wrong_schema_version():
    d = BUILTINS["qubit_phase_pure"]().to_dict()
    d["schema"] = 2
    with pytest.raises(ScenarioError, match="schema"):
        scenario_from_dict(d)


def test_syntax_error_names_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "schema": 1,\n  "name": oops\n}\n')
    with pytest.raises(ScenarioError, match="line 3"):
        load_scenario(path)


def test_physics_errors_become_scenario_errors():
    d = BUILTINS["qubit_phase_pure"]().to_dict()
    d["selection"]["outcomes"] = [[encode_matrix(0.5 * np.eye(2))]]
    with pytest.raises(ScenarioError, match="selection"):
        scenario_from_dict(d)
    d = BUILTINS["qubit_phase_pure"]().to_dict()
    d["family"]["base"] = encode_matrix(np.diag([2.0, -1.0]))
    with pytest.raises(ScenarioError, match="family"):
        scenario_from_dict(d)


def test_ragged_matrix():
    d = BUILTINS["qubit_phase_pure"]().to_dict()
    d["family"]["generator"] = [[[1, 0], [0, 0]], [[0, 0]]]
    with pytest.raises(ScenarioError, match="generator"):
        scenario_from_dict(d)


def test_dimension_mismatch():
    d = BUILTINS["qubit_phase_pure"]().to_dict()
    d["selection"]["outcomes"] = [[encode_matrix(np.eye(3))]]
    with pytest.raises(ScenarioError, match="dimension"):
        scenario_from_dict(d)


def test_get_scenario(tmp_path):
    assert get_scenario("weak_value_2qubit").family.dim == 4
    path = tmp_path / "s.json"
    save_scenario(BUILTINS["wasteful_qubit"](), path)
    assert get_scenario(str(path)).name == "wasteful_qubit"
    with pytest.raises(ScenarioError):
        get_scenario("no_such_scenario")


def test_random_instances_are_seeded():
    a, b = random_instance(5), random_instance(5)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != random_instance(6).to_dict()
    for seed in range(50):
        sc = random_instance(seed)
        assert 2 <= sc.family.dim <= 4
        assert sc.selection.num_outcomes <= 3 and max(sc.selection.kraus_counts) <= 2
