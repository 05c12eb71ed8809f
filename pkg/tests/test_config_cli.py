import copy
import csv
import json
from pathlib import Path

import numpy as np
import pytest

from vrcast.cli import DIAGNOSTIC_FIELDS, main
from vrcast.config import ConfigError, load_document, scenario_from_dict, validate

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def example_doc():
    return load_document(CONFIGS / "four_users.json")


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d["geometry"].pop("encoding_rates"), "geometry.encoding_rates"),
    (lambda d: d["geometry"].__setitem__("encoding_rates", [3e6, 1e6, 2e6]), "geometry.encoding_rates"),
    (lambda d: d["users"][1].__setitem__("r", 0), "users.1.r"),
    (lambda d: d["channel"].__setitem__("states", [[1e-6, 0.3]]), "channel.states"),
    (lambda d: d["physical"].__setitem__("bandwidth_hz", -1.0), "physical.bandwidth_hz"),
])
def test_invalid_config_names_the_field(tmp_path, capsys, example_doc, mutate, where):
    mutate(example_doc)
    code = main(["solve", "--case", "wo-a", "--config", _write(tmp_path, example_doc)])
    assert code == 2
    assert where in capsys.readouterr().err


def test_validate_raises_config_error(example_doc):
    del example_doc["users"]
    with pytest.raises(ConfigError):
        validate(example_doc)
        scenario_from_dict(example_doc)


def test_missing_file_exit_code(capsys):
    assert main(["solve", "--case", "wo-a", "--config", "/nonexistent.json"]) == 2


def test_solve_example_levels_and_verify(tmp_path):
    out = tmp_path / "r.json"
    diag = tmp_path / "d.csv"
    cfg = str(CONFIGS / "four_users.json")
    assert main(["solve", "--case", "wo-a", "--config", cfg, "--out", str(out), "--diagnostics", str(diag)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["groups"]) == 7
    r = {"1": 3, "2": 1, "3": 2, "4": 2}
    for grp in doc["groups"]:
        assert grp["sent"] == {u: r[u] for u in grp["sent"]} == grp["playback"]
    assert doc["objective"] > 0 and doc["gap"] <= 1e-6
    assert main(["verify", "--config", cfg, "--result", str(out)]) == 0
    with open(diag) as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0].keys()) == DIAGNOSTIC_FIELDS and len(rows) >= 1

    tampered = copy.deepcopy(doc)
    tampered["objective"] *= 0.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(tampered))
    assert main(["verify", "--config", cfg, "--result", str(bad)]) == 1


def test_result_round_trip_keeps_precision(tmp_path):
    from vrcast.config import result_from_dict, result_to_dict
    from vrcast.problems import CaseSpec, solve_case

    sc = scenario_from_dict(load_document(CONFIGS / "tiny.json"))
    res = solve_case(CaseSpec.from_name("w-r"), sc)
    case, back = result_from_dict(json.loads(json.dumps(result_to_dict("w-r", sc, res))))
    assert case == "w-r" and back.objective == res.objective
    np.testing.assert_array_equal(back.allocation.e, res.allocation.e)
    np.testing.assert_array_equal(back.selection.y, res.selection.y)


def test_equal_requirements_collapse_relative_with_transcoding(tmp_path, capsys, example_doc):
    # every user at the top level: nothing to transcode to and no smoothing room
    for u in example_doc["users"]:
        u["r"] = 3
    cfg = _write(tmp_path, example_doc)
    outs = {}
    for case in ("wo-a", "w-r"):
        path = tmp_path / f"{case}.json"
        assert main(["solve", "--case", case, "--config", cfg, "--out", str(path)]) == 0
        outs[case] = json.loads(path.read_text())["objective"]
    assert outs["w-r"] == pytest.approx(outs["wo-a"], rel=1e-6)


def test_oracle_matches_solve_on_absolute_case(tmp_path):
    cfg = str(CONFIGS / "tiny.json")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["solve", "--case", "wo-a", "--config", cfg, "--out", str(a)]) == 0
    assert main(["oracle", "--case", "wo-a", "--config", cfg, "--out", str(b)]) == 0
    va, vb = json.loads(a.read_text())["objective"], json.loads(b.read_text())["objective"]
    assert va == pytest.approx(vb, rel=1e-6)


def test_oracle_budget_exit_code(capsys):
    assert main(["oracle", "--case", "w-a", "--config", str(CONFIGS / "tiny.json"), "--budget", "2"]) == 4
    assert "budget" in capsys.readouterr().err


@pytest.mark.parametrize("flag", [[], ["--oracle"]])
def test_check_ordering_passes(capsys, flag):
    assert main(["check-ordering", "--config", str(CONFIGS / "tiny.json"), *flag]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 4


def test_sweep_writes_one_row_per_value_and_scheme(tmp_path):
    out = tmp_path / "s.csv"
    code = main(["sweep", "--param", "K", "--values", "1,2", "--config", str(CONFIGS / "sweep.json"),
                 "--out", str(out), "--realizations", "2", "--schemes", "wo-a,unicast", "--workers", "1"])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["param", "scheme", "mean_energy_J", "std_energy_J", "n_ok", "n_failed"]
    assert [(r[0], r[1]) for r in rows[1:]] == [("1.0", "wo-a"), ("1.0", "unicast"), ("2.0", "wo-a"), ("2.0", "unicast")]
    # a single user is served identically by both
    assert float(rows[1][2]) == pytest.approx(float(rows[2][2]), rel=1e-6)


def test_sweep_rejects_bad_values(tmp_path, capsys):
    args = ["sweep", "--param", "K", "--config", str(CONFIGS / "sweep.json"), "--out", str(tmp_path / "x.csv")]
    assert main([*args, "--values", "2,abc"]) == 2
    assert main([*args, "--values", "2.5"]) == 2
    assert not (tmp_path / "x.csv").exists()
