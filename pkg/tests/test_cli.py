import csv
import json
import os

import pytest

from lsblock import artifacts as art
from lsblock.cli import main
from lsblock.config import ConfigError, load, schema_document, validate

MINIMAL = {"lattice.d": 1, "lattice.N": 2, "model.n_s": 2, "t": 0.0}
CHAIN = {"lattice.d": 1, "lattice.N": 3, "model.n_s": 2, "t": 0.02}


def write_config(tmp_path, values, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(values))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# config


def test_defaults_are_the_reference_run():
    c = validate({})
    assert (c["lattice.d"], c["lattice.N"], c["model.n_s"], c["t"]) == (2, 2, 4, 0.02)
    assert c.hash() == validate({}).hash()


def test_config_rejects_unknown_keys_and_bad_values():
    with pytest.raises(ConfigError, match="unknown"):
        validate({"lattice.M": 3})
    with pytest.raises(ConfigError, match="lattice.N must be >= 2, got 1"):
        validate({"lattice.N": 1})
    with pytest.raises(ConfigError):
        validate({"t": 1.5})
    with pytest.raises(ConfigError):
        validate({"t": "small"})
    with pytest.raises(ConfigError):
        validate({"checks": ["main", "bogus"]})
    with pytest.raises(ConfigError, match="exceeds"):
        validate({"lattice.N": 4, "model.n_s": 3})
    with pytest.raises(ConfigError):
        validate({"model.coupling_normalization": 2.0})


def test_output_directory_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("LSBLOCK_OUT", str(tmp_path / "elsewhere"))
    assert load(None)["output.directory"] == str(tmp_path / "elsewhere")


def test_schema_covers_every_key(capsys):
    assert main(["dump-config-schema"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == json.loads(json.dumps(schema_document()))
    assert set(validate({}).values) == set(doc["keys"])


# run


def test_minimal_run(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path, MINIMAL), "--out", str(out)]) == 0
    steps = art.read_steps(str(out))
    assert len(steps) == 1
    assert steps[0]["schema_version"] == art.STEP_SCHEMA_VERSION
    assert "wall_time" not in steps[0]
    manifest = json.loads((out / art.MANIFEST).read_text())
    assert manifest["status"] == "completed" and manifest["exit_code"] == 0
    assert manifest["step_index"][0]["line"] == 1
    assert "checks passed" in capsys.readouterr().out


def test_invalid_lattice_exits_with_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"lattice.N": 1})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "lattice.N must be >= 2, got 1" in capsys.readouterr().err


def test_unreadable_config_exits_with_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_algorithm_error_exits_one_with_partial_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path, {**CHAIN, "series.gap_floor": 1.0, "series.gap_assert_t_max": 0.0})
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 1
    assert len(art.read_steps(str(out))) == 2
    manifest = json.loads((out / art.MANIFEST).read_text())
    assert manifest["status"] == "failed" and manifest["steps_completed"] == 2
    assert "algorithm error" in capsys.readouterr().err


def test_failed_checks_exit_three(tmp_path):
    # an impossible decay exponent makes the norm bounds fail
    cfg = write_config(tmp_path, {**CHAIN, "checks": ["norms"], "verify.x_d": 200.0})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_csv_columns(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path, CHAIN), "--out", str(out), "--seed", "5"]) in (0, 3)
    gap = read_csv(out / art.GAP_CSV)
    assert list(gap[0]) == art.GAP_COLUMNS and len(gap) == 3
    assert all(int(r["checks_total"]) > 0 for r in gap)
    norm = read_csv(out / art.NORM_CSV)
    assert list(norm[0]) == art.NORM_COLUMNS
    scan = read_csv(out / art.SCAN_CSV)
    assert list(scan[0]) == art.SCAN_COLUMNS and len(scan) == 1
    manifest = json.loads((out / art.MANIFEST).read_text())
    assert manifest["config"]["seed"] == 5


def test_run_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, CHAIN)
    for name in ("a", "b"):
        main(["run", "--config", cfg, "--out", str(tmp_path / name)])
    for f in (art.STEPS, art.VERIFICATION):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_t_override(tmp_path):
    out = tmp_path / "out"
    main(["run", "--config", write_config(tmp_path, CHAIN), "--out", str(out), "--t", "0.0"])
    manifest = json.loads((out / art.MANIFEST).read_text())
    assert manifest["config"]["t"] == 0.0


def test_debug_dump_round_trip(tmp_path):
    out = tmp_path / "out"
    main(["run", "--config", write_config(tmp_path, MINIMAL), "--out", str(out), "--debug-dump"])
    levels = sorted(os.listdir(out / "debug"))
    assert levels == ["level_000", "level_001"]
    header, m = art.read_matrix(str(out / "debug" / "level_000" / "1@1.bin"))
    assert header["dims"] == [4, 4] and header["support"] == [[1], [1]]
    assert m.shape == (4, 4)


# verify and scan


def test_verify_on_untouched_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--config", write_config(tmp_path, CHAIN), "--out", str(out)])
    capsys.readouterr()
    code = main(["verify", "--out", str(out)])
    assert code in (0, 3)
    assert "identical to stored report" in capsys.readouterr().out
    assert (out / "recheck" / art.VERIFICATION).read_bytes() == (out / art.VERIFICATION).read_bytes()


def test_verify_detects_changed_tables(tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--config", write_config(tmp_path, CHAIN), "--out", str(out)])
    result = art.load_state(str(out / art.STATE))
    result.t = 0.03
    art.save_state(str(out / art.STATE), result)
    capsys.readouterr()
    main(["verify", "--out", str(out)])
    assert "differs from stored report" in capsys.readouterr().out


def test_verify_without_artifacts(tmp_path):
    assert main(["verify", "--out", str(tmp_path / "nothing")]) == 2


def test_singleton_scan_matches_run(tmp_path):
    cfg = write_config(tmp_path, CHAIN)
    main(["run", "--config", cfg, "--out", str(tmp_path / "run")])
    assert main(["scan", "--config", cfg, "--out", str(tmp_path / "scan"), "--grid", "0.02"]) in (0, 3)
    point = tmp_path / "scan" / "t_0.02"
    for f in (art.STEPS, art.VERIFICATION):
        assert (point / f).read_bytes() == (tmp_path / "run" / f).read_bytes()
    scan = json.loads((tmp_path / "scan" / "scan.json").read_text())
    assert [p["t"] for p in scan["points"]] == [0.02]


def test_scan_with_workers(tmp_path, capsys):
    cfg = write_config(tmp_path, {**CHAIN, "checks": ["main", "block"]})
    code = main(["scan", "--config", cfg, "--out", str(tmp_path / "s"), "--grid", "0.0,0.01", "--workers", "2"])
    assert code == 0
    assert "all grid points passed" in capsys.readouterr().out
    rows = read_csv(tmp_path / "s" / art.SCAN_CSV)
    assert [r["t"] for r in rows] == ["0.0", "0.01"] and all(r["passed"] == "1" for r in rows)


# geometry


def test_geometry_shapes(capsys):
    assert main(["geometry", "--d", "2", "--l", "3", "--shapes"]) == 0
    assert capsys.readouterr().out.strip() == "4"


def test_geometry_steps_and_counts(capsys):
    assert main(["geometry", "--d", "2", "--N", "2", "--steps"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5 and lines[-1] == "4 [[1, 1], [1, 1]]"
    assert main(["geometry", "--d", "2", "--N", "2"]) == 0
    assert capsys.readouterr().out.strip() == "9"


def test_geometry_caps(capsys):
    assert main(["geometry", "--d", "2", "--N", "3", "--caps"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows and all(r["max_g_set"] <= r["cap"] for r in rows)


def test_geometry_argument_errors():
    assert main(["geometry", "--d", "2", "--shapes"]) == 2
    assert main(["geometry", "--d", "2", "--N", "1"]) == 2
