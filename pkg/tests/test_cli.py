import csv
import json
from pathlib import Path

import pytest

from repp_lab.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_IO, EXIT_OK, emit_plotdata, load_config, main
from repp_lab.errors import ConfigInvalid, IoFailure
from repp_lab.scenarios import Results
from repp_lab.stats import TestReport

SMALL_MIS = """
seed = 11
[schedule]
masses = [1e-2]
[run]
orbit_length = 4_000_000
measure_samples = 1_000_000
measure_thin = 1
"""


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# ")
    return list(csv.reader(lines[1:]))


def test_missing_seed(tmp_path):
    path = _write(tmp_path, "[schedule]\nmasses = [1e-2]\n")
    with pytest.raises(ConfigInvalid, match="seed"):
        load_config("dichotomy-mis", path)
    assert main(["dichotomy-mis", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_seed_flag_supplies_missing_seed(tmp_path):
    path = _write(tmp_path, "")
    assert load_config("oracle-validate", path, seed=3)["seed"] == 3


@pytest.mark.parametrize("text, match", [
    ("seed = 1\nsede = 2\n", "unknown config key 'sede'"),
    ("seed = 1\n[run]\norbit_lenght = 5\n", "run.orbit_lenght"),
    ("seed = 1\n[schedule]\nmasses = [1e-3, 1e-2]\n", "strictly decreasing"),
    ("seed = 1\n[schedule]\nmasses = [1e-2, 1e-2]\n", "strictly decreasing"),
    ("seed = 1\n[schedule]\nradii = [0.1, 0.2]\n", "strictly decreasing"),
    ("seed = 1\n[tolerances]\ntv = 0.0\n", "positive"),
    ("seed = 1\n[tolerances]\nks = -0.1\n", "positive"),
    ("seed = 1\n[run]\norbit_length = 'long'\n", "type"),
    ("seed = -4\n", "non-negative"),
    ("seed = 1\nthis is not toml\n", "c.toml"),
])
def test_invalid_configs(tmp_path, text, match):
    path = _write(tmp_path, text)
    with pytest.raises(ConfigInvalid, match=match):
        load_config("dichotomy-mis", path)


def test_missing_file_is_config_error(tmp_path):
    assert main(["oracle-validate", "--config", str(tmp_path / "nope.toml")]) == EXIT_CONFIG


def test_user_target_does_not_inherit_default_point(tmp_path):
    path = _write(tmp_path, "seed = 1\n[target]\nsearch_period = 2\n")
    cfg = load_config("dichotomy-mis", path)
    assert cfg["target"]["zeta"] is None and cfg["target"]["search_period"] == 2


def _tail_results():
    res = Results("tails", {"seed": 1})
    res.curve("tail_empirical", ["t", "tail", "ci_lo", "ci_hi"],
              [[1, 1.0, 0.99, 1.0], [10, 0.25, 0.2, 0.3]], "t; tail; ci")
    return res


def test_tail_csv_schema(tmp_path):
    (path,) = emit_plotdata(_tail_results(), tmp_path)
    rows = _read_csv(path)
    assert rows[0] == ["t", "tail", "ci_lo", "ci_hi"]
    assert rows[2] == ["10", "0.25", "0.2", "0.3"]


def test_empty_curve_is_header_only(tmp_path):
    res = Results("tails", {"seed": 1})
    res.curve("tail_empirical", ["t", "tail", "ci_lo", "ci_hi"], [], "no rows")
    (path,) = emit_plotdata(res, tmp_path)
    assert Path(path).read_text() == "# no rows\nt,tail,ci_lo,ci_hi\n"
    assert emit_plotdata(Results("tails", {"seed": 1}), tmp_path / "none") == []


def test_unwritable_output_is_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoFailure):
        emit_plotdata(_tail_results(), blocker / "sub")


def test_io_failure_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    path = _write(tmp_path, "seed = 1\n")
    assert main(["oracle-validate", "--config", path, "--out", str(blocker / "sub")]) == EXIT_IO


def test_failing_report_sets_exit_one(tmp_path, monkeypatch):
    import repp_lab.cli as cli

    def fake_run(name, cfg):
        res = Results(name, cfg)
        res.check("always fails", TestReport(1.0, 1, 0.5, False, "stub"))
        return res

    monkeypatch.setattr(cli, "run", fake_run)
    path = _write(tmp_path, "seed = 1\n")
    out = tmp_path / "o"
    assert main(["oracle-validate", "--config", path, "--out", str(out)]) == EXIT_FAILED
    data = json.loads((out / "results.json").read_text())
    assert data["all_pass"] is False and data["failing"] == ["always fails"]


def test_oracle_validate_defaults(tmp_path):
    path = _write(tmp_path, "seed = 20240601\n")
    out = tmp_path / "o"
    assert main(["oracle-validate", "--config", path, "--out", str(out)]) == EXIT_OK
    data = json.loads((out / "results.json").read_text())
    assert data["all_pass"]
    hand = [r for r in data["reports"] if "hand" in r["name"]]
    assert hand and all(r["statistic"] == 0.0 for r in hand)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 20240601 and len(manifest["config_hash"]) == 64
    assert "wall_clock_seconds" not in data


def test_cluster_histogram_csv(tmp_path):
    path = _write(tmp_path, SMALL_MIS)
    out = tmp_path / "o"
    main(["dichotomy-mis", "--config", path, "--out", str(out)])
    rows = _read_csv(out / "cluster_sizes_0.csv")
    assert rows[0] == ["k", "empirical", "geometric"]
    for k, emp, geo in rows[1:11]:
        assert float(geo) == pytest.approx(0.5 ** int(k), abs=1e-15)
        assert abs(float(emp) - float(geo)) < 0.05
