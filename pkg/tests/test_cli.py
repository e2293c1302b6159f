import json

import pytest
import yaml

from dsswave.cli import ScenarioConfig, config_hash, load_config, main
from dsswave.errors import ValidationError

SMALL = {
    "channels": {"ells": [0, 1]},
    "grid": {"r_star_min": -40.0, "r_star_max": 60.0, "dr_star": 0.1},
    "evolution": {"t_end": 20.0, "probes": [-5.0, 5.0], "cadence": 5},
}


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def test_horizons_command(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["horizons", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "r_bh = 2.0581193002669" in text and "r_anchor" in text
    hz = json.loads((out / "horizons.json").read_text())
    assert abs(hz["kappa_bh"] - 0.22235904857377847) < 1e-15
    ledger = (out / "ledger.jsonl").read_text().splitlines()
    assert len(ledger) == 1 and json.loads(ledger[0])["checks"] == {"horizons": True}


def test_de_sitter_horizons(tmp_path):
    cfg = _write(tmp_path, {"params": {"m": 0.0, "Lambda": 3.0, "de_sitter": True}})
    assert main(["horizons", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize(
    "raw",
    [
        {"params": {"m": 1.0, "Lambda": 1.0 / 9.0}},
        {"evolution": {"cfl": 1.5}},
        {"evolutoin": {"cfl": 0.5}},
        {"grid": {"dr_step": 0.1}},
        {"mellin": {"s": [0.01, -0.05]}},
        {"data": {"angular": [[1, 2, 1.0]]}},
    ],
)
def test_validation_exit_code(tmp_path, raw):
    assert main(["horizons", "--config", _write(tmp_path, raw), "--out", str(tmp_path / "o")]) == 2


def test_bad_yaml_and_missing_file(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("params: [1, 2\n")
    assert main(["horizons", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["horizons", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == 2


def test_unknown_key_message():
    with pytest.raises(ValidationError, match="unknown key"):
        ScenarioConfig.from_dict({"fit": {"windw": [1, 2]}})


def test_config_hash_stable(tmp_path):
    a = load_config(_write(tmp_path, SMALL, "a.yaml"))
    b = load_config(_write(tmp_path, json.loads(json.dumps(SMALL)), "b.yaml"))
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(ScenarioConfig.from_dict({}))


def test_evolve_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    dirs = [tmp_path / "r1", tmp_path / "r2"]
    for d, threads in zip(dirs, ("1", "2")):
        assert main(["evolve", "--config", cfg, "--out", str(d), "--threads", threads]) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert "probes_l0_psi.csv" in names and "probes_l1_phi.csv" in names
    for n in names:
        assert (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes(), n


def test_rerun_appends_identical_ledger(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "r"
    for _ in range(2):
        assert main(["evolve", "--config", cfg, "--out", str(out)]) == 0
    a, b = (out / "ledger.jsonl").read_text().splitlines()
    assert a == b


def test_evolve_3d(tmp_path):
    raw = dict(SMALL, channels={"ells": [0, 1], "L_max": 2})
    out = tmp_path / "o"
    assert main(["evolve", "--config", _write(tmp_path, raw), "--out", str(out)]) == 0
    info = json.loads((out / "evolve_3d.json").read_text())
    assert info["channels"] == [[0, 0], [1, 0]]
    assert (out / "points.csv").exists()


def test_charts_verify_and_negative_control(tmp_path):
    assert main(["charts-verify", "--out", str(tmp_path / "a")]) == 0
    bad = _write(tmp_path, {"charts": {"lambda_bh_factor": 1.1}})
    assert main(["charts-verify", "--config", bad, "--out", str(tmp_path / "b")]) == 3
    rep = json.loads((tmp_path / "b" / "charts_report.json").read_text())
    assert not rep["cancellation_richardson"]["passed"]


def test_resonances_command(tmp_path):
    raw = {"resonances": {"boxes": [{"ell": 0, "box": [-0.1, 0.1, -0.05, 0.06]}]}}
    out = tmp_path / "o"
    assert main(["resonances", "--config", _write(tmp_path, raw), "--out", str(out)]) == 0
    rows = (out / "resonances_l0_0.csv").read_text().splitlines()
    assert len(rows) == 2


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DSSWAVE_THREADS", "many")
    assert main(["evolve", "--config", _write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.slow
def test_theorem_check_y10_only(tmp_path):
    # no l = 0 content: the constant must vanish and every check still applies
    raw = {"channels": {"ells": [0, 1]}, "data": {"angular": [[1, 0, 1.0]]}}
    out = tmp_path / "o"
    assert main(["theorem-check", "--config", _write(tmp_path, raw), "--out", str(out), "--threads", "2"]) == 0
    rep = json.loads((out / "theorem_check.json").read_text())
    assert rep["checks"]["c_zero_without_l0_content"] and rep["checks"]["l1_matches_resonance"]
