import shutil

import numpy as np
import pytest

from vehco2 import cli
from vehco2.config import ConfigError, RunConfig
from vehco2.nn.checkpoint import load as load_ckpt
from vehco2.pipeline import Domain, Role
from vehco2.report import read_table
from vehco2.schema import read_trips

CONFIG = """\
run_dir = run
raw.i3 = raw/i3
raw.qx50 = raw/qx50
train.ev.epochs = 2
model.ev.emissions.hidden_units = 6
model.ev.feature.hidden_units = 6
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "run.cfg").write_text(CONFIG)
    assert cli.main(["synth", "--out", "raw", "--ev-trips", "10", "--icev-trips", "2", "--samples", "60"]) == 0
    return tmp_path


def run(*args):
    return cli.main(["-c", "run.cfg", *args])


# -- configuration ---------------------------------------------------------------

def test_config_precedence(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("seed = 3\nfactors.phi = 40  # comment\n")
    cfg = RunConfig.load(path, environ={})
    assert cfg.seed == 3 and cfg.factors().phi == 40
    cfg = RunConfig.load(path, environ={"VEHCO2_SEED": "4", "VEHCO2_FACTORS__PHI": "41"})
    assert cfg.seed == 4 and cfg.factors().phi == 41
    cfg = RunConfig.load(path, {"seed": "5"}, environ={"VEHCO2_SEED": "4"})
    assert cfg.seed == 5


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(None, {"sede": "1"}, environ={})
    path = tmp_path / "bad.cfg"
    path.write_text("just words\n")
    with pytest.raises(ConfigError):
        RunConfig.load(path, environ={})


def test_config_model_overrides():
    cfg = RunConfig.load(None, {"model.icev.emissions.hidden_units": "12", "train.icev.epochs": "7"}, environ={})
    m = cfg.model_config(Domain.ICEV, Role.EMISSIONS)
    assert (m.hidden_units, m.head_units, m.lstm_layers) == (12, 12, 2)
    assert cfg.train_config(Domain.ICEV).epochs == 7
    assert cfg.train_config(Domain.EV).epochs == 20
    assert cfg.model_config(Domain.EV, Role.FEATURE).output_dim == 2


def test_config_hash_tracks_values():
    a = RunConfig.load(None, environ={})
    b = RunConfig.load(None, {"factors.phi": "40"}, environ={})
    assert a.hash == RunConfig.load(None, environ={}).hash != b.hash
    assert a.provenance()["factors.phi"] == "38.5"


# -- commands --------------------------------------------------------------------

def test_full_run(workdir):
    assert run("ingest", "--profile", "i3") == 0
    assert run("ingest", "--profile", "qx50") == 0
    trips = read_trips(workdir / "run/harmonized/i3.csv")
    assert len(trips) == 10 and all(np.all(t.channel("co2_rate") >= 0) for t in trips)

    assert run("train", "--domain", "ev", "--role", "emissions") == 0
    assert run("train", "--domain", "ev", "--role", "feature") == 0
    meta, _ = load_ckpt(workdir / "run/checkpoints/ev-emissions-i3.ckpt")
    assert meta["model_config"]["output_dim"] == 1 and meta["seed"] == 0 and "config_hash" in meta
    meta, _ = load_ckpt(workdir / "run/checkpoints/ev-feature-i3.ckpt")
    assert meta["model_config"]["output_dim"] == 2
    header, body = read_table(workdir / "run/loss_curves/ev-emissions-i3.csv")
    assert header == ["epoch", "train_mse", "val_mse"] and len(body) == 2
    assert (workdir / "run/splits/i3.csv").exists()

    assert run("validate") == 0
    (table,) = (workdir / "run/reports").glob("proxy_*.csv")
    header, body = read_table(table)
    assert len(header) == 5 and [r[0] for r in body[-2:]] == ["mean", "median"]
    assert len(body) == 2 + 2   # 2 held-out trips at 70/15/15 of 10

    assert run("counterfact", "--trip", "61900001") == 0
    totals = next((workdir / "run/reports").glob("counterfactual_qx50_61900001_*_totals.txt")).read_text()
    assert "ev_total_g" in totals and "gap_total_g" in totals and "seed=0" in totals
    plot = next((workdir / "run/reports").glob("counterfactual_*_plot.csv"))
    assert {r[1] for r in read_table(plot)[1]} == {"ev_counterfactual", "icev_observed", "gap"}

    assert run("report") == 0
    assert list((workdir / "run/reports").glob("trip_mae_ev-emissions-i3_*.csv"))
    assert list((workdir / "run/reports").glob("loss_ev-feature-i3_*_plot.csv"))


def test_every_output_carries_hash_and_seed(workdir):
    run("ingest", "--profile", "i3")
    run("train", "--domain", "ev", "--role", "emissions")
    h = RunConfig.load("run.cfg", environ={}).hash
    for path in (workdir / "run").rglob("*"):
        if path.is_file() and path.suffix in (".csv", ".txt"):
            text = path.read_text()
            assert f"config_hash={h}" in text and "seed=0" in text, path


def test_ingest_exit_codes(workdir):
    assert run("ingest", "--profile", "qx50", "--raw", "missing") == 2
    (workdir / "raw/i3/Trip999.csv").write_text("What;Ever\n1;2\n")
    assert run("ingest", "--profile", "i3") == 2
    report = next((workdir / "run/reports").glob("filter_i3_*.txt")).read_text()
    assert "Trip999.csv" in report
    # the other files are still harmonized
    assert len(read_trips(workdir / "run/harmonized/i3.csv")) == 10


def test_strict_profile_flag(workdir):
    assert run("ingest", "--profile", "qx50-strict", "--raw", "raw/qx50") == 0
    assert (workdir / "run/harmonized/qx50-strict.csv").exists()
    report = next((workdir / "run/reports").glob("filter_qx50-strict_*.txt")).read_text()
    assert "rows_out" in report


def test_train_exit_codes(workdir):
    assert run("train", "--domain", "ev", "--role", "emissions") == 3   # nothing ingested
    run("ingest", "--profile", "qx50")
    assert run("train", "--domain", "icev", "--role", "feature") == 3
    assert run("train", "--domain", "icev", "--role", "emissions") == 3  # 2 trips cannot be split


def test_validate_and_counterfact_exit_codes(workdir):
    run("ingest", "--profile", "i3")
    run("ingest", "--profile", "qx50")
    assert run("validate") == 4
    assert run("counterfact", "--trip", "61900000") == 5
    run("train", "--domain", "ev", "--role", "emissions")
    run("train", "--domain", "ev", "--role", "feature")
    assert run("counterfact", "--trip", "nope") == 5


def test_counterfact_short_trip(workdir):
    raw = workdir / "raw/qx50/61900000 Test Data.txt"
    lines = raw.read_text().splitlines()
    raw.write_text("\n".join(lines[:9]) + "\n")
    run("ingest", "--profile", "i3")
    run("ingest", "--profile", "qx50")
    run("train", "--domain", "ev", "--role", "emissions")
    run("train", "--domain", "ev", "--role", "feature")
    assert run("counterfact", "--trip", "61900000") == 5


def test_usage_errors_exit_1(workdir):
    with pytest.raises(SystemExit) as info:
        cli.main(["bogus"])
    assert info.value.code == 1
    assert cli.main(["--set", "nonsense=1", "report"]) == 1


def test_report_table_aggregation(tmp_path, capsys):
    from oracles import ICEV_MAE
    from vehco2.report import TRIP_MAE_SCHEMA, emit_table
    path = emit_table(tmp_path / "t.csv", [[str(i), v] for i, v in enumerate(ICEV_MAE)], TRIP_MAE_SCHEMA)
    assert cli.main(["--set", f"run_dir={tmp_path / 'r'}", "report", "--table", str(path)]) == 0
    out = capsys.readouterr().out
    assert "median = 0.289" in out and "min = 0.071" in out


def _snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != ".lock"}


def _pipeline():
    for args in (["ingest", "--profile", "i3"], ["ingest", "--profile", "qx50"],
                 ["train", "--domain", "ev", "--role", "emissions"],
                 ["train", "--domain", "ev", "--role", "feature"],
                 ["validate"], ["counterfact", "--trip", "61900000"], ["report"]):
        assert run(*args) == 0


def test_runs_are_bitwise_identical(workdir):
    _pipeline()
    first = _snapshot(workdir / "run")
    shutil.rmtree(workdir / "run")
    _pipeline()
    second = _snapshot(workdir / "run")
    assert first.keys() == second.keys() and len(first) > 10
    assert first == second
