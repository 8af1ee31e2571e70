import json

import numpy as np
import pandas as pd
import pytest

from fgp.cli import main


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    out = d / "panel.csv"
    assert main(["simulate", "--output", str(out), "--seed", "4", "--set", "n_assets=4", "--set", "horizon_years=12",
                 "--set", "regime=mean_reverting_relative"]) == 0
    return out


def test_default_simulate(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["simulate", "--output", str(out)]) == 0
    df = pd.read_csv(out, index_col=0)
    assert df.shape == (30 * 252 + 1, 10)
    assert np.all(df.iloc[0] == 1.0)


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--seed", "9", "--set", "n_assets=3", "--set", "horizon_years=2"]
    assert main(args + ["--output", str(a)]) == 0
    assert main(args + ["--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_from_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("# desk run\nn_assets = 3\nhorizon_years = 2\nseed = 1\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", str(cfg), "--output", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--seed", "2", "--output", str(b)]) == 0
    assert pd.read_csv(a).shape[1] == 4
    assert a.read_bytes() != b.read_bytes()


def test_bad_correlation_exits_2(tmp_path, capsys):
    code = main(["simulate", "--output", str(tmp_path / "x.csv"), "--set", "n_assets=3",
                 "--set", "correlation=1,0.9,-0.9;0.9,1,0.9;-0.9,0.9,1"])
    assert code == 2
    assert "correlation matrix" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path, sim_csv):
    assert main(["simulate", "--output", str(tmp_path / "x.csv"), "--set", "kappa=-1"]) == 2
    assert main(["backtest", "--input", str(sim_csv), "--output", str(tmp_path), "--strategy", "momentum"]) == 2
    assert main(["backtest", "--input", str(sim_csv)]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["backtest", "--config", str(bad), "--input", str(sim_csv), "--output", str(tmp_path)]) == 2


def test_data_errors_exit_3(tmp_path, sim_csv, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,A,B\n2000-01-03,1.0,1.0\n2000-01-04,oops,1.0\n")
    assert main(["backtest", "--input", str(bad), "--output", str(tmp_path / "o")]) == 3
    assert "2000-01-04" in capsys.readouterr().err
    assert main(["backtest", "--input", str(sim_csv), "--output", str(tmp_path / "o"), "--burn-in-years", "40"]) == 3
    assert main(["normalize", "--input", str(tmp_path / "missing.csv"), "--output", str(tmp_path / "n.csv")]) == 3


def test_normalize(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text("date,A,B\n2000-01-03,10,200\n2000-01-04,11,180\n2000-01-05,12,\n2000-01-06,12,190\n")
    out = tmp_path / "norm.csv"
    assert main(["normalize", "--input", str(raw), "--output", str(out)]) == 0
    df = pd.read_csv(out, index_col=0)
    np.testing.assert_allclose(df.iloc[0], [1.0, 1.0])
    np.testing.assert_allclose(df.iloc[1], [1.1, 0.9])
    assert df.iloc[2, 1] == df.iloc[1, 1]  # one-day gap forward-filled


def test_backtest_outputs(tmp_path, sim_csv):
    out = tmp_path / "bt"
    assert main(["backtest", "--input", str(sim_csv), "--output", str(out), "--burn-in-years", "2"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["relative_log_prices.csv", "turnover.csv", "values.csv", "weights_ces_-0.5.csv",
                     "weights_equal.csv", "weights_market.csv"]
    values = pd.read_csv(out / "values.csv", index_col=0)
    assert list(values.columns) == ["market", "equal", "ces(-0.5)"]
    assert values.iloc[0].nunique() == 1
    assert (pd.read_csv(out / "turnover.csv", index_col=0)["market"] == 0).all()


def test_decompose_outputs(tmp_path, sim_csv):
    out = tmp_path / "dec"
    assert main(["decompose", "--input", str(sim_csv), "--output", str(out), "--burn-in-years", "2",
                 "--strategy", "equal", "--strategy", "ces:gamma=-0.5",
                 "--strategy", "additive:measure=neg_geometric_mean"]) == 0
    df = pd.read_csv(out / "decomposition_equal.csv", index_col=0)
    assert list(df.columns) == ["cum_abnormal", "log_neg_F", "drift_residual", "drift_direct", "gap"]
    assert np.all(np.diff(df["drift_direct"]) >= 0)
    # small gap means the residual drift tracks the non-decreasing direct drift
    assert df["gap"].abs().max() < 0.1 * df["drift_direct"].iloc[-1]
    assert list(pd.read_csv(out / "decomposition_additive_neg_geometric_mean.csv", index_col=0).columns)[1] == "neg_F"
    stats = json.loads((out / "component_stats.json").read_text())
    assert set(stats) == {"equal", "ces(-0.5)", "additive[neg_geometric_mean]"}
    assert stats["equal"]["identity_error"] <= 1e-12
    assert stats["equal"]["monthly"]["freq"] == "monthly"


def test_report_structure(tmp_path, sim_csv, capsys):
    out = tmp_path / "rep"
    assert main(["report", "--input", str(sim_csv), "--output", str(out), "--burn-in-years", "2"]) == 0
    t3 = pd.read_csv(out / "table3_relative.csv")
    assert list(t3.columns) == ["sample", "period", "strategy", "ann_mean", "ann_sd", "sharpe", "n_months", "flag"]
    assert sorted(set(t3["strategy"])) == ["ces(-0.5)", "equal"]
    assert list(dict.fromkeys(t3["period"])) == ["2002-2012", "2002-2010", "2010-2012"]
    t2 = pd.read_csv(out / "table2_returns.csv")
    assert sorted(set(t2["strategy"])) == ["ces(-0.5)", "equal", "market"]
    t1 = pd.read_csv(out / "table1_assets.csv")
    assert list(t1["asset"]) == ["A00", "A01", "A02", "A03"]
    assert json.loads((out / "report.json").read_text()).keys() == {"absolute", "relative"}
    assert "Sharpe" in capsys.readouterr().out
    custom = tmp_path / "rep2"
    assert main(["report", "--input", str(sim_csv), "--output", str(custom), "--burn-in-years", "2",
                 "--periods", "2005,2008"]) == 0
    assert list(dict.fromkeys(pd.read_csv(custom / "table3_relative.csv")["period"])) == \
        ["2002-2012", "2002-2005", "2005-2008", "2008-2012"]


def test_pipeline_is_byte_identical(tmp_path):
    def run(tag):
        d = tmp_path / tag
        d.mkdir()
        panel = d / "panel.csv"
        assert main(["simulate", "--output", str(panel), "--seed", "3", "--set", "n_assets=3",
                     "--set", "horizon_years=8"]) == 0
        for cmd in ("backtest", "decompose", "report"):
            assert main([cmd, "--input", str(panel), "--output", str(d / cmd)]) == 0
        return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}

    a, b = run("a"), run("b")
    assert a.keys() == b.keys() and len(a) > 10
    assert all(a[k] == b[k] for k in a)


def test_convergence_table(tmp_path):
    out = tmp_path / "conv.csv"
    assert main(["simulate", "--output", str(out), "--set", "n_assets=3", "--set", "horizon_years=2",
                 "--steps", "12,24,48", "--paths", "3"]) == 0
    t = pd.read_csv(out)
    assert list(t["steps_per_year"]) == [12, 24, 48]
    assert "gap_terminal_ratio" in t.columns
