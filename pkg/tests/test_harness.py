import json
from pathlib import Path

import numpy as np
import pytest

from passwpt.harness import (
    ExperimentSpec,
    MissingAxis,
    convert_config_units,
    db_to_linear,
    dbm_to_watt,
    emit_figure_data,
    linear_to_db,
    load_experiment_spec,
    run_experiment,
    watt_to_dbm,
)
from passwpt.scenario import ConfigError, ScenarioConfig


def fast_two_user_config(**kw):
    """Tiny single-waveguide scenario that solves in well under a second."""
    defaults = dict(num_waveguides=1, waveguide_y=(0.0,), pas_per_waveguide=2,
                    num_idrs=1, num_ehrs=1, zeta=(0.5,),
                    candidate_x=(8.0, 16.0, 24.0), p_min=1e-12,
                    max_outer_iters=20)
    defaults.update(kw)
    return ScenarioConfig(**defaults)


class TestUnitConversion:
    def test_dbm_roundtrip(self):
        np.testing.assert_allclose(dbm_to_watt(-80.0), 1e-11, rtol=1e-12)
        np.testing.assert_allclose(watt_to_dbm(1e-11), -80.0, atol=1e-9)
        np.testing.assert_allclose(db_to_linear(20.0), 100.0, rtol=1e-12)
        np.testing.assert_allclose(linear_to_db(100.0), 20.0, atol=1e-12)

    def test_config_key_conversion(self):
        data = convert_config_units({"noise_power_dbm": -80.0,
                                     "gamma_min_db": 20.0,
                                     "p_max": 2.0})
        np.testing.assert_allclose(data["noise_power"], 1e-11)
        np.testing.assert_allclose(data["gamma_min"], 100.0)
        assert data["p_max"] == 2.0


class TestSpecValidation:
    def test_values_must_increase(self):
        with pytest.raises(ConfigError):
            ExperimentSpec(base=fast_two_user_config(), axis="p_max",
                           values=(2.0, 1.0))

    def test_unknown_axis(self):
        with pytest.raises(ConfigError):
            ExperimentSpec(base=fast_two_user_config(), axis="bananas")

    def test_load_spec_file(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({
            "scenario": {"num_waveguides": 1, "waveguide_y": [0.0],
                         "pas_per_waveguide": 2, "num_idrs": 1, "num_ehrs": 1,
                         "zeta": [0.5], "candidate_x": [8.0, 16.0],
                         "noise_power_dbm": -80.0},
            "axis": "p_max", "values": [1.0, 2.0], "schemes": ["mimo"],
            "drops": 2, "seed": 3,
        }))
        spec = load_experiment_spec(path)
        assert spec.base.noise_power == pytest.approx(1e-11)
        assert spec.axis == "p_max"
        assert spec.drops == 2


class TestRunExperiment:
    def test_single_row(self, tmp_path):
        spec = ExperimentSpec(base=fast_two_user_config(), axis="iterations",
                              values=(1.0,), schemes=("mimo",), drops=1,
                              out_dir=str(tmp_path / "out"), seed=1)
        report = run_experiment(spec)
        assert len(report.rows) == 1
        assert report.rows[0]["ok"]
        assert (tmp_path / "out" / "rows.csv").exists()
        assert (tmp_path / "out" / "report.json").exists()

    def test_rerun_byte_identical(self, tmp_path):
        def run(out):
            spec = ExperimentSpec(base=fast_two_user_config(),
                                  axis="iterations", values=(1.0,),
                                  schemes=("pass_wpt", "mimo"), drops=2,
                                  out_dir=str(out), seed=7)
            run_experiment(spec)
            return (out / "rows.csv").read_bytes()

        first = run(tmp_path / "a")
        second = run(tmp_path / "b")
        assert first == second

    def test_failures_recorded_not_fatal(self, tmp_path):
        # an SINR floor above the interference ceiling makes the primary
        # scheme infeasible; the row must record the failure
        cfg = fast_two_user_config(num_idrs=2, num_ehrs=1, gamma_min=1e9)
        spec = ExperimentSpec(base=cfg, axis="iterations", values=(1.0,),
                              schemes=("pass_wpt",), drops=1,
                              out_dir=str(tmp_path / "out"), seed=2)
        report = run_experiment(spec)
        assert len(report.rows) == 1
        assert not report.rows[0]["ok"]
        assert report.rows[0]["error"]

    def test_aggregates_recomputable(self, tmp_path):
        spec = ExperimentSpec(base=fast_two_user_config(), axis="p_max",
                              values=(50.0, 100.0), schemes=("mimo",), drops=3,
                              out_dir=str(tmp_path / "out"), seed=5)
        report = run_experiment(spec)
        assert len(report.rows) == 2 * 3
        sub = [r["pce"] for r in report.rows
               if r["scheme"] == "mimo" and r["value"] == 50.0 and r["ok"]]
        agg = report.aggregates[("mimo", 50.0)]
        np.testing.assert_allclose(agg["pce"]["mean"], np.mean(sub), rtol=1e-12)
        np.testing.assert_allclose(agg["pce"]["median"], np.median(sub), rtol=1e-12)


class TestFigureData:
    def make_report(self, tmp_path, axis="gamma_min", values=(10.0, 100.0)):
        spec = ExperimentSpec(base=fast_two_user_config(), axis=axis,
                              values=values, schemes=("mimo",), drops=2,
                              out_dir=str(tmp_path / "out"), seed=11)
        return run_experiment(spec)

    def test_convergence_columns(self, tmp_path):
        spec = ExperimentSpec(base=fast_two_user_config(), axis="iterations",
                              values=(1.0,), schemes=("pass_wpt",), drops=1,
                              out_dir=str(tmp_path / "out"), seed=12)
        report = run_experiment(spec)
        path = emit_figure_data(report, "convergence", tmp_path / "fig")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,scheme,objective"
        assert len(lines) > 1

    def test_power_axis_emitted_in_db(self, tmp_path):
        report = self.make_report(tmp_path)
        path = emit_figure_data(report, "power_vs_sinr", tmp_path / "fig")
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("gamma_min_db")
        first_x = float(lines[1].split(",")[0])
        np.testing.assert_allclose(first_x, 10.0, atol=1e-9)  # 10 dB

    def test_missing_axis_rejected(self, tmp_path):
        report = self.make_report(tmp_path)
        with pytest.raises(MissingAxis):
            emit_figure_data(report, "rate_vs_l", tmp_path / "fig")

    def test_csv_schema_stable(self, tmp_path):
        # golden header set for the row table
        spec = ExperimentSpec(base=fast_two_user_config(), axis="iterations",
                              values=(1.0,), schemes=("mimo",), drops=1,
                              out_dir=str(tmp_path / "out"), seed=13)
        run_experiment(spec)
        header = (tmp_path / "out" / "rows.csv").read_text().splitlines()[0]
        assert header == ("scheme,value,drop,ok,error,converged,pce,sum_rate,"
                          "tx_power,sinr,rates,harvested")
