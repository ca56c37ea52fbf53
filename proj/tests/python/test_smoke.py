import math

import numpy as np
import pytest

import ftcsim


def test_lgl_basis_hand_values():
    nodes, weights, d = ftcsim.lgl_basis(2)
    np.testing.assert_allclose(nodes, [-1.0, 0.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(weights, [1 / 3, 4 / 3, 1 / 3], rtol=1e-14)
    np.testing.assert_allclose(d @ nodes, np.ones(3), atol=1e-14)


def test_config_keywords_and_validation():
    cfg = ftcsim.ScenarioConfig(scenario=2, filter="imm-ukf", modes=5, feedback="off")
    assert cfg.scenario == 2
    assert cfg.filter == ftcsim.FilterKind.imm_ukf
    assert cfg.imm_modes == 5
    assert not cfg.feedback
    assert cfg.label() == "imm-ukf5"
    with pytest.raises(ValueError):
        ftcsim.ScenarioConfig(filter="kalman")
    bad = ftcsim.ScenarioConfig()
    bad.scenario = 9
    with pytest.raises(ValueError):
        bad.validate()


def test_short_run_columns_and_metrics(tmp_path):
    cfg = ftcsim.ScenarioConfig(scenario=1, filter="ukf", duration=3)
    log = ftcsim.run_scenario(cfg)
    assert len(log) == 301
    cols = log.columns()
    assert list(cols) == ftcsim.csv_header(0)
    assert cols["t"][-1] == pytest.approx(3.0)
    assert math.isnan(cols["nu"][0])
    assert 0.0 <= ftcsim.innovation_coverage(log) <= 1.0
    assert ftcsim.tracking_rms(log) < 1.0

    path = tmp_path / "run.csv"
    ftcsim.export_csv(log, path)
    back = ftcsim.parse_csv(path)
    assert len(back) == 301
    np.testing.assert_allclose(back.columns()["x"], cols["x"], rtol=1e-8)
    assert log.to_csv() == path.read_text()


def test_imm_run_has_mode_probabilities():
    cfg = ftcsim.ScenarioConfig(scenario=2, filter="imm-ekf", duration=10.5)
    log = ftcsim.run_scenario(cfg)
    cols = log.columns()
    mu = np.column_stack([cols[f"mu{j}"] for j in range(1, 5)])
    np.testing.assert_allclose(mu.sum(axis=1), 1.0, atol=1e-9)
    assert ftcsim.mode_fraction(log, 3, 10.4, 10.5) == 1.0


def test_io_errors():
    with pytest.raises(OSError):
        ftcsim.parse_csv("/nonexistent-dir/in.csv")
    with pytest.raises(OSError):
        ftcsim.export_csv(ftcsim.run_scenario(ftcsim.ScenarioConfig(duration=0.1)), "/nonexistent-dir/x.csv")
