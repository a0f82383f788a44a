import json
import os
from dataclasses import replace

import pandas as pd
import pytest

import run_history
from errors import ConfigError, StageError
from pipeline import STALE_MARKER, run_pipeline, run_sweep, run_threshold_sweep, run_until
from run_config import GwrSettings, load_config


@pytest.fixture
def config(study_area, tmp_path):
    return load_config(study_area.config_path, output=str(tmp_path / "out"))


def _read(config, name):
    with open(os.path.join(config.output_dir, name), encoding="utf-8") as f:
        return f.read()


def test_full_pipeline(config, study_area):
    report = run_pipeline(config)
    assert report.models == ["ols", "spatial_lag", "spatial_error", "gwr"]
    for name in ("assembly_report.json", "weights.csv", "fits.json", "gwr_local_coefficients.csv",
                 "moran.json", "cv.json", "report.json", "report.txt", "coefficients.csv"):
        assert os.path.exists(os.path.join(config.output_dir, name)), name

    assembly = json.loads(_read(config, "assembly_report.json"))
    assert assembly["rows_dropped_missing"] == 1
    assert assembly["rows_out"] == len(study_area.retained_ids)
    assert assembly["boxcox"] == {"lambda": 1.0, "offset": 1.0}

    # the target follows a lag process, so OLS leaves more clustering behind than the lag model
    moran = json.loads(_read(config, "moran.json"))
    assert abs(moran["ols"]["z_score"]) > abs(moran["spatial_lag"]["z_score"])
    assert moran["ols"]["permutations"] == 99

    fits = json.loads(_read(config, "fits.json"))
    assert 0.4 < fits["spatial_lag"]["rho"] < 0.95
    cv = json.loads(_read(config, "cv.json"))
    assert set(cv) == {"ols", "spatial_lag", "spatial_error", "gwr"}
    assert all(sum(v["fold_sizes"]) == len(study_area.retained_ids) for v in cv.values())

    local = pd.read_csv(os.path.join(config.output_dir, "gwr_local_coefficients.csv"), dtype={"zone_id": str})
    assert list(local["zone_id"]) == sorted(study_area.retained_ids)
    assert not os.path.exists(os.path.join(config.output_dir, STALE_MARKER))


def test_report_is_byte_identical_across_runs(config, tmp_path):
    run_pipeline(config)
    second = replace(config, output_dir=str(tmp_path / "again"))
    run_pipeline(second)
    assert _read(config, "report.json") == _read(second, "report.json")
    assert _read(config, "report.txt") == _read(second, "report.txt")


def test_run_until_stops_early(config):
    produced = run_until(config, "weights")
    assert set(produced) == {"fused", "weights", "written"}
    assert sorted(os.path.basename(p) for p in produced["written"]) == ["assembly_report.json", "weights.csv"]
    with pytest.raises(ConfigError):
        run_until(config, "publish")


def test_failed_stage_marks_outputs_stale(config):
    # a one-neighbour adaptive kernel leaves every local design singular
    broken = replace(config, gwr=GwrSettings(bandwidth=1))
    with pytest.raises(StageError) as info:
        run_until(broken, "fit")
    assert info.value.stage == "fit"
    assert info.value.exit_code == 4
    marker = _read(broken, STALE_MARKER)
    assert "stage 'fit' failed" in marker
    assert "weights.csv" in marker

    run_until(config, "weights")
    assert not os.path.exists(os.path.join(config.output_dir, STALE_MARKER))


def test_history_records_stages(config, tmp_path):
    db_file = str(tmp_path / "history.db")
    run_until(replace(config, history_db=db_file), "weights")
    runs = run_history.load_runs(db_file=db_file)
    assert list(runs["stage"]) == ["fuse", "weights"]
    assert set(runs["status"]) == {"completed"}
    assert runs["run_id"].nunique() == 1


def test_threshold_sweep(config):
    table = run_threshold_sweep(config)
    assert len(table) == 11
    counts = list(table["matched_count"])
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    summary = json.loads(_read(config, "sweep_threshold.json"))
    assert summary["default_threshold"] == 0.2
    assert summary["matched_at_default"] == counts[2]
    assert os.path.exists(os.path.join(config.output_dir, "sweep_threshold.csv"))


def test_radius_sweep_outputs(config, study_area):
    short = replace(config, radii=(10, 25, 50), sweep_models=("ols", "spatial_lag"))
    table, best = run_sweep(short)
    assert len(table) == 6
    assert best["spatial_lag"] == study_area.truth["station_radius"]
    summary = json.loads(_read(short, "sweep_radius.json"))
    assert summary["aic_kind"] == {"ols": "AIC", "spatial_lag": "AIC"}
    assert summary["best_radius"] == best
