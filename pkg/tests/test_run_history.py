import os
import sqlite3

import pytest

import run_history


@pytest.fixture
def mock_db(tmp_path, monkeypatch):
    """Isolate history writes to a temporary file"""
    db_file = tmp_path / "test_history.db"
    monkeypatch.setattr(run_history, "DB_FILE", str(db_file))
    run_history.init_db()
    return str(db_file)


def test_init_db(mock_db):
    """Database file and stage table are created"""
    assert os.path.exists(mock_db)
    conn = sqlite3.connect(mock_db)
    c = conn.cursor()
    c.execute("SELECT name FROM sqlite_master WHERE type='table' AND name='stages'")
    assert c.fetchone() is not None
    conn.close()


def test_save_and_load_stages(mock_db):
    run_history.save_stage("run-1", "fuse", "completed", config_hash="abc")
    run_history.save_stage("run-1", "weights", "failed", ValueError("bad polygon"), config_hash="abc")
    run_history.save_stage("run-2", "fuse", "completed")

    loaded = run_history.load_runs("run-1")
    assert list(loaded["seq"]) == [1, 2]
    assert list(loaded["stage"]) == ["fuse", "weights"]
    assert loaded.iloc[1]["message"] == "bad polygon"
    assert loaded.iloc[0]["config_hash"] == "abc"
    assert len(run_history.load_runs()) == 3


def test_init_is_idempotent(mock_db):
    run_history.save_stage("run-1", "fuse", "completed")
    run_history.init_db()
    assert len(run_history.load_runs()) == 1


def test_explicit_db_file(tmp_path):
    db_file = str(tmp_path / "other.db")
    run_history.init_db(db_file)
    run_history.save_stage("r", "cv", "completed", db_file=db_file)
    assert list(run_history.load_runs("r", db_file=db_file)["stage"]) == ["cv"]


def test_missing_table_returns_empty(tmp_path):
    assert run_history.load_runs(db_file=str(tmp_path / "empty.db")).empty
