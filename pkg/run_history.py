"""
Run History
Optional SQLite log of pipeline stages: one row per (run, stage) with status and message
"""

import logging
import os
import sqlite3

import pandas as pd

logger = logging.getLogger(__name__)

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DB_FILE = os.path.join(BASE_DIR, "run_history.db")


def get_db_connection(db_file=None):
    conn = sqlite3.connect(db_file or DB_FILE)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(db_file=None):
    """Create the stage table if it does not exist yet"""
    conn = get_db_connection(db_file)
    try:
        conn.execute(
            """
            CREATE TABLE IF NOT EXISTS stages (
                run_id TEXT,
                seq INTEGER,
                stage TEXT,
                status TEXT,
                message TEXT,
                config_hash TEXT,
                created_at DATETIME DEFAULT CURRENT_TIMESTAMP,
                PRIMARY KEY (run_id, seq)
            )
            """
        )
        conn.commit()
    finally:
        conn.close()


def save_stage(run_id, stage, status, message="", config_hash="", db_file=None):
    conn = get_db_connection(db_file)
    try:
        row = conn.execute("SELECT COALESCE(MAX(seq), 0) FROM stages WHERE run_id = ?", (run_id,)).fetchone()
        conn.execute(
            "INSERT INTO stages (run_id, seq, stage, status, message, config_hash) VALUES (?, ?, ?, ?, ?, ?)",
            (run_id, row[0] + 1, stage, status, str(message), config_hash),
        )
        conn.commit()
    except sqlite3.Error as e:
        # best effort
        logger.warning(f"⚠️ Could not record stage '{stage}' in run history: {e}")
    finally:
        conn.close()


def load_runs(run_id=None, db_file=None):
    conn = get_db_connection(db_file)
    try:
        if run_id is None:
            return pd.read_sql("SELECT * FROM stages ORDER BY run_id, seq", conn)
        return pd.read_sql("SELECT * FROM stages WHERE run_id = ? ORDER BY seq", conn, params=(run_id,))
    except (sqlite3.Error, pd.errors.DatabaseError) as e:
        logger.error(f"❌ Error loading run history: {e}")
        return pd.DataFrame()
    finally:
        conn.close()
