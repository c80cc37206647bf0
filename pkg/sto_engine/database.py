"""
Run ledger using sqlite3 (no external dependencies).
One row per CLI invocation; never read back into numerical results.
"""
import logging
import sqlite3
from pathlib import Path

from sto_engine import config

logger = logging.getLogger(__name__)

RUN_STATUSES = ("running", "passed", "failed", "error")


def get_connection(db_path=None):
    """Get a database connection with row factory."""
    path = Path(db_path or config.DB_PATH)
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(str(path))
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA journal_mode=WAL")
    return conn


def init_db(db_path=None):
    """Create the runs table."""
    conn = get_connection(db_path)
    conn.executescript("""
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            preset TEXT,
            config_hash TEXT,
            seed INTEGER,
            status TEXT DEFAULT 'running',
            exit_code INTEGER,
            report_path TEXT,
            wall_seconds REAL,
            error_message TEXT,
            started_at TEXT DEFAULT (datetime('now')),
            completed_at TEXT
        );

        CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status);
    """)
    conn.commit()
    conn.close()
    logger.debug(f"[DB] ledger ready at {db_path or config.DB_PATH}")


def row_to_dict(row):
    """Convert sqlite3.Row to dict."""
    if row is None:
        return None
    return dict(row)


def rows_to_dicts(rows):
    return [dict(r) for r in rows]


def query(sql, params=(), one=False, db_path=None):
    """Execute a query and return results."""
    conn = get_connection(db_path)
    try:
        cursor = conn.execute(sql, params)
        if one:
            return row_to_dict(cursor.fetchone())
        return rows_to_dicts(cursor.fetchall())
    finally:
        conn.close()


def execute(sql, params=(), db_path=None):
    """Execute a write operation and return lastrowid."""
    conn = get_connection(db_path)
    try:
        cursor = conn.execute(sql, params)
        conn.commit()
        return cursor.lastrowid
    finally:
        conn.close()


# ─── Run records ──────────────────────────────────────────────────────

def start_run(command, preset=None, config_hash=None, seed=None, db_path=None):
    init_db(db_path)
    return execute(
        "INSERT INTO runs (command, preset, config_hash, seed) VALUES (?, ?, ?, ?)",
        (command, preset, config_hash, seed),
        db_path=db_path,
    )


def complete_run(run_id, status, exit_code, report_path=None, wall_seconds=None,
                 error_message=None, db_path=None):
    if status not in RUN_STATUSES:
        raise ValueError(f"unknown run status: {status}")
    execute(
        """UPDATE runs SET status = ?, exit_code = ?, report_path = ?, wall_seconds = ?,
           error_message = ?, completed_at = datetime('now') WHERE id = ?""",
        (status, exit_code, None if report_path is None else str(report_path),
         wall_seconds, error_message, run_id),
        db_path=db_path,
    )


def get_run(run_id, db_path=None):
    return query("SELECT * FROM runs WHERE id = ?", (run_id,), one=True, db_path=db_path)


def list_runs(limit=20, status=None, db_path=None):
    """Most recent runs first, optionally filtered by status."""
    init_db(db_path)
    if status:
        return query(
            "SELECT * FROM runs WHERE status = ? ORDER BY id DESC LIMIT ?",
            (status, limit), db_path=db_path,
        )
    return query("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,), db_path=db_path)
