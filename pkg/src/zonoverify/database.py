"""Database operations for verification run records."""
import sqlite3
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one verifier run on one instance under one configuration."""
    instance: str
    config: str
    result: str
    subproblems: int
    iterations: int
    wall_time: float


def init_database(db_path: Path) -> None:
    """Initialize the SQLite database with the runs table if it doesn't exist."""
    with sqlite3.connect(db_path) as conn:
        cursor = conn.cursor()
        cursor.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                instance TEXT NOT NULL,
                config TEXT NOT NULL,
                result TEXT NOT NULL,
                subproblems INTEGER NOT NULL,
                iterations INTEGER NOT NULL,
                wall_time REAL NOT NULL,
                PRIMARY KEY (instance, config)
            )
        """)
        conn.commit()


def save_result(db_path: Path, record: RunRecord) -> None:
    """Save a run, replacing an earlier run of the same instance and config."""
    with sqlite3.connect(db_path) as conn:
        cursor = conn.cursor()
        cursor.execute(
            "INSERT OR REPLACE INTO runs (instance, config, result, subproblems, iterations, wall_time) "
            "VALUES (?, ?, ?, ?, ?, ?)",
            (record.instance, record.config, record.result, record.subproblems, record.iterations, record.wall_time),
        )
        conn.commit()


def load_results(db_path: Path, config: str | None = None) -> list[RunRecord]:
    """Retrieve stored runs, optionally only those of one config, ordered by instance."""
    with sqlite3.connect(db_path) as conn:
        cursor = conn.cursor()
        query = "SELECT instance, config, result, subproblems, iterations, wall_time FROM runs"
        if config is None:
            cursor.execute(f"{query} ORDER BY instance, config")
        else:
            cursor.execute(f"{query} WHERE config = ? ORDER BY instance", (config,))
        rows = cursor.fetchall()

    return [RunRecord(*row) for row in rows]
