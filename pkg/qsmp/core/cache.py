from __future__ import annotations

import hashlib
import sqlite3
import time
from pathlib import Path
from typing import Any

import orjson

from .models import RunManifest


class RunIndex:
    """sqlite index of finished runs, keyed by (config hash, command)."""

    def __init__(self, sqlite_path: str = "./runs/index.sqlite"):
        self.sqlite_path = Path(sqlite_path)
        self.sqlite_path.parent.mkdir(parents=True, exist_ok=True)
        self.conn = sqlite3.connect(self.sqlite_path)
        self._init_tables()

    def _init_tables(self) -> None:
        cur = self.conn.cursor()
        cur.execute(
            """
            CREATE TABLE IF NOT EXISTS runs (
                run_key TEXT PRIMARY KEY,
                config_hash TEXT NOT NULL,
                command TEXT NOT NULL,
                manifest TEXT NOT NULL,
                created_at INTEGER NOT NULL
            )
            """
        )
        self.conn.commit()

    @staticmethod
    def normalize_key(config_hash: str, command: str) -> str:
        return hashlib.sha256(f"{config_hash.strip().lower()}:{command}".encode("utf-8")).hexdigest()

    def put_run(self, manifest: RunManifest) -> None:
        config_hash = manifest.config_hash or ""
        cur = self.conn.cursor()
        cur.execute(
            """
            INSERT INTO runs(run_key, config_hash, command, manifest, created_at)
            VALUES(?, ?, ?, ?, ?)
            ON CONFLICT(run_key) DO UPDATE SET
              manifest = excluded.manifest,
              created_at = excluded.created_at
            """,
            (
                self.normalize_key(config_hash, manifest.command),
                config_hash,
                manifest.command,
                manifest.model_dump_json(),
                int(time.time()),
            ),
        )
        self.conn.commit()

    def get_run(self, config_hash: str, command: str) -> RunManifest | None:
        cur = self.conn.cursor()
        row = cur.execute(
            "SELECT manifest FROM runs WHERE run_key = ?", (self.normalize_key(config_hash, command),)
        ).fetchone()
        if not row:
            return None
        return RunManifest.model_validate_json(row[0])

    def run_status(self, config_hash: str) -> dict[str, Any]:
        cur = self.conn.cursor()
        rows = cur.execute(
            "SELECT command, manifest, created_at FROM runs WHERE config_hash = ? ORDER BY command",
            (config_hash.strip().lower(),),
        ).fetchall()
        runs = []
        for command, manifest, created_at in rows:
            payload = orjson.loads(manifest)
            runs.append(
                {
                    "command": command,
                    "created_at": created_at,
                    "outputs": payload.get("outputs", []),
                    "seed": payload.get("seed"),
                }
            )
        return {"config_hash": config_hash, "runs": runs}

    def close(self) -> None:
        self.conn.close()
