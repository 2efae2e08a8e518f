from __future__ import annotations

from pathlib import Path

from qsmp.core.cache import RunIndex
from qsmp.core.models import GridSpec, RunManifest


def _index(tmp_path: Path) -> RunIndex:
    return RunIndex(sqlite_path=str(tmp_path / "runs" / "index.sqlite"))


def _manifest(command: str, outputs: list[str], seed: int = 0) -> RunManifest:
    return RunManifest(command=command, config_hash="ab" * 32, grid=GridSpec(), seed=seed, outputs=outputs)


def test_run_put_and_get(tmp_path: Path) -> None:
    index = _index(tmp_path)
    manifest = _manifest("evolve", ["runs/evolve.csv"])
    index.put_run(manifest)
    assert index.get_run("ab" * 32, "evolve") == manifest
    assert index.get_run("ab" * 32, "simulate") is None
    index.close()


def test_rerun_replaces_manifest(tmp_path: Path) -> None:
    index = _index(tmp_path)
    index.put_run(_manifest("simulate", ["a.csv"], seed=1))
    index.put_run(_manifest("simulate", ["b.csv"], seed=2))
    status = index.run_status("ab" * 32)
    assert len(status["runs"]) == 1
    assert status["runs"][0]["outputs"] == ["b.csv"]
    assert status["runs"][0]["seed"] == 2
    index.close()


def test_status_lists_commands_in_order(tmp_path: Path) -> None:
    index = _index(tmp_path)
    index.put_run(_manifest("simulate", ["s.csv"]))
    index.put_run(_manifest("check-cp", ["cp_report.json"]))
    index.put_run(_manifest("evolve", ["evolve.csv"]))
    status = index.run_status(("ab" * 32).upper())
    assert [run["command"] for run in status["runs"]] == ["check-cp", "evolve", "simulate"]
    assert index.run_status("cd" * 32)["runs"] == []
    index.close()


def test_index_survives_reopen(tmp_path: Path) -> None:
    index = _index(tmp_path)
    index.put_run(_manifest("evolve", ["evolve.csv"]))
    index.close()
    reopened = _index(tmp_path)
    assert reopened.get_run("ab" * 32, "evolve") is not None
    reopened.close()


def test_normalize_key_ignores_case_and_whitespace() -> None:
    assert RunIndex.normalize_key(" ABC ", "evolve") == RunIndex.normalize_key("abc", "evolve")
    assert RunIndex.normalize_key("abc", "evolve") != RunIndex.normalize_key("abc", "simulate")
