"""Run directories: JSONL run log, archive and metadata of one repetition."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

from ..evaluation import Evaluator, RunRecord

logger = logging.getLogger(__name__)

RUNLOG_NAME = "runlog.jsonl"
ARCHIVE_NAME = "archive.json"
META_NAME = "meta.json"
CONFIG_NAME = "config.json"


class LogError(ValueError):
    """A run log or run directory that cannot be read."""

    def __init__(self, path: str | Path, message: str, line: Optional[int] = None):
        self.path = Path(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        super().__init__(f"{where}: {message}")


def write_runlog(records: Iterable[RunRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict()) + "\n")
    return path


def read_runlog(path: str | Path) -> list[RunRecord]:
    """Parse a run log; a corrupt record raises ``LogError`` naming its 1-based line."""
    path = Path(path)
    if not path.is_file():
        raise LogError(path, "run log not found")
    records = []
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(RunRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise LogError(path, f"corrupt record ({exc})", number) from exc
    return records


@dataclass
class RunData:
    path: Path
    records: list[RunRecord]
    archive: dict[str, Any]
    meta: dict[str, Any]

    @property
    def method(self) -> str:
        return self.meta.get("method", "")


def save_run(evaluator: Evaluator, rep_dir: str | Path, meta: dict[str, Any]) -> Path:
    """Write ``runlog.jsonl``, ``archive.json`` and ``meta.json`` into ``rep_dir``."""
    rep_dir = Path(rep_dir)
    rep_dir.mkdir(parents=True, exist_ok=True)
    write_runlog(evaluator.records, rep_dir / RUNLOG_NAME)
    (rep_dir / ARCHIVE_NAME).write_text(evaluator.archive.to_json(), encoding="utf-8")
    (rep_dir / META_NAME).write_text(json.dumps(meta, indent=1), encoding="utf-8")
    logger.info("run written to %s (%d records)", rep_dir, len(evaluator.records))
    return rep_dir


def _read_json(path: Path) -> dict[str, Any]:
    if not path.is_file():
        raise LogError(path, "file not found")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LogError(path, f"invalid JSON ({exc.msg})", exc.lineno) from exc


def load_run(rep_dir: str | Path) -> RunData:
    rep_dir = Path(rep_dir)
    return RunData(
        rep_dir,
        read_runlog(rep_dir / RUNLOG_NAME),
        _read_json(rep_dir / ARCHIVE_NAME),
        _read_json(rep_dir / META_NAME),
    )


def find_runs(path: str | Path) -> list[Path]:
    """Repetition directories under a campaign directory, or ``path`` itself if it is one."""
    path = Path(path)
    if (path / RUNLOG_NAME).is_file():
        return [path]
    reps = sorted(
        (p for p in path.glob("rep_*") if (p / RUNLOG_NAME).is_file()),
        key=lambda p: int(p.name.split("_")[-1]) if p.name.split("_")[-1].isdigit() else 0,
    )
    if not reps:
        raise LogError(path, "no run directories found")
    return reps
