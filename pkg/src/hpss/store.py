"""Run directories: manifest, append-only journal, response cache and reports.

Layout of a run directory::

    manifest.json     run identity, space, backend description, config, status
    journal.jsonl     one record per fitness evaluation, fsynced on append
    timings.jsonl     wall-clock timestamp per journal step (kept apart so
                      journals of twin runs stay byte-identical)
    cache/            judge responses, one file per content hash
    report/           written by ``hpss report``

The journal is the only durable search state. Resuming reruns the algorithm
from step 0, serving recorded steps from the journal.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .errors import BackendError, ConfigError, IntegrityError, StorageError, StructuralError
from .fitness import Backend
from .search import ResumeState, SearchConfig, SearchResult, replay_state, run_search
from .space import FactorSpace, space_from_config

STATUSES = ("running", "suspended", "complete")

MANIFEST = "manifest.json"
JOURNAL = "journal.jsonl"
TIMINGS = "timings.jsonl"


def dump_record(rec: Mapping) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e


class Journal:
    def __init__(self, path: str | Path, space: FactorSpace | None = None):
        self.path = Path(path)
        self.space = space
        self.records = read_journal(self.path, space) if self.path.exists() else []

    def __len__(self):
        return len(self.records)

    def append_and_sync(self, rec: Mapping) -> None:
        if rec.get("step") != len(self.records):
            raise IntegrityError(f"record step {rec.get('step')} does not follow journal length {len(self.records)}")
        line = dump_record(rec) + "\n"
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as e:
            raise StorageError(f"cannot append to {self.path}: {e}") from e
        self.records.append(dict(rec))


def read_journal(path: str | Path, space: FactorSpace | None = None) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                raise IntegrityError("blank line in journal", line=lineno)
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise IntegrityError(f"unparseable record ({e.msg})", line=lineno) from None
            if not isinstance(rec, dict):
                raise IntegrityError("record is not an object", line=lineno)
            for key in ("step", "kind", "strategy", "score"):
                if key not in rec:
                    raise IntegrityError(f"record lacks {key!r}", line=lineno)
            if rec["step"] != lineno - 1:
                raise IntegrityError(f"step {rec['step']} out of sequence", line=lineno)
            if not isinstance(rec["score"], (int, float)):
                raise IntegrityError("score is not a number", line=lineno)
            if space is not None:
                try:
                    space.from_dict(rec["strategy"])
                except (StructuralError, AttributeError, TypeError) as e:
                    raise IntegrityError(f"invalid strategy: {e}", line=lineno) from None
            records.append(rec)
    return records


@dataclass
class RunManifest:
    run_id: str
    space: dict
    algorithm: str
    config: dict
    backend: dict
    dataset_id: str | None = None
    status: str = "running"
    evaluations: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ConfigError(f"status must be one of {STATUSES}")

    @property
    def space_id(self) -> str:
        return self.space.get("id", "custom")

    def factor_space(self) -> FactorSpace:
        return space_from_config(self.space)

    def search_config(self) -> SearchConfig:
        return SearchConfig.from_dict(self.config)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        try:
            return cls(**json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as e:
            raise IntegrityError(f"unreadable manifest {path}: {e}") from None


class RunDir:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    manifest_path = property(lambda self: self.root / MANIFEST)
    journal_path = property(lambda self: self.root / JOURNAL)
    timings_path = property(lambda self: self.root / TIMINGS)
    cache_dir = property(lambda self: self.root / "cache")
    report_dir = property(lambda self: self.root / "report")

    def exists(self) -> bool:
        return self.manifest_path.exists()

    def manifest(self) -> RunManifest:
        return RunManifest.load(self.manifest_path)

    def save_manifest(self, m: RunManifest) -> None:
        write_atomic(self.manifest_path, m.to_json())

    def journal(self, space: FactorSpace | None = None) -> Journal:
        return Journal(self.journal_path, space)


def _timed_sink(journal: Journal, timings: Path, clock: Callable[[], float]) -> Callable[[dict], None]:
    def sink(rec: dict) -> None:
        journal.append_and_sync(rec)
        with open(timings, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"step": rec["step"], "timestamp": clock()}) + "\n")
    return sink


def execute(run: RunDir, backend: Backend, *, clock: Callable[[], float] = time.time) -> SearchResult:
    """Run (or continue) the search described by the run directory's manifest.

    Recorded journal steps are replayed; new evaluations are appended. A
    backend failure marks the run suspended and re-raises.
    """
    m = run.manifest()
    space = m.factor_space()
    config = m.search_config()
    journal = run.journal(space)
    m.status = "running"
    run.save_manifest(m)
    try:
        result = run_search(
            m.algorithm, space, backend, config,
            prior=list(journal.records), sink=_timed_sink(journal, run.timings_path, clock),
        )
    except (BackendError, StorageError):
        m.status = "suspended"
        m.evaluations = len(journal)
        run.save_manifest(m)
        raise
    m.status = "complete"
    m.evaluations = len(journal)
    run.save_manifest(m)
    if len(journal) != result.evaluations:
        raise IntegrityError(f"journal holds {len(journal)} records, search made {result.evaluations}")
    return result


def create_run(root: str | Path, manifest: RunManifest) -> RunDir:
    run = RunDir(root)
    if run.exists():
        raise ConfigError(f"{run.root} already holds a run; use --resume to continue it")
    try:
        run.root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"cannot create {run.root}: {e}") from e
    run.save_manifest(manifest)
    run.journal_path.touch()
    return run


def resume(run: RunDir | str | Path) -> ResumeState:
    """Search state implied by the run's journal, without calling any backend."""
    run = run if isinstance(run, RunDir) else RunDir(run)
    m = run.manifest()
    space = m.factor_space()
    return replay_state(m.algorithm, space, m.search_config(), run.journal(space).records)
