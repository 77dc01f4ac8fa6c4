"""Filesystem-backed catalog and artifact store.

One directory per entity kind under the root; every JSON document gets a
sha256 sidecar so corruption is detected on load. Append-only logs (ideas,
ledgers) are one canonical JSON record per line; a crash leaves a parseable
prefix. All writes go through write-temp-then-rename.

Layout:
    corpus/papers/<id>.txt + <id>.meta.json
    corpus/codeblocks/<id>.block
    prompts/*.tmpl
    ideas/ideas.log + <id>.json + annotations/<id>.json
    plans/<id>/plan.txt + plan.meta.json
    runs/<run_id>/run.meta + ledger.log + iter<k>/... + report/
    meta/<idea_id>.json
    reviews/<discovery_id>.json
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterator

from .errors import IntegrityError, NotFoundError

RUN_STATUS_QUEUED = "queued"
RUN_STATUS_RUNNING = "running"
RUN_STATUS_TERMINAL = "terminal"

_STATUS_ORDER = {RUN_STATUS_QUEUED: 0, RUN_STATUS_RUNNING: 1, RUN_STATUS_TERMINAL: 2}


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Path, obj: Any) -> None:
    """Write a JSON document wrapped in a digest envelope, atomically.

    A single rename keeps document and digest consistent even under
    concurrent readers; corruption on disk is caught at load time.
    """
    doc = canonical_json(obj)
    envelope = {"sha256": sha256_hex(doc.encode("utf-8")), "doc": obj}
    atomic_write_bytes(path, canonical_json(envelope).encode("utf-8"))


def read_json(path: Path) -> Any:
    if not path.exists():
        raise NotFoundError(f"no such document: {path}")
    payload = path.read_bytes()
    try:
        raw = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"unreadable JSON document {path}: {exc}", path=str(path))
    if isinstance(raw, dict) and set(raw) == {"sha256", "doc"}:
        actual = sha256_hex(canonical_json(raw["doc"]).encode("utf-8"))
        if actual != raw["sha256"]:
            raise IntegrityError(f"digest mismatch for {path}", path=str(path))
        return raw["doc"]
    return raw  # plain hand-authored JSON is accepted as-is


def append_log_record(path: Path, obj: Any) -> None:
    """Append one record to an append-only log, flushed through to disk."""
    path.parent.mkdir(parents=True, exist_ok=True)
    line = canonical_json(obj) + "\n"
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(line)
        handle.flush()
        os.fsync(handle.fileno())


def read_log(path: Path) -> list[Any]:
    """Read an append-only log; a corrupt tail raises with the valid prefix."""
    if not path.exists():
        return []
    records: list[Any] = []
    raw = path.read_bytes()
    for index, line in enumerate(raw.split(b"\n")):
        if not line:
            continue
        try:
            records.append(json.loads(line.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise IntegrityError(
                f"corrupt record at line {index + 1} of {path}; "
                f"{len(records)} valid records precede it",
                path=str(path),
                valid_records=records,
            )
    return records


class Store:
    """Durable catalog rooted at one directory; see module docstring for layout."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    # -- layout ------------------------------------------------------------

    @property
    def papers_dir(self) -> Path:
        return self.root / "corpus" / "papers"

    @property
    def codeblocks_dir(self) -> Path:
        return self.root / "corpus" / "codeblocks"

    @property
    def prompts_dir(self) -> Path:
        return self.root / "prompts"

    @property
    def ideas_dir(self) -> Path:
        return self.root / "ideas"

    @property
    def plans_dir(self) -> Path:
        return self.root / "plans"

    @property
    def runs_dir(self) -> Path:
        return self.root / "runs"

    @property
    def meta_dir(self) -> Path:
        return self.root / "meta"

    @property
    def reviews_dir(self) -> Path:
        return self.root / "reviews"

    def ensure_layout(self) -> None:
        for path in (
            self.papers_dir,
            self.codeblocks_dir,
            self.prompts_dir,
            self.ideas_dir / "annotations",
            self.plans_dir,
            self.runs_dir,
            self.meta_dir,
            self.reviews_dir,
        ):
            path.mkdir(parents=True, exist_ok=True)

    def run_dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def iter_dir(self, run_id: str, iteration: int) -> Path:
        return self.run_dir(run_id) / f"iter{iteration}"

    def ledger_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "ledger.log"

    # -- run lifecycle -----------------------------------------------------

    def run_meta_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "run.meta"

    def write_run_meta(self, run_id: str, meta: dict) -> None:
        current = None
        try:
            current = self.read_run_meta(run_id)
        except NotFoundError:
            pass
        if current is not None:
            old = _STATUS_ORDER.get(current.get("status", ""), 0)
            new = _STATUS_ORDER.get(meta.get("status", ""), 0)
            if new < old:
                raise IntegrityError(
                    f"run {run_id} status may not move backwards "
                    f"({current.get('status')} -> {meta.get('status')})",
                    path=str(self.run_meta_path(run_id)),
                )
        write_json(self.run_meta_path(run_id), meta)

    def read_run_meta(self, run_id: str) -> dict:
        return read_json(self.run_meta_path(run_id))

    def list_runs(self) -> list[str]:
        if not self.runs_dir.exists():
            return []
        return sorted(p.name for p in self.runs_dir.iterdir() if (p / "run.meta").exists())

    def recover(self) -> list[str]:
        """Sweep orphaned runs left in "running" by a dead supervisor.

        Each swept run becomes terminal with a HardTimeLimit outcome carrying
        a recovery note. Returns the swept run ids.
        """
        swept: list[str] = []
        for run_id in self.list_runs():
            meta = self.read_run_meta(run_id)
            if meta.get("status") != RUN_STATUS_RUNNING:
                continue
            pid = meta.get("supervisor_pid")
            if pid is not None and _pid_alive(int(pid)):
                continue
            meta["status"] = RUN_STATUS_TERMINAL
            meta["outcome"] = {
                "kind": "HardTimeLimit",
                "detail": "recovered after engine restart: supervisor died mid-run",
            }
            meta["recovered"] = True
            self.write_run_meta(run_id, meta)
            swept.append(run_id)
        return swept

    # -- generic helpers -----------------------------------------------------

    def iter_run_metas(self) -> Iterator[tuple[str, dict]]:
        for run_id in self.list_runs():
            yield run_id, self.read_run_meta(run_id)


def _pid_alive(pid: int) -> bool:
    if pid <= 0:
        return False
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True
