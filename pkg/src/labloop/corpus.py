"""Paper corpus and codeblock library.

Papers are plain text with a JSON metadata sidecar; codeblocks are single
files with a delimited front-matter header followed by the example source.
Both ids default to a content hash so re-ingesting identical bytes is a
no-op. The library hands out immutable versioned snapshots.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ConflictError, ValidationError
from .store import Store, read_json, write_json, sha256_hex, atomic_write_text

FRONT_MATTER_DELIMITER = "---"
_REQUIRED_FRONT_MATTER = ("name", "summary")


@dataclass(frozen=True)
class PaperRecord:
    id: str
    title: str
    body: str
    source_path: str
    topics: tuple[str, ...] = ()

    def to_meta(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "source_path": self.source_path,
            "topics": list(self.topics),
        }


@dataclass(frozen=True)
class Codeblock:
    id: str
    name: str
    summary: str
    code_text: str
    declared_capabilities: tuple[str, ...] = ()


@dataclass(frozen=True)
class LibrarySnapshot:
    """Immutable view of the codeblock library at one version."""

    version: int
    blocks: tuple[Codeblock, ...]

    def ids(self) -> set[str]:
        return {b.id for b in self.blocks}

    def get(self, block_id: str) -> Codeblock:
        for block in self.blocks:
            if block.id == block_id:
                return block
        raise KeyError(block_id)

    def summaries_text(self) -> str:
        lines = []
        for block in self.blocks:
            caps = ", ".join(block.declared_capabilities)
            suffix = f" [{caps}]" if caps else ""
            lines.append(f"- {block.name} (id={block.id}){suffix}: {block.summary}")
        return "\n".join(lines)


@dataclass
class CodeblockLibrary:
    blocks: list[Codeblock] = field(default_factory=list)
    version: int = 0

    def snapshot(self) -> LibrarySnapshot:
        return LibrarySnapshot(version=self.version, blocks=tuple(self.blocks))

    def add(self, block: Codeblock) -> bool:
        """Add a block; returns False (and leaves version alone) if already present."""
        for existing in self.blocks:
            if existing.id == block.id:
                if existing != block:
                    raise ConflictError(f"codeblock id {block.id} exists with different content")
                return False
        self.blocks.append(block)
        self.version += 1
        return True


def parse_front_matter(source: str) -> tuple[dict[str, str], str]:
    """Split a codeblock file into its header fields and the code body.

    The header is a block of ``key: value`` lines between two ``---`` marker
    lines at the top of the file.
    """
    lines = source.splitlines()
    if not lines or lines[0].strip() != FRONT_MATTER_DELIMITER:
        raise ValidationError("missing front-matter: header block not found")
    fields: dict[str, str] = {}
    end = None
    for index in range(1, len(lines)):
        if lines[index].strip() == FRONT_MATTER_DELIMITER:
            end = index
            break
        match = re.match(r"^([A-Za-z_][A-Za-z0-9_-]*)\s*:\s*(.*)$", lines[index])
        if match:
            fields[match.group(1).strip().lower()] = match.group(2).strip()
        elif lines[index].strip():
            raise ValidationError(f"malformed front-matter line: {lines[index]!r}")
    if end is None:
        raise ValidationError("missing front-matter: closing delimiter not found")
    body = "\n".join(lines[end + 1 :])
    return fields, body


class Corpus:
    """Stored papers plus the codeblock library, backed by one Store."""

    def __init__(self, store: Store):
        self.store = store
        self.store.ensure_layout()
        self._library = CodeblockLibrary()
        self._load_codeblocks()

    # -- papers --------------------------------------------------------------

    def ingest_paper(
        self,
        text: str,
        title: str = "",
        topics: Iterable[str] = (),
        paper_id: str | None = None,
    ) -> PaperRecord:
        if not text or not text.strip():
            raise ValidationError("empty document")
        pid = paper_id or sha256_hex(text.encode("utf-8"))[:16]
        body_path = self.store.papers_dir / f"{pid}.txt"
        meta_path = self.store.papers_dir / f"{pid}.meta.json"
        record = PaperRecord(
            id=pid,
            title=title or _first_line(text),
            body=text,
            source_path=str(body_path),
            topics=tuple(topics),
        )
        if body_path.exists():
            if body_path.read_text(encoding="utf-8") != text:
                raise ConflictError(f"paper id {pid} exists with different content")
            return self.get_paper(pid)
        atomic_write_text(body_path, text)
        write_json(meta_path, record.to_meta())
        return record

    def get_paper(self, paper_id: str) -> PaperRecord:
        meta = read_json(self.store.papers_dir / f"{paper_id}.meta.json")
        body = (self.store.papers_dir / f"{paper_id}.txt").read_text(encoding="utf-8")
        return PaperRecord(
            id=meta["id"],
            title=meta["title"],
            body=body,
            source_path=meta["source_path"],
            topics=tuple(meta.get("topics", ())),
        )

    def list_paper_ids(self) -> list[str]:
        return sorted(p.stem for p in self.store.papers_dir.glob("*.txt"))

    def sample_paper_pairs(self, k: int, seed: int) -> list[tuple[str, str]]:
        """Draw k distinct unordered paper-id pairs, deterministically per seed."""
        if k < 1:
            raise ValidationError("k must be >= 1")
        ids = self.list_paper_ids()
        if len(ids) < 2:
            raise ValidationError("insufficient papers")
        all_pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1 :]]
        if k > len(all_pairs):
            raise ValidationError(
                f"insufficient papers: {len(ids)} papers yield {len(all_pairs)} pairs, need {k}"
            )
        rng = random.Random(seed)
        return rng.sample(all_pairs, k)

    # -- codeblocks ------------------------------------------------------------

    def ingest_codeblock(self, source: str, block_id: str | None = None) -> Codeblock:
        fields, body = parse_front_matter(source)
        for required in _REQUIRED_FRONT_MATTER:
            if not fields.get(required):
                raise ValidationError(f"missing front-matter: {required}")
        if not body.strip():
            raise ValidationError("codeblock has empty code body")
        bid = block_id or fields.get("id") or sha256_hex(source.encode("utf-8"))[:16]
        capabilities = tuple(
            cap.strip() for cap in fields.get("capabilities", "").split(",") if cap.strip()
        )
        block = Codeblock(
            id=bid,
            name=fields["name"],
            summary=fields["summary"],
            code_text=body,
            declared_capabilities=capabilities,
        )
        added = self._library.add(block)
        if added:
            atomic_write_text(self.store.codeblocks_dir / f"{bid}.block", source)
            self._persist_library_version()
        return block

    def library_snapshot(self) -> LibrarySnapshot:
        return self._library.snapshot()

    def _load_codeblocks(self) -> None:
        version_path = self.store.codeblocks_dir / "library.version.json"
        for path in sorted(self.store.codeblocks_dir.glob("*.block")):
            source = path.read_text(encoding="utf-8")
            fields, body = parse_front_matter(source)
            capabilities = tuple(
                cap.strip() for cap in fields.get("capabilities", "").split(",") if cap.strip()
            )
            self._library.add(
                Codeblock(
                    id=path.stem,
                    name=fields.get("name", path.stem),
                    summary=fields.get("summary", ""),
                    code_text=body,
                    declared_capabilities=capabilities,
                )
            )
        if version_path.exists():
            stored = read_json(version_path).get("version", 0)
            self._library.version = max(self._library.version, stored)

    def _persist_library_version(self) -> None:
        write_json(
            self.store.codeblocks_dir / "library.version.json",
            {"version": self._library.version},
        )


def _first_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line.strip()[:120]
    return ""
