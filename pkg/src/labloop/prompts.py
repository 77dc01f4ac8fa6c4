"""Externalized prompt templates.

Templates live as editable files under ``<root>/prompts/*.tmpl`` with
``$slot`` placeholders (``string.Template`` syntax; write ``$$`` for a
literal dollar). Missing files are scaffolded from the packaged defaults so
a fresh root is immediately usable.
"""

from __future__ import annotations

import re
import string
from importlib import resources
from pathlib import Path

from .errors import NotFoundError, ValidationError

TEMPLATE_NAMES = ("ideation", "planning", "debugging", "report", "summary", "metaanalysis")

_IDENTIFIER = re.compile(r"\$(?:\{([A-Za-z_][A-Za-z0-9_]*)\}|([A-Za-z_][A-Za-z0-9_]*))")


def _packaged_default(name: str) -> str:
    return (resources.files("labloop") / "templates" / f"{name}.tmpl").read_text(encoding="utf-8")


class PromptLibrary:
    def __init__(self, prompts_dir: str | Path):
        self.prompts_dir = Path(prompts_dir)

    def scaffold_defaults(self) -> list[str]:
        """Write packaged default templates for any missing files."""
        self.prompts_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name in TEMPLATE_NAMES:
            path = self.prompts_dir / f"{name}.tmpl"
            if not path.exists():
                path.write_text(_packaged_default(name), encoding="utf-8")
                written.append(name)
        return written

    def raw(self, name: str) -> str:
        path = self.prompts_dir / f"{name}.tmpl"
        if not path.exists():
            raise NotFoundError(f"prompt template not found: {path}")
        return path.read_text(encoding="utf-8")

    def slots(self, name: str) -> set[str]:
        found = set()
        text = self.raw(name)
        # skip escaped $$ before scanning for identifiers
        for match in _IDENTIFIER.finditer(text.replace("$$", "")):
            found.add(match.group(1) or match.group(2))
        return found

    def render(self, name: str, **slots: str) -> str:
        """Fill every placeholder; unknown or leftover slots are errors."""
        template = string.Template(self.raw(name))
        try:
            return template.substitute(**slots)
        except KeyError as exc:
            raise ValidationError(f"template {name!r} needs slot {exc.args[0]!r}")
        except ValueError as exc:
            raise ValidationError(f"template {name!r} is malformed: {exc}")
