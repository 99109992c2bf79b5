"""Prompt templates: validation, rendering, and template-directory loading.

Templates are plain-text files with {name} placeholders. The directory layout
is fixed: ttr.txt, filter.txt, generate.txt, kg_extract.txt are required;
hyde.txt is optional and only needed by the hypothetical-document retriever.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ValidationError
from .providers import ChatRequest

TEMPLATE_IDS = ("ttr", "filter", "generate", "kg_extract", "hyde")
ALLOWED_PLACEHOLDERS = frozenset({"document", "triplet", "triplets", "query"})
REQUIRED_FILES = ("ttr.txt", "filter.txt", "generate.txt", "kg_extract.txt")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str

    def __post_init__(self) -> None:
        if self.id not in TEMPLATE_IDS:
            raise ValidationError(f"unknown template id {self.id!r}")
        if not self.text.strip():
            raise ValidationError(f"template {self.id!r} is empty")
        for name in self.placeholders():
            if name not in ALLOWED_PLACEHOLDERS:
                raise ValidationError(f"template {self.id!r} uses unknown placeholder {{{name}}}")

    def placeholders(self) -> set[str]:
        names: set[str] = set()
        try:
            for _, field_name, _, _ in string.Formatter().parse(self.text):
                if field_name:
                    names.add(field_name)
        except ValueError as exc:
            raise ValidationError(f"template {self.id!r} has malformed braces: {exc}") from exc
        return names

    def render(self, **values: str) -> str:
        """Substitute placeholders; a placeholder without a value is an error.
        Literal braces in the template are escaped by doubling."""
        missing = self.placeholders() - set(values)
        if missing:
            raise ValidationError(
                f"template {self.id!r} needs values for {sorted(missing)}"
            )
        return self.text.format(**values)

    def request(self, max_tokens: int = 1024, **values: str) -> ChatRequest:
        """Render into a ChatRequest; template id and placeholder values ride
        along as mock-dispatch metadata."""
        meta = {"template": self.id}
        meta.update({k: v for k, v in values.items()})
        return ChatRequest(
            system_prompt="",
            user_prompt=self.render(**values),
            temperature=0.0,
            max_tokens=max_tokens,
            meta=meta,
        )


class TemplateSet:
    """All templates loaded from one directory."""

    def __init__(self, templates: dict[str, PromptTemplate]):
        self._templates = templates

    def __contains__(self, template_id: str) -> bool:
        return template_id in self._templates

    def get(self, template_id: str) -> PromptTemplate:
        if template_id not in self._templates:
            raise ConfigError(f"template {template_id!r} not loaded")
        return self._templates[template_id]

    @classmethod
    def load(cls, directory: str | Path) -> "TemplateSet":
        directory = Path(directory)
        if not directory.is_dir():
            raise ConfigError(f"templates directory {directory} does not exist")
        templates: dict[str, PromptTemplate] = {}
        for filename in REQUIRED_FILES + ("hyde.txt",):
            path = directory / filename
            if not path.exists():
                if filename in REQUIRED_FILES:
                    raise ConfigError(f"missing template file {path}")
                continue
            tid = filename[: -len(".txt")]
            templates[tid] = PromptTemplate(tid, path.read_text(encoding="utf-8"))
        return cls(templates)
