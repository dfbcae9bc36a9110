"""Column schemas for mixed-type tables with one protected and one label column."""
from __future__ import annotations

import json
from dataclasses import dataclass, field


class SchemaError(ValueError):
    """Schema document is malformed or inconsistent."""


VALID_KINDS = ("continuous", "categorical")
VALID_ROLES = ("feature", "protected", "label")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    role: str


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    privileged_value: str
    positive_label: str
    age_binarize: tuple[str, ...] = field(default=())

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        for c in self.columns:
            if c.kind not in VALID_KINDS:
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")
            if c.role not in VALID_ROLES:
                raise SchemaError(f"column {c.name!r}: unknown role {c.role!r}")
        labels = [c for c in self.columns if c.role == "label"]
        if len(labels) != 1:
            raise SchemaError(f"expected exactly one label column, found {len(labels)}")
        if labels[0].kind != "categorical":
            raise SchemaError("label column must be categorical")
        protected = [c for c in self.columns if c.role == "protected"]
        if not protected:
            raise SchemaError("at least one protected column required")
        for c in protected:
            if c.kind != "categorical":
                raise SchemaError(f"protected column {c.name!r} must be categorical")
        for name in self.age_binarize:
            if name not in names:
                raise SchemaError(f"age_binarize names unknown column {name!r}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def label_column(self) -> str:
        return next(c.name for c in self.columns if c.role == "label")

    @property
    def protected_column(self) -> str:
        return next(c.name for c in self.columns if c.role == "protected")

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind, "role": c.role} for c in self.columns],
            "privileged_value": self.privileged_value,
            "positive_label": self.positive_label,
            "age_binarize": list(self.age_binarize),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Schema":
        allowed = {"columns", "privileged_value", "positive_label", "age_binarize"}
        unknown = set(doc) - allowed
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        for key in ("columns", "privileged_value", "positive_label"):
            if key not in doc:
                raise SchemaError(f"schema missing required key {key!r}")
        cols = []
        for entry in doc["columns"]:
            extra = set(entry) - {"name", "kind", "role"}
            if extra:
                raise SchemaError(f"unknown column keys: {sorted(extra)}")
            cols.append(Column(str(entry["name"]), str(entry["kind"]), str(entry["role"])))
        return cls(
            columns=tuple(cols),
            privileged_value=str(doc["privileged_value"]),
            positive_label=str(doc["positive_label"]),
            age_binarize=tuple(str(n) for n in doc.get("age_binarize", [])),
        )


def load_schema(path) -> Schema:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    return Schema.from_json_dict(doc)
