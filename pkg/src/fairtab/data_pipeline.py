"""CSV ingestion and the mixed-type encoding used by the synthesizer.

Continuous columns are z-scored with the population standard deviation and
then mapped affinely onto [0, 1] (the fitted z-range becomes [0, 1]), so a
nonnegative generator head can cover the support. Categorical columns are
one-hot encoded with category order fixed by first appearance.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .schema import Schema

MISSING_MARKERS = {"", "?"}


class DataError(ValueError):
    """Input table violates the schema or an encoding precondition."""


@dataclass
class RawTable:
    """Rectangular table of typed cells: float for continuous, str for categorical."""

    header: list[str]
    rows: list[list]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        j = self.header.index(name)
        return [row[j] for row in self.rows]


def _parse_cell(token: str, kind: str, where: str):
    if kind == "continuous":
        try:
            return float(token)
        except ValueError:
            raise DataError(f"{where}: cannot parse {token!r} as a number") from None
    return token


def load_csv(path, schema: Schema) -> tuple[RawTable, int]:
    """Read a CSV against the schema, dropping rows with missing markers.

    Returns the cleaned table and the number of dropped rows.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header != schema.names:
            raise DataError(
                f"{path}: header does not match schema columns\n"
                f" file:   {header}\n schema: {schema.names}"
            )
        kinds = [c.kind for c in schema.columns]
        rows: list[list] = []
        dropped = 0
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(rec)}")
            cells = [tok.strip() for tok in rec]
            if any(tok in MISSING_MARKERS for tok in cells):
                dropped += 1
                continue
            rows.append([
                _parse_cell(tok, kind, f"{path}:{lineno}:{name}")
                for tok, kind, name in zip(cells, kinds, header)
            ])
    if not rows:
        raise DataError(f"{path}: no rows left after dropping missing values")
    return RawTable(header=list(schema.names), rows=rows), dropped


def binarize_age(table: RawTable, column: str) -> RawTable:
    """Replace a numeric age column with {"25-65", "other"} (both bounds inclusive)."""
    j = table.header.index(column)
    rows = []
    for i, row in enumerate(table.rows):
        try:
            age = float(row[j])
        except (TypeError, ValueError):
            raise DataError(f"row {i}, column {column!r}: non-numeric age {row[j]!r}") from None
        out = list(row)
        out[j] = "25-65" if 25 <= age <= 65 else "other"
        rows.append(out)
    return RawTable(header=list(table.header), rows=rows)


@dataclass(frozen=True)
class ContinuousSpec:
    name: str
    mean: float
    std: float
    post_min: float
    post_range: float


@dataclass(frozen=True)
class CategoricalSpec:
    name: str
    categories: tuple[str, ...]

    @property
    def width(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class Transformer:
    continuous: tuple[ContinuousSpec, ...]
    categorical: tuple[CategoricalSpec, ...]

    @property
    def n_num(self) -> int:
        return len(self.continuous)

    @property
    def n_dim(self) -> int:
        return self.n_num + sum(c.width for c in self.categorical)

    @property
    def block_map(self) -> dict[str, tuple[int, int]]:
        """Column ranges in the encoded matrix; continuous columns first."""
        blocks = {}
        for j, spec in enumerate(self.continuous):
            blocks[spec.name] = (j, j + 1)
        offset = self.n_num
        for spec in self.categorical:
            blocks[spec.name] = (offset, offset + spec.width)
            offset += spec.width
        return blocks

    def categorical_spec(self, name: str) -> CategoricalSpec:
        for spec in self.categorical:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "continuous": [
                {"name": s.name, "mean": s.mean, "std": s.std,
                 "post_min": s.post_min, "post_range": s.post_range}
                for s in self.continuous
            ],
            "categorical": [
                {"name": s.name, "categories": list(s.categories)} for s in self.categorical
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Transformer":
        return cls(
            continuous=tuple(
                ContinuousSpec(d["name"], float(d["mean"]), float(d["std"]),
                               float(d["post_min"]), float(d["post_range"]))
                for d in doc["continuous"]
            ),
            categorical=tuple(
                CategoricalSpec(d["name"], tuple(d["categories"])) for d in doc["categorical"]
            ),
        )


@dataclass
class EncodedMatrix:
    data: np.ndarray
    block_map: dict[str, tuple[int, int]]

    @property
    def n_rows(self) -> int:
        return int(self.data.shape[0])


def fit_transformer(table: RawTable, schema: Schema) -> Transformer:
    if table.n_rows == 0:
        raise DataError("cannot fit a transformer on an empty table")
    cont, cat = [], []
    for col in schema.columns:
        values = table.column(col.name)
        if col.kind == "continuous":
            arr = np.asarray(values, dtype=np.float64)
            mean = float(arr.mean())
            std = float(arr.std())  # population (1/N) std
            if std == 0.0:
                raise DataError(f"column {col.name!r}: zero variance, cannot normalize")
            z = (arr - mean) / std
            post_min = float(z.min())
            post_range = float(z.max() - z.min())
            cont.append(ContinuousSpec(col.name, mean, std, post_min, post_range))
        else:
            seen: dict[str, None] = {}
            for v in values:
                seen.setdefault(v, None)
            categories = tuple(seen)
            if col.role in ("protected", "label") and len(categories) != 2:
                raise DataError(
                    f"column {col.name!r} (role {col.role}) must have exactly 2 "
                    f"categories, found {len(categories)}"
                )
            cat.append(CategoricalSpec(col.name, categories))
    return Transformer(continuous=tuple(cont), categorical=tuple(cat))


def transform(tr: Transformer, table: RawTable) -> EncodedMatrix:
    n = table.n_rows
    out = np.zeros((n, tr.n_dim), dtype=np.float64)
    blocks = tr.block_map
    for spec in tr.continuous:
        lo, _ = blocks[spec.name]
        arr = np.asarray(table.column(spec.name), dtype=np.float64)
        z = (arr - spec.mean) / spec.std
        out[:, lo] = (z - spec.post_min) / spec.post_range
    for spec in tr.categorical:
        lo, _ = blocks[spec.name]
        index = {c: k for k, c in enumerate(spec.categories)}
        for i, v in enumerate(table.column(spec.name)):
            try:
                out[i, lo + index[v]] = 1.0
            except KeyError:
                raise DataError(f"column {spec.name!r}: unseen category {v!r}") from None
    return EncodedMatrix(data=out, block_map=blocks)


def inverse_transform(tr: Transformer, m: EncodedMatrix) -> RawTable:
    """Decode an encoded matrix; categorical blocks decode by argmax."""
    data = np.asarray(m.data, dtype=np.float64)
    if data.shape[1] != tr.n_dim:
        raise DataError(f"matrix width {data.shape[1]} does not match N_dim {tr.n_dim}")
    blocks = tr.block_map
    header = [s.name for s in tr.continuous] + [s.name for s in tr.categorical]
    columns: dict[str, list] = {}
    for spec in tr.continuous:
        lo, _ = blocks[spec.name]
        z = data[:, lo] * spec.post_range + spec.post_min
        columns[spec.name] = list(z * spec.std + spec.mean)
    for spec in tr.categorical:
        lo, hi = blocks[spec.name]
        picks = data[:, lo:hi].argmax(axis=1)
        columns[spec.name] = [spec.categories[k] for k in picks]
    rows = [[columns[name][i] for name in header] for i in range(data.shape[0])]
    return RawTable(header=header, rows=rows)


def reorder_like_schema(table: RawTable, schema: Schema) -> RawTable:
    """Restore schema column order (decoded tables list continuous columns first)."""
    idx = [table.header.index(n) for n in schema.names]
    return RawTable(header=list(schema.names), rows=[[r[j] for j in idx] for r in table.rows])


def imbalance_ratio(table: RawTable, schema: Schema) -> tuple[float, float]:
    """(positive : negative) label counts, smaller side normalized to 1."""
    if schema.label_column not in table.header:
        raise DataError(f"label column {schema.label_column!r} missing")
    labels = table.column(schema.label_column)
    pos = sum(1 for v in labels if v == schema.positive_label)
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise DataError("imbalance ratio undefined: one label class is empty")
    if pos >= neg:
        return (pos / neg, 1.0)
    return (1.0, neg / pos)


def format_ratio(ratio: tuple[float, float]) -> str:
    def side(x: float) -> str:
        return "1" if x == 1.0 else f"{x:.2f}"

    return f"{side(ratio[0])}:{side(ratio[1])}"


def format_cell(value) -> str:
    """Deterministic CSV rendering: categorical as-is, floats shortest round-trip."""
    if isinstance(value, str):
        return value
    f = float(value)
    if f.is_integer() and abs(f) < 1e16:
        return str(int(f))
    return repr(f)


def write_csv(path, table: RawTable) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([format_cell(v) for v in row])
