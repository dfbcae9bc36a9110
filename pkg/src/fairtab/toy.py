"""A small synthetic benchmark table with a built-in group/label bias.

2,000 rows by default: two continuous features, a binary protected group and
a binary outcome with P(outcome=yes | group=A) = 0.7 versus 0.3 for group B,
so the dataset-level statistical parity is about 0.4 by construction. The
first feature tracks the outcome strongly, the second drifts mildly with the
group; both give the auxiliary classifier something real to learn.
"""
from __future__ import annotations

import numpy as np

from .data_pipeline import RawTable
from .schema import Schema

P_POSITIVE_PRIVILEGED = 0.7
P_POSITIVE_UNPRIVILEGED = 0.3


def toy_schema() -> Schema:
    return Schema.from_json_dict({
        "columns": [
            {"name": "x1", "kind": "continuous", "role": "feature"},
            {"name": "x2", "kind": "continuous", "role": "feature"},
            {"name": "group", "kind": "categorical", "role": "protected"},
            {"name": "outcome", "kind": "categorical", "role": "label"},
        ],
        "privileged_value": "A",
        "positive_label": "yes",
    })


def make_biased_toy(n: int = 2000, seed: int = 0) -> tuple[RawTable, Schema]:
    rng = np.random.default_rng(seed)
    unpriv = rng.random(n) < 0.5
    p_pos = np.where(unpriv, P_POSITIVE_UNPRIVILEGED, P_POSITIVE_PRIVILEGED)
    positive = rng.random(n) < p_pos
    x1 = 0.8 * positive + rng.random(n)
    x2 = 0.3 * unpriv + rng.random(n)
    rows = [
        [float(x1[i]), float(x2[i]), "B" if unpriv[i] else "A", "yes" if positive[i] else "no"]
        for i in range(n)
    ]
    return RawTable(header=["x1", "x2", "group", "outcome"], rows=rows), toy_schema()
