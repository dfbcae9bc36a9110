"""Versioned checkpoint container for a trained model.

One JSON document holds the schema, the fitted transformer and every
parameter tensor as a shape-tagged little-endian array (base64 raw bytes),
so checkpoints are byte-identical across reruns of the same seed.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .data_pipeline import Transformer
from .networks import ClassifierParams, CriticParams, GeneratorParams, Linear
from .schema import Schema

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is missing, malformed, or from an unsupported version."""


def _array_to_doc(a: np.ndarray) -> dict:
    le = a.astype(a.dtype.newbyteorder("<"), copy=False)
    return {
        "shape": list(a.shape),
        "dtype": le.dtype.str,
        "data": base64.b64encode(le.tobytes()).decode("ascii"),
    }


def _array_from_doc(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    arr = np.frombuffer(raw, dtype=np.dtype(doc["dtype"])).reshape(doc["shape"])
    return arr.astype(arr.dtype.newbyteorder("="))


def _linear_to_doc(layer: Linear) -> dict:
    return {"w": _array_to_doc(layer.w.data), "b": _array_to_doc(layer.b.data)}


def _linear_from_doc(doc: dict) -> Linear:
    return Linear(w=Tensor(_array_from_doc(doc["w"])), b=Tensor(_array_from_doc(doc["b"])))


@dataclass
class ModelBundle:
    schema: Schema
    transformer: Transformer
    generator: GeneratorParams
    critic: CriticParams
    classifier: ClassifierParams
    train_rows: int
    train_config: dict

    def to_json_dict(self) -> dict:
        gen = {
            "fc1": _linear_to_doc(self.generator.fc1),
            "numeric_head": (None if self.generator.numeric_head is None
                             else _linear_to_doc(self.generator.numeric_head)),
            "cat_heads": [_linear_to_doc(h) for h in self.generator.cat_heads],
            "tau": self.generator.tau,
        }
        critic = {name: _linear_to_doc(layer) for name, layer in
                  (("fc1", self.critic.fc1), ("fc2", self.critic.fc2), ("out", self.critic.out))}
        clf = {name: _linear_to_doc(layer) for name, layer in
               (("fc1", self.classifier.fc1), ("fc2", self.classifier.fc2),
                ("out", self.classifier.out))}
        return {
            "format_version": CHECKPOINT_VERSION,
            "schema": self.schema.to_json_dict(),
            "transformer": self.transformer.to_json_dict(),
            "train_rows": self.train_rows,
            "train_config": self.train_config,
            "parameters": {"generator": gen, "critic": critic, "classifier": clf},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ModelBundle":
        version = doc.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version!r}, expected {CHECKPOINT_VERSION}")
        params = doc["parameters"]
        gen_doc = params["generator"]
        generator = GeneratorParams(
            fc1=_linear_from_doc(gen_doc["fc1"]),
            numeric_head=(None if gen_doc["numeric_head"] is None
                          else _linear_from_doc(gen_doc["numeric_head"])),
            cat_heads=[_linear_from_doc(h) for h in gen_doc["cat_heads"]],
            tau=float(gen_doc["tau"]),
        )
        critic = CriticParams(**{k: _linear_from_doc(v) for k, v in params["critic"].items()})
        classifier = ClassifierParams(**{k: _linear_from_doc(v) for k, v in params["classifier"].items()})
        return cls(
            schema=Schema.from_json_dict(doc["schema"]),
            transformer=Transformer.from_json_dict(doc["transformer"]),
            generator=generator,
            critic=critic,
            classifier=classifier,
            train_rows=int(doc["train_rows"]),
            train_config=dict(doc["train_config"]),
        )


def save_checkpoint(path, bundle: ModelBundle) -> None:
    text = json.dumps(bundle.to_json_dict(), sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")


def load_checkpoint(path) -> ModelBundle:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON: {exc}") from None
    return ModelBundle.from_json_dict(doc)
