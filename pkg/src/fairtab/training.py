"""Two-phase WGAN-GP training with optional fairness-penalized generator updates.

Every epoch shuffles the data and walks ceil(N/m) batches; each batch does
n_critic critic updates (gradient penalty at interpolated points) followed
by one generator update. Early epochs use the plain realism loss; the last
fair_epochs switch the generator to realism plus a statistical-parity or
equalized-odds penalty scored by a frozen classifier on generated samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bundle import ModelBundle
from .data_pipeline import EncodedMatrix, RawTable, Transformer, inverse_transform, reorder_like_schema
from .networks import (ClassifierConfig, ClassifierParams, CriticParams, GeneratorParams,
                       calibrate_critic_scale, classifier_soft_label, critic_forward,
                       generator_forward, init_critic, init_generator, train_classifier)
from .schema import Schema

VARIANTS = ("sp", "eod", "none")


class ConfigError(ValueError):
    """Training configuration violates an invariant or has unknown keys."""


@dataclass
class TrainConfig:
    total_epochs: int = 200
    fair_epochs: int = 50
    batch_size: int = 256
    n_critic: int = 4
    lambda_fair: float = 0.5
    lambda_pen: float = 10.0
    lr_critic: float = 2e-4
    lr_gen_phase1: float = 2e-4
    lr_gen_phase2: float = 1e-4
    variant: str = "sp"
    seed: int = 42
    reset_adam_on_fair_phase: bool = False
    precision: int = 32
    classifier_lr: float = 1e-3
    classifier_epochs: int = 50
    classifier_batch_size: int = 256

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.fair_epochs > self.total_epochs:
            raise ConfigError("fair_epochs must not exceed total_epochs")
        if min(self.total_epochs, self.fair_epochs) < 0 or self.total_epochs == 0:
            raise ConfigError("epoch counts must be nonnegative with total_epochs >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.n_critic < 1:
            raise ConfigError("n_critic must be at least 1")
        for name in ("lr_critic", "lr_gen_phase1", "lr_gen_phase2", "classifier_lr"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda_fair < 0 or self.lambda_pen < 0:
            raise ConfigError("penalty weights must be nonnegative")
        if self.precision not in (32, 64):
            raise ConfigError("precision must be 32 or 64")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64

    def mode(self, epoch: int) -> str:
        """Phase of a 1-based epoch: accuracy then fairness for the tail."""
        return "accuracy" if epoch <= self.total_epochs - self.fair_epochs else "fairness"

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class BatchRecord:
    epoch: int
    batch: int
    mode: str
    critic_steps: int
    critic_w: float
    gen_loss: float
    fair_penalty: float | None


def write_history_csv(path, records: list[BatchRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "batch", "critic_w", "gen_loss", "fair_penalty"])
        for r in records:
            pen = "nan" if r.fair_penalty is None else repr(r.fair_penalty)
            writer.writerow([r.epoch, r.batch, repr(r.critic_w), repr(r.gen_loss), pen])


# ---------------------------------------------------------------------------
# fairness penalties (batch-level, differentiable through the soft labels)


def _masked_mean(values: Tensor, mask: np.ndarray) -> Tensor:
    count = float(mask.sum())
    return ad.tsum(ad.mul(values, Tensor(mask.astype(values.dtype)))) / count


def fairness_penalty_sp(soft_labels: Tensor, s_bits: np.ndarray) -> Tensor:
    """|mean soft label of group 0 - group 1|; zero when a group is absent."""
    s = np.asarray(s_bits)
    m0 = s == 0
    m1 = s == 1
    if not m0.any() or not m1.any():
        return Tensor(np.zeros((), dtype=soft_labels.dtype))
    return ad.absolute(ad.sub(_masked_mean(soft_labels, m0), _masked_mean(soft_labels, m1)))


def fairness_penalty_eod(soft_labels: Tensor, s_bits: np.ndarray, y_bits: np.ndarray) -> Tensor:
    """Sum over generated label values of the group gap, skipping empty cells."""
    s = np.asarray(s_bits)
    y = np.asarray(y_bits)
    total: Tensor | None = None
    for val in (0, 1):
        m0 = (s == 0) & (y == val)
        m1 = (s == 1) & (y == val)
        if not m0.any() or not m1.any():
            continue
        term = ad.absolute(ad.sub(_masked_mean(soft_labels, m0), _masked_mean(soft_labels, m1)))
        total = term if total is None else ad.add(total, term)
    if total is None:
        return Tensor(np.zeros((), dtype=soft_labels.dtype))
    return total


# ---------------------------------------------------------------------------
# single updates


def critic_update(gen: GeneratorParams, critic: CriticParams, transformer: Transformer,
                  real_batch: np.ndarray, lambda_pen: float, opt: ad.Adam,
                  rng: np.random.Generator) -> float:
    """One critic descent step; returns the Wasserstein estimate mean C(real) - mean C(fake)."""
    m, n_dim = real_batch.shape
    dtype = real_batch.dtype
    z = rng.standard_normal((m, n_dim)).astype(dtype)
    with ad.no_grad():
        fake = generator_forward(gen, transformer, z, rng, hard=False).full.data
    eps = rng.random((m, 1)).astype(dtype)
    mixed = eps * real_batch + (1.0 - eps) * fake

    score_fake = ad.mean(critic_forward(critic, fake))
    score_real = ad.mean(critic_forward(critic, real_batch))
    input_grad = ad.input_gradient_mlp(critic.hidden_layers(), critic.out.w, mixed)
    penalty = ad.mean(ad.square(ad.row_norms(input_grad) - 1.0))
    loss = ad.add(ad.sub(score_fake, score_real), penalty * float(lambda_pen))

    ad.zero_grads(critic.tensors())
    ad.backward(loss)
    opt.step()
    return float(score_real.data) - float(score_fake.data)


def generator_update_accuracy(gen: GeneratorParams, critic: CriticParams,
                              transformer: Transformer, m: int, opt: ad.Adam,
                              rng: np.random.Generator, dtype) -> float:
    z = rng.standard_normal((m, transformer.n_dim)).astype(dtype)
    out = generator_forward(gen, transformer, z, rng, hard=False)
    loss = ad.mean(ad.neg(critic_forward(critic, out.full)))
    ad.zero_grads(gen.tensors() + critic.tensors())
    ad.backward(loss)
    opt.step()
    return float(loss.data)


def _classifier_view(out, transformer: Transformer, label_column: str) -> Tensor:
    parts = [out.numeric] if out.numeric is not None else []
    for spec in transformer.categorical:
        if spec.name != label_column:
            parts.append(out.categorical[spec.name])
    return ad.concat(parts, axis=1)


def generator_update_fair(gen: GeneratorParams, critic: CriticParams,
                          classifier: ClassifierParams, transformer: Transformer,
                          schema: Schema, m: int, lambda_fair: float, variant: str,
                          opt: ad.Adam, rng: np.random.Generator, dtype) -> tuple[float, float]:
    """Phase-2 generator step; returns (loss, penalty value).

    Group and label membership come from the argmax of the generated soft
    blocks and are held constant; gradients reach the generator through the
    classifier's soft labels and the critic score only.
    """
    z = rng.standard_normal((m, transformer.n_dim)).astype(dtype)
    out = generator_forward(gen, transformer, z, rng, hard=False)
    score = ad.mean(ad.neg(critic_forward(critic, out.full)))

    soft_labels = classifier_soft_label(classifier, _classifier_view(out, transformer, schema.label_column), rng)
    s_spec = transformer.categorical_spec(schema.protected_column)
    priv_index = s_spec.categories.index(schema.privileged_value)
    s_bits = (out.categorical[schema.protected_column].data.argmax(axis=1) == priv_index).astype(np.int64)
    if variant == "sp":
        penalty = fairness_penalty_sp(soft_labels, s_bits)
    elif variant == "eod":
        y_spec = transformer.categorical_spec(schema.label_column)
        pos_index = y_spec.categories.index(schema.positive_label)
        y_bits = (out.categorical[schema.label_column].data.argmax(axis=1) == pos_index).astype(np.int64)
        penalty = fairness_penalty_eod(soft_labels, s_bits, y_bits)
    else:
        raise ConfigError(f"no fairness penalty for variant {variant!r}")

    loss = ad.add(score, penalty * float(lambda_fair))
    ad.zero_grads(gen.tensors() + critic.tensors() + classifier.tensors())
    ad.backward(loss)
    opt.step()
    return float(loss.data), float(penalty.data)


# ---------------------------------------------------------------------------
# full loop


def label_bits(encoded: EncodedMatrix, transformer: Transformer, schema: Schema) -> np.ndarray:
    spec = transformer.categorical_spec(schema.label_column)
    lo, hi = encoded.block_map[schema.label_column]
    pos_index = spec.categories.index(schema.positive_label)
    return (encoded.data[:, lo:hi].argmax(axis=1) == pos_index).astype(np.int64)


def feature_view(data: np.ndarray, block_map: dict, label_column: str) -> np.ndarray:
    lo, hi = block_map[label_column]
    return np.concatenate([data[:, :lo], data[:, hi:]], axis=1)


def train(encoded: EncodedMatrix, schema: Schema, transformer: Transformer,
          config: TrainConfig) -> tuple[ModelBundle, list[BatchRecord]]:
    """Run the full two-phase procedure and return a checkpointable bundle."""
    rng = np.random.default_rng(config.seed)
    dtype = config.dtype
    data = encoded.data.astype(dtype)
    n = data.shape[0]

    clf_config = ClassifierConfig(lr=config.classifier_lr, epochs=config.classifier_epochs,
                                  batch_size=config.classifier_batch_size)
    features = feature_view(data, encoded.block_map, schema.label_column)
    classifier, _, _ = train_classifier(features, label_bits(encoded, transformer, schema),
                                        clf_config, rng, dtype)

    gen = init_generator(rng, transformer, dtype)
    critic = init_critic(rng, transformer.n_dim, dtype)
    calibrate_critic_scale(critic, data[:min(n, config.batch_size)])
    opt_gen = ad.Adam(gen.tensors(), lr=config.lr_gen_phase1)
    opt_critic = ad.Adam(critic.tensors(), lr=config.lr_critic)

    history: list[BatchRecord] = []
    in_fair_phase = False
    fairness_active = config.variant != "none" and config.fair_epochs > 0
    batches_per_epoch = math.ceil(n / config.batch_size)
    for epoch in range(1, config.total_epochs + 1):
        mode = config.mode(epoch)
        if mode == "fairness" and fairness_active and not in_fair_phase:
            in_fair_phase = True
            opt_gen.lr = config.lr_gen_phase2
            if config.reset_adam_on_fair_phase:
                opt_gen.reset_moments()
        perm = rng.permutation(n)
        for b in range(batches_per_epoch):
            m_b = len(perm[b * config.batch_size:(b + 1) * config.batch_size])
            w_estimate = 0.0
            for _ in range(config.n_critic):
                real = data[rng.choice(n, size=m_b, replace=False)]
                w_estimate = critic_update(gen, critic, transformer, real,
                                           config.lambda_pen, opt_critic, rng)
            if mode == "fairness" and fairness_active:
                gen_loss, pen = generator_update_fair(
                    gen, critic, classifier, transformer, schema, m_b,
                    config.lambda_fair, config.variant, opt_gen, rng, dtype)
            else:
                gen_loss = generator_update_accuracy(gen, critic, transformer,
                                                     m_b, opt_gen, rng, dtype)
                pen = None
            history.append(BatchRecord(epoch, b, mode, config.n_critic,
                                       w_estimate, gen_loss, pen))

    bundle = ModelBundle(schema=schema, transformer=transformer, generator=gen,
                         critic=critic, classifier=classifier, train_rows=n,
                         train_config=config.to_json_dict())
    return bundle, history


def sample_synthetic(bundle: ModelBundle, n: int, rng: np.random.Generator,
                     chunk: int = 4096) -> RawTable:
    """Draw n hard-mode samples and decode them back to a raw table."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    transformer = bundle.transformer
    rows = []
    with ad.no_grad():
        remaining = n
        while remaining > 0:
            m = min(chunk, remaining)
            z = rng.standard_normal((m, transformer.n_dim)).astype(np.float32)
            out = generator_forward(bundle.generator, transformer, z, rng, hard=True)
            rows.append(out.full.data.astype(np.float64))
            remaining -= m
    encoded = EncodedMatrix(np.concatenate(rows, axis=0), transformer.block_map)
    return reorder_like_schema(inverse_transform(transformer, encoded), bundle.schema)
