"""Generator, critic and auxiliary classifier over the encoded row format.

Generator: z -> ReLU(FC) -> [ReLU numeric head | Gumbel-softmax head per
categorical block], concatenated in transformer block order. Critic: two
LeakyReLU(0.01) layers at full width plus a final linear column producing
one unbounded score per row. Classifier: 128/64 ReLU hidden layers with two
logits, fed every block except the label's.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data_pipeline import Transformer

GUMBEL_TAU = 0.2
CRITIC_SLOPE = 0.01


@dataclass
class Linear:
    w: Tensor
    b: Tensor

    @property
    def fan_out(self) -> int:
        return self.w.data.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> Linear:
    bound = np.sqrt(1.0 / fan_in)
    return Linear(
        w=Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)),
        b=Tensor(rng.uniform(-bound, bound, size=fan_out).astype(dtype)),
    )


@dataclass
class GeneratorParams:
    fc1: Linear                    # n_dim -> n_dim
    numeric_head: Linear | None    # n_dim -> n_num, absent when n_num == 0
    cat_heads: list[Linear]        # transformer categorical order
    tau: float = GUMBEL_TAU

    def tensors(self) -> list[Tensor]:
        out = [self.fc1.w, self.fc1.b]
        if self.numeric_head is not None:
            out += [self.numeric_head.w, self.numeric_head.b]
        for head in self.cat_heads:
            out += [head.w, head.b]
        return out


@dataclass
class CriticParams:
    fc1: Linear
    fc2: Linear
    out: Linear  # n_dim -> 1, linear

    def tensors(self) -> list[Tensor]:
        return [self.fc1.w, self.fc1.b, self.fc2.w, self.fc2.b, self.out.w, self.out.b]

    def hidden_layers(self) -> list[tuple[Tensor, Tensor, float]]:
        return [(self.fc1.w, self.fc1.b, CRITIC_SLOPE), (self.fc2.w, self.fc2.b, CRITIC_SLOPE)]


@dataclass
class ClassifierParams:
    fc1: Linear  # d_in -> 128
    fc2: Linear  # 128 -> 64
    out: Linear  # 64 -> 2

    @property
    def d_in(self) -> int:
        return self.fc1.w.data.shape[0]

    def tensors(self) -> list[Tensor]:
        return [self.fc1.w, self.fc1.b, self.fc2.w, self.fc2.b, self.out.w, self.out.b]


def init_generator(rng, transformer: Transformer, dtype=np.float32) -> GeneratorParams:
    n_dim = transformer.n_dim
    numeric = init_linear(rng, n_dim, transformer.n_num, dtype) if transformer.n_num else None
    cat_heads = []
    for spec in transformer.categorical:
        head = init_linear(rng, n_dim, spec.width, dtype)
        # zero logits at init: every block starts at the uniform distribution,
        # which avoids heads that are born collapsed onto one category
        head.w.data[:] = 0.0
        head.b.data[:] = 0.0
        cat_heads.append(head)
    return GeneratorParams(
        fc1=init_linear(rng, n_dim, n_dim, dtype),
        numeric_head=numeric,
        cat_heads=cat_heads,
    )


def init_critic(rng, n_dim: int, dtype=np.float32) -> CriticParams:
    return CriticParams(
        fc1=init_linear(rng, n_dim, n_dim, dtype),
        fc2=init_linear(rng, n_dim, n_dim, dtype),
        out=init_linear(rng, n_dim, 1, dtype),
    )


def calibrate_critic_scale(critic: CriticParams, probe_rows: np.ndarray) -> None:
    """Rescale critic weights so input-gradient norms start near 1.

    Freshly initialized critics have gradient norms around 0.1, so the first
    chunk of training is spent inflating weights to satisfy the gradient
    penalty instead of discriminating. The norm is cubic in a shared layer
    scale (two hidden layers plus the output column), hence the cube root.
    """
    grad = ad.input_gradient_mlp(critic.hidden_layers(), critic.out.w, probe_rows)
    mean_norm = float(np.sqrt((grad.data ** 2).sum(axis=1)).mean())
    if mean_norm <= 0:
        return
    scale = mean_norm ** (-1.0 / 3.0)
    for layer in (critic.fc1, critic.fc2, critic.out):
        layer.w.data *= scale
        layer.b.data *= scale


def init_classifier(rng, d_in: int, dtype=np.float32,
                    hidden=(128, 64)) -> ClassifierParams:
    return ClassifierParams(
        fc1=init_linear(rng, d_in, hidden[0], dtype),
        fc2=init_linear(rng, hidden[0], hidden[1], dtype),
        out=init_linear(rng, hidden[1], 2, dtype),
    )


@dataclass
class GeneratorOutput:
    full: Tensor                      # rows x n_dim, transformer block order
    numeric: Tensor | None
    categorical: dict[str, Tensor]    # per categorical column


def generator_forward(gen: GeneratorParams, transformer: Transformer, z,
                      rng: np.random.Generator, hard: bool = False) -> GeneratorOutput:
    """One generator pass; soft Gumbel blocks for training, hard for sampling."""
    zt = z if isinstance(z, Tensor) else Tensor(z)
    if zt.data.shape[1] != transformer.n_dim:
        raise ValueError(f"noise width {zt.data.shape[1]} != n_dim {transformer.n_dim}")
    h1 = ad.relu(gen.fc1(zt))
    parts: list[Tensor] = []
    numeric = None
    if gen.numeric_head is not None:
        numeric = ad.relu(gen.numeric_head(h1))
        parts.append(numeric)
    categorical: dict[str, Tensor] = {}
    for spec, head in zip(transformer.categorical, gen.cat_heads):
        block = ad.gumbel_softmax(head(h1), gen.tau, rng, hard=hard)
        categorical[spec.name] = block
        parts.append(block)
    return GeneratorOutput(full=ad.concat(parts, axis=1), numeric=numeric, categorical=categorical)


def critic_forward(critic: CriticParams, rows) -> Tensor:
    """Unbounded realism score per row, shape (rows,)."""
    x = rows if isinstance(rows, Tensor) else Tensor(rows)
    h1 = ad.leaky_relu(critic.fc1(x), CRITIC_SLOPE)
    h2 = ad.leaky_relu(critic.fc2(h1), CRITIC_SLOPE)
    return ad.reshape(critic.out(h2), (x.data.shape[0],))


def classifier_logits(clf: ClassifierParams, x) -> Tensor:
    xt = x if isinstance(x, Tensor) else Tensor(x)
    if xt.data.shape[1] != clf.d_in:
        raise ValueError(f"classifier input width {xt.data.shape[1]} != {clf.d_in}")
    h1 = ad.relu(clf.fc1(xt))
    h2 = ad.relu(clf.fc2(h1))
    return clf.out(h2)


def classifier_soft_label(clf: ClassifierParams, x, rng: np.random.Generator,
                          tau: float = GUMBEL_TAU, noise: np.ndarray | None = None) -> Tensor:
    """Differentiable positive-class probability via soft Gumbel sampling."""
    logits = classifier_logits(clf, x)
    if noise is None:
        noise = ad.sample_gumbel(logits.data.shape, rng, dtype=logits.dtype)
    soft = ad.gumbel_softmax_with_noise(logits, noise, tau, hard=False)
    return ad.reshape(ad.slice_cols(soft, 1, 2), (soft.data.shape[0],))


def classifier_scores(clf: ClassifierParams, x) -> np.ndarray:
    """Plain softmax positive-class probability (no sampling)."""
    with ad.no_grad():
        logits = classifier_logits(clf, x)
        return ad.softmax(logits).data[:, 1].copy()


@dataclass
class ClassifierConfig:
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 256
    hidden: tuple[int, int] = (128, 64)


def train_classifier(features: np.ndarray, labels: np.ndarray,
                     config: ClassifierConfig, rng: np.random.Generator,
                     dtype=np.float32) -> tuple[ClassifierParams, list[float], float]:
    """Cross-entropy training with Adam; returns (params, epoch losses, train accuracy)."""
    features = np.asarray(features, dtype=dtype)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() == labels.max():
        raise ValueError("classifier training needs both label classes present")
    n = features.shape[0]
    clf = init_classifier(rng, features.shape[1], dtype, hidden=config.hidden)
    opt = ad.Adam(clf.tensors(), lr=config.lr)
    onehot = np.zeros((n, 2), dtype=dtype)
    onehot[np.arange(n), labels] = 1.0
    losses = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            logits = classifier_logits(clf, features[idx])
            ce = ad.neg(ad.mean(ad.tsum(
                ad.mul(ad.log_softmax(logits), Tensor(onehot[idx])), axis=1)))
            ad.zero_grads(clf.tensors())
            ad.backward(ce)
            opt.step()
            epoch_loss += float(ce.data) * len(idx)
        losses.append(epoch_loss / n)
    preds = (classifier_scores(clf, features) >= 0.5).astype(np.int64)
    accuracy = float((preds == labels).mean())
    return clf, losses, accuracy
