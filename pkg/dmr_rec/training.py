from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import RunConfig, rng_for
from .data import ChronoSplit
from .errors import DataError
from .features import UserExample, build_training_example
from .model import TRAINABLE, ModelParams, backward_candidates, check_finite, forward_candidates, sigmoid
from .network import NeighborIndex, extract_future_sequence


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    l2_reg: float = 1e-4
    epochs: int = 20
    seed: int = 42
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    neg_ratio: int = 4
    future_cap: int = 100

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("adam betas must be in [0, 1)")

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "TrainConfig":
        return cls(
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            l2_reg=config.l2_reg,
            epochs=config.epochs,
            seed=config.seed,
            adam_beta1=config.adam_beta1,
            adam_beta2=config.adam_beta2,
            adam_eps=config.adam_eps,
            neg_ratio=config.neg_ratio,
            future_cap=config.future_cap,
        )


@dataclass
class AdamState:
    first: dict[str, np.ndarray]
    second: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        return cls(
            first={name: np.zeros_like(array) for name, array in params.tensors().items()},
            second={name: np.zeros_like(array) for name, array in params.tensors().items()},
        )

    def copy(self) -> "AdamState":
        return AdamState(
            first={k: v.copy() for k, v in self.first.items()},
            second={k: v.copy() for k, v in self.second.items()},
            step=self.step,
        )


@dataclass(frozen=True)
class Gradients:
    tensors: dict[str, np.ndarray]
    loss: float
    bce: float
    samples: int


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    objective: float
    samples: int
    val_auc: float = float("nan")


@dataclass
class TrainResult:
    params: ModelParams
    state: AdamState
    trace: list[EpochStats] = field(default_factory=list)
    epochs_done: int = 0


def _bce_terms(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # -[y log s(z) + (1-y) log(1-s(z))] == log(1 + e^z) - y z
    return np.logaddexp(0.0, logits) - labels * logits


def bce_loss(
    samples: Sequence[tuple[float, float]],
    l2_reg: float = 0.0,
    params: ModelParams | None = None,
) -> float:
    if not samples:
        loss = 0.0
    else:
        logits, labels = (np.asarray(col, dtype=float) for col in zip(*samples))
        if np.any((labels != 0.0) & (labels != 1.0)):
            raise ValueError("labels must be 0 or 1")
        loss = float(np.sum(_bce_terms(logits, labels)))
    if l2_reg and params is not None:
        loss += l2_reg * params.squared_norm()
    return loss


def example_logits(example: UserExample, params: ModelParams):
    return forward_candidates(
        example.history_pos,
        example.future_pos,
        example.history_neg,
        example.future_neg,
        example.candidates,
        example.query_times,
        params,
    )


def backward(batch: Sequence[UserExample], params: ModelParams, l2_reg: float = 0.0) -> Gradients:
    """Loss and exact reverse-mode gradients of the summed BCE (+ L2) over a batch of users."""
    grads = {name: np.zeros_like(array) for name, array in params.tensors().items()}
    bce = 0.0
    samples = 0
    for example in batch:
        if not len(example):
            continue
        logits, cache = example_logits(example, params)
        bce += float(np.sum(_bce_terms(logits, example.labels)))
        samples += len(example)
        backward_candidates(sigmoid(logits) - example.labels, cache, params, grads)

    loss = bce
    if l2_reg:
        loss += l2_reg * params.squared_norm()
        for name, array in params.tensors().items():
            grads[name] += 2.0 * l2_reg * array
    for name, grad in grads.items():
        check_finite(f"grad:{name}", grad)
    return Gradients(tensors=grads, loss=loss, bce=bce, samples=samples)


def adam_step(
    params: ModelParams, grads: dict[str, np.ndarray], state: AdamState, config: TrainConfig
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    for name in TRAINABLE:
        g = grads[name]
        m, v = state.first[name], state.second[name]
        if m.shape != g.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} does not match state {m.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** state.step)
        v_hat = v / (1.0 - b2 ** state.step)
        target = getattr(params, name)
        target -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        check_finite(name, target)
    return params, state


def check_leakage(example: UserExample, split: ChronoSplit) -> None:
    for owner, latest in example.max_timestamp.items():
        if owner in split.test.histories and latest > split.boundary(owner):
            raise DataError(
                f"user {example.user}: interaction of {owner} at {latest} is past its split boundary"
            )


def train(
    split: ChronoSplit,
    index: NeighborIndex,
    params: ModelParams,
    config: TrainConfig,
    state: AdamState | None = None,
    start_epoch: int = 0,
    evaluator: Callable[[ModelParams], float] | None = None,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> TrainResult:
    """Epochs of seeded user-shuffled mini-batches; epoch e draws only from streams keyed by e."""
    state = state or AdamState.fresh(params)
    users = list(split.train.histories)
    futures = {user: extract_future_sequence(user, index, split.train, config.future_cap) for user in users}
    result = TrainResult(params=params, state=state, epochs_done=start_epoch)

    for epoch in range(start_epoch, config.epochs):
        order = rng_for(config.seed, f"shuffle:{epoch}").permutation(len(users))
        sampler = rng_for(config.seed, f"sampling:{epoch}")
        bce, objective, samples = 0.0, 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [
                build_training_example(users[i], split.train, futures[users[i]], params, config.neg_ratio, sampler)
                for i in order[start : start + config.batch_size]
            ]
            for example in batch:
                check_leakage(example, split)
            grads = backward(batch, params, config.l2_reg)
            adam_step(params, grads.tensors, state, config)
            bce += grads.bce
            objective += grads.loss
            samples += grads.samples

        stats = EpochStats(
            epoch=epoch + 1,
            loss=bce / max(samples, 1),
            objective=objective,
            samples=samples,
            val_auc=evaluator(params) if evaluator is not None else float("nan"),
        )
        result.trace.append(stats)
        result.epochs_done = epoch + 1
        if on_epoch is not None:
            on_epoch(stats)
    return result


def numerical_gradients(
    batch: Sequence[UserExample], params: ModelParams, h: float = 1e-4, l2_reg: float = 0.0
) -> dict[str, np.ndarray]:
    """Central finite differences of the batch loss, one entry at a time."""
    grads: dict[str, np.ndarray] = {}
    for name, array in params.tensors().items():
        grad = np.zeros_like(array)
        flat, flat_grad = array.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = backward(batch, params, l2_reg).loss
            flat[i] = original - h
            minus = backward(batch, params, l2_reg).loss
            flat[i] = original
            flat_grad[i] = (plus - minus) / (2.0 * h)
        grads[name] = grad
    return grads


def gradient_check(
    batch: Sequence[UserExample], params: ModelParams, h: float = 1e-4, l2_reg: float = 0.0
) -> dict[str, float]:
    """Max entrywise relative error per tensor; denominators floored at 1e-2."""
    analytic = backward(batch, params, l2_reg).tensors
    numeric = numerical_gradients(batch, params, h, l2_reg)
    errors = {}
    for name in TRAINABLE:
        a, n = analytic[name], numeric[name]
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-2)
        errors[name] = float(np.max(np.abs(a - n) / scale)) if a.size else 0.0
    return errors
