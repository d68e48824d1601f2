"""First-order optimizers and the shared training loop."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .subspace import SubspaceModel

DIVERGENCE_LOSS = 1e6


@dataclass
class OptimizerConfig:
    kind: str = "adam"               # sgd | momentum | adam
    learning_rate: float = 1e-3
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-7
    l2_penalty: float = 0.0
    epochs: int = 20
    batch_size: int = 128
    seed: int = 0
    target_performance: float | None = None   # stop once an epoch reaches it

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        for name in ("momentum", "adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must be in [0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class OptState:
    t: int = 0
    velocity: np.ndarray | None = None
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def _checked(new, params):
    if not np.all(np.isfinite(new)):
        raise FloatingPointError("non-finite parameter update")
    return new


def sgd_step(params, grad, cfg: OptimizerConfig, state: OptState) -> np.ndarray:
    """Plain SGD, or heavy-ball momentum when ``cfg.kind == "momentum"``."""
    grad = np.asarray(grad)
    if grad.shape != params.shape:
        raise ValueError("parameter/gradient length mismatch")
    g = grad + cfg.l2_penalty * params
    state.t += 1
    if cfg.kind == "momentum":
        if state.velocity is None:
            state.velocity = np.zeros_like(params)
        state.velocity = cfg.momentum * state.velocity + g
        g = state.velocity
    return _checked(params - cfg.learning_rate * g, params)


def adam_step(params, grad, cfg: OptimizerConfig, state: OptState) -> np.ndarray:
    grad = np.asarray(grad)
    if grad.shape != params.shape:
        raise ValueError("parameter/gradient length mismatch")
    g = grad + cfg.l2_penalty * params
    if state.m is None:
        state.m, state.v = np.zeros_like(params), np.zeros_like(params)
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.m = b1 * state.m + (1 - b1) * g
    state.v = b2 * state.v + (1 - b2) * g * g
    m_hat = state.m / (1 - b1 ** state.t)
    v_hat = state.v / (1 - b2 ** state.t)
    return _checked(params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps), params)


def step(params, grad, cfg: OptimizerConfig, state: OptState) -> np.ndarray:
    if cfg.kind == "adam":
        return adam_step(params, grad, cfg, state)
    return sgd_step(params, grad, cfg, state)


@dataclass
class TrainResult:
    run_id: str
    final: dict
    best_performance: float
    best_val_acc: float | None
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    diverged: bool = False
    diagnostic: str = ""
    params: np.ndarray | None = None     # final trainable vector (theta_D or theta_d)

    @property
    def performance(self) -> float:
        """Sweep performance: best over epochs, 0 for diverged runs."""
        return 0.0 if self.diverged else self.best_performance


def train(model, task, cfg: OptimizerConfig, run_id: str = "run") -> TrainResult:
    """Train a direct parameter vector or a :class:`SubspaceModel` on ``task``.

    Direct mode updates theta_D; subspace mode updates only ``model.theta_d``
    (written back at the end).  The task is evaluated after every epoch.
    """
    subspace = isinstance(model, SubspaceModel)
    if subspace:
        theta = model.theta_d.astype(np.float64).copy()
        P, theta0 = model.projection, model.theta0

        def full(t):
            return theta0 + P.project(t)
    else:
        theta = np.array(model, dtype=np.float64)
        if theta.shape != (task.param_count(),):
            raise ValueError("direct parameter vector does not match the task")

        def full(t):
            return t

    state = OptState()
    history, best, best_val = [], -math.inf, None
    diverged, diagnostic = False, ""
    start = time.perf_counter()
    metrics = {}
    for epoch in range(cfg.epochs):
        loss_sum = count = correct = 0
        has_acc = True
        try:
            for batch in task.batches(epoch, cfg.seed, cfg.batch_size):
                loss, g, c = task.loss_grad(full(theta), batch)
                if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
                    raise FloatingPointError(f"loss {loss} at epoch {epoch}")
                if subspace:
                    g = P.project_adjoint(g)
                theta = step(theta, g, cfg, state)
                n = len(batch) if batch is not None else 1
                loss_sum += loss * n
                count += n
                if c is None:
                    has_acc = False
                else:
                    correct += c
        except FloatingPointError as exc:
            diverged, diagnostic = True, f"diverged: {exc}"
            break
        metrics = {"train_loss": loss_sum / max(count, 1),
                   "train_acc": correct / count if has_acc and count else None}
        metrics.update({k: v for k, v in task.evaluate(full(theta)).items() if v is not None})
        best = max(best, metrics["performance"])
        if metrics.get("val_acc") is not None:
            best_val = max(best_val or 0.0, metrics["val_acc"])
        history.append({"run_id": run_id, "epoch": epoch, "train_loss": metrics["train_loss"],
                        "train_acc": metrics.get("train_acc"), "val_acc": metrics.get("val_acc"),
                        "performance": metrics["performance"],
                        "wall_ms": round(1000 * (time.perf_counter() - start), 3)})
        if cfg.target_performance is not None and best >= cfg.target_performance:
            break
    if subspace and not diverged:
        model.theta_d = theta
    return TrainResult(run_id, metrics, best if history else 0.0, best_val, history,
                       time.perf_counter() - start, diverged, diagnostic, theta)


def evaluate(arch, params, split):
    """``(accuracy, loss)`` of a classifier over a full split."""
    from .tasks.mnist import evaluate_split
    return evaluate_split(arch, params, split)


HISTORY_FIELDS = ["run_id", "epoch", "train_loss", "train_acc", "val_acc", "wall_ms"]


def write_history_csv(results, path, header_comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in results:
            w.writerows(r.history)
