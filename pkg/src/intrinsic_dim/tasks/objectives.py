"""Full-batch quadratic objectives with known solution-set geometry."""
from __future__ import annotations

import math

import numpy as np

from ..rng import Stream


def toy_performance(loss: float) -> float:
    """exp(-loss): 1 for an exact solution, tending to 0 for bad ones."""
    if loss < 0:
        raise ValueError("loss must be non-negative")
    return math.exp(-loss)


class QuadraticObjective:
    """``loss(theta) = ||A theta - b||^2``.

    Acts as its own "architecture" for subspace training: it has a
    descriptor, a parameter count and a seeded initializer.
    """

    steps_per_epoch = 50
    init_scale = 1.0

    def __init__(self, A: np.ndarray, b: np.ndarray):
        self.A = np.asarray(A, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.D = self.A.shape[1]

    def param_count(self) -> int:
        return self.D

    def init_params(self, seed: int) -> np.ndarray:
        return Stream(seed, "objective-init").normal(self.D) * self.init_scale

    def _check(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.D,):
            raise ValueError(f"expected parameter vector of length {self.D}, got {theta.shape}")
        return theta

    def loss(self, theta) -> float:
        r = self.A @ self._check(theta) - self.b
        return float(r @ r)

    def gradient(self, theta) -> np.ndarray:
        return 2.0 * self.A.T @ (self.A @ self._check(theta) - self.b)

    # training protocol -------------------------------------------------
    def batches(self, epoch: int, seed: int, batch_size: int):
        return [None] * self.steps_per_epoch

    def loss_grad(self, theta, batch=None):
        theta = self._check(theta)
        r = self.A @ theta - self.b
        return float(r @ r), 2.0 * self.A.T @ r, None

    def evaluate(self, theta) -> dict:
        loss = self.loss(theta)
        perf = math.exp(-loss) if np.isfinite(loss) else 0.0
        return {"train_loss": loss, "train_acc": None, "val_loss": loss, "val_acc": None,
                "performance": perf}

    def restricted_minimum(self, theta0: np.ndarray, P: np.ndarray) -> float:
        """Exact minimum of the loss over ``theta0 + span(P)`` (least squares)."""
        M = self.A @ P
        r0 = self.b - self.A @ theta0
        z, *_ = np.linalg.lstsq(M, r0, rcond=None)
        res = M @ z - r0
        return float(res @ res)


class ToyProblem(QuadraticObjective):
    """D = 1000 split into 10 contiguous blocks of 100; block k must sum to k."""

    descriptor = "toy"

    def __init__(self, D: int = 1000, groups: int = 10):
        if D % groups:
            raise ValueError("D must be divisible by the number of groups")
        size = D // groups
        A = np.zeros((groups, D))
        for k in range(groups):
            A[k, k * size:(k + 1) * size] = 1.0
        super().__init__(A, np.arange(1, groups + 1, dtype=np.float64))
        self.groups = groups
        if (D, groups) != (1000, 10):
            self.descriptor = f"toy:{D}-{groups}"


def toy_loss(theta: np.ndarray) -> float:
    """Sum over the 10 blocks of (block sum - k)^2 for a length-1000 vector."""
    return _TOY.loss(theta)


_TOY = ToyProblem()


class LinearProblem(QuadraticObjective):
    """Random ``codim x D`` system: the zero-loss set is an affine subspace of
    codimension ``codim``."""

    def __init__(self, D: int, codim: int, seed: int):
        if not 0 < codim <= D:
            raise ValueError(f"codim must be in [1, D], got {codim}")
        s = Stream(seed, "linear-problem")
        A = s.normal(codim * D).reshape(codim, D) / np.sqrt(D)
        b = s.normal(codim)
        super().__init__(A, b)
        self.codim, self.seed = codim, seed
        self.descriptor = f"linear:{D}:{codim}:{seed}"


def linear_solution_problem(D: int, codim: int, seed: int) -> LinearProblem:
    return LinearProblem(D, codim, seed)
