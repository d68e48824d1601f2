"""Named tasks and the default training recipe for each."""
from __future__ import annotations

from dataclasses import replace

from . import nn
from .optimize import OptimizerConfig
from .tasks import (LinearProblem, SupervisedTask, ToyProblem, mnist_dataset, shuffle_labels,
                    shuffle_pixels)

TASKS = ("toy", "linear", "mnist", "mnist-shuffled-pixels", "mnist-shuffled-labels")

# quadratic objectives are ill-conditioned inside random subspaces: heavy-ball
# momentum with many cheap full-batch steps, stopping once solved exactly
RECIPES = {
    "toy": OptimizerConfig("momentum", learning_rate=0.1, momentum=0.99, epochs=100,
                           target_performance=1.0),
    "linear": OptimizerConfig("momentum", learning_rate=1.0, momentum=0.995, epochs=300,
                              target_performance=1.0),
    "mnist": OptimizerConfig("adam", learning_rate=1e-3, epochs=20, batch_size=128),
}

# full-space quadratics are well conditioned on the row space, so plain SGD
# below 2/L converges geometrically (toy L = 200, linear L < 6 for codim <= D/8)
DIRECT_RECIPES = {
    "toy": OptimizerConfig("sgd", learning_rate=0.004, epochs=10, target_performance=1.0),
    "linear": OptimizerConfig("sgd", learning_rate=0.2, epochs=40, target_performance=1.0),
}

# theta_d coordinates are unit-norm directions in D space, so the subspace
# tolerates (and needs) a larger Adam step than direct training
SUBSPACE_MNIST_LR = 1e-2


def recipe(task_name: str, direct: bool = False, **overrides) -> OptimizerConfig:
    key = "mnist" if task_name.startswith("mnist") else task_name
    if key not in RECIPES:
        raise ValueError(f"no training recipe for task {task_name!r}")
    base = DIRECT_RECIPES.get(key, RECIPES[key]) if direct else RECIPES[key]
    return replace(base, **{k: v for k, v in overrides.items() if v is not None})


def build_task(name: str, arch: str | None = None, mnist_dir=None, codim: int = 10,
               linear_dim: int = 200, problem_seed: int = 0, pixel_seed: int = 0,
               label_seed: int = 0, label_fraction: float = 1.0):
    if name == "toy":
        return ToyProblem()
    if name == "linear":
        return LinearProblem(linear_dim, codim, problem_seed)
    if name.startswith("mnist"):
        ds = mnist_dataset(mnist_dir)
        if name == "mnist-shuffled-pixels":
            ds = shuffle_pixels(ds, pixel_seed)
        elif name == "mnist-shuffled-labels":
            ds = shuffle_labels(ds, label_seed, label_fraction)
        elif name != "mnist":
            raise ValueError(f"unknown task {name!r}")
        return SupervisedTask(nn.parse_arch(arch or "fc:784-200-200-10"), ds)
    raise ValueError(f"unknown task {name!r}")
