"""Objective landscapes: toy and linear problems, MNIST, cart-pole."""
from .objectives import (LinearProblem, QuadraticObjective, ToyProblem, linear_solution_problem,
                         toy_loss, toy_performance)
from .mnist import (Dataset, IDXError, Split, SupervisedTask, evaluate_split, load_mnist,
                    mnist_dataset, read_idx, shuffle_labels, shuffle_pixels)
from .cartpole import CartPoleState, VecCartPole, cartpole_reset, cartpole_step, rollout


def resolve_descriptor(text: str):
    """Model descriptor -> object with ``param_count`` / ``init_params``."""
    from .. import nn
    kind, _, rest = text.partition(":")
    if kind == "toy":
        if not rest:
            return ToyProblem()
        D, groups = (int(s) for s in rest.split("-"))
        return ToyProblem(D, groups)
    if kind == "linear":
        D, codim, seed = (int(s) for s in rest.split(":"))
        return LinearProblem(D, codim, seed)
    return nn.parse_arch(text)
