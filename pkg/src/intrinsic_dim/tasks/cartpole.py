"""Cart-pole balancing with the classic Euler dynamics.

A step that leaves the pole up and the cart on the track earns 1.0; the
failing step earns 0 and ends the episode.  Episodes are capped at 200 steps,
so a perfect episode returns 200.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..rng import Stream

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
HALF_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * HALF_LENGTH
FORCE = 10.0
DT = 0.02
X_LIMIT = 2.4
ANGLE_LIMIT = 15 * 2 * math.pi / 360
MAX_STEPS = 200
SOLVED_REWARD = 195.0

LEFT, RIGHT = 0, 1
OBS_DIM, N_ACTIONS = 4, 2


@dataclass(frozen=True)
class CartPoleState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float
    steps: int = 0
    done: bool = False

    @property
    def observation(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.theta, self.theta_dot])


def _dynamics(x, x_dot, theta, theta_dot, force):
    cos, sin = np.cos(theta), np.sin(theta)
    temp = (force + POLE_MASS_LENGTH * theta_dot ** 2 * sin) / TOTAL_MASS
    theta_acc = (GRAVITY * sin - cos * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos ** 2 / TOTAL_MASS))
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS
    return (x + DT * x_dot, x_dot + DT * x_acc,
            theta + DT * theta_dot, theta_dot + DT * theta_acc)


def _failed(x, theta):
    return (np.abs(x) > X_LIMIT) | (np.abs(theta) > ANGLE_LIMIT)


def _initial(seed: int, n: int = 1) -> np.ndarray:
    return (Stream(seed, "cartpole-reset").uniform(4 * n) * 0.1 - 0.05).reshape(n, 4)


def cartpole_reset(seed: int) -> CartPoleState:
    return CartPoleState(*_initial(seed)[0])


def cartpole_step(state: CartPoleState, action: int):
    """Advance one step: returns ``(next_state, reward, done)``."""
    if state.done:
        raise RuntimeError("episode already terminated; reset first")
    if action not in (LEFT, RIGHT):
        raise ValueError(f"invalid action {action!r}")
    force = FORCE if action == RIGHT else -FORCE
    x, x_dot, theta, theta_dot = (float(v) for v in _dynamics(
        state.x, state.x_dot, state.theta, state.theta_dot, force))
    steps = state.steps + 1
    failed = bool(_failed(x, theta))
    done = failed or steps >= MAX_STEPS
    return CartPoleState(x, x_dot, theta, theta_dot, steps, done), (0.0 if failed else 1.0), done


class VecCartPole:
    """``n`` independent episodes stepped together; same arithmetic as
    :func:`cartpole_step`."""

    def __init__(self, seeds):
        seeds = list(seeds)
        self.state = np.concatenate([_initial(s) for s in seeds]) if seeds else np.zeros((0, 4))
        self.done = np.zeros(len(seeds), dtype=bool)
        self.returns = np.zeros(len(seeds))
        self.steps = 0

    @property
    def observations(self) -> np.ndarray:
        return self.state

    def step(self, actions: np.ndarray):
        active = ~self.done
        force = np.where(np.asarray(actions) == RIGHT, FORCE, -FORCE)
        s = self.state
        nxt = np.stack(_dynamics(s[:, 0], s[:, 1], s[:, 2], s[:, 3], force), axis=1)
        self.state = np.where(active[:, None], nxt, s)
        self.steps += 1
        failed = _failed(self.state[:, 0], self.state[:, 2]) & active
        self.returns += np.where(active & ~failed, 1.0, 0.0)
        self.done |= failed
        if self.steps >= MAX_STEPS:
            self.done[:] = True
        return self.done.all()


def rollout(policy, seeds) -> np.ndarray:
    """Episode returns for ``policy(observations) -> actions`` from each reset seed."""
    env = VecCartPole(seeds)
    while not env.step(policy(env.observations)):
        pass
    return env.returns
