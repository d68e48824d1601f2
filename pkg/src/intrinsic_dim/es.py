"""Evolution strategies on theta_d for control policies."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import nn
from .optimize import OptimizerConfig, OptState, adam_step
from .rng import Stream, derive_seed
from .subspace import SubspaceModel, effective_params, init_subspace_model
from .tasks import cartpole


@dataclass
class ESConfig:
    population: int = 64
    sigma: float = 0.1
    optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig("adam", learning_rate=0.3))
    iterations: int = 300
    l2_penalty: float = 1e-8
    eval_episodes: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number >= 2 (antithetic pairs)")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be at least 1")


class CartPoleEnv:
    """Batched cart-pole episodes for a family of FC policies."""

    name = "cartpole"
    obs_dim = cartpole.OBS_DIM
    n_actions = cartpole.N_ACTIONS
    max_return = float(cartpole.MAX_STEPS)
    min_return = 0.0

    def returns(self, arch: nn.Architecture, params: np.ndarray, seeds) -> np.ndarray:
        """One episode per row of ``params`` (P, D), started from ``seeds``."""
        params = np.atleast_2d(params)

        def policy(obs):
            return nn.batched_logits(arch, params, obs).argmax(axis=1)
        return cartpole.rollout(policy, seeds)


ENVIRONMENTS = {"cartpole": CartPoleEnv}


def make_env(name: str):
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}") from None


def centered_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks scaled to [-0.5, 0.5]; tied values share their average rank."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return np.zeros_like(x)
    return (rankdata(x) - 1) / (x.size - 1) - 0.5


def _members(sm: SubspaceModel, thetas: np.ndarray) -> np.ndarray:
    P = sm.projection
    return np.stack([sm.theta0 + P.project(t) for t in thetas])


@dataclass
class ESState:
    iteration: int = 0
    opt: OptState = field(default_factory=OptState)


def es_iterate(sm: SubspaceModel, env, cfg: ESConfig, state: ESState):
    """One antithetic ES update of ``sm.theta_d``; returns ``(sm, stats)``."""
    d, half = sm.d, cfg.population // 2
    eps = Stream(cfg.seed, "es-noise", state.iteration).normal(half * d).reshape(half, d)
    thetas = np.concatenate([sm.theta_d + cfg.sigma * eps, sm.theta_d - cfg.sigma * eps])
    # both members of a pair see the same episode start
    pair_seeds = [derive_seed(cfg.seed, "es-episode", state.iteration, i) for i in range(half)]
    returns = env.returns(sm.arch, _members(sm, thetas), pair_seeds + pair_seeds)
    util = centered_ranks(returns)
    signed = np.concatenate([eps, -eps])
    grad = util @ signed / (cfg.population * cfg.sigma) - cfg.l2_penalty * sm.theta_d
    # the optimizer minimizes, ES ascends
    opt_cfg = replace(cfg.optimizer, l2_penalty=0.0)
    sm.theta_d = adam_step(sm.theta_d, -grad, opt_cfg, state.opt)
    state.iteration += 1
    stats = {"iteration": state.iteration, "mean_return": float(returns.mean()),
             "max_return": float(returns.max()), "grad_norm": float(np.linalg.norm(grad))}
    return sm, stats


def evaluate_policy(sm: SubspaceModel, env, episodes: int = 30, seed: int = 0) -> float:
    """Mean return of the deterministic (argmax) policy over seeded episodes."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    seeds = [derive_seed(seed, "eval-episode", k) for k in range(episodes)]
    params = np.repeat(effective_params(sm)[None, :], episodes, axis=0)
    return float(env.returns(sm.arch, params, seeds).mean())


@dataclass
class ESResult:
    best_reward: float
    history: list
    wall_time: float
    solved_at: int | None = None


def train_es(sm: SubspaceModel, env, cfg: ESConfig, eval_every: int = 1,
             solved: float | None = None) -> ESResult:
    """Run ``cfg.iterations`` ES updates, evaluating every ``eval_every``.

    The result's ``best_reward`` is the maximum evaluation mean seen.  Training
    stops early once the evaluation reaches the environment's maximum return.
    """
    state = ESState()
    history, best, solved_at = [], -np.inf, None
    start = time.perf_counter()
    eval_seed = derive_seed(cfg.seed, "evaluation")
    best = evaluate_policy(sm, env, cfg.eval_episodes, eval_seed)
    history.append({"iter": 0, "mean_eval_reward": best, "best_so_far": best})
    for it in range(1, cfg.iterations + 1):
        sm, _ = es_iterate(sm, env, cfg, state)
        if it % eval_every and it != cfg.iterations:
            continue
        reward = evaluate_policy(sm, env, cfg.eval_episodes, eval_seed)
        best = max(best, reward)
        history.append({"iter": it, "mean_eval_reward": reward, "best_so_far": best})
        if solved is not None and solved_at is None and best >= solved:
            solved_at = it
        if best >= env.max_return:
            break
    return ESResult(best, history, time.perf_counter() - start, solved_at)


def write_es_csv(result: ESResult, path, header_comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.DictWriter(fh, fieldnames=["iter", "mean_eval_reward", "best_so_far"])
        w.writeheader()
        w.writerows(result.history)


class ControlSweepTask:
    """ES-trained policy in the shape ``estimator.run_sweep`` expects."""

    def __init__(self, env, arch: nn.Architecture, cfg: ESConfig):
        if arch.n_inputs != env.obs_dim or arch.n_classes != env.n_actions:
            raise ValueError(f"{arch.descriptor} does not fit {env.name}")
        self.env, self.arch, self.cfg = env, arch, cfg
        self.descriptor = arch.descriptor
        self.name = env.name
        self.min_performance = env.min_return
        self.meta = {"env": env.name}

    def param_count(self) -> int:
        return nn.param_count(self.arch)

    def config_dict(self) -> dict:
        out = {k: v for k, v in self.cfg.__dict__.items() if k != "optimizer"}
        out["optimizer"] = self.cfg.optimizer.to_dict()
        return out

    def fit_subspace(self, kind, d: int, seed: int) -> float:
        sm = init_subspace_model(self.arch, kind, d, derive_seed(seed, "theta0"),
                                 derive_seed(seed, "P"))
        cfg = replace(self.cfg, seed=derive_seed(seed, "es"))
        return train_es(sm, self.env, cfg).best_reward

    def fit_direct(self, seed: int) -> float:
        raise NotImplementedError("use a global baseline (e.g. global:195) for control tasks")
