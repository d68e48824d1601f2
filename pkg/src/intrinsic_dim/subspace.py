"""theta_D = theta0 + P theta_d with theta0 and P frozen."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import nn
from .projection import Projection, make_projection


@dataclass
class SubspaceModel:
    arch: object                 # nn.Architecture or a task objective
    theta0: np.ndarray
    projection: Projection
    theta_d: np.ndarray
    seed_theta0: int
    seed_P: int

    @property
    def D(self) -> int:
        return self.projection.D

    @property
    def d(self) -> int:
        return self.projection.d

    @property
    def descriptor(self) -> str:
        return self.arch.descriptor

    def frozen_digest(self) -> str:
        """Digest of the frozen part (theta0 and P)."""
        h = hashlib.sha256(self.theta0.tobytes())
        h.update(self.projection.digest().encode())
        return h.hexdigest()


def init_subspace_model(arch, kind, d: int, seed_theta0: int, seed_P: int) -> SubspaceModel:
    D = arch.param_count()
    theta0 = np.asarray(arch.init_params(seed_theta0), dtype=np.float64)
    theta0.setflags(write=False)
    P = make_projection(kind, D, d, seed_P)
    return SubspaceModel(arch, theta0, P, np.zeros(P.d), int(seed_theta0), int(seed_P))


def effective_params(sm: SubspaceModel) -> np.ndarray:
    return sm.theta0 + sm.projection.project(sm.theta_d)


def full_gradient(arch, theta: np.ndarray, batch) -> np.ndarray:
    if isinstance(arch, nn.Architecture):
        return nn.backward(arch, theta, batch)
    return arch.loss_grad(theta, batch)[1]


def subspace_gradient(sm: SubspaceModel, batch=None) -> np.ndarray:
    """P^T times the full-space gradient at the effective parameters."""
    return sm.projection.project_adjoint(full_gradient(sm.arch, effective_params(sm), batch))
