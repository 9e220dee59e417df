"""Synchronizing state feedback: u_i = F_ii x_i + sum_{l!=i} F_il x_hat_l."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dynamics import AgentModel
from .errors import ConfigError


@dataclass
class ControlInput:
    u: np.ndarray
    k: int


def control_vector(model: AgentModel, x_self: np.ndarray,
                   estimates: Mapping[int, np.ndarray]) -> np.ndarray:
    u = model.F_self @ np.asarray(x_self, dtype=float)
    for other, gain in model.F_cross.items():
        try:
            u = u + gain @ np.asarray(estimates[other], dtype=float)
        except KeyError:
            raise ConfigError(
                f"agent {model.id} is coupled to agent {other} but no "
                f"estimate of it was provided") from None
    return u


def control(model: AgentModel, x_self, estimates) -> ControlInput:
    """estimates maps agent id -> RemoteEstimate (or raw state vector)."""
    k = getattr(x_self, "k", 0)
    x = getattr(x_self, "x", x_self)
    vecs = {j: getattr(e, "x_hat", e) for j, e in estimates.items()}
    return ControlInput(control_vector(model, x, vecs), k)
