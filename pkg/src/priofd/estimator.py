"""Shared remote state extrapolation and self-estimation error.

Every agent holds the same extrapolate of every other agent's state (the
network is lossless and synchronized, so all inputs to the update are
globally shared). When agent l's state was transmitted in round k, the
received measurement is predicted one step ahead to absorb the one-round
transmission delay; otherwise the old estimate is extrapolated closed-loop,
with the controller evaluated on the shared estimate in both argument
slots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .controller import control_vector
from .dynamics import AgentModel


@dataclass
class RemoteEstimate:
    owner: int
    x_hat: np.ndarray
    k: int

    def __post_init__(self):
        self.x_hat = np.asarray(self.x_hat, dtype=float)


@dataclass
class EstimationError:
    owner: int
    e: np.ndarray
    k: int

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=float)


def propagate_estimate(model: AgentModel, est: RemoteEstimate,
                       estimates_of_others: Mapping[int, RemoteEstimate],
                       received: np.ndarray | None = None) -> RemoteEstimate:
    """Advance the shared estimate of agent `model.id` by one round.

    received, when present, is the true measurement x_l(k) transmitted this
    round; the estimate for k+1 is then the one-step prediction from it.
    """
    others = {j: e.x_hat for j, e in estimates_of_others.items()}
    base = est.x_hat if received is None else np.asarray(received, dtype=float)
    u = control_vector(model, base, others)
    x_next = model.A @ base + model.B @ u
    return RemoteEstimate(model.id, x_next, est.k + 1)


def compute_error(x: np.ndarray | "object", est: RemoteEstimate) -> EstimationError:
    """e = x - x_hat for the same agent at the same round."""
    owner = getattr(x, "k", None)
    if owner is not None:  # TrueState-like
        if x.k != est.k:
            raise AssertionError(
                f"timestep mismatch: state at k={x.k}, estimate at k={est.k}")
        vec = x.x
    else:
        vec = np.asarray(x, dtype=float)
    return EstimationError(est.owner, vec - est.x_hat, est.k)
