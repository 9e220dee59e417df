"""Declarative fault and disturbance injection.

A scenario is a list of (round, mutation) events applied at the start of
the named round. Mutations touch only the plant and the network: an
actuator failure zeroes B in the plant while every estimator keeps the
original model (this mismatch is what the detectors must pick up), a
bandwidth change alters M at the selection stage (in-flight winner sets
still deliver), and a disturbance adds extra zero-mean noise to one plant
for a fixed number of rounds.

The two simulation scenarios ship as presets: "actuator-failure" (B := 0
for a subset of agents at k=100) and "bandwidth-loss" (M: 2 -> 1 at
k=100). "shaken-pole" emulates the hardware fault by shaking the angle
states hard enough that priorities saturate within a few rounds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .network import Disturbance, WorldState


@dataclass(frozen=True)
class Event:
    k: int
    kind: str               # set_B_zero | set_bandwidth | add_disturbance
    agents: tuple[int, ...] = ()
    bandwidth: int = 0
    covariance: tuple[tuple[float, ...], ...] = ()
    duration: int = 0

    def to_dict(self) -> dict:
        d = {"k": self.k, "kind": self.kind}
        if self.kind == "set_B_zero":
            d["agents"] = list(self.agents)
        elif self.kind == "set_bandwidth":
            d["bandwidth"] = self.bandwidth
        elif self.kind == "add_disturbance":
            d.update(agents=list(self.agents), duration=self.duration,
                     covariance=[list(row) for row in self.covariance])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        kind = d["kind"]
        if kind not in ("set_B_zero", "set_bandwidth", "add_disturbance"):
            raise ConfigError(f"unknown scenario mutation {kind!r}")
        return cls(k=int(d["k"]), kind=kind,
                   agents=tuple(int(a) for a in d.get("agents", ())),
                   bandwidth=int(d.get("bandwidth", 0)),
                   covariance=tuple(tuple(float(x) for x in row)
                                    for row in d.get("covariance", ())),
                   duration=int(d.get("duration", 0)))


@dataclass
class Scenario:
    name: str
    events: list[Event] = field(default_factory=list)

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e.k)

    @property
    def first_event_round(self) -> int | None:
        return self.events[0].k if self.events else None

    def faulty_agents(self) -> tuple[int, ...]:
        out: list[int] = []
        for ev in self.events:
            if ev.kind in ("set_B_zero", "add_disturbance"):
                out.extend(ev.agents)
        return tuple(sorted(set(out)))

    def save(self, path: str | Path) -> None:
        doc = {"name": self.name, "events": [e.to_dict() for e in self.events]}
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        doc = json.loads(Path(path).read_text())
        return cls(doc["name"], [Event.from_dict(e) for e in doc["events"]])


def apply_events(world: WorldState, scenario: Scenario, k: int) -> None:
    """Apply all of the scenario's round-k mutations (idempotent per round)."""
    for ev in scenario.events:
        if ev.k != k:
            continue
        if ev.kind == "set_bandwidth":
            if ev.bandwidth <= 0:
                raise ConfigError(f"bandwidth event at k={k} must be positive")
            world.M = min(ev.bandwidth, world.N)
            continue
        for agent in ev.agents:
            if not 1 <= agent <= world.N:
                raise ConfigError(f"scenario touches unknown agent {agent}")
            i = agent - 1
            if ev.kind == "set_B_zero":
                world.plant_B[i] = 0.0
                world.model_matched[i] = False
            else:  # add_disturbance
                cov = np.array(ev.covariance, dtype=float)
                if cov.shape != (world.n, world.n):
                    raise ConfigError(
                        f"disturbance covariance shape {cov.shape} does not "
                        f"match state dimension {world.n}")
                chol = np.linalg.cholesky(cov + 1e-12 * np.eye(world.n))
                world.disturbances[agent] = Disturbance(
                    chol, k + ev.duration, world.disturbance_stream(agent))
                world.model_matched[i] = False


def fault_free() -> Scenario:
    return Scenario("fault-free", [])


def actuator_failure(agents: tuple[int, ...] = (2, 3, 4, 5),
                     k: int = 100) -> Scenario:
    return Scenario("actuator-failure",
                    [Event(k=k, kind="set_B_zero", agents=tuple(agents))])


def bandwidth_loss(bandwidth: int = 1, k: int = 100) -> Scenario:
    return Scenario("bandwidth-loss",
                    [Event(k=k, kind="set_bandwidth", bandwidth=bandwidth)])


def shaken_pole(agent: int = 2, k: int = 100, duration: int = 60,
                angle_std: float = 0.05, n: int = 4) -> Scenario:
    """Zero-mean shaking on the angle and angular-velocity states, strong
    enough that the agent's priority saturates within a few rounds."""
    cov = np.zeros((n, n))
    cov[1, 1] = angle_std ** 2
    cov[3, 3] = (4.0 * angle_std) ** 2
    return Scenario("shaken-pole", [Event(
        k=k, kind="add_disturbance", agents=(agent,),
        covariance=tuple(tuple(row) for row in cov), duration=duration)])


PRESETS = {
    "fault-free": fault_free,
    "actuator-failure": actuator_failure,
    "bandwidth-loss": bandwidth_loss,
    "shaken-pole": shaken_pole,
}


def resolve_scenario(name_or_path: str | None) -> Scenario:
    """Preset name, path to a scenario JSON file, or None (fault free)."""
    if name_or_path is None or name_or_path == "none":
        return fault_free()
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]()
    path = Path(name_or_path)
    if path.exists():
        return Scenario.load(path)
    raise ConfigError(f"unknown scenario {name_or_path!r} (presets: "
                      f"{', '.join(sorted(PRESETS))}, or a JSON file path)")
