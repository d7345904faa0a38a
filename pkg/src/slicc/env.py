"""Kinematic two-robot transport simulator.

Each robot is a unicycle with state (x, y, theta, v). Per step, heading
integrates an angular-velocity action over ``dt`` while linear velocity
takes the velocity action as a direct increment; both receive additive
Gaussian noise. The carried object is not simulated: it enters only
through the inter-robot distance, which the success checker and the
interaction reward both watch.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InputError, StateError

N_ACTIONS = 9

# (channel, multiple of the channel's step size) for each action index
_ACTION_TABLE = (
    ("none", 0),
    ("v", -2), ("v", -1), ("v", 1), ("v", 2),
    ("omega", -2), ("omega", -1), ("omega", 1), ("omega", 2),
)


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.theta, self.v)


@dataclass(frozen=True)
class WorldState:
    prosocial: RobotState
    introspective: RobotState
    step_index: int = 0


class ActionIncrement(NamedTuple):
    index: int
    a_omega: float
    a_v: float


@dataclass
class EnvConfig:
    dt: float = 0.1
    delta_a_v: float = 0.02
    delta_a_theta: float = 0.2
    noise_std: tuple[float, float, float, float] = (0.001, 0.001, 0.002, 0.001)
    v_max: float = 0.22
    horizon: int = 200
    sigma: float = 0.5
    target_v: float = 0.15
    target_theta: float = 0.0
    tol_dist: float = 0.1
    tol_goal: float = 0.1
    min_steps: int = 100
    # episode is cut once |distance - sigma| exceeds failure_factor * tol_dist
    failure_factor: float = 3.0
    init_prosocial: tuple[float, float, float, float] | None = None
    init_introspective: tuple[float, float, float, float] | None = None
    init_jitter: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        self.noise_std = tuple(float(s) for s in self.noise_std)
        self.init_jitter = tuple(float(s) for s in self.init_jitter)
        for name in ("init_prosocial", "init_introspective"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, tuple(float(s) for s in val))
        self.validate()

    def validate(self):
        if not self.dt > 0:
            raise ConfigError(f"env.dt must be positive, got {self.dt}")
        if not self.sigma > 0:
            raise ConfigError(f"env.sigma must be positive, got {self.sigma}")
        if len(self.noise_std) != 4 or any(s < 0 for s in self.noise_std):
            raise ConfigError(f"env.noise_std needs 4 non-negative entries, got {self.noise_std}")
        if len(self.init_jitter) != 4 or any(s < 0 for s in self.init_jitter):
            raise ConfigError(f"env.init_jitter needs 4 non-negative entries, got {self.init_jitter}")
        if not self.v_max > 0:
            raise ConfigError(f"env.v_max must be positive, got {self.v_max}")
        if self.horizon < self.min_steps:
            raise ConfigError(
                f"env.horizon ({self.horizon}) must be at least env.min_steps ({self.min_steps})"
            )
        if self.tol_dist < 0 or self.tol_goal < 0:
            raise ConfigError("env tolerances must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]; in-range angles pass through untouched."""
    if -math.pi < theta <= math.pi:
        return float(theta)
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


def decode_action(index: int, cfg: EnvConfig | None = None) -> ActionIncrement:
    if isinstance(index, bool) or not isinstance(index, (int, np.integer)) or not 0 <= index < N_ACTIONS:
        raise InputError(f"action index must be an integer in [0, {N_ACTIONS}), got {index!r}")
    cfg = cfg or EnvConfig()
    channel, mult = _ACTION_TABLE[index]
    a_omega = mult * cfg.delta_a_theta if channel == "omega" else 0.0
    a_v = mult * cfg.delta_a_v if channel == "v" else 0.0
    return ActionIncrement(int(index), float(a_omega), float(a_v))


def step_dynamics(s: RobotState, a_omega: float, a_v: float, noise, cfg: EnvConfig) -> RobotState:
    e_x, e_y, e_th, e_v = (float(e) for e in noise)
    x = s.x + s.v * math.cos(s.theta) * cfg.dt + e_x
    y = s.y + s.v * math.sin(s.theta) * cfg.dt + e_y
    theta = wrap_angle(s.theta + a_omega * cfg.dt + e_th)
    v = min(max(s.v + a_v + e_v, -cfg.v_max), cfg.v_max)
    return RobotState(x, y, theta, v)


def draw_noise(rng: np.random.Generator, cfg: EnvConfig) -> np.ndarray:
    # always draw, so the stream position does not depend on the std values
    return rng.standard_normal(4) * np.asarray(cfg.noise_std)


def world_step(w: WorldState, a_p: ActionIncrement, a_i: ActionIncrement,
               rng: np.random.Generator, cfg: EnvConfig) -> WorldState:
    if w.step_index >= cfg.horizon:
        raise StateError(f"episode already reached the horizon ({cfg.horizon})")
    noise_p = draw_noise(rng, cfg)
    noise_i = draw_noise(rng, cfg)
    return WorldState(
        step_dynamics(w.prosocial, a_p.a_omega, a_p.a_v, noise_p, cfg),
        step_dynamics(w.introspective, a_i.a_omega, a_i.a_v, noise_i, cfg),
        w.step_index + 1,
    )


def default_initial_poses(cfg: EnvConfig) -> tuple[tuple, tuple]:
    p = cfg.init_prosocial or (0.0, 0.5 * cfg.sigma, 0.0, 0.0)
    i = cfg.init_introspective or (0.0, -0.5 * cfg.sigma, 0.0, 0.0)
    return p, i


def reset(cfg: EnvConfig, rng: np.random.Generator) -> WorldState:
    p, i = default_initial_poses(cfg)
    jitter = np.asarray(cfg.init_jitter)
    states = []
    for pose in (p, i):
        offset = rng.standard_normal(4) * jitter
        x, y, th, v = (float(a + b) for a, b in zip(pose, offset))
        states.append(RobotState(x, y, wrap_angle(th), min(max(v, -cfg.v_max), cfg.v_max)))
    return WorldState(states[0], states[1], 0)


def observe_prosocial(w: WorldState) -> np.ndarray:
    return np.array(w.prosocial.as_tuple() + w.introspective.as_tuple())


def observe_introspective(w: WorldState) -> np.ndarray:
    return np.array(w.introspective.as_tuple())


def distance(w: WorldState) -> float:
    return math.hypot(w.prosocial.x - w.introspective.x, w.prosocial.y - w.introspective.y)


def distance_deviation(w: WorldState, sigma: float) -> float:
    return abs(distance(w) - sigma)


def goal_deviation(s: RobotState, cfg: EnvConfig) -> float:
    return math.hypot(s.v - cfg.target_v, s.theta - cfg.target_theta)


def is_terminal(w: WorldState, cfg: EnvConfig) -> bool:
    return (w.step_index >= cfg.horizon
            or distance_deviation(w, cfg.sigma) > cfg.failure_factor * cfg.tol_dist)


def check_success(trajectory: Sequence[WorldState], cfg: EnvConfig) -> bool:
    """Joint success test for one episode.

    ``trajectory`` starts with the reset state, so an episode of n steps has
    n + 1 entries and its length is n.
    """
    if len(trajectory) == 0:
        raise InputError("empty trajectory")
    if any(distance_deviation(w, cfg.sigma) > cfg.tol_dist for w in trajectory):
        return False
    last = trajectory[-1]
    if (goal_deviation(last.prosocial, cfg) > cfg.tol_goal
            or goal_deviation(last.introspective, cfg) > cfg.tol_goal):
        return False
    return len(trajectory) - 1 >= cfg.min_steps


class TransportEnv:
    """Stateful wrapper that owns the noise generator and the current world."""

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.world: WorldState | None = None
        self.done = True

    def reset(self) -> WorldState:
        self.world = reset(self.cfg, self.rng)
        self.done = False
        return self.world

    def step(self, a_p: int, a_i: int) -> tuple[WorldState, bool]:
        if self.world is None or self.done:
            raise StateError("call reset() before stepping a finished episode")
        self.world = world_step(self.world, decode_action(a_p, self.cfg),
                                decode_action(a_i, self.cfg), self.rng, self.cfg)
        self.done = is_terminal(self.world, self.cfg)
        return self.world, self.done


# -- trajectory JSON-lines ----------------------------------------------------

TRAJECTORY_FIELDS = ("step", "xP", "yP", "thetaP", "vP", "xI", "yI", "thetaI", "vI")


def world_to_record(w: WorldState) -> dict:
    p, i = w.prosocial, w.introspective
    return {"step": w.step_index, "xP": p.x, "yP": p.y, "thetaP": p.theta, "vP": p.v,
            "xI": i.x, "yI": i.y, "thetaI": i.theta, "vI": i.v}


def record_to_world(rec: dict) -> WorldState:
    return WorldState(
        RobotState(rec["xP"], rec["yP"], rec["thetaP"], rec["vP"]),
        RobotState(rec["xI"], rec["yI"], rec["thetaI"], rec["vI"]),
        int(rec["step"]),
    )


def dump_trajectory(trajectory: Iterable[WorldState], fh) -> None:
    for w in trajectory:
        fh.write(json.dumps(world_to_record(w)) + "\n")


def load_trajectory(fh) -> list[WorldState]:
    return [record_to_world(json.loads(line)) for line in fh if line.strip()]
