"""Reward components and the per-agent reward prototypes."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

from .env import RobotState, WorldState, distance
from .errors import ConfigError


class RewardPrototype(str, enum.Enum):
    ALPHA = "alpha"
    BETA = "beta"
    CENTRALIZED_G = "centralized_g"

    @classmethod
    def parse(cls, value) -> "RewardPrototype":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"a": "alpha", "rp_alpha": "alpha", "b": "beta", "rp_beta": "beta",
                   "g": "centralized_g", "centralized": "centralized_g"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(
                f"unknown reward prototype {value!r}; expected one of {[p.value for p in cls]}"
            ) from None


@dataclass
class RewardParams:
    mu_upper: float = 0.05
    mu_lower: float = 0.02
    zeta: float = 0.03
    sigma: float = 0.5
    target_v: float = 0.15
    target_theta: float = 0.0
    # diagonal weights on the (v, theta) discrepancy inside r_goal
    goal_weight: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        self.goal_weight = tuple(float(w) for w in self.goal_weight)
        for name in ("mu_upper", "mu_lower", "zeta", "sigma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"reward.{name} must be positive, got {getattr(self, name)}")
        if len(self.goal_weight) != 2 or any(w < 0 for w in self.goal_weight):
            raise ConfigError(f"reward.goal_weight needs 2 non-negative entries, got {self.goal_weight}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["goal_weight"] = list(self.goal_weight)
        return d


class RewardComponents(NamedTuple):
    r_int: float
    goal_p: float
    goal_i: float
    ap_p: float
    ap_i: float


def r_int(w: WorldState, params: RewardParams) -> float:
    return -abs(distance(w) - params.sigma)


def r_goal(s: RobotState, params: RewardParams) -> float:
    wv, wth = params.goal_weight
    dv = s.v - params.target_v
    dth = s.theta - params.target_theta
    return -math.sqrt(wv * dv * dv + wth * dth * dth)


def r_ap(a_v_now: float, a_v_prev: float, params: RewardParams) -> float:
    return params.mu_upper if abs(a_v_now - a_v_prev) <= params.zeta else -params.mu_lower


def components(w: WorldState, a_v_p: float, a_v_i: float, prev_a_v_p: float,
               prev_a_v_i: float, params: RewardParams) -> RewardComponents:
    return RewardComponents(
        r_int(w, params),
        r_goal(w.prosocial, params),
        r_goal(w.introspective, params),
        r_ap(a_v_p, prev_a_v_p, params),
        r_ap(a_v_i, prev_a_v_i, params),
    )


def combine(proto: RewardPrototype, c: RewardComponents):
    """(r_P, r_I) for the decentralized prototypes, the scalar r_g otherwise."""
    # alpha is built as beta + goal_p so the two prototypes differ by exactly that term
    beta_p = c.r_int + c.ap_p
    if proto is RewardPrototype.ALPHA:
        return beta_p + c.goal_p, c.goal_i + c.ap_i
    if proto is RewardPrototype.BETA:
        return beta_p, c.goal_i + c.ap_i
    return c.r_int + c.goal_p + c.goal_i + c.ap_p + c.ap_i


def compose(proto: RewardPrototype, w: WorldState, a_p, a_i, prev_a_p=None, prev_a_i=None,
            params: RewardParams | None = None):
    """Reward for one step from the post-step world and the actions taken.

    Actions may be decoded increments (anything with ``a_v``) or plain
    linear-velocity increments. A missing previous action counts as 0.
    """
    params = params or RewardParams()
    c = components(w, _a_v(a_p), _a_v(a_i), _a_v(prev_a_p), _a_v(prev_a_i), params)
    return combine(RewardPrototype.parse(proto), c)


def _a_v(a) -> float:
    if a is None:
        return 0.0
    return float(getattr(a, "a_v", a))
