import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicc.env import RobotState, WorldState, decode_action
from slicc.errors import ConfigError
from slicc.rewards import (RewardParams, RewardPrototype, combine, components, compose, r_ap,
                           r_goal, r_int)

P = RewardParams()


def world(dy=0.5, p=(0.15, 0.0), i=(0.15, 0.0)):
    return WorldState(RobotState(0.0, dy / 2, p[1], p[0]), RobotState(0.0, -dy / 2, i[1], i[0]), 1)


class TestComponents:
    def test_r_int_zero_at_sigma(self):
        assert r_int(world(0.5), P) == 0.0

    def test_r_int_value(self):
        # 3-4-5 triangle: distance 0.5 on a diagonal
        w = WorldState(RobotState(0.3, 0.4), RobotState(0.0, 0.0), 0)
        assert r_int(w, P) == 0.0
        assert r_int(world(0.75), P) == -0.25
        assert r_int(world(0.25), P) == -0.25

    def test_r_goal(self):
        assert r_goal(RobotState(v=0.15), P) == 0.0
        assert r_goal(RobotState(theta=0.4, v=0.15 + 0.3), P) == pytest.approx(-0.5, abs=1e-15)

    def test_r_goal_weights(self):
        p = RewardParams(goal_weight=(4.0, 0.0))
        assert r_goal(RobotState(theta=2.0, v=0.25), p) == pytest.approx(-0.2, abs=1e-15)

    def test_r_ap_boundary_exact(self):
        # 0.03 is not a dyadic rational, so build the boundary from values whose
        # difference is exactly zeta in float64
        p = RewardParams(zeta=0.03125)
        assert r_ap(0.03125, 0.0, p) == p.mu_upper
        assert r_ap(0.0, 0.03125, p) == p.mu_upper
        assert r_ap(0.03125 + 2 ** -20, 0.0, p) == -p.mu_lower
        assert r_ap(0.0, 0.0, P) == 0.05
        assert r_ap(0.04, 0.0, P) == -0.02

    def test_r_ap_on_action_table(self):
        # one notch of linear acceleration is smooth, a two-notch jump is not
        smooth = [r_ap(decode_action(a).a_v, decode_action(b).a_v, P)
                  for a in range(9) for b in range(9)]
        assert set(smooth) == {0.05, -0.02}
        assert r_ap(decode_action(3).a_v, decode_action(0).a_v, P) == 0.05
        assert r_ap(decode_action(4).a_v, decode_action(2).a_v, P) == -0.02

    @pytest.mark.parametrize("kw", [{"mu_upper": 0.0}, {"zeta": -1.0}, {"goal_weight": (1.0,)},
                                    {"goal_weight": (1.0, -1.0)}])
    def test_bad_params(self, kw):
        with pytest.raises(ConfigError):
            RewardParams(**kw)


class TestPrototypes:
    def test_parse(self):
        assert RewardPrototype.parse("RP_alpha") is RewardPrototype.ALPHA
        assert RewardPrototype.parse("beta") is RewardPrototype.BETA
        assert RewardPrototype.parse("centralized") is RewardPrototype.CENTRALIZED_G
        with pytest.raises(ConfigError):
            RewardPrototype.parse("gamma")

    def test_known_values(self):
        w = world(0.6, p=(0.25, 0.0), i=(0.15, 0.0))
        r_p, r_i = compose("alpha", w, decode_action(4), decode_action(0))
        assert r_p == pytest.approx(-0.1 - 0.02 - 0.1, abs=1e-15)
        assert r_i == pytest.approx(0.0 + 0.05, abs=1e-15)
        r_p, r_i = compose("beta", w, decode_action(4), decode_action(0))
        assert r_p == pytest.approx(-0.1 + -0.02, abs=1e-15)
        assert compose("centralized_g", w, 0.04, 0.0) == pytest.approx(-0.1 - 0.1 + 0.0 - 0.02 + 0.05)

    def test_previous_action(self):
        w = world()
        assert compose("beta", w, 0.04, 0.04, prev_a_p=0.04, prev_a_i=0.02)[0] == 0.05

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.1, 1.0), st.floats(-0.3, 0.3), st.floats(-1, 1), st.floats(-0.3, 0.3),
           st.floats(-1, 1), st.integers(0, 8), st.integers(0, 8), st.integers(0, 8), st.integers(0, 8))
    def test_identities(self, dy, vp, tp, vi, ti, ap, ai, pp, pi_):
        w = world(dy, (vp, tp), (vi, ti))
        c = components(w, decode_action(ap).a_v, decode_action(ai).a_v,
                       decode_action(pp).a_v, decode_action(pi_).a_v, P)
        a_p, a_i = combine(RewardPrototype.ALPHA, c)
        b_p, b_i = combine(RewardPrototype.BETA, c)
        g = combine(RewardPrototype.CENTRALIZED_G, c)
        # beta drops the prosocial goal term; the introspective reward is shared
        assert b_p + c.goal_p == a_p
        assert a_i == b_i
        assert g == pytest.approx(a_p + a_i, abs=1e-14)
        assert all(math.isfinite(x) for x in c)
        assert c.r_int <= 0 and c.goal_p <= 0 and c.goal_i <= 0

    def test_beta_alpha_identity_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            c = components(world(rng.uniform(0.2, 0.8), tuple(rng.uniform(-0.2, 0.2, 2)),
                                 tuple(rng.uniform(-0.2, 0.2, 2))),
                           0.02, 0.0, 0.0, 0.04, P)
            a_p, _ = combine(RewardPrototype.ALPHA, c)
            b_p, _ = combine(RewardPrototype.BETA, c)
            assert b_p + c.goal_p == a_p
