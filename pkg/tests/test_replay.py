import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicc.errors import InputError, InsufficientDataError
from slicc.replay import JointTransition, ReplayBuffer, stack


def tr(k, terminal=False):
    k = float(k)
    return JointTransition(np.full(8, k), int(k) % 9, k, np.full(8, k + 0.5),
                           np.full(4, -k), (int(k) + 1) % 9, -k, np.full(4, -k - 0.5), terminal)


def same(a, b):
    return all(np.array_equal(getattr(a, f), getattr(b, f)) for f in a.__dataclass_fields__)


class TestPush:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(2)
        for k in range(3):
            buf.push(tr(k))
        assert len(buf) == 2
        assert [t.r_p for t in buf] == [1.0, 2.0]

    def test_count(self):
        buf = ReplayBuffer(10)
        for k in range(7):
            buf.push(tr(k))
        assert len(buf) == 7

    def test_round_trip_bits(self):
        rng = np.random.default_rng(0)
        t = JointTransition(rng.normal(size=8), 4, float(rng.normal()), rng.normal(size=8),
                            rng.normal(size=4), 7, 1e-300, rng.normal(size=4), True)
        buf = ReplayBuffer(3).push(t)
        got = buf[0]
        assert same(got, t)
        assert got.o_p.tobytes() == t.o_p.tobytes() and got.r_i == 1e-300

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 40))
    def test_survivors_in_order(self, cap, n):
        buf = ReplayBuffer(cap)
        for k in range(n):
            buf.push(tr(k))
        assert len(buf) == min(n, cap)
        assert [t.r_p for t in buf] == [float(k) for k in range(max(0, n - cap), n)]

    @pytest.mark.parametrize("kw", [{"a_p": 9}, {"a_i": -1}, {"o_p": np.zeros(7)},
                                    {"o_i_next": np.array([0, 0, np.nan, 0])}])
    def test_invalid_transition(self, kw):
        fields = dict(o_p=np.zeros(8), a_p=0, r_p=0.0, o_p_next=np.zeros(8), o_i=np.zeros(4),
                      a_i=0, r_i=0.0, o_i_next=np.zeros(4), terminal=False)
        fields.update(kw)
        with pytest.raises(InputError):
            JointTransition(**fields)

    def test_bad_capacity(self):
        with pytest.raises(InputError):
            ReplayBuffer(0)


class TestSample:
    def test_insufficient(self):
        buf = ReplayBuffer(100)
        for k in range(63):
            buf.push(tr(k))
        with pytest.raises(InsufficientDataError):
            buf.sample(np.random.default_rng(0))
        buf.push(tr(63))
        assert len(buf.sample(np.random.default_rng(0))) == 64

    def test_full_batch_is_permutation(self):
        buf = ReplayBuffer(20)
        for k in range(30):
            buf.push(tr(k))
        got = sorted(t.r_p for t in buf.sample(np.random.default_rng(3), 20))
        assert got == [float(k) for k in range(10, 30)]

    def test_no_duplicates(self):
        buf = ReplayBuffer(70)
        for k in range(70):
            buf.push(tr(k))
        rng = np.random.default_rng(1)
        for _ in range(50):
            idx = buf.sample_indices(rng, 64)
            assert len(set(idx.tolist())) == 64

    def test_seeded(self):
        buf = ReplayBuffer(50)
        for k in range(50):
            buf.push(tr(k))
        a = buf.sample_indices(np.random.default_rng(9), 16)
        b = buf.sample_indices(np.random.default_rng(9), 16)
        assert np.array_equal(a, b)

    def test_arrays_match_objects(self):
        buf = ReplayBuffer(15)
        for k in range(40):
            buf.push(tr(k, terminal=k % 3 == 0))
        cols = buf.sample_arrays(np.random.default_rng(4), 8)
        ref = stack(buf.sample(np.random.default_rng(4), 8))
        assert cols.keys() == ref.keys()
        for key in ref:
            assert np.array_equal(cols[key], ref[key]), key

    def test_uniformity(self):
        buf = ReplayBuffer(10)
        for k in range(10):
            buf.push(tr(k))
        rng = np.random.default_rng(2024)
        counts = np.zeros(10)
        draws = 20000
        for _ in range(draws):
            counts[buf.sample_indices(rng, 3)] += 1
        freq = counts / (3 * draws)
        assert np.all(np.abs(freq - 0.1) <= 0.05 * 0.1), freq
