import math

import numpy as np
import pytest

from ccompress.compressor import compress_simultaneous, sample_support
from ccompress.compressor.simultaneous import support_sample_lengths, message_bit_bound
from ccompress.errors import BudgetExhausted, InfiniteDivergence, ProtocolError, ResourceGuard
from ccompress.generators import random_simul_protocol, uniform_inputs
from ccompress.probability import FiniteDist, relative_entropy
from ccompress.protocol import FunctionSpec, SimulProtocol
from ccompress.sampler import is_subsequence


def eq_simul(n, noise):
    """Both players announce their input (noisily); referee checks equality."""
    xs = tuple(range(n))
    rows = np.full((n, n), noise / (n - 1))
    np.fill_diagonal(rows, 1 - noise)
    ref = [[int(a == b) for b in range(n)] for a in range(n)]
    proto = SimulProtocol(xs, xs, xs, xs, rows, rows, ref)
    return proto, FunctionSpec.from_function(xs, xs, lambda x, y: int(x == y))


def exact_error_oracle(proto, f, x, y):
    err = 0.0
    ra = proto.alice[proto.x_range.index(x)]
    rb = proto.bob[proto.y_range.index(y)]
    for a in np.flatnonzero(ra):
        for b in np.flatnonzero(rb):
            if not f.accepts(x, y, proto.referee[a][b]):
                err += ra[a] * rb[b]
    return err


class TestSampleSupport:
    def test_trivial(self):
        q = FiniteDist((0, 1, 2), [0.2, 0.3, 0.5])
        smp = sample_support(q, [q], np.ones((1, 1, 3)), 0.5, seed=1)
        assert smp.ok and np.all(smp.deviation == 0)

    def test_indicator(self):
        q = FiniteDist((0, 1, 2), [0.2, 0.3, 0.5])
        p = FiniteDist((0, 1, 2), [0.6, 0.2, 0.2])
        s = np.zeros((1, 1, 3))
        s[0, 0, 0] = 1
        smp = sample_support(q, [p], s, 0.25, seed=2)
        mean = np.mean(smp.symbols[0] == 0)
        assert abs(mean - 0.6) <= 0.5 + 1e-12
        assert smp.deviation[0, 0] == pytest.approx(abs(mean - 0.6), abs=1e-12)

    def test_structure(self):
        rng = np.random.default_rng(3)
        q = FiniteDist((0, 1, 2, 3), [0.4, 0.3, 0.2, 0.1])
        ps = [FiniteDist.normalized(q.alphabet, rng.dirichlet(np.ones(4))) for _ in range(3)]
        s = rng.random((3, 2, 4))
        smp = sample_support(q, ps, s, 0.5, seed=4)
        want = support_sample_lengths([relative_entropy(p, q) for p in ps], 3, 0.5)
        assert list(smp.t_i) == want and smp.t == max(want)
        x = smp.x_seq(q)
        assert len(x) == smp.t
        for i in range(3):
            assert np.all(np.diff(smp.positions[i]) > 0)
            assert len(smp.positions[i]) == 0 or smp.positions[i][-1] < want[i]
            sub = [x[p] for p in smp.positions[i]]
            assert sub == [q.alphabet[c] for c in smp.symbols[i]]
            assert is_subsequence(sub, x)

    def test_lengths_formula(self):
        t = support_sample_lengths([0.0, 1.0], 2, 0.5)
        assert t == [math.ceil(8 * 2 ** 2 * 2 / (0.5 * 0.25)), math.ceil(8 * 2 ** 4 * 2 / (0.5 * 0.25))]

    def test_errors(self):
        q = FiniteDist((0, 1), [1.0, 0.0])
        p = FiniteDist((0, 1), [0.5, 0.5])
        with pytest.raises(InfiniteDivergence):
            sample_support(q, [p], np.ones((1, 1, 2)), 0.5, seed=1)
        with pytest.raises(ValueError):
            sample_support(p, [p], np.ones((1, 1, 2)), 1.0, seed=1)
        with pytest.raises(ValueError):
            sample_support(p, [p], np.ones((1, 2)), 0.5, seed=1)
        with pytest.raises(ResourceGuard):
            sample_support(p, [p], np.ones((1, 1, 2)), 0.01, seed=1)



    def test_budget(self):
        q = FiniteDist((0, 1), [0.5, 0.5])
        s = np.array([[[1.0, 0.0]]])
        with pytest.raises(BudgetExhausted):
            sample_support(q, [q], s, 0.5, seed=1, max_retries=0)


class TestCompressSimultaneous:
    def test_single_message(self):
        xs = (0, 1, 2)
        proto = SimulProtocol(xs, xs, ("m",), ("n",), np.ones((3, 1)), np.ones((3, 1)), [[1]])
        f = FunctionSpec.from_function(xs, xs, lambda x, y: 1)
        rep = compress_simultaneous(proto, f, 0.25, seed=1)
        assert rep.good_A == set(xs) and rep.good_B == set(xs)
        assert rep.error_on_good == 0.0 and rep.violations() == []

    def test_input_independent(self):
        proto, f = random_simul_protocol(5, 4, 4, 3)
        blind = SimulProtocol(proto.x_range, proto.y_range, proto.a_msgs, proto.b_msgs,
                              np.tile(proto.alice[0], (4, 1)), np.tile(proto.bob[0], (4, 1)),
                              proto.referee)
        rep = compress_simultaneous(blind, f, 0.25, seed=2)
        assert rep.a == pytest.approx(0, abs=1e-12) and rep.b == pytest.approx(0, abs=1e-12)
        assert rep.alice_bound == pytest.approx(1 / 0.25 + math.log2(3) + math.log2(1 / (0.0625 * 0.75)) + 4)
        assert rep.violations() == []

    def test_eq_instance_exact(self):
        proto, f = eq_simul(4, 0.1)
        rep = compress_simultaneous(proto, f, 0.25, seed=3)
        assert rep.violations() == []
        new = rep.new_protocol
        worst = max(exact_error_oracle(new, f, x, y) for x in rep.good_A for y in rep.good_B)
        assert rep.error_on_good == pytest.approx(worst, abs=1e-12)
        assert worst <= rep.delta + 4 * 0.25 + 1e-9
        assert rep.alice_bits <= rep.alice_bound and rep.bob_bits <= rep.bob_bound

    def test_random_instances(self):
        for seed in range(4):
            proto, f = random_simul_protocol(seed, 6, 5, 4, noise=0.7)
            rep = compress_simultaneous(proto, f, 0.25, seed=seed)
            assert rep.violations() == []
            assert 3 * len(rep.good_A) >= 2 * 6 and 3 * len(rep.good_B) >= 2 * 5
            assert rep.alice_bits == math.ceil(math.log2(rep.t_A))

    def test_bound_formula(self):
        assert message_bit_bound(1.0, 3, 0.5) == pytest.approx(8 + 2 + math.log2(8) + 4)

    def test_deterministic(self):
        proto, f = random_simul_protocol(8, 4, 4, 3)
        a = compress_simultaneous(proto, f, 0.25, seed=9).to_json()
        b = compress_simultaneous(proto, f, 0.25, seed=9).to_json()
        assert a == b

    def test_uniform_required(self):
        proto, f = random_simul_protocol(8, 2, 2, 2)
        mu = uniform_inputs(range(2), range(2))
        compress_simultaneous(proto, f, 0.25, seed=1, mu=mu)
        skew = type(mu)(mu.axes, mu.ranges, np.array([[0.4, 0.1], [0.25, 0.25]]))
        with pytest.raises(ProtocolError):
            compress_simultaneous(proto, f, 0.25, seed=1, mu=skew)
