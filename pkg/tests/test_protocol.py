import itertools
import json
import math

import numpy as np
import pytest

from ccompress.errors import ProtocolError, ResourceGuard
from ccompress.generators import random_simul_protocol, random_tree_protocol, uniform_inputs
from ccompress.probability import (FiniteDist, JointDist, PartitionedInput, entropy,
                                   mutual_information)
from ccompress.protocol import (ALICE, BOB, FunctionSpec, ProtocolTree, Round, SimulProtocol,
                                brute_force_C, communication_cost, conditional_information_cost,
                                error_table, evaluate_error, information_cost, load_protocol,
                                tensor_mu, tensor_protocol, transcript_distribution)

from conftest import rand_dist


def eq_function(n):
    return FunctionSpec.from_function(range(n), range(n), lambda x, y: int(x == y))


def reveal_x(n, noise=0.0):
    """Alice sends x (correct w.p. 1-noise), Bob announces equality of what he heard."""
    xs = tuple(range(n))
    r1 = Round(ALICE, xs)
    r2 = Round(BOB, (0, 1))
    policy = {}
    for x in xs:
        w = np.full(n, noise / max(n - 1, 1))
        w[x] = 1 - noise if n > 1 else 1.0
        policy[(0, x, ())] = FiniteDist(xs, w)
    for y in xs:
        for m in xs:
            policy[(1, y, (m,))] = FiniteDist.point((0, 1), int(m == y))
    output = {(m, b): b for m in xs for b in (0, 1)}
    return ProtocolTree(xs, xs, (r1, r2), policy, output)


def path_product_oracle(proto, x, y):
    out = {}
    for t in itertools.product(*(r.alphabet for r in proto.rounds)):
        p = 1.0
        for i, s in enumerate(t):
            law = proto.message_law(i, x if proto.rounds[i].owner == ALICE else y, t[:i])
            p *= law[s]
        if p > 0:
            out[t] = p
    return out


class TestFunctionSpec:
    def test_total(self):
        with pytest.raises(ProtocolError):
            FunctionSpec((0,), (0, 1), (0,), {(0, 0): {0}})

    def test_json_round_trip(self):
        f = FunctionSpec((0, 1), ("a",), (0, 1), {(0, "a"): {0, 1}, (1, "a"): {1}})
        g = FunctionSpec.from_json(json.loads(json.dumps(f.to_json())))
        assert g.table == {k: frozenset(v) for k, v in f.table.items()}
        assert g.to_json() == f.to_json()


class TestTranscripts:
    def test_deterministic_point_mass(self):
        d = transcript_distribution(reveal_x(3), 1, 2)
        assert d.alphabet == ((1, 0),) and d.probs[0] == 1.0

    def test_uniform_coin(self):
        r = Round(ALICE, ("h", "t"))
        proto = ProtocolTree((0,), (0,), (r,), {(0, 0, ()): FiniteDist.uniform(("h", "t"))},
                             {("h",): 0, ("t",): 1})
        assert np.allclose(transcript_distribution(proto, 0, 0).probs, 0.5)

    def test_against_path_oracle(self):
        for seed in range(20):
            proto, _ = random_tree_protocol(seed, 3, 2, 3, 2)
            for x in proto.x_range:
                for y in proto.y_range:
                    d = transcript_distribution(proto, x, y)
                    want = path_product_oracle(proto, x, y)
                    assert set(d.alphabet) == set(want)
                    for t, p in want.items():
                        assert abs(d[t] - p) <= 1e-12
                    assert abs(d.probs.sum() - 1) <= 1e-12

    def test_out_of_range(self):
        with pytest.raises(ProtocolError):
            transcript_distribution(reveal_x(2), 5, 0)

    def test_missing_output(self):
        proto = ProtocolTree((0,), (0,), (Round(ALICE, (0,)),),
                             {(0, 0, ()): FiniteDist((0,), [1.0])}, {})
        with pytest.raises(ProtocolError, match="no output"):
            proto.transcript_table


class TestError:
    def test_trivial(self):
        f = eq_function(3)
        mu = uniform_inputs(range(3), range(3))
        rep = evaluate_error(reveal_x(3), f, mu)
        assert rep.worst_case == 0 and rep.distributional == 0
        always_wrong = FunctionSpec.from_function(range(3), range(3), lambda x, y: 2)
        f2 = FunctionSpec(f.x_range, f.y_range, (0, 1, 2), always_wrong.table)
        rep = evaluate_error(reveal_x(3), f2, mu)
        assert rep.worst_case == 1 and rep.distributional == 1

    def test_enumeration_oracle(self):
        rng = np.random.default_rng(4)
        for seed in range(20):
            proto, f = random_tree_protocol(seed, 3, 3, 2, 3)
            mu = JointDist(("x", "y"), (proto.x_range, proto.y_range),
                           rng.dirichlet(np.ones(9)).reshape(3, 3))
            rep = evaluate_error(proto, f, mu)
            tot = 0.0
            for x in proto.x_range:
                for y in proto.y_range:
                    e = sum(p for t, p in path_product_oracle(proto, x, y).items()
                            if not f.accepts(x, y, proto.answer(t)))
                    assert abs(rep.per_input[(x, y)] - e) <= 1e-12
                    tot += mu.probs[x, y] * e
            assert abs(rep.distributional - tot) <= 1e-12
            assert rep.worst_case == max(rep.per_input.values())

    def test_noisy_eq(self):
        err = error_table(reveal_x(4, 0.1), eq_function(4))
        # wrong only when the noisy x lands on y (x != y) or misses (x == y)
        assert np.allclose(np.diag(err), 0.1)
        assert np.allclose(err[~np.eye(4, dtype=bool)], 0.1 / 3)

    def test_range_mismatch(self):
        with pytest.raises(ProtocolError):
            evaluate_error(reveal_x(3), eq_function(2), uniform_inputs(range(2), range(2)))

    def test_relation(self):
        f = FunctionSpec((0, 1), (0, 1), (0, 1), {k: {0, 1} for k in itertools.product((0, 1), repeat=2)})
        assert error_table(reveal_x(2, 0.5), f).max() == 0


class TestInformationCost:
    def test_constant_messages(self):
        proto, _ = random_tree_protocol(1, 3, 3, 2, 2, noise=1.0)
        # full-noise rows are still input dependent, so build an input-blind one
        rounds = proto.rounds
        policy = {(i, u, pre): FiniteDist.uniform(rounds[i].alphabet)
                  for (i, u, pre) in proto.policy}
        blind = ProtocolTree(proto.x_range, proto.y_range, rounds, policy, proto.output)
        assert information_cost(blind, uniform_inputs(range(3), range(3))) == \
            pytest.approx(0, abs=1e-12)

    def test_full_revelation(self):
        mu = JointDist.product(("x", FiniteDist.uniform(range(4))), ("y", FiniteDist.point((0, 1, 2, 3), 0)))
        assert information_cost(reveal_x(4), mu) == pytest.approx(2.0, abs=1e-12)

    def test_joint_table_oracle_and_length_bound(self):
        rng = np.random.default_rng(6)
        for seed in range(30):
            proto, _ = random_tree_protocol(seed, 3, 3, 2, 3)
            mu = JointDist(("x", "y"), (proto.x_range, proto.y_range),
                           rng.dirichlet(np.ones(9)).reshape(3, 3))
            ts = list(itertools.product(*(r.alphabet for r in proto.rounds)))
            arr = np.zeros((3, 3, len(ts)))
            for x in range(3):
                for y in range(3):
                    pt = path_product_oracle(proto, x, y)
                    arr[x, y] = [mu.probs[x, y] * pt.get(t, 0.0) for t in ts]
            pxy = arr.sum(axis=2)
            pt = arr.sum(axis=(0, 1))
            mask = arr > 0
            want = (arr[mask] * np.log2(arr[mask] / (pxy[:, :, None] * pt[None, None, :])[mask])).sum()
            ic = information_cost(proto, mu)
            assert ic == pytest.approx(want, abs=1e-9)
            assert ic <= communication_cost(proto) + 1e-12

    def test_simul_is_average_divergence(self):
        proto, _ = random_simul_protocol(3, 5, 4, 3)
        mu_x = FiniteDist.uniform(proto.x_range)
        J = proto.message_joint(mu_x)
        # I(X:M) = E_x S(P_x || P)
        pm = J.probs.sum(axis=0)
        want = sum(mu_x.probs[i] * sum(r * math.log2(r / pm[j]) for j, r in
                                       enumerate(proto.alice[i]) if r > 0)
                   for i in range(5))
        assert mutual_information(J, "in", "m") == pytest.approx(want, abs=1e-9)

    def test_conditional_cost(self):
        proto, _ = random_tree_protocol(5, 2, 2, 2, 2)
        comps = {}
        rng = np.random.default_rng(7)
        for d in range(3):
            comps[d] = JointDist.product(("x", rand_dist(rng, 2)), ("y", rand_dist(rng, 2)))
        kappa = FiniteDist((0, 1, 2), [0.2, 0.5, 0.3])
        pm = PartitionedInput.from_components(kappa, comps)
        cic = conditional_information_cost(proto, pm)
        ic = information_cost(proto, pm.mu)
        assert cic >= ic - entropy(kappa) - 1e-9
        point = PartitionedInput.from_components(FiniteDist.point((0, 1, 2), 1), comps)
        assert cic != 0
        assert conditional_information_cost(proto, point) == \
            pytest.approx(information_cost(proto, comps[1]), abs=1e-12)
        prod = comps[0]
        assert conditional_information_cost(proto, PartitionedInput.trivial(prod)) == \
            pytest.approx(information_cost(proto, prod), abs=1e-12)


class TestCosts:
    def test_fixed(self):
        proto, _ = random_tree_protocol(1, 2, 2, 2, 2)
        assert communication_cost(proto) == 2
        r = Round(ALICE, tuple(range(8)))
        one = ProtocolTree((0,), (0,), (r,), {(0, 0, ()): FiniteDist.uniform(range(8))},
                           {(i,): 0 for i in range(8)})
        assert communication_cost(one) == 3

    def test_variable_encoding(self):
        proto = reveal_x(4, 0.1)
        enc = [{0: "0", 1: "10", 2: "110", 3: "111"}, {0: "0", 1: "1"}]
        # tree-walk oracle: longest reachable codeword path
        want = max(len(enc[0][m]) + len(enc[1][b]) for x in range(4) for y in range(4)
                   for (m, b) in path_product_oracle(proto, x, y))
        assert communication_cost(proto, enc) == want == 4


class TestTensor:
    def test_identity(self):
        proto = reveal_x(2, 0.2)
        assert tensor_protocol(proto, 1) is proto

    def test_doubling(self):
        for seed in range(5):
            proto, _ = random_tree_protocol(seed, 2, 2, 2, 2)
            mu = uniform_inputs(range(2), range(2))
            t2 = tensor_protocol(proto, 2)
            assert communication_cost(t2) == 2 * communication_cost(proto)
            assert information_cost(t2, tensor_mu(mu, 2)) == \
                pytest.approx(2 * information_cost(proto, mu), abs=1e-9)

    def test_guard(self):
        proto, _ = random_tree_protocol(0, 4, 4, 3, 4)
        with pytest.raises(ResourceGuard):
            tensor_protocol(proto, 3)
        with pytest.raises(ValueError):
            tensor_protocol(proto, 0)


class TestBruteForce:
    def test_constant(self):
        f = FunctionSpec.from_function(range(3), range(3), lambda x, y: 7)
        assert brute_force_C(f, uniform_inputs(range(3), range(3)), 0.0, 2, 2) == 0

    def test_eq_one_bit(self):
        f, mu = eq_function(2), uniform_inputs(range(2), range(2))
        with pytest.raises(ValueError):
            brute_force_C(f, mu, 0.0, 1, 1)
        assert brute_force_C(f, mu, 0.0, 2, 1) == 2
        assert brute_force_C(f, mu, 1.0, 1, 1) == 0

    def test_eq_four(self):
        f, mu = eq_function(4), uniform_inputs(range(4), range(4))
        assert brute_force_C(f, mu, 0.0, 2, 2) == 3
        assert brute_force_C(f, mu, 0.1, 2, 2) == 3
        # answering "ne" always errs with probability 1/4
        assert brute_force_C(f, mu, 0.25, 2, 2) == 0

    def test_one_round_x_only(self):
        # f depends on x alone: one round suffices with ceil(log2 #values) bits
        f = FunctionSpec.from_function(range(4), range(2), lambda x, y: x % 3)
        assert brute_force_C(f, uniform_inputs(range(4), range(2)), 0.0, 1, 2) == 2

    def test_guard(self):
        f = eq_function(5)
        with pytest.raises(ResourceGuard):
            brute_force_C(f, uniform_inputs(range(5), range(5)), 0.0, 1, 1)


class TestSerialization:
    def test_tree_round_trip(self):
        proto, f = random_tree_protocol(3, 3, 2, 2, 3)
        obj = json.loads(json.dumps(proto.to_json()))
        back = load_protocol(obj)
        mu = uniform_inputs(range(3), range(2))
        assert information_cost(back, mu) == information_cost(proto, mu)
        assert np.array_equal(error_table(back, f), error_table(proto, f))

    def test_simul_round_trip(self):
        proto, f = random_simul_protocol(3, 4, 4, 3)
        back = load_protocol(json.loads(json.dumps(proto.to_json())))
        assert isinstance(back, SimulProtocol)
        assert np.array_equal(back.error_table(f), proto.error_table(f))

    def test_bad_type(self):
        with pytest.raises(ProtocolError):
            load_protocol({"type": "quantum"})

    def test_private_coin_structure(self):
        # Pr[m_i | prefix, x, y] recomputed from leaf probabilities is blind to the silent input
        proto, _ = random_tree_protocol(2, 3, 3, 3, 2)
        ts, arr = proto.transcript_table
        for i, r in enumerate(proto.rounds):
            for pre in itertools.product(*(rr.alphabet for rr in proto.rounds[:i])):
                for own in range(3):
                    laws = set()
                    for other in range(3):
                        x, y = (own, other) if r.owner == ALICE else (other, own)
                        tot = sum(arr[x, y, n] for n, t in enumerate(ts) if t[:i] == pre)
                        law = tuple(round(sum(arr[x, y, n] for n, t in enumerate(ts)
                                              if t[:i + 1] == pre + (s,)) / tot, 12)
                                    for s in r.alphabet)
                        laws.add(law)
                    assert len(laws) == 1
