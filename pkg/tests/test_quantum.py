import io
import json
import math

import numpy as np
import pytest
from scipy import stats

from ccompress.probability import FiniteDist, relative_entropy
from ccompress.quantum import (QuantumEnsemble, Subspace, UnitVector, build_ensemble, build_net,
                               ensemble_values, gram_schmidt, haar_frames, haar_orthonormal,
                               haar_unitary, haar_vector, haar_vectors, incompressibility_trial,
                               mean_energy, net_round, orthopair_tail, overlap_tails, povm_value,
                               quantum_relative_entropy, rounding_gaps, subspace_energy,
                               write_tail_csv)
from ccompress.rng import stream


def naive_gram_schmidt(cols):
    out = []
    for v in cols.T:
        for u in out:
            v = v - np.vdot(u, v) * u
        out.append(v / np.linalg.norm(v))
    return np.array(out).T


class TestHaar:
    def test_norms(self):
        w = haar_vectors(7, 100, stream(1))
        assert np.allclose(np.linalg.norm(w, axis=1), 1, atol=1e-12)
        one = haar_vector(1, stream(2))
        assert abs(abs(one.components[0]) - 1) <= 1e-12

    def test_first_coordinate_mean(self):
        m, n = 16, 10_000
        w = haar_vectors(m, n, stream(3))
        x = np.abs(w[:, 0]) ** 2
        # |<w,e1>|^2 ~ Beta(1, m-1), variance (m-1)/(m^2 (m+1))
        sd = math.sqrt((m - 1) / (m ** 2 * (m + 1)) / n)
        assert abs(x.mean() - 1 / m) <= 3 * sd

    def test_gram_schmidt_matches_naive(self):
        rng = stream(4)
        cols = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        assert np.allclose(gram_schmidt(cols), naive_gram_schmidt(cols), atol=1e-12)

    def test_frames(self):
        f = haar_frames(8, 3, 5, stream(5))
        for b in f:
            assert np.allclose(b.conj().T @ b, np.eye(3), atol=1e-12)
        u = haar_unitary(5, stream(6))
        assert np.allclose(u @ u.conj().T, np.eye(5), atol=1e-12)
        with pytest.raises(ValueError):
            haar_orthonormal(2, 3, stream(1))

    def test_unitary_invariance_ks(self):
        m, n = 8, 4000
        rng = stream(7)
        u = haar_unitary(m, rng)
        a = np.abs(haar_vectors(m, n, rng)[:, 0])
        b = np.abs((haar_vectors(m, n, rng) @ u.T)[:, 0])
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_types(self):
        with pytest.raises(ValueError):
            UnitVector(np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            Subspace(np.array([[1.0, 1.0], [0.0, 1.0]]))
        s = Subspace.span(np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]]))
        assert s.d == 1


class TestMatrices:
    def test_relative_entropy_examples(self):
        rho = np.diag([0.5, 0.5, 0.0])
        assert quantum_relative_entropy(rho, rho) == pytest.approx(0, abs=1e-12)
        assert quantum_relative_entropy(np.diag([0.5, 0.5]), np.diag([1.0, 0.0])) == math.inf
        with pytest.raises(ValueError):
            quantum_relative_entropy(np.diag([1.5, -0.5]), np.eye(2) / 2)

    def test_commuting_matches_classical(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
            u = haar_unitary(5, rng)
            rho = u @ np.diag(p) @ u.conj().T
            sigma = u @ np.diag(q) @ u.conj().T
            want = relative_entropy(FiniteDist(range(5), p), FiniteDist(range(5), q))
            assert quantum_relative_entropy(rho, sigma) == pytest.approx(want, abs=1e-9)

    def test_povm_value(self):
        rng = stream(9)
        m = 6
        V = haar_orthonormal(m, 3, rng)
        M = V.projector()
        assert povm_value(M, Subspace(V.basis[:, :2])) == pytest.approx(1, abs=1e-12)
        perp = Subspace.span(np.eye(m) - M)
        assert povm_value(M, Subspace(perp.basis[:, :2])) == pytest.approx(0, abs=1e-12)
        w = haar_orthonormal(m, 1, rng)
        direct = np.vdot(w.basis[:, 0], M @ w.basis[:, 0]).real
        assert povm_value(M, w) == pytest.approx(direct, abs=1e-12)
        # monotone under inclusion
        W2 = haar_orthonormal(m, 3, rng)
        assert povm_value(M, Subspace(W2.basis[:, :1])) <= povm_value(M, W2) + 1e-12
        with pytest.raises(ValueError):
            povm_value(np.eye(3), w)


class TestEnsemble:
    def test_trivial_blocks(self):
        ens = build_ensemble(4, 0, 3, stream(1))
        for l in range(3):
            assert np.allclose(ens.state(l), np.eye(4) / 4, atol=1e-12)
            assert np.allclose(ens.projector(l), np.eye(4), atol=1e-12)
        assert ens.checks()["relative_entropy"] <= 1e-9

    def test_small(self):
        ens = build_ensemble(8, 1, 4, stream(2))
        rho = ens.average_state()
        for l in range(4):
            assert quantum_relative_entropy(ens.state(l), rho) == pytest.approx(1.0, abs=1e-6)
            assert np.trace(ens.projector(l) @ ens.state(l)).real == pytest.approx(1, abs=1e-9)
        assert ens.violations() == []

    def test_divisibility(self):
        with pytest.raises(ValueError):
            build_ensemble(6, 2, 4, stream(1))
        with pytest.raises(ValueError):
            build_ensemble(8, 2, 6, stream(1))

    def test_json_round_trip(self):
        ens = build_ensemble(4, 1, 4, stream(3))
        back = QuantumEnsemble.from_json(json.loads(json.dumps(ens.to_json())))
        assert np.array_equal(back.bases, ens.bases)


class TestTails:
    def test_overlap_tails(self):
        reps = overlap_tails(512, 2, 4, 10_000, seed=1)
        assert [r.event for r in reps] == ["overlap", "projection", "projected_overlap"]
        assert all(r.ok and r.hypotheses_ok for r in reps)

    def test_d1_thresholds_drop(self):
        r1 = overlap_tails(64, 1, 2, 4000, seed=2)
        r2 = overlap_tails(64, 2, 2, 4000, seed=2)
        for a, b in zip(r1, r2):
            assert a.empirical_freq <= b.empirical_freq

    def test_orthopair(self):
        r = orthopair_tail(512, 2, 4, 10_000, seed=3)
        assert r.ok
        with pytest.raises(ValueError):
            orthopair_tail(64, 8, 16, 10, seed=1, strict=True)

    def test_subspace_energy(self):
        r = subspace_energy(1024, 2, 4, 10_000, seed=4)
        assert r.ok and not r.hypotheses_ok

    def test_mean_energy(self):
        # E <w|P|w> = 1/l, Var = (l-1)/(l^2 (m+1))
        m, l, n = 256, 4, 10_000
        sd = math.sqrt((l - 1) / (l ** 2 * (m + 1)) / n)
        assert abs(mean_energy(m, l, n, seed=5) - 1 / l) <= 3 * sd

    def test_csv(self):
        buf = io.StringIO()
        write_tail_csv(overlap_tails(64, 1, 2, 100, seed=1), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("m,d,l,event") and len(lines) == 4


class TestIncompressibility:
    def test_full_space(self):
        ens = build_ensemble(8, 1, 4, stream(5))
        rep = incompressibility_trial(ens, 8, 2, seed=1)
        assert rep.fractions == (0.0, 0.0)

    def test_block_subspace(self):
        ens = build_ensemble(8, 1, 4, stream(5))
        vals = ensemble_values(ens, ens.subspace(0))
        assert vals[0] == pytest.approx(1, abs=1e-12)
        assert vals[1] == pytest.approx(0, abs=1e-12)  # the complementary block
        rep = incompressibility_trial(ens, 2, 3, seed=2, kind="ensemble")
        assert rep.fractions[0] < 1

    def test_values_match_povm(self):
        ens = build_ensemble(8, 1, 4, stream(6))
        W = haar_orthonormal(8, 2, stream(7))
        vals = ensemble_values(ens, W)
        assert np.allclose(vals, [povm_value(ens.projector(l), W) for l in range(4)], atol=1e-12)

    def test_bad_kind(self):
        ens = build_ensemble(4, 1, 2, stream(1))
        with pytest.raises(ValueError):
            incompressibility_trial(ens, 1, 1, seed=1, kind="nope")


class TestNets:
    def test_exact_net(self):
        W = haar_orthonormal(3, 2, stream(1))
        assert np.allclose(net_round(W, W.basis.T, 0.1).projector(), W.projector(), atol=1e-12)

    def test_random_net_rounding(self):
        delta = 0.5
        net = build_net(2, delta, stream(2))
        rng = stream(3)
        W = haar_orthonormal(2, 1, rng)
        Wh = net_round(W, net, delta)
        gaps = rounding_gaps(W, net, 100, rng)
        assert gaps.max() <= 2 * delta * math.sqrt(W.d) + 1e-12
        M = haar_orthonormal(2, 1, rng).projector()
        assert abs(povm_value(M, W) - povm_value(M, Wh)) <= 2 * delta * math.sqrt(W.d) + 1e-12

    def test_small_delta_converges(self):
        rng = stream(4)
        W = haar_orthonormal(2, 1, rng)
        M = haar_orthonormal(2, 1, rng).projector()
        w = W.basis[:, 0]
        perturbed = (w + 1e-6 * np.array([1, 1j])) / np.linalg.norm(w + 1e-6 * np.array([1, 1j]))
        Wh = net_round(W, perturbed[None, :], 1e-5)
        assert abs(povm_value(M, Wh) - povm_value(M, W)) <= 1e-5

    def test_errors(self):
        W = haar_orthonormal(2, 1, stream(1))
        with pytest.raises(ValueError):
            net_round(W, np.zeros((0, 2)), 0.5)
        with pytest.raises(ValueError):
            net_round(W, W.basis.T, 0)
        with pytest.raises(ValueError):
            build_net(4, 0.5, stream(1))
        far = np.array([[1.0, 0.0]]) if abs(W.basis[0, 0]) < 0.5 else np.array([[0.0, 1.0]])
        with pytest.raises(ValueError):
            net_round(W, far, 0.1)
