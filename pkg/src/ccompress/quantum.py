"""Desk-scale Monte-Carlo checks of quantum incompressibility.

Random unit vectors and frames are Haar distributed (normalized complex
Gaussians, then Gram-Schmidt). The random-basis ensemble splits each of
n / 2^k random bases of C^m into 2^k blocks; block j of basis i gives the
state (2^k/m) * sum |v><v| and the projector onto its span.

Tail experiments fix V as the span of the first m/l coordinates, which loses
nothing by unitary invariance, and report empirical frequencies next to the
analytic bounds with a one-sided Hoeffding band.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .probability import mc_band

NORM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class UnitVector:
    components: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.components, dtype=complex)
        if v.ndim != 1 or abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
            raise ValueError("unit vector must be 1-d with norm 1")
        object.__setattr__(self, "components", v)

    @property
    def m(self) -> int:
        return self.components.size


@dataclass(frozen=True, eq=False)
class Subspace:
    """Span of the orthonormal columns of ``basis`` (shape m x d)."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.ndim != 2 or b.shape[1] > b.shape[0]:
            raise ValueError("basis must be an m x d matrix with d <= m")
        gram = b.conj().T @ b
        if np.abs(gram - np.eye(b.shape[1])).max() > NORM_TOL:
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", b)

    @property
    def m(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    @classmethod
    def span(cls, vectors: np.ndarray, tol: float = 1e-10) -> "Subspace":
        """Orthonormal basis of the column span (rank-revealing via SVD)."""
        u, s, _ = np.linalg.svd(np.asarray(vectors, dtype=complex), full_matrices=False)
        rank = int((s > tol * max(1.0, s[0] if s.size else 0.0)).sum())
        return cls(u[:, :rank])


# Haar sampling.

def _gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def haar_vectors(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent Haar unit vectors as rows of an (n, m) array."""
    if m < 1:
        raise ValueError("m must be >= 1")
    g = _gaussian(rng, (n, m))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0):  # probability zero
        bad = norms == 0
        g[bad] = _gaussian(rng, (int(bad.sum()), m))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


def haar_vector(m: int, rng: np.random.Generator) -> UnitVector:
    return UnitVector(haar_vectors(m, 1, rng)[0])


def gram_schmidt(cols: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on the columns of (..., m, d) stacks.

    Computed as a QR factorization whose R has a positive real diagonal,
    which is exactly the Gram-Schmidt output.
    """
    q, r = np.linalg.qr(np.asarray(cols, dtype=complex))
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    if np.any(np.abs(diag) < 1e-12):
        raise np.linalg.LinAlgError("degenerate draw")
    return q * (diag / np.abs(diag))[..., None, :]


def haar_frames(m: int, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n Haar-random orthonormal d-frames, shape (n, m, d)."""
    if not 1 <= d <= m:
        raise ValueError("need 1 <= d <= m")
    while True:
        cols = np.transpose(haar_vectors(m, n * d, rng).reshape(n, d, m), (0, 2, 1))
        try:
            return gram_schmidt(cols)
        except np.linalg.LinAlgError:
            continue


def haar_orthonormal(m: int, d: int, rng: np.random.Generator) -> Subspace:
    return Subspace(haar_frames(m, d, 1, rng)[0])


def haar_unitary(m: int, rng: np.random.Generator) -> np.ndarray:
    return haar_frames(m, m, 1, rng)[0]


# Matrices.

def _check_psd(a: np.ndarray, name: str, tol: float = 1e-9):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.abs(a - a.conj().T).max() > tol:
        raise ValueError(f"{name} is not Hermitian")
    w = np.linalg.eigvalsh(a)
    if w.min() < -tol:
        raise ValueError(f"{name} is not positive semidefinite")
    return w


def quantum_relative_entropy(rho: np.ndarray, sigma: np.ndarray, tol: float = 1e-10) -> float:
    """Tr rho (log rho - log sigma) in bits; inf when supp rho escapes supp sigma."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError("dimension mismatch")
    _check_psd(rho, "rho")
    _check_psd(sigma, "sigma")
    pr, ur = np.linalg.eigh(rho)
    ps, us = np.linalg.eigh(sigma)
    pr = np.clip(pr, 0.0, None)
    ps = np.clip(ps, 0.0, None)
    # overlap[i, j] = |<r_i|s_j>|^2
    overlap = np.abs(ur.conj().T @ us) ** 2
    live = pr > tol
    null = ps <= tol
    if np.any(overlap[np.ix_(live, null)] * pr[live, None] > tol):
        return math.inf
    self_term = float(np.sum(pr[live] * np.log2(pr[live])))
    log_s = np.where(null, 0.0, np.log2(np.where(null, 1.0, ps)))
    cross = float(pr[live] @ (overlap[live] @ log_s))
    return max(0.0, self_term - cross)


def povm_value(M: np.ndarray, W: Subspace) -> float:
    """max over unit w in W of <w|M|w>."""
    M = np.asarray(M, dtype=complex)
    if M.shape != (W.m, W.m):
        raise ValueError("dimension mismatch")
    B = W.basis
    return float(np.linalg.eigvalsh(B.conj().T @ M @ B)[-1])


# Random-basis ensemble.

@dataclass(frozen=True, eq=False)
class QuantumEnsemble:
    m: int
    n: int
    k_exp: int
    bases: np.ndarray = field(repr=False)  # (n / 2^k, m, m) unitary matrices

    @property
    def blocks(self) -> int:
        return 2 ** self.k_exp

    @property
    def block_size(self) -> int:
        return self.m // self.blocks

    def block_basis(self, l: int) -> np.ndarray:
        """Orthonormal basis (m x m/2^k) of V_l, with l = i * 2^k + j."""
        i, j = divmod(l, self.blocks)
        b = self.block_size
        return self.bases[i][:, j * b:(j + 1) * b]

    def subspace(self, l: int) -> Subspace:
        return Subspace(self.block_basis(l))

    def projector(self, l: int) -> np.ndarray:
        b = self.block_basis(l)
        return b @ b.conj().T

    def state(self, l: int) -> np.ndarray:
        return self.projector(l) * (self.blocks / self.m)

    @property
    def states(self) -> list:
        return [self.state(l) for l in range(self.n)]

    @property
    def projectors(self) -> list:
        return [self.projector(l) for l in range(self.n)]

    def average_state(self) -> np.ndarray:
        return sum(self.states) / self.n

    def checks(self) -> dict:
        """Worst deviations of the ensemble identities."""
        avg = self.average_state()
        eye = np.eye(self.m) / self.m
        trace_dev = herm_dev = psd_dev = proj_dev = 0.0
        tr_m_rho = ent_dev = 0.0
        for l in range(self.n):
            rho, M = self.state(l), self.projector(l)
            w = np.linalg.eigvalsh(rho)
            trace_dev = max(trace_dev, abs(np.trace(rho).real - 1.0))
            herm_dev = max(herm_dev, float(np.abs(rho - rho.conj().T).max()))
            psd_dev = max(psd_dev, float(max(0.0, -w.min())))
            proj_dev = max(proj_dev, float(np.abs(M @ M - M).max()))
            tr_m_rho = max(tr_m_rho, abs(np.trace(M @ rho).real - 1.0))
            ent_dev = max(ent_dev, abs(quantum_relative_entropy(rho, avg) - self.k_exp))
        return {"trace": trace_dev, "hermitian": herm_dev, "psd": psd_dev,
                "projector": proj_dev, "tr_M_rho": tr_m_rho,
                "mean_state": float(np.abs(avg - eye).max()), "relative_entropy": ent_dev}

    def violations(self) -> list[str]:
        c = self.checks()
        tol = {"trace": 1e-9, "hermitian": 1e-9, "psd": 1e-9, "projector": 1e-9,
               "tr_M_rho": 1e-9, "mean_state": 1e-8, "relative_entropy": 1e-6}
        return [k for k, v in c.items() if v > tol[k]]

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n, "k_exp": self.k_exp,
                "bases": [[[[float(z.real), float(z.imag)] for z in row] for row in b]
                          for b in self.bases]}

    @classmethod
    def from_json(cls, obj) -> "QuantumEnsemble":
        arr = np.array(obj["bases"], dtype=float)
        return cls(int(obj["m"]), int(obj["n"]), int(obj["k_exp"]), arr[..., 0] + 1j * arr[..., 1])


def build_ensemble(m: int, k_exp: int, n: int, rng: np.random.Generator,
                   verify: bool = True) -> QuantumEnsemble:
    if k_exp < 0:
        raise ValueError("k_exp must be >= 0")
    blocks = 2 ** k_exp
    if m % blocks or n % blocks or n < 1:
        raise ValueError(f"2^k_exp = {blocks} must divide both m = {m} and n = {n}")
    bases = np.stack([haar_unitary(m, rng) for _ in range(n // blocks)])
    ens = QuantumEnsemble(m, n, k_exp, bases)
    if verify:
        bad = ens.violations()
        if bad:
            raise ArithmeticError(f"ensemble identities failed: {bad}")
    return ens


# Tail experiments.

@dataclass(frozen=True)
class TailReport:
    m: int
    d: int
    l: int
    event: str
    analytic_bound: float
    empirical_freq: float
    band: float
    trials: int
    seed: int
    hypotheses_ok: bool

    @property
    def ok(self) -> bool:
        return self.empirical_freq <= self.analytic_bound + self.band

    def row(self) -> dict:
        return {"m": self.m, "d": self.d, "l": self.l, "event": self.event,
                "analytic_bound": self.analytic_bound, "empirical_freq": self.empirical_freq,
                "band": self.band, "trials": self.trials, "seed": self.seed,
                "hypotheses_ok": self.hypotheses_ok}


CSV_COLUMNS = ["m", "d", "l", "event", "analytic_bound", "empirical_freq", "band", "trials",
               "seed", "hypotheses_ok"]


def _proposition_hypotheses(m, d, l) -> bool:
    return d < math.sqrt(m / l) and l < m / 20


def _check_params(m, d, l, trials):
    if m < 1 or d < 1 or l < 1 or trials < 1:
        raise ValueError("m, d, l and trials must be positive")
    if m % l:
        raise ValueError("l must divide m")


def _rng_for(seed: int, tag: int):
    from .rng import stream
    return stream(seed, 5, tag)


def overlap_tails(m: int, d: int, l: int, trials: int, seed: int,
                  strict: bool = False) -> list[TailReport]:
    """Independent pair (w, w'): overlap, projection norm, projected overlap."""
    _check_params(m, d, l, trials)
    hyp = _proposition_hypotheses(m, d, l)
    if strict and not hyp:
        raise ValueError("need d < sqrt(m/l) and l < m/20")
    rng = _rng_for(seed, 1)
    w = haar_vectors(m, trials, rng)
    w2 = haar_vectors(m, trials, rng)
    v = m // l
    overlap = np.abs(np.einsum("tm,tm->t", w.conj(), w2))
    proj = np.linalg.norm(w[:, :v], axis=1)
    proj2 = np.linalg.norm(w2[:, :v], axis=1)
    cross = np.abs(np.einsum("tm,tm->t", w[:, :v].conj(), w2[:, :v]))
    band = mc_band(trials)
    mk = lambda ev, bound, freq: TailReport(m, d, l, ev, bound, float(freq), band, trials,
                                            seed, hyp)
    return [
        mk("overlap", 2 * math.exp(-m / (100 * d ** 4)),
           np.mean(overlap >= 1 / (5 * d ** 2))),
        mk("projection", 2 * math.exp(-m / (4 * l)),
           max(np.mean(proj >= 2 / math.sqrt(l)), np.mean(proj2 >= 2 / math.sqrt(l)))),
        mk("projected_overlap", 6 * math.exp(-m / (100 * d ** 4 * l)),
           np.mean(cross >= 4 / (5 * d ** 2 * l))),
    ]


def orthopair_tail(m: int, d: int, l: int, trials: int, seed: int,
                   strict: bool = False) -> TailReport:
    """Random orthonormal pair built as x, normalize(y - <x,y> x)."""
    _check_params(m, d, l, trials)
    hyp = _proposition_hypotheses(m, d, l)
    if strict and not hyp:
        raise ValueError("need d < sqrt(m/l) and l < m/20")
    rng = _rng_for(seed, 2)
    x = haar_vectors(m, trials, rng)
    y = haar_vectors(m, trials, rng)
    w2 = y - np.einsum("tm,tm->t", x.conj(), y)[:, None] * x
    w2 /= np.linalg.norm(w2, axis=1)[:, None]
    v = m // l
    cross = np.abs(np.einsum("tm,tm->t", x[:, :v].conj(), w2[:, :v]))
    return TailReport(m, d, l, "orthopair_projected_overlap",
                      10 * math.exp(-m / (100 * d ** 4 * l)),
                      float(np.mean(cross >= 2 / (d ** 2 * l))), mc_band(trials), trials, seed,
                      hyp)


def subspace_energy(m: int, d: int, l: int, trials: int, seed: int) -> TailReport:
    """Random d-dim W: frequency of max_{w in W} <w|P|w> >= 6/l.

    ``hypotheses_ok`` is False (exploratory run) when 200 d^4 l ln(20 d^2) >= m.
    """
    _check_params(m, d, l, trials)
    hyp = 200 * d ** 4 * l * math.log(20 * d ** 2) < m
    rng = _rng_for(seed, 3)
    v = m // l
    hits = 0
    done = 0
    while done < trials:
        n = min(2000, trials - done)
        frames = haar_frames(m, d, n, rng)
        top = frames[:, :v, :]
        gram = np.einsum("tvi,tvj->tij", top.conj(), top)
        hits += int((np.linalg.eigvalsh(gram)[:, -1] >= 6 / l).sum())
        done += n
    return TailReport(m, d, l, "subspace_energy", math.exp(-m / (200 * d ** 4 * l)),
                      hits / trials, mc_band(trials), trials, seed, hyp)


def mean_energy(m: int, l: int, trials: int, seed: int) -> float:
    """Empirical E <w|P|w> for Haar w; equals (m/l)/m = 1/l in expectation."""
    w = haar_vectors(m, trials, _rng_for(seed, 4))
    return float(np.mean(np.sum(np.abs(w[:, : m // l]) ** 2, axis=1)))


def write_tail_csv(reports, fh) -> None:
    out = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    out.writeheader()
    for r in reports:
        row = r.row()
        for k in ("analytic_bound", "empirical_freq", "band"):
            row[k] = format(row[k], ".17g")
        out.writerow(row)


# Incompressibility.

@dataclass(frozen=True)
class IncompressibilityReport:
    m: int
    n: int
    k_exp: int
    d: int
    kind: str
    fractions: tuple  # per sampled W: |{l : M_l(W) <= 1/10}| / n
    seed: int

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n, "k_exp": self.k_exp, "d": self.d, "kind": self.kind,
                "fractions": list(self.fractions), "min_fraction": min(self.fractions),
                "seed": self.seed}


def ensemble_values(ens: QuantumEnsemble, W: Subspace) -> np.ndarray:
    """M_l(W) for every l, as the largest squared singular value of B_l^dagger W."""
    if W.m != ens.m:
        raise ValueError("dimension mismatch")
    out = np.empty(ens.n)
    for l in range(ens.n):
        s = np.linalg.svd(ens.block_basis(l).conj().T @ W.basis, compute_uv=False)
        out[l] = float(s[0] ** 2) if s.size else 0.0
    return out


def incompressibility_trial(ens: QuantumEnsemble, d: int, subspace_samples: int, seed: int,
                            kind: str = "haar", threshold: float = 0.1) -> IncompressibilityReport:
    """Fraction of ensemble members defeated (M_l(W) <= threshold) by sampled W.

    ``kind`` is "haar" (random W) or "ensemble" (W spanned by d vectors drawn
    from the ensemble's blocks, the first sample being inside V_0).
    """
    if not 1 <= d <= ens.m:
        raise ValueError("need 1 <= d <= m")
    rng = _rng_for(seed, 6)
    fracs = []
    for s in range(subspace_samples):
        if kind == "haar":
            W = haar_orthonormal(ens.m, d, rng)
        elif kind == "ensemble":
            if s == 0 and d <= ens.block_size:
                W = Subspace(ens.block_basis(0)[:, :d])
            else:
                cols = [ens.block_basis(int(rng.integers(ens.n)))[:, int(rng.integers(ens.block_size))]
                        for _ in range(d)]
                W = Subspace.span(np.stack(cols, axis=1))
        else:
            raise ValueError("kind must be 'haar' or 'ensemble'")
        vals = ensemble_values(ens, W)
        fracs.append(float(np.mean(vals <= threshold)))
    return IncompressibilityReport(ens.m, ens.n, ens.k_exp, d, kind, tuple(fracs), seed)


# Nets.

def build_net(m: int, delta: float, rng: np.random.Generator, patience: int = 2000,
              max_size: int = 200_000) -> np.ndarray:
    """Random covering of the unit sphere of C^m, rows are net points.

    Points are added whenever a fresh Haar probe is farther than ``delta``
    from every current point; construction stops after ``patience``
    consecutive covered probes.
    """
    if m > 3:
        raise ValueError("nets are only built for m <= 3")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    net = haar_vectors(m, 1, rng)
    streak = 0
    while streak < patience:
        probes = haar_vectors(m, 256, rng)
        for p in probes:
            if np.min(np.linalg.norm(net - p, axis=1)) > delta:
                net = np.vstack([net, p])
                streak = 0
                if len(net) > max_size:
                    raise ValueError("net exceeded max_size")
            else:
                streak += 1
    return net


def net_round(W: Subspace, net: np.ndarray, delta: float) -> Subspace:
    """Span of the nearest net point to each basis vector of W."""
    net = np.asarray(net, dtype=complex)
    if net.ndim != 2 or net.shape[0] == 0:
        raise ValueError("net must be a non-empty (size, m) array")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if net.shape[1] != W.m:
        raise ValueError("dimension mismatch")
    near = nearest_net_points(W, net)
    gaps = np.linalg.norm(near - W.basis, axis=0)
    if gaps.max() > delta + 1e-12:
        raise ValueError(f"net is not {delta}-dense at a basis vector (gap {gaps.max():.3g})")
    return Subspace.span(near)


def nearest_net_points(W: Subspace, net: np.ndarray) -> np.ndarray:
    """m x d matrix whose column i is the net point closest to basis vector i."""
    dist = np.linalg.norm(net[:, :, None] - W.basis[None, :, :], axis=1)
    return net[np.argmin(dist, axis=0)].T


def rounding_gaps(W: Subspace, net: np.ndarray, samples: int,
                  rng: np.random.Generator) -> np.ndarray:
    """||w - w_hat|| for sampled unit w in W, where w_hat normalizes sum a_i w~_i."""
    near = nearest_net_points(W, np.asarray(net, dtype=complex))
    coeff = haar_vectors(W.d, samples, rng)
    w = coeff @ W.basis.T
    wp = coeff @ near.T
    norms = np.linalg.norm(wp, axis=1)
    w_hat = np.where(norms[:, None] > 0, wp / np.where(norms > 0, norms, 1.0)[:, None], 0.0)
    return np.linalg.norm(w - w_hat, axis=1)
