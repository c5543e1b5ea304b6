"""Independent oracles used by the tests.

Everything here deliberately avoids the library's own formula paths:
two-photon probabilities are built from explicit amplitude sums, lossy
evolution goes through a unitary dilation, and distinguishability enters as a
Bernoulli mixture of quantum and classical routing.
"""
from __future__ import annotations

import numpy as np


def amplitude_central_area(mp, indist):
    """Central-peak area from explicit two-photon amplitudes.

    Quantum part: |M11*M22 + M12*M21|² interference; classical part:
    incoherent sum of the two routing probabilities. Mixed by the
    indistinguishability as a Bernoulli branch weight.
    """
    mp = np.asarray(mp, dtype=complex)
    quantum = abs(mp[0, 0] * mp[1, 1] + mp[0, 1] * mp[1, 0]) ** 2
    classical = abs(mp[0, 0] * mp[1, 1]) ** 2 + abs(mp[0, 1] * mp[1, 0]) ** 2
    return indist * quantum + (1.0 - indist) * classical


def amplitude_side_area(mp):
    """Side-peak area: independent single-photon marginals multiplied out."""
    p = np.abs(np.asarray(mp, dtype=complex)) ** 2
    return (p[0, 0] + p[0, 1]) * (p[1, 0] + p[1, 1])


def cross_term_area(mp, indist):
    """A0 via the decomposition |ad|² + |bc|² + 2·I·Re(a·d·conj(b)·conj(c))."""
    mp = np.asarray(mp, dtype=complex)
    a, b, c, d = mp[0, 0], mp[0, 1], mp[1, 0], mp[1, 1]
    return (abs(a * d) ** 2 + abs(b * c) ** 2
            + 2.0 * indist * np.real(a * d * np.conj(b) * np.conj(c)))


def g2_side_expanded(mp, c1):
    """Side-peak correlation in the expanded (un-factored) form."""
    mp = np.asarray(mp, dtype=complex)
    a, b, c, d = mp[0, 0], mp[0, 1], mp[1, 0], mp[1, 1]
    val = (abs(a) ** 2 + abs(b) ** 2) * (abs(c) ** 2 + abs(d) ** 2)
    val += 4.0 * np.real(np.conj(d) * c) * np.real(np.conj(a) * b) * c1 ** 2
    val += (2.0 * np.real(np.conj(c) * d) * (abs(a) ** 2 + abs(b) ** 2)
            + 2.0 * np.real(np.conj(b) * a) * (abs(c) ** 2 + abs(d) ** 2)) * c1
    return float(val)


def dilation_unitary(m):
    """Halmos dilation: embed a contraction into a 2N x 2N unitary."""
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    w, s, xh = np.linalg.svd(m)
    if np.max(s) > 1.0 + 1e-12:
        raise ValueError("matrix is not a contraction")
    root = np.sqrt(np.clip(1.0 - s ** 2, 0.0, None))
    upper_right = w @ np.diag(root) @ w.conj().T
    lower_left = xh.conj().T @ np.diag(root) @ xh
    v = np.zeros((2 * n, 2 * n), dtype=complex)
    v[:n, :n] = m
    v[:n, n:] = upper_right
    v[n:, :n] = lower_left
    v[n:, n:] = -m.conj().T
    return v


def two_photon_quantum_distribution(v, i, j):
    """P(a<=b) for indistinguishable photons in inputs i, j (0-based) of unitary v."""
    n = v.shape[0]
    pairs = []
    probs = []
    for a in range(n):
        for b in range(a, n):
            if a == b:
                p = 2.0 * abs(v[a, i] * v[a, j]) ** 2
            else:
                p = abs(v[a, i] * v[b, j] + v[b, i] * v[a, j]) ** 2
            pairs.append((a, b))
            probs.append(p)
    probs = np.asarray(probs)
    return pairs, probs


class PairSampler:
    """Sample photon-pair detector outcomes through a lossy matrix.

    Each draw routes one photon pair (inputs i, j, 1-based) through the
    dilated unitary; with probability `indist` the pair takes the joint
    quantum outcome, otherwise the photons route independently. Modes >= dim
    are loss modes.
    """

    def __init__(self, m, i, j, indist, rng):
        m = np.asarray(m, dtype=complex)
        self.dim = m.shape[0]
        self.indist = float(indist)
        self.rng = rng
        v = dilation_unitary(m)
        pairs, probs = two_photon_quantum_distribution(v, i - 1, j - 1)
        self._pair_a = np.array([p[0] for p in pairs])
        self._pair_b = np.array([p[1] for p in pairs])
        self._q_cdf = np.cumsum(probs)
        self._q_cdf /= self._q_cdf[-1]
        self._p1 = np.abs(v[:, i - 1]) ** 2
        self._p2 = np.abs(v[:, j - 1]) ** 2

    def sample_destinations(self, n):
        """(dest1, dest2) arrays of mode indices (0-based, may be loss modes)."""
        q_idx = np.searchsorted(self._q_cdf, self.rng.random(n))
        qa, qb = self._pair_a[q_idx], self._pair_b[q_idx]
        ca = self.rng.choice(len(self._p1), size=n, p=self._p1 / self._p1.sum())
        cb = self.rng.choice(len(self._p2), size=n, p=self._p2 / self._p2.sum())
        quantum = self.rng.random(n) < self.indist
        d1 = np.where(quantum, qa, ca)
        d2 = np.where(quantum, qb, cb)
        return d1, d2


def mc_visibility(sampler_a, sampler_b, k, l, n_samples, n_batches=20):
    """Monte Carlo estimate of V for output pair (k, l), 1-based.

    Same-period products of photon numbers at k and l estimate the central
    peak; products across the two independent periods estimate the side peak.
    Returns (v_hat, sigma_v) from batch means.
    """
    d1a, d2a = sampler_a.sample_destinations(n_samples)
    d1b, d2b = sampler_b.sample_destinations(n_samples)
    nk_a = (d1a == k - 1).astype(np.int64) + (d2a == k - 1)
    nl_a = (d1a == l - 1).astype(np.int64) + (d2a == l - 1)
    nl_b = (d1b == l - 1).astype(np.int64) + (d2b == l - 1)
    central = nk_a * nl_a
    side = nk_a * nl_b
    vals = []
    for c_batch, s_batch in zip(np.array_split(central, n_batches),
                                np.array_split(side, n_batches)):
        s_mean = s_batch.mean()
        vals.append(c_batch.mean() / s_mean if s_mean > 0 else np.nan)
    vals = np.asarray(vals, dtype=float)
    v_hat = float(np.nanmean(vals))
    sigma = float(np.nanstd(vals, ddof=1) / np.sqrt(np.sum(np.isfinite(vals))))
    return v_hat, sigma


def haar_second_moment(dim, n_samples, seed):
    """Monte Carlo E|U_11|² over Haar unitaries (expected: 1/dim)."""
    from itomo.matrices import haar_random_unitary

    rng = np.random.default_rng(seed)
    vals = np.empty(n_samples)
    for s in range(n_samples):
        u = haar_random_unitary(dim, int(rng.integers(2 ** 62)))
        vals[s] = abs(u[0, 0]) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples))
