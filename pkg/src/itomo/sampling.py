"""Two-photon boson-sampling prediction and source/loss parameter fitting.

Given a reconstructed unitary, predicts single-count and coincidence rates
for photon pairs injected into chosen input pairs, and fits per-mode
transmissions plus source indistinguishability and emission probability to
observed count records.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import DimensionMismatchError, InsufficientDataError, InvalidDimensionError
from .matrices import as_matrix
from .optics import LossModel, ModeQuad, SourceModel, apply_losses, peak_areas
from .tomography import OptimizerConfig, _logit, _sigmoid


@dataclass
class CountsRecord:
    """Singles and pairwise coincidences for one input pair, common units.

    `coincidences[k-1, l-1]` holds the (k < l) output-pair rate; the lower
    triangle and diagonal are zero.
    """

    input_pair: tuple[int, int]
    singles: np.ndarray
    coincidences: np.ndarray

    def __post_init__(self):
        i, j = self.input_pair
        if i == j or min(i, j) < 1:
            raise InvalidDimensionError(f"input pair {self.input_pair} must be two distinct 1-based modes")
        if i > j:
            self.input_pair = (j, i)
        self.singles = np.asarray(self.singles, dtype=float)
        self.coincidences = np.asarray(self.coincidences, dtype=float)
        n = self.singles.shape[0]
        if self.coincidences.shape != (n, n):
            raise DimensionMismatchError("coincidence matrix shape must match singles length")
        if np.any(self.singles < 0.0) or np.any(self.coincidences < 0.0):
            raise InvalidDimensionError("counts must be nonnegative")

    @property
    def dim(self) -> int:
        return self.singles.shape[0]

    def coincidence_vector(self) -> np.ndarray:
        n = self.dim
        iu = np.triu_indices(n, k=1)
        return self.coincidences[iu]

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.singles, self.coincidence_vector()])


@dataclass
class SourceFit:
    t_in: np.ndarray
    t_out: np.ndarray
    indistinguishability: float
    p_emit: float
    residual: float
    diagnostics: dict = field(default_factory=dict)


def predict_counts(u, loss: LossModel, src: SourceModel, input_pair) -> CountsRecord:
    """Predicted rates for one input pair, up to one common constant.

    singles_k = p_emit * (|M_ki|² + |M_kj|²); coincidence(k,l) = p_emit² * A0
    of the lossy 2x2 block, with M = T'·U·T.
    """
    u = as_matrix(u)
    n = u.shape[0]
    i, j = sorted(input_pair)
    if not (1 <= i < j <= n):
        raise DimensionMismatchError(f"input pair {input_pair} out of range for dim {n}")
    m = apply_losses(u, loss)
    p = np.abs(m) ** 2
    singles = src.p_emit * (p[:, i - 1] + p[:, j - 1])
    coinc = np.zeros((n, n))
    for k in range(1, n + 1):
        for l in range(k + 1, n + 1):
            quad = ModeQuad(i, j, k, l)
            block = m[np.ix_([k - 1, l - 1], [i - 1, j - 1])]
            a0, _ = peak_areas(block, src.indistinguishability)
            coinc[k - 1, l - 1] = src.p_emit ** 2 * a0
    return CountsRecord(input_pair=(i, j), singles=singles, coincidences=coinc)


def classical_fidelity(p, q) -> float:
    """Bhattacharyya overlap of two probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"shape mismatch {p.shape} vs {q.shape}")
    if np.any(p < 0.0) or np.any(q < 0.0):
        raise InvalidDimensionError("probabilities must be nonnegative")
    for name, vec in (("p", p), ("q", q)):
        total = float(vec.sum())
        if abs(total - 1.0) > 1e-9:
            raise InvalidDimensionError(f"{name} sums to {total}, expected 1 within 1e-9")
    return float(np.sum(np.sqrt(p * q)))


def _predict_stacked(u, t_in, t_out, indist, p_emit, input_pair):
    loss = LossModel(t_in=t_in, t_out=t_out)
    src = SourceModel(indistinguishability=indist, p_emit=p_emit)
    return predict_counts(u, loss, src, input_pair).stacked()


def fit_source(u, observed: list[CountsRecord], cfg: OptimizerConfig | None = None) -> SourceFit:
    """Least-squares fit of (t_in, t_out, I, p_emit) to observed count records.

    One free scale per record absorbs accumulation time. A global rescaling
    of either transmission vector is exactly degenerate with p_emit, so the
    fitted t_in and t_out are max-normalized (largest entry 1) and p_emit
    absorbs the gauge; compare them to ground truth up to one scale per
    vector. Deterministic given cfg.seed.
    """
    if cfg is None:
        cfg = OptimizerConfig(n_starts=8, max_nfev=400)
    u = as_matrix(u)
    n = u.shape[0]
    if len(observed) < 2:
        raise InsufficientDataError("need at least two input-pair records to fit the source")
    for rec in observed:
        if rec.dim != n:
            raise DimensionMismatchError("record dimension does not match the matrix")
    obs = [rec.stacked() for rec in observed]
    pairs = [rec.input_pair for rec in observed]

    # Parameters: log t_in[1:], log t_out[1:], logit I, logit p_emit; the
    # first entry of each log-vector is pinned at 0 and the max-normalization
    # below restores physical (0, 1] transmissions.
    def unpack(v):
        t_in = np.concatenate([[1.0], np.exp(v[: n - 1])])
        t_out = np.concatenate([[1.0], np.exp(v[n - 1 : 2 * n - 2])])
        indist = _sigmoid(v[-2])
        p_emit = _sigmoid(v[-1])
        return t_in / t_in.max(), t_out / t_out.max(), indist, p_emit

    def residuals(v):
        t_in, t_out, indist, p_emit = unpack(v)
        t_in = np.clip(t_in, 1e-6, 1.0)
        t_out = np.clip(t_out, 1e-6, 1.0)
        out = []
        for pair, o in zip(pairs, obs):
            pred = _predict_stacked(u, t_in, t_out, indist, p_emit, pair)
            denom = float(pred @ pred)
            scale = float(pred @ o) / denom if denom > 0.0 else 0.0
            out.append(scale * pred - o)
        return np.concatenate(out)

    v0 = np.concatenate([
        np.full(n - 1, np.log(0.85)),
        np.full(n - 1, np.log(0.85)),
        [_logit(0.9), _logit(0.1)],
    ])
    rng = np.random.default_rng(cfg.seed)
    best = None
    for s in range(cfg.n_starts):
        vs = v0.copy()
        if s > 0:
            vs[: 2 * n - 2] += 0.2 * rng.standard_normal(2 * n - 2)
            vs[-2:] += 0.8 * rng.standard_normal(2)
        res = least_squares(residuals, vs, method="trf",
                            ftol=cfg.ftol, xtol=cfg.xtol, gtol=cfg.gtol,
                            max_nfev=cfg.max_nfev)
        c = float(np.sum(res.fun ** 2))
        if best is None or c < best[0]:
            best = (c, res.x, s)
    cost, v_best, start = best
    t_in, t_out, indist, p_emit = unpack(v_best)
    t_in = np.clip(t_in, 1e-6, 1.0)
    t_out = np.clip(t_out, 1e-6, 1.0)
    return SourceFit(
        t_in=t_in,
        t_out=t_out,
        indistinguishability=float(indist),
        p_emit=float(p_emit),
        residual=cost,
        diagnostics={"best_start": start, "n_records": len(observed)},
    )


def normalized_coincidences(rec: CountsRecord) -> np.ndarray:
    v = rec.coincidence_vector()
    total = float(v.sum())
    if total <= 0.0:
        raise InvalidDimensionError("coincidence record sums to zero")
    return v / total


def normalized_singles(rec: CountsRecord) -> np.ndarray:
    total = float(rec.singles.sum())
    if total <= 0.0:
        raise InvalidDimensionError("singles record sums to zero")
    return rec.singles / total
