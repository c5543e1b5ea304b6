"""Transfer-matrix reconstruction from visibility data.

Pipeline: scale the measured single-photon power matrix to doubly stochastic
form (Sinkhorn-Knopp) to estimate entry moduli and input-loss ratios, convert
the measured visibilities into the two-run form consumed by the analytic
initial guess, build that guess (moduli from the scaled power matrix, phases
from the cosine relations of the converted visibilities), then refine all
mesh phases, loss ratios, and the indistinguishability by multi-start local
least squares against the measured visibilities.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    ConvergenceFailureError,
    CannotCanonicalizeError,
    InsufficientDataError,
    InvalidDimensionError,
)
from .matrices import (
    as_matrix,
    canonicalize_phases,
    resolve_conjugate_ambiguity,
)
from .optics import DENOMINATOR_FLOOR, ModeQuad
from .reck import ReckParams, compose_phases, n_phases, reck_decompose

FLAG_VALID = "valid"
FLAG_UNDEFINED = "undefined"
FLAG_CLIPPED = "clipped"
_FLAGS = (FLAG_VALID, FLAG_UNDEFINED, FLAG_CLIPPED)


@dataclass
class VisibilityRecord:
    quad: ModeQuad
    value: float
    sigma: float = 0.0
    flag: str = FLAG_VALID

    def __post_init__(self):
        if self.flag not in _FLAGS:
            raise ValueError(f"unknown flag {self.flag!r}")
        if self.flag != FLAG_UNDEFINED and (self.value < 0.0 or not np.isfinite(self.value)):
            raise ValueError(f"visibility must be finite and nonnegative, got {self.value}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def usable(self) -> bool:
        return self.flag != FLAG_UNDEFINED


@dataclass
class VisibilityDataset:
    """Visibility records plus the single-photon power matrix R̃ = |M|²."""

    dim: int
    records: list[VisibilityRecord]
    power: np.ndarray
    power_sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 2:
            raise InvalidDimensionError(f"dataset dimension must be >= 2, got {self.dim}")
        seen = set()
        for rec in self.records:
            rec.quad.check_dim(self.dim)
            key = rec.quad.key()
            if key in seen:
                raise InvalidDimensionError(f"duplicate quad {rec.quad}")
            seen.add(key)
        self.power = np.asarray(self.power, dtype=float)
        if self.power.shape != (self.dim, self.dim):
            raise InvalidDimensionError(
                f"power matrix shape {self.power.shape}, expected ({self.dim},{self.dim})"
            )
        if np.any(self.power < 0.0) or not np.all(np.isfinite(self.power)):
            raise InvalidDimensionError("power matrix entries must be finite and >= 0")
        if self.power_sigma is not None:
            self.power_sigma = np.asarray(self.power_sigma, dtype=float)
            if self.power_sigma.shape != self.power.shape:
                raise InvalidDimensionError("power_sigma shape mismatch")

    def usable_records(self) -> list[VisibilityRecord]:
        return [r for r in self.records if r.usable]


@dataclass
class ConvertedRecord:
    """One visibility brought to the two-run (distinguishable-run-normalized) form."""

    quad: ModeQuad
    value: float
    alpha: float
    flag: str = FLAG_VALID


@dataclass
class OptimizerConfig:
    seed: int = 0
    n_starts: int = 16
    max_nfev: int = 500
    ftol: float = 1e-12
    xtol: float = 1e-12
    gtol: float = 1e-12
    initial_indist: float = 0.9
    perturb_phase: float = 0.5
    perturb_logx: float = 0.2
    perturb_logit: float = 1.0
    sst_clip_tol: float = 0.2
    sinkhorn_tol: float = 1e-10
    sinkhorn_max_iter: int = 100_000
    canonical_row: int | None = None
    canonical_col: int | None = None
    measurement_mode: str = "full"

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.measurement_mode not in ("full", "linear"):
            raise ValueError(f"unknown measurement mode {self.measurement_mode!r}")


@dataclass
class ReconstructionResult:
    u_opt: np.ndarray
    params: ReckParams
    t_ratios: np.ndarray
    i_opt: float
    final_cost: float
    iterations: int
    converged: bool
    branch: str
    diagnostics: dict = field(default_factory=dict)


def sinkhorn_knopp(r, tol: float = 1e-10, max_iter: int = 100_000):
    """Scale a positive matrix to doubly stochastic form.

    Returns (d, a, dp) with diag(dp) @ a @ diag(d) == r exactly at every
    iterate, row/column sums of `a` within `tol` of 1, and the scalar gauge
    fixed by d[0] = 1.
    """
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InvalidDimensionError(f"expected square matrix, got {r.shape}")
    if np.any(r <= 0.0) or not np.all(np.isfinite(r)):
        raise InvalidDimensionError("Sinkhorn-Knopp requires strictly positive entries")
    a = r.copy()
    d = np.ones(r.shape[0])
    dp = np.ones(r.shape[0])
    resid = np.inf
    for _ in range(max_iter):
        rs = a.sum(axis=1)
        dp *= rs
        a /= rs[:, None]
        cs = a.sum(axis=0)
        d *= cs
        a /= cs[None, :]
        resid = float(np.max(np.abs(a.sum(axis=1) - 1.0)))
        if resid <= tol:
            scale = d[0]
            return d / scale, a, dp * scale
    raise ConvergenceFailureError(
        f"Sinkhorn-Knopp residual {resid:.3e} after {max_iter} iterations", residual=resid
    )


def floor_power(power, rel_floor: float = 1e-9) -> tuple[np.ndarray, int]:
    """Floor zero/tiny entries at rel_floor * max so Sinkhorn stays defined."""
    p = np.asarray(power, dtype=float)
    top = float(np.max(p))
    if top <= 0.0:
        raise InvalidDimensionError("power matrix is identically zero")
    floor = rel_floor * top
    n_floored = int(np.sum(p < floor))
    return np.maximum(p, floor), n_floored


def _quad_entries(a: np.ndarray, quad: ModeQuad):
    i, j, k, l = quad.i - 1, quad.j - 1, quad.k - 1, quad.l - 1
    return a[k, i], a[k, j], a[l, i], a[l, j]


def visibility_convert(
    data: VisibilityDataset,
    a: np.ndarray,
    x_in,
    den_floor: float = DENOMINATOR_FLOOR,
) -> list[ConvertedRecord]:
    """Rescale each visibility to the distinguishable-run-normalized form.

    V' = 1 + (1 + alpha)(V - 1), where alpha is the estimated ratio of the
    same-input side-peak terms to the cross terms, built from the scaled
    moduli `a` and the per-mode input transmission-squared scalars `x_in`
    (only ratios of x_in enter). Records whose cross-term denominator falls
    below `den_floor` are flagged undefined rather than dropped.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 0.0):
        raise InvalidDimensionError("modulus matrix must be nonnegative")
    x_in = np.asarray(x_in, dtype=float)
    if np.any(x_in <= 0.0):
        raise InvalidDimensionError("x_in entries must be positive")
    out = []
    for rec in data.records:
        if rec.flag == FLAG_UNDEFINED:
            out.append(ConvertedRecord(rec.quad, rec.value, 0.0, FLAG_UNDEFINED))
            continue
        aki, akj, ali, alj = _quad_entries(a, rec.quad)
        cross = aki * alj + akj * ali
        if cross < den_floor:
            out.append(ConvertedRecord(rec.quad, rec.value, 0.0, FLAG_UNDEFINED))
            continue
        x_ij = x_in[rec.quad.i - 1] / x_in[rec.quad.j - 1]
        bunch = x_ij * aki * ali + (akj * alj) / x_ij
        alpha = bunch / cross
        vprime = 1.0 + (1.0 + alpha) * (rec.value - 1.0)
        out.append(ConvertedRecord(rec.quad, float(vprime), float(alpha), rec.flag))
    return out


def _sst_guess(
    converted: list[ConvertedRecord],
    a: np.ndarray,
    clip_tol: float = 0.2,
    indist: float = 0.9,
) -> tuple[np.ndarray, dict]:
    """Analytic initial guess: moduli sqrt(a), phases from cosine relations.

    The interference term extracted from each converted record scales with
    the photon indistinguishability, so the cosines are divided by the
    working estimate `indist` before inversion.
    """
    if not 0.0 < indist <= 1.0:
        raise ValueError(f"indistinguishability estimate must be in (0,1], got {indist}")
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    lookup = {rec.quad.key(): rec for rec in converted}
    tiny = 1e-24
    n_clipped = 0
    n_fallback = 0

    def cos_for(i, j, k, l):
        nonlocal n_clipped
        rec = lookup.get((i, j, k, l))
        if rec is None:
            return "missing", 0.0
        if rec.flag == FLAG_UNDEFINED:
            return "undefined", 0.0
        aki, akj, ali, alj = _quad_entries(a, rec.quad)
        prod = aki * akj * ali * alj
        if prod <= tiny:
            return "degenerate", 0.0
        cross = aki * alj + akj * ali
        rho = 0.5 * cross * (rec.value + rec.alpha - 1.0) / indist
        c = rho / np.sqrt(prod)
        if abs(c) > 1.0 + clip_tol:
            n_clipped += 1
            warnings.warn(
                f"cosine estimate {c:+.3f} for quad ({i},{j},{k},{l}) clipped to [-1,1]",
                stacklevel=3,
            )
        return "ok", float(np.clip(c, -1.0, 1.0))

    theta = np.zeros((n, n))
    for ao in range(2, n + 1):
        for bi in range(2, n + 1):
            status, c = cos_for(1, bi, 1, ao)
            if status == "missing":
                raise InsufficientDataError(
                    f"no record for spanning quad (1,{bi},1,{ao}); "
                    "the dataset does not cover the reference row/column"
                )
            if status == "ok":
                theta[ao - 1, bi - 1] = np.arccos(c)
            else:
                n_fallback += 1

    sign = np.ones((n, n))

    def pick_sign(target_ao, target_bi, delta_known, c_meas):
        t = theta[target_ao - 1, target_bi - 1]
        plus = abs(np.cos(delta_known + t) - c_meas)
        minus = abs(np.cos(delta_known - t) - c_meas)
        return 1.0 if plus <= minus else -1.0

    if n >= 2:
        t22 = theta[1, 1]
        for bi in range(3, n + 1):
            # quad: inputs (2, bi), outputs (1, 2) -> cos(theta_2bi - theta_22)
            status, c = cos_for(2, bi, 1, 2)
            if status == "ok":
                sign[1, bi - 1] = pick_sign(2, bi, -t22, c)
        for ao in range(3, n + 1):
            # quad: inputs (1, 2), outputs (2, ao) -> cos(theta_ao2 - theta_22)
            status, c = cos_for(1, 2, 2, ao)
            if status == "ok":
                sign[ao - 1, 1] = pick_sign(ao, 2, -t22, c)
        for ao in range(3, n + 1):
            for bi in range(3, n + 1):
                # inputs (2, bi), outputs (2, ao):
                # cos(theta_22 + theta_ao,bi - theta_2,bi - theta_ao,2)
                status, c = cos_for(2, bi, 2, ao)
                if status == "ok":
                    known = (t22
                             - sign[1, bi - 1] * theta[1, bi - 1]
                             - sign[ao - 1, 1] * theta[ao - 1, 1])
                    sign[ao - 1, bi - 1] = pick_sign(ao, bi, known, c)

    raw = np.sqrt(np.clip(a, 0.0, None)) * np.exp(1j * sign * theta)
    w, _, vh = np.linalg.svd(raw)
    u0 = w @ vh
    diag = {"sst_clipped": n_clipped, "sst_fallback": n_fallback}
    return u0, diag


def sst_initial_guess(
    converted: list[ConvertedRecord], a: np.ndarray, clip_tol: float = 0.2,
    indist: float = 0.9,
) -> np.ndarray:
    u0, _ = _sst_guess(converted, a, clip_tol, indist)
    return u0


def measurement_plan(dim: int, mode: str = "full") -> list[tuple[int, int]]:
    """Input pairs to measure.

    full: all dim(dim-1)/2 pairs. linear: exactly 2*dim runs covering the
    spanning set (reference-mode-1 pairs, reference-mode-2 pairs, then
    consecutive pairs), cyclically repeated when fewer distinct pairs exist.
    """
    if dim < 2:
        raise InvalidDimensionError(f"dimension must be >= 2, got {dim}")
    if mode == "full":
        return [(i, j) for i in range(1, dim + 1) for j in range(i + 1, dim + 1)]
    if mode != "linear":
        raise ValueError(f"unknown measurement mode {mode!r}")
    core: list[tuple[int, int]] = []
    core.extend((1, j) for j in range(2, dim + 1))
    core.extend((2, j) for j in range(3, dim + 1))
    core.extend((j, j + 1) for j in range(3, dim))
    target = 2 * dim
    if len(core) >= target:
        return core[:target]
    plan = list(core)
    # Prefer unmeasured pairs, then cycle through the plan as repeat runs.
    leftover = [(i, j) for i in range(1, dim + 1) for j in range(i + 1, dim + 1)
                if (i, j) not in core]
    plan.extend(leftover[: target - len(plan)])
    idx = 0
    while len(plan) < target:
        plan.append(plan[idx])
        idx += 1
    return plan


def _quad_index_arrays(quads: list[ModeQuad]):
    ii = np.array([q.i - 1 for q in quads], dtype=int)
    jj = np.array([q.j - 1 for q in quads], dtype=int)
    kk = np.array([q.k - 1 for q in quads], dtype=int)
    ll = np.array([q.l - 1 for q in quads], dtype=int)
    return ii, jj, kk, ll


def _eq4_batch(u, x, indist, idx, den_floor=DENOMINATOR_FLOOR):
    ii, jj, kk, ll = idx
    a = u[kk, ii]
    b = u[kk, jj]
    c = u[ll, ii]
    d = u[ll, jj]
    pa = np.abs(a) ** 2
    pb = np.abs(b) ** 2
    pc = np.abs(c) ** 2
    pd = np.abs(d) ** 2
    ad = a * d
    bc = b * c
    num = (0.5 * (1.0 + indist) * np.abs(ad + bc) ** 2
           + 0.5 * (1.0 - indist) * np.abs(ad - bc) ** 2)
    x_ij = x[ii] / x[jj]
    den = pa * pd + pb * pc + x_ij * pa * pc + (pb * pd) / x_ij
    return num / np.maximum(den, den_floor)


def _lo_batch(u, x, indist, idx, den_floor=DENOMINATOR_FLOOR):
    """Two-run visibility model: indistinguishable run normalized by the I=0 run."""
    v_i = _eq4_batch(u, x, indist, idx, den_floor)
    v_0 = _eq4_batch(u, x, 0.0, idx, den_floor)
    return 1.0 + (v_i - 1.0) / np.maximum(v_0, den_floor)


def cost(params, x, indist: float, data: VisibilityDataset) -> float:
    """Sum of squared deviations between modeled and recorded visibilities.

    Records flagged undefined contribute nothing. `params` may be a
    ReckParams or a raw phase vector.
    """
    phases = params.phases if isinstance(params, ReckParams) else np.asarray(params, float)
    u = compose_phases(data.dim, phases)
    recs = data.usable_records()
    if not recs:
        return 0.0
    idx = _quad_index_arrays([r.quad for r in recs])
    v_exp = np.array([r.value for r in recs])
    v_mod = _eq4_batch(u, np.asarray(x, dtype=float), indist, idx)
    return float(np.sum((v_mod - v_exp) ** 2))


def _logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _refine(dim, idx, v_exp, model, p0, x0, i0, cfg: OptimizerConfig):
    """Multi-start local least squares over (phases, log x ratios, logit I).

    Start 0 uses the supplied initial guess; the rest perturb it with draws
    from a generator seeded by cfg.seed. The lowest final cost wins, ties
    broken by start index.
    """
    npar = n_phases(dim)
    logx0 = np.log(np.asarray(x0, dtype=float)[1:])
    z0 = _logit(min(max(i0, 1e-6), 1.0 - 1e-6))
    v0 = np.concatenate([np.asarray(p0, dtype=float), logx0, [z0]])

    def residuals(v):
        phases = v[:npar]
        x = np.concatenate([[1.0], np.exp(v[npar:npar + dim - 1])])
        indist = _sigmoid(v[-1])
        u = compose_phases(dim, phases)
        return model(u, x, indist, idx) - v_exp

    rng = np.random.default_rng(cfg.seed)
    best = None
    total_nfev = 0
    start_costs = []
    for s in range(cfg.n_starts):
        if s == 0:
            vs = v0.copy()
        else:
            vs = v0.copy()
            vs[:npar] += cfg.perturb_phase * rng.standard_normal(npar)
            vs[npar:npar + dim - 1] += cfg.perturb_logx * rng.standard_normal(dim - 1)
            vs[-1] += cfg.perturb_logit * rng.standard_normal()
        res = least_squares(
            residuals, vs, method="trf",
            ftol=cfg.ftol, xtol=cfg.xtol, gtol=cfg.gtol, max_nfev=cfg.max_nfev,
        )
        c = float(np.sum(res.fun ** 2))
        start_costs.append(c)
        total_nfev += int(res.nfev)
        if best is None or c < best["cost"]:
            best = {
                "cost": c,
                "v": res.x,
                "converged": res.status > 0,
                "nfev": int(res.nfev),
                "start": s,
            }
    phases = best["v"][:npar]
    x = np.concatenate([[1.0], np.exp(best["v"][npar:npar + dim - 1])])
    indist = float(_sigmoid(best["v"][-1]))
    best.update({"phases": phases, "x": x, "indist": indist,
                 "start_costs": start_costs, "total_nfev": total_nfev})
    return best


def _pick_canonical_axes(u: np.ndarray) -> tuple[int, int]:
    """Fallback row/column choice: maximize the smallest modulus on the axis."""
    mags = np.abs(u)
    row = int(np.argmax(mags.min(axis=1))) + 1
    col = int(np.argmax(mags.min(axis=0))) + 1
    return row, col


def _canonicalize_safe(u, row, col):
    try:
        return canonicalize_phases(u, row, col), (row, col)
    except CannotCanonicalizeError:
        r, c = _pick_canonical_axes(u)
        return canonicalize_phases(u, r, c), (r, c)


def reconstruct(data: VisibilityDataset, cfg: OptimizerConfig | None = None) -> ReconstructionResult:
    """Run the full pipeline on a visibility dataset.

    Deterministic given cfg.seed; reports converged=False rather than raising
    on poor fits. Raises InsufficientDataError when the dataset lacks the
    spanning quads needed for the initial guess.
    """
    if cfg is None:
        cfg = OptimizerConfig()
    dim = data.dim
    power, n_floored = floor_power(data.power)
    d_in, a_ds, d_out = sinkhorn_knopp(power, cfg.sinkhorn_tol, cfg.sinkhorn_max_iter)
    converted = visibility_convert(data, a_ds, d_in)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u0, sst_diag = _sst_guess(converted, a_ds, cfg.sst_clip_tol, cfg.initial_indist)
    params0, _ = reck_decompose(u0)

    recs = data.usable_records()
    if not recs:
        raise InsufficientDataError("dataset has no usable records")
    idx = _quad_index_arrays([r.quad for r in recs])
    v_exp = np.array([r.value for r in recs])
    x0 = d_in / d_in[0]

    best = _refine(dim, idx, v_exp, _eq4_batch, params0.phases, x0, cfg.initial_indist, cfg)

    u_raw = compose_phases(dim, best["phases"])
    row = cfg.canonical_row if cfg.canonical_row is not None else dim
    col = cfg.canonical_col if cfg.canonical_col is not None else 2
    u_canon, axes = _canonicalize_safe(u_raw, row, col)
    u_final = resolve_conjugate_ambiguity(u_canon)
    branch = "U" if u_final is u_canon else "U*"
    params_final, _ = reck_decompose(u_final)

    sink_resid = float(np.max(np.abs(a_ds.sum(axis=0) - 1.0)))
    diagnostics = {
        "n_records": len(data.records),
        "n_usable": len(recs),
        "n_undefined": len(data.records) - len(recs),
        "n_power_floored": n_floored,
        "sinkhorn_residual": sink_resid,
        "canonical_axes": axes,
        "start_costs": best["start_costs"],
        "best_start": best["start"],
        "total_nfev": best["total_nfev"],
        **sst_diag,
    }
    return ReconstructionResult(
        u_opt=u_final,
        params=params_final,
        t_ratios=best["x"],
        i_opt=best["indist"],
        final_cost=best["cost"],
        iterations=best["nfev"],
        converged=bool(best["converged"]),
        branch=branch,
        diagnostics=diagnostics,
    )
