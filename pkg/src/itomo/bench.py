"""Synthetic instances, noise injection, baseline methods, and sweep experiments.

The sweeps reproduce the benchmarking protocol: draw a Haar unitary with
uniform losses, synthesize the visibility dataset, perturb it with
multiplicative Gaussian noise, reconstruct with the full pipeline and the two
baselines, and score canonicalized, branch-resolved fidelities against the
truth with nonparametric 90% confidence intervals.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ItomoError, UndefinedVisibilityError
from .matrices import (
    canonicalize_phases,
    haar_random_unitary,
    matrix_fidelity,
    resolve_conjugate_ambiguity,
)
from .optics import LossModel, ModeQuad, apply_losses, power_matrix, visibility
from .reck import compose_phases, reck_decompose
from .tomography import (
    FLAG_CLIPPED,
    FLAG_UNDEFINED,
    FLAG_VALID,
    ConvertedRecord,
    OptimizerConfig,
    VisibilityDataset,
    VisibilityRecord,
    _lo_batch,
    _quad_index_arrays,
    _refine,
    _sst_guess,
    floor_power,
    measurement_plan,
    reconstruct,
    sinkhorn_knopp,
    visibility_convert,
)

METHODS = ("this_work", "tillmann", "sst")


@dataclass
class SyntheticInstance:
    u_true: np.ndarray
    loss: LossModel
    i_true: float
    seed: int
    dataset: VisibilityDataset
    mode: str = "full"


@dataclass
class TillmannDataset:
    """Two-run visibilities (indistinguishable normalized by distinguishable)."""

    dim: int
    records: list[ConvertedRecord]
    power: np.ndarray
    power_sigma: np.ndarray | None = None


@dataclass
class MethodStats:
    median: float
    p05: float
    p95: float
    n_trials: int
    n_failed: int


@dataclass
class SweepPoint:
    x: float
    methods: dict[str, MethodStats]


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint]


@dataclass
class BenchConfig:
    """Sweep settings; optimizer fields are shared by this-work and Tillmann."""

    seed: int = 0
    n_starts: int = 4
    max_nfev: int = 300
    sigma: float = 0.1
    loss_low: float = 0.5
    loss_high: float = 1.0
    i_true: float = 0.9
    mode: str = "full"

    def optimizer(self, seed: int) -> OptimizerConfig:
        return OptimizerConfig(seed=seed, n_starts=self.n_starts, max_nfev=self.max_nfev)


def _instance_quads(dim: int, mode: str) -> list[ModeQuad]:
    pairs = sorted(set(measurement_plan(dim, mode)))
    out_pairs = [(k, l) for k in range(1, dim + 1) for l in range(k + 1, dim + 1)]
    return [ModeQuad(i, j, k, l) for (i, j) in pairs for (k, l) in out_pairs]


def generate_instance(
    dim: int,
    seed: int,
    loss_low: float = 0.5,
    loss_high: float = 1.0,
    indist: float = 0.9,
    mode: str = "full",
) -> SyntheticInstance:
    """Haar unitary + uniform losses + noiseless visibility dataset.

    Transmission squares t² and t'² are drawn uniformly on
    [sqrt(loss_low), sqrt(loss_high)] so every product t_i²·t'_j² lies in
    [loss_low, loss_high]. Regenerating with the same seed is bit-identical.
    """
    if not 0.0 < loss_low <= loss_high <= 1.0:
        raise ValueError(f"invalid loss range [{loss_low}, {loss_high}]")
    rng = np.random.default_rng(seed)
    u_seed = int(rng.integers(2 ** 62))
    u = haar_random_unitary(dim, u_seed)
    lo, hi = np.sqrt(loss_low), np.sqrt(loss_high)
    t_in = np.sqrt(rng.uniform(lo, hi, size=dim))
    t_out = np.sqrt(rng.uniform(lo, hi, size=dim))
    loss = LossModel(t_in=t_in, t_out=t_out)
    records = []
    for quad in _instance_quads(dim, mode):
        x_ij = t_in[quad.i - 1] ** 2 / t_in[quad.j - 1] ** 2
        try:
            v = visibility(u, x_ij, indist, quad)
            records.append(VisibilityRecord(quad=quad, value=v))
        except UndefinedVisibilityError:
            records.append(VisibilityRecord(quad=quad, value=0.0, flag=FLAG_UNDEFINED))
    power = power_matrix(apply_losses(u, loss))
    dataset = VisibilityDataset(dim=dim, records=records, power=power,
                                power_sigma=np.zeros((dim, dim)))
    return SyntheticInstance(u_true=u, loss=loss, i_true=indist, seed=seed,
                             dataset=dataset, mode=mode)


def add_noise(data: VisibilityDataset, sigma: float, seed: int) -> VisibilityDataset:
    """Multiplicative Gaussian noise on every record value and power entry.

    Each quantity is scaled by (1 + N(0, sigma²)) with independent draws;
    negative results are floored at 0 and flagged clipped. The applied sigma
    is recorded into the per-record and per-entry uncertainties.
    """
    if sigma < 0.0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    rng = np.random.default_rng(seed)
    records = []
    for rec in data.records:
        if rec.flag == FLAG_UNDEFINED:
            records.append(VisibilityRecord(rec.quad, rec.value, rec.sigma, rec.flag))
            continue
        noisy = rec.value * (1.0 + sigma * rng.standard_normal())
        flag = rec.flag
        if noisy < 0.0:
            noisy = 0.0
            flag = FLAG_CLIPPED
        records.append(VisibilityRecord(rec.quad, float(noisy), sigma * rec.value, flag))
    power = data.power * (1.0 + sigma * rng.standard_normal(data.power.shape))
    power = np.maximum(power, 0.0)
    return VisibilityDataset(dim=data.dim, records=records, power=power,
                             power_sigma=sigma * data.power)


def make_tillmann_dataset(inst: SyntheticInstance, sigma: float, seed: int) -> TillmannDataset:
    """Synthesize the two-run dataset the Tillmann baseline consumes.

    Each record is the combined two-run visibility V' = 1 + (V_I - 1)/V_0
    (indistinguishable run normalized by the distinguishable one), perturbed
    by the same multiplicative Gaussian noise model as the single-run data;
    records whose distinguishable run vanishes are flagged undefined. The
    protocol still costs twice the measurements at equal record count.
    """
    rng = np.random.default_rng(seed)
    t_in = inst.loss.t_in
    records = []
    for rec in inst.dataset.records:
        quad = rec.quad
        if rec.flag == FLAG_UNDEFINED:
            records.append(ConvertedRecord(quad, 0.0, 0.0, FLAG_UNDEFINED))
            continue
        x_ij = t_in[quad.i - 1] ** 2 / t_in[quad.j - 1] ** 2
        v_0 = visibility(inst.u_true, x_ij, 0.0, quad)
        if v_0 < 1e-9:
            records.append(ConvertedRecord(quad, 0.0, 0.0, FLAG_UNDEFINED))
            continue
        vprime = (1.0 + (rec.value - 1.0) / v_0) * (1.0 + sigma * rng.standard_normal())
        records.append(ConvertedRecord(quad, float(vprime), 0.0, FLAG_VALID))
    power = inst.dataset.power * (1.0 + sigma * rng.standard_normal(inst.dataset.power.shape))
    power = np.maximum(power, 0.0)
    return TillmannDataset(dim=inst.dataset.dim, records=records, power=power,
                           power_sigma=sigma * inst.dataset.power)


def baseline_sst(data: VisibilityDataset, cfg: OptimizerConfig | None = None) -> np.ndarray:
    """Pipeline truncated after the analytic initial guess (no optimization)."""
    if cfg is None:
        cfg = OptimizerConfig()
    power, _ = floor_power(data.power)
    d_in, a_ds, _ = sinkhorn_knopp(power, cfg.sinkhorn_tol, cfg.sinkhorn_max_iter)
    converted = visibility_convert(data, a_ds, d_in)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u0, _ = _sst_guess(converted, a_ds, cfg.sst_clip_tol, cfg.initial_indist)
    row = cfg.canonical_row if cfg.canonical_row is not None else data.dim
    col = cfg.canonical_col if cfg.canonical_col is not None else 2
    return resolve_conjugate_ambiguity(canonicalize_phases(u0, row, col))


def baseline_tillmann(data: TillmannDataset, cfg: OptimizerConfig | None = None) -> np.ndarray:
    """Optimization against two-run visibilities with the indistinguishability term.

    Same optimizer machinery as the main pipeline, but the model is the
    two-run form (central-peak area ratio of the indistinguishable and
    distinguishable runs).
    """
    if cfg is None:
        cfg = OptimizerConfig()
    dim = data.dim
    power, _ = floor_power(data.power)
    d_in, a_ds, _ = sinkhorn_knopp(power, cfg.sinkhorn_tol, cfg.sinkhorn_max_iter)
    x0 = d_in / d_in[0]
    # The analytic guess needs each record's bunch/cross ratio estimate.
    guess_records = []
    for rec in data.records:
        if rec.flag == FLAG_UNDEFINED:
            guess_records.append(rec)
            continue
        i, j, k, l = rec.quad.i - 1, rec.quad.j - 1, rec.quad.k - 1, rec.quad.l - 1
        cross = a_ds[k, i] * a_ds[l, j] + a_ds[k, j] * a_ds[l, i]
        if cross < 1e-12:
            guess_records.append(ConvertedRecord(rec.quad, rec.value, 0.0, FLAG_UNDEFINED))
            continue
        x_ij = x0[i] / x0[j]
        bunch = x_ij * a_ds[k, i] * a_ds[l, i] + (a_ds[k, j] * a_ds[l, j]) / x_ij
        guess_records.append(ConvertedRecord(rec.quad, rec.value, bunch / cross, rec.flag))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u0, _ = _sst_guess(guess_records, a_ds, cfg.sst_clip_tol, cfg.initial_indist)
    p0, _ = reck_decompose(u0)
    usable = [r for r in data.records if r.flag != FLAG_UNDEFINED]
    idx = _quad_index_arrays([r.quad for r in usable])
    v_exp = np.array([r.value for r in usable])
    best = _refine(dim, idx, v_exp, _lo_batch, p0.phases, x0, cfg.initial_indist, cfg)
    u_raw = compose_phases(dim, best["phases"])
    row = cfg.canonical_row if cfg.canonical_row is not None else dim
    col = cfg.canonical_col if cfg.canonical_col is not None else 2
    return resolve_conjugate_ambiguity(canonicalize_phases(u_raw, row, col))


def scored_fidelity(u_true: np.ndarray, u_est: np.ndarray) -> float:
    """Fidelity after canonicalization and conjugate-branch resolution."""
    ref = canonicalize_phases(u_true)
    est = canonicalize_phases(u_est)
    est = resolve_conjugate_ambiguity(est, reference=ref)
    return matrix_fidelity(ref, est)


def _run_trial(dim, sigma, trial_seed, cfg: BenchConfig):
    ss = np.random.SeedSequence(trial_seed)
    s_inst, s_noise, s_till, s_opt1, s_opt2 = [int(c.generate_state(1)[0]) for c in ss.spawn(5)]
    inst = generate_instance(dim, s_inst, cfg.loss_low, cfg.loss_high, cfg.i_true, cfg.mode)
    noisy = add_noise(inst.dataset, sigma, s_noise)
    till = make_tillmann_dataset(inst, sigma, s_till)
    fidelities = {}
    failures = {}
    for method in METHODS:
        try:
            if method == "this_work":
                res = reconstruct(noisy, cfg.optimizer(s_opt1))
                u_est = res.u_opt
            elif method == "tillmann":
                u_est = baseline_tillmann(till, cfg.optimizer(s_opt2))
            else:
                u_est = baseline_sst(noisy)
            fidelities[method] = scored_fidelity(inst.u_true, u_est)
            failures[method] = False
        except ItomoError:
            fidelities[method] = 0.0
            failures[method] = True
    return fidelities, failures


def run_sweep(axis: str, grid, dims, trials: int, cfg: BenchConfig | None = None) -> SweepResult:
    """Noise or mode sweep over all three methods.

    axis="noise": grid is a list of sigma values, dims a single-entry list.
    axis="modes": grid is a list of dimensions, noise fixed at cfg.sigma.
    Per-trial seeds derive from (cfg.seed, point index, trial index), so the
    result is reproducible bit-exactly and trial order never matters.
    Individual trial failures score fidelity 0 and are reported, not fatal.
    """
    if cfg is None:
        cfg = BenchConfig()
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    if trials < 10:
        raise ValueError("need at least 10 trials for confidence intervals")
    if axis == "noise":
        dims = list(dims)
        if len(dims) != 1:
            raise ValueError("noise sweep takes exactly one dimension")
        points = [(float(sigma), dims[0]) for sigma in grid]
    elif axis == "modes":
        points = [(float(dim), int(dim)) for dim in grid]
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")

    root = np.random.SeedSequence(cfg.seed)
    point_seeds = root.spawn(len(points))
    out_points = []
    for (x, dim), pseed in zip(points, point_seeds):
        sigma = x if axis == "noise" else cfg.sigma
        trial_seeds = [int(c.generate_state(1)[0]) for c in pseed.spawn(trials)]
        fids = {m: [] for m in METHODS}
        fails = {m: 0 for m in METHODS}
        for tseed in trial_seeds:
            f, failed = _run_trial(dim, sigma, tseed, cfg)
            for m in METHODS:
                fids[m].append(f[m])
                fails[m] += int(failed[m])
        methods = {}
        for m in METHODS:
            arr = np.array(fids[m])
            methods[m] = MethodStats(
                median=float(np.median(arr)),
                p05=float(np.percentile(arr, 5)),
                p95=float(np.percentile(arr, 95)),
                n_trials=trials,
                n_failed=fails[m],
            )
        out_points.append(SweepPoint(x=x, methods=methods))
    return SweepResult(axis=axis, points=out_points)
