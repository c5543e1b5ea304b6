"""Pydantic request/response models for the HTTP service."""
from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..bench import SweepResult
from ..optics import ModeQuad
from ..sampling import CountsRecord
from ..tomography import (
    OptimizerConfig,
    ReconstructionResult,
    VisibilityDataset,
    VisibilityRecord,
)


class MatrixModel(BaseModel):
    dim: int
    re: list[list[float]]
    im: list[list[float]]

    @classmethod
    def from_array(cls, m) -> "MatrixModel":
        m = np.asarray(m, dtype=complex)
        return cls(dim=m.shape[0], re=m.real.tolist(), im=m.imag.tolist())

    def to_array(self) -> np.ndarray:
        return np.asarray(self.re, dtype=float) + 1j * np.asarray(self.im, dtype=float)


class RecordModel(BaseModel):
    i: int
    j: int
    k: int
    l: int
    value: float
    sigma: float = 0.0
    flag: Literal["valid", "undefined", "clipped"] = "valid"

    @classmethod
    def from_record(cls, rec: VisibilityRecord) -> "RecordModel":
        return cls(i=rec.quad.i, j=rec.quad.j, k=rec.quad.k, l=rec.quad.l,
                   value=rec.value, sigma=rec.sigma, flag=rec.flag)

    def to_record(self) -> VisibilityRecord:
        return VisibilityRecord(ModeQuad(self.i, self.j, self.k, self.l),
                                self.value, self.sigma, self.flag)


class DatasetModel(BaseModel):
    dim: int
    records: list[RecordModel]
    power: list[list[float]]
    power_sigma: Optional[list[list[float]]] = None

    @classmethod
    def from_dataset(cls, data: VisibilityDataset) -> "DatasetModel":
        return cls(
            dim=data.dim,
            records=[RecordModel.from_record(r) for r in data.records],
            power=data.power.tolist(),
            power_sigma=None if data.power_sigma is None else data.power_sigma.tolist(),
        )

    def to_dataset(self) -> VisibilityDataset:
        return VisibilityDataset(
            dim=self.dim,
            records=[r.to_record() for r in self.records],
            power=np.asarray(self.power, dtype=float),
            power_sigma=None if self.power_sigma is None
            else np.asarray(self.power_sigma, dtype=float),
        )


class OptimizerModel(BaseModel):
    seed: int = 0
    n_starts: int = 16
    max_nfev: int = 500
    ftol: float = 1e-12
    xtol: float = 1e-12
    gtol: float = 1e-12
    initial_indist: float = 0.9
    sst_clip_tol: float = 0.2
    canonical_row: Optional[int] = None
    canonical_col: Optional[int] = None
    measurement_mode: Literal["full", "linear"] = "full"

    def to_config(self) -> OptimizerConfig:
        return OptimizerConfig(**self.model_dump())


class SimulateRequest(BaseModel):
    dim: int = Field(ge=2)
    seed: int = 0
    indistinguishability: float = 0.9
    loss_low: float = 0.5
    loss_high: float = 1.0
    mode: Literal["full", "linear"] = "full"
    sigma: float = 0.0
    noise_seed: int = 0


class LossPayload(BaseModel):
    t_in: list[float]
    t_out: list[float]


class SimulateResponse(BaseModel):
    dataset: DatasetModel
    truth: MatrixModel
    loss: LossPayload


class ReconstructRequest(BaseModel):
    dataset: DatasetModel
    config: OptimizerModel = OptimizerModel()


class ReconstructResponse(BaseModel):
    u_opt: MatrixModel
    params: list[float]
    t_ratios: list[float]
    i_opt: float
    final_cost: float
    iterations: int
    converged: bool
    branch: Literal["U", "U*"]
    diagnostics: dict

    @classmethod
    def from_result(cls, res: ReconstructionResult) -> "ReconstructResponse":
        diag = {}
        for key, val in res.diagnostics.items():
            if isinstance(val, np.ndarray):
                val = val.tolist()
            elif isinstance(val, tuple):
                val = list(val)
            elif isinstance(val, (np.integer, np.floating)):
                val = val.item()
            diag[key] = val
        return cls(
            u_opt=MatrixModel.from_array(res.u_opt),
            params=res.params.phases.tolist(),
            t_ratios=res.t_ratios.tolist(),
            i_opt=res.i_opt,
            final_cost=res.final_cost,
            iterations=res.iterations,
            converged=res.converged,
            branch=res.branch,
            diagnostics=diag,
        )


class BenchmarkRequest(BaseModel):
    axis: Literal["noise", "modes"]
    grid: list[float]
    dims: list[int]
    trials: int = Field(ge=10)
    seed: int = 0
    sigma: float = 0.1
    n_starts: int = 4
    max_nfev: int = 300
    mode: Literal["full", "linear"] = "full"


class MethodStatsModel(BaseModel):
    median: float
    p05: float
    p95: float
    n_trials: int
    n_failed: int


class SweepPointModel(BaseModel):
    x: float
    methods: dict[str, MethodStatsModel]


class BenchmarkResponse(BaseModel):
    axis: str
    points: list[SweepPointModel]

    @classmethod
    def from_result(cls, res: SweepResult) -> "BenchmarkResponse":
        return cls(
            axis=res.axis,
            points=[
                SweepPointModel(
                    x=pt.x,
                    methods={m: MethodStatsModel(**vars(st)) for m, st in pt.methods.items()},
                )
                for pt in res.points
            ],
        )


class SourcePayload(BaseModel):
    indistinguishability: float = 0.9
    g2_0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    p_emit: float = 1.0


class CountsModel(BaseModel):
    input_i: int
    input_j: int
    singles: list[float]
    coincidences: list[list[float]]

    @classmethod
    def from_record(cls, rec: CountsRecord) -> "CountsModel":
        return cls(input_i=rec.input_pair[0], input_j=rec.input_pair[1],
                   singles=rec.singles.tolist(), coincidences=rec.coincidences.tolist())

    def to_record(self) -> CountsRecord:
        return CountsRecord(
            input_pair=(self.input_i, self.input_j),
            singles=np.asarray(self.singles, dtype=float),
            coincidences=np.asarray(self.coincidences, dtype=float),
        )


class SampleRequest(BaseModel):
    matrix: MatrixModel
    loss: LossPayload
    source: SourcePayload = SourcePayload()
    input_pairs: list[tuple[int, int]]


class SampleResponse(BaseModel):
    records: list[CountsModel]


class FitRequest(BaseModel):
    matrix: MatrixModel
    records: list[CountsModel]
    seed: int = 0
    n_starts: int = 8
    max_nfev: int = 400


class FitResponse(BaseModel):
    t_in: list[float]
    t_out: list[float]
    indistinguishability: float
    p_emit: float
    residual: float
    mean_classical_fidelity: float


class HomRequest(BaseModel):
    v: float
    r: float
    t: float
    r_eta: float = 1.0
    g2_0: float = 0.0


class HomResponse(BaseModel):
    indistinguishability: float
    raw: float
    clamped: bool


class HistogramPayload(BaseModel):
    i: int
    j: int
    k: int
    l: int
    bin_width: float
    pump_period: float
    t0_offset: float
    counts: list[int]


class IngestRequest(BaseModel):
    histograms: list[HistogramPayload]
    window_fraction: float = 0.4
    n_side_peaks: int = 5


class IngestResponse(BaseModel):
    records: list[RecordModel]


class HealthResponse(BaseModel):
    status: str
    version: str
