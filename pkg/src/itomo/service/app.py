"""HTTP service exposing the tomography pipeline.

Run with: uvicorn itomo.service.app:app
"""
from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..bench import BenchConfig, add_noise, generate_instance, run_sweep
from ..errors import ItomoError
from ..histograms import Histogram, ingest_histogram
from ..optics import LossModel, ModeQuad, SourceModel, hom_indistinguishability
from ..sampling import (
    classical_fidelity,
    fit_source,
    normalized_coincidences,
    normalized_singles,
    predict_counts,
)
from ..tomography import OptimizerConfig, VisibilityRecord, reconstruct
from .schemas import (
    BenchmarkRequest,
    BenchmarkResponse,
    CountsModel,
    DatasetModel,
    FitRequest,
    FitResponse,
    HealthResponse,
    HomRequest,
    HomResponse,
    IngestRequest,
    IngestResponse,
    LossPayload,
    MatrixModel,
    RecordModel,
    ReconstructRequest,
    ReconstructResponse,
    SampleRequest,
    SampleResponse,
    SimulateRequest,
    SimulateResponse,
)

app = FastAPI(title="itomo", version=__version__)


@app.exception_handler(ItomoError)
async def domain_error_handler(request: Request, exc: ItomoError):
    return JSONResponse(
        status_code=400,
        content={"error": {"type": type(exc).__name__, "message": str(exc)}},
    )


@app.exception_handler(ValueError)
async def value_error_handler(request: Request, exc: ValueError):
    return JSONResponse(
        status_code=400,
        content={"error": {"type": "ValueError", "message": str(exc)}},
    )


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    inst = generate_instance(req.dim, req.seed, req.loss_low, req.loss_high,
                             req.indistinguishability, req.mode)
    data = inst.dataset
    if req.sigma > 0.0:
        data = add_noise(data, req.sigma, req.noise_seed)
    return SimulateResponse(
        dataset=DatasetModel.from_dataset(data),
        truth=MatrixModel.from_array(inst.u_true),
        loss=LossPayload(t_in=inst.loss.t_in.tolist(), t_out=inst.loss.t_out.tolist()),
    )


@app.post("/reconstruct", response_model=ReconstructResponse)
def reconstruct_endpoint(req: ReconstructRequest) -> ReconstructResponse:
    data = req.dataset.to_dataset()
    result = reconstruct(data, req.config.to_config())
    return ReconstructResponse.from_result(result)


@app.post("/benchmark", response_model=BenchmarkResponse)
def benchmark(req: BenchmarkRequest) -> BenchmarkResponse:
    cfg = BenchConfig(seed=req.seed, n_starts=req.n_starts, max_nfev=req.max_nfev,
                      sigma=req.sigma, mode=req.mode)
    grid = req.grid if req.axis == "noise" else [int(g) for g in req.grid]
    result = run_sweep(req.axis, grid, req.dims, req.trials, cfg)
    return BenchmarkResponse.from_result(result)


@app.post("/sample", response_model=SampleResponse)
def sample(req: SampleRequest) -> SampleResponse:
    u = req.matrix.to_array()
    loss = LossModel(t_in=np.asarray(req.loss.t_in), t_out=np.asarray(req.loss.t_out))
    src = SourceModel(
        indistinguishability=req.source.indistinguishability,
        g2_0=req.source.g2_0, c1=req.source.c1, c2=req.source.c2,
        p_emit=req.source.p_emit,
    )
    records = [predict_counts(u, loss, src, pair) for pair in req.input_pairs]
    return SampleResponse(records=[CountsModel.from_record(r) for r in records])


@app.post("/fit", response_model=FitResponse)
def fit(req: FitRequest) -> FitResponse:
    u = req.matrix.to_array()
    observed = [r.to_record() for r in req.records]
    cfg = OptimizerConfig(seed=req.seed, n_starts=req.n_starts, max_nfev=req.max_nfev)
    result = fit_source(u, observed, cfg)
    loss = LossModel(t_in=result.t_in, t_out=result.t_out)
    src = SourceModel(indistinguishability=result.indistinguishability,
                      p_emit=result.p_emit)
    fids = []
    for rec in observed:
        pred = predict_counts(u, loss, src, rec.input_pair)
        fids.append(classical_fidelity(normalized_singles(pred), normalized_singles(rec)))
        fids.append(classical_fidelity(normalized_coincidences(pred),
                                       normalized_coincidences(rec)))
    return FitResponse(
        t_in=result.t_in.tolist(),
        t_out=result.t_out.tolist(),
        indistinguishability=result.indistinguishability,
        p_emit=result.p_emit,
        residual=result.residual,
        mean_classical_fidelity=float(np.mean(fids)),
    )


@app.post("/hom", response_model=HomResponse)
def hom(req: HomRequest) -> HomResponse:
    res = hom_indistinguishability(req.v, req.r, req.t, req.r_eta, req.g2_0)
    return HomResponse(indistinguishability=res.value, raw=res.raw, clamped=res.clamped)


@app.post("/ingest", response_model=IngestResponse)
def ingest(req: IngestRequest) -> IngestResponse:
    records = []
    for payload in req.histograms:
        hist = Histogram(
            bin_width=payload.bin_width,
            counts=np.asarray(payload.counts),
            t0_offset=payload.t0_offset,
            pump_period=payload.pump_period,
        )
        try:
            v, sigma = ingest_histogram(hist, req.window_fraction, req.n_side_peaks)
            rec = VisibilityRecord(ModeQuad(payload.i, payload.j, payload.k, payload.l),
                                   v, sigma)
        except ItomoError:
            rec = VisibilityRecord(ModeQuad(payload.i, payload.j, payload.k, payload.l),
                                   0.0, 0.0, "undefined")
        records.append(RecordModel.from_record(rec))
    return IngestResponse(records=records)
