"""Command-line client for the tomography service.

Each subcommand handles local file I/O and posts a JSON request to the
service: an in-process application instance by default, or a remote server
given --server. Exit codes: 0 success, 2 usage, 3 validation failure,
1 runtime failure; failures emit machine-readable JSON on stderr.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx
import numpy as np

from .dataio import (
    FORMAT_VERSION,
    load_config,
    optimizer_from_config,
    read_counts_csv,
    read_dataset,
    read_histogram_csv,
    read_records_csv,
    sweep_to_dict,
    write_counts_csv,
    write_dataset_csv,
    write_power_csv,
    _fmt,
    _open_rows,
    _write_rows,
)
from .errors import FileFormatError, ItomoError
from .sampling import CountsRecord
from .tomography import VisibilityDataset

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3


def _fail(code: int, err_type: str, message: str):
    print(json.dumps({"error": {"type": err_type, "message": message}}), file=sys.stderr)
    sys.exit(code)


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def _post(ctx, path: str, payload: dict) -> dict:
    try:
        with _client(ctx.obj.get("server")) as client:
            resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        _fail(EXIT_RUNTIME, "ConnectionError", f"cannot reach service: {exc}")
    if resp.status_code in (400, 422):
        body = resp.json()
        err = body.get("error") or {"type": "ValidationError", "message": json.dumps(body)}
        _fail(EXIT_VALIDATION, err.get("type", "ValidationError"), err.get("message", ""))
    if resp.status_code != 200:
        _fail(EXIT_RUNTIME, "ServiceError", f"HTTP {resp.status_code}: {resp.text[:500]}")
    return resp.json()


def _parse_grid(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise click.BadParameter("grid ranges use start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise click.BadParameter("grid step must be positive")
        values = []
        k = 0
        while start + k * step <= stop + 1e-12:
            values.append(round(start + k * step, 12))
            k += 1
        return values
    return [float(p) for p in text.split(",")]


def _parse_ints(text: str) -> list[int]:
    return [int(p) for p in text.split(",")]


def _parse_floats(text: str) -> list[float]:
    return [float(p) for p in text.split(",")]


def _dataset_payload(data: VisibilityDataset) -> dict:
    return {
        "dim": data.dim,
        "records": [
            {"i": r.quad.i, "j": r.quad.j, "k": r.quad.k, "l": r.quad.l,
             "value": r.value, "sigma": r.sigma, "flag": r.flag}
            for r in data.records
        ],
        "power": data.power.tolist(),
        "power_sigma": None if data.power_sigma is None else data.power_sigma.tolist(),
    }


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; defaults to in-process dispatch.")
@click.pass_context
def main(ctx, server):
    """Interferometer tomography from two-photon cross-correlation visibilities."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--dim", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--indist", type=float, default=0.9, show_default=True,
              help="Photon indistinguishability used to synthesize the data.")
@click.option("--loss-low", type=float, default=0.5, show_default=True)
@click.option("--loss-high", type=float, default=1.0, show_default=True)
@click.option("--mode", type=click.Choice(["full", "linear"]), default="full", show_default=True)
@click.option("--sigma", type=float, default=0.0, show_default=True,
              help="Multiplicative Gaussian noise level.")
@click.option("--noise-seed", type=int, default=0, show_default=True)
@click.option("--out-data", type=click.Path(), required=True)
@click.option("--out-power", type=click.Path(), required=True)
@click.option("--out-truth", type=click.Path(), default=None,
              help="Also write the ground-truth unitary as matrix JSON.")
@click.pass_context
def simulate(ctx, dim, seed, indist, loss_low, loss_high, mode, sigma, noise_seed,
             out_data, out_power, out_truth):
    """Synthesize a visibility dataset from a random lossy interferometer."""
    payload = {
        "dim": dim, "seed": seed, "indistinguishability": indist,
        "loss_low": loss_low, "loss_high": loss_high, "mode": mode,
        "sigma": sigma, "noise_seed": noise_seed,
    }
    body = _post(ctx, "/simulate", payload)
    data = _dataset_from_payload(body["dataset"])
    write_dataset_csv(out_data, data)
    write_power_csv(out_power, data.power, data.power_sigma)
    if out_truth:
        truth = body["truth"]
        with open(out_truth, "w") as fh:
            json.dump({"format_version": FORMAT_VERSION, **truth}, fh)
    click.echo(f"wrote {len(data.records)} records to {out_data}")


def _dataset_from_payload(payload: dict) -> VisibilityDataset:
    from .optics import ModeQuad
    from .tomography import VisibilityRecord

    records = [
        VisibilityRecord(ModeQuad(r["i"], r["j"], r["k"], r["l"]),
                         r["value"], r.get("sigma", 0.0), r.get("flag", "valid"))
        for r in payload["records"]
    ]
    return VisibilityDataset(
        dim=payload["dim"],
        records=records,
        power=np.asarray(payload["power"], dtype=float),
        power_sigma=None if payload.get("power_sigma") is None
        else np.asarray(payload["power_sigma"], dtype=float),
    )


@main.command()
@click.option("--manifest", type=click.Path(exists=True), required=True,
              help="CSV listing i,j,k,l,counts_file,meta_file per histogram.")
@click.option("--window-fraction", type=float, default=0.4, show_default=True)
@click.option("--side-peaks", type=int, default=5, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def ingest(ctx, manifest, window_fraction, side_peaks, out):
    """Integrate histogram peaks into visibility records."""
    base = Path(manifest).parent
    rows = _open_rows(manifest)
    header = ["i", "j", "k", "l", "counts_file", "meta_file"]
    if not rows or [c.strip() for c in rows[0]] != header:
        raise FileFormatError(f"{manifest}: expected header {','.join(header)}")
    histograms = []
    for row in rows[1:]:
        counts = read_histogram_csv(base / row[4].strip())
        with open(base / row[5].strip()) as fh:
            meta = json.load(fh)
        histograms.append({
            "i": int(row[0]), "j": int(row[1]), "k": int(row[2]), "l": int(row[3]),
            "bin_width": meta["bin_width"], "pump_period": meta["pump_period"],
            "t0_offset": meta["t0_offset"], "counts": counts.tolist(),
        })
    body = _post(ctx, "/ingest", {
        "histograms": histograms,
        "window_fraction": window_fraction,
        "n_side_peaks": side_peaks,
    })
    recs = body["records"]
    _write_rows(out, ("i", "j", "k", "l", "V", "sigma", "flag"),
                [(r["i"], r["j"], r["k"], r["l"], _fmt(r["value"]), _fmt(r["sigma"]), r["flag"])
                 for r in recs])
    click.echo(f"wrote {len(recs)} records to {out}")


@main.command()
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--power", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--n-starts", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--out-matrix", type=click.Path(), default=None,
              help="Also write the bare canonical matrix JSON.")
@click.pass_context
def reconstruct(ctx, data, power, config_path, seed, n_starts, out, out_matrix):
    """Reconstruct the transfer matrix from a visibility dataset."""
    dataset = read_dataset(data, power)
    cfg = optimizer_from_config(load_config(config_path), seed=seed, n_starts=n_starts)
    payload = {
        "dataset": _dataset_payload(dataset),
        "config": {
            "seed": cfg.seed, "n_starts": cfg.n_starts, "max_nfev": cfg.max_nfev,
            "ftol": cfg.ftol, "xtol": cfg.xtol, "gtol": cfg.gtol,
            "initial_indist": cfg.initial_indist, "sst_clip_tol": cfg.sst_clip_tol,
            "canonical_row": cfg.canonical_row, "canonical_col": cfg.canonical_col,
            "measurement_mode": cfg.measurement_mode,
        },
    }
    body = _post(ctx, "/reconstruct", payload)
    with open(out, "w") as fh:
        json.dump({"format_version": FORMAT_VERSION, **body}, fh, indent=2)
    if out_matrix:
        with open(out_matrix, "w") as fh:
            json.dump({"format_version": FORMAT_VERSION, **body["u_opt"]}, fh)
    click.echo(f"cost {body['final_cost']:.3e}, converged={body['converged']}, "
               f"I={body['i_opt']:.4f}")


@main.command()
@click.option("--axis", type=click.Choice(["noise", "modes"]), required=True)
@click.option("--dims", default="4", show_default=True,
              help="Dimension(s): one value for noise sweeps, a list for mode sweeps.")
@click.option("--grid", required=True,
              help="Grid values, comma list or start:stop:step.")
@click.option("--trials", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sigma", type=float, default=0.1, show_default=True,
              help="Noise level for mode sweeps.")
@click.option("--n-starts", type=int, default=4, show_default=True)
@click.option("--max-nfev", type=int, default=300, show_default=True)
@click.option("--mode", type=click.Choice(["full", "linear"]), default="full", show_default=True)
@click.option("--out-csv", type=click.Path(), default=None)
@click.option("--out-json", type=click.Path(), default=None)
@click.pass_context
def benchmark(ctx, axis, dims, grid, trials, seed, sigma, n_starts, max_nfev, mode,
              out_csv, out_json):
    """Sweep noise level or mode count and compare the three methods."""
    grid_values = _parse_grid(grid)
    dim_values = _parse_ints(dims)
    if axis == "modes":
        grid_values = [float(int(g)) for g in grid_values]
    payload = {
        "axis": axis, "grid": grid_values, "dims": dim_values, "trials": trials,
        "seed": seed, "sigma": sigma, "n_starts": n_starts, "max_nfev": max_nfev,
        "mode": mode,
    }
    body = _post(ctx, "/benchmark", payload)
    if out_csv:
        rows = []
        for pt in body["points"]:
            for method, st in pt["methods"].items():
                rows.append((body["axis"], _fmt(pt["x"]), method, _fmt(st["median"]),
                             _fmt(st["p05"]), _fmt(st["p95"]), st["n_trials"], st["n_failed"]))
        _write_rows(out_csv, ("axis", "x", "method", "median", "p05", "p95",
                              "n_trials", "n_failed"), rows)
    if out_json:
        with open(out_json, "w") as fh:
            json.dump({"format_version": FORMAT_VERSION, **body}, fh, indent=2)
    for pt in body["points"]:
        stats = ", ".join(f"{m}={st['median']:.4f}" for m, st in sorted(pt["methods"].items()))
        click.echo(f"x={pt['x']:g}: {stats}")


@main.command()
@click.option("--matrix", type=click.Path(exists=True), required=True)
@click.option("--t-in", default=None, help="Comma list of input amplitude transmissions.")
@click.option("--t-out", default=None, help="Comma list of output amplitude transmissions.")
@click.option("--indist", type=float, default=0.9, show_default=True)
@click.option("--g2", type=float, default=0.0, show_default=True)
@click.option("--p-emit", type=float, default=1.0, show_default=True)
@click.option("--pairs", default=None, help="Input pairs like '1,2;1,3'; default all pairs.")
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def sample(ctx, matrix, t_in, t_out, indist, g2, p_emit, pairs, out):
    """Predict two-photon counting records for chosen input pairs."""
    with open(matrix) as fh:
        mat = json.load(fh)
    dim = int(mat["dim"])
    t_in_vals = _parse_floats(t_in) if t_in else [1.0] * dim
    t_out_vals = _parse_floats(t_out) if t_out else [1.0] * dim
    if pairs:
        pair_list = [tuple(int(x) for x in p.split(",")) for p in pairs.split(";")]
    else:
        pair_list = [(i, j) for i in range(1, dim + 1) for j in range(i + 1, dim + 1)]
    payload = {
        "matrix": {"dim": dim, "re": mat["re"], "im": mat["im"]},
        "loss": {"t_in": t_in_vals, "t_out": t_out_vals},
        "source": {"indistinguishability": indist, "g2_0": g2, "p_emit": p_emit},
        "input_pairs": [list(p) for p in pair_list],
    }
    body = _post(ctx, "/sample", payload)
    records = [
        CountsRecord(input_pair=(r["input_i"], r["input_j"]),
                     singles=np.asarray(r["singles"]),
                     coincidences=np.asarray(r["coincidences"]))
        for r in body["records"]
    ]
    write_counts_csv(out, records)
    click.echo(f"wrote {len(records)} records to {out}")


@main.command()
@click.option("--matrix", type=click.Path(exists=True), required=True)
@click.option("--counts", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-starts", type=int, default=8, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def fit(ctx, matrix, counts, seed, n_starts, out):
    """Fit source and loss parameters to observed counting records."""
    with open(matrix) as fh:
        mat = json.load(fh)
    records = read_counts_csv(counts)
    payload = {
        "matrix": {"dim": int(mat["dim"]), "re": mat["re"], "im": mat["im"]},
        "records": [
            {"input_i": r.input_pair[0], "input_j": r.input_pair[1],
             "singles": r.singles.tolist(), "coincidences": r.coincidences.tolist()}
            for r in records
        ],
        "seed": seed,
        "n_starts": n_starts,
    }
    body = _post(ctx, "/fit", payload)
    with open(out, "w") as fh:
        json.dump({"format_version": FORMAT_VERSION, **body}, fh, indent=2)
    click.echo(f"I={body['indistinguishability']:.4f} p_emit={body['p_emit']:.4f} "
               f"mean F_c={body['mean_classical_fidelity']:.4f}")


@main.command()
@click.option("--V", "v", type=float, required=True)
@click.option("--R", "r", type=float, required=True)
@click.option("--T", "t", type=float, required=True)
@click.option("--reta", type=float, default=1.0, show_default=True)
@click.option("--g2", type=float, default=0.0, show_default=True)
@click.pass_context
def hom(ctx, v, r, t, reta, g2):
    """Indistinguishability from a HOM-dip visibility on a beam splitter."""
    body = _post(ctx, "/hom", {"v": v, "r": r, "t": t, "r_eta": reta, "g2_0": g2})
    click.echo(json.dumps(body))


def entrypoint():
    try:
        main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(exc.format_message(), err=True)
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_RUNTIME)
    except click.exceptions.Abort:
        sys.exit(EXIT_RUNTIME)
    except FileFormatError as exc:
        _fail(EXIT_VALIDATION, "FileFormatError", str(exc))
    except ItomoError as exc:
        _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))


if __name__ == "__main__":
    entrypoint()
