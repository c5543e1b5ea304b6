"""File formats: visibility/power/counts CSV, matrix and result JSON, config.

Every format carries a format_version marker (a `# format_version: N` comment
line for CSV, a "format_version" field for JSON). Floats are written with
repr precision so write-then-read round-trips exactly at double precision.
"""
from __future__ import annotations

import configparser
import csv
import json
import os
from dataclasses import asdict

import numpy as np

from .bench import MethodStats, SweepPoint, SweepResult
from .errors import FileFormatError
from .matrices import matrix_from_dict, matrix_to_dict
from .optics import ModeQuad
from .sampling import CountsRecord
from .tomography import (
    OptimizerConfig,
    ReconstructionResult,
    VisibilityDataset,
    VisibilityRecord,
)

FORMAT_VERSION = 1
_VERSION_LINE = f"# format_version: {FORMAT_VERSION}"


def _fmt(x: float) -> str:
    return repr(float(x))


def _open_rows(path):
    with open(path, "r", newline="") as fh:
        lines = [ln for ln in fh if ln.strip()]
    version = None
    body = []
    for ln in lines:
        if ln.startswith("#"):
            if "format_version" in ln:
                version = int(ln.split(":")[1])
            continue
        body.append(ln)
    if version is not None and version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: format_version {version} unsupported")
    return list(csv.reader(body))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(_VERSION_LINE + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_dataset_csv(path, data: VisibilityDataset):
    rows = [
        (rec.quad.i, rec.quad.j, rec.quad.k, rec.quad.l, _fmt(rec.value), _fmt(rec.sigma), rec.flag)
        for rec in data.records
    ]
    _write_rows(path, ("i", "j", "k", "l", "V", "sigma", "flag"), rows)


def read_records_csv(path) -> list[VisibilityRecord]:
    rows = _open_rows(path)
    if not rows or [c.strip() for c in rows[0]] != ["i", "j", "k", "l", "V", "sigma", "flag"]:
        raise FileFormatError(f"{path}: expected header i,j,k,l,V,sigma,flag")
    records = []
    for row in rows[1:]:
        try:
            i, j, k, l = (int(c) for c in row[:4])
            value, sigma = float(row[4]), float(row[5])
            flag = row[6].strip()
            records.append(VisibilityRecord(ModeQuad(i, j, k, l), value, sigma, flag))
        except (ValueError, IndexError) as exc:
            raise FileFormatError(f"{path}: bad row {row}: {exc}") from exc
    return records


def write_power_csv(path, power, sigma=None):
    power = np.asarray(power, dtype=float)
    n = power.shape[0]
    sig = np.zeros_like(power) if sigma is None else np.asarray(sigma, dtype=float)
    rows = [
        (r + 1, c + 1, _fmt(power[r, c]), _fmt(sig[r, c]))
        for r in range(n)
        for c in range(n)
    ]
    _write_rows(path, ("row", "col", "R", "sigma"), rows)


def read_power_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _open_rows(path)
    if not rows or [c.strip() for c in rows[0]] != ["row", "col", "R", "sigma"]:
        raise FileFormatError(f"{path}: expected header row,col,R,sigma")
    entries = {}
    for row in rows[1:]:
        try:
            r, c = int(row[0]), int(row[1])
            entries[(r, c)] = (float(row[2]), float(row[3]))
        except (ValueError, IndexError) as exc:
            raise FileFormatError(f"{path}: bad row {row}: {exc}") from exc
    if not entries:
        raise FileFormatError(f"{path}: empty power matrix")
    n = max(max(r, c) for r, c in entries)
    power = np.zeros((n, n))
    sigma = np.zeros((n, n))
    for (r, c), (val, sig) in entries.items():
        power[r - 1, c - 1] = val
        sigma[r - 1, c - 1] = sig
    return power, sigma


def read_dataset(data_path, power_path) -> VisibilityDataset:
    records = read_records_csv(data_path)
    power, sigma = read_power_csv(power_path)
    dim = power.shape[0]
    return VisibilityDataset(dim=dim, records=records, power=power, power_sigma=sigma)


def save_matrix_json(path, m):
    payload = {"format_version": FORMAT_VERSION, **matrix_to_dict(m)}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_matrix_json(path) -> np.ndarray:
    with open(path) as fh:
        payload = json.load(fh)
    return matrix_from_dict(payload)


def result_to_dict(res: ReconstructionResult) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "u_opt": matrix_to_dict(res.u_opt),
        "params": {"dim": res.params.dim, "phases": res.params.phases.tolist()},
        "t_ratios": res.t_ratios.tolist(),
        "i_opt": res.i_opt,
        "final_cost": res.final_cost,
        "iterations": res.iterations,
        "converged": res.converged,
        "branch": res.branch,
        "diagnostics": {k: _jsonable(v) for k, v in res.diagnostics.items()},
    }


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, tuple):
        return list(v)
    return v


def write_counts_csv(path, records: list[CountsRecord]):
    rows = []
    for rec in records:
        i, j = rec.input_pair
        for k in range(1, rec.dim + 1):
            rows.append((i, j, "single", k, "", _fmt(rec.singles[k - 1])))
        for k in range(1, rec.dim + 1):
            for l in range(k + 1, rec.dim + 1):
                rows.append((i, j, "coinc", k, l, _fmt(rec.coincidences[k - 1, l - 1])))
    _write_rows(path, ("input_i", "input_j", "kind", "k", "l", "value"), rows)


def read_counts_csv(path) -> list[CountsRecord]:
    rows = _open_rows(path)
    header = ["input_i", "input_j", "kind", "k", "l", "value"]
    if not rows or [c.strip() for c in rows[0]] != header:
        raise FileFormatError(f"{path}: expected header {','.join(header)}")
    singles: dict[tuple, dict] = {}
    coincs: dict[tuple, dict] = {}
    dim = 0
    for row in rows[1:]:
        try:
            pair = (int(row[0]), int(row[1]))
            kind = row[2].strip()
            k = int(row[3])
            value = float(row[5])
            if kind == "single":
                singles.setdefault(pair, {})[k] = value
                dim = max(dim, k)
            elif kind == "coinc":
                l = int(row[4])
                coincs.setdefault(pair, {})[(k, l)] = value
                dim = max(dim, k, l)
            else:
                raise ValueError(f"unknown kind {kind!r}")
        except (ValueError, IndexError) as exc:
            raise FileFormatError(f"{path}: bad row {row}: {exc}") from exc
    records = []
    for pair in sorted(set(singles) | set(coincs)):
        s = np.zeros(dim)
        for k, val in singles.get(pair, {}).items():
            s[k - 1] = val
        c = np.zeros((dim, dim))
        for (k, l), val in coincs.get(pair, {}).items():
            c[k - 1, l - 1] = val
        records.append(CountsRecord(input_pair=pair, singles=s, coincidences=c))
    return records


def sweep_to_dict(res: SweepResult) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "axis": res.axis,
        "points": [
            {"x": pt.x, "methods": {m: asdict(st) for m, st in pt.methods.items()}}
            for pt in res.points
        ],
    }


def write_sweep_json(path, res: SweepResult):
    with open(path, "w") as fh:
        json.dump(sweep_to_dict(res), fh, indent=2)


def write_sweep_csv(path, res: SweepResult):
    rows = []
    for pt in res.points:
        for method, st in pt.methods.items():
            rows.append((res.axis, _fmt(pt.x), method, _fmt(st.median), _fmt(st.p05),
                         _fmt(st.p95), st.n_trials, st.n_failed))
    _write_rows(path, ("axis", "x", "method", "median", "p05", "p95", "n_trials", "n_failed"),
                rows)


def read_sweep_json(path) -> SweepResult:
    with open(path) as fh:
        payload = json.load(fh)
    points = [
        SweepPoint(x=float(pt["x"]),
                   methods={m: MethodStats(**st) for m, st in pt["methods"].items()})
        for pt in payload["points"]
    ]
    return SweepResult(axis=payload["axis"], points=points)


def read_histogram_csv(path) -> np.ndarray:
    rows = _open_rows(path)
    if not rows or [c.strip() for c in rows[0]] != ["bin_index", "count"]:
        raise FileFormatError(f"{path}: expected header bin_index,count")
    pairs = []
    for row in rows[1:]:
        try:
            pairs.append((int(row[0]), int(row[1])))
        except (ValueError, IndexError) as exc:
            raise FileFormatError(f"{path}: bad row {row}: {exc}") from exc
    pairs.sort()
    counts = np.zeros(pairs[-1][0] + 1, dtype=int)
    for idx, val in pairs:
        counts[idx] = val
    return counts


def write_histogram_csv(path, counts):
    counts = np.asarray(counts, dtype=int)
    rows = [(i, int(c)) for i, c in enumerate(counts)]
    _write_rows(path, ("bin_index", "count"), rows)


ENV_PREFIX = "ITOMO_"

_OPTIMIZER_FIELDS = {
    "seed": int,
    "n_starts": int,
    "max_nfev": int,
    "ftol": float,
    "xtol": float,
    "gtol": float,
    "initial_indist": float,
    "perturb_phase": float,
    "perturb_logx": float,
    "perturb_logit": float,
    "sst_clip_tol": float,
    "sinkhorn_tol": float,
    "sinkhorn_max_iter": int,
    "canonical_row": int,
    "canonical_col": int,
    "measurement_mode": str,
}


def load_config(path=None, env=None) -> dict:
    """Read the INI run config, applying ITOMO_<SECTION>__<KEY> env overrides.

    Returns {section: {key: str}} with raw string values; use
    optimizer_from_config to build an OptimizerConfig from the [reconstruct]
    section.
    """
    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(path)
        if not read:
            raise FileFormatError(f"config file {path} not found or unreadable")
    out = {s: dict(parser.items(s)) for s in parser.sections()}
    env = os.environ if env is None else env
    for key, value in env.items():
        if not key.startswith(ENV_PREFIX) or "__" not in key:
            continue
        section, option = key[len(ENV_PREFIX):].split("__", 1)
        out.setdefault(section.lower(), {})[option.lower()] = value
    return out


def optimizer_from_config(cfg: dict, section: str = "reconstruct", **overrides) -> OptimizerConfig:
    values = {}
    for key, raw in cfg.get(section, {}).items():
        if key not in _OPTIMIZER_FIELDS:
            raise FileFormatError(f"unknown option {key!r} in [{section}]")
        caster = _OPTIMIZER_FIELDS[key]
        values[key] = caster(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return OptimizerConfig(**values)
