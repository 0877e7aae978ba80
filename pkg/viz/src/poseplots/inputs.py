"""Readers for the primary component's CSV/JSON exports.

Only the documented export files are consumed; schema versions are checked
before any plotting happens.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

GRID_SCHEMA = "grid.v1"
TRAJ_SCHEMA = "trajectories.v1"
FIELD_SCHEMA = "scorefield.v1"


class SchemaMismatchError(RuntimeError):
    """Sidecar metadata declares an unsupported schema version."""


class MissingColumnError(RuntimeError):
    """Input CSV lacks a required column."""


def _sidecar(csv_path: str, explicit: str | None) -> str:
    return explicit or os.path.splitext(csv_path)[0] + ".json"


def _read_rows(path: str, required: tuple[str, ...]) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        missing = [c for c in required if c not in cols]
        if missing:
            raise MissingColumnError(f"{path}: missing columns {missing}")
        return list(reader)


def _check_schema(meta: dict, expected: str, path: str) -> None:
    got = meta.get("schema_version")
    if got != expected:
        raise SchemaMismatchError(f"{path}: schema {got!r}, expected {expected!r}")


@dataclass
class GridData:
    lat_deg: np.ndarray  # (n_lat,)
    lon_deg: np.ndarray  # (n_lon,)
    values: np.ndarray  # (n_lat, n_lon), normalized to [0, 1]
    metadata: dict


def load_grid(csv_path: str, meta_path: str | None = None) -> GridData:
    meta = json.load(open(_sidecar(csv_path, meta_path)))
    _check_schema(meta, GRID_SCHEMA, csv_path)
    rows = _read_rows(csv_path, ("lat_deg", "lon_deg", "normalized_energy"))
    lat = np.array(sorted({float(r["lat_deg"]) for r in rows}))
    lon = np.array(sorted({float(r["lon_deg"]) for r in rows}))
    values = np.full((len(lat), len(lon)), np.nan)
    li = {v: i for i, v in enumerate(lat)}
    lj = {v: j for j, v in enumerate(lon)}
    for r in rows:
        values[li[float(r["lat_deg"])], lj[float(r["lon_deg"])]] = float(
            r["normalized_energy"]
        )
    if np.isnan(values).any():
        raise MissingColumnError(f"{csv_path}: grid has holes")
    return GridData(lat, lon, values, meta)


@dataclass
class TrajectoryTrace:
    scene: int
    trial: int
    lat_deg: np.ndarray
    lon_deg: np.ndarray
    energies: list  # float or None per point
    final_energy: float | None = None


def load_trajectories(
    csv_path: str, meta_path: str | None = None, scene: int | None = None
) -> list[TrajectoryTrace]:
    meta = json.load(open(_sidecar(csv_path, meta_path)))
    _check_schema(meta, TRAJ_SCHEMA, csv_path)
    rows = _read_rows(
        csv_path, ("scene", "trial", "stage", "iter", "dtheta", "dphi", "drho", "energy")
    )
    groups: dict[tuple[int, int], list[dict]] = {}
    for r in rows:
        key = (int(r["scene"]), int(r["trial"]))
        if scene is not None and key[0] != scene:
            continue
        groups.setdefault(key, []).append(r)
    traces = []
    finals = meta.get("finals", {})
    for (sc, tr), pts in sorted(groups.items()):
        lat = np.array([math.degrees(float(p["dtheta"])) for p in pts])
        lon = np.array([math.degrees(float(p["dphi"])) % 360.0 for p in pts])
        energies = [float(p["energy"]) if p["energy"] != "" else None for p in pts]
        final = finals.get(str(sc), {}).get(str(tr), {}).get("final_energy")
        traces.append(TrajectoryTrace(sc, tr, lat, lon, energies, final))
    return traces


@dataclass
class ScoreFieldData:
    lat_deg: np.ndarray
    lon_deg: np.ndarray
    u_lon: np.ndarray  # longitude component, (n_lat, n_lon)
    v_lat: np.ndarray  # latitude component
    magnitude: np.ndarray
    metadata: dict


def load_score_field(csv_path: str, meta_path: str | None = None) -> ScoreFieldData:
    meta = json.load(open(_sidecar(csv_path, meta_path)))
    _check_schema(meta, FIELD_SCHEMA, csv_path)
    rows = _read_rows(
        csv_path, ("lat_deg", "lon_deg", "s_dtheta", "s_dphi", "s_drho")
    )
    lat = np.array(sorted({float(r["lat_deg"]) for r in rows}))
    lon = np.array(sorted({float(r["lon_deg"]) for r in rows}))
    li = {v: i for i, v in enumerate(lat)}
    lj = {v: j for j, v in enumerate(lon)}
    u = np.zeros((len(lat), len(lon)))
    v = np.zeros((len(lat), len(lon)))
    m = np.zeros((len(lat), len(lon)))
    for r in rows:
        i, j = li[float(r["lat_deg"])], lj[float(r["lon_deg"])]
        st, sp, sr = float(r["s_dtheta"]), float(r["s_dphi"]), float(r["s_drho"])
        u[i, j] = sp
        v[i, j] = st
        m[i, j] = math.sqrt(st * st + sp * sp + sr * sr)
    return ScoreFieldData(lat, lon, u, v, m, meta)
