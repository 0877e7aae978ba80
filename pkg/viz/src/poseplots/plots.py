"""Figure builders: 3-D landscape surfaces, 2-D landscapes with trajectory
overlays, and score-field quivers over probability heatmaps.

Figures are pure functions of the loaded exports: fixed style, no timestamps,
so identical inputs render byte-identical images.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .inputs import GridData, ScoreFieldData, TrajectoryTrace

# endpoint is flagged as a local minimum when its normalized energy sits this
# far above the grid's global minimum
LOCAL_MIN_MARGIN = 0.05

TRAJ_COLORS = ("tab:red", "tab:blue", "tab:green", "tab:orange", "tab:purple",
               "tab:brown", "tab:pink", "tab:olive", "tab:cyan")

PNG_METADATA = {"Software": None}  # strip the version string for stable bytes


@dataclass
class StyleOptions:
    dpi: int = 120
    cmap: str = "viridis"
    figsize: tuple[float, float] = (8.0, 5.0)
    prob_sharpness: float = 3.0  # heatmap shows exp(-k * normalized energy)


def save(fig, out_path: str, style: StyleOptions) -> None:
    fig.savefig(out_path, dpi=style.dpi, metadata=PNG_METADATA)
    plt.close(fig)


def plot_surface(grid: GridData, style: StyleOptions | None = None):
    """3-D surface of the normalized energy over latitude x longitude."""
    style = style or StyleOptions()
    fig = plt.figure(figsize=style.figsize)
    ax = fig.add_subplot(111, projection="3d")
    lon, lat = np.meshgrid(grid.lon_deg, grid.lat_deg)
    ax.plot_surface(
        lat, lon, grid.values, cmap=style.cmap, linewidth=0, antialiased=False
    )
    ax.set_xlabel("latitude (deg)")
    ax.set_ylabel("longitude (deg)")
    ax.set_zlabel("normalized energy")
    ax.set_zlim(0.0, 1.0)
    return fig


def _split_at_seam(lon: np.ndarray, lat: np.ndarray):
    """Break a trace into segments so wrapped longitude jumps are not drawn."""
    segments = []
    start = 0
    for k in range(1, len(lon)):
        if abs(lon[k] - lon[k - 1]) > 180.0:
            segments.append((lon[start:k], lat[start:k]))
            start = k
    segments.append((lon[start:], lat[start:]))
    return segments


def _endpoint_energy(trace: TrajectoryTrace):
    if trace.final_energy is not None:
        return trace.final_energy
    for e in reversed(trace.energies):
        if e is not None:
            return e
    return None


def plot_trajectories(
    grid: GridData,
    traces: list[TrajectoryTrace],
    style: StyleOptions | None = None,
):
    """2-D landscape heatmap with one colored path per initialization.

    Endpoints are marked with a star; endpoints resting above the global
    basin (by LOCAL_MIN_MARGIN in normalized energy) get an X instead.
    Returns (figure, endpoint list) where each endpoint is
    (trial, lon_deg, lat_deg, is_local_minimum).
    """
    style = style or StyleOptions()
    if not traces:
        warnings.warn("no trajectories given; rendering the landscape only")
    fig, ax = plt.subplots(figsize=style.figsize)
    mesh = ax.pcolormesh(
        grid.lon_deg, grid.lat_deg, grid.values, cmap=style.cmap, shading="nearest"
    )
    fig.colorbar(mesh, ax=ax, label="normalized energy")
    norm = grid.metadata.get("normalization", {})
    vmin, vmax = norm.get("vmin"), norm.get("vmax")
    endpoints = []
    for idx, trace in enumerate(traces):
        color = TRAJ_COLORS[idx % len(TRAJ_COLORS)]
        for seg_lon, seg_lat in _split_at_seam(trace.lon_deg, trace.lat_deg):
            ax.plot(seg_lon, seg_lat, color=color, linewidth=1.4)
        ax.plot(
            trace.lon_deg[0], trace.lat_deg[0], "o", color=color, markersize=5
        )
        is_local = False
        e_final = _endpoint_energy(trace)
        if e_final is not None and vmin is not None and vmax is not None and vmax > vmin:
            is_local = (e_final - vmin) / (vmax - vmin) > LOCAL_MIN_MARGIN
        marker = "X" if is_local else "*"
        ax.plot(
            trace.lon_deg[-1],
            trace.lat_deg[-1],
            marker,
            color=color,
            markersize=11,
            markeredgecolor="black",
        )
        endpoints.append(
            (trace.trial, float(trace.lon_deg[-1]), float(trace.lat_deg[-1]), is_local)
        )
    ax.set_xlim(0.0, 360.0)
    ax.set_xlabel("longitude (deg)")
    ax.set_ylabel("latitude (deg)")
    return fig, endpoints


def plot_quiver(
    fieldData: ScoreFieldData,
    prob_grid: GridData | None = None,
    style: StyleOptions | None = None,
):
    """Score-field arrows, normalized to the grid-cell scale, with a magnitude
    colorbar; optionally drawn over a probability heatmap exp(-k * energy)."""
    style = style or StyleOptions()
    fig, ax = plt.subplots(figsize=style.figsize)
    if prob_grid is not None:
        prob = np.exp(-style.prob_sharpness * prob_grid.values)
        prob = prob / prob.max()
        ax.pcolormesh(
            prob_grid.lon_deg,
            prob_grid.lat_deg,
            prob,
            cmap="Greys",
            shading="nearest",
        )
    lon, lat = np.meshgrid(fieldData.lon_deg, fieldData.lat_deg)
    mag = np.hypot(fieldData.u_lon, fieldData.v_lat)
    safe = np.where(mag > 1e-12, mag, 1.0)
    cell = (
        abs(float(np.diff(fieldData.lon_deg).mean())),
        abs(float(np.diff(fieldData.lat_deg).mean())),
    )
    q = ax.quiver(
        lon,
        lat,
        0.9 * cell[0] * fieldData.u_lon / safe,
        0.9 * cell[1] * fieldData.v_lat / safe,
        fieldData.magnitude,
        cmap="plasma",
        angles="xy",
        scale_units="xy",
        scale=1.0,
        width=0.0025,
    )
    fig.colorbar(q, ax=ax, label="score magnitude")
    ax.set_xlim(0.0, 360.0)
    ax.set_xlabel("longitude (deg)")
    ax.set_ylabel("latitude (deg)")
    return fig
