"""Recall / success-rate metrics and median errors over multi-start trials.

Recall scores only the best-by-energy trial of each scene; Success Rate scores
every trial. The (R) variants drop the translation condition. Medians are
taken over the per-scene best trials by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import RelPose, rel_as_pose, rotation_error, translation_error
from .optimizer import TrialResult


@dataclass(frozen=True)
class Thresholds:
    rot_deg: tuple[float, ...] = (5.0, 15.0, 30.0)
    trans: float = 0.2

    def __post_init__(self):
        if any(t <= 0 for t in self.rot_deg) or self.trans <= 0:
            raise ValueError("thresholds must be positive")
        if list(self.rot_deg) != sorted(self.rot_deg):
            raise ValueError("rotation thresholds must be sorted ascending")


@dataclass
class MetricsReport:
    recall: dict[float, float]
    recall_rot: dict[float, float]
    success: dict[float, float]
    success_rot: dict[float, float]
    median_rot_deg: float
    median_trans: float
    n_scenes: int
    n_trials_per_scene: int | None
    thresholds: Thresholds = field(default_factory=Thresholds)


def trial_errors(final: RelPose, gt: RelPose) -> tuple[float, float]:
    """(rotation error in degrees, camera-center distance) of a pose delta."""
    a = rel_as_pose(final)
    b = rel_as_pose(gt)
    return math.degrees(rotation_error(a, b)), translation_error(a, b)


def _best_index(trials: list[TrialResult], energy_from: str) -> int:
    best = 0
    for i, t in enumerate(trials):
        if _selection_energy(t, energy_from) < _selection_energy(
            trials[best], energy_from
        ):
            best = i
    return best


def _selection_energy(t: TrialResult, energy_from: str) -> float:
    if energy_from == "final":
        return t.final_energy
    if energy_from == "observed":
        for p in reversed(t.trajectory.points):
            if p.energy is not None:
                return p.energy
        return t.final_energy
    raise ValueError(f"unknown energy_from {energy_from!r}")


def evaluate(
    trials_by_scene: dict[int, list[TrialResult]],
    gts: dict[int, RelPose],
    th: Thresholds | None = None,
    energy_from: str = "final",
    median_over: str = "best",
) -> MetricsReport:
    """Aggregate R / R(R) / SR / SR(R) at every rotation threshold plus medians.

    energy_from selects the best trial per scene by the stored deterministic
    final energy ("final") or by the last observed, possibly stochastic,
    trajectory energy ("observed"). median_over is "best" or "all".
    """
    th = th or Thresholds()
    if not trials_by_scene:
        raise ValueError("no trials given")
    if median_over not in ("best", "all"):
        raise ValueError(f"unknown median_over {median_over!r}")

    best_errors = []
    all_errors = []
    counts = set()
    for scene_id, trials in trials_by_scene.items():
        if not trials:
            raise ValueError(f"scene {scene_id} has no trials")
        gt = gts[scene_id]
        counts.add(len(trials))
        errs = [trial_errors(t.final_pose, gt) for t in trials]
        all_errors.extend(errs)
        best_errors.append(errs[_best_index(trials, energy_from)])

    best_arr = np.array(best_errors)
    all_arr = np.array(all_errors)
    recall, recall_rot, success, success_rot = {}, {}, {}, {}
    for k in th.rot_deg:
        recall[k] = float(((best_arr[:, 0] < k) & (best_arr[:, 1] < th.trans)).mean())
        recall_rot[k] = float((best_arr[:, 0] < k).mean())
        success[k] = float(((all_arr[:, 0] < k) & (all_arr[:, 1] < th.trans)).mean())
        success_rot[k] = float((all_arr[:, 0] < k).mean())

    med_src = best_arr if median_over == "best" else all_arr
    return MetricsReport(
        recall=recall,
        recall_rot=recall_rot,
        success=success,
        success_rot=success_rot,
        median_rot_deg=float(np.median(med_src[:, 0])),
        median_trans=float(np.median(med_src[:, 1])),
        n_scenes=len(trials_by_scene),
        n_trials_per_scene=counts.pop() if len(counts) == 1 else None,
        thresholds=th,
    )


def format_table(report: MetricsReport, label: str = "ours") -> str:
    """Aligned text table with R / R(R) / SR / SR(R) at each threshold."""
    ks = report.thresholds.rot_deg
    header = (
        ["method"]
        + [c for k in ks for c in (f"R@{int(k)}", f"R(R)@{int(k)}")]
        + [c for k in ks for c in (f"SR@{int(k)}", f"SR(R)@{int(k)}")]
        + ["Rot.", "Trans."]
    )
    row = (
        [label]
        + [v for k in ks for v in (f"{report.recall[k]:.3f}", f"{report.recall_rot[k]:.3f}")]
        + [v for k in ks for v in (f"{report.success[k]:.3f}", f"{report.success_rot[k]:.3f}")]
        + [f"{report.median_rot_deg:.2f}", f"{report.median_trans:.3f}"]
    )
    widths = [max(len(h), len(r)) for h, r in zip(header, row)]
    lines = [
        "  ".join(h.rjust(w) for h, w in zip(header, widths)),
        "  ".join(r.rjust(w) for r, w in zip(row, widths)),
    ]
    return "\n".join(lines) + "\n"
