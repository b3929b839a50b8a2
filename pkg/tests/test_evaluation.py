import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopfuse.errors import InvalidArgument
from coopfuse.evaluation import (
    PIPELINES, PipelineConfig, ap_from_flags, average_precision, evaluate_run, frame_predictions,
    match_to_gt, run_pipeline, scene_from_frame, select_coops,
)
from coopfuse.geometry import BBox7
from coopfuse.matching import Detection
from coopfuse.simulator import NoiseModel, SimConfig, frame_seed, generate_frame, inject_loc_noise
from oracles import interpolated_ap_by_hand


def car(x, y=0.0):
    return BBox7(x, y, 0.8, 2.0, 4.0, 1.6, 0.0)


GT = [car(0), car(20)]


def test_match_examples():
    assert match_to_gt([Detection(g, 0.5) for g in GT], GT, 0.7) == [True, True]
    two = [Detection(car(0.1), 0.6), Detection(car(0), 0.9)]
    assert match_to_gt(two, GT[:1], 0.5) == [False, True]
    # shifted by 1 m along a 4 m box: IoU 3/5 = 0.6
    shifted = [Detection(car(1.0), 0.9)]
    assert match_to_gt(shifted, GT[:1], 0.7) == [False]
    assert match_to_gt(shifted, GT[:1], 0.6) == [True]


def test_hand_ap_five_sixths():
    preds = [Detection(car(0), 0.9), Detection(car(50), 0.8), Detection(car(20), 0.7)]
    r = average_precision(preds, GT, 0.5)
    assert r.ap == 5 / 6
    assert interpolated_ap_by_hand([True, False, True], 2) == pytest.approx(5 / 6)
    assert [(p.recall, p.precision) for p in r.curve] == pytest.approx([(0.5, 1), (0.5, 0.5), (1, 2 / 3)])


def test_ap_degenerate_cases():
    assert average_precision([Detection(g, 1.0) for g in GT], GT, 0.7).ap == 1.0
    assert average_precision([], GT, 0.5).ap == 0.0
    assert average_precision([], [], 0.5).ap == 1.0
    assert average_precision([Detection(car(0), 0.5)], [], 0.5).ap == 0.0


flags_st = st.lists(st.tuples(st.floats(0.01, 1.0), st.booleans()), max_size=30)


@settings(max_examples=200)
@given(flags_st, st.integers(0, 10))
def test_ap_matches_hand_oracle(items, extra_gt):
    items = sorted(items, key=lambda t: -t[0])
    n_gt = sum(f for _, f in items) + extra_gt
    if n_gt == 0:
        return
    r = ap_from_flags([s for s, _ in items], [f for _, f in items], n_gt)
    # ties in score keep input order on both sides
    assert r.ap == pytest.approx(interpolated_ap_by_hand([f for _, f in items], n_gt), abs=1e-12)
    assert 0.0 <= r.ap <= 1.0


def random_scene(seed, n_gt=6, n_pred=10):
    rng = np.random.default_rng(seed)
    gt = [car(*xy) for xy in rng.uniform(-40, 40, (n_gt, 2))]
    preds = []
    for _ in range(n_pred):
        g = gt[int(rng.integers(n_gt))]
        preds.append(Detection(g.replace(x=g.x + rng.normal(0, 0.8), y=g.y + rng.normal(0, 0.8)),
                               float(rng.uniform(0.05, 1))))
    return preds, gt


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.sampled_from([0.3, 0.5, 0.7]))
def test_ap_monotone_score_rescaling(seed, thr):
    preds, gt = random_scene(seed)
    a = average_precision(preds, gt, thr).ap
    b = average_precision([Detection(p.box, p.score ** 3 / 2) for p in preds], gt, thr).ap
    assert a == pytest.approx(b, abs=1e-12)


@settings(max_examples=100)
@given(st.integers(0, 2**31))
def test_ap_non_increasing_in_threshold(seed):
    preds, gt = random_scene(seed)
    aps = [average_precision(preds, gt, t).ap for t in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(x >= y - 1e-12 for x, y in zip(aps, aps[1:]))


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.sampled_from([0.3, 0.5, 0.7]))
def test_low_score_false_positive_never_helps(seed, thr):
    preds, gt = random_scene(seed)
    fp = Detection(car(500, 500), min(p.score for p in preds) / 2)
    assert average_precision(preds + [fp], gt, thr).ap <= average_precision(preds, gt, thr).ap + 1e-12


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.integers(0, 12), st.integers(0, 12))
def test_tp_count_bounded(seed, n_gt, n_pred):
    preds, gt = random_scene(seed, max(n_gt, 1), n_pred)
    gt = gt[:n_gt]
    assert sum(match_to_gt(preds, gt, 0.3)) <= min(len(preds), len(gt))


@pytest.fixture(scope="module")
def scenes():
    cfg = SimConfig()
    return [scene_from_frame(generate_frame(cfg, frame_seed(5, i))) for i in range(6)]


def test_unknown_pipeline(scenes):
    with pytest.raises(InvalidArgument):
        run_pipeline(scenes[0], "magic", [])


def test_zero_coops_all_pipelines_equal(scenes):
    for s in scenes:
        out = frame_predictions(s, PIPELINES, 0)
        assert all(out[p] == out["no_fusion"] for p in PIPELINES)


def test_self_boxes_appended(scenes):
    s = scenes[0]
    coops = select_coops(s, min(2, len(s.coops)))
    preds = run_pipeline(s, "alg1", coops)
    ones = [p for p in preds if p.score == 1.0]
    assert len(ones) >= 1 + len(coops)
    assert preds[0].box.x == 0.0 and preds[0].box.y == 0.0


def test_select_coops_rules(scenes):
    s = scenes[0]
    assert select_coops(s, len(s.coops) + 1) is None
    assert select_coops(s, len(s.coops)) == s.coops
    if len(s.coops) >= 2:
        a = select_coops(s, 1)
        assert a == select_coops(s, 1) and a[0] in s.coops


def test_zero_noise_no_fusion_is_perfect():
    cfg = SimConfig(det_noise=NoiseModel.zero())
    frames = [generate_frame(cfg, frame_seed(2, i)) for i in range(4)]
    rows = evaluate_run(frames, ("no_fusion",), (0.3, 0.5, 0.7), n_v=0)
    # the ego only sees what lies in range, and everything there is detected exactly
    assert [r.ap for r in rows] == [1.0, 1.0, 1.0]


def test_evaluate_run_rejects_mixed_configs():
    a = generate_frame(SimConfig(), 1)
    b = generate_frame(SimConfig(comm_range=30), 2)
    with pytest.raises(InvalidArgument):
        evaluate_run([a, b])


def test_evaluate_run_shape_and_fusion_gain():
    frames = [generate_frame(SimConfig(), frame_seed(0, i)) for i in range(20)]
    rows = evaluate_run(frames, PIPELINES, (0.3, 0.5, 0.7), n_v=2)
    assert [(r.pipeline, r.iou_thr) for r in rows] == [(p, t) for p in PIPELINES for t in (0.3, 0.5, 0.7)]
    ap = {(r.pipeline, r.iou_thr): r.ap for r in rows}
    assert ap[("alg1", 0.7)] >= ap[("no_fusion", 0.7)]


def test_correction_recovers_clean_alignment():
    # with localization noise the corrected pipeline should not fall below the uncorrected one
    frames = [inject_loc_noise(generate_frame(SimConfig(), frame_seed(4, i))) for i in range(15)]
    rows = evaluate_run(frames, ("alg1", "alg1_with_correction"), (0.7,), n_v=2)
    assert rows[1].ap >= rows[0].ap


def test_pipeline_config_thresholds(scenes):
    s = scenes[1]
    coops = select_coops(s, min(2, len(s.coops)))
    loose = run_pipeline(s, "nms", coops, PipelineConfig(nms_iou=0.9))
    tight = run_pipeline(s, "nms", coops, PipelineConfig(nms_iou=0.01))
    assert len(loose) >= len(tight)
    for p in tight:
        assert math.hypot(p.box.x, p.box.y) <= s.det_range
