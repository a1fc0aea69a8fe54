from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from shle.config import PipelineConfig
from shle.errors import NoSceneEstimateError
from shle.geometry import DisparityMap
from shle.io_formats import dump_results
from shle.pipeline import run_corpus, run_scene, thread_count
from shle.synthetic import SceneSpec, generate_scene, perturb

from conftest import lowest_bar_row_height


def mean_abs_frame_error(estimate, truth: float) -> float:
    return float(np.mean([abs(h - truth) for h in estimate.series.raw_values]))


def test_noiseless_heights_equal_lowest_visible_row(clean_scene):
    est = run_scene(clean_scene.manifest, threads=1)
    assert est.skipped == {}
    assert len(est.series.frames) == 60
    for t, h in est.series.frames:
        # float32 disparity limits agreement to ~1e-7 m
        assert h == pytest.approx(lowest_bar_row_height(clean_scene.spec, t), abs=1e-5)


def test_scene_height_is_mean_of_filtered(clean_scene):
    est = run_scene(clean_scene.manifest)
    assert abs(est.scene_height - math.fsum(est.series.filtered_values) / 60) <= 1e-12


def test_dropout_half_keeps_scene_height(clean_scene):
    full = run_scene(clean_scene.manifest)
    dropped = perturb(clean_scene, "dropout", 0.5)
    est = run_scene(dropped.manifest)
    assert abs(est.scene_height - full.scene_height) <= 0.01
    assert len(est.anchors) == 30


def test_zero_detections(clean_scene):
    frames = [replace(f, detections=[]) for f in clean_scene.manifest.frames]
    with pytest.raises(NoSceneEstimateError):
        run_scene(replace(clean_scene.manifest, frames=frames))


def test_thread_count_independent(noisy_scene):
    one = dump_results(run_scene(noisy_scene.manifest, threads=1).to_results_table())
    many = dump_results(run_scene(noisy_scene.manifest, threads=4).to_results_table())
    assert one == many


def test_thread_env(monkeypatch):
    monkeypatch.setenv("SHLE_THREADS", "3")
    assert thread_count() == 3
    assert thread_count(2) == 2


def test_skipped_frame_leaves_others_untouched(clean_scene):
    base = run_scene(clean_scene.manifest)
    frames = list(clean_scene.manifest.frames)
    frames[30] = replace(frames[30], disparity=DisparityMap(np.zeros((720, 1280), dtype=np.float32)))
    est = run_scene(replace(clean_scene.manifest, frames=frames))
    assert est.skipped == {30: "empty_extraction"}
    before, after = dict(base.series.frames), dict(est.series.frames)
    assert all(after[i] == before[i] for i in after)
    # every frame appears once across estimated and skipped
    assert sorted([*after, *est.skipped]) == list(range(60))


def test_frames_outside_anchor_range_are_skipped(clean_scene):
    frames = [replace(f, detections=[]) if f.index < 5 else f for f in clean_scene.manifest.frames]
    est = run_scene(replace(clean_scene.manifest, frames=frames))
    assert {i: est.skipped[i] for i in range(5)} == {i: "no_box" for i in range(5)}


def test_ncc_tracker_without_images_falls_back(clean_scene):
    frames = [replace(f, image=None, detections=f.detections if f.index % 10 == 0 else []) for f in clean_scene.manifest.frames]
    est = run_scene(replace(clean_scene.manifest, frames=frames), PipelineConfig(tracker="ncc"))
    assert any("interpolation" in n for n in est.notes)
    assert len(est.series.frames) == 51


@pytest.mark.parametrize("seed", [0, 1])
def test_more_noise_never_helps(seed):
    errors = []
    for std in (0.0, 0.1, 0.25):
        scene = generate_scene(SceneSpec(noise=std, seed=seed))
        errors.append(mean_abs_frame_error(run_scene(scene.manifest), 3.5))
    assert errors[1] >= errors[0] - 0.005
    assert errors[2] >= errors[1] - 0.005


def test_noisy_scene_within_ten_centimetres(noisy_scene):
    assert abs(run_scene(noisy_scene.manifest).scene_height - 3.5) <= 0.10


def test_corpus_single_scene(clean_scene):
    report = run_corpus([clean_scene.manifest])
    est = report.scenes[0].estimate
    assert report.summary.mean_abs_he == abs(est.scene_height - 3.5)
    assert report.summary.n_height == 1


def test_corpus_of_thirteen_matches_hand_average():
    scenes = [
        generate_scene(SceneSpec(
            bar_height_m=3.0 + 0.1 * k, depth_trajectory=np.linspace(40.0, 10.0, 6), noise=0.1 * (k % 3), seed=k,
        ))
        for k in range(13)
    ]
    report = run_corpus([s.manifest for s in scenes])
    per_scene = [abs(r.scene_height - s.spec.bar_height_m) for r, s in zip(report.scenes, scenes)]
    assert report.summary.mean_abs_he == pytest.approx(sum(per_scene) / 13, abs=1e-15)
    her = [abs(r.scene_height - s.spec.bar_height_m) / s.spec.bar_height_m * 100 for r, s in zip(report.scenes, scenes)]
    assert report.summary.mean_her == pytest.approx(sum(her) / 13, abs=1e-12)


def test_corpus_excludes_scene_without_truth(clean_scene):
    no_truth = replace(clean_scene.manifest, ground_truth_height_m=None)
    empty = replace(clean_scene.manifest, frames=[replace(f, detections=[]) for f in clean_scene.manifest.frames])
    report = run_corpus([clean_scene.manifest, no_truth, empty], names=["a", "b", "c"])
    assert [r.name for r in report.scenes] == ["a", "b", "c"]
    assert report.scenes[1].height is None and report.scenes[1].scene_height is not None
    assert report.scenes[2].error.startswith("no_scene_estimate")
    assert report.summary.n_height == 1

