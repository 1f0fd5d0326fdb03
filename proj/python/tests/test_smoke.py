import math

import numpy as np
import pytest

import smtm


@pytest.fixture(scope="module")
def small():
    model = smtm.fixture_model(base_width=8)
    sc = smtm.make_scenario("longtail", num_classes=6, frames=200, warmup_per_class=4, seed=3)
    centers = smtm.warm_up(model, sc["warmup"]["frames"], sc["warmup"]["labels"], 6)
    return model, sc, centers


def test_model_shape():
    model = smtm.fixture_model(base_width=8)
    assert model.num_exit_points == 6
    assert model.exit_channels == [8, 8, 16, 16, 32, 32]
    assert model.total_flops > 0


def test_gap_and_cosine():
    fm = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
    assert smtm.encode_gap(fm) == pytest.approx([1.5, 5.5])
    assert smtm.cosine_similarity([1, 0], [0, 1]) == 0.0
    assert smtm.cosine_similarity([0, 0], [1, 1]) == 0.0
    assert smtm.cosine_similarity([2, 2], [1, 1]) == pytest.approx(1.0)


def test_memory_helpers():
    assert smtm.class_score(8, 35, 30) == 2.0
    assert smtm.adaptive_cache_size([9.0, 0.5, 0.5], 0.95, 1, 3) == 2


def test_scenario_arrays(small):
    _, sc, centers = small
    assert sc["stream"]["frames"].shape == (200, 3, 32, 32)
    assert len(sc["stream"]["labels"]) == 200
    assert sc["templates"].shape == (6, 3, 32, 32)
    assert centers.num_classes == 6
    assert all(centers.class_initialized(c) for c in range(6))


def test_never_exit_matches_baseline(small):
    model, sc, centers = small
    frames, labels = sc["stream"]["frames"], sc["stream"]["labels"]
    run = smtm.run_stream(model, centers, frames, labels, config={"tau": math.inf})
    base = smtm.baseline_run(model, centers, frames, labels)
    assert [f["predicted"] for f in run["frames"]] == [f["predicted"] for f in base["frames"]]
    assert run["metrics"]["exit_ratio"] == 0.0


def test_sweep_and_ablation(small):
    model, sc, centers = small
    frames, labels = sc["stream"]["frames"], sc["stream"]["labels"]
    sweep = smtm.sweep_tau(model, centers, frames, labels, taus=[0.5, 2.0])
    assert [r["tau"] for r in sweep["rows"]] == [0.5, 2.0]
    ablation = smtm.ablation_run(model, centers, frames, labels)
    assert len(ablation["cells"]) == 4


def test_errors_surface_as_exceptions(small):
    model, _, centers = small
    bad = np.zeros((2, 3, 16, 16), dtype=np.float32)
    with pytest.raises(smtm.SmtmError):
        smtm.run_stream(model, centers, bad)
    with pytest.raises(smtm.SmtmError):
        smtm.run_stream(model, centers, bad[:, :, :, :], config={"window": 0})
