"""Tests for correlation metrics, monotone mapping, gMAD search, and sessions."""

import numpy as np
import pytest
import scipy.stats

from mtiqa.evaluation import (GmadPair, average_ranks, evaluate_model,
                              fit_monotone_map, gmad_pairs, label_accuracy,
                              pearson, plcc, run_sessions, srcc,
                              summarize_sessions, write_gmad_csv,
                              write_session_csv)
from mtiqa.training import TrainConfig


# ---------------------------------------------------------------------------
# ranks and correlations
# ---------------------------------------------------------------------------

def test_average_ranks_with_ties():
    assert np.array_equal(average_ranks([10.0, 20.0, 20.0, 30.0]), [1.0, 2.5, 2.5, 4.0])
    assert np.array_equal(average_ranks([3.0, 1.0, 2.0]), [3.0, 1.0, 2.0])


def test_average_ranks_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = np.round(rng.standard_normal(40), 1)  # rounding forces ties
        assert np.allclose(average_ranks(x), scipy.stats.rankdata(x), atol=1e-12)


def test_srcc_known_value():
    assert srcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)
    assert srcc([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0, abs=1e-12)
    assert srcc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-12)


def test_srcc_invariant_to_monotone_transforms():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(50)
    y = rng.standard_normal(50)
    base = srcc(x, y)
    assert srcc(np.exp(x), y) == pytest.approx(base, abs=1e-12)
    assert srcc(x, y ** 3) == pytest.approx(base, abs=1e-12)


def test_correlations_match_scipy_oracles():
    rng = np.random.default_rng(2)
    for k in range(100):
        n = int(rng.integers(10, 60))
        x = rng.standard_normal(n)
        y = 0.5 * x + rng.standard_normal(n)
        if k % 3 == 0:
            x = np.round(x, 1)  # exercise tie handling
        assert srcc(x, y) == pytest.approx(
            scipy.stats.spearmanr(x, y).statistic, abs=1e-12)
        assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)
        assert pearson(x, y) == pytest.approx(
            scipy.stats.pearsonr(x, y).statistic, abs=1e-12)


def test_correlation_validation():
    with pytest.raises(ValueError):
        srcc([1.0], [2.0])
    with pytest.raises(ValueError):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        pearson([1.0, 1.0, 1.0], [1, 2, 3])
    with pytest.raises(ValueError):
        srcc([1, 2, np.nan], [1, 2, 3])
    with pytest.raises(ValueError):
        plcc([1.0, 2.0], [1.0, 2.0])  # needs at least 3 points


def test_plcc_affine_and_mapping():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(60)
    y = 2.0 * x + 1.0
    assert plcc(x, y) == pytest.approx(1.0, abs=1e-12)
    # a saturating monotone relation: the logistic re-map should recover
    # more linear correlation than the raw scores
    y = 1.0 / (1.0 + np.exp(-3.0 * x)) + 0.01 * rng.standard_normal(60)
    assert plcc(x, y, map_scores=True) >= plcc(x, y) - 1e-9


def test_label_accuracy_modes():
    assert label_accuracy([1, 2, 3], [1, 2, 4]) == pytest.approx(2.0 / 3.0)
    assert label_accuracy([1, 2], [(0, 1), (3,)]) == pytest.approx(0.5)
    assert label_accuracy([5], [{4, 5}]) == 1.0
    with pytest.raises(ValueError):
        label_accuracy([1, 2], [1])
    with pytest.raises(ValueError):
        label_accuracy([], [])


# ---------------------------------------------------------------------------
# monotone re-mapping
# ---------------------------------------------------------------------------

def test_fit_recovers_noiseless_logistic():
    rng = np.random.default_rng(4)
    x = np.sort(rng.uniform(-3, 3, 80))
    y = 1.0 + 4.0 / (1.0 + np.exp(-(x - 0.2) / 0.5))
    fit = fit_monotone_map(x, y)
    assert not fit.degenerate
    assert fit.rms < 1e-3
    assert np.allclose(fit.predict(x), y, atol=5e-3)


def test_fit_predictions_are_monotone():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(50)
    y = 3.0 * np.tanh(x) + 0.1 * rng.standard_normal(50)
    fit = fit_monotone_map(x, y)
    grid = np.linspace(x.min(), x.max(), 101)
    fitted = fit.predict(grid)
    diffs = np.diff(fitted)
    assert np.all(diffs >= -1e-12) or np.all(diffs <= 1e-12)


def test_fit_degenerate_cases():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    fit = fit_monotone_map(x, np.full(4, 2.5))
    assert fit.degenerate
    assert np.array_equal(fit.predict(x), np.full(4, 2.5))
    fit = fit_monotone_map(np.full(4, 1.0), np.array([1.0, 2.0, 3.0, 4.0]))
    assert fit.degenerate
    assert np.array_equal(fit.predict(np.full(3, 1.0)), np.full(3, 2.5))


# ---------------------------------------------------------------------------
# gMAD search
# ---------------------------------------------------------------------------

def test_gmad_matches_brute_force():
    from oracles import brute_force_gmad

    rng = np.random.default_rng(6)
    n = 120
    ids = [f"0:{i}" for i in range(n)]
    a = rng.uniform(1, 5, n)
    b = 0.7 * a + rng.uniform(0, 1.5, n)
    for levels in (2, 3):
        eps = float(np.percentile(np.abs(a[:, None] - a[None, :])[np.triu_indices(n, 1)], 1.0))
        got = gmad_pairs(ids, a, b, names=("a", "b"), levels=levels, eps=eps)
        want = (brute_force_gmad(ids, a, b, "a", "b", levels, eps)
                + brute_force_gmad(ids, b, a, "b", "a", levels, eps))
        assert got == want


def test_gmad_default_eps_is_first_percentile_of_attacker_gaps():
    from oracles import brute_force_gmad, percentile_eps

    rng = np.random.default_rng(7)
    n = 60
    ids = list(range(n))
    a = rng.uniform(1, 5, n)
    b = rng.uniform(1, 5, n)
    got = gmad_pairs(ids, a, b, levels=2)
    want = (brute_force_gmad(ids, a, b, "model_a", "model_b", 2, percentile_eps(a))
            + brute_force_gmad(ids, b, a, "model_b", "model_a", 2, percentile_eps(b)))
    assert got == want


def test_gmad_pins_attacker_gap():
    rng = np.random.default_rng(8)
    n = 80
    ids = list(range(n))
    a = rng.uniform(1, 5, n)
    b = rng.uniform(1, 5, n)
    pairs = gmad_pairs(ids, a, b, levels=2)
    assert pairs  # found something in at least one bin
    eps_by_attacker = {
        "model_a": float(np.percentile(np.abs(a[:, None] - a[None, :])[np.triu_indices(n, 1)], 1.0)),
        "model_b": float(np.percentile(np.abs(b[:, None] - b[None, :])[np.triu_indices(n, 1)], 1.0)),
    }
    for p in pairs:
        assert p.attacker_gap <= eps_by_attacker[p.attacker] + 1e-12


def test_gmad_identical_models_cannot_disagree():
    rng = np.random.default_rng(9)
    scores = rng.uniform(1, 5, 50)
    pairs = gmad_pairs(list(range(50)), scores, scores.copy(), levels=2)
    for p in pairs:
        assert p.defender_gap == pytest.approx(p.attacker_gap, abs=1e-12)
        assert p.defender_gap <= float(np.percentile(
            np.abs(scores[:, None] - scores[None, :])[np.triu_indices(50, 1)], 1.0)) + 1e-12


def test_gmad_warns_on_thin_bins():
    with pytest.warns(UserWarning, match="fewer than 2"):
        gmad_pairs(["x", "y"], [1.0, 5.0], [2.0, 3.0], levels=3)


def test_gmad_validation():
    with pytest.raises(ValueError):
        gmad_pairs(["a"], [1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        gmad_pairs(["a", "b"], [1.0, 2.0], [1.0, 2.0], levels=0)


# ---------------------------------------------------------------------------
# sessions
# ---------------------------------------------------------------------------

def _session_cfg(**kw):
    base = dict(epochs=2, batch_size=4, u_train=2, u_infer=4, crop_size=2,
                embed_dim=16, hidden_dim=16, token_dim=8, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_evaluate_model_per_dataset(tiny_result, tiny_splits):
    _, _, test = tiny_splits
    metrics = evaluate_model(tiny_result.model, test, u_infer=4, seed=0)
    assert [m.dataset_id for m in metrics] == [0, 1]
    for m in metrics:
        assert m.n_images == sum(1 for r in test if r.dataset_id == m.dataset_id)
        assert -1.0 <= m.srcc <= 1.0 and -1.0 <= m.plcc <= 1.0
        assert 0.0 <= m.scene_acc <= 1.0 and 0.0 <= m.distortion_acc <= 1.0


def test_run_sessions_deterministic(tiny_records):
    cfg = _session_cfg()
    a = run_sessions(tiny_records, cfg, n_sessions=1, seed=3)
    b = run_sessions(tiny_records, cfg, n_sessions=1, seed=3)
    assert len(a) == len(b) == 1
    assert a[0].seed == b[0].seed == 3
    for ma, mb in zip(a[0].metrics, b[0].metrics):
        assert ma == mb


def test_run_sessions_distinct_seeds(tiny_records):
    results = run_sessions(tiny_records, _session_cfg(), n_sessions=2, seed=5)
    assert [r.session for r in results] == [0, 1]
    assert [r.seed for r in results] == [5, 6]
    assert results[0].metrics != results[1].metrics


def test_run_sessions_cross_dataset_scores_unseen_in_full(tiny_records):
    results = run_sessions(tiny_records, _session_cfg(), n_sessions=1, seed=0,
                           train_ids={0}, eval_ids={1})
    assert len(results[0].metrics) == 1
    m = results[0].metrics[0]
    assert m.dataset_id == 1
    assert m.n_images == 40  # never trained on: evaluated on every record


def test_run_sessions_parallel_matches_serial(tiny_records):
    cfg = _session_cfg()
    serial = run_sessions(tiny_records, cfg, n_sessions=2, seed=0, jobs=1)
    parallel = run_sessions(tiny_records, cfg, n_sessions=2, seed=0, jobs=2)
    for a, b in zip(serial, parallel):
        assert a == b


def test_summarize_sessions_math(tiny_records):
    results = run_sessions(tiny_records, _session_cfg(), n_sessions=3, seed=0)
    summary = summarize_sessions(results)
    for dataset_id in (0, 1):
        vals = [m.srcc for r in results for m in r.metrics if m.dataset_id == dataset_id]
        med, std = summary[dataset_id]["srcc"]
        assert med == pytest.approx(np.median(vals), abs=1e-12)
        assert std == pytest.approx(np.std(vals), abs=1e-12)


def test_session_csv_layout(tmp_path, tiny_records):
    results = run_sessions(tiny_records, _session_cfg(), n_sessions=2, seed=0)
    path = tmp_path / "results.csv"
    write_session_csv(path, results)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "session,dataset,n_images,srcc,plcc,scene_acc,distortion_acc"
    assert len(lines) == 1 + 2 * 2 + 2 * 2  # data rows + median/std rows per dataset
    data_cells = lines[1].split(",")
    assert data_cells[0] == "0"
    float(data_cells[3])  # metrics parse as numbers
    assert sum(1 for ln in lines if ln.startswith("median,")) == 2
    assert sum(1 for ln in lines if ln.startswith("std,")) == 2


def test_gmad_csv_layout(tmp_path):
    rng = np.random.default_rng(10)
    pairs = gmad_pairs([f"0:{i}" for i in range(40)],
                       rng.uniform(1, 5, 40), rng.uniform(1, 5, 40), levels=2)
    path = tmp_path / "gmad.csv"
    write_gmad_csv(path, pairs)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "attacker,defender,level,best_id,worst_id,attacker_gap,defender_gap"
    assert len(lines) == 1 + len(pairs)
