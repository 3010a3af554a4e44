"""Boosted trees: training, prediction, serialization, importance and metrics."""

import math

import numpy as np
import pytest
from scipy import stats

from src.gbt.metrics import SeedSweep, evaluate, regression_report, seed_sweep
from src.gbt.model import GbtModel, coverage_importance
from src.gbt.params import Hyperparams
from src.gbt.train import leaf_weight, soft_threshold, train
from src.gbt.tree import RegressionTree
from src.tests.helpers import case_matrix, random_cases
from src.utils.errors import ArtifactError, ConfigError, ContractError
from src.utils.run_log import RunLog


def stump():
    """x0 < 0.5 -> -1 (cover 1), else 3 (cover 3); MISSING goes right."""
    return RegressionTree([1, -1, -1], [2, -1, -1], [2, -1, -1], [0, -1, -1], [0.5, np.nan, np.nan],
                          [0.0, -1.0, 3.0], [4.0, 1.0, 3.0])


def test_tree_routes_missing_to_default_child():
    tree = stump()
    X = np.array([[0.0], [1.0], [np.nan], [0.5]])
    assert list(tree.apply(X)) == [1, 2, 2, 2]
    assert list(tree.predict(X)) == [-1.0, 3.0, 3.0, 3.0]
    assert tree.values[0] == pytest.approx(2.0)
    assert tree.expected_value() == pytest.approx(2.0)
    assert (tree.n_nodes, tree.n_splits, tree.max_depth) == (3, 1, 1)
    tree.check_covers()


def test_tree_cover_check_and_serialization():
    tree = stump()
    again = RegressionTree.from_dict(tree.to_dict())
    assert np.array_equal(again.children_default, tree.children_default)
    assert np.array_equal(again.values, tree.values)
    bad = RegressionTree([1, -1, -1], [2, -1, -1], [2, -1, -1], [0, -1, -1], [0.5, np.nan, np.nan],
                         [0.0, -1.0, 3.0], [5.0, 1.0, 3.0])
    with pytest.raises(ContractError):
        bad.check_covers()
    with pytest.raises(ArtifactError):
        RegressionTree.from_dict({"nodes": [{"id": 1, "leaf": 0.0, "cover": 1.0}]})
    assert "missing=right" in tree.dump(["LB_X"])


def test_soft_threshold_and_leaf_weight():
    assert soft_threshold(-10.0, 2.0) == -8.0
    assert soft_threshold(1.5, 2.0) == 0.0
    hp = Hyperparams(eta=0.5, reg_lambda=1.0, reg_alpha=0.0)
    assert leaf_weight(-10.0, 4.0, hp) == pytest.approx(1.0, abs=1e-12)
    assert leaf_weight(-10.0, 4.0, hp.replace(reg_alpha=2.0)) == pytest.approx(0.8, abs=1e-12)


@pytest.mark.parametrize("reg_lambda, reg_alpha", [(0.0, 0.0), (0.5, 0.0), (2.0, 3.0)])
def test_leaf_weights_match_closed_form(rng, reg_lambda, reg_alpha):
    X = rng.normal(size=(40, 3))
    y = 50 + 10 * (X[:, 1] > 0) + rng.normal(0, 1, 40)
    data = case_matrix(X, y)
    hp = Hyperparams(n_trees=1, max_depth=2, eta=0.3, subsample=1.0, reg_lambda=reg_lambda, reg_alpha=reg_alpha)
    model = train(data, hp)
    tree = model.trees[0]
    leaves = tree.apply(data.as_nan())
    g = model.base_score - data.labels
    for leaf in np.unique(leaves):
        G, H = g[leaves == leaf].sum(), float(np.sum(leaves == leaf))
        expected = -0.3 * np.sign(G) * max(abs(G) - reg_alpha, 0.0) / (H + reg_lambda)
        assert abs(tree.values[leaf] - expected) <= 1e-12
        assert tree.node_sample_weight[leaf] == H


def test_deep_tree_interpolates_training_labels(rng):
    x = rng.permutation(50).astype(float).reshape(-1, 1)
    y = rng.uniform(10, 90, 50)
    data = case_matrix(x, y)
    model = train(data, Hyperparams(n_trees=1, max_depth=49, eta=1.0, reg_lambda=0.0, subsample=1.0))
    assert np.max(np.abs(model.predict(data.as_nan()) - y)) <= 1e-6


def test_constant_labels_give_base_score_only():
    data = case_matrix(np.arange(10.0).reshape(-1, 1), np.full(10, 42.0))
    model = train(data, Hyperparams(n_trees=5))
    assert model.trees == ()
    assert np.all(model.predict(data.as_nan()) == 42.0)
    assert "no trees" in model.dump_tree()


def test_training_preconditions():
    with pytest.raises(ContractError):
        train(case_matrix([[1.0]], [50.0]), Hyperparams())
    with pytest.raises(ContractError):
        train(case_matrix([[np.nan], [np.nan]], [40.0, 50.0]), Hyperparams())


def test_missing_values_learn_a_direction():
    x = np.concatenate([np.arange(20.0), np.full(10, np.nan)])
    y = np.concatenate([np.where(np.arange(20) < 10, 20.0, 80.0), np.full(10, 80.0)])
    data = case_matrix(x.reshape(-1, 1), y)
    model = train(data, Hyperparams(n_trees=1, max_depth=1, eta=1.0, reg_lambda=0.0, subsample=1.0))
    node = model.trees[0].node(0)
    assert node.feature_id == 0 and not node.default_left
    assert model.predict_row([np.nan]) == pytest.approx(80.0)
    assert model.predict_row([3.0]) == pytest.approx(20.0)


def test_training_is_seeded(small_cases):
    hp = Hyperparams(n_trees=8, subsample=0.7, col_sample_by_tree=0.6, seed=3)
    first, second = train(small_cases, hp), train(small_cases, hp)
    assert first.fingerprint() == second.fingerprint()
    assert train(small_cases, hp.replace(seed=4)).fingerprint() != first.fingerprint()


def test_trees_respect_depth_and_child_weight(small_cases):
    model = train(small_cases, Hyperparams(n_trees=10, max_depth=2, min_child_weight=15))
    for tree in model.trees:
        assert tree.max_depth <= 2
        assert tree.node_sample_weight.min() >= 15
        tree.check_covers()


def test_model_width_is_checked(small_cases):
    model = train(small_cases, Hyperparams(n_trees=3))
    with pytest.raises(ContractError, match="width"):
        model.predict(np.zeros((2, small_cases.n_features + 1)))
    other = case_matrix(np.zeros((3, small_cases.n_features)), [50.0, 50.0, 50.0])
    model.catalog_fingerprint = "0" * 64
    with pytest.raises(ContractError):
        model.predict_cases(other)


def test_model_save_and_load(tmp_path, small_cases):
    model = train(small_cases, Hyperparams(n_trees=6, seed=1))
    path = model.save(str(tmp_path / "model.json"))
    loaded = GbtModel.load(path)
    assert loaded.fingerprint() == model.fingerprint()
    assert np.array_equal(loaded.predict(small_cases.as_nan()), model.predict(small_cases.as_nan()))
    assert loaded.hyperparams == model.hyperparams
    assert loaded.dump_tree(0) == model.dump_tree(0)
    (tmp_path / "broken.json").write_text('{"schema_version": 1}', encoding="utf-8")
    with pytest.raises(ArtifactError):
        GbtModel.load(str(tmp_path / "broken.json"))


def test_coverage_of_a_single_split():
    model = GbtModel(0.0, [stump()], 2)
    data = case_matrix([[0.0, 1.0], [np.nan, 2.0], [3.0, np.nan]], [40.0, 50.0, 60.0])
    coverage = coverage_importance(model, data, threshold=0.0)
    assert list(coverage.fractions) == [1.0, 0.0]
    assert [name for name, _ in coverage.ranked()] == ["LB_F0", "LB_F1"]
    assert [name for name, _ in coverage_importance(model, data, threshold=0.5).ranked()] == ["LB_F0"]


def test_coverage_importance(small_cases):
    model = train(small_cases, Hyperparams(n_trees=10, seed=0))
    coverage = coverage_importance(model, small_cases, threshold=0.0)
    assert np.all((coverage.fractions >= 0.0) & (coverage.fractions <= 1.0))
    ranked = coverage.ranked()
    assert len(ranked) == small_cases.n_features
    assert [v for _, v in ranked] == sorted((v for _, v in ranked), reverse=True)
    assert "LB_F0" in [name for name, _ in ranked[:2]]
    listed = coverage_importance(model, small_cases, threshold=0.5).to_dict()["coverage"]
    assert all(item["fraction"] >= 0.5 for item in listed)


def test_regression_report_example():
    report = regression_report([12.0, 18.0, 33.0], [10.0, 20.0, 30.0])
    assert report.rmse == pytest.approx(math.sqrt(17.0 / 3.0))
    r, p = stats.pearsonr([12.0, 18.0, 33.0], [10.0, 20.0, 30.0])
    assert report.pearson_r == pytest.approx(r)
    assert report.r2 == pytest.approx(r * r)
    assert report.p_value == pytest.approx(p)
    assert report.to_dict()["n"] == 3


def test_regression_report_degenerate_inputs():
    flat = regression_report([5.0, 5.0, 5.0], [1.0, 2.0, 3.0])
    assert flat.r2 is None and flat.pearson_r is None and flat.p_value is None
    assert flat.rmse == pytest.approx(math.sqrt((16 + 9 + 4) / 3))
    with pytest.raises(ContractError):
        regression_report([1.0], [1.0])


def test_evaluate_and_seed_sweep(rng):
    data = random_cases(rng, 120, 4)
    train_part, eval_part = data.subset(range(80)), data.subset(range(80, 120))
    hp = Hyperparams(n_trees=5, subsample=0.8, seed=10)
    report = evaluate(train(train_part, hp), eval_part)
    assert report.n == 40 and report.rmse > 0
    sweep = seed_sweep(train_part, eval_part, hp, n_runs=3)
    assert sweep.seeds == [10, 11, 12]
    assert sweep.rmse[0] == pytest.approx(report.rmse)
    assert sweep.half_width == pytest.approx(1.96 * np.std(sweep.rmse, ddof=1) / math.sqrt(3))
    assert SeedSweep([1], [2.0]).half_width == 0.0


def test_hyperparams_from_dict():
    hp = Hyperparams.from_dict({"eta": 0.1, "num_boost_round": 7})
    assert hp.eta == 0.1 and hp.n_trees == 100
    assert any("num_boost_round" in m for m in RunLog().entries_at("WARNING"))
    assert Hyperparams.from_dict(hp.to_dict()) == hp
    with pytest.raises(ConfigError, match=r"^\$\.learning"):
        Hyperparams.from_dict({"learning": 0.1})
    with pytest.raises(ConfigError, match=r"^\$\.base\.eta"):
        Hyperparams.from_dict({"eta": 0.0}, "$.base")
    with pytest.raises(ConfigError):
        Hyperparams(subsample=1.5)


@pytest.mark.parametrize("reg_alpha", [0.0, 2.0])
def test_training_loss_never_increases(small_cases, reg_alpha):
    hp = Hyperparams(n_trees=14, max_depth=3, subsample=1.0, reg_alpha=reg_alpha, seed=1)
    model = train(small_cases, hp)
    X, y = small_cases.as_nan(), small_cases.labels
    rmse = [math.sqrt(np.mean((GbtModel(model.base_score, model.trees[:k], model.n_features).predict(X) - y) ** 2))
            for k in range(len(model.trees) + 1)]
    assert all(later <= earlier + 1e-9 for earlier, later in zip(rmse, rmse[1:]))
    assert rmse[-1] < rmse[0]


def test_regularization_limits(small_cases):
    flat = train(small_cases, Hyperparams(n_trees=5, gamma=1e9))
    assert len(flat.trees) == 5
    assert all(tree.n_splits == 0 for tree in flat.trees)
    shrunk = train(small_cases, Hyperparams(n_trees=5, reg_lambda=1e12))
    assert max(np.max(np.abs(tree.values[tree.leaves()])) for tree in shrunk.trees) < 1e-6


def _fill_along_default_path(tree, row):
    """Copy of ``row`` whose MISSING cells hold values routed like MISSING at every visited split."""
    limits = {}
    node = 0
    while tree.children_left[node] != -1:
        j = int(tree.features[node])
        if np.isnan(row[j]):
            lo, hi = limits.get(j, (-np.inf, np.inf))
            if tree.children_default[node] == tree.children_left[node]:
                hi = min(hi, tree.thresholds[node])
            else:
                lo = max(lo, tree.thresholds[node])
            limits[j] = (lo, hi)
            node = tree.children_default[node]
        else:
            node = tree.next_nodes(np.array([node]), row.reshape(1, -1))[0]
    filled = row.copy()
    for j, (lo, hi) in limits.items():
        if not lo < hi:
            return None
        filled[j] = lo if np.isfinite(lo) else hi - 1.0
    return filled


def test_missing_follows_the_default_side(rng):
    data = random_cases(rng, 150, 5, missing_rate=0.3)
    model = train(data, Hyperparams(n_trees=8, max_depth=4, seed=3))
    X = data.as_nan()
    checked = 0
    for tree in model.trees:
        for row in X[np.isnan(X).any(axis=1)]:
            filled = _fill_along_default_path(tree, row)
            if filled is None:
                continue
            assert tree.predict(filled.reshape(1, -1))[0] == tree.predict(row.reshape(1, -1))[0]
            checked += 1
    assert checked > 100
