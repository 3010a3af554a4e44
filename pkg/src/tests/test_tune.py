"""Coordinate-descent tuning and k-fold cross-validation."""

import numpy as np
import pytest

from src.gbt.params import Hyperparams
from src.gbt.tune import CoordinateDescentTuner, cv_rmse, kfold_indices, parse_grid, tune, tune_settings
from src.tests.helpers import random_cases
from src.utils.errors import ConfigError
from src.utils.run_log import RunLog


def separable(hp: Hyperparams) -> float:
    return (hp.max_depth - 4) ** 2 + 100.0 * (hp.eta - 0.2) ** 2 + (hp.reg_lambda - 1.0) ** 2


def test_separable_surface_converges_quickly():
    grid = {"max_depth": [2, 3, 4, 6], "eta": [0.1, 0.2, 0.35], "reg_lambda": [0.0, 0.5, 1.0, 2.0]}
    tuner = CoordinateDescentTuner(grid, separable, max_sweeps=10)
    best = tuner.run()
    assert (best.max_depth, best.eta, best.reg_lambda) == (4, 0.2, 1.0)
    assert tuner.sweeps <= 3
    assert tuner.best_score == pytest.approx(0.0)


def test_grid_axes_outside_the_search_keep_their_base_value():
    base = Hyperparams(n_trees=7, subsample=0.5)
    best = CoordinateDescentTuner({"max_depth": [2, 4]}, separable, base=base).run()
    assert best.n_trees == 7 and best.subsample == 0.5 and best.max_depth == 4


def test_equal_scores_prefer_the_smaller_value():
    best = CoordinateDescentTuner({"max_depth": [5, 2, 3], "eta": [0.3, 0.1]}, lambda hp: 1.0).run()
    assert best.max_depth == 2 and best.eta == 0.1


def test_scores_are_cached():
    calls = []

    def score(hp):
        calls.append(hp)
        return separable(hp)

    tuner = CoordinateDescentTuner({"max_depth": [2, 4], "eta": [0.2, 0.35]}, score, max_sweeps=5)
    tuner.run()
    assert len(calls) == len(tuner.history)
    assert len({tuple(sorted(h.items())) for h, _ in tuner.history}) == len(calls)


@pytest.mark.parametrize("grid", [{"seed": [1, 2]}, {"depth": [1]}, {"eta": []}])
def test_tuner_rejects_bad_axes(grid):
    with pytest.raises(ConfigError):
        CoordinateDescentTuner(grid, separable)


def test_parse_grid_and_settings():
    data = {"max_depth": [2, 3], "eta": [0.1], "folds": 3}
    assert parse_grid(data) == {"max_depth": [2, 3], "eta": [0.1]}
    assert tune_settings(data)["folds"] == 3
    assert tune_settings({})["max_sweeps"] == 5
    with pytest.raises(ConfigError, match=r"^\$\.eta"):
        parse_grid({"eta": 0.1})
    with pytest.raises(ConfigError, match=r"^\$\.alpha"):
        parse_grid({"alpha": [0.1]})
    with pytest.raises(ConfigError, match=r"^\$\.folds"):
        tune_settings({"folds": 1})


def test_kfold_indices_partition_the_rows():
    folds = kfold_indices(23, 5, seed=4)
    assert len(folds) == 5
    rows = np.concatenate(folds)
    assert sorted(rows) == list(range(23))
    assert {len(f) for f in folds} <= {4, 5}
    assert all(np.array_equal(a, b) for a, b in zip(folds, kfold_indices(23, 5, seed=4)))
    with pytest.raises(ConfigError):
        kfold_indices(3, 4, 0)
    with pytest.raises(ConfigError):
        kfold_indices(10, 1, 0)


def test_tune_on_data(rng):
    data = random_cases(rng, 60, 3)
    base = Hyperparams(n_trees=3, subsample=1.0)
    best = tune(data, {"max_depth": [1, 2], "eta": [0.1, 0.5]}, folds=3, base=base, max_sweeps=2, seed=1)
    assert best.max_depth in (1, 2) and best.eta in (0.1, 0.5)
    assert best.n_trees == 3
    scores = {(d, e): cv_rmse(data, base.replace(max_depth=d, eta=e), 3, 1) for d in (1, 2) for e in (0.1, 0.5)}
    assert scores[(best.max_depth, best.eta)] <= scores[(1, 0.1)]
    assert any("tuning finished" in m for m in RunLog().entries_at("INFO"))
