"""
Coordinate-descent hyperparameter search scored by k-fold cross-validated RMSE.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.data.case_matrix import CaseMatrix
from src.gbt.params import Hyperparams
from src.gbt.train import train
from src.utils.config import Config, as_number, check_keys, check_schema_version
from src.utils.errors import ConfigError
from src.utils.run_log import RunLog

run_log = RunLog()

ScoreFn = Callable[[Hyperparams], float]


def parse_grid(data: dict, path: str = "$") -> Dict[str, List]:
    """
    Read a tuning grid: ``{"<param>": [candidates...], ...}``.

    Optional keys ``folds``, ``max_sweeps`` and ``seed`` are left in place for
    :func:`tune_settings`.
    """
    check_keys(data, Hyperparams.names() + ["schema_version", "folds", "max_sweeps", "seed", "base"], path)
    check_schema_version(data, path)
    grid = {}
    for name, candidates in data.items():
        if name in ("schema_version", "folds", "max_sweeps", "seed", "base"):
            continue
        if not isinstance(candidates, list) or not candidates:
            raise ConfigError(f"{path}.{name}: grid axis must be a non-empty list")
        grid[name] = candidates
    return grid


def tune_settings(data: dict, path: str = "$") -> dict:
    defaults = Config().get_tune_config()
    return {
        'folds': as_number(data.get('folds', defaults['folds']), f"{path}.folds", 2, None, integer=True),
        'max_sweeps': as_number(data.get('max_sweeps', defaults['max_sweeps']), f"{path}.max_sweeps", 1, None,
                                integer=True),
        'seed': as_number(data.get('seed', defaults['seed']), f"{path}.seed", 0, None, integer=True),
    }


def kfold_indices(n: int, folds: int, seed: int) -> List[np.ndarray]:
    """Validation rows of each fold: a seeded permutation cut into ``folds`` near-equal parts."""
    if folds < 2 or folds > n:
        raise ConfigError(f"$.folds: must be in [2, {n}], got {folds}")
    permutation = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(permutation, folds)]


def cv_rmse(data: CaseMatrix, hp: Hyperparams, folds: int = 5, seed: int = 0) -> float:
    """Mean validation RMSE over the folds."""
    scores = []
    all_rows = np.arange(data.n_cases)
    for valid_rows in kfold_indices(data.n_cases, folds, seed):
        train_rows = np.setdiff1d(all_rows, valid_rows, assume_unique=True)
        model = train(data.subset(train_rows), hp)
        held_out = data.subset(valid_rows)
        scores.append(float(np.sqrt(np.mean((model.predict(held_out.as_nan()) - held_out.labels) ** 2))))
    return float(np.mean(scores))


class CoordinateDescentTuner:
    """
    Optimize one hyperparameter at a time over its candidate list.

    Axes are visited in the configured order (``tune.order``); axes missing from
    the grid keep their starting value. A sweep visits every axis once; the search
    stops after a sweep that changes nothing or after ``max_sweeps`` sweeps. Equal
    scores prefer the smaller candidate.

    Parameters
    ----------
    grid : dict of str -> list
        Candidate values per hyperparameter.
    score_fn : callable
        Maps Hyperparams to a loss (lower is better).
    base : Hyperparams, optional
        Starting point; defaults come from config.json.
    max_sweeps : int
        Upper bound on full sweeps.
    order : sequence of str, optional
        Axis order; defaults to ``tune.order``.
    """

    def __init__(self, grid: Dict[str, Sequence], score_fn: ScoreFn, base: Optional[Hyperparams] = None,
                 max_sweeps: int = 5, order: Optional[Sequence[str]] = None):
        known = Hyperparams.names()
        for name, candidates in grid.items():
            if name not in known or name == "seed":
                raise ConfigError(f"$.{name}: not a tunable hyperparameter")
            if len(candidates) == 0:
                raise ConfigError(f"$.{name}: grid axis must be a non-empty list")
        self.grid = {name: sorted(candidates) for name, candidates in grid.items()}
        self.score_fn = score_fn
        self.max_sweeps = max_sweeps
        order = list(order or Config().get_tune_config()['order'])
        self.order = [name for name in order if name in self.grid] + sorted(set(self.grid) - set(order))
        base = base or Hyperparams(**{k: v for k, v in Config().get_hyperparam_defaults().items() if k in known})
        start = {}
        for name, candidates in self.grid.items():
            current = getattr(base, name)
            start[name] = current if current in candidates else candidates[0]
        self.start = base.replace(**start)
        self.history: List[Tuple[Dict, float]] = []
        self.sweeps = 0
        self._cache: Dict[tuple, float] = {}

    def _score(self, hp: Hyperparams) -> float:
        key = tuple(sorted(hp.to_dict().items()))
        if key not in self._cache:
            self._cache[key] = float(self.score_fn(hp))
            self.history.append(({name: getattr(hp, name) for name in self.grid}, self._cache[key]))
        return self._cache[key]

    def run(self) -> Hyperparams:
        current = self.start
        best_score = self._score(current)
        for sweep in range(self.max_sweeps):
            self.sweeps = sweep + 1
            changed = False
            for name in self.order:
                best_value = getattr(current, name)
                for value in self.grid[name]:
                    candidate = current.replace(**{name: value})
                    score = self._score(candidate)
                    if score < best_score or (score == best_score and value < best_value):
                        best_score, best_value = score, value
                if best_value != getattr(current, name):
                    current = current.replace(**{name: best_value})
                    changed = True
            run_log.add(f"tuning sweep {self.sweeps}: best CV RMSE {best_score:.4f}")
            if not changed:
                break
        self.best_score = best_score
        return current


def tune(data: CaseMatrix, grid: Dict[str, Sequence], folds: int = 5, base: Optional[Hyperparams] = None,
         max_sweeps: Optional[int] = None, seed: Optional[int] = None,
         score_fn: Optional[ScoreFn] = None) -> Hyperparams:
    """
    Coordinate-descent search over ``grid`` scored by k-fold CV mean RMSE.

    Parameters
    ----------
    data : CaseMatrix
        Training cases.
    grid : dict of str -> list
        Non-empty candidate list per hyperparameter.
    folds : int
        Number of folds; fold assignment is seeded.
    base : Hyperparams, optional
        Values of the axes not in the grid.
    max_sweeps, seed : int, optional
        Defaults from ``tune`` in config.json.
    score_fn : callable, optional
        Replaces the cross-validation score (used for response-surface tests).

    Returns
    -------
    Hyperparams
        The coordinate-wise optimum reached.

    Raises
    ------
    ConfigError
        Empty or unknown grid axis.
    """
    settings = Config().get_tune_config()
    seed = settings['seed'] if seed is None else seed
    max_sweeps = settings['max_sweeps'] if max_sweeps is None else max_sweeps
    if score_fn is None:
        kfold_indices(data.n_cases, folds, seed)

        def score_fn(hp):
            return cv_rmse(data, hp, folds, seed)

    tuner = CoordinateDescentTuner(grid, score_fn, base, max_sweeps)
    best = tuner.run()
    run_log.add(f"tuning finished after {tuner.sweeps} sweeps and {len(tuner.history)} evaluations")
    return best
