"""
Evaluation metrics and the repeated-seed RMSE interval.
"""

import math
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np
from scipy import stats

from src.data.case_matrix import CaseMatrix
from src.gbt.model import GbtModel
from src.gbt.params import Hyperparams
from src.gbt.train import train
from src.utils.errors import ContractError
from src.utils.run_log import RunLog

run_log = RunLog()


@dataclass(frozen=True)
class EvalReport:
    """
    Regression quality on one split.

    ``r2`` is the squared Pearson correlation of predictions and labels. It is
    ``None`` together with ``pearson_r`` and ``p_value`` when either side has
    zero variance.
    """
    rmse: float
    r2: Optional[float]
    pearson_r: Optional[float]
    p_value: Optional[float]
    n: int

    def to_dict(self) -> dict:
        return {'schema_version': 1, **asdict(self)}


def regression_report(predicted, actual) -> EvalReport:
    """Metrics of two aligned arrays; the core of :func:`evaluate`."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    n = len(actual)
    if n < 2 or len(predicted) != n:
        raise ContractError(f"evaluation needs at least 2 aligned cases, got {len(predicted)} and {n}")
    rmse = float(np.sqrt(np.mean((predicted - actual) ** 2)))
    if np.ptp(predicted) == 0.0 or np.ptp(actual) == 0.0:
        return EvalReport(rmse, None, None, None, n)
    r, p = stats.pearsonr(predicted, actual)
    r = float(np.clip(r, -1.0, 1.0))
    return EvalReport(rmse, r * r, r, float(p), n)


def evaluate(model: GbtModel, data: CaseMatrix) -> EvalReport:
    """
    RMSE, R^2 and Pearson correlation of the model's predictions on ``data``.

    Parameters
    ----------
    model : GbtModel
        Trained ensemble.
    data : CaseMatrix
        At least two cases sharing the model's catalog.

    Returns
    -------
    EvalReport
    """
    report = regression_report(model.predict_cases(data), data.labels)
    r2 = "n/a" if report.r2 is None else f"{report.r2:.4f}"
    run_log.add(f"evaluated {report.n} cases: RMSE {report.rmse:.4f}, R2 {r2}")
    return report


@dataclass(frozen=True)
class SeedSweep:
    """RMSE over repeated trainings that differ only in the seed."""
    seeds: List[int]
    rmse: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.rmse))

    @property
    def sd(self) -> float:
        return float(np.std(self.rmse, ddof=1)) if len(self.rmse) > 1 else 0.0

    @property
    def half_width(self) -> float:
        """95% normal-approximation half-width of the mean."""
        return 1.96 * self.sd / math.sqrt(len(self.rmse))

    def to_dict(self) -> dict:
        return {'seeds': self.seeds, 'rmse': self.rmse, 'mean': self.mean, 'sd': self.sd,
                'ci95_half_width': self.half_width}


def seed_sweep(train_data: CaseMatrix, eval_data: CaseMatrix, hp: Hyperparams, n_runs: int = 10) -> SeedSweep:
    """Train ``n_runs`` models with seeds ``hp.seed .. hp.seed + n_runs - 1`` and evaluate each."""
    if n_runs < 1:
        raise ContractError(f"seed sweep needs at least one run, got {n_runs}")
    seeds = [hp.seed + k for k in range(n_runs)]
    rmse = [evaluate(train(train_data, hp.replace(seed=s)), eval_data).rmse for s in seeds]
    sweep = SeedSweep(seeds, rmse)
    run_log.add(f"seed sweep over {n_runs} runs: RMSE {sweep.mean:.4f} +/- {sweep.half_width:.4f}")
    return sweep
