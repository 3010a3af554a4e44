import numpy as np
import pytest

from src.cli import stages
from src.etl.cases import EtlConfig
from src.gbt.params import Hyperparams
from src.synth.cohort import CohortConfig
from src.tests.helpers import random_cases
from src.utils.run_log import RunLog


@pytest.fixture(autouse=True)
def clean_run_log():
    RunLog().clear()
    yield
    RunLog().clear()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cases(rng):
    return random_cases(rng, 200, 6)


@pytest.fixture(scope="session")
def small_cohort_config():
    return CohortConfig.from_dict({"n_patients": 150, "seed": 3})


@pytest.fixture(scope="session")
def etl_dir(tmp_path_factory, small_cohort_config):
    """Raw tables and ETL output of a small synthetic cohort, built once per session."""
    root = tmp_path_factory.mktemp("cohort")
    stages.synth_stage(small_cohort_config, str(root / "raw"))
    stages.etl_stage(EtlConfig.from_dict({}), str(root / "raw"), str(root / "cases"))
    return root


@pytest.fixture(scope="session")
def trained_dir(etl_dir):
    """``etl_dir`` plus a small model trained on its train split."""
    model_path = etl_dir / "model.json"
    if not model_path.exists():
        stages.train_stage(Hyperparams.from_dict({"n_trees": 15, "seed": 2}), str(etl_dir / "cases"),
                           str(model_path))
    return etl_dir
