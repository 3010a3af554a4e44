"""
Boosting hyperparameters.
"""

from dataclasses import asdict, dataclass, fields

from src.utils.config import Config, as_number, check_keys, check_schema_version
from src.utils.errors import ConfigError
from src.utils.run_log import RunLog

run_log = RunLog()

# Accepted in parameter files for compatibility, never used
IGNORED_ALIASES = ("num_boost_round",)


@dataclass(frozen=True)
class Hyperparams:
    """
    Regularized squared-error boosting settings.

    Attributes
    ----------
    n_trees : int
        Number of boosting rounds.
    max_depth : int
        Maximum depth of every tree (root has depth 0).
    eta : float
        Shrinkage folded into the stored leaf weights, in (0, 1].
    min_child_weight : float
        Minimum hessian sum (case count) of each child.
    col_sample_by_tree, col_sample_by_level : float
        Fractions of features drawn per tree and per depth level, in (0, 1].
    subsample : float
        Fraction of cases drawn per tree without replacement, in (0, 1].
    reg_alpha, reg_lambda : float
        L1 and L2 penalties on leaf weights.
    gamma : float
        Minimum loss reduction subtracted from every split gain.
    seed : int
        Seed of the row and column sampling.
    """
    n_trees: int = 100
    max_depth: int = 3
    eta: float = 0.35
    min_child_weight: float = 1.0
    col_sample_by_tree: float = 1.0
    col_sample_by_level: float = 1.0
    subsample: float = 0.85
    reg_alpha: float = 0.0
    reg_lambda: float = 0.5
    gamma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        as_number(self.n_trees, "$.n_trees", 0, None, integer=True)
        as_number(self.max_depth, "$.max_depth", 1, None, integer=True)
        as_number(self.eta, "$.eta", 0.0, 1.0, lo_open=True)
        as_number(self.min_child_weight, "$.min_child_weight", 0.0, None)
        as_number(self.col_sample_by_tree, "$.col_sample_by_tree", 0.0, 1.0, lo_open=True)
        as_number(self.col_sample_by_level, "$.col_sample_by_level", 0.0, 1.0, lo_open=True)
        as_number(self.subsample, "$.subsample", 0.0, 1.0, lo_open=True)
        as_number(self.reg_alpha, "$.reg_alpha", 0.0, None)
        as_number(self.reg_lambda, "$.reg_lambda", 0.0, None)
        as_number(self.gamma, "$.gamma", 0.0, None)
        as_number(self.seed, "$.seed", 0, None, integer=True)

    def replace(self, **changes) -> "Hyperparams":
        return Hyperparams(**{**asdict(self), **changes})

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: dict, path: str = "$") -> "Hyperparams":
        """
        Read a parameter file, filling gaps from the package defaults.

        ``num_boost_round`` is accepted and ignored with a warning; the number of
        trees is ``n_trees`` alone.
        """
        check_keys(data, cls.names() + ["schema_version"] + list(IGNORED_ALIASES), path)
        check_schema_version(data, path)
        for alias in IGNORED_ALIASES:
            if alias in data:
                run_log.add(f"{path}.{alias}: ignored alias of n_trees (value {data[alias]!r}); "
                            f"using n_trees", level="WARNING")
        defaults = {k: v for k, v in Config().get_hyperparam_defaults().items() if k in cls.names()}
        merged = {**defaults, **{k: v for k, v in data.items() if k in cls.names()}}
        try:
            return cls(**merged)
        except ConfigError as e:
            raise ConfigError(str(e).replace("$", path, 1)) from None

    def to_dict(self) -> dict:
        return {'schema_version': 1, **asdict(self)}
