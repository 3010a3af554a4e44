"""
Exact t-SNE into two dimensions.

Affinities use a Gaussian kernel whose per-row precision is found by bisection
so that the row's perplexity matches the target; the embedding uses the
Student-t kernel with one degree of freedom and is optimised by gradient descent
with momentum, per-coordinate gains and early exaggeration. A step is accepted
only if the true (unexaggerated) KL divergence does not rise by more than
``KL_TOLERANCE``; otherwise it is halved (at most ``MAX_HALVINGS`` times) and the
iterate stays put if no halving helps.
"""

import os
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist, squareform

from src.data.case_matrix import CaseId
from src.utils.config import Config, as_number, check_keys, check_schema_version
from src.utils.errors import ArtifactError, ConfigError, ContractError, EmbeddingError
from src.utils.general_func import read_json, write_json
from src.utils.run_log import RunLog

run_log = RunLog()

AFFINITY_FLOOR = 1e-12
PERPLEXITY_TOLERANCE = 1e-5
MAX_BISECTION_STEPS = 200
KL_TOLERANCE = 1e-6
MAX_HALVINGS = 30
MIN_GAIN = 0.01
INPUT_SPACES = ("raw_features", "shap_values")


@dataclass(frozen=True)
class TsneConfig:
    """
    Optimiser settings.

    ``perplexity`` left as ``None`` means the default target (``tsne.perplexity``,
    100) clamped to ``(N - 1) / 3``; an explicit value must already be feasible.
    """
    perplexity: Optional[float] = None
    n_iter: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_iter: int = 250
    init_sd: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.perplexity is not None:
            as_number(self.perplexity, "$.perplexity", 1.0, None)
        as_number(self.n_iter, "$.n_iter", 1, None, integer=True)
        as_number(self.learning_rate, "$.learning_rate", 0.0, None, lo_open=True)
        as_number(self.early_exaggeration, "$.early_exaggeration", 1.0, None)
        as_number(self.exaggeration_iters, "$.exaggeration_iters", 0, None, integer=True)
        as_number(self.momentum_start, "$.momentum_start", 0.0, 1.0, hi_open=True)
        as_number(self.momentum_final, "$.momentum_final", 0.0, 1.0, hi_open=True)
        as_number(self.momentum_switch_iter, "$.momentum_switch_iter", 0, None, integer=True)
        as_number(self.init_sd, "$.init_sd", 0.0, None, lo_open=True)
        as_number(self.seed, "$.seed", 0, None, integer=True)

    def effective_perplexity(self, n: int) -> float:
        """
        Perplexity used for ``n`` points.

        Raises
        ------
        ConfigError
            If the explicit perplexity lies outside ``[1, (n - 1) / 3]`` or no
            perplexity is feasible (``n < 4``).
        """
        upper = (n - 1) / 3.0
        if self.perplexity is not None:
            if not 1.0 <= self.perplexity <= upper:
                raise ConfigError(f"$.perplexity: must be in [1, {upper:g}] for {n} points, got {self.perplexity:g}")
            return float(self.perplexity)
        target = float(Config().get_tsne_defaults().get('perplexity', 100.0))
        if upper < 1.0:
            raise ConfigError(f"$.perplexity: no feasible perplexity for {n} points (need at least 4)")
        if target > upper:
            run_log.add(f"perplexity {target:g} infeasible for {n} points; clamped to {upper:g}", level="WARNING")
            return upper
        return target

    @classmethod
    def from_dict(cls, data: dict, path: str = "$") -> "TsneConfig":
        names = [f for f in cls.__dataclass_fields__]
        check_keys(data, names + ["schema_version"], path)
        check_schema_version(data, path)
        defaults = {k: v for k, v in Config().get_tsne_defaults().items() if k in names and k != 'perplexity'}
        merged = {**defaults, **{k: v for k, v in data.items() if k in names}}
        try:
            return cls(**merged)
        except ConfigError as e:
            raise ConfigError(str(e).replace("$", path, 1)) from None

    def to_dict(self) -> dict:
        return {'schema_version': 1, **asdict(self)}


def _check_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ContractError(f"t-SNE input must be a 2-D array, got shape {points.shape}")
    if points.shape[0] < 4:
        raise ContractError(f"t-SNE needs at least 4 points, got {points.shape[0]}")
    if not np.all(np.isfinite(points)):
        raise ContractError("t-SNE input has non-finite values; impute MISSING cells first")
    return points


def conditional_affinities(sq_distances: np.ndarray, perplexity: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-normalised Gaussian affinities and the perplexity each row reached.

    All rows are bisected together on the kernel precision. Rows whose distances
    leave the target out of reach (duplicates, equidistant points) end at the
    search bound.
    """
    n = sq_distances.shape[0]
    off = ~np.eye(n, dtype=bool)
    d = np.where(off, sq_distances, np.inf)
    d = d - d.min(axis=1, keepdims=True)
    d_finite = np.where(off, d, 0.0)

    spread = d_finite.sum(axis=1) / max(n - 1, 1)
    beta = np.where(spread > 0, 1.0 / np.where(spread > 0, spread, 1.0), 1.0)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    for _ in range(MAX_BISECTION_STEPS):
        P = np.exp(-d * beta[:, None])
        total = P.sum(axis=1)
        entropy = np.log(total) + beta * (d_finite * P).sum(axis=1) / total
        realized = np.exp(entropy)
        active &= np.abs(realized - perplexity) > PERPLEXITY_TOLERANCE
        if not active.any():
            break
        too_flat = active & (realized > perplexity)
        too_sharp = active & ~too_flat
        lo[too_flat] = beta[too_flat]
        beta[too_flat] = np.where(np.isinf(hi[too_flat]), beta[too_flat] * 2.0,
                                  0.5 * (beta[too_flat] + hi[too_flat]))
        hi[too_sharp] = beta[too_sharp]
        beta[too_sharp] = 0.5 * (beta[too_sharp] + lo[too_sharp])
    P = np.exp(-d * beta[:, None])
    total = P.sum(axis=1)
    entropy = np.log(total) + beta * (d_finite * P).sum(axis=1) / total
    if active.any():
        run_log.add(f"perplexity search did not reach {perplexity:g} for {int(active.sum())} of {n} rows",
                    level="WARNING")
    return P / total[:, None], np.exp(entropy)


def compute_affinities(points, perplexity: float) -> np.ndarray:
    """
    Symmetric joint affinities ``(P_j|i + P_i|j) / (2N)``.

    Parameters
    ----------
    points : array-like, shape (N, D)
        Finite coordinates, N >= 4.
    perplexity : float
        Target perplexity in ``[1, (N - 1) / 3]``.

    Returns
    -------
    numpy.ndarray, shape (N, N)
        Zero diagonal, off-diagonal entries >= 1e-12, total 1.

    Raises
    ------
    ContractError
        Fewer than 4 points or non-finite input.
    ConfigError
        Infeasible perplexity.
    """
    points = _check_points(points)
    n = points.shape[0]
    if not 1.0 <= perplexity <= (n - 1) / 3.0:
        raise ConfigError(f"$.perplexity: must be in [1, {(n - 1) / 3.0:g}] for {n} points, got {perplexity:g}")
    conditional, _ = conditional_affinities(squareform(pdist(points, "sqeuclidean")), perplexity)
    P = (conditional + conditional.T) / (2.0 * n)
    np.fill_diagonal(P, 0.0)
    off = ~np.eye(n, dtype=bool)
    small = off & (P < AFFINITY_FLOOR)
    if small.any():
        P[small] = AFFINITY_FLOOR
        large = off & ~small
        P[large] *= (1.0 - AFFINITY_FLOOR * small.sum()) / P[large].sum()
    return P


def _student_kernel(Y: np.ndarray) -> np.ndarray:
    kernel = 1.0 / (1.0 + squareform(pdist(Y, "sqeuclidean")))
    np.fill_diagonal(kernel, 0.0)
    return kernel


def _kl(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], np.finfo(np.float64).tiny))))


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    """KL(P || Q) of the embedding ``Y``."""
    kernel = _student_kernel(Y)
    return _kl(P, kernel / kernel.sum())


def kl_and_gradient(P: np.ndarray, Y: np.ndarray, exaggeration: float = 1.0) -> Tuple[float, np.ndarray]:
    """
    KL(P || Q) and the gradient ``4 * sum_j (a*p_ij - q_ij) (1 + |y_i - y_j|^2)^-1 (y_i - y_j)``.

    The returned divergence never includes the exaggeration factor ``a``.
    """
    kernel = _student_kernel(Y)
    Q = kernel / kernel.sum()
    W = (exaggeration * P - Q) * kernel
    grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
    return _kl(P, Q), grad


def check_gradient(P: np.ndarray, Y: np.ndarray, h: float = 1e-5) -> float:
    """
    Largest deviation of the analytic gradient from central differences,
    relative to the largest analytic gradient component.
    """
    Y = np.asarray(Y, dtype=np.float64)
    _, analytic = kl_and_gradient(P, Y)
    numeric = np.zeros_like(Y)
    for index in np.ndindex(*Y.shape):
        up, down = Y.copy(), Y.copy()
        up[index] += h
        down[index] -= h
        numeric[index] = (kl_divergence(P, up) - kl_divergence(P, down)) / (2.0 * h)
    scale = max(float(np.max(np.abs(analytic))), np.finfo(np.float64).tiny)
    return float(np.max(np.abs(analytic - numeric)) / scale)


@dataclass
class Embedding2D:
    """
    Two-dimensional embedding of a set of cases.

    Attributes
    ----------
    coords : numpy.ndarray, shape (N, 2)
    final_kl : float
    input_space : str
        ``raw_features`` or ``shap_values``.
    case_ids : list of (patient_id, echo_date)
    labels : numpy.ndarray
        EF of each case.
    initial_kl : float
    perplexity : float
    kl_history : list of float
        KL after every iteration.
    halvings : int
        Rejected trial steps, each followed by a halving.
    neighbor_spread : float, optional
        Mean absolute EF difference to the 10 nearest neighbours, when computed.
    """
    coords: np.ndarray
    final_kl: float
    input_space: str
    case_ids: List[CaseId]
    labels: np.ndarray
    initial_kl: float = float("nan")
    perplexity: float = float("nan")
    kl_history: List[float] = field(default_factory=list)
    halvings: int = 0
    neighbor_spread: Optional[float] = None

    def __post_init__(self):
        if self.input_space not in INPUT_SPACES:
            raise ContractError(f"input_space must be one of {INPUT_SPACES}, got {self.input_space!r}")
        if len(self.case_ids) != self.coords.shape[0] or len(self.labels) != self.coords.shape[0]:
            raise ContractError("embedding coordinates, case ids and labels differ in length")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'case_id': [f"{p}_{d}" for p, d in self.case_ids],
            'x': self.coords[:, 0],
            'y': self.coords[:, 1],
            'label_ef': self.labels,
        })

    def save(self, path: str) -> str:
        try:
            self.to_frame().to_csv(path, index=False, lineterminator="\n")
        except OSError as e:
            raise ArtifactError(f"{path}: cannot write ({e.strerror or e})") from e
        write_json(meta_path(path), {
            'schema_version': 1,
            'input_space': self.input_space,
            'final_kl': self.final_kl,
            'initial_kl': self.initial_kl,
            'perplexity': self.perplexity,
            'halvings': self.halvings,
            'neighbor_spread': self.neighbor_spread,
            'n_points': int(self.coords.shape[0]),
        })
        return path

    @classmethod
    def load(cls, path: str) -> "Embedding2D":
        meta = read_json(meta_path(path))
        try:
            frame = pd.read_csv(path, dtype={'case_id': str}, keep_default_na=False, float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as e:
            raise ArtifactError(f"{path}: cannot read ({e})") from e
        if list(frame.columns) != ['case_id', 'x', 'y', 'label_ef']:
            raise ArtifactError(f"{path}: expected columns case_id, x, y, label_ef")
        case_ids = [tuple(c.rsplit("_", 1)) for c in frame['case_id']]
        return cls(frame[['x', 'y']].to_numpy(dtype=np.float64), float(meta['final_kl']), meta['input_space'],
                   case_ids, frame['label_ef'].to_numpy(dtype=np.float64), float(meta.get('initial_kl', np.nan)),
                   float(meta.get('perplexity', np.nan)), [], int(meta.get('halvings', 0)),
                   meta.get('neighbor_spread'))


def meta_path(path: str) -> str:
    """Sidecar JSON of an embedding CSV (``embed.csv`` -> ``embed.meta.json``)."""
    return os.path.splitext(path)[0] + ".meta.json"


def tsne(points, config: Optional[TsneConfig] = None, input_space: str = "raw_features",
         case_ids: Optional[Sequence[CaseId]] = None, labels=None) -> Embedding2D:
    """
    Embed ``points`` in two dimensions.

    Parameters
    ----------
    points : array-like, shape (N, D)
        Finite rows; MISSING cells must already be imputed.
    config : TsneConfig, optional
        Defaults from config.json.
    input_space : str
        Tag stored with the result.
    case_ids, labels : optional
        Carried into the result; default to row numbers and NaN.

    Returns
    -------
    Embedding2D

    Raises
    ------
    EmbeddingError
        If a step stays non-finite after every halving.
    """
    config = config or TsneConfig.from_dict({})
    points = _check_points(points)
    n = points.shape[0]
    case_ids = [(str(i), "") for i in range(n)] if case_ids is None else list(case_ids)
    labels = np.full(n, np.nan) if labels is None else np.asarray(labels, dtype=np.float64)
    perplexity = config.effective_perplexity(n)
    P = compute_affinities(points, perplexity)

    rng = np.random.default_rng(config.seed)
    Y = rng.normal(0.0, config.init_sd, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    initial_kl = kl_divergence(P, Y)
    current_kl = initial_kl
    history: List[float] = []
    halvings = 0

    for it in range(config.n_iter):
        exaggerating = it < config.exaggeration_iters
        momentum = config.momentum_start if it < config.momentum_switch_iter else config.momentum_final
        _, grad = kl_and_gradient(P, Y, config.early_exaggeration if exaggerating else 1.0)
        if not np.all(np.isfinite(grad)):
            raise EmbeddingError("non-finite t-SNE gradient", it)
        new_gains = np.where(update * grad < 0.0, gains + 0.2, gains * 0.8)
        np.clip(new_gains, MIN_GAIN, None, out=new_gains)
        proposal = momentum * update - config.learning_rate * new_gains * grad

        step = 1.0
        candidate_kl = np.nan
        for _ in range(MAX_HALVINGS + 1):
            candidate = Y + step * proposal
            with np.errstate(all="ignore"):
                candidate_kl = kl_divergence(P, candidate) if np.all(np.isfinite(candidate)) else np.nan
            if np.isfinite(candidate_kl) and candidate_kl <= current_kl + KL_TOLERANCE:
                break
            step *= 0.5
            halvings += 1
        else:
            if not np.isfinite(candidate_kl):
                raise EmbeddingError(f"t-SNE step stayed non-finite after {MAX_HALVINGS} halvings", it)
            candidate = None
        if candidate is not None:
            Y, gains, current_kl = candidate, new_gains, candidate_kl
            update = step * proposal
        else:
            update = np.zeros_like(Y)
        history.append(current_kl)

    if halvings:
        run_log.add(f"t-SNE halved its step {halvings} times", level="WARNING")
    run_log.add(f"t-SNE on {n} {input_space} points: perplexity {perplexity:g}, "
                f"KL {initial_kl:.4f} -> {current_kl:.4f}")
    return Embedding2D(Y, current_kl, input_space, case_ids, labels, initial_kl, perplexity, history, halvings)
