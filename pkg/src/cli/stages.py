"""
Library form of every pipeline stage.

Each stage function reads its inputs from disk, writes its artifacts and returns a
:class:`StageOutcome` holding the checksums of what it read and wrote, the config
snapshot and the seed it ran with. The command line front end and the pipeline
runner both call these functions; tests call them directly.

Functions
---------
synth_stage(config, out, threads)
etl_stage(config, raw, out, maps=None, threads)
train_stage(config, cases, out)
tune_stage(grid_config, cases, out)
eval_stage(model, cases, out, seed_runs=0, split="test")
explain_stage(model, cases, out, top_k=None, threads, split="test")
embed_stage(config, space, out, shap=None, cases=None, split="test")
plot_stage(spec, out, root=".")
"""

import os
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Optional

from src.data.case_matrix import MANIFEST_FILE, CaseMatrix
from src.embed.neighbors import knn_label_spread
from src.embed.preprocess import raw_space, shap_space
from src.embed.tsne import TsneConfig, meta_path, tsne
from src.etl.cases import EtlConfig
from src.etl.code_maps import CodeMaps
from src.etl.pipeline import run_etl
from src.explain.shap_matrix import META_FILE, SHAP_FILE, explain_dataset, load_shap
from src.explain.summary import importance_overlap, summarize
from src.gbt.metrics import evaluate, seed_sweep
from src.gbt.model import GbtModel, coverage_importance
from src.gbt.params import Hyperparams
from src.gbt.train import train
from src.gbt.tune import parse_grid, tune, tune_settings
from src.synth.cohort import CohortConfig, generate_cohort
from src.synth.raw_tables import read_raw_tables, write_raw_tables
from src.utils.errors import ArtifactError, ConfigError
from src.utils.general_func import ensure_dir, sha256_file, write_json
from src.utils.run_log import RunLog
from src.viz.plots import PlotSpec, render, save_svg

run_log = RunLog()

STAGES = ("synth", "etl", "train", "tune", "eval", "explain", "embed", "plot")
SPACES = {"shap": "shap_values", "raw": "raw_features"}
NEIGHBORS = 10


@dataclass
class StageOutcome:
    """
    What one stage read and wrote.

    ``inputs`` and ``outputs`` map file paths to SHA-256 digests; the pipeline
    runner rewrites the paths relative to its work directory.
    """
    stage: str
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None


def _files_under(path: str) -> Iterable[str]:
    if os.path.isdir(path):
        for dirpath, dirnames, filenames in os.walk(path):
            dirnames.sort()
            for name in sorted(filenames):
                yield os.path.join(dirpath, name)
    elif os.path.isfile(path):
        yield path
    else:
        raise ArtifactError(f"{path}: no such file or directory")


def checksums(*paths: Optional[str]) -> Dict[str, str]:
    """SHA-256 of every file, directories walked in sorted order; ``None`` entries are skipped."""
    result = {}
    for path in paths:
        if path is None:
            continue
        for f in _files_under(path):
            result[os.path.normpath(f)] = sha256_file(f)
    return result


def split_dir(path: str, split: str) -> str:
    """
    Case directory for ``split``.

    ``path`` is either a single case directory (it has a ``manifest.json``) or an
    ETL output directory holding ``train/``, ``valid/`` and ``test/``.
    """
    if os.path.isfile(os.path.join(path, MANIFEST_FILE)):
        return path
    candidate = os.path.join(path, split)
    if os.path.isfile(os.path.join(candidate, MANIFEST_FILE)):
        return candidate
    raise ArtifactError(f"{path}: neither a case directory nor an ETL output with a '{split}' split")


def _is_etl_output(path: str) -> bool:
    return not os.path.isfile(os.path.join(path, MANIFEST_FILE))


def synth_stage(config: CohortConfig, out: str, threads: int = 1) -> StageOutcome:
    """Generate a cohort and write the raw tables to ``out``."""
    run_log.add(f"synth: {config.n_patients} patients, seed {config.seed} -> {out}")
    store = generate_cohort(config, threads=threads)
    write_raw_tables(store, out)
    return StageOutcome("synth", {}, checksums(out), config.to_dict(), config.seed)


def etl_stage(config: EtlConfig, raw: str, out: str, maps: Optional[str] = None, threads: int = 1) -> StageOutcome:
    """
    Clean raw tables into split case matrices.

    Without ``maps`` the lookup tables of the synthetic vocabulary are used.
    """
    inputs = checksums(raw, maps)
    store = read_raw_tables(raw)
    code_maps = CodeMaps.load(maps) if maps else CodeMaps.synthetic()
    result = run_etl(store, code_maps, config, threads=threads)
    result.save(out, provenance={'raw_checksums': {os.path.basename(p): s for p, s in inputs.items()
                                                   if os.path.dirname(p) == os.path.normpath(raw)}})
    counts = ", ".join(f"{name} {m.n_cases}" for name, m in result.splits.items())
    run_log.add(f"etl: {counts} cases -> {out}")
    return StageOutcome("etl", inputs, checksums(out), config.to_dict(), config.split.seed)


def train_stage(config: Hyperparams, cases: str, out: str) -> StageOutcome:
    """Train on the ``train`` split of ``cases`` and write the model JSON to ``out``."""
    train_path = split_dir(cases, "train")
    data = CaseMatrix.load(train_path)
    model = train(data, config)
    model.save(out)
    run_log.add(f"train: {len(model.trees)} trees on {data.n_cases} cases -> {out}")
    return StageOutcome("train", checksums(train_path), checksums(out), config.to_dict(), config.seed)


def read_grid_config(data: dict, path: str = "$") -> dict:
    """Grid, tuning settings and base parameters of a tuning config, validated."""
    grid = parse_grid(data, path)
    settings = tune_settings(data, path)
    base = Hyperparams.from_dict(data.get('base', {}), f"{path}.base")
    return {'grid': grid, 'base': base, **settings}


def tune_stage(grid_config: dict, cases: str, out: str) -> StageOutcome:
    """
    Coordinate-descent search on the ``train`` split; writes the best hyperparameters.

    ``grid_config`` is the output of :func:`read_grid_config`.
    """
    train_path = split_dir(cases, "train")
    data = CaseMatrix.load(train_path)
    best = tune(data, grid_config['grid'], folds=grid_config['folds'], base=grid_config['base'],
                max_sweeps=grid_config['max_sweeps'], seed=grid_config['seed'])
    write_json(out, best.to_dict())
    snapshot = {'schema_version': 1, **grid_config['grid'], 'base': grid_config['base'].to_dict(),
                'folds': grid_config['folds'], 'max_sweeps': grid_config['max_sweeps'], 'seed': grid_config['seed']}
    return StageOutcome("tune", checksums(train_path), checksums(out), snapshot, grid_config['seed'])


def eval_stage(model: str, cases: str, out: str, seed_runs: int = 0, split: str = "test") -> StageOutcome:
    """
    Evaluate on one split of ``cases`` (``test`` by default).

    Writes ``report.json`` to ``out`` plus ``importance.json`` (coverage ranking on
    the training cases) and ``tree0.txt`` next to it. With ``seed_runs`` > 0 and an
    ETL output as ``cases``, the report gains a repeated-seed RMSE interval measured
    on the ``valid`` split.
    """
    gbt = GbtModel.load(model)
    split_path = split_dir(cases, split)
    train_path = split_dir(cases, "train")
    read = [model, split_path] if train_path == split_path else [model, train_path, split_path]
    report = evaluate(gbt, CaseMatrix.load(split_path)).to_dict()

    if seed_runs:
        if not _is_etl_output(cases):
            raise ConfigError("$.seed_runs: needs an ETL output directory with train and valid splits")
        if gbt.hyperparams is None:
            raise ConfigError("$.seed_runs: the model does not record its hyperparameters")
        valid_path = split_dir(cases, "valid")
        read.append(valid_path)
        sweep = seed_sweep(CaseMatrix.load(train_path), CaseMatrix.load(valid_path), gbt.hyperparams, seed_runs)
        report['seed_sweep'] = sweep.to_dict()

    folder = os.path.dirname(out)
    if folder:
        ensure_dir(folder)
    write_json(out, report)
    importance_path = write_json(os.path.join(folder, "importance.json"),
                                 coverage_importance(gbt, CaseMatrix.load(train_path)).to_dict())
    tree_path = os.path.join(folder, "tree0.txt")
    try:
        with open(tree_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(gbt.dump_tree(0))
    except OSError as e:
        raise ArtifactError(f"{tree_path}: cannot write ({e.strerror or e})") from e
    run_log.add(f"eval: rmse {report['rmse']:.4f} on {report['n']} cases -> {out}")
    seed = gbt.hyperparams.seed if gbt.hyperparams is not None else None
    return StageOutcome("eval", checksums(*read), checksums(out, importance_path, tree_path),
                        {'schema_version': 1, 'seed_runs': seed_runs}, seed)


def explain_stage(model: str, cases: str, out: str, top_k: Optional[int] = None, threads: int = 1,
                  split: str = "test") -> StageOutcome:
    """
    TreeSHAP for every case of one split (``test`` by default), written as a SHAP directory.

    ``summary.json`` in the same directory holds the mean-|SHAP| ranking and its
    overlap with the coverage ranking on the training cases.
    """
    gbt = GbtModel.load(model)
    split_path = split_dir(cases, split)
    train_path = split_dir(cases, "train")
    data = CaseMatrix.load(split_path)
    shap = explain_dataset(gbt, data, threads=threads)
    shap.save(out)
    summary = summarize(shap, data, top_k)
    coverage = coverage_importance(gbt, CaseMatrix.load(train_path))
    write_json(os.path.join(out, "summary.json"), {
        'schema_version': 1,
        **summary.to_dict(),
        'overlap': importance_overlap(coverage, summary),
    })
    read = [model, split_path] if train_path == split_path else [model, train_path, split_path]
    return StageOutcome("explain", checksums(*read), checksums(out),
                        {'schema_version': 1, 'top_k': summary.top_k}, None)


def embed_stage(config: TsneConfig, space: str, out: str, shap: Optional[str] = None,
                cases: Optional[str] = None, split: str = "test") -> StageOutcome:
    """
    t-SNE of SHAP rows (``space="shap"``) or of imputed, standardised raw features
    (``space="raw"``, one split of ``cases``, statistics from ``train``).

    The embedding meta file records the mean EF spread over each point's nearest
    neighbours.
    """
    if space not in SPACES:
        raise ConfigError(f"$.space: must be one of {', '.join(SPACES)}, got {space!r}")
    if space == "shap":
        if not shap:
            raise ConfigError("$.shap: required for a SHAP-space embedding")
        matrix = load_shap(shap)
        points, case_ids, labels, read = shap_space(matrix), matrix.case_ids, matrix.labels, [shap]
    else:
        if not cases:
            raise ConfigError("$.cases: required for a raw-feature embedding")
        split_path = split_dir(cases, split)
        train_path = split_dir(cases, "train")
        data = CaseMatrix.load(split_path)
        points = raw_space(data, CaseMatrix.load(train_path))
        case_ids, labels = data.case_ids, data.labels
        read = [split_path] if train_path == split_path else [train_path, split_path]

    embedding = tsne(points, config, SPACES[space], list(case_ids), labels)
    if len(labels) > NEIGHBORS:
        embedding = replace(embedding, neighbor_spread=knn_label_spread(embedding.coords, labels, NEIGHBORS))
    folder = os.path.dirname(out)
    if folder:
        ensure_dir(folder)
    embedding.save(out)
    run_log.add(f"embed: {len(labels)} points in {space} space, KL {embedding.final_kl:.4f} -> {out}")
    return StageOutcome("embed", checksums(*read), checksums(out, meta_path(out)),
                        {**config.to_dict(), 'space': space}, config.seed)


def plot_stage(spec: PlotSpec, out: str, root: str = ".") -> StageOutcome:
    """Render one figure; relative input paths are taken from ``root``."""
    inputs = {k: v if os.path.isabs(v) else os.path.join(root, v) for k, v in spec.inputs.items()}
    resolved = replace(spec, inputs=inputs)
    read = []
    for key, path in inputs.items():
        if key == "shap":
            read.append(os.path.join(path, META_FILE))
            read.append(os.path.join(path, SHAP_FILE))
        else:
            read.append(path)
    svg = render(resolved)
    folder = os.path.dirname(out)
    if folder:
        ensure_dir(folder)
    save_svg(svg, out)
    run_log.add(f"plot: {spec.kind} -> {out}")
    return StageOutcome("plot", checksums(*read), checksums(out), spec.to_dict(), spec.seed)
