"""
Pipeline runner and run manifest.

A pipeline file lists stages in execution order::

    {
      "schema_version": 1,
      "workdir": "run",
      "threads": 1,
      "stages": [
        {"stage": "synth", "config": "cohort.json", "out": "raw"},
        {"stage": "etl", "raw": "raw", "out": "cases"},
        {"stage": "train", "config": {"n_trees": 50}, "cases": "cases", "out": "model.json"},
        ...
      ]
    }

``config`` is either an inline object or a path to a JSON file (relative to the
pipeline file). Artifact paths are relative to ``workdir``, itself relative to
the pipeline file. Every stage config is validated before the first stage runs.
"""

import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from src.cli import stages
from src.embed.tsne import TsneConfig
from src.etl.cases import EtlConfig
from src.etl.pipeline import SPLITS
from src.gbt.params import Hyperparams
from src.synth.cohort import CohortConfig
from src.utils.config import as_number, check_keys, check_schema_version, load_json_config
from src.utils.errors import ConfigError, ContractError, EfshapError, StageError
from src.utils.general_func import ensure_dir, resolve_threads, write_json
from src.utils.run_log import RunLog
from src.viz.plots import PlotSpec

run_log = RunLog()

MANIFEST_FILE = "manifest.json"

# keys each stage entry may carry, besides "stage"; required ones first
STAGE_KEYS = {
    'synth': (("out",), ("config",)),
    'etl': (("raw", "out"), ("config", "maps")),
    'train': (("cases", "out"), ("config",)),
    'tune': (("config", "cases", "out"), ()),
    'eval': (("model", "cases", "out"), ("seed_runs", "split")),
    'explain': (("model", "cases", "out"), ("top_k", "split")),
    'embed': (("space", "out"), ("config", "shap", "cases", "split")),
    'plot': (("config", "out"), ()),
}

_READERS = {
    'synth': CohortConfig.from_dict,
    'etl': EtlConfig.from_dict,
    'train': Hyperparams.from_dict,
    'tune': stages.read_grid_config,
    'embed': TsneConfig.from_dict,
    'plot': PlotSpec.from_dict,
}


@dataclass
class StageRecord:
    stage: str
    inputs: Dict[str, str]
    outputs: Dict[str, str]
    config: dict
    seed: Optional[int]
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            'stage': self.stage,
            'inputs': dict(sorted(self.inputs.items())),
            'outputs': dict(sorted(self.outputs.items())),
            'config': self.config,
            'seed': self.seed,
            'wall_time_s': round(self.wall_time_s, 3),
        }


@dataclass
class RunManifest:
    """
    Ordered record of a pipeline run.

    ``status`` is ``ok`` or ``failed``; a failed run names the stage and the error.
    """
    entries: List[StageRecord] = field(default_factory=list)
    status: str = "ok"
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        data = {'schema_version': 1, 'status': self.status, 'stages': [e.to_dict() for e in self.entries]}
        if self.failed_stage is not None:
            data['failed_stage'] = self.failed_stage
            data['error'] = self.error
        return data

    def save(self, workdir: str) -> str:
        return write_json(os.path.join(workdir, MANIFEST_FILE), self.to_dict())

    def checksums(self) -> List[Dict[str, str]]:
        """Output checksums per stage; equal lists mean byte-identical artifacts."""
        return [dict(sorted(e.outputs.items())) for e in self.entries]

    def check_lineage(self) -> None:
        """
        Every input that an earlier stage wrote must still carry that stage's checksum.

        Inputs no earlier stage wrote are external files and are accepted as they are.

        Raises
        ------
        ContractError
            Naming the stage and the file whose checksum differs.
        """
        written: Dict[str, str] = {}
        for entry in self.entries:
            for path, digest in entry.inputs.items():
                if path in written and written[path] != digest:
                    raise ContractError(f"stage '{entry.stage}' read {path} with a checksum no earlier stage wrote")
            written.update(entry.outputs)


@dataclass
class StagePlan:
    index: int
    stage: str
    args: Dict[str, Any]
    config: Any


@dataclass
class Pipeline:
    workdir: str
    threads: Optional[int]
    plan: List[StagePlan]


def _stage_config(stage: str, raw: Any, base_dir: str, path: str):
    if raw is None:
        raw = {}
    if isinstance(raw, str):
        raw = load_json_config(raw if os.path.isabs(raw) else os.path.join(base_dir, raw))
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: must be a JSON object or a path to one")
    return _READERS[stage](raw, path)


def parse_pipeline(data: dict, base_dir: str = ".") -> Pipeline:
    """
    Validate a pipeline object and every stage config it references.

    Raises
    ------
    ConfigError
        Message starts with the JSON path of the offending value.
    """
    check_keys(data, ("schema_version", "workdir", "threads", "stages"), "$")
    check_schema_version(data, "$")
    workdir = data.get('workdir', ".")
    if not isinstance(workdir, str):
        raise ConfigError("$.workdir: must be a string")
    threads = data.get('threads')
    if threads is not None:
        threads = as_number(threads, "$.threads", 0, None, integer=True)
    entries = data.get('stages')
    if not isinstance(entries, list) or not entries:
        raise ConfigError("$.stages: must be a non-empty list")

    plan = []
    for i, entry in enumerate(entries):
        path = f"$.stages[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{path}: must be a JSON object")
        stage = entry.get('stage')
        if stage not in STAGE_KEYS:
            raise ConfigError(f"{path}.stage: must be one of {', '.join(stages.STAGES)}, got {stage!r}")
        required, optional = STAGE_KEYS[stage]
        check_keys(entry, ("stage",) + required + optional, path)
        for key in required:
            if key not in entry:
                raise ConfigError(f"{path}.{key}: required for the {stage} stage")
        args = {k: v for k, v in entry.items() if k not in ("stage", "config")}
        for key in ("out", "raw", "maps", "cases", "model", "shap", "space", "split"):
            if key in args and not isinstance(args[key], str):
                raise ConfigError(f"{path}.{key}: must be a string")
        if 'seed_runs' in args:
            args['seed_runs'] = as_number(args['seed_runs'], f"{path}.seed_runs", 0, None, integer=True)
        if 'top_k' in args:
            args['top_k'] = as_number(args['top_k'], f"{path}.top_k", 0, None, integer=True)
        if 'split' in args and args['split'] not in SPLITS:
            raise ConfigError(f"{path}.split: must be one of {', '.join(SPLITS)}, got {args['split']!r}")
        if stage == "embed" and args['space'] not in stages.SPACES:
            raise ConfigError(f"{path}.space: must be one of {', '.join(stages.SPACES)}, got {args['space']!r}")
        config = _stage_config(stage, entry.get('config'), base_dir, f"{path}.config") if stage in _READERS else None
        plan.append(StagePlan(i, stage, args, config))
    return Pipeline(os.path.join(base_dir, workdir), threads, plan)


def _execute(step: StagePlan, workdir: str, threads: int) -> stages.StageOutcome:
    def at(key):
        value = step.args.get(key)
        if value is None:
            return None
        return value if os.path.isabs(value) else os.path.join(workdir, value)

    if step.stage == "synth":
        return stages.synth_stage(step.config, at('out'), threads)
    if step.stage == "etl":
        return stages.etl_stage(step.config, at('raw'), at('out'), at('maps'), threads)
    if step.stage == "train":
        return stages.train_stage(step.config, at('cases'), at('out'))
    if step.stage == "tune":
        return stages.tune_stage(step.config, at('cases'), at('out'))
    if step.stage == "eval":
        return stages.eval_stage(at('model'), at('cases'), at('out'), step.args.get('seed_runs', 0),
                                 step.args.get('split', "test"))
    if step.stage == "explain":
        return stages.explain_stage(at('model'), at('cases'), at('out'), step.args.get('top_k'), threads,
                                    step.args.get('split', "test"))
    if step.stage == "embed":
        return stages.embed_stage(step.config, step.args['space'], at('out'), at('shap'), at('cases'),
                                  step.args.get('split', "test"))
    return stages.plot_stage(step.config, at('out'), workdir)


def _relative(checksums: Dict[str, str], workdir: str) -> Dict[str, str]:
    return {os.path.relpath(p, workdir).replace(os.sep, "/"): s for p, s in checksums.items()}


def run_pipeline(config: dict, base_dir: str = ".", threads: Optional[int] = None) -> RunManifest:
    """
    Run every stage in order and write ``manifest.json`` into the work directory.

    Parameters
    ----------
    config : dict
        Parsed pipeline file.
    base_dir : str
        Directory that relative paths in ``config`` start from.
    threads : int, optional
        Overrides the pipeline's ``threads``; then ``EFSHAP_THREADS`` and the defaults apply.

    Returns
    -------
    RunManifest

    Raises
    ------
    ConfigError
        Before any stage runs, for an invalid pipeline or stage config.
    StageError
        When a stage fails; artifacts of earlier stages stay on disk and a manifest
        with ``status: failed`` is written.
    """
    pipeline = parse_pipeline(config, base_dir)
    workers = resolve_threads(threads if threads is not None else pipeline.threads)
    workdir = ensure_dir(pipeline.workdir)
    manifest = RunManifest()
    run_log.add(f"pipeline: {len(pipeline.plan)} stages in {workdir} with {workers} threads")
    for step in pipeline.plan:
        started = time.perf_counter()
        try:
            outcome = _execute(step, workdir, workers)
        except EfshapError as e:
            manifest.status, manifest.failed_stage, manifest.error = "failed", step.stage, str(e)
            manifest.save(workdir)
            run_log.add(f"stage {step.index} ({step.stage}) failed: {e}", level="ERROR")
            raise StageError(step.stage, e) from e
        manifest.entries.append(StageRecord(step.stage, _relative(outcome.inputs, workdir),
                                            _relative(outcome.outputs, workdir), outcome.config, outcome.seed,
                                            time.perf_counter() - started))
    manifest.check_lineage()
    manifest.save(workdir)
    run_log.add(f"pipeline finished: {len(manifest.entries)} stages")
    return manifest


def run_pipeline_file(path: str, threads: Optional[int] = None) -> RunManifest:
    """Load a pipeline file and run it relative to its own directory."""
    return run_pipeline(load_json_config(path), os.path.dirname(os.path.abspath(path)), threads)
