"""Stage functions, the pipeline runner and the command line."""

import json
import os

import pytest

from src.cli import stages
from src.cli.main import main
from src.cli.pipeline import RunManifest, StageRecord, parse_pipeline, run_pipeline, run_pipeline_file
from src.data.case_matrix import CaseMatrix
from src.embed.tsne import Embedding2D
from src.explain.shap_matrix import load_shap
from src.gbt.model import GbtModel
from src.utils.errors import ArtifactError, ConfigError, ContractError, StageError


def full_pipeline(workdir="run", threads=None, n_patients=120):
    data = {
        "schema_version": 1,
        "workdir": workdir,
        "stages": [
            {"stage": "synth", "config": {"n_patients": n_patients, "seed": 4}, "out": "raw"},
            {"stage": "etl", "raw": "raw", "out": "cases"},
            {"stage": "train", "config": {"n_trees": 10, "seed": 1}, "cases": "cases", "out": "model.json"},
            {"stage": "tune", "config": {"max_depth": [1, 2], "folds": 2, "max_sweeps": 1, "base": {"n_trees": 3}},
             "cases": "cases", "out": "best.json"},
            {"stage": "eval", "model": "model.json", "cases": "cases", "out": "eval/report.json"},
            {"stage": "explain", "model": "model.json", "cases": "cases", "out": "shap", "top_k": 5},
            {"stage": "embed", "space": "shap", "shap": "shap", "config": {"n_iter": 40}, "out": "embed/shap.csv"},
            {"stage": "embed", "space": "raw", "cases": "cases", "config": {"n_iter": 40}, "out": "embed/raw.csv"},
            {"stage": "plot", "config": {"kind": "beeswarm", "inputs": {"shap": "shap", "cases": "cases/test"}},
             "out": "plots/beeswarm.svg"},
            {"stage": "plot", "config": {"kind": "dependence", "feature": "DEMO_GENDER",
                                         "inputs": {"shap": "shap", "cases": "cases/test"}},
             "out": "plots/gender.svg"},
            {"stage": "plot", "config": {"kind": "importance_bars", "inputs": {"model": "model.json",
                                                                               "cases": "cases/train"}},
             "out": "plots/coverage.svg"},
            {"stage": "plot", "config": {"kind": "pred_scatter", "inputs": {"model": "model.json",
                                                                            "cases": "cases/test"}},
             "out": "plots/pred.svg"},
            {"stage": "plot", "config": {"kind": "embedding", "inputs": {"embedding": "embed/shap.csv"}},
             "out": "plots/embed.svg"},
        ],
    }
    if threads is not None:
        data["threads"] = threads
    return data


def test_full_pipeline_writes_every_artifact(tmp_path):
    manifest = run_pipeline(full_pipeline(), str(tmp_path))
    run = tmp_path / "run"
    assert manifest.status == "ok"
    assert [e.stage for e in manifest.entries] == ["synth", "etl", "train", "tune", "eval", "explain", "embed",
                                                  "embed", "plot", "plot", "plot", "plot", "plot"]
    manifest.check_lineage()
    saved = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
    assert saved["status"] == "ok" and len(saved["stages"]) == 13
    assert "raw/manifest.json" in saved["stages"][0]["outputs"]
    train_cases = "cases/train/cases.csv"
    assert saved["stages"][2]["inputs"][train_cases] == saved["stages"][1]["outputs"][train_cases]
    assert saved["stages"][0]["seed"] == 4

    for name in ("eval/report.json", "eval/importance.json", "eval/tree0.txt", "shap/summary.json", "best.json",
                 "plots/beeswarm.svg", "plots/gender.svg", "plots/coverage.svg", "plots/pred.svg",
                 "plots/embed.svg", "embed/shap.meta.json"):
        assert (run / name).exists(), name

    model = GbtModel.load(str(run / "model.json"))
    test = CaseMatrix.load(str(run / "cases" / "test"))
    shap = load_shap(str(run / "shap"), model)
    assert shap.n_cases == test.n_cases
    assert abs(shap.reconstruction() - model.predict_cases(test)).max() <= 1e-8
    report = json.loads((run / "eval" / "report.json").read_text(encoding="utf-8"))
    assert report["n"] == test.n_cases
    summary = json.loads((run / "shap" / "summary.json").read_text(encoding="utf-8"))
    assert len(summary["ranking"]) == 5 and set(summary["overlap"]) == {"shared", "shap_only", "coverage_only"}
    embedding = Embedding2D.load(str(run / "embed" / "shap.csv"))
    assert embedding.input_space == "shap_values" and embedding.neighbor_spread is not None
    assert Embedding2D.load(str(run / "embed" / "raw.csv")).input_space == "raw_features"
    assert (run / "plots" / "gender.svg").read_text(encoding="utf-8").count('class="point"') == test.n_cases


def test_pipeline_output_does_not_depend_on_threads(tmp_path):
    single = run_pipeline(full_pipeline("one", threads=1, n_patients=80), str(tmp_path))
    several = run_pipeline(full_pipeline("eight", threads=8, n_patients=80), str(tmp_path))
    assert single.checksums() == several.checksums()


def test_failed_stage_stops_the_run(tmp_path):
    data = {"workdir": "run", "stages": [
        {"stage": "synth", "config": {"n_patients": 20}, "out": "raw"},
        {"stage": "train", "cases": "nowhere", "out": "model.json"},
        {"stage": "eval", "model": "model.json", "cases": "nowhere", "out": "report.json"},
    ]}
    with pytest.raises(StageError, match="stage 'train' failed") as info:
        run_pipeline(data, str(tmp_path))
    assert isinstance(info.value.__cause__, ArtifactError)
    saved = json.loads((tmp_path / "run" / "manifest.json").read_text(encoding="utf-8"))
    assert saved["status"] == "failed" and saved["failed_stage"] == "train"
    assert [s["stage"] for s in saved["stages"]] == ["synth"]
    assert (tmp_path / "run" / "raw" / "manifest.json").exists()


@pytest.mark.parametrize("entry, path", [
    ({"stage": "etl", "raw": "raw", "out": "cases", "config": {"window_days": -1}},
     r"^\$\.stages\[1\]\.config\.window_days"),
    ({"stage": "deploy", "out": "x"}, r"^\$\.stages\[1\]\.stage"),
    ({"stage": "train", "out": "model.json"}, r"^\$\.stages\[1\]\.cases"),
    ({"stage": "eval", "model": "m", "cases": "c", "out": "r", "split": "holdout"}, r"^\$\.stages\[1\]\.split"),
    ({"stage": "embed", "space": "pixels", "out": "e.csv"}, r"^\$\.stages\[1\]\.space"),
    ({"stage": "explain", "model": "m", "cases": "c", "out": "s", "top_k": -2}, r"^\$\.stages\[1\]\.top_k"),
    ({"stage": "plot", "config": {"kind": "dependence", "inputs": {"shap": "s", "cases": "c"}}, "out": "p.svg"},
     r"^\$\.stages\[1\]\.config\.feature"),
])
def test_invalid_configs_fail_before_any_stage(tmp_path, entry, path):
    data = {"workdir": "run", "stages": [{"stage": "synth", "out": "raw"}, entry]}
    with pytest.raises(ConfigError, match=path):
        run_pipeline(data, str(tmp_path))
    assert not (tmp_path / "run").exists()


def test_parse_pipeline_reads_config_files(tmp_path):
    (tmp_path / "cohort.json").write_text(json.dumps({"n_patients": 15}), encoding="utf-8")
    plan = parse_pipeline({"stages": [{"stage": "synth", "config": "cohort.json", "out": "raw"}]}, str(tmp_path))
    assert plan.plan[0].config.n_patients == 15
    assert plan.workdir == os.path.join(str(tmp_path), ".")
    with pytest.raises(ConfigError, match=r"^\$\.stages:"):
        parse_pipeline({"stages": []})
    with pytest.raises(ConfigError, match=r"^\$\.workers"):
        parse_pipeline({"workers": 2, "stages": [{"stage": "synth", "out": "raw"}]})


def test_run_pipeline_file(tmp_path):
    pipeline = {"workdir": "out", "stages": [{"stage": "synth", "config": "cohort.json", "out": "raw"}]}
    (tmp_path / "cohort.json").write_text(json.dumps({"n_patients": 12, "seed": 8}), encoding="utf-8")
    (tmp_path / "pipeline.json").write_text(json.dumps(pipeline), encoding="utf-8")
    manifest = run_pipeline_file(str(tmp_path / "pipeline.json"))
    assert manifest.entries[0].config["n_patients"] == 12
    assert (tmp_path / "out" / "manifest.json").exists()


def test_lineage_check_rejects_changed_inputs():
    manifest = RunManifest([
        StageRecord("synth", {}, {"raw/a.csv": "1" * 64}, {}, 1, 0.1),
        StageRecord("etl", {"raw/a.csv": "2" * 64}, {"cases/x": "3" * 64}, {}, 1, 0.1),
    ])
    with pytest.raises(ContractError, match="stage 'etl' read raw/a.csv"):
        manifest.check_lineage()
    RunManifest([StageRecord("etl", {"maps/ndc.tsv": "4" * 64}, {}, {}, None, 0.0)]).check_lineage()


def test_split_dir_accepts_both_layouts(trained_dir):
    cases = str(trained_dir / "cases")
    assert stages.split_dir(cases, "valid") == os.path.join(cases, "valid")
    assert stages.split_dir(os.path.join(cases, "test"), "train") == os.path.join(cases, "test")
    with pytest.raises(ArtifactError):
        stages.split_dir(str(trained_dir / "nothing"), "train")


def test_eval_stage_with_seed_sweep(trained_dir, tmp_path):
    out = tmp_path / "report.json"
    outcome = stages.eval_stage(str(trained_dir / "model.json"), str(trained_dir / "cases"), str(out), seed_runs=2)
    report = json.loads(out.read_text(encoding="utf-8"))
    assert len(report["seed_sweep"]["rmse"]) == 2
    assert outcome.seed == 2
    with pytest.raises(ConfigError, match="seed_runs"):
        stages.eval_stage(str(trained_dir / "model.json"), str(trained_dir / "cases" / "test"),
                          str(tmp_path / "r2.json"), seed_runs=2)


def test_cli_runs_stages_and_reports_errors(trained_dir, tmp_path, capsys):
    model, cases = str(trained_dir / "model.json"), str(trained_dir / "cases")
    report = tmp_path / "valid.json"
    assert main(["eval", "--model", model, "--cases", cases, "--split", "valid", "--out", str(report)]) == 0
    valid = CaseMatrix.load(os.path.join(cases, "valid"))
    assert json.loads(report.read_text(encoding="utf-8"))["n"] == valid.n_cases

    svg = tmp_path / "bars.svg"
    assert main(["plot", "--kind", "importance_bars", "--model", model, "--cases", os.path.join(cases, "train"),
                 "--top", "5", "--out", str(svg)]) == 0
    assert svg.read_text(encoding="utf-8").count('class="bar"') <= 5

    assert main(["plot", "--out", str(tmp_path / "x.svg")]) == 1
    assert "error: plot: either --config or --kind is required" in capsys.readouterr().err

    assert main(["train", "--cases", str(tmp_path / "missing"), "--out", str(tmp_path / "m.json")]) == 1
    assert "error: " in capsys.readouterr().err


def test_cli_synth_and_log_file(tmp_path):
    config = tmp_path / "cohort.json"
    config.write_text(json.dumps({"n_patients": 10}), encoding="utf-8")
    log = tmp_path / "run.log"
    assert main(["--log", str(log), "synth", "--config", str(config), "--seed", "3",
                 "--out", str(tmp_path / "raw")]) == 0
    assert (tmp_path / "raw" / "manifest.json").exists()
    assert "efshap synth finished" in log.read_text(encoding="utf-8")
