"""SVG writer and figure renderers."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from src.embed.tsne import TsneConfig, tsne
from src.explain.shap_matrix import ShapMatrix
from src.explain.summary import summarize
from src.tests.helpers import case_matrix
from src.utils.errors import ConfigError, ContractError
from src.viz.plots import (PlotSpec, render, render_beeswarm, render_dependence, render_embedding,
                           render_importance_bars, render_pred_scatter, save_svg)
from src.viz.svg import SvgDocument, fmt_num, nice_ticks, padded_range, ramp_color

SVG = "{http://www.w3.org/2000/svg}"


def points(svg: str):
    return [c for c in ET.fromstring(svg).iter(f"{SVG}circle") if c.get("class") == "point"]


@pytest.mark.parametrize("value, text", [
    (1.0, "1"), (12.5, "12.5"), (-3.14159, "-3.14"), (100, "100"), (0.0, "0"), (-0.001, "0"), (0.004, "0"),
])
def test_fmt_num(value, text):
    assert fmt_num(value) == text


def test_nice_ticks():
    assert nice_ticks(0.0, 100.0) == [0.0, 20.0, 40.0, 60.0, 80.0, 100.0]
    assert nice_ticks(0.0, 1.0, 5) == pytest.approx([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    assert nice_ticks(-7.0, 13.0, 4) == [-5.0, 0.0, 5.0, 10.0]
    assert nice_ticks(5.0, 5.0) == [5.0]


def test_padded_range_and_colors():
    assert padded_range([0.0, 10.0, np.nan]) == pytest.approx((-0.5, 10.5))
    assert padded_range([3.0]) == (2.5, 3.5)
    assert padded_range([np.nan], default=(-1.0, 1.0)) == (-1.0, 1.0)
    assert ramp_color(0.0, "#008bfb", "#ff0051") == "#008bfb"
    assert ramp_color(2.0, "#008bfb", "#ff0051") == "#ff0051"
    assert ramp_color(0.5, "#000000", "#ffffff") == "#808080"


def test_svg_document_attributes_are_escaped_and_renamed():
    doc = SvgDocument(100, 50)
    doc.circle(1.005, 2, 3, class_="point", data_x="a<b", fill_opacity="0.5")
    doc.text(0, 0, "R&D")
    svg = doc.render()
    assert 'class="point" data-x="a&lt;b" fill-opacity="0.5"' in svg
    assert ">R&amp;D</text>" in svg
    ET.fromstring(svg)


def test_dependence_plot_draws_every_case():
    values = [1.0, np.nan, 2.0, 3.5, np.nan]
    svg = render_dependence("LB_F0", values, [0.5, -1.0, 0.2, 2.0, 0.0])
    drawn = points(svg)
    assert len(drawn) == 5
    assert [c.get("data-x") for c in drawn] == ["1", "missing", "2", "3.5", "missing"]
    assert svg.count('fill="#9a9a9a"') >= 2


def test_dependence_plot_of_a_binary_feature_uses_jitter():
    values = [0.0, 1.0, 0.0, 1.0]
    first = render_dependence("DEMO_GENDER", values, [1.0, -1.0, 2.0, -2.0], seed=1)
    again = render_dependence("DEMO_GENDER", values, [1.0, -1.0, 2.0, -2.0], seed=1)
    other = render_dependence("DEMO_GENDER", values, [1.0, -1.0, 2.0, -2.0], seed=2)
    assert first == again and first != other
    assert [c.get("data-x") for c in points(first)] == ["0", "1", "0", "1"]
    with pytest.raises(ContractError):
        render_dependence("DEMO_GENDER", values, [1.0])


def test_importance_bars():
    svg = render_importance_bars(["DI_I255", "VL_PULSE", "DEMO_AGE"], [3.0, 2.0, 0.5])
    bars = [r for r in ET.fromstring(svg).iter(f"{SVG}rect") if r.get("class") == "bar"]
    assert [b.get("data-feature") for b in bars] == ["DI_I255", "VL_PULSE", "DEMO_AGE"]
    widths = [float(b.get("width")) for b in bars]
    assert widths == sorted(widths, reverse=True)
    with pytest.raises(ContractError):
        render_importance_bars(["a"], [1.0, 2.0])


def _summary(n=6, m=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m))
    X[0, 0] = np.nan
    data = case_matrix(X, np.full(n, 50.0))
    shap = ShapMatrix(rng.normal(size=(n, m)) * np.arange(1, m + 1), 50.0, data.catalog.names, data.case_ids,
                      data.labels)
    return summarize(shap, data, top_k=m)


def test_beeswarm_is_deterministic_per_seed():
    summary = _summary()
    svg = render_beeswarm(summary, top_k=3, seed=7)
    assert svg == render_beeswarm(summary, top_k=3, seed=7)
    assert svg != render_beeswarm(summary, top_k=3, seed=8)
    rows = [g for g in ET.fromstring(svg).iter(f"{SVG}g") if g.get("class") == "row"]
    assert [g.get("data-feature") for g in rows] == summary.top(3)
    assert len(points(svg)) == 3 * 6


def test_embedding_and_prediction_scatter():
    coords = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0], [2.0, 2.0]])
    assert len(points(render_embedding(coords, [30.0, 40.0, np.nan, 60.0]))) == 4
    with pytest.raises(ContractError):
        render_embedding(coords, [1.0])
    svg = render_pred_scatter([12.0, 18.0, 33.0], [10.0, 20.0, 30.0])
    assert len(points(svg)) == 3
    assert "RMSE = 2.380" in svg


@pytest.mark.parametrize("data, path", [
    ({"inputs": {}}, r"^\$\.kind: required"),
    ({"kind": "pie"}, r"^\$\.kind"),
    ({"kind": "dependence", "inputs": {"shap": "s", "cases": "c"}}, r"^\$\.feature"),
    ({"kind": "beeswarm", "inputs": {"cases": "c"}}, r"^\$\.inputs\.shap"),
    ({"kind": "embedding", "inputs": {"embedding": "e", "pixels": "p"}}, r"^\$\.inputs\.pixels"),
    ({"kind": "importance_bars", "measure": "shap", "inputs": {"model": "m"}}, r"^\$\.inputs\.shap"),
    ({"kind": "importance_bars", "measure": "gain"}, r"^\$\.measure"),
    ({"kind": "embedding", "inputs": {"embedding": "e"}, "width": 10}, r"^\$\.width"),
])
def test_plot_spec_errors(data, path):
    with pytest.raises(ConfigError, match=path):
        PlotSpec.from_dict(data)


def test_plot_spec_defaults_and_path():
    spec = PlotSpec.from_dict({"kind": "embedding", "inputs": {"embedding": "embed.csv"}})
    assert (spec.width, spec.height, spec.top_k) == (800, 600, 20)
    assert PlotSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError, match=r"^\$\.plots\[1\]\.kind"):
        PlotSpec.from_dict({"kind": "pie"}, "$.plots[1]")


def test_save_svg(tmp_path):
    svg = render_importance_bars(["a"], [1.0])
    path = save_svg(svg, str(tmp_path / "bars.svg"))
    with open(path, encoding="utf-8") as f:
        assert f.read() == svg


def test_embedding_coloured_by_a_feature(tmp_path, rng):
    X = rng.normal(size=(8, 2))
    X[3, 0] = np.nan
    data = case_matrix(X, np.linspace(20.0, 70.0, 8))
    data.save(str(tmp_path / "cases"))
    embedding = tsne(X[:, [1]], TsneConfig(perplexity=2.0, n_iter=20), "raw_features", data.case_ids, data.labels)
    embedding.save(str(tmp_path / "embed.csv"))
    inputs = {"embedding": str(tmp_path / "embed.csv"), "cases": str(tmp_path / "cases")}

    by_feature = render(PlotSpec.from_dict({"kind": "embedding", "color_by": "LB_F0", "inputs": inputs}))
    fills = [c.get("fill") for c in points(by_feature)]
    assert len(fills) == 8
    assert fills[3] == "#9a9a9a" and fills.count("#9a9a9a") == 1
    by_ef = render(PlotSpec.from_dict({"kind": "embedding", "inputs": {"embedding": inputs["embedding"]}}))
    assert "#9a9a9a" not in [c.get("fill") for c in points(by_ef)]
    with pytest.raises(ContractError, match="color_by"):
        render(PlotSpec.from_dict({"kind": "embedding", "color_by": "LB_F7", "inputs": inputs}))
    with pytest.raises(ConfigError, match="inputs.cases"):
        render(PlotSpec.from_dict({"kind": "embedding", "color_by": "LB_F0",
                                   "inputs": {"embedding": inputs["embedding"]}}))
