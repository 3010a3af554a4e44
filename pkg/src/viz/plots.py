"""
Figure renderers: prediction scatter, importance bars, SHAP beeswarm, dependence
scatter and embedding scatter.

Every data point is one ``<circle class="point">`` element (bars are
``<rect class="bar">``). Point colours run linearly from ``viz.low_color`` (low
values) to ``viz.high_color`` (high values) over the finite range of the colouring
variable; MISSING values are drawn in ``viz.missing_color``. Jitter comes from a
generator seeded with ``PlotSpec.seed``.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.data.case_matrix import CaseMatrix
from src.embed.tsne import Embedding2D
from src.explain.shap_matrix import ShapMatrix
from src.explain.summary import ShapSummary, rank_by_mean_abs, summarize
from src.gbt.metrics import regression_report
from src.gbt.model import GbtModel, coverage_importance
from src.utils.config import Config, as_number, check_keys, check_schema_version
from src.utils.errors import ArtifactError, ConfigError, ContractError
from src.viz.svg import Axes, SvgDocument, fmt_num, padded_range, ramp_color

KINDS = ("pred_scatter", "importance_bars", "beeswarm", "dependence", "embedding")
REQUIRED_INPUTS = {
    'pred_scatter': ("model", "cases"),
    'importance_bars': (),
    'beeswarm': ("shap", "cases"),
    'dependence': ("shap", "cases"),
    'embedding': ("embedding",),
}
INPUT_KEYS = ("model", "cases", "shap", "embedding")
MEASURES = ("coverage", "shap")
JITTER = 0.35


@dataclass(frozen=True)
class PlotSpec:
    """
    One figure.

    Attributes
    ----------
    kind : str
        One of :data:`KINDS`.
    inputs : dict of str -> str
        Artifact paths under the keys ``model`` (model.json), ``cases`` (case
        directory), ``shap`` (SHAP directory) and ``embedding`` (embed.csv).
    feature : str, optional
        Feature on the x axis of a dependence plot.
    color_by : str, optional
        Colouring feature (dependence, embedding) or ``ef`` (embedding default).
    measure : str
        ``coverage`` (needs model and cases) or ``shap`` (needs shap) for
        importance bars.
    top_k, width, height, seed : int
    title : str
    """
    kind: str
    inputs: Dict[str, str] = field(default_factory=dict)
    feature: Optional[str] = None
    color_by: Optional[str] = None
    measure: str = "coverage"
    top_k: int = 20
    width: int = 800
    height: int = 600
    seed: int = 0
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"$.kind: must be one of {', '.join(KINDS)}, got {self.kind!r}")
        check_keys(self.inputs, INPUT_KEYS, "$.inputs")
        for key in REQUIRED_INPUTS[self.kind]:
            if key not in self.inputs:
                raise ConfigError(f"$.inputs.{key}: required for {self.kind} plots")
        if self.measure not in MEASURES:
            raise ConfigError(f"$.measure: must be one of {', '.join(MEASURES)}, got {self.measure!r}")
        if self.kind == "importance_bars":
            needed = ("model", "cases") if self.measure == "coverage" else ("shap",)
            for key in needed:
                if key not in self.inputs:
                    raise ConfigError(f"$.inputs.{key}: required for {self.measure} importance bars")
        if self.kind == "dependence" and not self.feature:
            raise ConfigError("$.feature: required for dependence plots")
        as_number(self.top_k, "$.top_k", 1, None, integer=True)
        as_number(self.width, "$.width", 200, None, integer=True)
        as_number(self.height, "$.height", 150, None, integer=True)
        as_number(self.seed, "$.seed", 0, None, integer=True)

    @classmethod
    def from_dict(cls, data: dict, path: str = "$") -> "PlotSpec":
        names = list(cls.__dataclass_fields__)
        check_keys(data, names + ["schema_version"], path)
        check_schema_version(data, path)
        viz = Config().get_viz_config()
        defaults = {k: viz[k] for k in ("top_k", "width", "height", "seed") if k in viz}
        merged = {**defaults, **{k: v for k, v in data.items() if k in names}}
        if 'kind' not in merged:
            raise ConfigError(f"{path}.kind: required")
        try:
            return cls(**merged)
        except ConfigError as e:
            raise ConfigError(str(e).replace("$", path, 1)) from None

    def to_dict(self) -> dict:
        return {'schema_version': 1, **asdict(self)}


class _Style:
    def __init__(self):
        viz = Config().get_viz_config()
        self.low = viz.get('low_color', '#008bfb')
        self.high = viz.get('high_color', '#ff0051')
        self.missing = viz.get('missing_color', '#9a9a9a')
        self.radius = float(viz.get('point_radius', 2.5))

    def colors(self, values) -> List[str]:
        """Ramp colour of every value over the finite range; grey for NaN."""
        values = np.asarray(values, dtype=np.float64)
        finite = values[np.isfinite(values)]
        lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
        out = []
        for v in values:
            if not np.isfinite(v):
                out.append(self.missing)
            else:
                out.append(ramp_color(0.5 if hi == lo else (v - lo) / (hi - lo), self.low, self.high))
        return out

    def legend(self, doc: SvgDocument, x: float, y: float, label: str) -> None:
        doc.open("g", class_="legend")
        doc.rect(x, y, 10, 10, fill=self.high)
        doc.text(x + 14, y + 9, f"{label} high")
        doc.rect(x, y + 16, 10, 10, fill=self.low)
        doc.text(x + 14, y + 25, f"{label} low")
        doc.rect(x, y + 32, 10, 10, fill=self.missing)
        doc.text(x + 14, y + 41, "missing")
        doc.close()


def _document(width: int, height: int, title: str) -> SvgDocument:
    doc = SvgDocument(width, height)
    doc.rect(0, 0, width, height, fill="#ffffff", class_="background")
    if title:
        doc.text(width / 2, 18, title, class_="title", text_anchor="middle", font_size="14")
    return doc


def render_pred_scatter(predicted, actual, width: int = 800, height: int = 600, title: str = "") -> str:
    """Predicted against measured EF with the identity line."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape:
        raise ContractError(f"{predicted.size} predictions for {actual.size} measured values")
    style = _Style()
    doc = _document(width, height, title or "Predicted vs measured EF")
    lo, hi = padded_range(np.concatenate([predicted, actual]), default=(0.0, 100.0))
    axes = Axes((lo, hi), (lo, hi), 60, 40, width - 30, height - 50)
    axes.draw(doc, "measured EF (%)", "predicted EF (%)")
    doc.line(axes.px(lo), axes.py(lo), axes.px(hi), axes.py(hi), class_="identity", stroke="#999999",
             stroke_dasharray="4 3")
    if actual.size >= 2:
        report = regression_report(predicted, actual)
        r2 = "n/a" if report.r2 is None else f"{report.r2:.3f}"
        doc.text(70, 56, f"n = {report.n}, RMSE = {report.rmse:.3f}, R2 = {r2}", class_="metrics")
    doc.open("g", class_="points")
    for x, y in zip(axes.px(actual), axes.py(predicted)):
        doc.circle(x, y, style.radius, class_="point", fill=style.low, fill_opacity="0.6")
    doc.close()
    return doc.render()


def render_importance_bars(names: Sequence[str], values, width: int = 800, height: int = 600,
                           title: str = "", x_label: str = "importance") -> str:
    """Horizontal bars, one per feature, in the given order (top bar first)."""
    values = np.asarray(values, dtype=np.float64)
    if len(names) != values.size:
        raise ContractError(f"{len(names)} feature names for {values.size} importance values")
    style = _Style()
    doc = _document(width, height, title or "Feature importance")
    left, top, bottom = 200.0, 40.0, height - 50.0
    hi = float(values.max()) if values.size and values.max() > 0 else 1.0
    axes = Axes((0.0, hi * 1.05), (0.0, 1.0), left, top, width - 30, bottom)
    axes.draw(doc, x_label, y_ticks=False)
    band = (bottom - top) / max(1, len(names))
    doc.open("g", class_="bars")
    for i, (name, value) in enumerate(zip(names, values)):
        y = top + i * band
        doc.rect(left, y + 0.15 * band, float(axes.px(value)) - left, 0.7 * band, class_="bar", fill=style.high,
                 data_feature=name)
        doc.text(left - 6, y + 0.5 * band + 4, name, text_anchor="end")
    doc.close()
    return doc.render()


def render_beeswarm(summary: ShapSummary, top_k: int = 20, seed: int = 0, width: int = 800, height: int = 600,
                    title: str = "") -> str:
    """
    SHAP value of every case for the ``top_k`` highest-ranked features.

    Rows follow the summary ranking from the top. Within a row the colour is the
    case's value of that feature.
    """
    style = _Style()
    rng = np.random.default_rng(seed)
    doc = _document(width, height, title or "SHAP summary")
    rows = summary.ranking[:top_k]
    shown = summary.shap_values[:, rows] if rows else np.zeros((0, 0))
    lo, hi = padded_range(np.append(shown.ravel(), 0.0), default=(-1.0, 1.0))
    left, top, right, bottom = 200.0, 40.0, width - 110.0, height - 50.0
    axes = Axes((lo, hi), (0.0, 1.0), left, top, right, bottom)
    axes.draw(doc, "SHAP value (EF points)", y_ticks=False)
    doc.line(axes.px(0.0), top, axes.px(0.0), bottom, class_="zero", stroke="#999999")
    style.legend(doc, right + 10, top, "feature")
    band = (bottom - top) / max(1, len(rows))
    for i, j in enumerate(rows):
        name = summary.feature_names[j]
        center = top + (i + 0.5) * band
        doc.text(left - 6, center + 4, name, class_="row-label", text_anchor="end")
        doc.open("g", class_="row", data_feature=name)
        colors = style.colors(summary.feature_values[:, j])
        jitter = rng.uniform(-JITTER, JITTER, size=summary.shap_values.shape[0])
        for phi, color, dy in zip(summary.shap_values[:, j], colors, jitter):
            doc.circle(axes.px(phi), center + dy * band, style.radius, class_="point", fill=color)
        doc.close()
    return doc.render()


def render_dependence(feature: str, values, shap_values, color_values=None, color_label: str = "",
                      seed: int = 0, width: int = 800, height: int = 600, title: str = "") -> str:
    """
    SHAP value of one feature against its value.

    A feature with at most two distinct values is drawn at those positions with
    horizontal jitter. MISSING values sit in a separate strip left of the axis.
    """
    values = np.asarray(values, dtype=np.float64)
    shap_values = np.asarray(shap_values, dtype=np.float64)
    if values.shape != shap_values.shape:
        raise ContractError(f"{values.size} feature values for {shap_values.size} SHAP values")
    color_values = values if color_values is None else np.asarray(color_values, dtype=np.float64)
    style = _Style()
    rng = np.random.default_rng(seed)
    doc = _document(width, height, title or f"SHAP dependence: {feature}")
    present = np.isfinite(values)
    levels = np.unique(values[present])
    discrete = levels.size <= 2
    if discrete and levels.size:
        spacing = float(levels[1] - levels[0]) if levels.size == 2 else 1.0
        x_range = (float(levels[0]) - spacing, float(levels[-1]) + spacing)
    else:
        x_range = padded_range(values)
        spacing = 0.0
    strip = 50.0 if not present.all() else 0.0
    axes = Axes(x_range, padded_range(shap_values, default=(-1.0, 1.0)), 70 + strip, 40, width - 110, height - 50)
    axes.draw(doc, feature, f"SHAP value for {feature}")
    if strip:
        doc.text(axes.left - strip / 2, axes.bottom + 16, "missing", class_="missing-label", text_anchor="middle")
    style.legend(doc, width - 100, 40, color_label or feature)
    colors = style.colors(color_values)
    doc.open("g", class_="points")
    for x, phi, color in zip(values, shap_values, colors):
        if np.isfinite(x):
            offset = rng.uniform(-0.1, 0.1) * spacing if discrete else 0.0
            cx, data_x = axes.px(x + offset), fmt_num(x)
        else:
            cx, data_x = axes.left - strip / 2 + rng.uniform(-0.3, 0.3) * strip, "missing"
        doc.circle(cx, axes.py(phi), style.radius, class_="point", fill=color, data_x=data_x)
    doc.close()
    return doc.render()


def render_embedding(coords, color_values, color_label: str = "EF", width: int = 800, height: int = 600,
                     title: str = "") -> str:
    """2-D embedding coloured by EF or a feature value."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    color_values = np.asarray(color_values, dtype=np.float64)
    if color_values.size != coords.shape[0]:
        raise ContractError(f"{coords.shape[0]} embedded points for {color_values.size} colour values")
    style = _Style()
    doc = _document(width, height, title or "t-SNE embedding")
    axes = Axes(padded_range(coords[:, 0]), padded_range(coords[:, 1]), 60, 40, width - 110, height - 50)
    axes.draw(doc, "t-SNE 1", "t-SNE 2")
    style.legend(doc, width - 100, 40, color_label)
    colors = style.colors(color_values)
    doc.open("g", class_="points")
    for x, y, color in zip(axes.px(coords[:, 0]), axes.py(coords[:, 1]), colors):
        doc.circle(x, y, style.radius, class_="point", fill=color)
    doc.close()
    return doc.render()


def _aligned(shap: ShapMatrix, cases: CaseMatrix) -> None:
    try:
        shap.check_aligned(cases)
    except ContractError as e:
        raise ContractError(f"inputs.shap does not match inputs.cases: {e}") from None


def render(spec: PlotSpec) -> str:
    """
    Load the inputs of ``spec`` and draw the figure.

    Returns
    -------
    str
        A self-contained SVG document.

    Raises
    ------
    ContractError
        If inputs do not fit together; the message names the input.
    ArtifactError
        If an input cannot be read.
    """
    inputs = spec.inputs
    cases = CaseMatrix.load(inputs['cases']) if 'cases' in inputs else None
    title = spec.title
    if spec.kind == "pred_scatter":
        model = GbtModel.load(inputs['model'])
        try:
            predicted = model.predict_cases(cases)
        except ContractError as e:
            raise ContractError(f"inputs.cases does not fit inputs.model: {e}") from None
        return render_pred_scatter(predicted, cases.labels, spec.width, spec.height, title)

    if spec.kind == "importance_bars":
        if spec.measure == "coverage":
            model = GbtModel.load(inputs['model'])
            try:
                ranked = coverage_importance(model, cases).ranked()[:spec.top_k]
            except ContractError as e:
                raise ContractError(f"inputs.cases does not fit inputs.model: {e}") from None
            return render_importance_bars([n for n, _ in ranked], [v for _, v in ranked], spec.width, spec.height,
                                          title or "Coverage importance", "coverage")
        shap = ShapMatrix.load(inputs['shap'])
        mean_abs, order = rank_by_mean_abs(shap.values)
        order = order[:spec.top_k]
        return render_importance_bars([shap.feature_names[j] for j in order], mean_abs[order], spec.width,
                                      spec.height, title or "Mean |SHAP|", "mean |SHAP value|")

    if spec.kind in ("beeswarm", "dependence"):
        shap = ShapMatrix.load(inputs['shap'])
        _aligned(shap, cases)
        if spec.kind == "beeswarm":
            return render_beeswarm(summarize(shap, cases, spec.top_k), spec.top_k, spec.seed, spec.width,
                                   spec.height, title)
        if spec.feature not in cases.catalog:
            raise ContractError(f"feature {spec.feature!r} is not in inputs.cases")
        color = None
        if spec.color_by:
            if spec.color_by not in cases.catalog:
                raise ContractError(f"color_by {spec.color_by!r} is not in inputs.cases")
            color = cases.column(spec.color_by)
        return render_dependence(spec.feature, cases.column(spec.feature), shap.column(spec.feature), color,
                                 spec.color_by or "", spec.seed, spec.width, spec.height, title)

    embedding = Embedding2D.load(inputs['embedding'])
    if spec.color_by in (None, "ef"):
        return render_embedding(embedding.coords, embedding.labels, "EF", spec.width, spec.height, title)
    if cases is None:
        raise ConfigError("$.inputs.cases: required to colour an embedding by a feature")
    if tuple(embedding.case_ids) != cases.case_ids:
        raise ContractError("inputs.embedding and inputs.cases hold different cases")
    if spec.color_by not in cases.catalog:
        raise ContractError(f"color_by {spec.color_by!r} is not in inputs.cases")
    return render_embedding(embedding.coords, cases.column(spec.color_by), spec.color_by, spec.width, spec.height,
                            title)


def save_svg(svg: str, path: str) -> str:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(svg)
    except OSError as e:
        raise ArtifactError(f"{path}: cannot write ({e.strerror or e})") from e
    return path
