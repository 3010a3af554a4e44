"""
Minimal deterministic SVG writer.

Elements are written in insertion order with attributes in the order given, and
every coordinate goes through :func:`fmt_num`, so the same drawing calls always
produce the same bytes.
"""

from html import escape
from math import floor, log10
from typing import List, Optional, Sequence, Tuple

import numpy as np

Range = Tuple[float, float]


def fmt_num(n: float) -> str:
    """Two decimals at most, no trailing zeros, no negative zero."""
    text = f"{float(n):.2f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def _attrs(attrs: dict) -> str:
    parts = []
    for key, value in attrs.items():
        if value is None:
            continue
        name = key.rstrip("_").replace("_", "-")
        if isinstance(value, (float, np.floating)):
            value = fmt_num(value)
        parts.append(f'{name}="{escape(str(value), quote=True)}"')
    return (" " + " ".join(parts)) if parts else ""


class SvgDocument:
    """
    Flat list of SVG elements with optional nesting through :meth:`open` / :meth:`close`.

    Attribute names ending in ``_`` lose the underscore (``class_`` -> ``class``);
    other underscores become hyphens (``font_size`` -> ``font-size``).
    """

    def __init__(self, width: int, height: int):
        self.width = int(width)
        self.height = int(height)
        self._lines: List[str] = []
        self._depth = 1

    def element(self, tag: str, text: Optional[str] = None, **attrs) -> None:
        pad = "  " * self._depth
        if text is None:
            self._lines.append(f"{pad}<{tag}{_attrs(attrs)}/>")
        else:
            self._lines.append(f"{pad}<{tag}{_attrs(attrs)}>{escape(str(text), quote=False)}</{tag}>")

    def open(self, tag: str = "g", **attrs) -> None:
        self._lines.append(f"{'  ' * self._depth}<{tag}{_attrs(attrs)}>")
        self._depth += 1

    def close(self, tag: str = "g") -> None:
        self._depth -= 1
        self._lines.append(f"{'  ' * self._depth}</{tag}>")

    def line(self, x1, y1, x2, y2, **attrs) -> None:
        self.element("line", x1=float(x1), y1=float(y1), x2=float(x2), y2=float(y2), **attrs)

    def rect(self, x, y, w, h, **attrs) -> None:
        self.element("rect", x=float(x), y=float(y), width=float(w), height=float(h), **attrs)

    def circle(self, cx, cy, r, **attrs) -> None:
        self.element("circle", cx=float(cx), cy=float(cy), r=float(r), **attrs)

    def text(self, x, y, text: str, **attrs) -> None:
        self.element("text", text, x=float(x), y=float(y), **attrs)

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">')
        return "\n".join([head] + self._lines + ["</svg>"]) + "\n"


def choose_step(span: float, max_ticks: int) -> float:
    """Smallest 1-2-5 step that places at most ``max_ticks`` intervals on ``span``."""
    raw = span / max(1, max_ticks)
    base = 10.0 ** floor(log10(raw))
    for mult in (1.0, 2.0, 5.0):
        if base * mult >= raw:
            return base * mult
    return base * 10.0


def nice_ticks(lo: float, hi: float, max_ticks: int = 6) -> List[float]:
    """Multiples of a 1-2-5 step inside ``[lo, hi]``."""
    if not hi > lo:
        return [lo]
    step = choose_step(hi - lo, max_ticks)
    first = np.ceil(lo / step - 1e-9)
    last = np.floor(hi / step + 1e-9)
    return [float(k * step) for k in np.arange(first, last + 1)]


def tick_label(value: float, ticks: Sequence[float]) -> str:
    step = abs(ticks[1] - ticks[0]) if len(ticks) > 1 else 1.0
    decimals = max(0, -int(floor(log10(step)))) if step > 0 else 0
    text = f"{value:.{decimals}f}"
    return "0" if float(text) == 0 else text


def padded_range(values, pad: float = 0.05, default: Range = (0.0, 1.0)) -> Range:
    """Finite min/max widened by ``pad`` of the span; a single value gets a unit span."""
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return default
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return lo - 0.5, hi + 0.5
    margin = pad * (hi - lo)
    return lo - margin, hi + margin


def _hex_to_rgb(color: str) -> np.ndarray:
    color = color.lstrip("#")
    return np.array([int(color[i:i + 2], 16) for i in (0, 2, 4)], dtype=np.float64)


def ramp_color(t: float, low: str, high: str) -> str:
    """Linear blend of two ``#rrggbb`` colours, ``t`` clipped to [0, 1]."""
    t = min(1.0, max(0.0, float(t)))
    rgb = (1.0 - t) * _hex_to_rgb(low) + t * _hex_to_rgb(high)
    return "#" + "".join(f"{int(round(c)):02x}" for c in rgb)


class Axes:
    """
    Linear map from a data rectangle to a pixel rectangle, with axis drawing.

    Parameters
    ----------
    x_range, y_range : (float, float)
        Data limits.
    left, top, right, bottom : float
        Pixel edges of the plotting area.
    """

    def __init__(self, x_range: Range, y_range: Range, left: float, top: float, right: float, bottom: float):
        self.x_range = x_range
        self.y_range = y_range
        self.left, self.top, self.right, self.bottom = left, top, right, bottom

    def px(self, x) -> np.ndarray:
        lo, hi = self.x_range
        return self.left + (np.asarray(x, dtype=np.float64) - lo) / (hi - lo) * (self.right - self.left)

    def py(self, y) -> np.ndarray:
        lo, hi = self.y_range
        return self.bottom - (np.asarray(y, dtype=np.float64) - lo) / (hi - lo) * (self.bottom - self.top)

    def draw(self, doc: SvgDocument, x_label: str = "", y_label: str = "", x_ticks: bool = True,
             y_ticks: bool = True) -> None:
        doc.open("g", class_="axes", stroke="#333333", fill="none")
        doc.line(self.left, self.bottom, self.right, self.bottom)
        doc.line(self.left, self.top, self.left, self.bottom)
        doc.close()
        doc.open("g", class_="ticks", fill="#333333")
        if x_ticks:
            ticks = nice_ticks(*self.x_range)
            for t in ticks:
                x = float(self.px(t))
                doc.line(x, self.bottom, x, self.bottom + 4, stroke="#333333")
                doc.text(x, self.bottom + 16, tick_label(t, ticks), text_anchor="middle")
        if y_ticks:
            ticks = nice_ticks(*self.y_range)
            for t in ticks:
                y = float(self.py(t))
                doc.line(self.left - 4, y, self.left, y, stroke="#333333")
                doc.text(self.left - 6, y + 4, tick_label(t, ticks), text_anchor="end")
        doc.close()
        if x_label:
            doc.text((self.left + self.right) / 2, self.bottom + 34, x_label, class_="xlabel", text_anchor="middle")
        if y_label:
            x, y = self.left - 44, (self.top + self.bottom) / 2
            doc.text(x, y, y_label, class_="ylabel", text_anchor="middle",
                     transform=f"rotate(-90 {fmt_num(x)} {fmt_num(y)})")
