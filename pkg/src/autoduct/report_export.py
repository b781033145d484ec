"""Deterministic CSV and SVG rendering of evaluation results.

Every file is a pure function of the report content: numbers are
formatted at 17 significant digits in CSVs and 6 in SVG coordinates, no
timestamps or environment details are embedded, and element order is
fixed. Two exports of the same report are byte-identical.

The SVGs are static and self-contained (inline styling only). Histogram
bin edges are fixed so figures from different runs are comparable:
percent error uses 20 bins over [-50, 50], ratio uses 25 bins over
[0, 2.5]; values outside are counted into the edge bins.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import IoFailure
from .evaluation import ModelEvaluation, SliceReport
from .stats import central_interval_z

METRICS_HEADER = "split,n,rmse_kw_m2,mape_pct,rmspe_pct,ratio_mean,ratio_std,ratio_inside_frac"
POINTS_HEADER = "D,L,P,G,X,y_true,y_pred,aleatory_var,epistemic_var,total_var"
SLICE_HEADER = "slice_id,varying_feature,varying_value,y_pred,total_std,band_lo,band_hi"

ERROR_BIN_EDGES = np.linspace(-50.0, 50.0, 21)
RATIO_BIN_EDGES = np.linspace(0.0, 2.5, 26)


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def export_report(me: ModelEvaluation, slices: SliceReport | None,
                  directory: str | Path) -> list[Path]:
    """Write the full file set and return the paths in a fixed order."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {directory}: {exc}") from exc

    written: list[Path] = []

    path = directory / "metrics.csv"
    r = me.report
    lines = [METRICS_HEADER,
             ",".join([r.split_label, str(r.n)] + [_fmt(v) for v in
                      (r.rmse, r.mape, r.rmspe, r.ratio_mean, r.ratio_std,
                       r.ratio_inside_frac)])]
    _write_text(path, "\n".join(lines) + "\n")
    written.append(path)

    path = directory / "predictions.csv"
    lines = [POINTS_HEADER]
    for i, pred in enumerate(me.predictions):
        row = [_fmt(v) for v in me.dataset.features[i]]
        row += [_fmt(me.dataset.targets[i]), _fmt(pred.mean),
                _fmt(pred.aleatory_var), _fmt(pred.epistemic_var),
                _fmt(pred.total_var)]
        lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")
    written.append(path)

    path = directory / "parity.svg"
    _write_text(path, _parity_svg(me))
    written.append(path)

    path = directory / "error_hist.svg"
    y = me.dataset.targets
    yhat = np.array([p.mean for p in me.predictions])
    errors_pct = 100.0 * (yhat - y) / y
    _write_text(path, _histogram_svg(errors_pct, ERROR_BIN_EDGES,
                                     "prediction error [%]"))
    written.append(path)

    path = directory / "ratio_hist.svg"
    _write_text(path, _histogram_svg(yhat / y, RATIO_BIN_EDGES,
                                     "predicted / measured"))
    written.append(path)

    if slices is not None:
        for result in slices.results:
            sid = result.spec.slice_id
            path = directory / f"slice_{sid}.csv"
            header = SLICE_HEADER + (",reference" if result.reference is not None else "")
            lines = [header]
            varying = result.grid.column(result.spec.varying)
            for i, pred in enumerate(result.predictions):
                row = [sid, result.spec.varying, _fmt(varying[i]), _fmt(pred.mean),
                       _fmt(np.sqrt(pred.total_var)), _fmt(result.band_lo[i]),
                       _fmt(result.band_hi[i])]
                if result.reference is not None:
                    row.append(_fmt(result.reference[i]))
                lines.append(",".join(row))
            _write_text(path, "\n".join(lines) + "\n")
            written.append(path)

            path = directory / f"slice_{sid}.svg"
            _write_text(path, _slice_svg(result))
            written.append(path)

    return written


# --- SVG rendering --------------------------------------------------------

_STYLE = ("text{font-family:sans-serif;font-size:11px;fill:#333}"
          ".axis{stroke:#333;stroke-width:1;fill:none}"
          ".grid{stroke:#ddd;stroke-width:0.5}"
          ".ref{stroke:#888;stroke-width:1;stroke-dasharray:4 3;fill:none}"
          ".mean{stroke:#1f5fa8;stroke-width:1.5;fill:none}"
          ".band{fill:#1f5fa8;fill-opacity:0.18;stroke:none}"
          ".pt{fill:#1f5fa8;fill-opacity:0.55;stroke:none}"
          ".bar{fill:#1f5fa8;fill-opacity:0.7;stroke:#fff;stroke-width:0.5}"
          ".err{stroke:#1f5fa8;stroke-width:0.6;stroke-opacity:0.35}")


def _c(v: float) -> str:
    return f"{v:.6g}"


class _Canvas:
    """Linear data-to-pixel mapping with a fixed margin box."""

    def __init__(self, width: int, height: int, x_range: tuple[float, float],
                 y_range: tuple[float, float]):
        self.width, self.height = width, height
        self.margin_l, self.margin_r = 56, 16
        self.margin_t, self.margin_b = 16, 40
        self.x_lo, self.x_hi = x_range
        self.y_lo, self.y_hi = y_range
        if self.x_hi == self.x_lo:
            self.x_hi = self.x_lo + 1.0
        if self.y_hi == self.y_lo:
            self.y_hi = self.y_lo + 1.0

    def x(self, v: float) -> float:
        frac = (v - self.x_lo) / (self.x_hi - self.x_lo)
        return self.margin_l + frac * (self.width - self.margin_l - self.margin_r)

    def y(self, v: float) -> float:
        frac = (v - self.y_lo) / (self.y_hi - self.y_lo)
        return self.height - self.margin_b - frac * (self.height - self.margin_t - self.margin_b)

    def open_tag(self) -> list[str]:
        return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
                f"<style>{_STYLE}</style>",
                f'<rect class="axis" x="{self.margin_l}" y="{self.margin_t}" '
                f'width="{self.width - self.margin_l - self.margin_r}" '
                f'height="{self.height - self.margin_t - self.margin_b}"/>']

    def ticks(self, x_label: str, y_label: str, count: int = 5) -> list[str]:
        parts = []
        for i in range(count):
            vx = self.x_lo + i * (self.x_hi - self.x_lo) / (count - 1)
            px = self.x(vx)
            py = self.height - self.margin_b
            parts.append(f'<line class="axis" x1="{_c(px)}" y1="{_c(py)}" '
                         f'x2="{_c(px)}" y2="{_c(py + 4)}"/>')
            parts.append(f'<text x="{_c(px)}" y="{_c(py + 16)}" '
                         f'text-anchor="middle">{vx:.4g}</text>')
            vy = self.y_lo + i * (self.y_hi - self.y_lo) / (count - 1)
            px = self.margin_l
            py = self.y(vy)
            parts.append(f'<line class="axis" x1="{_c(px - 4)}" y1="{_c(py)}" '
                         f'x2="{_c(px)}" y2="{_c(py)}"/>')
            parts.append(f'<text x="{_c(px - 7)}" y="{_c(py + 4)}" '
                         f'text-anchor="end">{vy:.4g}</text>')
        parts.append(f'<text x="{_c((self.margin_l + self.width - self.margin_r) / 2)}" '
                     f'y="{self.height - 6}" text-anchor="middle">{x_label}</text>')
        parts.append(f'<text x="12" y="{_c((self.margin_t + self.height - self.margin_b) / 2)}" '
                     f'text-anchor="middle" transform="rotate(-90 12 '
                     f'{_c((self.margin_t + self.height - self.margin_b) / 2)})">{y_label}</text>')
        return parts


def _parity_svg(me: ModelEvaluation) -> str:
    y = me.dataset.targets
    yhat = np.array([p.mean for p in me.predictions])
    z = central_interval_z(me.level)
    half = z * np.sqrt(np.array([p.total_var for p in me.predictions]))
    lo = float(min(y.min(), (yhat - half).min()))
    hi = float(max(y.max(), (yhat + half).max()))
    pad = 0.05 * (hi - lo) if hi > lo else 1.0
    canvas = _Canvas(480, 480, (lo - pad, hi + pad), (lo - pad, hi + pad))
    parts = canvas.open_tag()
    parts.append(f'<line class="ref" x1="{_c(canvas.x(lo - pad))}" '
                 f'y1="{_c(canvas.y(lo - pad))}" x2="{_c(canvas.x(hi + pad))}" '
                 f'y2="{_c(canvas.y(hi + pad))}"/>')
    for i in range(y.size):
        px = canvas.x(float(y[i]))
        parts.append(f'<line class="err" x1="{_c(px)}" '
                     f'y1="{_c(canvas.y(float(yhat[i] - half[i])))}" x2="{_c(px)}" '
                     f'y2="{_c(canvas.y(float(yhat[i] + half[i])))}"/>')
    for i in range(y.size):
        parts.append(f'<circle class="pt" cx="{_c(canvas.x(float(y[i])))}" '
                     f'cy="{_c(canvas.y(float(yhat[i])))}" r="2.5"/>')
    parts += canvas.ticks("measured [kW/m²]", "predicted [kW/m²]")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _slice_svg(result) -> str:
    varying = result.grid.column(result.spec.varying)
    mean = np.array([p.mean for p in result.predictions])
    y_lo = float(result.band_lo.min())
    y_hi = float(result.band_hi.max())
    if result.reference is not None:
        y_lo = min(y_lo, float(result.reference.min()))
        y_hi = max(y_hi, float(result.reference.max()))
    pad = 0.05 * (y_hi - y_lo) if y_hi > y_lo else 1.0
    canvas = _Canvas(560, 360, (float(varying[0]), float(varying[-1])),
                     (y_lo - pad, y_hi + pad))
    parts = canvas.open_tag()
    band = " ".join(f"{_c(canvas.x(float(v)))},{_c(canvas.y(float(b)))}"
                    for v, b in zip(varying, result.band_hi))
    band += " " + " ".join(f"{_c(canvas.x(float(v)))},{_c(canvas.y(float(b)))}"
                           for v, b in zip(varying[::-1], result.band_lo[::-1]))
    parts.append(f'<polygon class="band" points="{band}"/>')
    line = " ".join(f"{_c(canvas.x(float(v)))},{_c(canvas.y(float(m)))}"
                    for v, m in zip(varying, mean))
    parts.append(f'<polyline class="mean" points="{line}"/>')
    if result.reference is not None:
        ref = " ".join(f"{_c(canvas.x(float(v)))},{_c(canvas.y(float(m)))}"
                       for v, m in zip(varying, result.reference))
        parts.append(f'<polyline class="ref" points="{ref}"/>')
    parts += canvas.ticks(f"slice {result.spec.slice_id}: {result.spec.varying}",
                          "CHF [kW/m²]")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _histogram_svg(values: np.ndarray, edges: np.ndarray, label: str) -> str:
    clipped = np.clip(values, edges[0], edges[-1])
    counts, _ = np.histogram(clipped, bins=edges)
    canvas = _Canvas(480, 320, (float(edges[0]), float(edges[-1])),
                     (0.0, float(max(counts.max(), 1))))
    parts = canvas.open_tag()
    for i, count in enumerate(counts):
        if count == 0:
            continue
        x0 = canvas.x(float(edges[i]))
        x1 = canvas.x(float(edges[i + 1]))
        y1 = canvas.y(float(count))
        y0 = canvas.y(0.0)
        parts.append(f'<rect class="bar" x="{_c(x0)}" y="{_c(y1)}" '
                     f'width="{_c(x1 - x0)}" height="{_c(y0 - y1)}"/>')
    parts += canvas.ticks(label, "count")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
