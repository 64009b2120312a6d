"""Plot-data tables, model-adequacy statistics and minimal SVG rendering.

Every table is written as CSV with a fixed header; column names carry units
(``_points`` for rating points, ``_per_point`` for densities). Probabilities
and log-densities are unitless.
"""
from __future__ import annotations

import csv
import hashlib
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .estimation import FitResult, RatingSample, fit_full
from .gaptest import BandCurve, BootstrapSummary, pooled_bootstrap, survivor_diff_band
from .model import cdf, density, log_density, quantile

GRID_POINTS = 200
GRID_TOP_P = 0.999

HEADERS = {
    "density": ("x_points", "f_g1_per_point", "f_g2_per_point"),
    "cdf": ("x_points", "F_g1", "F_g2", "Femp_g1", "Femp_g2"),
    "logdensity": ("x_points", "logf_g1", "logf_g2"),
    "quantile": ("p", "Qemp_g1_points", "Qemp_g2_points", "Q_g1_points", "Q_g2_points"),
    "band": ("x_points", "diff", "lower", "upper", "parametric_diff"),
    "bootstrap": ("rep", "A_points", "B_points"),
}


@dataclass
class Table:
    name: str
    columns: Sequence[str]
    rows: np.ndarray

    def write(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_fmt(v) for v in row])


@dataclass
class ReportBundle:
    fits: Dict[str, FitResult]
    pooled_fit: FitResult
    bootstrap: BootstrapSummary
    band: BandCurve
    tables: Dict[str, Table]
    adequacy: Dict[str, float]
    metadata: Dict[str, object] = field(default_factory=dict)


def _fmt(v) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.10g}"


def run_metadata(seed: Optional[int], input_bytes: Optional[bytes], flags: Dict[str, object]) -> Dict[str, object]:
    import scipy

    return {
        "seed": seed,
        "input_sha256": hashlib.sha256(input_bytes).hexdigest() if input_bytes is not None else None,
        "flags": flags,
        "versions": {
            "toptail": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def ks_distance(fit: FitResult, s: RatingSample) -> float:
    """Sup-distance between the fitted cdf and the empirical cdf of ``s``."""
    x = np.sort(s.ratings)
    uniq, counts = np.unique(x, return_counts=True)
    upper = np.cumsum(counts) / x.size  # ecdf at each distinct value
    lower = upper - counts / x.size  # ecdf just below it
    F = cdf(fit.model, uniq)
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(F - lower))))


def curve_grid(pooled: FitResult, points: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(pooled.model.r0, quantile(pooled.model, GRID_TOP_P), points)


def build_report(
    g1: RatingSample,
    g2: RatingSample,
    reps: int,
    seed: int,
    workers: int = 1,
) -> ReportBundle:
    """Fit both strata and the pool, then assemble every plot-data table."""
    f1, f2 = fit_full(g1), fit_full(g2)
    pooled = fit_full(RatingSample("pooled", g1.r0, np.concatenate([g1.ratings, g2.ratings])))
    x = curve_grid(pooled)

    e1 = np.searchsorted(np.sort(g1.ratings), x, side="right") / g1.n
    e2 = np.searchsorted(np.sort(g2.ratings), x, side="right") / g2.n
    p = np.linspace(0.0025, 0.9975, GRID_POINTS)
    band = survivor_diff_band(g1, g2, x, level=0.90, fits=(f1, f2))
    boot = pooled_bootstrap(g1, g2, reps=reps, seed=seed, workers=workers)

    cols = np.column_stack
    tables = {
        "density": cols([x, density(f1.model, x), density(f2.model, x)]),
        "cdf": cols([x, cdf(f1.model, x), cdf(f2.model, x), e1, e2]),
        "logdensity": cols([x, log_density(f1.model, x), log_density(f2.model, x)]),
        "quantile": cols(
            [
                p,
                np.quantile(g1.ratings, p, method="inverted_cdf"),
                np.quantile(g2.ratings, p, method="inverted_cdf"),
                quantile(f1.model, p),
                quantile(f2.model, p),
            ]
        ),
        "band": cols([band.grid, band.diff, band.lower, band.upper, band.parametric]),
        "bootstrap": cols([np.arange(boot.reps), boot.draws[:, 0], boot.draws[:, 1]]),
    }
    return ReportBundle(
        fits={g1.stratum: f1, g2.stratum: f2},
        pooled_fit=pooled,
        bootstrap=boot,
        band=band,
        tables={k: Table(k, HEADERS[k], v) for k, v in tables.items()},
        adequacy={
            "ks_g1": ks_distance(f1, g1),
            "ks_g2": ks_distance(f2, g2),
            "ks95_g1": 1.36 / math.sqrt(g1.n),
            "ks95_g2": 1.36 / math.sqrt(g2.n),
        },
    )


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

_W, _H, _PAD = 640, 420, 56
_COLORS = ("#000000", "#c0392b", "#2c6fbb", "#2c6fbb", "#7f8c8d")
_DASH = ("", "6,4", "2,3", "2,3", "1,3")


def _scale(vals, lo_px, hi_px):
    v = np.asarray(vals, dtype=float)
    finite = v[np.isfinite(v)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1.0
    return lambda z: lo_px + (np.asarray(z, dtype=float) - lo) / (hi - lo) * (hi_px - lo_px), lo, hi


def render_svg(table: Table, title: str, scatter: bool = False) -> str:
    """Standalone SVG of ``table``: first column on x, the rest as series."""
    data = table.rows
    xcol = 1 if scatter else 0
    ycols = [2] if scatter else list(range(1, data.shape[1]))
    sx, xlo, xhi = _scale(data[:, xcol], _PAD, _W - _PAD / 2)
    sy, ylo, yhi = _scale(data[:, ycols], _H - _PAD, _PAD / 2)
    parts: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD / 2}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_PAD}" y2="{_PAD / 2}" stroke="black"/>',
        f'<text x="{_W / 2}" y="{_H - 14}" text-anchor="middle" font-family="sans-serif" font-size="12">'
        f"{escape(table.columns[xcol])} [{xlo:.4g}, {xhi:.4g}]</text>",
        f'<text x="14" y="{_H / 2}" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {_H / 2})" text-anchor="middle">[{ylo:.4g}, {yhi:.4g}]</text>',
    ]
    if scatter:
        xs, ys = sx(data[:, xcol]), sy(data[:, 2])
        parts += [f'<circle cx="{a:.1f}" cy="{b:.1f}" r="1.6" fill="#555"/>' for a, b in zip(xs, ys)]
    else:
        xs = sx(data[:, 0])
        for k, c in enumerate(ycols):
            ys = sy(data[:, c])
            ok = np.isfinite(ys)
            pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(xs[ok], ys[ok]))
            color, dash = _COLORS[k % len(_COLORS)], _DASH[k % len(_DASH)]
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.4"{dash_attr} points="{pts}"/>')
            parts.append(
                f'<text x="{_W - _PAD}" y="{_PAD / 2 + 14 * (k + 1)}" font-family="sans-serif" font-size="11" '
                f'fill="{color}" text-anchor="end">{escape(table.columns[c])}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
