"""Deterministic SVG rendering of a lattice as its edge graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyLattice
from .lattice import DcmLattice, SiteStatus


@dataclass(frozen=True)
class PlotStyle:
    size: int = 600
    thin: float = 0.6
    bold: float = 1.6
    vertex_radius: float = 1.5
    collapsed_radius: float = 4.0
    edge_color: str = "#333333"
    vertex_color: str = "#000000"
    collapsed_color: str = "#d62728"
    margin: float = 0.05


def _fmt(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def plot_svg(L: DcmLattice, style: PlotStyle | None = None) -> str:
    """SVG of vertices and k/m edges; edges along constant ``m`` are drawn bolder.

    Sites at infinity or unset are omitted together with their edges.
    Collapsed sites get a larger marker in a distinct colour.
    """
    st = style or PlotStyle()
    z = L.affine()
    drawable = np.isfinite(z) & (L.status != SiteStatus.UNSET)
    if not drawable.any():
        raise EmptyLattice("nothing to draw: every site is unset or at infinity")
    markers = _collapse_positions(L, z, drawable)
    xs, ys = z.real[drawable], -z.imag[drawable]
    x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
    span = max(x1 - x0, y1 - y0) or 1.0
    pad = st.margin * span
    vb = (x0 - pad, y0 - pad, (x1 - x0) + 2 * pad or 2 * pad, (y1 - y0) + 2 * pad or 2 * pad)
    # stroke widths are given in output pixels; convert to user units
    unit = max(vb[2], vb[3]) / st.size

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{st.size}" height="{st.size}" '
        f'viewBox="{" ".join(_fmt(v) for v in vb)}">',
        f'<g stroke="{st.edge_color}" stroke-linecap="round" fill="none">',
    ]
    K, M = L.shape
    for bold, (di, dj) in ((True, (1, 0)), (False, (0, 1))):
        width = _fmt((st.bold if bold else st.thin) * unit)
        cls = "edge-k" if bold else "edge-m"
        for i in range(K - di):
            for j in range(M - dj):
                if drawable[i, j] and drawable[i + di, j + dj]:
                    a, b = z[i, j], z[i + di, j + dj]
                    out.append(f'<line class="{cls}" x1="{_fmt(a.real)}" y1="{_fmt(-a.imag)}" '
                               f'x2="{_fmt(b.real)}" y2="{_fmt(-b.imag)}" stroke-width="{width}"/>')
    out.append("</g>")
    out.append(f'<g fill="{st.vertex_color}">')
    for i in range(K):
        for j in range(M):
            if not drawable[i, j] and (i, j) not in markers:
                continue
            c = markers.get((i, j), z[i, j])
            if L.status[i, j] == SiteStatus.COLLAPSED:
                out.append(f'<circle class="collapsed" cx="{_fmt(c.real)}" cy="{_fmt(-c.imag)}" '
                           f'r="{_fmt(st.collapsed_radius * unit)}" fill="{st.collapsed_color}"/>')
            else:
                out.append(f'<circle class="site" cx="{_fmt(c.real)}" cy="{_fmt(-c.imag)}" '
                           f'r="{_fmt(st.vertex_radius * unit)}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _collapse_positions(L: DcmLattice, z, drawable) -> dict:
    """Collapsed sites that carry no point are marked where their neighbours meet."""
    out = {}
    K, M = L.shape
    for i, j in zip(*np.nonzero((L.status == SiteStatus.COLLAPSED) & ~drawable)):
        nb = [z[a, b] for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1))
              if 0 <= a < K and 0 <= b < M and drawable[a, b]]
        if nb:
            out[(int(i), int(j))] = complex(np.mean(nb))
    return out


def svg_counts(svg: str) -> dict:
    """Number of vertices, edges and collapsed markers in a document from :func:`plot_svg`."""
    return {
        "vertices": svg.count("<circle "),
        "edges": svg.count("<line "),
        "bold_edges": svg.count('class="edge-k"'),
        "collapsed": svg.count('class="collapsed"'),
    }
