"""Dependency-free SVG figures.

Output is deterministic (no timestamps or random ids) so reruns reproduce
files byte for byte.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 40, 50


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _svg(title):
    root = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(WIDTH), "height": str(HEIGHT),
        "viewBox": f"0 0 {WIDTH} {HEIGHT}",
    })
    ET.SubElement(root, "rect", {"width": str(WIDTH), "height": str(HEIGHT), "fill": "white"})
    if title:
        t = ET.SubElement(root, "text", {"x": str(WIDTH // 2), "y": "22",
                                          "text-anchor": "middle", "font-size": "14"})
        t.text = title
    return root


def _write(root, path):
    ET.indent(root)
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)


def _vline(root, x, y0, y1, ident, value, stroke, dash=None, width="2"):
    attrs = {"id": ident, "x1": _fmt(x), "x2": _fmt(x), "y1": _fmt(y0), "y2": _fmt(y1),
             "stroke": stroke, "stroke-width": width, "data-value": repr(float(value))}
    if dash:
        attrs["stroke-dasharray"] = dash
    ET.SubElement(root, "line", attrs)


def emit_permutation_plot(result, path, title: str | None = None) -> None:
    """Histogram of the permutation distribution with reference lines.

    Solid blue: observed nu'eta_hat. Dotted black: zero. Dashed red: the
    0.5 and 99.5 permutation percentiles. Each line carries its value in a
    ``data-value`` attribute.
    """
    counts = np.asarray(result.hist_counts, dtype=float)
    edges = np.asarray(result.hist_edges, dtype=float)
    marks = [edges[0], edges[-1], result.observed, 0.0, result.lower_q, result.upper_q]
    lo, hi = min(marks), max(marks)
    span = hi - lo
    pad = 0.05 * span if span > 0 else 1.0
    lo, hi = lo - pad, hi + pad
    plot_w, plot_h = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    base = TOP + plot_h

    def xpix(v):
        return LEFT + (v - lo) / (hi - lo) * plot_w

    root = _svg(title)
    ET.SubElement(root, "line", {"x1": str(LEFT), "x2": str(LEFT + plot_w), "y1": _fmt(base),
                                 "y2": _fmt(base), "stroke": "black"})
    bars = ET.SubElement(root, "g", {"id": "histogram", "fill": "#9bb7d4"})
    top = counts.max() if counts.size and counts.max() > 0 else 1.0
    for i, c in enumerate(counts):
        x0, x1 = xpix(edges[i]), xpix(edges[i + 1])
        if x1 - x0 < 2.0:
            mid = 0.5 * (x0 + x1)
            x0, x1 = mid - 1.0, mid + 1.0
        h = c / top * plot_h
        ET.SubElement(bars, "rect", {"x": _fmt(x0), "y": _fmt(base - h), "width": _fmt(x1 - x0),
                                     "height": _fmt(h)})
    _vline(root, xpix(0.0), TOP, base, "zero", 0.0, "black", dash="2,3")
    _vline(root, xpix(result.lower_q), TOP, base, "q005", result.lower_q, "red", dash="8,4")
    _vline(root, xpix(result.upper_q), TOP, base, "q995", result.upper_q, "red", dash="8,4")
    _vline(root, xpix(result.observed), TOP, base, "observed", result.observed, "blue")
    for v, anchor in ((lo + pad, "start"), (hi - pad, "end")):
        t = ET.SubElement(root, "text", {"x": _fmt(xpix(v)), "y": _fmt(base + 18),
                                          "text-anchor": anchor, "font-size": "11"})
        t.text = f"{v:.4g}"
    cap = ET.SubElement(root, "text", {"x": str(WIDTH // 2), "y": str(HEIGHT - 8),
                                        "text-anchor": "middle", "font-size": "12"})
    cap.text = (f"observed {result.observed:.4g}, percentile {result.percentile:.4g}, "
                f"{result.n_perms} permutations")
    _write(root, path)


def emit_boxplot(groups: dict, path, title: str | None = None, reference=None) -> None:
    """Box plots (quartiles, 1.5 IQR whiskers) for named samples.

    ``reference`` maps a group name to a horizontal marker value.
    """
    names = list(groups)
    data = [np.asarray(groups[k], dtype=float) for k in names]
    data = [d[np.isfinite(d)] for d in data]
    allv = np.concatenate(data + [np.asarray(list((reference or {}).values()), float)])
    lo, hi = float(allv.min()), float(allv.max())
    pad = 0.05 * (hi - lo) if hi > lo else 1.0
    lo, hi = lo - pad, hi + pad
    plot_w, plot_h = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def ypix(v):
        return TOP + (hi - v) / (hi - lo) * plot_h

    root = _svg(title)
    slot = plot_w / max(len(names), 1)
    for i, (name, d) in enumerate(zip(names, data)):
        cx = LEFT + (i + 0.5) * slot
        q1, med, q3 = np.percentile(d, [25, 50, 75])
        iqr = q3 - q1
        wlo = d[d >= q1 - 1.5 * iqr].min()
        whi = d[d <= q3 + 1.5 * iqr].max()
        g = ET.SubElement(root, "g", {"id": f"box-{i}", "data-name": name})
        half = slot * 0.25
        ET.SubElement(g, "line", {"x1": _fmt(cx), "x2": _fmt(cx), "y1": _fmt(ypix(whi)),
                                  "y2": _fmt(ypix(wlo)), "stroke": "black"})
        ET.SubElement(g, "rect", {"x": _fmt(cx - half), "y": _fmt(ypix(q3)), "width": _fmt(2 * half),
                                  "height": _fmt(ypix(q1) - ypix(q3)), "fill": "#dde6f0",
                                  "stroke": "black"})
        ET.SubElement(g, "line", {"x1": _fmt(cx - half), "x2": _fmt(cx + half), "y1": _fmt(ypix(med)),
                                  "y2": _fmt(ypix(med)), "stroke": "black", "stroke-width": "2"})
        outliers = d[(d < wlo) | (d > whi)]
        for v in outliers:
            ET.SubElement(g, "circle", {"cx": _fmt(cx), "cy": _fmt(ypix(v)), "r": "1.5"})
        if reference and name in reference:
            r = reference[name]
            ET.SubElement(g, "line", {"x1": _fmt(cx - half * 1.3), "x2": _fmt(cx + half * 1.3),
                                      "y1": _fmt(ypix(r)), "y2": _fmt(ypix(r)), "stroke": "red",
                                      "stroke-dasharray": "6,3", "data-value": repr(float(r))})
        t = ET.SubElement(root, "text", {"x": _fmt(cx), "y": _fmt(TOP + plot_h + 18),
                                          "text-anchor": "middle", "font-size": "12"})
        t.text = name
    y0 = ypix(0.0)
    ET.SubElement(root, "line", {"id": "zero", "x1": str(LEFT), "x2": str(LEFT + plot_w),
                                 "y1": _fmt(y0), "y2": _fmt(y0), "stroke": "gray",
                                 "stroke-dasharray": "2,3"})
    _write(root, path)
