"""Plain-text tables and hand-written SVG figures from results documents."""
from __future__ import annotations

from html import escape

import numpy as np

from .cli_io import decode_array
from .errors import DataError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#17becf")


def _pct(mean, std):
    if mean is None:
        return "n/a"
    return f"{100 * mean:.1f} ± {100 * std:.1f}"


def format_matrix(matrix, rows, cols, digits=3):
    """Aligned text grid with row (source) and column (target) labels."""
    cells = [[""] + list(cols)]
    for name, row in zip(rows, matrix):
        cells.append([name] + ["nan" if not np.isfinite(v) else f"{v:.{digits}f}" for v in row])
    widths = [max(len(r[c]) for r in cells) for c in range(len(cells[0]))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def benchmark_table(body):
    """Table 1-style grid: one line per method, one column per N (AUC x 100)."""
    agg = body["aggregate"]
    ns = sorted({a["n"] for a in agg})
    methods = list(dict.fromkeys(a["method"] for a in agg))
    lookup = {(a["method"], a["n"]): a for a in agg}
    out = []
    for metric, label in (("auc_pr", "AUC-PR"), ("auc_roc", "AUC-ROC")):
        head = [label] + [f"N={n}" for n in ns]
        lines = [head]
        for m in methods:
            row = [m]
            for n in ns:
                a = lookup.get((m, n))
                row.append("-" if a is None else _pct(a[f"{metric}_mean"], a[f"{metric}_std"]))
            lines.append(row)
        widths = [max(len(r[c]) for r in lines) for c in range(len(head))]
        out.append("\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in lines))
    rows = ["method\tn\tseed\tstatus\tauc_pr\tauc_roc"]
    for r in body["rows"]:
        rows.append(f"{r['method']}\t{r['n']}\t{r['seed']}\t{r['status']}\t{r['auc_pr']}\t{r['auc_roc']}")
    return "\n\n".join(out) + "\n\n" + "\n".join(rows)


def document_table(doc):
    """Text rendering of any results document."""
    body = doc.body
    if doc.kind == "benchmark":
        return benchmark_table(body)
    if doc.kind == "strength_matrix":
        raw = body["raw"]
        text = ["predictive strength W[j, i] (nats), rows = source j, columns = target i",
                format_matrix(decode_array(raw), raw["rows"], raw["cols"])]
        if body.get("thresholded") is not None:
            th = body["thresholded"]
            text += [f"threshold = {body['threshold']:.4f}", format_matrix(decode_array(th), th["rows"], th["cols"])]
        return "\n".join(text)
    if doc.kind == "score_matrix":
        parts = []
        for m in body["matrices"]:
            s = m["scores"]
            parts.append(f"{m['method']}\n" + format_matrix(decode_array(s), s["rows"], s["cols"]))
            parts.extend(f"  flag: {f}" for f in m["flags"])
        return "\n".join(parts)
    if doc.kind == "lambda_selection":
        lines = [f"chosen lambda: {body['chosen'] if body['valid'] else 'no valid lambda'}",
                 "lambda     v->w mean ± std     x->w mean ± std     accepted"]
        for d in body["diagnostics"]:
            lines.append(f"{d['lam']:<9g}  {d['v_to_w_mean']:8.3f} ± {d['v_to_w_std']:<8.3f}  "
                         f"{d['x_to_w_mean']:8.3f} ± {d['x_to_w_std']:<8.3f}  {d['accepted']}")
        return "\n".join(lines)
    if doc.kind == "ground_truth":
        ind = decode_array(body["graph"]["indicator"]).astype(float)
        names = body["names"]
        return "ground-truth indicator 1(A)[j, i]\n" + format_matrix(ind, names, names, digits=0)
    raise DataError(f"no table rendering for {doc.kind!r}")


# -- SVG -------------------------------------------------------------------------
def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n")


def _shade(t):
    # white -> dark blue
    t = min(max(t, 0.0), 1.0)
    r, g, b = (int(round(255 + (c - 255) * t)) for c in (8, 48, 107))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(matrix, rows, cols, title="", cell=48):
    """Grid of ``matrix[j, i]``; the diagonal is greyed out (never scored)."""
    m = np.asarray(matrix, dtype=float)
    n_r, n_c = m.shape
    left, top = 90, 60
    off = ~np.eye(n_r, n_c, dtype=bool)
    finite = m[off & np.isfinite(m)]
    vmax = float(finite.max()) if finite.size and finite.max() > 0 else 1.0
    parts = [f'<text x="{left}" y="20" font-size="14">{escape(title)}</text>',
             f'<text x="{left}" y="{top - 28}">target i →</text>',
             f'<text x="12" y="{top - 8}">source j ↓</text>']
    for c, name in enumerate(cols):
        parts.append(f'<text x="{left + c * cell + cell / 2}" y="{top - 8}" text-anchor="middle">{escape(name)}</text>')
    for r, name in enumerate(rows):
        y = top + r * cell
        parts.append(f'<text x="{left - 8}" y="{y + cell / 2 + 4}" text-anchor="end">{escape(name)}</text>')
        for c in range(n_c):
            x = left + c * cell
            v = m[r, c]
            if r == c:
                fill, label, ink = "#dddddd", "", "black"
            elif not np.isfinite(v):
                fill, label, ink = "#ffffff", "nan", "black"
            else:
                t = v / vmax
                fill, label, ink = _shade(t), f"{v:.2f}", ("white" if t > 0.55 else "black")
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#999"/>')
            if label:
                parts.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle" '
                             f'fill="{ink}" font-size="10">{label}</text>')
    return _svg(left + n_c * cell + 20, top + n_r * cell + 20, parts)


def line_chart_svg(series, xlabel, ylabel, title="", width=520, height=340, ylim=None):
    """Lines for ``series = {label: [(x, y), ...]}`` with axes and a legend."""
    pts = [p for s in series.values() for p in s if p[1] is not None]
    if not pts:
        raise DataError("nothing to plot")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = ylim if ylim else (min(0.0, min(ys)), max(ys) * 1.05 or 1.0)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    L, R, T, B = 60, 150, 40, 50
    pw, ph = width - L - R, height - T - B

    def sx(x):
        return L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return T + ph - (y - y0) / (y1 - y0) * ph

    parts = [f'<text x="{L}" y="22" font-size="14">{escape(title)}</text>',
             f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>',
             f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>',
             f'<text x="{L + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>',
             f'<text x="16" y="{T + ph / 2}" transform="rotate(-90 16 {T + ph / 2})" '
             f'text-anchor="middle">{escape(ylabel)}</text>']
    for x in sorted(set(xs)):
        parts.append(f'<text x="{sx(x):.1f}" y="{T + ph + 16}" text-anchor="middle">{x:g}</text>')
    for k in range(5):
        y = y0 + (y1 - y0) * k / 4
        parts.append(f'<text x="{L - 6}" y="{sy(y) + 4:.1f}" text-anchor="end">{y:.2f}</text>')
        parts.append(f'<line x1="{L}" y1="{sy(y):.1f}" x2="{L + pw}" y2="{sy(y):.1f}" stroke="#eee"/>')
    for k, (label, s) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        s = sorted(p for p in s if p[1] is not None)
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in s)
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in s:
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{color}"/>')
        ly = T + 14 * k
        parts.append(f'<line x1="{L + pw + 10}" y1="{ly}" x2="{L + pw + 26}" y2="{ly}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{L + pw + 30}" y="{ly + 4}">{escape(label)}</text>')
    return _svg(width, height, parts)


def strength_heatmap(doc):
    body = doc.body
    key = "thresholded" if body.get("thresholded") is not None else "raw"
    tree = body[key]
    m = decode_array(tree)
    n = body["n_series"]
    return heatmap_svg(m[:n], tree["rows"][:n], tree["cols"], f"W[j, i] ({key}, nats)")


def strength_vs_k(docs):
    """``W[j, i]`` against the window length for every off-diagonal pair."""
    series = {}
    for doc in docs:
        body = doc.body
        k = body.get("horizon")
        if k is None:
            raise DataError("strength document lacks the horizon needed for a W-vs-K curve")
        raw = body["raw"]
        m = decode_array(raw)
        n = body["n_series"]
        for j in range(n):
            for i in range(n):
                if i != j:
                    series.setdefault(f"{raw['rows'][j]}→{raw['cols'][i]}", []).append((k, float(m[j, i])))
    return line_chart_svg(series, "window length K", "W (nats)", "predictive strength vs K")


def auc_vs_n(doc, metric="auc_pr"):
    series = {}
    for a in doc.body["aggregate"]:
        series.setdefault(a["method"], []).append((a["n"], a[f"{metric}_mean"]))
    label = "AUC-PR" if metric == "auc_pr" else "AUC-ROC"
    return line_chart_svg(series, "N", label, f"{label} vs number of series", ylim=(0.0, 1.0))


def render_svgs(docs):
    """Map of file stem to SVG text for every figure the documents support."""
    out = {}
    strength = [d for d in docs if d.kind == "strength_matrix"]
    for k, doc in enumerate(strength):
        out[f"heatmap_{k}" if len(strength) > 1 else "heatmap"] = strength_heatmap(doc)
    if len({d.body.get("horizon") for d in strength}) > 1:
        out["strength_vs_k"] = strength_vs_k(strength)
    for k, doc in enumerate(d for d in docs if d.kind == "benchmark"):
        out[f"auc_pr_vs_n_{k}"] = auc_vs_n(doc, "auc_pr")
        out[f"auc_roc_vs_n_{k}"] = auc_vs_n(doc, "auc_roc")
    for k, doc in enumerate(d for d in docs if d.kind == "score_matrix"):
        for m in doc.body["matrices"]:
            s = m["scores"]
            out[f"{m['method']}_{k}"] = heatmap_svg(decode_array(s), s["rows"], s["cols"], m["method"])
    if not out:
        raise DataError("no figure can be drawn from these documents")
    return out
