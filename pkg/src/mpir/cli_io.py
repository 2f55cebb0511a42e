"""CSV ingestion, normalization and the JSON results format.

CSV layout: UTF-8, comma separated, one header row, one row per time step.
A column ``name`` is a one-dimensional series; columns ``name.0``,
``name.1``, ... form one multi-dimensional series. An optional column named
``segment`` splits the rows into independent trajectories (consecutive rows
with equal labels form one segment).

Results are JSON documents ``{schema_version, kind, manifest, body}``.
Everything reproducible lives in ``body``; timestamps and wall times live in
``manifest`` only.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, ParseError
from .synth import GroundTruthGraph, TimeSeriesBundle

SCHEMA_VERSION = 1
SEGMENT_COLUMN = "segment"
DOCUMENT_KINDS = ("strength_matrix", "score_matrix", "benchmark", "lambda_selection", "ground_truth")
_SUFFIX = re.compile(r"^(.*)\.(\d+)$")


def _parse_float(cell, line, column):
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"column {column!r}: non-numeric cell {cell!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"column {column!r}: non-finite cell {cell!r}", line)
    return value


def _group_columns(header):
    """Map header columns to ``(series names, column index per series and dim)``."""
    names, dims = [], {}
    for col, raw in enumerate(header):
        m = _SUFFIX.match(raw)
        base, d = (m.group(1), int(m.group(2))) if m else (raw, None)
        if base not in dims:
            names.append(base)
            dims[base] = {}
        if d in dims[base]:
            raise ParseError(f"duplicate column {raw!r}", 1)
        dims[base][d] = col
    layout = []
    for name in names:
        entry = dims[name]
        if None in entry:
            if len(entry) > 1:
                raise ParseError(f"series {name!r} has both a plain and suffixed columns", 1)
            layout.append([entry[None]])
        else:
            if sorted(entry) != list(range(len(entry))):
                raise ParseError(f"series {name!r} suffixes must be 0..{len(entry) - 1}", 1)
            layout.append([entry[d] for d in range(len(entry))])
    widths = {len(c) for c in layout}
    if len(widths) > 1:
        raise ParseError("all series must have the same number of dimensions", 1)
    return names, layout


def load_csv(path):
    """Read a wide CSV into a :class:`TimeSeriesBundle` (strict, no coercion)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise ParseError("empty file: no header row", 1)
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header):
        raise ParseError("empty column name in header", 1)
    if len(set(header)) != len(header):
        dup = next(h for h in header if header.count(h) > 1)
        raise ParseError(f"duplicate column {dup!r}", 1)
    seg_col = header.index(SEGMENT_COLUMN) if SEGMENT_COLUMN in header else None
    value_header = [h for c, h in enumerate(header) if c != seg_col]
    if not value_header:
        raise ParseError("no series columns", 1)
    names, layout = _group_columns(value_header)
    value_cols = [c for c in range(len(header)) if c != seg_col]
    data, labels = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            raise ParseError("blank line", line)
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", line)
        data.append([_parse_float(row[c].strip(), line, header[c]) for c in value_cols])
        if seg_col is not None:
            label = row[seg_col].strip()
            if not label:
                raise ParseError("empty segment label", line)
            labels.append(label)
    if not data:
        raise ParseError("no data rows", 2)
    values = np.array(data)
    arr = np.stack([values[:, cols] for cols in layout], axis=1)  # (T, N, M)
    if seg_col is None:
        segments = [arr]
    else:
        bounds = [0] + [r for r in range(1, len(labels)) if labels[r] != labels[r - 1]] + [len(labels)]
        seen = set()
        for a in bounds[:-1]:
            if labels[a] in seen:
                raise ParseError(f"segment {labels[a]!r} is not contiguous", a + 2)
            seen.add(labels[a])
        segments = [arr[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    meta = {"source": path.name}
    return TimeSeriesBundle(segments, names, None, meta)


def _fmt(x):
    return repr(float(x))


def write_csv(bundle, path):
    """Write ``bundle`` in the layout :func:`load_csv` reads; floats round-trip exactly."""
    m = bundle.dim
    header = []
    for name in bundle.names:
        header.extend([name] if m == 1 else [f"{name}.{d}" for d in range(m)])
    multi = len(bundle.segments) > 1
    if multi:
        header = [SEGMENT_COLUMN] + header
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r, seg in enumerate(bundle.segments):
            flat = seg.reshape(seg.shape[0], -1)
            for row in flat:
                cells = [_fmt(v) for v in row]
                w.writerow(([str(r)] + cells) if multi else cells)


def normalize(bundle):
    """Zero mean and unit variance per series and dimension over all time steps."""
    stacked = bundle.stacked()
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    for j, name in enumerate(bundle.names):
        for d in range(bundle.dim):
            if not std[j, d] > 0:
                raise DataError(f"series {name!r} dimension {d} is constant")
    segments = [(s - mean) / std for s in bundle.segments]
    out = np.concatenate(segments)
    # a second centering pass removes the rounding left by the first
    resid = out.mean(axis=0)
    segments = [s - resid for s in segments]
    out = np.concatenate(segments)
    if np.max(np.abs(out.mean(axis=0))) > 1e-12 or np.max(np.abs(out.var(axis=0) - 1.0)) > 1e-9:
        raise DataError("normalization postcondition failed")
    meta = dict(bundle.metadata, normalized=True)
    return TimeSeriesBundle(segments, list(bundle.names), bundle.graph, meta)


def fingerprint(bundle):
    """SHA-256 over names, segment shapes and raw float64 values."""
    h = hashlib.sha256()
    h.update(json.dumps(bundle.names).encode())
    for seg in bundle.segments:
        h.update(repr(seg.shape).encode())
        h.update(np.ascontiguousarray(seg, dtype="<f8").tobytes())
    return h.hexdigest()


# -- tree encoding -------------------------------------------------------------
def _clean(x):
    x = float(x)
    return x if math.isfinite(x) else None


def encode_array(a, **labels):
    """``{shape, data}`` with row-major data; NaN and inf become ``null``."""
    a = np.asarray(a)
    if a.dtype == bool:
        data = [bool(v) for v in a.ravel()]
    else:
        data = [_clean(v) for v in a.ravel()]
    tree = {"shape": list(a.shape), "data": data}
    tree.update({k: list(v) for k, v in labels.items() if v is not None})
    return tree


def decode_array(tree):
    shape = tuple(tree["shape"])
    data = tree["data"]
    if int(np.prod(shape)) != len(data):
        raise ParseError(f"array declares shape {shape} but holds {len(data)} values")
    if data and all(isinstance(v, bool) for v in data):
        return np.array(data, dtype=bool).reshape(shape)
    return np.array([np.nan if v is None else v for v in data], dtype=np.float64).reshape(shape)


def graph_to_tree(graph):
    return {"A": encode_array(graph.A), "B": None if graph.B is None else encode_array(graph.B),
            "indicator": encode_array(graph.indicator)}


def graph_from_tree(tree):
    B = None if tree.get("B") is None else decode_array(tree["B"])
    return GroundTruthGraph(decode_array(tree["A"]), B, decode_array(tree["indicator"]).astype(bool))


# -- documents -----------------------------------------------------------------
def make_manifest(config=None, data_sha256=None, seed=None, timings=None, command=None):
    return {
        "tool": "mpir",
        "version": __version__,
        "command": command,
        "config": config or {},
        "data_sha256": data_sha256,
        "seed": seed,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "timings": timings or {},
    }


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


@dataclass
class ResultsDocument:
    kind: str
    body: dict
    manifest: dict = field(default_factory=make_manifest)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.kind not in DOCUMENT_KINDS:
            raise ParseError(f"unknown document kind {self.kind!r}")

    def to_json(self):
        return _dumps({"schema_version": self.schema_version, "kind": self.kind,
                       "manifest": self.manifest, "body": self.body})

    def body_json(self):
        """Canonical text of the body alone, for reproducibility checks."""
        return _dumps(self.body)

    def write(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text):
        try:
            tree = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        if not isinstance(tree, dict) or set(tree) != {"schema_version", "kind", "manifest", "body"}:
            raise ParseError("not a results document")
        if tree["schema_version"] != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema version {tree['schema_version']}")
        return cls(tree["kind"], tree["body"], tree["manifest"], tree["schema_version"])

    @classmethod
    def read(cls, path):
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def strength_body(W, config=None):
    """Body of a ``strength_matrix`` document."""
    body = {
        "n_series": W.n_series,
        "n_fake": W.n_fake,
        "raw": encode_array(W.raw, rows=W.input_names, cols=W.target_names),
        "capped": encode_array(W.capped, rows=W.input_names, cols=W.target_names),
        "threshold": None if W.threshold is None else float(W.threshold),
        "thresholded": None if W.thresholded is None else encode_array(
            W.thresholded, rows=W.input_names[:W.n_series], cols=W.target_names),
        "test_mse": None if W.test_mse is None else [_clean(v) for v in W.test_mse],
    }
    if W.fits:
        body["chi"] = encode_array(np.stack([f.amps.chi for f in W.fits], axis=1), rows=W.input_names,
                                   cols=W.target_names)
        body["final_loss"] = [_clean(f.loss_trace[-1]) if f.loss_trace.size else None for f in W.fits]
    if config is not None and hasattr(config, "horizon"):
        body["horizon"] = config.horizon
    return body


def score_body(scores):
    """Body of a ``score_matrix`` document holding one or more matrices."""
    return {"matrices": [{"method": s.method, "flags": list(s.flags),
                          "scores": encode_array(s.scores, rows=s.names, cols=s.names),
                          "valid": encode_array(s.valid)} for s in scores]}


def benchmark_body(result):
    return {"rows": result.rows, "aggregate": result.aggregate()}


def lambda_body(selection):
    return {"chosen": selection.chosen, "accepted": list(selection.accepted),
            "valid": selection.valid, "diagnostics": selection.diagnostics}
