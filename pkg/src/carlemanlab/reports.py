"""Deterministic report writers: JSON, CSV and two-column plot data.

Floats are written in scientific notation with 12 significant digits and
dict keys keep insertion order, so equal inputs give byte-identical files.
Files are written to a temporary sibling and renamed into place.
"""

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

FLOAT_FORMAT = ".11e"


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, FLOAT_FORMAT)


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        text = format_float(obj)
        # JSON has no inf/nan literals; keep them as strings.
        return text if math.isfinite(float(obj)) else json.dumps(text)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{end}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{end}]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj, indent=2):
    return _encode(obj, indent, 0) + "\n"


def to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def to_plot_data(x, y, header=None):
    lines = [f"# {header}"] if header else []
    lines += [f"{format_float(a)} {format_float(b)}" for a, b in zip(x, y)]
    return "\n".join(lines) + "\n"


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(out_dir, name, summary, header, rows, plot=None, plot_header=None):
    """Write ``<name>.json``, ``<name>.csv`` and ``<name>_plot.dat``; return their paths."""
    paths = {
        "json": os.path.join(out_dir, f"{name}.json"),
        "csv": os.path.join(out_dir, f"{name}.csv"),
        "plot": os.path.join(out_dir, f"{name}_plot.dat"),
    }
    atomic_write(paths["json"], to_json(summary))
    atomic_write(paths["csv"], to_csv(header, rows))
    px, py = plot if plot is not None else ([], [])
    atomic_write(paths["plot"], to_plot_data(px, py, plot_header))
    return paths


__all__ = ["format_float", "to_json", "to_csv", "to_plot_data", "atomic_write", "write_report"]
