"""CSV/JSON writers with provenance headers, and their readers."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
TOOL = "stopped-euler"


def provenance(seed=None, **extra) -> str:
    from . import __version__

    parts = [f"{TOOL} {__version__}", f"schema={SCHEMA_VERSION}"]
    if seed is not None:
        parts.append(f"seed={seed}")
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, rows, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(header_comment.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Returns ``(comments, header, rows)`` with numeric cells converted to float."""
    comments, rows = [], []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        (comments if ln.startswith("#") else body).append(ln)
    reader = csv.reader(body)
    header = next(reader)
    for row in reader:
        rows.append([float(c) if c not in ("",) else None for c in row])
    return comments, header, rows


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def trajectory_rows(states, times, frozen, spec, eta):
    """Rows ``k, t, c_1..c_n, h_norm, h_eta_norm, frozen``.

    ``frozen`` in row k marks the step that produced state k (0 for k = 0).
    """
    n = states.shape[1]
    yield ["k", "t"] + [f"c_{i}" for i in range(1, n + 1)] + ["h_norm", "h_eta_norm", "frozen"]
    w = np.abs(spec.spectrum.eigenvalues(n)) ** (2.0 * eta)
    with np.errstate(over="ignore", invalid="ignore"):
        h = np.sqrt(np.sum(states**2, axis=-1))
        he = np.sqrt(np.sum(w * states**2, axis=-1))
    for k in range(states.shape[0]):
        fz = bool(frozen[k - 1]) if k > 0 else False
        yield [k, float(times[k])] + [float(c) for c in states[k]] + [float(h[k]), float(he[k]), fz]
