"""Plain-text formats: (p, F) tables and state/map coefficient files.

Coefficient files start with three header lines::

    d 2
    s 5          (r 3 for maps)
    kind state   (or map)

followed by one line per nonzero upper-triangle entry,
``a k_1 .. k_d b l_1 .. l_d value`` where ``a, b`` index Alice's qubit and
``k, l`` are occupation vectors in the package's Dicke ordering.
"""

import os
from pathlib import Path

import numpy as np

from .dicke import ChoiMap, SymmetricState, index_positions, index_set

OUTDIR_ENV = "LOSSCODES_OUTDIR"


def default_outdir():
    return Path(os.environ.get(OUTDIR_ENV, "results"))


def table_name(d, s, r):
    return f"{d}-{s}-{r}.dat"


def format_table(rows, p_fmt="%.2f", f_fmt="%.6f"):
    return "".join(f"{p_fmt % p} {f_fmt % f}\n" for p, f in rows)


def write_table(path, rows, **fmt):
    rows = list(rows)
    ps = [p for p, _ in rows]
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError("table rows must have strictly increasing first column")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_table(rows, **fmt))
    return path


def read_table(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            a, b = line.split()[:2]
            rows.append((float(a), float(b)))
    return rows


def format_protocol(obj, tol=0.0):
    """Text form of a SymmetricState or ChoiMap."""
    if isinstance(obj, SymmetricState):
        k = obj.s
        head = f"d {obj.d}\ns {obj.s}\nkind state\n"
    elif isinstance(obj, ChoiMap):
        k = obj.r
        head = f"d {obj.d}\nr {obj.r}\nkind map\n"
    else:
        raise TypeError(f"cannot format {type(obj).__name__}")
    idx = index_set(k, obj.d)
    m = obj.coeffs
    n = len(idx)
    lines = [head]
    for i in range(2 * n):
        for j in range(i, 2 * n):
            v = m[i, j]
            if abs(v) <= tol or v == 0:
                continue
            a, ka = divmod(i, n)
            b, kb = divmod(j, n)
            lines.append(" ".join(map(str, (a, *idx[ka], b, *idx[kb]))) + f" {v:.17g}\n")
    return "".join(lines)


def write_protocol(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_protocol(obj))
    return path


def parse_protocol(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
    if len(lines) < 3:
        raise ValueError("missing header: expected 'd', 's' or 'r', and 'kind' lines")
    header = {}
    for ln in lines[:3]:
        key, val = ln.split()
        header[key] = val
    try:
        d = int(header["d"])
        kind = header["kind"]
        k = int(header["s"] if kind == "state" else header["r"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed header: {lines[:3]}") from exc
    if kind not in ("state", "map"):
        raise ValueError(f"kind must be 'state' or 'map', got {kind!r}")
    pos = index_positions(k, d)
    n = len(pos)
    m = np.zeros((2 * n, 2 * n))
    for ln in lines[3:]:
        parts = ln.split()
        if len(parts) != 2 * d + 3:
            raise ValueError(f"expected {2 * d + 3} fields, got {len(parts)}: {ln!r}")
        a = int(parts[0])
        ka = tuple(int(x) for x in parts[1 : d + 1])
        b = int(parts[d + 1])
        kb = tuple(int(x) for x in parts[d + 2 : 2 * d + 2])
        v = float(parts[-1])
        i, j = a * n + pos[ka], b * n + pos[kb]
        m[i, j] = m[j, i] = v
    return SymmetricState(d, k, m) if kind == "state" else ChoiMap(d, k, m)


def read_protocol(path):
    return parse_protocol(Path(path).read_text())
