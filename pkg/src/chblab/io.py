"""Field and table output: legacy VTK structured points and flat CSV."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["write_vtk", "write_csv", "write_fields_csv", "read_vtk_scalars"]


def _scalar_block(name, values):
    # VTK orders points with x fastest; our arrays are indexed [i, j]
    flat = np.asarray(values, dtype=float).T.ravel()
    body = "\n".join(repr(float(x)) for x in flat)
    return f"SCALARS {name} double 1\nLOOKUP_TABLE default\n{body}\n"


def write_vtk(path, state) -> Path:
    """Write cell data ``phi, mu, sigma, p`` and cell-averaged velocity of a state."""
    g = state.grid
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vx, vy = state.v.cell_vectors()
    vec = np.stack([vx.T.ravel(), vy.T.ravel(), np.zeros(g.size)], axis=1)
    parts = [
        "# vtk DataFile Version 3.0",
        f"phase field step {state.step_count} t={state.t!r}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {g.nx + 1} {g.ny + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {g.hx!r} {g.hy!r} 1",
        f"CELL_DATA {g.size}",
    ]
    text = "\n".join(parts) + "\n"
    for name in ("phi", "mu", "sigma", "p"):
        text += _scalar_block(name, getattr(state, name))
    text += "VECTORS velocity double\n" + "\n".join(" ".join(repr(float(c)) for c in row) for row in vec) + "\n"
    path.write_text(text)
    return path


def read_vtk_scalars(path) -> dict:
    """Read back the scalar cell arrays written by :func:`write_vtk`, as ``(nx, ny)`` arrays."""
    lines = Path(path).read_text().splitlines()
    dims = next(line for line in lines if line.startswith("DIMENSIONS")).split()
    nx, ny = int(dims[1]) - 1, int(dims[2]) - 1
    out = {}
    i = 0
    while i < len(lines):
        if lines[i].startswith("SCALARS"):
            name = lines[i].split()[1]
            vals = np.array([float(x) for x in lines[i + 2 : i + 2 + nx * ny]])
            out[name] = vals.reshape(ny, nx).T
            i += 2 + nx * ny
        else:
            i += 1
    return out


def write_csv(path, rows, columns=None) -> Path:
    """Write a list of dicts; columns default to the keys of the first row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_fields_csv(path, state) -> Path:
    """One row per cell: ``x, y, phi, mu, sigma, p, vx, vy``."""
    g = state.grid
    X, Y = g.cell_centers()
    vx, vy = state.v.cell_vectors()
    cols = {"x": X, "y": Y, "phi": state.phi, "mu": state.mu, "sigma": state.sigma, "p": state.p, "vx": vx, "vy": vy}
    rows = [{k: float(v.ravel()[n]) for k, v in cols.items()} for n in range(g.size)]
    return write_csv(path, rows, list(cols))
