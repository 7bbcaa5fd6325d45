"""CSV and JSON artifact plumbing.

Grid fields travel as CSV with header `axis0,axis1,...,<value columns>` in
row-major order, plus a JSON sidecar (<path>.meta.json) holding what the CSV
cannot: dim, extents, points, boundary, and the metric weights.  Loaders
rebuild the grid from the sidecar and verify the row count.

All numbers are written with repr-level precision so a save/load round trip
is exact and repeated runs of a seeded scenario produce bit-identical files.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import ConfigError
from .fields import ComplexField, ConfigSpace, ScalarField, VectorField


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _meta_path(path) -> str:
    return str(path) + ".meta.json"


def _write_meta(path, space: ConfigSpace, extra=None):
    meta = {
        "dim": space.dim,
        "extents": list(space.extents),
        "points": list(space.points),
        "boundary": space.boundary,
        "sigma_sq": list(space.sigma_sq),
    }
    if extra:
        meta.update(extra)
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def _read_meta(path):
    meta_file = _meta_path(path)
    if not os.path.exists(meta_file):
        raise ConfigError(f"missing sidecar metadata {meta_file}")
    with open(meta_file) as fh:
        return json.load(fh)


def space_from_meta(meta) -> ConfigSpace:
    try:
        return ConfigSpace(
            dim=int(meta["dim"]),
            extents=tuple(meta["extents"]),
            points=tuple(meta["points"]),
            sigma_sq=tuple(meta["sigma_sq"]),
            boundary=str(meta["boundary"]),
        )
    except KeyError as exc:
        raise ConfigError(f"sidecar metadata missing key {exc}") from exc


def _axis_header(dim):
    return [f"axis{a}" for a in range(dim)]


def _grid_rows(space: ConfigSpace):
    return np.stack([m.ravel() for m in space.meshes], axis=1)


def _write_grid_csv(path, space, headers, columns, extra_meta=None):
    coords = _grid_rows(space)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_axis_header(space.dim) + headers)
        for i in range(coords.shape[0]):
            writer.writerow(
                [_fmt(c) for c in coords[i]] + [_fmt(col[i]) for col in columns]
            )
    _write_meta(path, space, extra_meta)


def _read_grid_csv(path, value_columns):
    """value_columns may be an int or a callable of the grid dim."""
    meta = _read_meta(path)
    space = space_from_meta(meta)
    if callable(value_columns):
        value_columns = value_columns(space.dim)
    expected = int(np.prod(space.points))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if len(rows) != expected:
        raise ConfigError(f"{path}: expected {expected} rows, found {len(rows)}")
    n_axis = space.dim
    if len(header) != n_axis + value_columns:
        raise ConfigError(
            f"{path}: expected {n_axis + value_columns} columns, found {len(header)}"
        )
    data = np.array([[float(v) for v in row[n_axis:]] for row in rows])
    return space, data, meta


def save_scalar_field(path, f: ScalarField, extra_meta=None):
    _write_grid_csv(path, f.space, ["value"], [f.values.ravel()], extra_meta)


def load_scalar_field(path) -> ScalarField:
    space, data, _ = _read_grid_csv(path, 1)
    return ScalarField(space, data[:, 0].reshape(space.shape))


def save_complex_field(path, f: ComplexField, extra_meta=None):
    _write_grid_csv(
        path,
        f.space,
        ["real", "imag"],
        [f.values.real.ravel(), f.values.imag.ravel()],
        extra_meta,
    )


def load_complex_field(path) -> ComplexField:
    space, data, _ = _read_grid_csv(path, 2)
    return ComplexField(space, (data[:, 0] + 1j * data[:, 1]).reshape(space.shape))


def save_vector_field(path, f: VectorField, extra_meta=None):
    headers = [f"component{a}" for a in range(f.space.dim)]
    cols = [f.components[a].ravel() for a in range(f.space.dim)]
    _write_grid_csv(path, f.space, headers, cols, extra_meta)


def load_vector_field(path) -> VectorField:
    space, data, _ = _read_grid_csv(path, lambda dim: dim)
    comps = np.stack([data[:, a].reshape(space.shape) for a in range(space.dim)])
    return VectorField(space, comps)


def save_kernel_row(path, kernel):
    """Transition probabilities from one source cell, flat destination index."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["destination_index", "probability"])
        for i, p in enumerate(kernel.probs.ravel()):
            writer.writerow([i, _fmt(p)])
    _write_meta(
        path,
        kernel.space,
        {
            "source": [float(c) for c in np.atleast_1d(kernel.source)],
            "alpha": kernel.alpha,
            "zeta": kernel.zeta,
        },
    )


def save_trajectory(path, steps, positions_list):
    """Walker trajectory dump: one row per (step, walker)."""
    dim = positions_list[0].shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "walker"] + _axis_header(dim))
        for step, pos in zip(steps, positions_list):
            for w in range(pos.shape[0]):
                writer.writerow([step, w] + [_fmt(c) for c in pos[w]])


def save_drift_estimate(path, estimate):
    """Per-cell drift report: center, components, standard errors, samples."""
    space = estimate.drift.space
    dim = space.dim
    coords = _grid_rows(space)
    drift = estimate.drift.components.reshape(dim, -1)
    stderr = estimate.stderr.reshape(dim, -1)
    counts = estimate.samples_per_cell.ravel()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            _axis_header(dim)
            + [f"drift{a}" for a in range(dim)]
            + [f"stderr{a}" for a in range(dim)]
            + ["samples"]
        )
        for i in range(coords.shape[0]):
            writer.writerow(
                [_fmt(c) for c in coords[i]]
                + [_fmt(drift[a, i]) for a in range(dim)]
                + [_fmt(stderr[a, i]) for a in range(dim)]
                + [int(counts[i])]
            )
    _write_meta(path, space)


def save_series(path, header, rows):
    """Generic numeric time series, e.g. (t, mass, variances, centers)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def load_series(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    return header, rows


def save_summary(path, summary: dict):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_summary(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
