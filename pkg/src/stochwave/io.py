"""Flat-binary persistence with JSON headers for paths and field samples.

Layout: <base>.bin holds the float64 C-order payload (time-major,
point-minor for fields; slab-major, site-minor for noise increments) and
<base>.json the header.  Noise paths are reconstructed against a kernel
spec by re-deriving the eigenbasis and projecting the stored increments.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .kernels import CovarianceSpec
from .noise import NoiseGrid, NoiseModel, NoisePath
from .solver import FieldSample

__all__ = ["load_field", "load_noisepath", "save_field", "save_noisepath"]

_SCHEMA = 1


def _grid_header(grid: NoiseGrid) -> dict:
    return {
        "T": grid.T,
        "num_steps": grid.num_steps,
        "spacing": grid.spacing,
        "lattice": np.asarray(grid.lattice).tolist(),
    }


def _grid_from_header(h: dict) -> NoiseGrid:
    return NoiseGrid(
        T=float(h["T"]),
        num_steps=int(h["num_steps"]),
        lattice=np.asarray(h["lattice"], dtype=float),
        spacing=float(h["spacing"]),
    )


def save_noisepath(path: NoisePath, base) -> None:
    base = Path(base)
    base.with_suffix(".bin").write_bytes(np.ascontiguousarray(path.increments).tobytes())
    header = {
        "schema": _SCHEMA,
        "kind": "noisepath",
        "grid": _grid_header(path.grid),
        "seed": path.seed,
        "num_modes": path.num_modes,
    }
    base.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True))


def load_noisepath(base, spec: CovarianceSpec) -> NoisePath:
    base = Path(base)
    header = json.loads(base.with_suffix(".json").read_text())
    if header.get("kind") != "noisepath":
        raise ValueError(f"{base}: not a stored noise path")
    grid = _grid_from_header(header["grid"])
    model = NoiseModel(spec, grid, int(header["num_modes"]))
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype=np.float64)
    increments = raw.reshape(grid.num_steps, len(grid.lattice)).copy()
    # project back onto the stored basis to recover the standard coordinates
    modes = (model.eigvecs @ increments.T) / np.sqrt(model.eigvals)[:, None]
    return NoisePath(
        grid=grid,
        increments=increments,
        mode_increments=np.ascontiguousarray(modes),
        eigenbasis=model.eigvecs / np.sqrt(grid.spacing**3),
        eigvals=model.eigvals.copy(),
        seed=int(header["seed"]),
    )


def save_field(sample: FieldSample, base) -> None:
    base = Path(base)
    base.with_suffix(".bin").write_bytes(np.ascontiguousarray(sample.values).tobytes())
    header = {
        "schema": _SCHEMA,
        "kind": "field",
        "grid": _grid_header(sample.grid),
        "t0": sample.t0,
        "eval_points": np.asarray(sample.eval_points).tolist(),
        "meta": {k: v for k, v in sample.meta.items() if _jsonable(v)},
        "layout": "time-major,point-minor",
    }
    base.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True))


def load_field(base) -> FieldSample:
    base = Path(base)
    header = json.loads(base.with_suffix(".json").read_text())
    if header.get("kind") != "field":
        raise ValueError(f"{base}: not a stored field sample")
    grid = _grid_from_header(header["grid"])
    eval_points = np.asarray(header["eval_points"], dtype=float)
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype=np.float64)
    values = raw.reshape(grid.num_steps + 1, len(eval_points)).copy()
    return FieldSample(
        grid=grid, t0=float(header["t0"]), values=values,
        eval_points=eval_points, meta=dict(header.get("meta", {})),
    )


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False
