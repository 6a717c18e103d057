"""JSON dataset files.

Layout::

    {"dim": D,
     "atoms": [{"weight": w, "mean": [...], "cov": [[...], ...]}, ...]}

Floats are written by :mod:`json` with ``repr``, the shortest decimal that
reads back to the same double, so a write/read round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._validation import check_covariance
from .exceptions import BuresError, DatasetError
from .geometry import BuresDistribution, GaussianMeasure

WEIGHT_TOL = 1e-9


def dataset_to_dict(Q) -> dict:
    if isinstance(Q, GaussianMeasure):
        Q = BuresDistribution(Q.cov[None], means=Q.mean[None])
    return {
        "dim": Q.dim,
        "atoms": [
            {"weight": float(w), "mean": m.tolist(), "cov": c.tolist()}
            for w, m, c in zip(Q.weights, Q.means, Q.covs)
        ],
    }


def _fail(msg, index=None):
    err = DatasetError(msg)
    err.index = index
    raise err


def dataset_from_dict(data: dict) -> BuresDistribution:
    """Validate a parsed dataset; errors name the offending atom and invariant."""
    if not isinstance(data, dict) or "atoms" not in data:
        _fail("dataset must be an object with an 'atoms' list")
    atoms = data["atoms"]
    if not isinstance(atoms, list) or not atoms:
        _fail("dataset has no atoms")
    dim = data.get("dim")
    covs, means, weights = [], [], []
    for i, atom in enumerate(atoms):
        try:
            cov = np.asarray(atom["cov"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            _fail(f"atom {i}: missing or malformed 'cov' ({exc})", i)
        if dim is None:
            dim = cov.shape[0] if cov.ndim == 2 else 1
        if cov.shape != (dim, dim):
            _fail(f"atom {i}: cov has shape {cov.shape}, expected ({dim}, {dim})", i)
        try:
            cov = check_covariance(cov)
        except BuresError as exc:
            _fail(f"atom {i}: {exc}", i)
        mean = np.asarray(atom.get("mean", np.zeros(dim)), dtype=float).reshape(-1)
        if mean.shape != (dim,):
            _fail(f"atom {i}: mean has length {mean.size}, expected {dim}", i)
        w = float(atom.get("weight", 1.0 / len(atoms)))
        if not w > 0:
            _fail(f"atom {i}: weight {w!r} is not positive", i)
        covs.append(cov)
        means.append(mean)
        weights.append(w)
    total = float(np.sum(weights))
    if abs(total - 1.0) > WEIGHT_TOL:
        _fail(f"weights sum to {total!r}, expected 1 within {WEIGHT_TOL}")
    return BuresDistribution(np.stack(covs), np.asarray(weights), np.stack(means))


def read_dataset(path) -> BuresDistribution:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        _fail(f"{path}: not valid JSON ({exc})")
    return dataset_from_dict(data)


def write_dataset(Q, path=None) -> str:
    """Serialize a distribution or a single measure; returns the JSON text."""
    text = json.dumps(dataset_to_dict(Q), indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_measure(path) -> GaussianMeasure:
    """Read a dataset file holding exactly one atom."""
    Q = read_dataset(path)
    if Q.n_atoms != 1:
        _fail(f"{path}: expected a single-atom file, found {Q.n_atoms} atoms")
    return Q.atom(0)
