"""Observational dataset container and its CSV round trip."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    """Covariates, binary treatment, observed outcome, optional potential outcomes.

    ``y0``/``y1`` are carried when a synthetic generator knows both arms;
    estimators must only ever read ``x``, ``t`` and ``y``.
    """

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    y0: np.ndarray | None = None
    y1: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.t = np.asarray(self.t)
        self.y = np.asarray(self.y, dtype=np.float64)
        n = self.x.shape[0]
        if self.t.shape != (n,) or self.y.shape != (n,):
            raise ValueError(f"shape mismatch: x has {n} rows, t {self.t.shape}, y {self.y.shape}")
        if not np.isin(self.t, (0, 1)).all():
            raise ValueError("treatment must be binary 0/1")
        self.t = self.t.astype(np.int64)
        if not np.isfinite(self.x).all():
            raise ValueError("covariates contain non-finite values")
        if not np.isfinite(self.y).all():
            raise ValueError("outcomes contain non-finite values")
        for name in ("y0", "y1"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=np.float64)
                if arr.shape != (n,):
                    raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
                if not np.isfinite(arr).all():
                    raise ValueError(f"{name} contains non-finite values")
                setattr(self, name, arr)
        if self.t.sum() == 0 or self.t.sum() == n:
            raise ValueError("each treatment arm needs at least one unit")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def arm_indices(self, arm):
        if arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {arm!r}")
        return np.flatnonzero(self.t == arm)

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.t[idx], self.y[idx],
                       None if self.y0 is None else self.y0[idx],
                       None if self.y1 is None else self.y1[idx])

    def checksum(self):
        """Content hash; identical draws across paired runs must agree."""
        h = hashlib.sha256()
        for arr in (self.x, self.t.astype(np.float64), self.y, self.y0, self.y1):
            if arr is not None:
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_csv(self, path):
        """Write header ``x1..xp,t,y[,y0,y1]`` plus one row per unit."""
        cols = [self.x, self.t[:, None].astype(np.float64), self.y[:, None]]
        names = [f"x{j + 1}" for j in range(self.p)] + ["t", "y"]
        if self.y0 is not None and self.y1 is not None:
            cols += [self.y0[:, None], self.y1[:, None]]
            names += ["y0", "y1"]
        table = np.hstack(cols)
        np.savetxt(path, table, delimiter=",", comments="",
                   header=",".join(names), fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        with open(path, "r", encoding="ascii") as fh:
            names = fh.readline().strip().split(",")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if table.shape[1] != len(names):
            raise ValueError(f"{path}: header names {len(names)} columns, rows have {table.shape[1]}")
        p = sum(1 for c in names if c.startswith("x"))
        want = [f"x{j + 1}" for j in range(p)] + ["t", "y"]
        if names[:p + 2] != want or len(names) not in (p + 2, p + 4):
            raise ValueError(f"{path}: unexpected header {names}")
        has_po = len(names) == p + 4 and names[p + 2:] == ["y0", "y1"]
        if len(names) == p + 4 and not has_po:
            raise ValueError(f"{path}: unexpected trailing columns {names[p + 2:]}")
        return cls(table[:, :p], table[:, p].astype(np.int64), table[:, p + 1],
                   table[:, p + 2] if has_po else None,
                   table[:, p + 3] if has_po else None)


def train_test_split(data, test_fraction, rng):
    """Random split preserving nothing but proportions; returns (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(rng)
    perm = rng.permutation(data.n)
    n_test = max(1, int(round(test_fraction * data.n)))
    if n_test >= data.n:
        raise ValueError("split leaves no training rows")
    return data.subset(perm[n_test:]), data.subset(perm[:n_test])
