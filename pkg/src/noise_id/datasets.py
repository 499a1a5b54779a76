"""Dataset container and CSV serialization.

Labels are stored 1-based (classes 1..K) both in memory and on disk. The CSV
layout is: continuous feature columns ``x_1..x_S``, categorical feature
columns ``r_1..r_d``, clean label ``y``, then noisy labels
``ytilde_1..ytilde_p``. Provenance (generating model, seed, parameters) goes
to a JSON sidecar next to the CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError


@dataclass
class NoisyDataset:
    y: np.ndarray
    noisy: np.ndarray
    K: int
    provenance: dict
    x: np.ndarray | None = None
    r: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        self.noisy = np.asarray(self.noisy, dtype=np.int64)
        if self.noisy.ndim == 1:
            self.noisy = self.noisy[:, None]
        n = self.y.shape[0]
        if self.noisy.shape[0] != n:
            raise ValidationError("y and noisy must have matching lengths")
        for name, arr in (("y", self.y), ("noisy", self.noisy)):
            if arr.size and (arr.min() < 1 or arr.max() > self.K):
                raise ValidationError(f"{name} labels must lie in 1..{self.K}")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=np.float64)
            if self.x.ndim == 1:
                self.x = self.x[:, None]
            if self.x.shape[0] != n:
                raise ValidationError("x rows must match the record count")
        if self.r is not None:
            self.r = np.asarray(self.r, dtype=np.int64)
            if self.r.ndim == 1:
                self.r = self.r[:, None]
            if self.r.shape[0] != n:
                raise ValidationError("r rows must match the record count")
        if not isinstance(self.provenance, dict) or not self.provenance:
            raise ValidationError("provenance is required")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.noisy.shape[1]

    def to_csv(self, path) -> None:
        path = Path(path)
        header = []
        cols = []
        if self.x is not None:
            header += [f"x_{i+1}" for i in range(self.x.shape[1])]
            cols.append(self.x)
        if self.r is not None:
            header += [f"r_{i+1}" for i in range(self.r.shape[1])]
            cols.append(self.r)
        header.append("y")
        cols.append(self.y[:, None])
        header += [f"ytilde_{i+1}" for i in range(self.p)]
        cols.append(self.noisy)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                row = []
                for block in cols:
                    for v in block[i]:
                        if isinstance(v, (np.floating, float)):
                            row.append(repr(float(v)))
                        else:
                            row.append(int(v))
                writer.writerow(row)
        sidecar = path.with_suffix(path.suffix + ".provenance.json")
        sidecar.write_text(json.dumps(self.provenance, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path, K: int | None = None) -> "NoisyDataset":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        if "y" not in header:
            raise ValidationError("CSV is missing the clean-label column 'y'")
        x_cols = [i for i, h in enumerate(header) if h.startswith("x_")]
        r_cols = [i for i, h in enumerate(header) if h.startswith("r_")]
        yt_cols = [i for i, h in enumerate(header) if h.startswith("ytilde_")]
        y_col = header.index("y")
        y = np.array([int(row[y_col]) for row in rows], dtype=np.int64)
        noisy = np.array(
            [[int(row[c]) for c in yt_cols] for row in rows], dtype=np.int64
        )
        x = (
            np.array([[float(row[c]) for c in x_cols] for row in rows])
            if x_cols
            else None
        )
        r = (
            np.array([[int(row[c]) for c in r_cols] for row in rows], dtype=np.int64)
            if r_cols
            else None
        )
        sidecar = path.with_suffix(path.suffix + ".provenance.json")
        if sidecar.exists():
            provenance = json.loads(sidecar.read_text())
        else:
            provenance = {"model": "unknown", "source": str(path)}
        if K is None:
            hi = int(max(y.max(initial=1), noisy.max(initial=1)))
            K = int(provenance.get("K", hi))
            K = max(K, hi)
        return cls(y=y, noisy=noisy, K=K, provenance=provenance, x=x, r=r)
