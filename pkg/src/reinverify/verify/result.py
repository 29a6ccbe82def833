"""Verification outcomes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

STATUSES = ("Proven", "Falsified", "Unknown")


class NonPiecewiseLinear(ValueError):
    pass


@dataclass
class VerifyResult:
    status: str
    depth: int
    witness: Optional[np.ndarray] = None
    stats: dict = field(default_factory=dict)
    unrolled: object = field(default=None, repr=False, compare=False)
    note: str = ""
    guarantee: str = ""  # "bounded", "unbounded" or "" for a single query

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == "Falsified") != (self.witness is not None):
            raise ValueError("a witness is present exactly when the result is Falsified")

    def witness_xy(self):
        if self.witness is None:
            return None
        xs, ys = self.unrolled.split(self.witness)
        return xs, ys

    def to_json(self, timing=True):
        w = None
        if self.witness is not None:
            xs, ys = self.witness_xy()
            w = {"x": xs.tolist(), "y": ys.tolist()}
        stats = {"nodes": int(self.stats.get("nodes", 0)),
                 "lp_calls": int(self.stats.get("lp_calls", 0)),
                 "wall_ms": round(float(self.stats.get("wall_ms", 0.0)), 3) if timing else 0}
        out = {"status": self.status, "depth": int(self.depth), "witness": w, "stats": stats}
        if self.guarantee:
            out["guarantee"] = self.guarantee
        if self.note:
            out["note"] = self.note
        return out
