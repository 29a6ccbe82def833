"""Sound but incomplete verification by interval propagation."""
from __future__ import annotations

import time

import numpy as np

from ..network import affine_interval
from ..network import _act as activate
from .query import input_box_atoms
from .result import VerifyResult


class UnboundedInput(ValueError):
    pass


def _atom_range(a, lo, hi):
    """Interval of ``coef . v + const`` over the box."""
    c = a.coef[:len(lo)]
    nz = c != 0
    cp, cn = np.clip(c[nz], 0, None), np.clip(c[nz], None, 0)
    with np.errstate(invalid="ignore"):
        low = float(cp @ lo[nz] + cn @ hi[nz]) + a.const
        high = float(cp @ hi[nz] + cn @ lo[nz]) + a.const
    return low, high


def _maybe(a, lo, hi):
    low, high = _atom_range(a, lo, hi)
    if a.sense == "le":
        return low <= 0
    if a.sense == "lt":
        return low < 0
    return low <= 0 <= high


def solve_interval(query):
    """Proven if no box point can satisfy the precondition and the negated post; else Unknown."""
    t0 = time.perf_counter()
    u = query.unrolled
    lo, hi = input_box_atoms(query)
    width = u.n + u.m
    for s in range(u.depth):
        xs = slice(s * width, s * width + u.n)
        if not (np.all(np.isfinite(lo[xs])) and np.all(np.isfinite(hi[xs]))):
            bad = [j for j in range(u.n) if not (np.isfinite(lo[s * width + j])
                                                 and np.isfinite(hi[s * width + j]))]
            raise UnboundedInput(f"input features {bad} at step {s} lack finite bounds")
        zlo, zhi = lo[xs].copy(), hi[xs].copy()
        for layer in u.base.layers:
            zlo, zhi = affine_interval(layer.weights, layer.bias, zlo, zhi)
            zlo, zhi = activate(layer.activation, zlo), activate(layer.activation, zhi)
        ys = slice(s * width + u.n, (s + 1) * width)
        lo[ys] = np.maximum(lo[ys], zlo)
        hi[ys] = np.minimum(hi[ys], zhi)
    stats = {"nodes": 0, "lp_calls": 0, "wall_ms": (time.perf_counter() - t0) * 1000.0}
    if np.any(lo > hi):
        return VerifyResult("Proven", u.depth, None, stats, u, note="precondition box empty")
    pre_ok = all(_maybe(a, lo, hi) for a in query.linear) and \
        all(any(all(_maybe(a, lo, hi) for a in case) for case in g) for g in query.groups)
    post_ok = any(all(_maybe(a, lo, hi) for a in case) for case in query.negated_post)
    if pre_ok and post_ok:
        return VerifyResult("Unknown", u.depth, None, stats, u,
                            note="interval over-approximation cannot decide")
    return VerifyResult("Proven", u.depth, None, stats, u)
