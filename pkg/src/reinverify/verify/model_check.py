"""Bounded model checking, k-induction, and the single-verification entry point."""
from __future__ import annotations

from ..drlp.classify import post_kind
from ..drlp.script import DrlpScript
from .bab import solve
from .interval import solve_interval
from .query import build_induction_query, build_query
from .result import VerifyResult


def _decide(query, budget):
    if not query.unrolled.base.piecewise_linear:
        return solve_interval(query)
    return solve(query, budget)


def _merge_stats(results):
    out = {"nodes": 0, "lp_calls": 0, "wall_ms": 0.0}
    for r in results:
        for key in out:
            out[key] += r.stats.get(key, 0)
    return out


def _require_concrete(script):
    if not isinstance(script, DrlpScript):
        raise TypeError("verification needs a concrete script; concretize the template first")


def bmc(script, net, k_max, budget=None):
    """Search for a counterexample at depths 1..k_max (a fixed depth for k-free scripts)."""
    _require_concrete(script)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    fixed = script.fixed_depth()
    depths = [fixed] if fixed is not None else range(1, k_max + 1)
    done = []
    for k in depths:
        r = _decide(build_query(script, net, k), budget)
        done.append(r)
        if r.status == "Falsified":
            r.stats = _merge_stats(done)
            return r
        if r.status == "Unknown":
            r.stats = _merge_stats(done)
            return r
    last = done[-1]
    return VerifyResult("Proven", last.depth, None, _merge_stats(done), last.unrolled,
                        note=last.note,
                        guarantee="unbounded" if fixed is not None else "bounded")


def k_induction(script, net, k_max, budget=None):
    """Base case by BMC plus an inductive step, for k = 1..k_max."""
    _require_concrete(script)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if script.fixed_depth() is not None:
        # nothing to induct over: the script only speaks about a fixed horizon
        return bmc(script, net, k_max, budget)
    done = []
    for k in range(1, k_max + 1):
        base = _decide(build_query(script, net, k), budget)
        done.append(base)
        if base.status == "Falsified":
            base.stats = _merge_stats(done)
            return base
        if base.status == "Unknown":
            continue
        step = _decide(build_induction_query(script, net, k), budget)
        done.append(step)
        if step.status == "Proven":
            return VerifyResult("Proven", k, None, _merge_stats(done), base.unrolled,
                                guarantee="unbounded")
    return VerifyResult("Unknown", k_max, None, _merge_stats(done), done[-1].unrolled,
                        note="induction did not close within k_max")


METHODS = ("kind", "bmc", "interval")


def verify(script, net, k_max=5, method="kind", budget=None):
    """Single verification of a concrete script; k-induction by default."""
    if method == "bmc":
        return bmc(script, net, k_max, budget)
    if method == "interval":
        _require_concrete(script)
        depth = script.fixed_depth() or k_max
        return solve_interval(build_query(script, net, depth))
    if method != "kind":
        raise ValueError(f"unknown method {method!r}")
    _require_concrete(script)
    if post_kind(script) == "Exist":
        # eventually-style posts are not inductive; bounded checking is the honest answer
        r = bmc(script, net, k_max, budget)
        r.note = (r.note + "; " if r.note else "") + "existential post checked by bmc"
        return r
    return k_induction(script, net, k_max, budget)
