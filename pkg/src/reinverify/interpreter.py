"""Interpretability questions answered by breakpoint search over generated templates."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .breakpoints import SearchSpec, UnknownVerdict, VarSpec, analyze_breakpoints, find_breakpoints
from .drlp import parse
from .network import IntervalBox, interval_propagate
from .verify import verify

NORMS = ("L1", "L2", "Linf")
DEFAULT_TOLERANCE = 1e-3


class NoBreakpoint(RuntimeError):
    pass


class NeverChanges(RuntimeError):
    pass


class NoCounterfactual(RuntimeError):
    pass


class PreconditionViolation(ValueError):
    pass


def norm(v, kind):
    v = np.abs(np.asarray(v, dtype=float))
    if v.size == 0:
        return 0.0
    if kind == "L1":
        return float(v.sum())
    if kind == "L2":
        return float(np.sqrt((v ** 2).sum()))
    if kind == "Linf":
        return float(v.max())
    raise ValueError(f"unknown norm {kind!r}")


@dataclass
class PerturbationQuestion:
    """Perturb the features in ``discussed`` by up to ``epsilon``; hold the rest fixed."""

    x0: np.ndarray
    discussed: Sequence[int]
    epsilon: object = 0.0  # scalar or per-feature vector
    distance: str = "Linf"

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        self.discussed = sorted(set(int(j) for j in self.discussed))
        n = len(self.x0)
        if any(not 0 <= j < n for j in self.discussed):
            raise ValueError("discussed index out of range")
        if self.distance not in NORMS:
            raise ValueError(f"unknown norm {self.distance!r}")

    @property
    def fixed(self):
        return [j for j in range(len(self.x0)) if j not in self.discussed]

    def eps_vector(self):
        e = np.broadcast_to(np.asarray(self.epsilon, dtype=float), self.x0.shape).copy()
        e[self.fixed] = 0.0
        return e


@dataclass
class InterpretAnswer:
    kind: str
    value: object
    breakpoints: List = field(default_factory=list)
    details: Dict = field(default_factory=dict)

    def to_json(self):
        value = self.value
        if isinstance(value, np.ndarray):
            value = value.tolist()
        return {"question": self.kind, "answer": value,
                "breakpoints": [b.to_json() for b in self.breakpoints],
                "details": _plain(self.details)}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# -- template generation ------------------------------------------------------

def _num(v):
    v = float(v)
    return f"({v!r})" if v < 0 else repr(v)


def _box_lines(x0, radius):
    """Precondition lines; ``radius[j]`` is a literal, a parameter name, or None for fixed."""
    lines = []
    for j, c in enumerate(x0):
        r = radius[j]
        if r is None:
            lines.append(f"x[0][{j}] == {_num(c)}")
        else:
            lines.append(f"{_num(c)} - {r} <= x[0][{j}] <= {_num(c)} + {r}")
    return lines


def _script(n, m, pre, post, variables=()):
    return parse("\n".join(list(variables) + ["@Pre", f"x_size = {n}", f"y_size = {m}"] +
                           list(pre) + ["@Exp"] + list(post)) + "\n")


def _default_verify(net):
    return lambda s: verify(s, net, k_max=1)


def _single_bp(template, net, spec, verify_fn):
    out = find_breakpoints(template, net, SearchSpec((spec,)), verify_fn)
    if out.aborted:
        raise UnknownVerdict(out.aborted[0]["reason"])
    return list(out)


# -- questions ----------------------------------------------------------------

def sensitivity(net, q, y_range=None, precision=1e-3, verify_fn=None):
    """Largest output fluctuation over the perturbation box, located by breakpoints.

    Each output coordinate is swept with the one-sided posts ``y <= z`` and
    ``y >= z``; their flips sit at the max and min of the output, and the
    answer is the farther of the two from ``N(x0)``, aggregated over outputs
    with the question's norm.
    """
    verify_fn = verify_fn or _default_verify(net)
    n, m = net.input_dim, net.output_dim
    y0 = net.forward(q.x0)
    if not q.discussed:
        return InterpretAnswer("sensitivity", 0.0, details={"reason": "no perturbed features"})
    eps = q.eps_vector()
    if y_range is None:
        box = interval_propagate(net, IntervalBox(q.x0 - eps, q.x0 + eps))
        width = box.upper - box.lower
        lo_r = box.lower - 0.1 * width - precision
        hi_r = box.upper + 0.1 * width + precision
    else:
        lo_r = np.broadcast_to(np.asarray(y_range[0], dtype=float), (m,))
        hi_r = np.broadcast_to(np.asarray(y_range[1], dtype=float), (m,))
    pre = _box_lines(q.x0, [repr(float(eps[j])) if j in q.discussed else None
                            for j in range(n)])
    per_output, bps = [], []
    for o in range(m):
        sides = []
        for op, lo, hi in (("<=", y0[o], hi_r[o]), (">=", lo_r[o], y0[o])):
            t = _script(n, m, pre, [f"y[0][{o}] {op} z"])
            found = _single_bp(t, net, VarSpec("z", float(lo), float(hi), precision), verify_fn)
            bps.extend(found)
            sides.append(max((abs(b.value - y0[o]) for b in found), default=0.0))
        per_output.append(max(sides))
    value = norm(per_output, q.distance) if m > 1 else per_output[0]
    return InterpretAnswer("sensitivity", value, bps,
                           {"per_output": per_output, "output": y0})


def importance(net, q, eps_range, precision=1e-3, eps_out=None, verify_fn=None):
    """Smallest perturbation of the discussed features that moves the output by more than eps_out."""
    if eps_out is None or eps_out <= 0:
        raise ValueError("importance needs a positive output threshold eps_out")
    verify_fn = verify_fn or _default_verify(net)
    n, m = net.input_dim, net.output_dim
    if not q.discussed:
        raise NeverChanges("no perturbed features")
    y0 = net.forward(q.x0)
    pre = _box_lines(q.x0, ["e" if j in q.discussed else None for j in range(n)])
    post = [f"{_num(y0[o] - eps_out)} <= y[0][{o}] <= {_num(y0[o] + eps_out)}"
            for o in range(m)]
    t = _script(n, m, pre, post)
    found = _single_bp(t, net, VarSpec("e", float(eps_range[0]), float(eps_range[1]), precision),
                       verify_fn)
    if not found:
        return InterpretAnswer("importance", None, [], {"never_changes": True, "importance": 0.0})
    e = min(b.value for b in found)
    step = np.zeros(n)
    step[q.discussed] = e
    dist = norm(step, q.distance)
    return InterpretAnswer("importance", dist, found,
                           {"never_changes": False,
                            "importance": 1.0 / dist if dist > 0 else math.inf})


def feature_importance(net, x0, eps_range, precision=1e-3, eps_out=None, distance="Linf",
                       verify_fn=None):
    """Per-feature importance scores (reciprocal distance, 0 when the feature never matters)."""
    scores = []
    for j in range(net.input_dim):
        a = importance(net, PerturbationQuestion(x0, [j], distance=distance), eps_range,
                       precision, eps_out, verify_fn)
        scores.append(a.details["importance"])
    return scores


def _ball_lines(x0, features, distance):
    """Cuts ``d . (x - x0) <= e`` that, with the box, outer-approximate the norm ball.

    The L1 cross-polytope is exact; for L2 the cut directions are a fine
    polygon in 2-D and sign/pair directions otherwise.
    """
    k = len(features)
    if k < 2 or distance == "Linf":
        return []
    if distance == "L1":
        dirs = [np.array(s, float) for s in itertools.product((1.0, -1.0), repeat=k)]
    elif k == 2:
        ang = np.arange(64) * (2 * math.pi / 64)
        dirs = list(np.stack([np.cos(ang), np.sin(ang)], 1))
    else:
        dirs = []
        if 2 ** k <= 64:
            dirs += [np.array(s) / math.sqrt(k) for s in itertools.product((1.0, -1.0), repeat=k)]
        for i, j in itertools.combinations(range(k), 2):
            for si, sj in itertools.product((1.0, -1.0), repeat=2):
                d = np.zeros(k)
                d[i], d[j] = si / math.sqrt(2), sj / math.sqrt(2)
                dirs.append(d)
    lines = []
    for d in dirs:
        terms = " + ".join(f"{_num(round(c, 12))} * x[0][{f}]" for c, f in zip(d, features)
                           if c != 0)
        shift = round(float(sum(c * x0[f] for c, f in zip(d, features))), 12)
        lines.append(f"{terms} <= {_num(shift)} + e")
    return lines


def _pull_back(net, x0, point, target, tolerance):
    """First point on the segment x0 -> point whose output is within tolerance of target."""
    from .metrics import _segment_kinks

    direction = point - x0
    length = float(np.linalg.norm(direction))
    if length == 0:
        return point
    ts = _segment_kinks(net, x0, direction / length, length)
    ys = net.forward(x0[None, :] + ts[:, None] * (direction / length)[None, :])
    # the output is affine between kinks, so each piece's entry point is exact
    for i in range(len(ts) - 1):
        t0, t1 = ts[i], ts[i + 1]
        y0, y1 = ys[i], ys[i + 1]
        lo_t, hi_t = 0.0, 1.0
        for o in range(len(target)):
            a, b = target[o] - tolerance - y0[o], target[o] + tolerance - y0[o]
            slope = y1[o] - y0[o]
            if abs(slope) < 1e-15:
                if a > 0 or b < 0:
                    lo_t, hi_t = 1.0, 0.0
                continue
            u, v = sorted((a / slope, b / slope))
            lo_t, hi_t = max(lo_t, u), min(hi_t, v)
        if lo_t <= hi_t:
            cand = x0 + (t0 + lo_t * (t1 - t0)) * direction / length
            if np.all(np.abs(net.forward(cand) - target) <= tolerance + 1e-9):
                return cand
    return point


def counterfactual(net, x0, target, eps_range, precision=1e-3, distance="L2",
                   tolerance=DEFAULT_TOLERANCE, features=None, verify_fn=None):
    """Closest input found whose output is within ``tolerance`` of ``target``.

    Radii are searched per feature and for all features jointly, the joint
    region being the norm ball (or a tight polytope around it).  The
    counterexample at each Falsified bracket end is a candidate, pulled back
    toward ``x0`` along the segment joining them.
    """
    verify_fn = verify_fn or _default_verify(net)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    target = np.atleast_1d(np.asarray(target, dtype=float))
    n, m = net.input_dim, net.output_dim
    if np.all(np.abs(net.forward(x0) - target) <= tolerance):
        raise PreconditionViolation("the target already matches the network output")
    if distance not in NORMS:
        raise ValueError(f"unknown norm {distance!r}")
    # N(x) ≉ target: some coordinate leaves the tolerance band
    terms = []
    for o in range(m):
        terms.append(f"y[0][{o}] < {_num(target[o] - tolerance)}")
        terms.append(f"y[0][{o}] > {_num(target[o] + tolerance)}")
    post = [f"Or({', '.join(terms)})"]
    feats = list(features) if features is not None else list(range(n))
    groups = [[j] for j in feats]
    if len(feats) > 1:
        groups.append(feats)
    best, best_d, bps = None, math.inf, []
    for g in groups:
        pre = _box_lines(x0, ["e" if j in g else None for j in range(n)])
        pre += _ball_lines(x0, g, distance)
        t = _script(n, m, pre, post)
        spec = VarSpec("e", float(eps_range[0]), float(eps_range[1]), precision)
        out = find_breakpoints(t, net, SearchSpec((spec,)), verify_fn)
        for b in out:
            bps.append(b)
            end = b.bracket[1] if b.flip[1] == "Falsified" else b.bracket[0]
            r = verify_fn(_concrete(t, end))
            if r.witness is None:
                continue
            point = np.asarray(r.witness[:n], dtype=float)
            if net.piecewise_linear:
                point = _pull_back(net, x0, point, target, tolerance)
            d = norm(point - x0, distance)
            if d < best_d:
                best, best_d = point, d
    if best is None:
        raise NoCounterfactual("no input in range reaches the target")
    return InterpretAnswer("counterfactual", best_d, bps, {"point": best})


def _concrete(template, e):
    from .drlp import concretize
    return concretize(template, "e", e)


def intuitiveness(net, template, spec, verify_fn=None):
    """True when every slice flips at most once (needs a linear inner search)."""
    if isinstance(spec, VarSpec):
        spec = SearchSpec((spec,))
    if spec.variables[-1].method != "linear":
        raise ValueError("intuitiveness needs a linear search; binary search cannot see "
                         "interior flips")
    verify_fn = verify_fn or _default_verify(net)
    out = find_breakpoints(template, net, spec, verify_fn)
    if out.aborted:
        raise UnknownVerdict(f"inconclusive: {out.aborted[0]['reason']}")
    summary = analyze_breakpoints(out)
    return InterpretAnswer("intuitiveness", summary.monotone, list(out), summary.to_json())


def decision_boundary(net, template, spec, verify_fn=None):
    """Boundary points (outer value, inner breakpoint) with hold/not-hold labels per slice."""
    if len(spec.variables) != 2:
        raise ValueError("a decision boundary needs exactly two parameters")
    outer, inner = spec.variables
    if outer.method != "linear":
        outer = VarSpec(outer.name, outer.lower_bound, outer.upper_bound, outer.precision,
                        "linear")
    if inner.method != "binary":
        inner = VarSpec(inner.name, inner.lower_bound, inner.upper_bound, inner.precision,
                        "binary")
    verify_fn = verify_fn or _default_verify(net)
    out = find_breakpoints(template, net, SearchSpec((outer, inner)), verify_fn)
    by_slice = {b.slice[outer.name]: b for b in out}
    from .drlp import concretize

    regions = []
    for a in outer.grid():
        t = concretize(template, outer.name, a)
        if a in by_slice:
            b = by_slice[a]
            regions.append({outer.name: a, "segments": [
                [inner.lower_bound, b.value, _label(b.flip[0])],
                [b.value, inner.upper_bound, _label(b.flip[1])]]})
        elif not any(x["slice"] == {outer.name: a} for x in out.aborted):
            status = verify_fn(concretize(t, inner.name, inner.lower_bound)).status
            regions.append({outer.name: a, "segments": [
                [inner.lower_bound, inner.upper_bound, _label(status)]]})
    points = [(b.slice[outer.name], b.value) for b in out]
    return InterpretAnswer("boundary", points, list(out),
                           {"regions": regions, "aborted": out.aborted,
                            "variables": [outer.name, inner.name]})


def _label(status):
    return "hold" if status == "Proven" else "not-hold"


def boundary_csv(answer):
    a, b = answer.details["variables"]
    lines = [f"{a},{b}"] + [f"{p!r},{q!r}" for p, q in answer.value]
    return "\n".join(lines) + "\n"
