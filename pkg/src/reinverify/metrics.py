"""Magnitude-and-gap reward shaping: density, distances, Diff, gap, and traceback."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .breakpoints import SearchSpec, VarSpec, find_breakpoints
from .drlp import DrlpScript, DrlpTemplate, ast
from .verify import verify

KINDS = ("avoid", "reach")


class DegenerateDensity(RuntimeWarning):
    pass


class SearchExhausted(RuntimeError):
    pass


@dataclass
class PropertyBox:
    """Interval form of a property: a state box, an action constraint, and the environment box.

    For ``avoid`` properties the action constraint is the forbidden region:
    the property is violated when the state is in the box and the action is
    in the constraint.  For ``reach`` properties it is the required region.
    """

    state_lower: np.ndarray
    state_upper: np.ndarray
    env_lower: np.ndarray
    env_upper: np.ndarray
    action_lower: Optional[np.ndarray] = None
    action_upper: Optional[np.ndarray] = None
    action_set: Optional[frozenset] = None
    kind: str = "avoid"

    def __post_init__(self):
        for name in ("state_lower", "state_upper", "env_lower", "env_upper"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if self.action_lower is not None:
            self.action_lower = np.atleast_1d(np.asarray(self.action_lower, dtype=float))
            self.action_upper = np.atleast_1d(np.asarray(self.action_upper, dtype=float))
        if self.action_set is not None:
            self.action_set = frozenset(self.action_set)
        if self.kind not in KINDS:
            raise ValueError(f"unknown property kind {self.kind!r}")
        if np.any(self.state_lower > self.state_upper):
            raise ValueError("state_lower exceeds state_upper")
        if np.any(self.env_lower > self.state_lower) or np.any(self.state_upper > self.env_upper):
            raise ValueError("the property box must lie inside the environment box")

    @property
    def n(self):
        return len(self.state_lower)

    def contains(self, s):
        s = np.asarray(s, dtype=float)
        return bool(np.all(s >= self.state_lower) and np.all(s <= self.state_upper))

    def action_in(self, a):
        if self.action_set is not None:
            key = a if np.isscalar(a) else tuple(np.ravel(a))
            return key in self.action_set
        if self.action_lower is None:
            return True
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return bool(np.all(a >= self.action_lower) and np.all(a <= self.action_upper))

    def satisfied(self, s, a):
        """Point-membership test used on training trajectories."""
        if self.kind == "avoid":
            return not (self.contains(s) and self.action_in(a))
        return self.contains(s) and self.action_in(a)


@dataclass
class DensityPair:
    lower: np.ndarray
    upper: np.ndarray
    epsilon: float
    snapshot: str = ""

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.lower < 0) or np.any(self.upper < 0):
            raise ValueError("densities are non-negative")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("densities must be finite")


# -- density ------------------------------------------------------------------

def _segment_kinks(net, base, direction, length):
    """Parameters t in [0, length] where some ReLU along base + t*direction changes phase."""
    ts = np.array([0.0, length])
    for l, layer in enumerate(net.layers[:-1]):
        if layer.activation == "identity":
            continue
        pts = base[None, :] + ts[:, None] * direction[None, :]
        z = pts
        for prev in net.layers[:l]:
            z = _apply(prev, z)
        z = z @ layer.weights.T + layer.bias
        new = []
        for i in range(len(ts) - 1):
            za, zb = z[i], z[i + 1]
            cross = np.flatnonzero(za * zb < 0)
            for j in cross:
                new.append(ts[i] + (ts[i + 1] - ts[i]) * za[j] / (za[j] - zb[j]))
        if new:
            ts = np.unique(np.concatenate([ts, new]))
    return ts


def _apply(layer, z):
    z = z @ layer.weights.T + layer.bias
    if layer.activation == "relu":
        return np.maximum(z, 0.0)
    if layer.activation == "tanh":
        return np.tanh(z)
    return z


def density(net, box, j, side, eps, mode="exact", samples=1000):
    """One-sided output fluctuation at a box bound when feature ``j`` moves by up to ``eps``.

    The lower side starts at the all-lower corner and moves feature j up; the
    upper side starts at the all-upper corner and moves it down.  The distance
    is the L2 norm of the output change.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if side == "lower":
        base, sign = box.state_lower.copy(), 1.0
    elif side == "upper":
        base, sign = box.state_upper.copy(), -1.0
    else:
        raise ValueError("side is 'lower' or 'upper'")
    direction = np.zeros(len(base))
    direction[j] = sign
    if mode == "exact" and net.piecewise_linear:
        # the net is affine between kinks: sum slope * width piece by piece
        ts = _segment_kinks(net, base, direction, eps)
        delta = np.zeros(net.output_dim)
        best = 0.0
        for t0, t1 in zip(ts[:-1], ts[1:]):
            delta = delta + _slope(net, base + (t0 + t1) / 2 * direction, direction) * (t1 - t0)
            best = max(best, float(np.linalg.norm(delta)))
        return best
    ts = np.linspace(0.0, eps, samples)
    pts = base[None, :] + ts[:, None] * direction[None, :]
    y0 = net.forward(base)
    d = np.linalg.norm(net.forward(pts) - y0, axis=1)
    return float(d.max())


def _slope(net, x, direction):
    """Directional derivative of a piecewise-linear net at a point off every kink."""
    a, v = np.asarray(x, dtype=float), np.asarray(direction, dtype=float)
    for layer in net.layers:
        z = layer.weights @ a + layer.bias
        v = layer.weights @ v
        if layer.activation == "relu":
            v = np.where(z > 0, v, 0.0)
            z = np.maximum(z, 0.0)
        a = z
    return v


def densities(net, box, eps, mode="exact", samples=1000, snapshot=""):
    lo = [density(net, box, j, "lower", eps, mode, samples) for j in range(box.n)]
    hi = [density(net, box, j, "upper", eps, mode, samples) for j in range(box.n)]
    return DensityPair(lo, hi, eps, snapshot)


# -- distances ----------------------------------------------------------------

def exact_middle(box, dens, j):
    """Density-weighted middle of feature j, pinned to an environment edge the box shares."""
    lo, hi = box.state_lower[j], box.state_upper[j]
    at_lo = lo == box.env_lower[j]
    at_hi = hi == box.env_upper[j]
    if at_lo and not at_hi:
        return float(box.env_lower[j])
    if at_hi and not at_lo:
        return float(box.env_upper[j])
    rl, ru = float(dens.lower[j]), float(dens.upper[j])
    if rl + ru == 0:
        warnings.warn(f"feature {j}: both densities are zero; using the arithmetic midpoint",
                      DegenerateDensity, stacklevel=2)
        return float((lo + hi) / 2)
    return float((rl * lo + ru * hi) / (rl + ru))


def middles(box, dens):
    return np.array([exact_middle(box, dens, j) for j in range(box.n)])


def dist_1d(lower, upper, middle, v, p1=1.0):
    """Normalized 1-D distance to the bounds: 0 at or outside them, 1 at the middle."""
    if v < lower or v > upper:
        return 0.0
    if upper == lower:
        return 1.0
    if middle <= lower:
        return 1.0 if v == lower else ((upper - v) / (upper - middle)) ** p1
    if middle >= upper:
        return 1.0 if v == upper else ((v - lower) / (middle - lower)) ** p1
    if v <= middle:
        return ((v - lower) / (middle - lower)) ** p1
    return ((upper - v) / (upper - middle)) ** p1


def box_dist_1d(box, middle, j, v, p1=1.0):
    return dist_1d(box.state_lower[j], box.state_upper[j], middle, v, p1)


def dist_nd(box, dens, mids, s, p1=1.0, p2=2.0):
    """Density-weighted l^p2 distance, scaled so the all-middles state scores 1.

    States outside the box score 0.
    """
    s = np.asarray(s, dtype=float)
    if not box.contains(s):
        return 0.0
    d = np.array([box_dist_1d(box, mids[j], j, s[j], p1) for j in range(box.n)])
    rho = np.where(s < mids, dens.lower, dens.upper)
    total = rho.sum()
    if total == 0:
        return float(np.mean(d ** p2) ** (1.0 / p2))
    return float(((rho * d ** p2).sum() / total) ** (1.0 / p2))


def action_distance(box, a, mode="fixed", c=1.0, p1=1.0):
    if mode == "fixed":
        return float(c)
    if mode != "interval":
        raise ValueError(f"unknown action distance mode {mode!r}")
    if box.action_lower is None:
        return float(c)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    mid = (box.action_lower + box.action_upper) / 2
    ds = [dist_1d(lo, hi, m, v, p1)
          for lo, hi, m, v in zip(box.action_lower, box.action_upper, mid, a)]
    return float(np.prod(ds))


def diff(box, dens, mids, s, a, satisfied=None, action_mode="fixed", c=1.0, p1=1.0, p2=2.0):
    """Signed magnitude: negative on violation, positive on satisfaction."""
    if satisfied is None:
        satisfied = box.satisfied(s, a)
    mag = dist_nd(box, dens, mids, s, p1, p2) * action_distance(box, a, action_mode, c, p1)
    return mag if satisfied else -mag


# -- learning-rate coupling and traceback --------------------------------------

def sigmoid(g):
    return 1.0 / (1.0 + math.exp(-g)) if g >= 0 else math.exp(g) / (1.0 + math.exp(g))


def lr_coupled_diff(gap_value, diff_value, lr=sigmoid):
    return lr(gap_value) * diff_value


def traceback(F, kind, lam, mu=0.0):
    """Backward reward adjustment; terms outside the trajectory count as 0."""
    F = [float(f) for f in F]
    T = len(F)
    out = [0.0] * T
    nxt = 0.0
    for t in range(T - 1, -1, -1):
        if kind == "avoid":
            prev = F[t - 1] if t > 0 else 0.0
            out[t] = F[t] - prev / lam + mu * nxt
        elif kind == "reach":
            ahead = F[t + 1] if t + 1 < T else 0.0
            out[t] = lam * ahead - F[t] + mu * nxt
        elif kind == "none":
            out[t] = F[t]
        else:
            raise ValueError(f"unknown traceback kind {kind!r}")
        nxt = out[t]
    return out


# -- trajectories -------------------------------------------------------------

@dataclass
class ShapingConfig:
    p1: float = 1.0
    p2: float = 2.0
    lam: float = 0.99
    mu: float = 0.0
    beta: float = 1.0
    action_mode: str = "fixed"
    action_const: float = 1.0
    lr: Callable[[float], float] = sigmoid

    def __post_init__(self):
        if not (self.p1 > 0 and self.p2 > 0):
            raise ValueError("p1 and p2 must be positive")
        if not 0 <= self.mu < 1:
            raise ValueError("mu must lie in [0, 1)")
        if not 0 < self.lam <= 1:
            raise ValueError("lam must lie in (0, 1]")


@dataclass
class ShapingTerm:
    """One property's contribution: its box, weight, densities, gap and traceback kind."""

    box: PropertyBox
    weight: float = 1.0
    dens: Optional[DensityPair] = None
    gap: float = 0.0
    traceback: Optional[str] = None  # defaults to the box kind; "none" disables it

    def __post_init__(self):
        if not 0 <= self.weight <= 1:
            raise ValueError("weights lie in [0, 1]")
        if self.dens is None:
            ones = np.ones(self.box.n)
            self.dens = DensityPair(ones, ones, 0.0)


@dataclass
class Step:
    s: np.ndarray
    a: object
    r: float


@dataclass
class ShapedTrajectory:
    steps: List[Step]
    F: List[List[float]]  # per step, per property traced value
    shaped: List[float]
    violations: List[int] = field(default_factory=list)
    diffs: List[List[float]] = field(default_factory=list)


def shape_rewards(trajectory, terms, config=None):
    """Add ``beta * sum_i w_i * traced F^i_t`` to every reward."""
    config = config or ShapingConfig()
    if not trajectory:
        raise ValueError("trajectory is empty")
    traced, diffs, violations = [], [], []
    for term in terms:
        mids = middles(term.box, term.dens)
        d, bad = [], 0
        for st in trajectory:
            ok = term.box.satisfied(st.s, st.a)
            bad += not ok
            d.append(diff(term.box, term.dens, mids, st.s, st.a, ok, config.action_mode,
                          config.action_const, config.p1, config.p2))
        F = [lr_coupled_diff(term.gap, x, config.lr) for x in d]
        kind = term.traceback or term.box.kind
        traced.append(traceback(F, kind, config.lam, config.mu))
        diffs.append(d)
        violations.append(bad)
    shaped, per_step = [], []
    for t, st in enumerate(trajectory):
        values = [tr[t] for tr in traced]
        bonus = config.beta * sum(term.weight * v for term, v in zip(terms, values))
        shaped.append(st.r + bonus)
        per_step.append(values)
    return ShapedTrajectory(list(trajectory), per_step, shaped, violations, diffs)


def suggest_beta(rewards, traced_sums):
    """Scale that brings shaping terms to the order of magnitude of the rewards."""
    num = float(np.median(np.abs(rewards))) if len(rewards) else 0.0
    den = float(np.median(np.abs(traced_sums))) if len(traced_sums) else 0.0
    return num / den if den > 0 else 1.0


# -- gap ----------------------------------------------------------------------

@dataclass
class GapResult:
    gap: float
    breakpoint: Optional[float]
    expanded: bool
    interval: tuple
    parameter: str = "z"


def _constant_of(expr):
    if isinstance(expr, ast.Num):
        return float(expr.value)
    if isinstance(expr, ast.ListLit) and len(expr.items) == 1 and isinstance(expr.items[0], ast.Num):
        return float(expr.items[0].value)
    return None


def relax_parameter(script, segment="post", name="z"):
    """Turn the first constant bound in a script segment into the parameter ``name``.

    Returns ``(template, value, direction)`` where moving the parameter in
    ``direction`` (-1 or +1) relaxes the property: lowering a post lower bound
    or raising a pre lower bound.
    """
    root = script.postcondition if segment == "post" else script.precondition
    target = None
    for node in ast.walk(root):
        if not isinstance(node, ast.Comparison):
            continue
        for i, e in enumerate(node.operands):
            c = _constant_of(e)
            if c is None:
                continue
            # a constant on the left of <=/< (or right of >=/>) is a lower bound
            if i + 1 < len(node.operands) and node.ops[i] in ("<=", "<"):
                lower = True
            elif i > 0 and node.ops[i - 1] in (">=", ">"):
                lower = True
            elif i > 0 and node.ops[i - 1] in ("<=", "<") or \
                    i + 1 < len(node.operands) and node.ops[i] in (">=", ">"):
                lower = False
            else:
                continue
            target = (node, i, c, lower)
            break
        if target:
            break
    if target is None:
        raise ValueError(f"no constant bound found in the {segment}condition")
    node, i, c, lower = target
    operands = list(node.operands)
    operands[i] = ast.Name(name)
    new = ast.Comparison(tuple(operands), node.ops)
    swapped = _replace_node(root, node, new)
    if segment == "post":
        s = replace(script, postcondition=swapped)
        direction = -1 if lower else 1
    else:
        s = replace(script, precondition=swapped)
        direction = 1 if lower else -1
    return DrlpTemplate(s, (name,)), c, direction


def _replace_node(root, old, new):
    if root is old:
        return new
    if isinstance(root, ast.Comparison):
        return root
    if isinstance(root, (ast.And, ast.Or)):
        return type(root)(tuple(_replace_node(c, old, new) for c in root.children))
    if isinstance(root, ast.Implies):
        return ast.Implies(_replace_node(root.premise, old, new),
                           _replace_node(root.conclusion, old, new))
    if isinstance(root, ast.ForLoop):
        return replace(root, body=tuple(_replace_node(c, old, new) for c in root.body))
    return root


def gap(template, net, value, direction, width=10.0, precision=1e-2, cap=1e4,
        parameter=None, verify_fn=None, raise_on_cap=False):
    """Distance from the stated parameter to the strictest relaxation the network satisfies.

    The search runs over ``[value - width, value]`` (direction -1) or
    ``[value, value + width]`` (direction +1); with no breakpoint the width
    is quadrupled until it would exceed ``cap``.
    """
    if isinstance(template, DrlpScript):
        template, value, direction = relax_parameter(template)
    if parameter is None:
        (parameter,) = template.free_parameters
    verify_fn = verify_fn or (lambda s: verify(s, net, k_max=1))
    from .drlp import concretize

    here = verify_fn(concretize(template, parameter, value))
    if here.status == "Proven":
        return GapResult(0.0, value, False, (value, value), parameter)
    w = width
    while True:
        lo, hi = (value - w, value) if direction < 0 else (value, value + w)
        spec = SearchSpec((VarSpec(parameter, lo, hi, precision, "binary"),))
        found = find_breakpoints(template, net, spec, verify_fn)
        if found:
            best = min(found, key=lambda b: abs(value - b.value))
            return GapResult(abs(value - best.value), best.value, w != width, (lo, hi), parameter)
        if found.aborted:
            raise SearchExhausted(found.aborted[0]["reason"])
        if w * 4 > cap:
            if raise_on_cap:
                raise SearchExhausted(f"no breakpoint within {cap} of {value}")
            return GapResult(float(cap), None, True, (lo, hi), parameter)
        w *= 4
