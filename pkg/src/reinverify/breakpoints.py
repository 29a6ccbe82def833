"""Breakpoint search: parameter values where a template's verdict flips."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .drlp import DrlpScript, DrlpTemplate, SemanticError, concretize, expand_iterables
from .verify import verify
from .verify.compile import compiler_for, conj, negate

METHODS = ("linear", "binary", "iterative")
DECIDED = ("Proven", "Falsified")


class EmptySpec(ValueError):
    pass


class UnknownVerdict(RuntimeError):
    pass


@dataclass(frozen=True)
class VarSpec:
    name: str
    lower_bound: float
    upper_bound: float
    precision: float
    method: str = "binary"
    iterative_step: float = 2.0

    def __post_init__(self):
        if self.lower_bound > self.upper_bound:
            raise ValueError(f"{self.name}: lower_bound exceeds upper_bound")
        if not self.precision > 0:
            raise ValueError(f"{self.name}: precision must be positive")
        if self.method not in METHODS:
            raise ValueError(f"{self.name}: unknown method {self.method!r}")
        if self.method == "iterative" and not self.iterative_step > 1:
            raise ValueError(f"{self.name}: iterative_step must exceed 1")

    def grid(self):
        count = int(math.floor((self.upper_bound - self.lower_bound) / self.precision + 1e-9))
        values = [_clean(self.lower_bound + i * self.precision) for i in range(count + 1)]
        if values[-1] < self.upper_bound - 1e-12:
            values.append(float(self.upper_bound))
        return values


@dataclass(frozen=True)
class SearchSpec:
    """Ordered per-variable search settings; the last entry is the inner variable."""

    variables: Tuple[VarSpec, ...]

    def __post_init__(self):
        if not self.variables:
            raise EmptySpec("search spec names no variables")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("search spec names a variable twice")

    @property
    def names(self):
        return [v.name for v in self.variables]

    @classmethod
    def from_json(cls, data):
        """Accept ``{"var": {lower_bound, upper_bound, precise, method}}`` or a list of such dicts."""
        items = data.items() if isinstance(data, dict) else [(d["name"], d) for d in data]
        out = []
        for name, d in items:
            out.append(VarSpec(name, float(d["lower_bound"]), float(d["upper_bound"]),
                               float(d.get("precise", d.get("precision", 0.01))),
                               d.get("method", "binary"), float(d.get("iterative_step", 2.0))))
        return cls(tuple(out))


@dataclass
class Breakpoint:
    concrete_script: DrlpScript
    flip: Tuple[str, str]
    bracket: Tuple[float, float]
    variable: str
    slice: Dict[str, float] = field(default_factory=dict)

    @property
    def value(self):
        return _clean((self.bracket[0] + self.bracket[1]) / 2)

    def to_json(self):
        return {"variable": self.variable, "slice": dict(self.slice),
                "bracket": list(self.bracket), "value": self.value,
                "flip": list(self.flip)}


class SearchOutcome(list):
    """Breakpoints found, plus slices aborted on Unknown and the probe count per slice."""

    def __init__(self, items=(), aborted=(), probes=()):
        super().__init__(items)
        self.aborted = list(aborted)
        self.probes = list(probes)


def _clean(v):
    return float(round(v, 12))


# -- violation-set reuse ------------------------------------------------------

def _atom_set(a, col, v, tol):
    """Closed set of t where the atom holds at the fixed point ``v``."""
    alpha = a.coef[col]
    beta = a.value(v)  # v has 0 in the parameter column
    if a.sense == "eq":
        if abs(alpha) < 1e-15:
            return [(-np.inf, np.inf)] if abs(beta) <= tol else []
        t = -beta / alpha
        return [(t, t)]
    limit = tol if a.sense == "le" else 0.0
    if abs(alpha) < 1e-15:
        ok = beta <= limit if a.sense == "le" else beta < 0
        return [(-np.inf, np.inf)] if ok else []
    t = (limit - beta) / alpha
    return [(-np.inf, t)] if alpha > 0 else [(t, np.inf)]


def _intersect(a, b):
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo <= hi:
                out.append((lo, hi))
    return _normalize(out)


def _normalize(parts):
    parts = sorted(parts)
    out = []
    for lo, hi in parts:
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def _formula_set(f, col, v, tol):
    from .verify.compile import Atom, FOr

    if isinstance(f, Atom):
        return _atom_set(f, col, v, tol)
    if isinstance(f, FOr):
        return _normalize([p for i in f.items for p in _formula_set(i, col, v, tol)])
    acc = [(-np.inf, np.inf)]
    for i in f.items:
        acc = _intersect(acc, _formula_set(i, col, v, tol))
        if not acc:
            break
    return acc


def violation_component(template, var, witness, t0, tol=1e-9):
    """Interval of parameter values around ``t0`` on which ``witness`` stays a counterexample."""
    script = template.script if isinstance(template, DrlpTemplate) else template
    width = script.x_size + script.y_size
    depth = len(witness) // width
    comp = compiler_for(script, depth, symbolic={var: depth * width})
    pre = conj([comp.node(n) for n in script.precondition.children])
    post = conj([comp.node(n) for n in script.postcondition.children])
    formula = conj([pre, negate(post)])
    v = np.concatenate([np.asarray(witness, dtype=float), [0.0]])
    col = depth * width
    for part in _formula_set(formula, col, v, tol):
        if part[0] - 1e-12 <= t0 <= part[1] + 1e-12:
            return part
    return None


# -- search -------------------------------------------------------------------

class _Slice:
    def __init__(self, template, var, spec, net, verify_fn, outer):
        self.template = template
        self.var = var
        self.spec = spec
        self.net = net
        self.verify_fn = verify_fn
        self.outer = outer
        self.cache = {}
        self.probes = 0
        self.reuse = True

    def script_at(self, t):
        return concretize(self.template, self.var, _clean(t))

    def probe(self, t):
        t = _clean(t)
        if t not in self.cache:
            self.probes += 1
            s = self.script_at(t)
            if not isinstance(s, DrlpScript):
                raise SemanticError(f"parameters {s.free_parameters} remain unassigned")
            r = self.verify_fn(s)
            if r.status not in DECIDED:
                raise UnknownVerdict(f"Unknown verdict at {self.var}={t} ({r.note})")
            self.cache[t] = r
        return self.cache[t]

    def breakpoint(self, lo, hi):
        flip = (self.cache[_clean(lo)].status, self.cache[_clean(hi)].status)
        return Breakpoint(self.script_at(lo), flip, (_clean(lo), _clean(hi)), self.var,
                          dict(self.outer))

    def linear(self):
        grid = self.spec.grid()
        out = []
        prev = None
        for t in grid:
            r = self.probe(t)
            if prev is not None and self.cache[_clean(prev)].status != r.status:
                out.append(self.breakpoint(prev, t))
            prev = t
        return out

    def _falsified_jump(self, t, lo, hi, towards_hi):
        """Move a Falsified end of the bracket using the witness found at ``t``."""
        if not self.reuse:
            return None
        r = self.cache[_clean(t)]
        try:
            part = violation_component(self.template, self.var, r.witness, t)
        except (SemanticError, ValueError, IndexError):
            self.reuse = False
            return None
        if part is None:
            return None
        prec = self.spec.precision
        if towards_hi:
            edge = part[1]
            shift = min(0.01 * prec, max(edge - t, 0.0) / 2)
            cand = edge - shift
            if not lo < cand < hi:
                return None
        else:
            edge = part[0]
            shift = min(0.01 * prec, max(t - edge, 0.0) / 2)
            cand = edge + shift
            if not lo < cand < hi:
                return None
        return cand

    def bisect(self, lo, hi):
        """Shrink a bracket whose ends disagree until it is within precision."""
        prec = self.spec.precision
        while hi - lo > prec * (1 + 1e-9):
            lo_status = self.cache[_clean(lo)].status
            mid = (lo + hi) / 2
            if lo_status == "Falsified":
                cand = self._falsified_jump(lo, lo, hi, towards_hi=True)
                if cand is not None and cand > lo:
                    self.cache[_clean(cand)] = self.cache[_clean(lo)]
                    lo = cand
                    if hi - lo <= prec * (1 + 1e-9):
                        break
                    mid = (lo + hi) / 2
            else:
                cand = self._falsified_jump(hi, lo, hi, towards_hi=False)
                if cand is not None and cand < hi:
                    self.cache[_clean(cand)] = self.cache[_clean(hi)]
                    hi = cand
                    if hi - lo <= prec * (1 + 1e-9):
                        break
                    mid = (lo + hi) / 2
            r = self.probe(mid)
            if r.status == lo_status:
                lo = mid
            else:
                hi = mid
        return [self.breakpoint(lo, hi)]

    def binary(self):
        lb, ub = self.spec.lower_bound, self.spec.upper_bound
        if self.probe(lb).status == self.probe(ub).status:
            return []
        return self.bisect(lb, ub)

    def iterative(self):
        lb, ub = self.spec.lower_bound, self.spec.upper_bound
        first = self.probe(lb).status
        d = self.spec.precision
        prev = lb
        while True:
            t = min(lb + d, ub)
            if self.probe(t).status != first:
                return self.bisect(prev, t)
            if t >= ub:
                return []
            prev = t
            d *= self.spec.iterative_step

    def run(self):
        return getattr(self, self.spec.method)()


def _default_verify(net):
    return lambda script: verify(script, net)


def find_breakpoints(template, net, spec, verify_fn=None, jobs=1, reuse=True, on_slice=None):
    """Search every outer slice for verdict flips in the inner (last) variable."""
    if not isinstance(template, DrlpTemplate):
        raise EmptySpec("the script has no free parameters to search")
    if isinstance(spec, dict):
        spec = SearchSpec.from_json(spec)
    templates = [template]
    its = set(template.script.iterables)
    if its - set(spec.names):
        templates = expand_iterables(template)
    free = set(templates[0].free_parameters) if isinstance(templates[0], DrlpTemplate) else set()
    missing = [p for p in free if p not in spec.names]
    if missing:
        raise EmptySpec(f"no search spec for free parameter(s) {sorted(missing)}")
    extra = [p for p in spec.names if p not in free]
    if extra:
        raise EmptySpec(f"search spec names non-free parameter(s) {extra}")
    verify_fn = verify_fn or _default_verify(net)
    *outer, inner = spec.variables

    jobs_list = []
    for t in templates:
        for values in itertools.product(*(o.grid() for o in outer)):
            jobs_list.append((t, dict(zip((o.name for o in outer), values))))

    def work(item):
        t, chosen = item
        for name, value in chosen.items():
            t = concretize(t, name, value)
        sl = _Slice(t, inner.name, inner, net, verify_fn, chosen)
        sl.reuse = reuse
        try:
            found = sl.run()
            aborted = None
        except UnknownVerdict as exc:
            found, aborted = [], {"slice": chosen, "reason": str(exc)}
        if on_slice is not None:
            on_slice(chosen, found, aborted)
        return found, aborted, sl.probes

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(work, jobs_list))
    else:
        results = [work(i) for i in jobs_list]
    out = SearchOutcome()
    for found, aborted, probes in results:
        out.extend(found)
        if aborted is not None:
            out.aborted.append(aborted)
        out.probes.append(probes)
    return out


# -- summaries ----------------------------------------------------------------

@dataclass
class BreaklineSummary:
    variables: Dict[str, List[dict]]
    monotone: bool

    @property
    def extracted(self):
        return {v: [val for s in slices for val in s["values"]]
                for v, slices in self.variables.items()}

    def to_json(self):
        return {"monotone": self.monotone, "variables": self.variables}


def analyze_breakpoints(bps):
    """Group by variable and slice; a search is monotone when no slice flips twice."""
    grouped: Dict[str, Dict[tuple, List[Breakpoint]]] = {}
    for bp in bps:
        key = tuple(sorted(bp.slice.items()))
        grouped.setdefault(bp.variable, {}).setdefault(key, []).append(bp)
    variables = {}
    monotone = True
    for var, slices in grouped.items():
        rows = []
        for key, items in slices.items():
            items.sort(key=lambda b: b.bracket)
            rows.append({"slice": dict(key), "count": len(items),
                         "values": [b.value for b in items],
                         "brackets": [list(b.bracket) for b in items]})
            monotone &= len(items) <= 1
        variables[var] = rows
    return BreaklineSummary(variables, monotone)


def breakpoints_csv(bps, outer_names: Sequence[str] = ()):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(outer_names) or sorted({k for b in bps for k in b.slice})
    w.writerow(names + ["variable", "value", "bracket_lo", "bracket_hi", "from", "to"])
    for b in bps:
        w.writerow([b.slice.get(n, "") for n in names] +
                   [b.variable, b.value, b.bracket[0], b.bracket[1], b.flip[0], b.flip[1]])
    return buf.getvalue()


def breakpoints_json(bps):
    return json.dumps([b.to_json() for b in bps], indent=2)
