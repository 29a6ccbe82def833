"""Dense feedforward policies: loading, evaluation, interval bounds, unrolling."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class FormatError(ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


class Network:
    """Immutable stack of affine layers with elementwise activations."""

    def __init__(self, layers):
        layers = [Layer(np.array(l.weights, dtype=float, copy=True),
                        np.array(l.bias, dtype=float, copy=True).reshape(-1),
                        l.activation.lower()) for l in layers]
        if not layers:
            raise DimensionError("network has no layers")
        for i, l in enumerate(layers):
            if l.weights.ndim != 2:
                raise DimensionError(f"layer {i}: weights must be a matrix")
            if l.bias.shape[0] != l.out_dim:
                raise DimensionError(f"layer {i}: bias has {l.bias.shape[0]} entries, "
                                     f"expected {l.out_dim}")
            if l.activation not in ACTIVATIONS:
                raise DimensionError(f"layer {i}: unknown activation {l.activation!r}")
            if i and layers[i - 1].out_dim != l.in_dim:
                raise DimensionError(f"layer {i}: expects {l.in_dim} inputs but layer {i - 1} "
                                     f"produces {layers[i - 1].out_dim}")
            l.weights.setflags(write=False)
            l.bias.setflags(write=False)
        if layers[-1].activation != "identity":
            raise DimensionError("the final layer must use the identity activation")
        self.layers: Tuple[Layer, ...] = tuple(layers)

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def dims(self):
        return [self.input_dim] + [l.out_dim for l in self.layers]

    @property
    def piecewise_linear(self):
        return all(l.activation != "tanh" for l in self.layers)

    @property
    def relu_count(self):
        return sum(l.out_dim for l in self.layers if l.activation == "relu")

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise DimensionError(f"input has {x.shape[-1]} features, network expects "
                                 f"{self.input_dim}")
        for l in self.layers:
            x = _act(l.activation, x @ l.weights.T + l.bias)
        return x

    __call__ = forward

    def interval_propagate(self, box):
        return interval_propagate(self, box)

    def to_json(self):
        return {"layers": [{"weights": l.weights.tolist(), "bias": l.bias.tolist(),
                            "activation": l.activation} for l in self.layers]}

    def __eq__(self, other):
        if not isinstance(other, Network) or len(self.layers) != len(other.layers):
            return NotImplemented
        return all(a.activation == b.activation and np.array_equal(a.weights, b.weights)
                   and np.array_equal(a.bias, b.bias)
                   for a, b in zip(self.layers, other.layers))

    def __hash__(self):
        return hash(tuple((l.activation, l.weights.tobytes(), l.bias.tobytes())
                          for l in self.layers))

    def __repr__(self):
        acts = ",".join(l.activation for l in self.layers)
        return f"Network(dims={self.dims}, activations=[{acts}])"


def forward(net, x):
    return net.forward(x)


@dataclass(frozen=True)
class IntervalBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError("lower and upper bounds differ in length")
        if np.any(lo > hi):
            raise ValueError("interval box has lower > upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __len__(self):
        return len(self.lower)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def affine_interval(weights, bias, lo, hi):
    """Interval image of ``W x + b`` by splitting weight signs."""
    wp = np.clip(weights, 0, None)
    wn = np.clip(weights, None, 0)
    with np.errstate(invalid="ignore"):
        new_lo = _safe_dot(wp, lo) + _safe_dot(wn, hi) + bias
        new_hi = _safe_dot(wp, hi) + _safe_dot(wn, lo) + bias
    return new_lo, new_hi


def _safe_dot(w, v):
    # 0 * inf must contribute 0, not nan
    out = np.zeros(w.shape[0])
    for j in range(w.shape[1]):
        col = w[:, j]
        nz = col != 0
        if np.any(nz):
            out[nz] += col[nz] * v[j]
    return out


def interval_propagate(net, box):
    if len(box) != net.input_dim:
        raise DimensionError(f"box has {len(box)} features, network expects {net.input_dim}")
    lo, hi = box.lower.copy(), box.upper.copy()
    for l in net.layers:
        lo, hi = affine_interval(l.weights, l.bias, lo, hi)
        lo, hi = _act(l.activation, lo), _act(l.activation, hi)
    return IntervalBox(lo, hi)


# -- file formats -----------------------------------------------------------

def _nnet_numbers(text, line_offsets, line_idx):
    line = text[line_idx].strip().rstrip(",")
    try:
        return [float(v) for v in line.split(",") if v.strip() != ""]
    except ValueError:
        raise FormatError(f"line {line_idx + 1}: expected comma-separated numbers",
                          line_offsets[line_idx]) from None


def parse_nnet(text):
    """Parse the NNet text format.

    Input normalisation (means/ranges) is folded into the first layer and
    output scaling into the last layer; input clipping to [min, max] is not
    applied.
    """
    raw_lines = text.splitlines(keepends=True)
    offsets, pos = [], 0
    for l in raw_lines:
        offsets.append(pos)
        pos += len(l.encode("utf-8"))
    idx = [i for i, l in enumerate(raw_lines) if l.strip() and not l.lstrip().startswith("//")]
    lines = raw_lines

    def numbers(j):
        if j >= len(idx):
            raise FormatError("unexpected end of file", pos)
        return _nnet_numbers(lines, offsets, idx[j])

    head = numbers(0)
    if len(head) < 3:
        raise FormatError("header must list layer count, input size, output size",
                          offsets[idx[0]])
    n_layers, n_in, n_out = int(head[0]), int(head[1]), int(head[2])
    sizes = [int(v) for v in numbers(1)]
    if len(sizes) != n_layers + 1 or sizes[0] != n_in or sizes[-1] != n_out:
        raise FormatError("layer sizes disagree with header", offsets[idx[1]])
    cursor = 2
    # optional symmetric flag and normalisation block
    remaining = len(idx) - cursor
    body_rows = sum(sizes[i + 1] * 2 for i in range(n_layers))
    means = ranges = None
    if remaining >= body_rows + 5:
        cursor += 1
        # input min/max rows are only advisory clipping bounds
        means, ranges = numbers(cursor + 2), numbers(cursor + 3)
        cursor += 4
    layers = []
    for li in range(n_layers):
        rows, cols = sizes[li + 1], sizes[li]
        w = []
        for r in range(rows):
            vals = numbers(cursor)
            if len(vals) != cols:
                raise DimensionError(
                    f"layer {li + 1}: weight row {r} has {len(vals)} columns, expected {cols} "
                    f"(byte offset {offsets[idx[cursor]]})")
            w.append(vals)
            cursor += 1
        b = []
        for r in range(rows):
            vals = numbers(cursor)
            if len(vals) != 1:
                raise FormatError(f"layer {li + 1}: bias line must hold one value",
                                  offsets[idx[cursor]])
            b.append(vals[0])
            cursor += 1
        act = "identity" if li == n_layers - 1 else "relu"
        layers.append(Layer(np.array(w), np.array(b), act))
    if cursor != len(idx):
        raise FormatError("trailing data after last layer", offsets[idx[cursor]])
    if means is not None and ranges is not None:
        layers = _fold_normalisation(layers, means, ranges, n_in)
    return Network(layers)


def _fold_normalisation(layers, means, ranges, n_in):
    mu_in = np.array(means[:n_in], dtype=float)
    r_in = np.array(ranges[:n_in], dtype=float)
    r_in[r_in == 0] = 1.0
    first = layers[0]
    w = first.weights / r_in
    b = first.bias - w @ mu_in
    layers = [Layer(w, b, first.activation)] + layers[1:]
    if len(means) > n_in and len(ranges) > n_in:
        mu_out, r_out = float(means[n_in]), float(ranges[n_in])
        last = layers[-1]
        layers[-1] = Layer(last.weights * r_out, last.bias * r_out + mu_out, last.activation)
    return layers


def parse_json_network(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", exc.pos) from None
    if not isinstance(data, dict) or "layers" not in data:
        raise FormatError("JSON network must be an object with a 'layers' list", 0)
    layers = []
    for i, spec in enumerate(data["layers"]):
        try:
            layers.append(Layer(np.array(spec["weights"], dtype=float),
                                np.array(spec["bias"], dtype=float),
                                spec.get("activation", "relu")))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"layer {i}: {exc}", None) from None
    return Network(layers)


def load_network(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        return parse_json_network(text)
    return parse_nnet(text)


def to_nnet(net):
    """Serialise a ReLU network to NNet text (identity normalisation)."""
    if any(l.activation != "relu" for l in net.layers[:-1]):
        raise ValueError("NNet format only stores ReLU hidden layers")
    sizes = net.dims
    n_in = net.input_dim
    out = ["// written by reinverify",
           f"{len(net.layers)},{n_in},{net.output_dim},{max(sizes)},",
           ",".join(str(s) for s in sizes) + ",",
           "0,",
           ",".join(["-1e30"] * n_in) + ",",
           ",".join(["1e30"] * n_in) + ",",
           ",".join(["0"] * (n_in + 1)) + ",",
           ",".join(["1"] * (n_in + 1)) + ","]
    for l in net.layers:
        for row in l.weights:
            out.append(",".join(repr(float(v)) for v in row) + ",")
        for v in l.bias:
            out.append(repr(float(v)) + ",")
    return "\n".join(out) + "\n"


# -- unrolling ---------------------------------------------------------------

@dataclass(frozen=True)
class UnrolledNetwork:
    """k copies of one network laid out as ``[x_0, y_0, x_1, y_1, ...]``.

    Copies share the base network object; nothing is duplicated.
    """

    base: Network
    depth: int
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    @property
    def n(self):
        return self.base.input_dim

    @property
    def m(self):
        return self.base.output_dim

    @property
    def num_vars(self):
        return self.depth * (self.n + self.m)

    def var_id(self, step, role, feature):
        if not 0 <= step < self.depth:
            raise IndexError(f"step {step} outside depth {self.depth}")
        width = self.n if role == "input" else self.m
        if not 0 <= feature < width:
            raise IndexError(f"feature {feature} outside {role} width {width}")
        base = step * (self.n + self.m)
        return base + feature if role == "input" else base + self.n + feature

    def x_ids(self, step):
        return [self.var_id(step, "input", j) for j in range(self.n)]

    def y_ids(self, step):
        return [self.var_id(step, "output", j) for j in range(self.m)]

    def index_map(self):
        out = {}
        for i in range(self.depth):
            for j in range(self.n):
                out[(i, "input", j)] = self.var_id(i, "input", j)
            for j in range(self.m):
                out[(i, "output", j)] = self.var_id(i, "output", j)
        return out

    def split(self, flat):
        """Split a flat assignment into (x rows, y rows)."""
        flat = np.asarray(flat, dtype=float)
        xs = np.array([flat[self.x_ids(i)] for i in range(self.depth)])
        ys = np.array([flat[self.y_ids(i)] for i in range(self.depth)])
        return xs, ys


def unroll(net, k):
    if k < 1:
        raise ValueError("unroll depth must be >= 1")
    return UnrolledNetwork(net, int(k))
