"""Reference computations that share no code with the package under test.

Exact output extrema come from enumerating ReLU phase patterns and solving
one LP per pattern with scipy's HiGHS backend; patterns whose prefix is
already infeasible are pruned, which never discards a reachable region.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from reinverify.network import Layer, Network


def relu_net(rng, dims, scale=1.0):
    """Random dense ReLU network with an identity output layer."""
    layers = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        act = "identity" if i == len(dims) - 2 else "relu"
        layers.append(Layer(rng.normal(0, scale, (b, a)), rng.normal(0, 0.5 * scale, b), act))
    return Network(layers)


def plain_forward(layers, x):
    """Layer-by-layer evaluation written out independently of Network.forward."""
    a = np.asarray(x, dtype=float)
    for W, b, act in layers:
        z = W @ a + b
        a = np.maximum(z, 0.0) if act == "relu" else z
    return a


def _layers(net):
    return [(np.asarray(l.weights, float), np.asarray(l.bias, float), l.activation)
            for l in net.layers]


def _lp(c, A_ub, b_ub, A_eq, b_eq, bounds):
    res = linprog(c, A_ub=A_ub or None, b_ub=b_ub or None, A_eq=A_eq or None,
                  b_eq=b_eq or None, bounds=bounds, method="highs")
    return res


def output_extreme(net, lo, hi, c, sense="max"):
    """max (or min) of c . N(x) over the box [lo, hi], with the maximizing input.

    Variables are the inputs followed by one post-activation per hidden
    neuron; every hidden neuron is fixed active or inactive per pattern.
    """
    layers = _layers(net)
    n = len(lo)
    hidden = [W.shape[0] for W, _, act in layers[:-1]]
    total = n + sum(hidden)
    hstart = [n + sum(hidden[:l]) for l in range(len(hidden))]
    sign = -1.0 if sense == "max" else 1.0
    best = [None, None]

    def affine_rows(li):
        """Pre-activation of layer li as rows over the variable vector."""
        W, b, _ = layers[li]
        rows = np.zeros((W.shape[0], total))
        if li == 0:
            rows[:, :n] = W
        else:
            rows[:, hstart[li - 1]:hstart[li - 1] + W.shape[1]] = W
        return rows, b

    def recurse(li, A_ub, b_ub, A_eq, b_eq):
        if li == len(layers) - 1:
            rows, b = affine_rows(li)
            obj = sign * (np.asarray(c) @ rows)
            res = _lp(obj, A_ub, b_ub, A_eq, b_eq, bounds)
            if res.status == 0:
                val = sign * (res.fun + sign * float(np.asarray(c) @ b))
                if best[0] is None or (val > best[0] if sense == "max" else val < best[0]):
                    best[0], best[1] = val, res.x[:n].copy()
            return
        rows, b = affine_rows(li)
        start = hstart[li]
        width = rows.shape[0]

        def go(j, A_ub, b_ub, A_eq, b_eq):
            if j == width:
                recurse(li + 1, A_ub, b_ub, A_eq, b_eq)
                return
            a_row = np.zeros(total)
            a_row[start + j] = 1.0
            # active: a = z, z >= 0; inactive: a = 0, z <= 0
            active = (list(A_ub) + [-rows[j]], list(b_ub) + [b[j]],
                      list(A_eq) + [a_row - rows[j]], list(b_eq) + [b[j]])
            inactive = (list(A_ub) + [rows[j]], list(b_ub) + [-b[j]],
                        list(A_eq) + [a_row], list(b_eq) + [0.0])
            zl, zh = zbounds[li][0][j], zbounds[li][1][j]
            if zl >= 0:
                go(j + 1, *active)
                return
            if zh <= 0:
                go(j + 1, *inactive)
                return
            on = _lp(np.zeros(total), *active, bounds).status == 0
            if on:
                go(j + 1, *active)
            # the parent region is feasible, so when the active half is empty
            # the inactive half cannot be
            if not on or _lp(np.zeros(total), *inactive, bounds).status == 0:
                go(j + 1, *inactive)

        go(0, A_ub, b_ub, A_eq, b_eq)

    # plain interval arithmetic marks neurons whose phase is the same everywhere
    zbounds = []
    al, ah = np.asarray(lo, float), np.asarray(hi, float)
    for W, b, act in layers[:-1]:
        Wp, Wn = np.maximum(W, 0), np.minimum(W, 0)
        zl, zh = Wp @ al + Wn @ ah + b, Wp @ ah + Wn @ al + b
        zbounds.append((zl, zh))
        al, ah = np.maximum(zl, 0), np.maximum(zh, 0)
    bounds = [(float(l), float(h)) for l, h in zip(lo, hi)] + [(None, None)] * sum(hidden)
    recurse(0, [], [], [], [])
    return best[0], best[1]


def output_range(net, lo, hi, j=0):
    m = net.output_dim
    c = np.zeros(m)
    c[j] = 1.0
    return output_extreme(net, lo, hi, c, "min")[0], output_extreme(net, lo, hi, c, "max")[0]


def grid(lo, hi, per_axis):
    axes = [np.linspace(l, h, per_axis) for l, h in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))


def bisect_monotone(pred, lo, hi, tol=1e-7):
    """Smallest t in [lo, hi] with pred(t) true, for pred false-then-true."""
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2
