"""Finite MDPs solved exactly by value iteration; used to check potential-based shaping."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-10
DEFAULT_MARGIN = 1e-6


class AmbiguousTie:
    """Marker for a state whose two best actions are closer than the margin."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "AmbiguousTie"


TIE = AmbiguousTie()


@dataclass
class FiniteMdp:
    P: np.ndarray  # (S, A, S) transition probabilities
    R: np.ndarray  # (S, A, S) rewards
    gamma: float

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ValueError("P must have shape (S, A, S)")
        if self.R.shape != self.P.shape:
            raise ValueError("R must match the shape of P")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if np.any(self.P < 0) or np.any(np.abs(self.P.sum(axis=2) - 1) > 1e-12):
            raise ValueError("transition rows must be probability distributions")

    @property
    def n_states(self):
        return self.P.shape[0]

    @property
    def n_actions(self):
        return self.P.shape[1]

    def to_json(self):
        return json.dumps({"P": self.P.tolist(), "R": self.R.tolist(), "gamma": self.gamma})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.array(d["P"]), np.array(d["R"]), d["gamma"])


def value_iteration(mdp, tol=DEFAULT_TOL, max_iter=1_000_000):
    """Optimal Q to within ``tol`` in sup norm."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    expected_r = (mdp.P * mdp.R).sum(axis=2)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    if mdp.gamma == 0:
        return expected_r
    stop = tol * (1 - mdp.gamma) / mdp.gamma
    for _ in range(max_iter):
        new = expected_r + mdp.gamma * mdp.P @ Q.max(axis=1)
        delta = np.abs(new - Q).max()
        Q = new
        if delta < stop:
            return Q
    raise RuntimeError("value iteration did not converge")


def shape_mdp(mdp, psi):
    """Add ``gamma * psi(s') - psi(s)`` to every reward."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (mdp.n_states,):
        raise ValueError("psi needs one value per state")
    F = mdp.gamma * psi[None, None, :] - psi[:, None, None]
    return FiniteMdp(mdp.P.copy(), mdp.R + F, mdp.gamma)


def greedy_policy(Q, margin=DEFAULT_MARGIN):
    """Argmax action per state, or TIE where the top two values are within ``margin``."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    out = []
    for row in Q:
        order = np.argsort(-row, kind="stable")
        if len(row) > 1 and row[order[0]] - row[order[1]] < margin:
            out.append(TIE)
        else:
            out.append(int(order[0]))
    return out


def random_mdp(rng, n_states, n_actions, gamma):
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(-1.0, 1.0, size=(n_states, n_actions, n_states))
    return FiniteMdp(P, R, gamma)


def policies_agree(p1, p2):
    """True when the policies match on every state neither marks as a tie."""
    return all(a == b for a, b in zip(p1, p2) if a is not TIE and b is not TIE)
