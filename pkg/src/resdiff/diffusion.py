"""
Adapt-then-combine diffusion LMS with adaptive relative-variance weights.

The scalar functions (`lms_adapt`, `update_gamma`, `combination_weights`,
`combine`, `prune_links`) operate on one agent and are the readable
reference.  `DiffusionNetwork` runs the same update for every agent at
once over arrays of directed edges ``src -> dst`` (self-loops included),
which is what makes 100-agent, 10 000-round runs take seconds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .attack import AttackPlan, AttackRuntime
from .model import NetworkTopology, Observation, as_state
from .resilient import (EPS_GAMMA, ResilienceConfig, select_removed, window_costs,
                        window_stats)


class AllExcluded(ValueError):
    """Every neighbor was excluded from the combination."""


class DimensionMismatch(ValueError):
    pass


# ------------------------------------------------------- single agent ops


def lms_adapt(w_prev, obs: Observation, mu) -> np.ndarray:
    """One LMS step: ``w + mu u* (d - u w)``."""
    w = as_state(w_prev)
    u = np.asarray(obs.u, dtype=float)
    # same operation order as the vectorised round, so the two agree exactly
    err = obs.d - np.einsum("m,m->", u, w)
    return w + (mu * err) * u


def update_gamma(gamma_sq_prev, psi_l, w_prev, nu) -> float:
    dev = as_state(psi_l) - as_state(w_prev)
    return (1 - nu) * gamma_sq_prev + nu * float(dev @ dev)


def combination_weights(gamma_sq: dict, exclude=()) -> dict:
    """Weights proportional to ``1 / gamma^2`` over the retained neighbors.

    Variances are floored at ``EPS_GAMMA`` so that neighbors with zero
    deviation share the weight instead of dividing by zero.
    """
    kept = {l: g for l, g in gamma_sq.items() if l not in set(exclude)}
    if not kept:
        raise AllExcluded("no neighbor left to combine")
    inv = {l: 1.0 / max(g, EPS_GAMMA) for l, g in kept.items()}
    total = sum(inv.values())
    return {l: v / total for l, v in inv.items()}


def combine(weights: dict, messages: dict) -> np.ndarray:
    vecs = {l: as_state(messages[l]) for l in weights}
    dims = {v.shape[0] for v in vecs.values()}
    if len(dims) != 1:
        raise DimensionMismatch(f"messages have dimensions {sorted(dims)}")
    return sum(a * vecs[l] for l, a in weights.items())


def prune_links(topology: NetworkTopology, weights: dict, threshold=0.01,
                iteration=None, exempt=()) -> list[tuple[int, int]]:
    """Delete links on which both endpoints put weight below ``threshold``.

    ``weights`` maps ``(l, k)`` to ``a_lk`` for this round; a missing entry
    means that side expressed no weight and the link is kept.  Links that
    touch an ``exempt`` agent are never deleted.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    exempt = set(exempt)
    removed = []
    for k, l in topology.edges():
        if k in exempt or l in exempt:
            continue
        a_lk, a_kl = weights.get((l, k)), weights.get((k, l))
        if a_lk is None or a_kl is None:
            continue
        if a_lk < threshold and a_kl < threshold:
            topology.remove_link(k, l, iteration)
            removed.append((k, l))
    return removed


# ---------------------------------------------------------------- network


@dataclass
class AgentState:
    w: np.ndarray
    psi: np.ndarray
    gamma_sq: dict
    data_window: deque
    mu: float
    nu: float


@dataclass
class RoundReport:
    iteration: int
    psi: np.ndarray
    weights: np.ndarray
    removed: np.ndarray
    pruned: list
    weight_sum_error: float
    dominance: np.ndarray | None = None


class DiffusionNetwork:
    """Synchronous diffusion over a (prunable) topology.

    Parameters
    ----------
    topology : NetworkTopology
        Copied; links deleted during the run are recorded on the copy.
    dim : int
        State dimension M.
    mu, nu : float or array
        Step size and forgetting factor, uniform or per agent.
    prune_threshold : float or None
        Links whose weights fall below this on both sides are deleted.
    cooperate : bool
        ``False`` runs noncooperative LMS (no combination step).
    attack : AttackPlan, optional
    resilience : ResilienceConfig, optional
        Enables the F-local filter; ``F=0`` reproduces plain diffusion.
    window_n : int
        Length of the per-agent data window.
    warmup : int
        Rounds ``i < warmup`` run noncooperative LMS while the variance
        trackers already follow the neighbors.  Starting every agent at
        zero and combining at once lets the target nearest the origin
        capture agents across a cluster boundary.
    prune_after : int
        No link is deleted before this round, so that estimates can agree
        again after the warm-up.
    """

    def __init__(self, topology: NetworkTopology, dim: int, mu, nu, *,
                 prune_threshold=0.01, cooperate=True, attack: AttackPlan | None = None,
                 resilience: ResilienceConfig | None = None, window_n=None, warmup=0,
                 prune_after=0):
        self.topology = topology.copy()
        n = self.topology.n_agents
        self.n, self.dim = n, dim
        self.mu = np.broadcast_to(np.asarray(mu, dtype=float), (n,)).copy()
        self.nu = np.broadcast_to(np.asarray(nu, dtype=float), (n,)).copy()
        if np.any(self.mu < 0) or np.any((self.nu <= 0) | (self.nu > 1)):
            raise ValueError("need mu >= 0 and nu in (0, 1]")
        self.prune_threshold = prune_threshold
        self.cooperate = cooperate
        self.warmup = int(warmup)
        self.prune_after = int(prune_after)

        src, dst = [], []
        for k in range(n):
            for l in self.topology.neighborhood(k):
                src.append(l)
                dst.append(k)
        self.src, self.dst = np.array(src, dtype=int), np.array(dst, dtype=int)
        index = {(s, d): e for e, (s, d) in enumerate(zip(src, dst))}
        self.rev = np.array([index[(d, s)] for s, d in zip(src, dst)], dtype=int)
        self.self_edge = self.src == self.dst
        self.alive = np.ones(len(src), dtype=bool)
        self.gamma = np.zeros(len(src))
        self.weights = np.where(self.self_edge, 1.0, 0.0)

        self.w = np.zeros((n, dim))
        self.psi = np.zeros((n, dim))

        self.resilience = resilience
        if window_n is None:
            window_n = resilience.window_n if resilience is not None else 100
        self.window_n = window_n
        self.D = np.zeros((n, window_n))
        self.U = np.zeros((n, window_n, dim))
        self.count = 0
        self._pos = 0
        self.F = resilience.per_agent(n) if resilience is not None else None

        self.attack = None
        self.exempt = np.zeros(n, dtype=bool)
        if attack is not None:
            attack.validate(self.topology)
            self.attack = AttackRuntime(attack, self.src, self.dst, self.mu, dim)
            self.exempt[list(attack.compromised)] = True

    # -- per-agent views ---------------------------------------------------

    def weights_of(self, k) -> dict:
        sel = np.flatnonzero((self.dst == k) & self.alive)
        return {int(self.src[e]): float(self.weights[e]) for e in sel}

    def agent_state(self, k) -> AgentState:
        sel = np.flatnonzero((self.dst == k) & self.alive)
        gamma = {int(self.src[e]): float(self.gamma[e]) for e in sel}
        order = (np.arange(self.count) + self._pos - self.count) % self.window_n
        window = deque((Observation(float(self.D[k, j]), self.U[k, j].copy())
                        for j in order), maxlen=self.window_n)
        return AgentState(self.w[k].copy(), self.psi[k].copy(), gamma, window,
                          float(self.mu[k]), float(self.nu[k]))

    # -- one round ---------------------------------------------------------

    def round(self, i, u, d) -> RoundReport:
        """Run round ``i`` given every agent's regressor ``u`` (N, M) and
        measurement ``d`` (N,).  All agents read the previous estimates;
        the new ones are committed together at the end."""
        src, dst, n = self.src, self.dst, self.n
        w_prev = self.w
        err = d - np.einsum("km,km->k", u, w_prev)
        psi = w_prev + (self.mu * err)[:, None] * u

        self.D[:, self._pos] = d
        self.U[:, self._pos] = u
        self._pos = (self._pos + 1) % self.window_n
        self.count = min(self.count + 1, self.window_n)
        self.psi = psi

        if not self.cooperate:
            self.w = psi
            return RoundReport(i, psi, self.weights, np.zeros_like(self.alive), [], 0.0)

        msg = psi[src]
        dominance = None
        if self.attack is not None and self.attack.active(i):
            self.attack.inject(msg, psi, u, d, self.alive, i)

        alive = self.alive
        if self.F is not None:
            size = np.bincount(dst, weights=alive, minlength=n)
            degenerate = self.F >= size
        else:
            degenerate = np.zeros(n, dtype=bool)

        diff = msg - w_prev[dst]
        dev = np.einsum("em,em->e", diff, diff)
        upd = alive & ~degenerate[dst]
        nu = self.nu[dst]
        self.gamma = np.where(upd, (1 - nu) * self.gamma + nu * dev, self.gamma)

        if i < self.warmup:
            self.w = psi
            return RoundReport(i, psi, self.weights, np.zeros_like(alive), [], 0.0)

        use = alive & ~(degenerate[dst] & ~self.self_edge)
        removed = np.zeros_like(alive)
        floored = np.maximum(self.gamma, EPS_GAMMA)
        if self.F is not None and np.any(self.F > 0):
            cand = alive & ~self.self_edge & ~degenerate[dst]
            costs = window_costs(window_stats(self.D, self.U), np.full(n, self.count),
                                 msg, dst)
            removed = select_removed(costs / floored**2, src, dst, cand, self.F)
            use &= ~removed

        inv = np.where(use, 1.0 / floored, 0.0)
        total = np.bincount(dst, weights=inv, minlength=n)
        a = inv / total[dst]
        self.w = np.stack([np.bincount(dst, weights=a * msg[:, m], minlength=n)
                           for m in range(self.dim)], axis=1)
        self.weights = a
        sum_err = float(np.max(np.abs(np.bincount(dst, weights=a, minlength=n) - 1.0)))

        if self.attack is not None and self.attack.active(i):
            dominance = self.attack.dominance(a)

        pruned = self._prune(i, a, use) if self.prune_threshold and i >= self.prune_after else []
        return RoundReport(i, psi, a, removed, pruned, sum_err, dominance)

    def _prune(self, i, a, use):
        opinion = use & ~self.self_edge & ~self.exempt[self.src] & ~self.exempt[self.dst]
        low = opinion & (a < self.prune_threshold)
        cut = np.flatnonzero(low & low[self.rev] & (self.src < self.dst))
        pruned = []
        for e in cut:
            k, l = int(self.src[e]), int(self.dst[e])
            self.alive[e] = self.alive[self.rev[e]] = False
            self.topology.remove_link(k, l, i)
            pruned.append((k, l))
        return pruned


def diffusion_round(network: DiffusionNetwork, i, u, d) -> RoundReport:
    return network.round(i, u, d)
