"""
F-local resilient aggregation.

Each round an agent scores every neighbor ``l`` by its contribution to the
agent's own cost, ``c_lk = J_k(psi_l) / gamma_lk^4``, drops the ``F``
highest-scoring neighbors, and combines the rest with the usual
relative-variance weights.  ``J_k`` is a moving average of squared
prediction errors over the agent's recent data window.

A crafted message that has captured a victim's weight has a tiny
``gamma``, hence the largest contribution, and is the first to go.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_GAMMA = 1e-12


class EmptyWindow(ValueError):
    pass


@dataclass(frozen=True)
class ResilienceConfig:
    """``F`` is either one bound for every agent or a per-agent sequence."""

    F: int | tuple = 0
    window_n: int = 100

    def __post_init__(self):
        if self.window_n < 1:
            raise ValueError("window_n must be at least 1")
        f = np.atleast_1d(np.asarray(self.F))
        if np.any(f < 0) or not np.issubdtype(f.dtype, np.integer):
            raise ValueError("F must be a non-negative integer (or one per agent)")
        if np.ndim(self.F) > 0:
            object.__setattr__(self, "F", tuple(int(x) for x in f))

    def per_agent(self, n_agents) -> np.ndarray:
        f = np.asarray(self.F, dtype=int)
        if f.ndim == 0:
            return np.full(n_agents, int(f))
        if f.shape[0] != n_agents:
            raise ValueError(f"per-agent F has {f.shape[0]} entries for {n_agents} agents")
        return f.copy()


@dataclass
class CostReport:
    j_cost: dict
    contribution: dict
    removed: list
    degenerate: bool = False


def _window_arrays(window):
    if isinstance(window, tuple) and len(window) == 2:
        D, U = (np.asarray(x, dtype=float) for x in window)
    else:
        window = list(window)
        if not window:
            raise EmptyWindow("cost window holds no observations")
        D = np.array([o.d for o in window], dtype=float)
        U = np.array([o.u for o in window], dtype=float)
    if D.shape[0] == 0:
        raise EmptyWindow("cost window holds no observations")
    return D, U.reshape(D.shape[0], -1)


def estimate_cost(psi_l, window) -> float:
    """Mean squared prediction error of ``psi_l`` over the window.

    ``window`` is a sequence of `Observation` or a ``(D, U)`` pair.
    """
    D, U = _window_arrays(window)
    resid = D - U @ np.asarray(psi_l, dtype=float)
    return float(np.mean(resid**2))


def cost_contribution(j_cost, gamma_sq) -> float:
    return j_cost / max(gamma_sq, EPS_GAMMA) ** 2


def resilient_filter(contributions: dict, F: int, self_id, j_cost=None) -> CostReport:
    """Pick the neighbors to discard this round.

    ``contributions`` covers ``N_k \\ {k}``.  When ``F >= |N_k|`` the
    report is flagged ``degenerate``: the agent keeps only its own estimate.
    Ties go against the smaller agent id.
    """
    others = {l: c for l, c in contributions.items() if l != self_id}
    if F >= len(others) + 1:
        removed = sorted(others)
        return CostReport(dict(j_cost or {}), others, removed, degenerate=True)
    ranked = sorted(others, key=lambda l: (-others[l], l))
    return CostReport(dict(j_cost or {}), others, ranked[:F])


# ------------------------------------------------------ vectorised helpers


def window_stats(D, U):
    """Sufficient statistics of each agent's window (zero rows are inert)."""
    s_dd = np.einsum("kn,kn->k", D, D)
    s_ud = np.einsum("kn,knm->km", D, U)
    s_uu = np.einsum("knm,knp->kmp", U, U)
    return s_dd, s_ud, s_uu


def window_costs(stats, count, msg, dst) -> np.ndarray:
    """``J_dst(msg)`` for every edge, from `window_stats`."""
    s_dd, s_ud, s_uu = stats
    quad = np.einsum("em,emp,ep->e", msg, s_uu[dst], msg)
    j = (s_dd[dst] - 2 * np.einsum("em,em->e", msg, s_ud[dst]) + quad) / count[dst]
    return np.maximum(j, 0.0)


def select_removed(contrib, src, dst, candidate, F) -> np.ndarray:
    """Mask of edges whose sender is among the receiver's ``F[dst]``
    largest contributions (ties: smaller sender id first)."""
    removed = np.zeros(contrib.shape[0], dtype=bool)
    idx = np.flatnonzero(candidate)
    if idx.size == 0:
        return removed
    order = idx[np.lexsort((src[idx], -contrib[idx], dst[idx]))]
    g = dst[order]
    start = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    size = np.diff(np.r_[start, g.shape[0]])
    rank = np.arange(g.shape[0]) - np.repeat(start, size)
    removed[order[rank < F[g]]] = True
    return removed
