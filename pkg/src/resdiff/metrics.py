"""
Mean-square deviation (empirical and closed-form) and attack verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass
class MsdSeries:
    per_iteration: np.ndarray
    steady_state: float
    window: int

    @property
    def iterations(self) -> np.ndarray:
        return np.arange(self.per_iteration.shape[0])

    @property
    def db(self) -> np.ndarray:
        """10 log10 of the series; ``-inf`` where the MSD is exactly zero."""
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.per_iteration)

    @property
    def steady_state_db(self) -> float:
        return to_db(self.steady_state)


def to_db(x):
    with np.errstate(divide="ignore"):
        return 10 * np.log10(x)


def default_window(n_iterations) -> int:
    return max(1, n_iterations // 10)


def msd_curve(states, targets, agents=None) -> np.ndarray:
    """Per-iteration mean over agents of ``|w0 - w|^2``.

    ``states`` is ``(T, N, M)`` or ``(R, T, N, M)`` for R runs, which are
    averaged; ``targets`` broadcasts against it.
    """
    states = np.asarray(states, dtype=float)
    err = np.asarray(targets, dtype=float) - states
    if agents is not None:
        err = err[..., list(agents), :]
    sq = np.einsum("...nm,...nm->...n", err, err).mean(axis=-1)
    return sq.mean(axis=0) if states.ndim == 4 else sq


def msd_empirical(states, targets, agents=None, window=None) -> MsdSeries:
    curve = msd_curve(states, targets, agents)
    return steady(curve, window)


def steady(curve, window=None) -> MsdSeries:
    curve = np.asarray(curve, dtype=float)
    window = default_window(curve.shape[0]) if window is None else int(window)
    if not 1 <= window <= curve.shape[0]:
        raise ValueError(f"window {window} does not fit a series of length {curve.shape[0]}")
    return MsdSeries(curve, float(curve[-window:].mean()), window)


# ------------------------------------------------------------ closed forms


class SplitMsd(NamedTuple):
    sub1: float
    sub2: float
    network: float
    original: float

    @property
    def difference(self) -> float:
        return self.network - self.original


def msd_theory(kind, mu, M, sigmas, excluded=None):
    """Small step-size MSD approximations.

    ``kind`` is ``"ncop"`` (noncooperative LMS), ``"diff"`` (diffusion over
    a connected network) or ``"resilient_split"``: every agent discards
    agent ``excluded``, splitting the network into the other ``N-1``
    agents and ``excluded`` alone.  The last returns a `SplitMsd`.
    """
    s = np.asarray(sigmas, dtype=float).reshape(-1)
    n = s.shape[0]
    if n < 1:
        raise ValueError("need at least one noise variance")
    scale = mu * M / 2
    if kind == "ncop":
        return scale * s.mean()
    if n == 1:
        raise ZeroDivisionError(f"{kind} MSD needs at least two agents")
    if kind == "diff":
        return scale * s.mean() / n
    if kind == "resilient_split":
        if excluded is None or not 0 <= excluded < n:
            raise ValueError("resilient_split needs the index of the excluded agent")
        rest = s.sum() - s[excluded]
        return SplitMsd(
            sub1=scale * rest / (n - 1) ** 2,
            sub2=scale * s[excluded],
            network=scale * (rest / ((n - 1) * n) + s[excluded] / n),
            original=scale * s.sum() / n**2,
        )
    raise ValueError(f"unknown MSD kind {kind!r}")


# ---------------------------------------------------------- attack verdict


@dataclass
class AttackVerdict:
    victim: int
    success: bool
    i_c: int | None
    epsilon: float


def settle_index(errors, epsilon):
    """First index from which every later error is below ``epsilon``."""
    errors = np.asarray(errors, dtype=float)
    bad = np.flatnonzero(errors >= epsilon)
    if bad.size == 0:
        return 0
    i_c = int(bad[-1]) + 1
    return i_c if i_c < errors.shape[0] else None


def converged(states, reference, epsilon=0.02, tail=None):
    """``(success, i_c)`` for one agent's ``(T, M)`` estimates against a
    ``(T, M)`` reference; success needs ``tail`` settled iterations."""
    err = np.linalg.norm(np.asarray(states) - np.asarray(reference), axis=-1)
    tail = default_window(err.shape[0]) if tail is None else tail
    i_c = settle_index(err, epsilon)
    ok = i_c is not None and err.shape[0] - i_c >= tail
    return ok, i_c


def attack_success(trace, victim, goal, epsilon=0.02, tail=None) -> AttackVerdict:
    """Did ``victim`` settle within ``epsilon`` of ``goal.state(i)``?"""
    states = trace.states[:, victim]
    ref = goal.state(np.arange(states.shape[0]))
    ok, i_c = converged(states, ref, epsilon, tail)
    return AttackVerdict(int(victim), bool(ok), i_c, epsilon)
