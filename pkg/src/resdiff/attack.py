"""
Byzantine deception attacks on adaptive-weight diffusion.

A compromised agent ``a`` sends each victim ``k`` the crafted estimate

    psi_a = w_k + r (x_i - w_k),

a small step from the victim's own previous estimate towards a reference
point ``x_i``.  Because the step is tiny compared with honest neighbors'
deviations, the victim's variance tracker for ``a`` shrinks and ``a``
captures almost all of the combination weight.  The victim's previous
estimate is recovered exactly from its broadcast intermediate estimate and
its (known) streaming data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import NetworkTopology, Observation, as_state

SINGULAR_TOL = 1e-12


class SingularUpdate(ArithmeticError):
    """The LMS update ``I - mu u* u`` is not invertible for this round."""


class ZeroStepSize(ValueError):
    pass


# ------------------------------------------------------------------ goals


@dataclass(frozen=True)
class CircularTrajectory:
    """Offset ``theta(i) = amplitude [cos(2 pi f i), sin(2 pi f i)]``.

    ``delta`` selects how the per-iteration increment is formed:
    ``"analytic"`` uses the derivative ``2 pi f amplitude [-sin, cos]``,
    ``"exact"`` the forward difference ``theta(i+1) - theta(i)``.
    """

    amplitude: float = 0.1
    omega: float = 1 / 2000
    delta: str = "analytic"

    def __post_init__(self):
        if self.delta not in ("analytic", "exact"):
            raise ValueError("delta must be 'analytic' or 'exact'")

    def theta(self, i):
        a = 2 * np.pi * self.omega * np.asarray(i, dtype=float)
        return self.amplitude * np.stack([np.cos(a), np.sin(a)], axis=-1)

    def delta_theta(self, i):
        if self.delta == "exact":
            return self.theta(np.asarray(i, dtype=float) + 1) - self.theta(i)
        a = 2 * np.pi * self.omega * np.asarray(i, dtype=float)
        s = 2 * np.pi * self.omega * self.amplitude
        return s * np.stack([-np.sin(a), np.cos(a)], axis=-1)


@dataclass(frozen=True)
class AttackGoal:
    """State the attacker wants a victim to reach: ``base (+ theta(i))``."""

    base: tuple
    trajectory: CircularTrajectory | None = None

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(as_state(self.base).tolist()))

    @property
    def stationary(self) -> bool:
        return self.trajectory is None

    def state(self, i):
        """Desired victim state ``w^a_{k,i}``; vectorised over ``i``."""
        base = np.array(self.base)
        if self.trajectory is None:
            return np.broadcast_to(base, np.shape(i) + base.shape).copy()
        return base + self.trajectory.theta(i)


@dataclass
class AttackPlan:
    """Who is compromised, whom they attack, and how.

    ``guard`` is ``"fixed"`` (constant step ``r``) or ``"guarded"`` (step
    dropped to zero whenever it is not small relative to the honest
    neighbors' deviations, with margin ``rho``).  ``correction=False``
    drops the ``delta_theta / r`` term from the non-stationary reference;
    it exists to show the tracking lag that term removes.
    """

    compromised: frozenset
    goals: dict = field(default_factory=dict)
    r: float = 0.002
    start_iteration: int = 0
    guard: str = "fixed"
    rho: float = 0.1
    correction: bool = True

    def __post_init__(self):
        self.compromised = frozenset(int(a) for a in self.compromised)
        if not 0 < self.r < 1:
            raise ValueError("attack step size r must lie in (0, 1)")
        if self.guard not in ("fixed", "guarded"):
            raise ValueError("guard must be 'fixed' or 'guarded'")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.start_iteration < 0:
            raise ValueError("start_iteration must be non-negative")
        for a, _ in self.goals:
            if a not in self.compromised:
                raise ValueError(f"goal assigned to non-compromised agent {a}")

    @property
    def victims(self) -> list[int]:
        return sorted({k for _, k in self.goals} - self.compromised)

    def attacker_of(self, victim) -> int:
        """The designated attacker; the other compromised neighbors echo it."""
        return min(a for a, k in self.goals if k == victim)

    def goal_of(self, victim) -> AttackGoal:
        return self.goals[(self.attacker_of(victim), victim)]

    def validate(self, topology: NetworkTopology):
        for a, k in self.goals:
            if not topology.adjacency[a, k]:
                warnings.warn(f"attacker {a} is not linked to victim {k}; "
                              "this attack cannot take effect", stacklevel=2)


# ------------------------------------------------------------- operations


def reconstruct_victim_state(psi, obs: Observation, mu) -> np.ndarray:
    """Recover ``w_{k,i-1}`` from ``psi_{k,i}`` and the round's data.

    Inverts ``psi = w + mu u*(d - u w)`` using
    ``(I - mu u* u)^-1 = I + mu u* u / (1 - mu |u|^2)``.
    """
    psi = as_state(psi)
    u = np.asarray(obs.u, dtype=float)
    denom = 1.0 - mu * (u @ u)
    if abs(denom) < SINGULAR_TOL:
        raise SingularUpdate("1 - mu |u|^2 vanishes; state not recoverable this round")
    z = psi - mu * u * obs.d
    return z + mu * u * (u @ z) / denom


def attack_reference(goal: AttackGoal, r, i, correction=True) -> np.ndarray:
    """Point ``x_i`` the crafted message steps towards.

    For a moving goal the reference leads the trajectory by
    ``delta_theta(i-1) / r`` so that the victim's fixed point sits on
    ``base + theta(i)`` instead of lagging behind it.
    """
    base = np.array(goal.base)
    if goal.trajectory is None:
        return base
    x = base + goal.trajectory.theta(i - 1)
    if correction:
        if r == 0:
            raise ZeroStepSize("non-stationary reference divides by r")
        x = x + goal.trajectory.delta_theta(i - 1) / r
    return x


def craft_message(w_victim_prev, x, r_eff) -> np.ndarray:
    w = as_state(w_victim_prev)
    return w + r_eff * (as_state(x) - w)


def guard_step_size(r, x, w_victim_prev, neighbor_psis, rho=0.1) -> float:
    """Return ``r`` if the perturbation is small next to every honest
    deviation ``|psi_l - w|`` (by factor ``rho``), else 0."""
    if len(neighbor_psis) == 0:
        return r
    w = as_state(w_victim_prev)
    step = np.linalg.norm(r * (as_state(x) - w))
    closest = min(np.linalg.norm(as_state(p) - w) for p in neighbor_psis)
    return r if step <= rho * closest else 0.0


# -------------------------------------------------------------- planning


def greedy_dominating_set(topology: NetworkTopology) -> set[int]:
    """Greedy dominating set: repeatedly take the agent whose closed
    neighborhood covers the most uncovered agents (lowest id on ties)."""
    n = topology.n_agents
    closed = topology.adjacency | np.eye(n, dtype=bool)
    uncovered = np.ones(n, dtype=bool)
    chosen = set()
    while uncovered.any():
        gain = (closed & uncovered).sum(axis=1)
        best = int(np.argmax(gain))  # argmax returns the first maximum
        chosen.add(best)
        uncovered &= ~closed[best]
    return chosen


def plan_network_attack(topology: NetworkTopology, goal_factory, **plan_kw) -> AttackPlan:
    """Compromise a greedy dominating set and attack every normal agent.

    ``goal_factory(victim)`` returns that victim's `AttackGoal`.
    """
    return plan_attack(topology, greedy_dominating_set(topology), goal_factory, **plan_kw)


def plan_attack(topology: NetworkTopology, compromised, goal_factory, **plan_kw) -> AttackPlan:
    """Each compromised agent attacks all of its normal neighbors."""
    compromised = {int(a) for a in compromised}
    goals = {}
    for a in sorted(compromised):
        for k in topology.adjacent(a):
            if k not in compromised:
                goals[(a, k)] = goal_factory(k)
    plan = AttackPlan(frozenset(compromised), goals, **plan_kw)
    plan.validate(topology)
    return plan


def select_separated(topology: NetworkTopology, count, rng, max_tries=1000, accept=None):
    """Pick ``count`` agents with pairwise disjoint closed neighborhoods.

    Every other agent then has at most one of them as a neighbor.
    ``accept`` optionally filters candidate sets.
    """
    a = topology.adjacency
    two_hop = a | (a.astype(np.int32) @ a.astype(np.int32) > 0) | np.eye(a.shape[0], dtype=bool)
    for _ in range(max_tries):
        chosen = []
        for k in rng.permutation(topology.n_agents):
            if topology.degree(k) == 0:
                continue
            if all(not two_hop[k, c] for c in chosen):
                chosen.append(int(k))
                if len(chosen) == count:
                    break
        if len(chosen) == count and (accept is None or accept(chosen)):
            return sorted(chosen)
    raise ValueError(f"could not place {count} separated compromised agents")


# ------------------------------------------------------ vectorised runtime


class AttackRuntime:
    """Per-round message injection for an `AttackPlan`, on edge arrays.

    Edges are directed ``src -> dst`` (``dst`` combines ``src``'s message).
    """

    def __init__(self, plan: AttackPlan, src, dst, mu, dim):
        self.plan = plan
        self.victims = np.array(plan.victims, dtype=int)
        slot = {k: j for j, k in enumerate(self.victims.tolist())}
        comp = np.zeros(len(mu), dtype=bool)
        comp[list(plan.compromised)] = True
        self.compromised_mask = comp
        on = comp[src] & np.isin(dst, self.victims)
        self.edges = np.flatnonzero(on)
        self.edge_slot = np.array([slot[d] for d in dst[self.edges]], dtype=int)
        # honest edges into victims, used by the guard and dominance checks
        into = np.isin(dst, self.victims)
        self.honest_in = np.flatnonzero(into & ~comp[src])
        self.honest_slot = np.array([slot[d] for d in dst[self.honest_in]], dtype=int)
        self.mu = np.asarray(mu)[self.victims]
        goals = [plan.goal_of(int(k)) for k in self.victims]
        self.groups = {}
        for j, g in enumerate(goals):
            self.groups.setdefault(g, []).append(j)
        self.last_rec = np.zeros((len(self.victims), dim))
        self.src, self.dst = src, dst

    def active(self, i) -> bool:
        return len(self.victims) > 0 and i >= self.plan.start_iteration

    def references(self, i) -> np.ndarray:
        x = np.empty_like(self.last_rec)
        for goal, idx in self.groups.items():
            x[idx] = attack_reference(goal, self.plan.r, i, self.plan.correction)
        return x

    def reconstruct(self, psi, u, d):
        v = self.victims
        uv, pv, dv = u[v], psi[v], d[v]
        denom = 1.0 - self.mu * np.einsum("km,km->k", uv, uv)
        z = pv - self.mu[:, None] * uv * dv[:, None]
        ok = np.abs(denom) >= SINGULAR_TOL
        safe = np.where(ok, denom, 1.0)
        rec = z + (self.mu / safe)[:, None] * uv * np.einsum("km,km->k", uv, z)[:, None]
        rec[~ok] = self.last_rec[~ok]
        self.last_rec = rec
        return rec, ok

    def inject(self, msg, psi, u, d, alive, i):
        """Overwrite the attack edges of ``msg`` in place."""
        w_rec, ok = self.reconstruct(psi, u, d)
        x = self.references(i)
        r = np.full(len(self.victims), self.plan.r)
        r[~ok] = 0.0
        if self.plan.guard == "guarded":
            dev = np.linalg.norm(msg[self.honest_in] - w_rec[self.honest_slot], axis=1)
            dev[~alive[self.honest_in]] = np.inf
            closest = np.full(len(self.victims), np.inf)
            np.minimum.at(closest, self.honest_slot, dev)
            step = r * np.linalg.norm(x - w_rec, axis=1)
            r = np.where(step <= self.plan.rho * closest, r, 0.0)
        crafted = w_rec + r[:, None] * (x - w_rec)
        msg[self.edges] = crafted[self.edge_slot]
        return crafted

    def dominance(self, weights) -> np.ndarray:
        """Whether each victim's total weight on attackers beats every
        other single neighbor's weight this round."""
        atk = np.zeros(len(self.victims))
        np.add.at(atk, self.edge_slot, weights[self.edges])
        other = np.zeros(len(self.victims))
        np.maximum.at(other, self.honest_slot, weights[self.honest_in])
        return atk > other
