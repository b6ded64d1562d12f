"""
Domain types shared by the simulator: targets, noise, observations and
the network topology.

Vectors are plain float64 numpy arrays. A regressor ``u`` is a row vector,
so ``u @ w`` is the scalar prediction and ``np.outer(u, u)`` the rank-one
matrix ``u* u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

# substream purposes; see ``substream``
TOPOLOGY_STREAM = 0
ATTACK_STREAM = 1
DATA_STREAM = 2


class TopologyError(ValueError):
    """Raised when a requested topology cannot be generated."""


def as_state(x, dim=None) -> np.ndarray:
    """Convert ``x`` to a finite 1-D float vector, checking its length."""
    v = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected a state of dimension {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("state vector entries must be finite")
    return v


def substream(seed: int, purpose: int, *key: int) -> np.random.Generator:
    """Independent generator for one purpose (and optionally one agent).

    Streams are keyed on ``(purpose, *key)`` so that, e.g., switching the
    attack on or off never shifts the data drawn by any agent.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(purpose, *key))
    return np.random.default_rng(ss)


# ---------------------------------------------------------------- targets


@dataclass(frozen=True)
class StationaryTarget:
    base: tuple

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(as_state(self.base).tolist()))

    @property
    def dim(self) -> int:
        return len(self.base)

    def __call__(self, i) -> np.ndarray:
        return np.array(self.base)

    def batch(self, i) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i))
        return np.broadcast_to(np.array(self.base), (i.shape[0], self.dim)).copy()


@dataclass(frozen=True)
class CircularTarget:
    """Planar target moving on a circle.

    ``omega`` is in cycles per iteration, so the position at iteration ``i``
    is ``center + amplitude * [cos(2 pi omega i + phase), sin(...)]``.
    """

    center: tuple
    amplitude: float
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        c = as_state(self.center)
        if c.shape[0] != 2:
            raise ValueError("circular targets are planar (dimension 2)")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if not np.isfinite(self.omega) or not np.isfinite(self.phase):
            raise ValueError("omega and phase must be finite")
        object.__setattr__(self, "center", tuple(c.tolist()))

    dim = 2

    def __call__(self, i) -> np.ndarray:
        return self.batch(i)[0]

    def batch(self, i) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=float))
        angle = 2 * np.pi * self.omega * i + self.phase
        out = np.empty((i.shape[0], 2))
        out[:, 0] = self.center[0] + self.amplitude * np.cos(angle)
        out[:, 1] = self.center[1] + self.amplitude * np.sin(angle)
        return out


TargetModel = StationaryTarget | CircularTarget


def eval_target(model: TargetModel, i: int) -> np.ndarray:
    """True state of ``model`` at iteration ``i``."""
    return model(i)


def target_from_dict(d: dict) -> TargetModel:
    kind = d.get("kind", "stationary")
    if kind == "stationary":
        return StationaryTarget(tuple(d["base"]))
    if kind == "circular":
        return CircularTarget(tuple(d["center"]), float(d["amplitude"]),
                              float(d["omega"]), float(d.get("phase", 0.0)))
    raise ValueError(f"unknown target kind {kind!r}")


def target_to_dict(model: TargetModel) -> dict:
    if isinstance(model, StationaryTarget):
        return {"kind": "stationary", "base": list(model.base)}
    return {"kind": "circular", "center": list(model.center),
            "amplitude": model.amplitude, "omega": model.omega, "phase": model.phase}


# ---------------------------------------------------------- observations


@dataclass(frozen=True)
class NoiseModel:
    sigma_v_sq: float
    sigma_u_sq: float

    def __post_init__(self):
        if not (self.sigma_v_sq > 0 and self.sigma_u_sq > 0):
            raise ValueError("noise and regressor variances must be positive")


@dataclass(frozen=True)
class Observation:
    d: float
    u: np.ndarray
    iteration: int = 0


def generate_observation(target, noise: NoiseModel, rng: np.random.Generator,
                         iteration: int = 0) -> Observation:
    """Draw ``d = u w + v`` with Gaussian ``u`` and ``v``.

    One call consumes ``M + 1`` standard normals: the regressor first, then
    the noise sample. `DataStream` draws the same sequence in blocks.
    """
    w = as_state(target)
    z = rng.standard_normal(w.shape[0] + 1)
    u = np.sqrt(noise.sigma_u_sq) * z[:-1]
    v = np.sqrt(noise.sigma_v_sq) * z[-1]
    return Observation(float(u @ w + v), u, iteration)


class DataStream:
    """Per-agent observation streams, drawn in blocks for speed.

    Agent ``k`` owns its own generator; values coincide with repeated calls
    to `generate_observation` on that generator.
    """

    block = 512

    def __init__(self, seed, sigma_u_sq, sigma_v_sq, dim):
        self.su = np.sqrt(np.asarray(sigma_u_sq, dtype=float))
        self.sv = np.sqrt(np.asarray(sigma_v_sq, dtype=float))
        self.n = self.su.shape[0]
        self.dim = dim
        self.rngs = [substream(seed, DATA_STREAM, k) for k in range(self.n)]
        self._buf = None
        self._pos = self.block

    def _refill(self):
        self._buf = np.stack([g.standard_normal((self.block, self.dim + 1)) for g in self.rngs])
        self._pos = 0

    def draw(self, targets):
        """Return ``(u, d)`` with shapes ``(N, M)`` and ``(N,)``."""
        if self._pos >= self.block:
            self._refill()
        z = self._buf[:, self._pos]
        self._pos += 1
        u = self.su[:, None] * z[:, :-1]
        d = np.einsum("km,km->k", u, targets) + self.sv * z[:, -1]
        return u, d


# --------------------------------------------------------------- topology


@dataclass
class NetworkTopology:
    """Undirected graph; neighborhoods include the agent itself.

    Links may be deleted but never re-added. ``positions`` is only set for
    geometric graphs.
    """

    adjacency: np.ndarray
    positions: np.ndarray | None = None
    removed: list = field(default_factory=list)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=bool)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        np.fill_diagonal(a, False)
        self.adjacency = a

    @classmethod
    def from_edges(cls, n_agents: int, edges, positions=None) -> NetworkTopology:
        a = np.zeros((n_agents, n_agents), dtype=bool)
        for k, l in edges:
            if k == l:
                continue
            a[k, l] = a[l, k] = True
        return cls(a, positions)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    def adjacent(self, k) -> list[int]:
        return np.flatnonzero(self.adjacency[k]).tolist()

    def neighborhood(self, k) -> list[int]:
        """N_k, including k."""
        return sorted([k, *self.adjacent(k)])

    def degree(self, k=None):
        deg = self.adjacency.sum(axis=1)
        return deg if k is None else int(deg[k])

    def edges(self) -> list[tuple[int, int]]:
        k, l = np.nonzero(np.triu(self.adjacency))
        return list(zip(k.tolist(), l.tolist()))

    def remove_link(self, k, l, iteration=None):
        if k == l or not self.adjacency[k, l]:
            return
        self.adjacency[k, l] = self.adjacency[l, k] = False
        self.removed.append((iteration, min(k, l), max(k, l)))

    def is_connected(self, nodes=None) -> bool:
        a = self.adjacency if nodes is None else self.adjacency[np.ix_(nodes, nodes)]
        if a.shape[0] <= 1:
            return True
        n, _ = connected_components(csr_matrix(a), directed=False)
        return n == 1

    def copy(self) -> NetworkTopology:
        pos = None if self.positions is None else self.positions.copy()
        return NetworkTopology(self.adjacency.copy(), pos, list(self.removed))


def random_geometric(n_agents, radius, rng, max_tries=100, require=None) -> NetworkTopology:
    """Random geometric graph on the unit square, resampled until connected.

    ``require`` is an optional extra predicate on the candidate topology.
    """
    for _ in range(max_tries):
        pos = rng.uniform(0.0, 1.0, size=(n_agents, 2))
        a = squareform(pdist(pos)) <= radius
        topo = NetworkTopology(a, pos)
        if topo.is_connected() and (require is None or require(topo)):
            return topo
    raise TopologyError(
        f"no connected geometric graph with radius {radius} after {max_tries} draws")


def erdos_renyi(n_agents, p, rng, max_tries=100) -> NetworkTopology:
    for _ in range(max_tries):
        upper = np.triu(rng.uniform(size=(n_agents, n_agents)) < p, 1)
        topo = NetworkTopology(upper | upper.T)
        if topo.is_connected():
            return topo
    raise TopologyError(f"no connected G({n_agents}, {p}) after {max_tries} draws")


def dominating_check(topology: NetworkTopology, nodes) -> bool:
    """True iff every agent is in ``nodes`` or adjacent to one of them."""
    nodes = list(nodes)
    covered = np.zeros(topology.n_agents, dtype=bool)
    if nodes:
        covered[nodes] = True
        covered |= topology.adjacency[nodes].any(axis=0)
    return bool(covered.all())
