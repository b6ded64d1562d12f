"""
Scenario configuration, presets and the experiment runner.

A `ScenarioConfig` fully determines a run together with its seed: the
topology, per-agent noise levels and compromised agents come from the
topology/attack substreams, each agent's data from its own substream.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .attack import (AttackGoal, AttackPlan, CircularTrajectory, greedy_dominating_set,
                     plan_attack, select_separated)
from .diffusion import DiffusionNetwork
from .metrics import converged, default_window, steady
from .model import (ATTACK_STREAM, TOPOLOGY_STREAM, DataStream, NetworkTopology,
                    TopologyError, erdos_renyi, random_geometric, substream,
                    target_from_dict)
from .resilient import ResilienceConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# ----------------------------------------------------------------- config


@dataclass
class TopologySpec:
    kind: str = "geometric"  # geometric | erdos_renyi | complete | explicit
    radius: float = 0.25
    p: float = 0.1
    edges: list | None = None
    # geometric graphs with diagonal clusters: also require each cluster
    # to be connected on its own
    cluster_connected: bool = True


@dataclass
class TargetSpec:
    assignment: str = "diagonal"  # diagonal | uniform | explicit
    models: list = field(default_factory=lambda: [
        {"kind": "stationary", "base": [0.1, 0.1]},
        {"kind": "stationary", "base": [0.9, 0.9]},
    ])
    explicit: list | None = None


@dataclass
class AttackSpec:
    selection: str = "separated"  # separated | dominating | explicit
    count: int = 4
    nodes: list | None = None
    goal: list = field(default_factory=lambda: [0.5, 0.5])
    trajectory: dict | None = None  # {amplitude, omega, delta}
    r: float = 0.002
    start_iteration: int = 0
    guard: str = "fixed"
    rho: float = 0.1
    correction: bool = True


@dataclass
class ResilienceSpec:
    F: int | list = 1
    window_n: int = 100


@dataclass
class RecordSpec:
    states: bool = True
    weights: bool = False
    topology_events: bool = True
    msd: bool = True


@dataclass
class ScenarioConfig:
    name: str = "custom"
    n_agents: int = 100
    dim: int = 2
    topology: TopologySpec = field(default_factory=TopologySpec)
    targets: TargetSpec = field(default_factory=TargetSpec)
    sigma_u_sq: list = field(default_factory=lambda: [0.8, 1.2])
    sigma_v_sq: list = field(default_factory=lambda: [0.1, 0.2])
    mu: float = 0.01
    nu: float = 0.01
    prune_threshold: float | None = 0.01
    iterations: int = 10_000
    warmup: int = 300
    prune_after: int = 600
    seed: int = 0
    runs: int = 1
    algorithm: str = "diffusion"  # diffusion | noncooperative
    attack: AttackSpec | None = None
    resilience: ResilienceSpec | None = None
    record: RecordSpec = field(default_factory=RecordSpec)

    # -- (de)serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a mapping")
        nested = {"topology": TopologySpec, "targets": TargetSpec, "attack": AttackSpec,
                  "resilience": ResilienceSpec, "record": RecordSpec}
        kw = _pick(cls, data, "")
        for key, sub in nested.items():
            if kw.get(key) is not None:
                if not isinstance(kw[key], dict):
                    raise ConfigError(key, "expected a mapping")
                kw[key] = sub(**_pick(sub, kw[key], key + "."))
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> ScenarioConfig:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"not valid YAML ({exc})") from exc
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path) -> ScenarioConfig:
        return cls.from_yaml(Path(path).read_text())

    def replace(self, **changes) -> ScenarioConfig:
        cfg = copy.deepcopy(self)
        for k, v in changes.items():
            setattr(cfg, k, v)
        cfg.validate()
        return cfg

    # -- validation --------------------------------------------------------

    def validate(self):
        def need(cond, path, msg):
            if not cond:
                raise ConfigError(path, msg)

        need(isinstance(self.n_agents, int) and self.n_agents >= 1, "n_agents", "must be a positive integer")
        need(isinstance(self.dim, int) and self.dim >= 1, "dim", "must be a positive integer")
        need(self.mu > 0, "mu", "must be positive")
        need(0 < self.nu <= 1, "nu", "must lie in (0, 1]")
        need(self.prune_threshold is None or self.prune_threshold > 0,
             "prune_threshold", "must be positive or null")
        need(isinstance(self.iterations, int) and self.iterations >= 0, "iterations", "must be >= 0")
        need(isinstance(self.warmup, int) and self.warmup >= 0, "warmup", "must be >= 0")
        need(isinstance(self.prune_after, int) and self.prune_after >= 0, "prune_after", "must be >= 0")
        need(isinstance(self.runs, int) and self.runs >= 1, "runs", "must be >= 1")
        need(self.algorithm in ("diffusion", "noncooperative"), "algorithm",
             "must be 'diffusion' or 'noncooperative'")
        for name in ("sigma_u_sq", "sigma_v_sq"):
            rng = getattr(self, name)
            need(len(rng) == 2 and 0 < rng[0] <= rng[1], name, "must be a range [lo, hi] with 0 < lo <= hi")

        t = self.topology
        need(t.kind in ("geometric", "erdos_renyi", "complete", "explicit"), "topology.kind",
             "must be geometric, erdos_renyi, complete or explicit")
        if t.kind == "geometric":
            need(t.radius > 0, "topology.radius", "must be positive")
        if t.kind == "erdos_renyi":
            need(0 < t.p <= 1, "topology.p", "must lie in (0, 1]")
        if t.kind == "explicit":
            need(t.edges is not None, "topology.edges", "required for explicit topologies")
            for j, e in enumerate(t.edges):
                need(len(e) == 2 and all(0 <= x < self.n_agents for x in e),
                     f"topology.edges[{j}]", "must be a pair of agent ids")

        tg = self.targets
        need(tg.assignment in ("diagonal", "uniform", "explicit"), "targets.assignment",
             "must be diagonal, uniform or explicit")
        need(len(tg.models) >= 1, "targets.models", "needs at least one target model")
        for j, m in enumerate(tg.models):
            try:
                model = target_from_dict(m)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"targets.models[{j}]", str(exc)) from exc
            need(model.dim == self.dim, f"targets.models[{j}]", f"dimension differs from dim={self.dim}")
        if tg.assignment == "diagonal":
            need(t.kind == "geometric", "targets.assignment", "diagonal split needs a geometric topology")
            need(len(tg.models) == 2, "targets.models", "diagonal split needs exactly two models")
        if tg.assignment == "explicit":
            need(tg.explicit is not None and len(tg.explicit) == self.n_agents,
                 "targets.explicit", "needs one model index per agent")
            need(all(0 <= x < len(tg.models) for x in tg.explicit), "targets.explicit",
                 "model index out of range")

        a = self.attack
        if a is not None:
            need(a.selection in ("separated", "dominating", "explicit"), "attack.selection",
                 "must be separated, dominating or explicit")
            need(0 < a.r < 1, "attack.r", "must lie in (0, 1)")
            need(a.guard in ("fixed", "guarded"), "attack.guard", "must be fixed or guarded")
            need(0 < a.rho < 1, "attack.rho", "must lie in (0, 1)")
            need(len(a.goal) == self.dim, "attack.goal", f"must have {self.dim} entries")
            need(a.start_iteration >= 0, "attack.start_iteration", "must be >= 0")
            if a.selection == "explicit":
                need(a.nodes is not None and all(0 <= x < self.n_agents for x in a.nodes),
                     "attack.nodes", "must list valid agent ids")
            if a.selection == "separated":
                need(a.count >= 1, "attack.count", "must be >= 1")
            if a.trajectory is not None:
                need(self.dim == 2, "attack.trajectory", "circular trajectories are planar")
                try:
                    CircularTrajectory(**a.trajectory)
                except (TypeError, ValueError) as exc:
                    raise ConfigError("attack.trajectory", str(exc)) from exc
        if self.resilience is not None:
            try:
                res = ResilienceConfig(_f_value(self.resilience.F), self.resilience.window_n)
                res.per_agent(self.n_agents)
            except (TypeError, ValueError) as exc:
                raise ConfigError("resilience", str(exc)) from exc


def _f_value(F):
    return tuple(F) if isinstance(F, (list, tuple)) else F


def _pick(cls, data, prefix):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(prefix + sorted(unknown)[0], "unknown field")
    return dict(data)


# ---------------------------------------------------------------- presets


def _presets():
    base = ScenarioConfig(name="stationary-baseline")
    attack = base.replace(name="stationary-attack", attack=AttackSpec())
    circular = TargetSpec(models=[
        {"kind": "circular", "center": [0.1, 0.1], "amplitude": 0.1, "omega": 1 / 2000},
        {"kind": "circular", "center": [0.9, 0.9], "amplitude": 0.1, "omega": 1 / 2000},
    ])
    return {
        "stationary-baseline": base,
        "stationary-attack": attack,
        "nonstationary-baseline": base.replace(name="nonstationary-baseline", targets=circular),
        "nonstationary-attack": attack.replace(
            name="nonstationary-attack", targets=copy.deepcopy(circular),
            attack=AttackSpec(trajectory={"amplitude": 0.1, "omega": 1 / 2000})),
        "resilient": attack.replace(name="resilient", resilience=ResilienceSpec(F=1)),
        "resilience-sweep": attack.replace(name="resilience-sweep", topology=TopologySpec(radius=0.15),
                                           resilience=ResilienceSpec(F=1), runs=5),
        "network-attack": base.replace(name="network-attack",
                                       attack=AttackSpec(selection="dominating")),
        "single-task": ScenarioConfig(
            name="single-task", n_agents=20, topology=TopologySpec(kind="complete"),
            targets=TargetSpec(assignment="uniform", models=[{"kind": "stationary", "base": [0.1, 0.1]}]),
            iterations=5000),
    }


PRESET_NOTES = {
    "stationary-baseline": "N=100, two stationary targets, adaptive-weight diffusion, no attack",
    "stationary-attack": "baseline + 4 separated compromised agents driving neighbors to [0.5, 0.5]",
    "nonstationary-baseline": "N=100, two circular targets (omega=1/2000), no attack",
    "nonstationary-attack": "circular targets; attackers drive neighbors along [0.5,0.5] + theta(i)",
    "resilient": "stationary-attack with the F-local filter, F=1",
    "resilience-sweep": "sparser graph (mean degree about 6) for sweeping F against noncooperative LMS",
    "network-attack": "greedy dominating set compromised; every normal agent attacked",
    "single-task": "N=20, complete graph, one common target (N-fold MSD gain)",
}


def preset_names() -> list[str]:
    return list(_presets())


def preset(name) -> ScenarioConfig:
    table = _presets()
    if name not in table:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(table)}")
    return table[name]


# ------------------------------------------------------------------ build


@dataclass
class Setup:
    """Everything drawn from the topology and attack streams."""

    topology: NetworkTopology
    models: list
    assignment: np.ndarray
    sigma_u_sq: np.ndarray
    sigma_v_sq: np.ndarray
    plan: AttackPlan | None


def _assign(cfg: ScenarioConfig, positions):
    tg = cfg.targets
    if tg.assignment == "uniform":
        return np.zeros(cfg.n_agents, dtype=int)
    if tg.assignment == "explicit":
        return np.asarray(tg.explicit, dtype=int)
    return (positions.sum(axis=1) >= 1.0).astype(int)


def build(cfg: ScenarioConfig, seed=None) -> Setup:
    seed = cfg.seed if seed is None else seed
    trng = substream(seed, TOPOLOGY_STREAM)
    t, n = cfg.topology, cfg.n_agents
    try:
        if t.kind == "geometric":
            require = None
            if cfg.targets.assignment == "diagonal" and t.cluster_connected:
                def require(topo):
                    side = topo.positions.sum(axis=1) >= 1.0
                    return all(topo.is_connected(np.flatnonzero(side == s)) for s in (False, True))
            topo = random_geometric(n, t.radius, trng, require=require)
        elif t.kind == "erdos_renyi":
            topo = erdos_renyi(n, t.p, trng)
        elif t.kind == "complete":
            topo = NetworkTopology(~np.eye(n, dtype=bool))
        else:
            topo = NetworkTopology.from_edges(n, t.edges)
    except TopologyError as exc:
        raise ConfigError("topology", str(exc)) from exc

    models = [target_from_dict(m) for m in cfg.targets.models]
    assignment = _assign(cfg, topo.positions)
    su = trng.uniform(*cfg.sigma_u_sq, size=n)
    sv = trng.uniform(*cfg.sigma_v_sq, size=n)

    plan = None
    a = cfg.attack
    if a is not None:
        traj = CircularTrajectory(**a.trajectory) if a.trajectory else None
        goal = AttackGoal(tuple(a.goal), traj)
        if a.selection == "dominating":
            nodes = greedy_dominating_set(topo)
        elif a.selection == "explicit":
            nodes = a.nodes
        else:
            try:
                nodes = select_separated(topo, a.count, substream(seed, ATTACK_STREAM))
            except ValueError as exc:
                raise ConfigError("attack.count", str(exc)) from exc
        plan = plan_attack(topo, nodes, lambda k: goal, r=a.r, start_iteration=a.start_iteration,
                           guard=a.guard, rho=a.rho, correction=a.correction)
    return Setup(topo, models, assignment, su, sv, plan)


def target_states(models, assignment, iterations) -> np.ndarray:
    """True states ``(T, N, M)`` for iterations ``0..T-1``."""
    i = np.arange(iterations)
    out = np.empty((iterations, assignment.shape[0], models[0].dim))
    for j, m in enumerate(models):
        out[:, assignment == j] = m.batch(i)[:, None, :] if iterations else 0
    return out


# ------------------------------------------------------------------ trace


@dataclass
class SimulationTrace:
    """Result of one run.  ``states[i]`` holds every ``w_{k,i}``; the
    estimates before round 0 are ``initial``."""

    config: ScenarioConfig
    seed: int
    setup: Setup
    initial: np.ndarray
    final: np.ndarray
    states: np.ndarray | None
    msd: np.ndarray | None
    weight_sum_error: np.ndarray
    dominance: np.ndarray | None
    weights: np.ndarray | None
    edges: np.ndarray
    topology_events: list
    final_topology: NetworkTopology

    @property
    def iterations(self) -> int:
        return self.config.iterations

    @property
    def compromised(self) -> list[int]:
        plan = self.setup.plan
        return sorted(plan.compromised) if plan else []

    @property
    def victims(self) -> list[int]:
        plan = self.setup.plan
        return plan.victims if plan else []

    @property
    def normal(self) -> list[int]:
        bad = set(self.compromised)
        return [k for k in range(self.config.n_agents) if k not in bad]

    def targets(self) -> np.ndarray:
        return target_states(self.setup.models, self.setup.assignment, self.iterations)

    def steady_msd(self, window=None) -> float:
        return steady(self.msd, window).steady_state

    def cross_cluster_links(self) -> list[tuple[int, int]]:
        a = self.setup.assignment
        return [(k, l) for k, l in self.final_topology.edges() if a[k] != a[l]]

    def summary(self, epsilon=0.02) -> dict:
        T = self.iterations
        out = {
            "preset": self.config.name,
            "seed": self.seed,
            "iterations": T,
            "n_agents": self.config.n_agents,
            "compromised": self.compromised,
            "victims": self.victims,
            "links_initial": len(self.setup.topology.edges()),
            "links_final": len(self.final_topology.edges()),
            "cross_cluster_links_final": len(self.cross_cluster_links()),
            "max_weight_sum_error": float(self.weight_sum_error.max()) if T else 0.0,
            "final_estimates": self.final.tolist(),
        }
        if self.msd is not None and T:
            out["steady_state_msd"] = self.steady_msd()
            out["steady_state_msd_db"] = float(10 * np.log10(out["steady_state_msd"]))
        if self.states is not None and T:
            truth = self.targets()
            plan = self.setup.plan
            verdicts = {}
            for k in self.normal:
                if plan is not None and k in plan.victims:
                    ref = plan.goal_of(k).state(np.arange(T))
                else:
                    ref = truth[:, k]
                ok, i_c = converged(self.states[:, k], ref, epsilon)
                verdicts[str(k)] = {"target": "attacker" if plan and k in plan.victims else "true",
                                    "success": ok, "i_c": i_c}
            out["convergence"] = verdicts
        return _round_floats(out)

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=1)

    def write(self, out_dir, prefix=""):
        """Write ``summary.json``, ``config.yaml`` and the recorded CSVs."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{prefix}summary.json").write_text(self.summary_json() + "\n")
        (out / f"{prefix}config.yaml").write_text(self.config.to_yaml())
        if self.msd is not None:
            db = 10 * np.log10(np.maximum(self.msd, np.finfo(float).tiny))
            _csv(out / f"{prefix}msd.csv", ["iteration", "msd", "msd_db"],
                 ((i, _g(m), _g(x)) for i, (m, x) in enumerate(zip(self.msd, db))))
        if self.states is not None:
            _csv(out / f"{prefix}states.csv", ["iteration", "agent"] + [f"w{m}" for m in range(self.config.dim)],
                 ((i, k, *map(_g, self.states[i, k]))
                  for i in range(self.states.shape[0]) for k in range(self.states.shape[1])))
        if self.weights is not None:
            src, dst = self.edges
            _csv(out / f"{prefix}weights.csv", ["iteration", "receiver", "sender", "weight"],
                 ((i, int(dst[e]), int(src[e]), _g(self.weights[i, e]))
                  for i in range(self.weights.shape[0]) for e in np.flatnonzero(self.weights[i])))
        if self.config.record.topology_events:
            _csv(out / f"{prefix}topology_events.csv", ["iteration", "agent_a", "agent_b"],
                 self.topology_events)


def _g(x):
    return f"{float(x):.15g}"


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.15g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round_floats(obj.item())
    return obj


def _csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ----------------------------------------------------------------- runner


def run_scenario(cfg: ScenarioConfig, run=0, **overrides) -> SimulationTrace:
    """Run one seeded realisation (seed ``cfg.seed + run``)."""
    if overrides:
        cfg = cfg.replace(**overrides)
    cfg.validate()
    seed = cfg.seed + run
    setup = build(cfg, seed)
    res = None
    if cfg.resilience is not None:
        res = ResilienceConfig(_f_value(cfg.resilience.F), cfg.resilience.window_n)
    net = DiffusionNetwork(setup.topology, cfg.dim, cfg.mu, cfg.nu,
                           prune_threshold=cfg.prune_threshold,
                           cooperate=cfg.algorithm == "diffusion",
                           attack=setup.plan, resilience=res,
                           warmup=cfg.warmup, prune_after=cfg.prune_after)
    stream = DataStream(seed, setup.sigma_u_sq, setup.sigma_v_sq, cfg.dim)
    T, n = cfg.iterations, cfg.n_agents
    rec = cfg.record
    normal = np.ones(n, dtype=bool)
    if setup.plan is not None:
        normal[list(setup.plan.compromised)] = False

    initial = net.w.copy()
    states = np.empty((T, n, cfg.dim)) if rec.states else None
    msd = np.empty(T) if rec.msd else None
    weights = np.empty((T, len(net.src))) if rec.weights else None
    sum_err = np.zeros(T)
    victims = setup.plan.victims if setup.plan is not None else []
    dominance = np.zeros((T, len(victims)), dtype=bool) if victims else None
    events = []

    groups = [(m, np.flatnonzero(setup.assignment == j)) for j, m in enumerate(setup.models)]
    truth = np.empty((n, cfg.dim))
    for i in range(T):
        for m, idx in groups:
            truth[idx] = m(i)
        u, d = stream.draw(truth)
        report = net.round(i, u, d)
        sum_err[i] = report.weight_sum_error
        if states is not None:
            states[i] = net.w
        if msd is not None:
            err = truth[normal] - net.w[normal]
            msd[i] = np.einsum("km,km->", err, err) / err.shape[0]
        if weights is not None:
            weights[i] = report.weights
        if dominance is not None and report.dominance is not None:
            dominance[i] = report.dominance
        if rec.topology_events:
            events.extend((i, k, l) for k, l in report.pruned)

    log.info("%s seed=%d: %d rounds, %d links pruned", cfg.name, seed, T, len(events))
    return SimulationTrace(cfg, seed, setup, initial, net.w.copy(), states, msd, sum_err,
                           dominance, weights, np.stack([net.src, net.dst]), events, net.topology)


def run_many(cfg: ScenarioConfig, **overrides) -> list[SimulationTrace]:
    return [run_scenario(cfg, r, **overrides) for r in range(cfg.runs)]


def mean_steady_msd(traces, window=None) -> float:
    curve = np.mean([t.msd for t in traces], axis=0)
    return steady(curve, window).steady_state


def sweep_F(cfg: ScenarioConfig, F_values, window=None) -> list[dict]:
    """Steady-state MSD of the resilient algorithm for each ``F``.

    The last row, ``F=None``, is noncooperative LMS on the same seeds.
    MSD is averaged over ``cfg.runs`` runs.
    """
    if cfg.attack is None:
        raise ConfigError("attack", "sweep_F needs an attack to be configured")
    window = default_window(cfg.iterations) if window is None else window
    record = RecordSpec(states=False, weights=False, topology_events=False, msd=True)
    rows = []
    for F in F_values:
        traces = run_many(cfg, resilience=ResilienceSpec(F=F, window_n=(cfg.resilience or ResilienceSpec()).window_n),
                          record=record)
        rows.append({"F": F, "msd": mean_steady_msd(traces, window)})
    traces = run_many(cfg, algorithm="noncooperative", resilience=None, record=record)
    rows.append({"F": None, "msd": mean_steady_msd(traces, window)})
    for row in rows:
        row["msd_db"] = float(10 * np.log10(row["msd"]))
    return rows
