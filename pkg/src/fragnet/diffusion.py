"""Distress diffusion on a network, with and without forcing, plus the
cascade stress test and a greedy deleveraging heuristic.

Propagation is exact spectral evaluation of the closed-form solution of
dx/dt = -L x (+ f), never numerical integration; a time-stepping solver
exists only in the test suite as an independent oracle.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, InputError
from .network import WeightedGraph
from .spectral import DISCONNECT_TOL, LaplacianSpectrum, spectrum_of


@dataclass
class DistressState:
    """Per-bank distress levels at an absolute time."""

    values: np.ndarray
    time: float = 0.0


@dataclass
class ForcingSpec:
    """Constant forcing vector switched on at an absolute onset time."""

    vector: np.ndarray
    onset: float = 0.0

    def validate(self, n: int) -> None:
        v = np.asarray(self.vector, dtype=float)
        if v.shape != (n,):
            raise DomainError(f"forcing length {v.shape} does not match {n} banks")
        if not np.all(np.isfinite(v)):
            raise DomainError("forcing vector has non-finite entries")


@dataclass
class CascadeResult:
    failed: list[tuple[int, str]]
    total_failures: int
    pre_lambda2: float
    post_lambda2: float
    fragility_change: float
    rounds: int
    stabilization_time: float
    losses: dict[str, float]
    # (time, {bank: distress}) at every window end, live banks only
    history: list[tuple[float, dict[str, float]]] = field(default_factory=list)


def _propagate(spec: LaplacianSpectrum, x: np.ndarray, f: np.ndarray | None, dt: float) -> np.ndarray:
    """Advance the closed-form solution by dt in the eigenbasis.

    Zero modes keep their state and accumulate their forcing component
    linearly; every other mode decays at its own rate.
    """
    lam = spec.eigenvalues
    v = spec.eigenvectors
    y = v.T @ x
    decay = np.exp(-lam * dt)
    out = y * decay
    if f is not None:
        fhat = v.T @ f
        tol = DISCONNECT_TOL * max(lam[-1], 1.0)
        gain = np.where(lam > tol, -np.expm1(-lam * dt) / np.where(lam > tol, lam, 1.0), dt)
        out = out + fhat * gain
    return v @ out


def evolve(graph: WeightedGraph, x0: DistressState, t: float) -> DistressState:
    """Homogeneous diffusion for a duration t from the given state.

    Total distress is conserved; each eigenmode decays independently at
    its eigenvalue's rate, so the result is exact up to the decomposition.
    """
    if t < 0:
        raise DomainError(f"duration must be non-negative, got {t}")
    x = np.asarray(x0.values, dtype=float)
    if x.shape != (graph.n,):
        raise DomainError(f"state length {x.shape} does not match {graph.n} banks")
    values = _propagate(spectrum_of(graph), x, None, t)
    return DistressState(values, x0.time + t)


def evolve_forced(
    graph: WeightedGraph, x0: DistressState, forcing: ForcingSpec, t: float
) -> DistressState:
    """State at absolute time t under forcing that switches on at its onset.

    Before the onset the dynamics are homogeneous. From the onset onward the
    solution adds the forced response; the component of f along the constant
    vector cannot diffuse away and grows linearly in elapsed time.
    """
    x = np.asarray(x0.values, dtype=float)
    if x.shape != (graph.n,):
        raise DomainError(f"state length {x.shape} does not match {graph.n} banks")
    if t < x0.time:
        raise DomainError(f"target time {t} precedes state time {x0.time}")
    forcing.validate(graph.n)
    spec = spectrum_of(graph)
    f = np.asarray(forcing.vector, dtype=float)

    free_until = min(max(forcing.onset, x0.time), t)
    values = x
    if free_until > x0.time:
        values = _propagate(spec, values, None, free_until - x0.time)
    if t > free_until:
        values = _propagate(spec, values, f, t - free_until)
    return DistressState(values, t)


def ate_trajectory(ate_infinity: float, lambda2: float, t_grid) -> list[float]:
    """Saturating treatment-effect path ATE_inf * (1 - exp(-lambda2 t))."""
    if lambda2 <= 0:
        raise DomainError(f"lambda2 must be positive, got {lambda2}")
    out = []
    for t in t_grid:
        if t < 0:
            raise DomainError(f"negative time {t}")
        out.append(ate_infinity * -math.expm1(-lambda2 * t))
    return out


def amplification_bound(lambda2_pre: float, lambda2_post: float, alpha: float) -> float:
    """Lower bound 1 + alpha (lambda2_post / lambda2_pre - 1) for the
    persistent-to-immediate effect ratio after a structural change."""
    if lambda2_pre <= 0 or lambda2_post <= 0:
        raise DomainError("both lambda2 values must be positive")
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return 1.0 + alpha * (lambda2_post / lambda2_pre - 1.0)


def cascade_stress_test(
    graph: WeightedGraph,
    capitals: dict[str, float],
    shock: ForcingSpec,
    horizon: float,
    dt: float,
) -> CascadeResult:
    """Forced diffusion with endogenous simultaneous failures.

    The live subnetwork evolves in windows of length dt; at each window end
    every live bank whose distress has reached its capital fails, its
    remaining distress is logged as a loss and removed, and the operator is
    rebuilt on the survivors. Failure checks happen only at window ends.
    """
    graph.validate()
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if horizon < dt:
        raise DomainError(f"horizon {horizon} is shorter than one window {dt}")
    missing = [b for b in graph.banks if b not in capitals]
    if missing:
        raise DomainError(f"capitals missing for banks: {', '.join(missing)}")
    cap = np.array([float(capitals[b]) for b in graph.banks])
    if np.any(cap <= 0):
        raise DomainError("all capitals must be positive")
    shock.validate(graph.n)

    pre_lambda2 = spectrum_of(graph).lambda2()
    live = list(range(graph.n))
    sub = graph
    spec = spectrum_of(sub)
    x = np.zeros(len(live))
    f_full = np.asarray(shock.vector, dtype=float)

    failed: list[tuple[int, str]] = []
    losses: dict[str, float] = {}
    history: list[tuple[float, dict[str, float]]] = [(0.0, {graph.banks[i]: 0.0 for i in live})]
    rounds = 0
    last_failure_time = 0.0

    n_windows = math.ceil(horizon / dt - 1e-12)
    t_prev = 0.0
    for k in range(1, n_windows + 1):
        t_end = min(k * dt, horizon)
        f = f_full[live]
        free_until = min(max(shock.onset, t_prev), t_end)
        if free_until > t_prev:
            x = _propagate(spec, x, None, free_until - t_prev)
        if t_end > free_until:
            x = _propagate(spec, x, f, t_end - free_until)
        t_prev = t_end

        hit = [i for i, g in enumerate(live) if x[i] >= cap[g]]
        history.append((t_end, {graph.banks[g]: float(x[i]) for i, g in enumerate(live)}))
        if hit:
            rounds += 1
            last_failure_time = t_end
            for i in hit:
                bank = graph.banks[live[i]]
                failed.append((k, bank))
                losses[bank] = float(x[i])
            keep = [i for i in range(len(live)) if i not in set(hit)]
            live = [live[i] for i in keep]
            x = x[keep]
            if not live:
                break
            sub = graph.subgraph(live)
            spec = spectrum_of(sub)

    if len(live) >= 2:
        post_lambda2 = spectrum_of(graph.subgraph(live)).lambda2()
    else:
        post_lambda2 = 0.0

    return CascadeResult(
        failed=failed,
        total_failures=len(failed),
        pre_lambda2=pre_lambda2,
        post_lambda2=post_lambda2,
        fragility_change=post_lambda2 - pre_lambda2,
        rounds=rounds,
        stabilization_time=last_failure_time,
        losses=losses,
        history=history,
    )


def greedy_deleverage(
    graph: WeightedGraph, targets: dict[str, float], step: float | None = None
) -> WeightedGraph:
    """Cut exposures to meet per-bank deleveraging targets while keeping
    the algebraic connectivity as low as the greedy search can.

    One move reduces a single edge by up to ``step``, chosen as the move
    with the lowest resulting lambda2 among banks still owing more than a
    step; ties go to the lexicographically first (bank, counterparty) pair.
    A cut hits both endpoints' row sums, so a bank can be overshot by at
    most one step. The result is compared against a proportional-cut
    baseline and a warning is emitted if greedy ends up more fragile.
    """
    graph.validate()
    n = graph.n
    d = graph.degrees()
    target = np.zeros(n)
    for bank, amount in targets.items():
        if amount < 0:
            raise DomainError(f"negative target for {bank}")
        target[graph.index(bank)] = float(amount)
    slack = 1e-9 * np.maximum(d, 1.0)
    if np.any(target > d + slack):
        bad = graph.banks[int(np.argmax(target - d))]
        raise DomainError(f"infeasible target: {bad} must cut more than it holds")
    positive = target[target > 0]
    if positive.size == 0:
        return WeightedGraph(list(graph.banks), graph.weights.copy(), graph.year)

    if step is None:
        step = 0.01 * float(positive.max())
    else:
        if step <= 0:
            raise DomainError(f"step must be positive, got {step}")
        if step > positive.min() * (1 + 1e-12):
            raise DomainError(
                f"step {step} exceeds the smallest positive target {positive.min()}"
            )

    w = graph.weights.copy()
    remaining = target.copy()
    guard = step * (1 - 1e-9)

    while True:
        active = np.nonzero(remaining >= guard)[0]
        if active.size == 0:
            break
        best = None
        best_lambda = math.inf
        for i in active:
            for j in range(n):
                if j == i or w[i, j] <= 0:
                    continue
                cut = min(step, w[i, j])
                # never push a counterparty's overshoot beyond one step
                if remaining[j] - cut < -step * (1 + 1e-9):
                    continue
                w[i, j] -= cut
                w[j, i] -= cut
                lam2 = spectrum_of(WeightedGraph(graph.banks, w, graph.year)).lambda2()
                w[i, j] += cut
                w[j, i] += cut
                if lam2 < best_lambda * (1 - 1e-12):
                    best_lambda = lam2
                    best = (int(i), int(j), cut)
        if best is None:
            owing = graph.banks[int(active[0])]
            raise DomainError(f"infeasible target: no admissible cut left for {owing}")
        i, j, cut = best
        w[i, j] -= cut
        w[j, i] -= cut
        remaining[i] -= cut
        remaining[j] -= cut

    result = WeightedGraph(list(graph.banks), w, graph.year)
    baseline = _proportional_cut(graph, target)
    lam_out = spectrum_of(result).lambda2()
    lam_base = spectrum_of(baseline).lambda2()
    if lam_out > lam_base * (1 + 1e-9):
        warnings.warn(
            f"greedy deleveraging ended above the proportional baseline "
            f"({lam_out:.6g} > {lam_base:.6g})",
            stacklevel=2,
        )
    return result


def _proportional_cut(graph: WeightedGraph, target: np.ndarray) -> WeightedGraph:
    """Benchmark: each bank trims its edges pro rata; shared edges take the
    average of both endpoints' trim rates."""
    d = graph.degrees()
    rate = np.where(d > 0, target / np.maximum(d, 1e-300), 0.0)
    trim = (rate[:, None] + rate[None, :]) / 2.0
    w = graph.weights * np.clip(1.0 - trim, 0.0, 1.0)
    np.fill_diagonal(w, 0.0)
    w = (w + w.T) / 2.0
    return WeightedGraph(list(graph.banks), w, graph.year)


def load_scenario(path: str | Path, graph: WeightedGraph) -> tuple[ForcingSpec, dict[str, float], float, float]:
    """Parse a scenario JSON: shock map, onset, horizon, dt, capitals map."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("shock", "horizon", "dt", "capitals"):
        if key not in doc:
            raise InputError(f"{path}: missing scenario field {key!r}")
    known = set(graph.banks)
    for section in ("shock", "capitals"):
        unknown = set(doc[section]) - known
        if unknown:
            raise InputError(
                f"{path}: {section} names banks not in the network: {', '.join(sorted(unknown))}"
            )
    uncovered = known - set(doc["capitals"])
    if uncovered:
        raise InputError(
            f"{path}: capitals missing for banks: {', '.join(sorted(uncovered))}"
        )
    vector = np.array([float(doc["shock"].get(b, 0.0)) for b in graph.banks])
    forcing = ForcingSpec(vector, onset=float(doc.get("onset", 0.0)))
    capitals = {b: float(v) for b, v in doc["capitals"].items()}
    return forcing, capitals, float(doc["horizon"]), float(doc["dt"])


def cascade_to_json(result: CascadeResult, path: str | Path) -> None:
    doc = {
        "failed": [{"round": r, "bank": b} for r, b in result.failed],
        "total_failures": result.total_failures,
        "pre_lambda2": result.pre_lambda2,
        "post_lambda2": result.post_lambda2,
        "fragility_change": result.fragility_change,
        "rounds": result.rounds,
        "stabilization_time": result.stabilization_time,
        "losses": result.losses,
        "history": [
            {"time": t, "distress": values} for t, values in result.history
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
