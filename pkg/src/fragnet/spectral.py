"""Graph Laplacians, dense symmetric eigendecomposition, fragility metrics.

The networks here are small and complete, and the bootstrap asks for the
second eigenvalue thousands of times, so everything runs through a full
dense decomposition (LAPACK via scipy.linalg.eigh). A graph counts as
disconnected when lambda2 < DISCONNECT_TOL * lambda_n; floating-point zero
eigenvalues are never exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DomainError
from .network import WeightedGraph

DISCONNECT_TOL = 1e-8


@dataclass
class LaplacianMatrix:
    entries: np.ndarray
    banks: list[str]
    normalized: bool = False

    def validate(self) -> None:
        m = self.entries
        scale = max(1.0, float(np.abs(m).max()) if m.size else 0.0)
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise DomainError("Laplacian is not symmetric")
        off = m - np.diag(np.diag(m))
        if off.max() > 1e-12 * scale:
            raise DomainError("Laplacian has positive off-diagonal entries")
        if not self.normalized:
            d = np.diag(m)
            tol = 1e-9 * np.maximum(np.abs(d), 1.0)
            if np.any(np.abs(m.sum(axis=1)) > tol):
                raise DomainError("Laplacian rows do not sum to zero")


@dataclass
class LaplacianSpectrum:
    """Ascending eigenvalues with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    banks: list[str]
    normalized: bool = False

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def is_connected(self) -> bool:
        lam = self.eigenvalues
        return lam[-1] > 0 and lam[1] >= DISCONNECT_TOL * lam[-1]

    def lambda2(self) -> float:
        """Algebraic connectivity; 0 for a disconnected graph."""
        return float(self.eigenvalues[1]) if self.is_connected() else 0.0

    def zero_multiplicity(self) -> int:
        lam = self.eigenvalues
        if lam[-1] <= 0:
            return len(lam)
        return int(np.sum(lam < DISCONNECT_TOL * lam[-1]))


@dataclass
class FragilityMetrics:
    lambda2: float
    spectral_gap: float
    lambda3: float
    spectral_radius: float
    radius_ratio: float
    effective_resistance: float
    normalized_lambda2: float
    avg_resistance_distance: float
    connected: bool


def laplacian(graph: WeightedGraph) -> LaplacianMatrix:
    """Standard form L = D - A with D the diagonal of row sums."""
    graph.validate()
    entries = -graph.weights.copy()
    np.fill_diagonal(entries, graph.degrees())
    return LaplacianMatrix(entries, list(graph.banks), normalized=False)


def normalized_laplacian(graph: WeightedGraph) -> LaplacianMatrix:
    """Normalized form I - D^{-1/2} A D^{-1/2}; eigenvalues lie in [0, 2]."""
    graph.validate()
    d = graph.degrees()
    if np.any(d <= 0):
        isolated = graph.banks[int(np.argmin(d))]
        raise DomainError(f"isolated bank {isolated} has zero degree")
    s = 1.0 / np.sqrt(d)
    scaled = graph.weights * s[:, None] * s[None, :]
    scaled = (scaled + scaled.T) / 2.0
    entries = np.eye(graph.n) - scaled
    return LaplacianMatrix(entries, list(graph.banks), normalized=True)


def spectrum(lap: LaplacianMatrix) -> LaplacianSpectrum:
    """Full eigendecomposition, ascending, with a reproducible sign convention.

    Each eigenvector's first component of non-negligible magnitude is made
    positive. Degenerate eigenspaces keep whatever orthonormal basis the
    solver returns; callers must compare projectors, not raw columns.
    """
    lap.validate()
    try:
        lam, vec = scipy.linalg.eigh(lap.entries)
    except scipy.linalg.LinAlgError as exc:
        raise DomainError(
            f"eigensolver failed to converge within its iteration budget: {exc}"
        ) from exc
    for k in range(vec.shape[1]):
        col = vec[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]
        if nz.size and col[nz[0]] < 0:
            vec[:, k] = -col
    return LaplacianSpectrum(lam, vec, list(lap.banks), lap.normalized)


def spectrum_of(graph: WeightedGraph) -> LaplacianSpectrum:
    return spectrum(laplacian(graph))


def pseudo_inverse(spec: LaplacianSpectrum) -> np.ndarray:
    """Invert on the span of the non-zero modes, zero on the rest."""
    lam = spec.eigenvalues
    inv = np.zeros_like(lam)
    if lam[-1] > 0:
        nonzero = lam >= DISCONNECT_TOL * lam[-1]
        inv[nonzero] = 1.0 / lam[nonzero]
    v = spec.eigenvectors
    return (v * inv[None, :]) @ v.T


def resistance_distances(spec: LaplacianSpectrum) -> np.ndarray:
    """Pairwise resistance distances r_ij = P_ii + P_jj - 2 P_ij."""
    p = pseudo_inverse(spec)
    d = np.diag(p)
    return d[:, None] + d[None, :] - 2.0 * p


def fragility_metrics(graph: WeightedGraph) -> FragilityMetrics:
    """Every per-network fragility measure from one standard and one
    normalized decomposition.

    Disconnection is a reported state, not an error: lambda2 comes back 0
    with connected=False and the resistance-based fields are infinite.
    """
    spec = spectrum_of(graph)
    lam = spec.eigenvalues
    n = graph.n
    connected = spec.is_connected()
    lambda2 = spec.lambda2()
    lambda_n = spec.lambda_max

    if connected:
        eff = float(np.sum(1.0 / lam[1:]))
        r = resistance_distances(spec)
        iu = np.triu_indices(n, k=1)
        avg_r = float(2.0 * r[iu].sum() / (n * (n - 1)))
        ratio = lambda_n / lambda2
    else:
        eff = math.inf
        avg_r = math.inf
        ratio = math.inf

    if np.all(graph.degrees() > 0):
        nspec = spectrum(normalized_laplacian(graph))
        norm_l2 = nspec.lambda2()
    else:
        norm_l2 = math.nan

    return FragilityMetrics(
        lambda2=lambda2,
        spectral_gap=lambda2,
        lambda3=float(lam[2]) if n >= 3 else math.nan,
        spectral_radius=lambda_n,
        radius_ratio=ratio,
        effective_resistance=eff,
        normalized_lambda2=norm_l2,
        avg_resistance_distance=avg_r,
        connected=connected,
    )


def mixing_time(lambda2: float, epsilon: float) -> float:
    """Time for diffusion to come within factor epsilon of uniform: ln(1/eps)/lambda2."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must be in (0, 1), got {epsilon}")
    if lambda2 <= 0:
        raise DomainError(f"mixing time needs lambda2 > 0, got {lambda2}")
    return -math.log(epsilon) / lambda2


def spectral_centrality(graph: WeightedGraph, bank: str) -> float:
    """Drop in algebraic connectivity when the bank and its edges are removed.

    If the remainder is disconnected its lambda2 counts as 0, so the
    centrality equals the full graph's lambda2.
    """
    if graph.n < 3:
        raise DomainError("spectral centrality needs at least 3 banks")
    i = graph.index(bank)
    keep = [k for k in range(graph.n) if k != i]
    return spectrum_of(graph).lambda2() - spectrum_of(graph.subgraph(keep)).lambda2()


def spectral_centralities(graph: WeightedGraph) -> dict[str, float]:
    """Spectral centrality of every bank; needs n >= 3."""
    if graph.n < 3:
        raise DomainError("spectral centrality needs at least 3 banks")
    base = spectrum_of(graph).lambda2()
    out: dict[str, float] = {}
    for i, bank in enumerate(graph.banks):
        keep = [k for k in range(graph.n) if k != i]
        out[bank] = base - spectrum_of(graph.subgraph(keep)).lambda2()
    return out


def complete_graph_lambda2(n: int, total_exposure: float) -> float:
    """Closed form for a uniform complete graph: 2 E / (n - 1).

    Decreasing n at constant total exposure raises the value, which is the
    consolidation effect the rest of the package measures empirically.
    """
    if n < 2:
        raise DomainError(f"need at least 2 banks, got {n}")
    if total_exposure < 0:
        raise DomainError(f"total exposure must be non-negative, got {total_exposure}")
    return 2.0 * total_exposure / (n - 1)


def quadratic_form(graph: WeightedGraph, x: np.ndarray) -> float:
    """Half the weighted sum of squared endpoint differences, equal to x'Lx."""
    x = np.asarray(x, dtype=float)
    if x.shape != (graph.n,):
        raise DomainError(f"vector length {x.shape} does not match {graph.n} banks")
    diff = x[:, None] - x[None, :]
    return float(0.5 * np.sum(graph.weights * diff * diff))


def spectrum_to_json(
    spec: LaplacianSpectrum, path: str | Path, include_vectors: bool = False
) -> None:
    """Export eigenvalues (and optionally the basis-dependent vectors)."""
    doc: dict = {
        "eigenvalues": [float(v) for v in spec.eigenvalues],
        "bank_order": list(spec.banks),
        "normalized": spec.normalized,
    }
    if include_vectors:
        doc["eigenvectors"] = [[float(x) for x in row] for row in spec.eigenvectors]
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
