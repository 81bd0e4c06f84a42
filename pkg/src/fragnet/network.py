"""Reconstruct symmetric exposure networks from one panel year.

A bank's exposure to country c is split among the sample banks of that
country, equally or in proportion to bank size or portfolio, then the
directed estimate is symmetrized by pairwise averaging. A bank's exposure
to its own country is split among the *other* banks there; if it is the
only bank of its country that exposure cannot be placed and is dropped
with a warning. Self-loops never occur.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, InputError
from .panel import BankRecord, ExposurePanel, _fmt

METHODS = ("equal", "size_weighted", "exposure_weighted")


@dataclass
class YearArrays:
    """Dense array view of one panel year, the fast path for resampling.

    E has one column per home country present in the year; exposure to
    countries with no sample bank is accumulated in external_dropped.
    """

    leis: list[str]
    countries: list[str]
    home: np.ndarray
    E: np.ndarray
    assets: np.ndarray
    portfolios: np.ndarray
    external_dropped: np.ndarray


@dataclass
class DirectedExposureMatrix:
    banks: list[str]
    entries: np.ndarray
    # exposure that had no eligible counterparty, per allocating bank
    unallocated: np.ndarray

    def total(self) -> float:
        return float(self.entries.sum())


@dataclass
class WeightedGraph:
    """Symmetric non-negative weight matrix over an ordered bank list."""

    banks: list[str]
    weights: np.ndarray
    year: int = 0

    @property
    def n(self) -> int:
        return len(self.banks)

    def degrees(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def total_weight(self) -> float:
        return float(self.weights.sum() / 2.0)

    def index(self, bank: str) -> int:
        try:
            return self.banks.index(bank)
        except ValueError as exc:
            raise DomainError(f"unknown bank {bank!r}") from exc

    def subgraph(self, keep: list[int]) -> "WeightedGraph":
        keep = list(keep)
        sub = self.weights[np.ix_(keep, keep)].copy()
        return WeightedGraph([self.banks[i] for i in keep], sub, self.year)

    def validate(self) -> None:
        w = self.weights
        if w.shape != (self.n, self.n):
            raise DomainError("weight matrix shape does not match bank list")
        if not np.array_equal(w, w.T):
            raise DomainError("weight matrix is not exactly symmetric")
        if np.any(np.diag(w) != 0.0):
            raise DomainError("weight matrix has non-zero diagonal")
        if np.any(w < 0.0):
            raise DomainError("negative edge weight")


@dataclass
class NetworkStats:
    n_nodes: int
    n_edges: int
    density: float
    total_weight: float
    mean_weight: float
    sd_weight: float
    min_weight: float
    max_weight: float
    degrees: np.ndarray
    mean_degree: float
    sd_degree: float


@dataclass
class ValidationReport:
    ok: bool
    total_directed: float
    total_graph: float
    failures: list[str]


def year_arrays(records: list[BankRecord], warn: bool = True) -> YearArrays:
    """Flatten one year's records into aligned numpy arrays."""
    if len(records) < 2:
        raise DomainError("a network needs at least 2 banks")
    leis = [r.lei for r in records]
    countries = sorted({r.country for r in records})
    cindex = {c: k for k, c in enumerate(countries)}
    n, m = len(records), len(countries)
    home = np.array([cindex[r.country] for r in records], dtype=np.intp)
    E = np.zeros((n, m))
    external = np.zeros(n)
    external_codes = set()
    for i, rec in enumerate(records):
        for code, amount in rec.exposures.items():
            k = cindex.get(code)
            if k is None:
                external[i] += amount
                if amount > 0:
                    external_codes.add(code)
            else:
                E[i, k] = amount
    if warn and external_codes:
        warnings.warn(
            "exposure to countries with no sample bank dropped: "
            + ", ".join(sorted(external_codes)),
            stacklevel=3,
        )
    assets = np.array([r.total_assets for r in records], dtype=float)
    portfolios = E.sum(axis=1) + external
    return YearArrays(leis, countries, home, E, assets, portfolios, external)


def _allocation_basis(arrays: YearArrays, method: str, idx: np.ndarray) -> np.ndarray:
    if method == "equal":
        return np.ones(len(idx))
    if method == "size_weighted":
        basis = arrays.assets[idx]
        if np.any(basis <= 0):
            bad = arrays.leis[int(idx[int(np.argmin(basis))])]
            raise DomainError(
                f"size_weighted allocation needs positive total_assets, bank {bad} has none"
            )
        return basis
    if method == "exposure_weighted":
        basis = arrays.portfolios[idx]
        if np.any(basis <= 0):
            bad = arrays.leis[int(idx[int(np.argmin(basis))])]
            raise DomainError(
                f"exposure_weighted allocation needs a positive portfolio, bank {bad} has none"
            )
        return basis
    raise InputError(f"unknown allocation method {method!r}, expected one of {METHODS}")


def allocate_arrays(
    arrays: YearArrays, method: str = "equal", idx: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Directed allocation on the array view.

    Parameters
    ----------
    arrays : YearArrays
    method : str
        One of ``equal``, ``size_weighted``, ``exposure_weighted``.
    idx : ndarray, optional
        Row indices selecting (possibly repeated) banks; repeats become
        distinct nodes and counterparty denominators count multiplicity.

    Returns
    -------
    (entries, unallocated)
        entries[i, j] is the directed estimate from node i to node j;
        unallocated[i] is exposure of node i that had no eligible
        counterparty (external countries, or own country with no other bank).
    """
    if idx is None:
        idx = np.arange(len(arrays.leis))
    idx = np.asarray(idx, dtype=np.intp)
    n = len(idx)
    if n < 2:
        raise DomainError("a network needs at least 2 banks")
    m = len(arrays.countries)
    home = arrays.home[idx]
    E = arrays.E[idx]
    basis = _allocation_basis(arrays, method, idx)

    rows = np.arange(n)
    count = np.bincount(home, minlength=m).astype(float)
    eligible = np.tile(count, (n, 1))
    eligible[rows, home] -= 1.0
    mass = np.bincount(home, weights=basis, minlength=m)
    denom = np.tile(mass, (n, 1))
    denom[rows, home] -= basis

    if np.any((eligible > 0) & (denom <= 0)):
        raise DomainError("zero-weight denominator in weighted allocation")

    safe = np.where(eligible > 0, denom, np.inf)
    entries = E[:, home] * (basis[None, :] / safe[:, home])
    np.fill_diagonal(entries, 0.0)
    unallocated = arrays.external_dropped[idx] + np.where(eligible > 0, 0.0, E).sum(axis=1)
    return entries, unallocated


def allocate(records: list[BankRecord], method: str = "equal") -> DirectedExposureMatrix:
    """Build the directed exposure estimate for one panel year.

    Each bank's exposure to a country is split across that country's sample
    banks: equally, by asset share, or by portfolio share. The allocating
    bank is never its own counterparty.
    """
    arrays = year_arrays(records)
    entries, unallocated = allocate_arrays(arrays, method)
    own = unallocated - arrays.external_dropped
    if np.any(own > 0):
        lone = [arrays.leis[i] for i in np.nonzero(own > 0)[0]]
        warnings.warn(
            "own-country exposure dropped for sole banks of their country: "
            + ", ".join(lone),
            stacklevel=2,
        )
    return DirectedExposureMatrix(list(arrays.leis), entries, unallocated)


def symmetrize(directed: DirectedExposureMatrix, year: int = 0) -> WeightedGraph:
    """Average the two directed estimates of each pair; total is conserved."""
    m = directed.entries
    graph = WeightedGraph(list(directed.banks), (m + m.T) / 2.0, year)
    graph.validate()
    return graph


def build_graph(panel: ExposurePanel, year: int, method: str = "equal") -> WeightedGraph:
    if year not in panel.records:
        raise InputError(f"panel has no year {year}")
    return symmetrize(allocate(panel.records[year], method), year)


def validate_conservation(
    graph: WeightedGraph,
    directed: DirectedExposureMatrix,
    records: list[BankRecord],
    rel_tol: float = 1e-9,
) -> ValidationReport:
    """Check total and per-bank exposure conservation of a built network.

    (a) element sum of the symmetric matrix equals that of the directed one;
    (b) each directed row sum equals the bank's reported exposure total minus
    what was dropped for lack of an eligible counterparty.
    """
    if graph.banks != directed.banks or [r.lei for r in records] != list(directed.banks):
        raise InputError("bank lists of graph, directed matrix and records differ")
    failures: list[str] = []
    total_directed = float(directed.entries.sum())
    total_graph = float(graph.weights.sum())
    scale = max(abs(total_directed), 1.0)
    if abs(total_graph - total_directed) > rel_tol * scale:
        failures.append(
            f"total-weight discrepancy of {total_graph - total_directed:g} "
            f"(graph {total_graph:g} vs directed {total_directed:g})"
        )
    row_sums = directed.entries.sum(axis=1)
    for i, rec in enumerate(records):
        expected = rec.total_exposure() - directed.unallocated[i]
        if abs(row_sums[i] - expected) > rel_tol * max(abs(expected), 1.0):
            failures.append(
                f"bank {rec.lei}: allocated {float(row_sums[i]):g}, expected {expected:g}"
            )
    return ValidationReport(not failures, float(total_directed), float(total_graph), failures)


def network_stats(graph: WeightedGraph) -> NetworkStats:
    """Descriptive statistics; an edge exists where the weight is strictly positive."""
    graph.validate()
    n = graph.n
    iu = np.triu_indices(n, k=1)
    upper = graph.weights[iu]
    positive = upper[upper > 0]
    n_edges = int(positive.size)
    possible = n * (n - 1) // 2
    degrees = graph.degrees()
    total = float(upper.sum())
    return NetworkStats(
        n_nodes=n,
        n_edges=n_edges,
        density=n_edges / possible if possible else 0.0,
        total_weight=total,
        mean_weight=float(positive.mean()) if n_edges else 0.0,
        sd_weight=float(positive.std()) if n_edges else 0.0,
        min_weight=float(positive.min()) if n_edges else 0.0,
        max_weight=float(positive.max()) if n_edges else 0.0,
        degrees=degrees,
        mean_degree=2.0 * total / n,
        sd_degree=float(degrees.std()),
    )


def graph_to_edge_csv(graph: WeightedGraph, path: str | Path) -> None:
    """Write the strictly positive upper-triangle edges, one row per pair."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["year", "bank_i", "bank_j", "weight"])
        n = graph.n
        for i in range(n):
            for j in range(i + 1, n):
                w = graph.weights[i, j]
                if w > 0:
                    writer.writerow([graph.year, graph.banks[i], graph.banks[j], _fmt(w)])


def graph_from_edge_csv(path: str | Path) -> WeightedGraph:
    """Rebuild a graph from an edge list; bank order follows first appearance."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    banks: list[str] = []
    seen: dict[str, int] = {}
    rows: list[tuple[int, str, str, float]] = []
    year = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["year", "bank_i", "bank_j", "weight"]:
            raise InputError(f"{path}: bad edge-list header {header!r}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise InputError(f"line {line}: expected 4 fields, got {len(row)}")
            try:
                year = int(row[0])
                w = float(row[3])
            except ValueError as exc:
                raise InputError(f"line {line}: bad numeric field") from exc
            if w < 0:
                raise InputError(f"line {line}: negative weight {w}")
            for bank in (row[1], row[2]):
                if bank not in seen:
                    seen[bank] = len(banks)
                    banks.append(bank)
            rows.append((year, row[1], row[2], w))
    if len(banks) < 2:
        raise InputError(f"{path}: fewer than 2 banks")
    n = len(banks)
    weights = np.zeros((n, n))
    for _, bi, bj, w in rows:
        i, j = seen[bi], seen[bj]
        if i == j:
            raise InputError(f"{path}: self-loop on {bi}")
        weights[i, j] = w
        weights[j, i] = w
    graph = WeightedGraph(banks, weights, year)
    graph.validate()
    return graph


def graph_to_json(graph: WeightedGraph, path: str | Path) -> None:
    doc = {
        "year": graph.year,
        "banks": list(graph.banks),
        "weights": [[float(x) for x in row] for row in graph.weights],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def graph_from_json(path: str | Path) -> WeightedGraph:
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    graph = WeightedGraph(list(doc["banks"]), np.array(doc["weights"], dtype=float), int(doc["year"]))
    graph.validate()
    return graph
