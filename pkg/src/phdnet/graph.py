"""PhD exchange network: construction, time slicing, statistics, export.

Edges point from the hiring institution to the institution that trained the
hire, so ``W[i, j]`` counts doctorates employer ``i`` recruited from trainer
``j``. Self-hires stay on the diagonal.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence
from xml.etree import ElementTree as ET

import numpy as np

from phdnet.errors import ConfigurationError, DataError
from phdnet.ingest import OVERSEAS, HireRecord, InstitutionRegistry

MODES = ("windowed", "cumulative")
FORMATS = ("csv", "dot", "graphml")


@dataclass(frozen=True)
class Window:
    """Inclusive employment-year window. ``start_year=None`` is open below."""

    start_year: int | None = None
    end_year: int | None = None
    mode: str = "cumulative"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown slice mode {self.mode!r}")
        if (
            self.start_year is not None
            and self.end_year is not None
            and self.start_year > self.end_year
        ):
            raise ConfigurationError(f"window start {self.start_year} after end {self.end_year}")

    def contains(self, year: int) -> bool:
        if self.mode == "windowed" and self.start_year is not None and year < self.start_year:
            return False
        return self.end_year is None or year <= self.end_year

    @property
    def label(self) -> str:
        lo = "" if self.start_year is None or self.mode == "cumulative" else str(self.start_year)
        hi = "" if self.end_year is None else str(self.end_year)
        return f"{lo}-{hi}" if self.mode == "windowed" else f"cumulative-{hi or 'all'}"


@dataclass(frozen=True)
class ExchangeNetwork:
    nodes: tuple[str, ...]
    weights: np.ndarray
    window: Window = field(default_factory=Window)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.int64, copy=True).reshape(len(self.nodes), len(self.nodes))
        if (w < 0).any():
            raise DataError("negative edge weight")
        if len(set(self.nodes)) != len(self.nodes):
            raise DataError("duplicate node ids")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.nodes)

    def index(self, node: str) -> int:
        return self._index[node]

    @property
    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {n: i for i, n in enumerate(self.nodes)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def weight(self, employer: str, trainer: str) -> int:
        idx = self._index
        if employer not in idx or trainer not in idx:
            return 0
        return int(self.weights[idx[employer], idx[trainer]])

    def total_hires(self, employer: str) -> int:
        if employer not in self._index:
            return 0
        return int(self.weights[self._index[employer]].sum())

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def edges(self) -> list[tuple[str, str, int]]:
        rows, cols = np.nonzero(self.weights)
        return [(self.nodes[i], self.nodes[j], int(self.weights[i, j])) for i, j in zip(rows, cols)]

    def restrict(self, nodes: Sequence[str]) -> "ExchangeNetwork":
        """Re-index onto ``nodes``; unknown nodes get empty rows and columns."""
        nodes = tuple(sorted(set(nodes)))
        w = np.zeros((len(nodes), len(nodes)), dtype=np.int64)
        pos = [self._index.get(n) for n in nodes]
        for a, i in enumerate(pos):
            if i is None:
                continue
            for b, j in enumerate(pos):
                if j is not None:
                    w[a, b] = self.weights[i, j]
        return ExchangeNetwork(nodes, w, self.window)


@dataclass(frozen=True)
class NetworkStats:
    node_count: int
    directed_edge_count: int
    total_weight: int
    mean_in_degree: float
    mean_out_degree: float
    isolated_node_count: int
    self_loop_count: int = 0

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "directed_edge_count": self.directed_edge_count,
            "total_weight": self.total_weight,
            "mean_in_degree": self.mean_in_degree,
            "mean_out_degree": self.mean_out_degree,
            "isolated_node_count": self.isolated_node_count,
            "self_loop_count": self.self_loop_count,
        }


def build_network(
    records: Iterable[HireRecord],
    registry: InstitutionRegistry | None = None,
    window: Window | None = None,
    keep_inactive: bool | None = None,
) -> ExchangeNetwork:
    """Count hires per (employer, trainer) pair inside ``window``.

    Records are expected to be canonicalized already. The node set is every
    institution seen in any record plus registry entries tagged
    ``always-include``; with ``keep_inactive=False`` only institutions active
    inside the window are kept. The default keeps inactive nodes for
    cumulative windows and drops them for windowed ones.
    """
    window = window or Window()
    if keep_inactive is None:
        keep_inactive = window.mode == "cumulative"
    records = list(records)
    inside = [r for r in records if window.contains(r.employment_year)]
    pool = records if keep_inactive else inside
    nodes = {r.employer_unit for r in pool} | {r.degree_unit for r in pool}
    if registry is not None:
        nodes.update(registry.always_include())
    ordered = tuple(sorted(nodes))
    idx = {n: i for i, n in enumerate(ordered)}
    w = np.zeros((len(ordered), len(ordered)), dtype=np.int64)
    for r in inside:
        w[idx[r.employer_unit], idx[r.degree_unit]] += 1
    return ExchangeNetwork(ordered, w, window)


def slice_windows(
    boundaries: Sequence[int],
    mode: str = "windowed",
    start_year: int | None = None,
) -> list[Window]:
    """Turn year cut-points into windows.

    Windowed mode: the first window runs from ``start_year`` (open when
    ``None``) to the first cut-point, later windows from the previous
    cut-point + 1. Cumulative mode: everything up to each cut-point.
    """
    boundaries = [int(b) for b in boundaries]
    if not boundaries:
        raise ConfigurationError("at least one slice boundary required")
    if any(b <= a for a, b in zip(boundaries, boundaries[1:])):
        raise ConfigurationError(f"slice boundaries must be strictly increasing: {boundaries}")
    if mode not in MODES:
        raise ConfigurationError(f"unknown slice mode {mode!r}")
    if mode == "cumulative":
        return [Window(None, b, "cumulative") for b in boundaries]
    if start_year is not None and start_year > boundaries[0]:
        raise ConfigurationError(f"start year {start_year} after first boundary {boundaries[0]}")
    starts = [start_year] + [b + 1 for b in boundaries[:-1]]
    return [Window(s, e, "windowed") for s, e in zip(starts, boundaries)]


def slice_network(
    records: Iterable[HireRecord],
    boundaries: Sequence[int],
    mode: str = "windowed",
    registry: InstitutionRegistry | None = None,
    start_year: int | None = None,
    keep_inactive: bool | None = None,
) -> list[ExchangeNetwork]:
    records = list(records)
    return [
        build_network(records, registry, w, keep_inactive)
        for w in slice_windows(boundaries, mode, start_year)
    ]


def network_stats(network: ExchangeNetwork) -> NetworkStats:
    w = network.weights
    n = len(network)
    adj = w > 0
    edges = int(adj.sum())
    active = adj.any(axis=0) | adj.any(axis=1)
    mean = edges / n if n else 0.0
    return NetworkStats(
        node_count=n,
        directed_edge_count=edges,
        total_weight=int(w.sum()),
        mean_in_degree=mean,
        mean_out_degree=mean,
        isolated_node_count=int(n - active.sum()),
        self_loop_count=int(np.trace(adj)),
    )


# --------------------------------------------------------------------------
# serialization


def export(network: ExchangeNetwork, fmt: str = "csv") -> str:
    """Serialize as edge-list CSV, DOT or GraphML.

    Edge-list rows are ``source,target,weight`` with source = employer.
    Nodes without any edge are written as ``node,node,0`` so the node set
    survives a round trip.
    """
    if fmt == "csv":
        return _to_edge_list(network)
    if fmt == "dot":
        return _to_dot(network)
    if fmt == "graphml":
        return _to_graphml(network)
    raise ConfigurationError(f"unknown export format {fmt!r}; expected one of {FORMATS}")


def _isolated(network: ExchangeNetwork) -> list[str]:
    adj = network.weights > 0
    active = adj.any(axis=0) | adj.any(axis=1)
    return [n for n, a in zip(network.nodes, active) if not a]


def _to_edge_list(network: ExchangeNetwork) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "target", "weight"])
    for s, t, wt in network.edges():
        writer.writerow([s, t, wt])
    for n in _isolated(network):
        writer.writerow([n, n, 0])
    return buf.getvalue()


def _dot_id(name: str) -> str:
    escaped = name.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def _to_dot(network: ExchangeNetwork) -> str:
    lines = ["digraph phd_exchange {"]
    for n in network.nodes:
        lines.append(f"  {_dot_id(n)};")
    for s, t, wt in network.edges():
        lines.append(f"  {_dot_id(s)} -> {_dot_id(t)} [weight={wt}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _to_graphml(network: ExchangeNetwork) -> str:
    ns = "http://graphml.graphdrawing.org/xmlns"
    root = ET.Element("graphml", xmlns=ns)
    ET.SubElement(root, "key", id="weight", attrib={
        "for": "edge", "attr.name": "weight", "attr.type": "long",
    })
    graph = ET.SubElement(root, "graph", id="G", edgedefault="directed")
    for n in network.nodes:
        ET.SubElement(graph, "node", id=n)
    for k, (s, t, wt) in enumerate(network.edges()):
        edge = ET.SubElement(graph, "edge", id=f"e{k}", source=s, target=t)
        ET.SubElement(edge, "data", key="weight").text = str(wt)
    ET.indent(root)
    body = ET.tostring(root, encoding="unicode")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n"


def import_edge_list(text: str, window: Window | None = None) -> ExchangeNetwork:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["source", "target", "weight"]:
        raise DataError("edge list must start with header source,target,weight")
    entries = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            weight = int(row[2])
        except ValueError:
            raise DataError(f"line {lineno}: non-integer weight {row[2]!r}") from None
        if weight < 0:
            raise DataError(f"line {lineno}: negative weight")
        entries.append((row[0], row[1], weight))
    nodes = tuple(sorted({s for s, _, _ in entries} | {t for _, t, _ in entries}))
    idx = {n: i for i, n in enumerate(nodes)}
    w = np.zeros((len(nodes), len(nodes)), dtype=np.int64)
    for s, t, wt in entries:
        w[idx[s], idx[t]] += wt
    return ExchangeNetwork(nodes, w, window or Window())


# --------------------------------------------------------------------------
# synthetic downward-flow market


@dataclass(frozen=True)
class MarketSpec:
    """Parameters of a tiered academic labour market.

    ``hire_rates`` weight how often a single node of each tier hires. With
    probability ``downward_bias`` a hire is trained in the same or a higher
    tier, each candidate node weighted ``prestige_decay ** (tier - 1)``;
    otherwise the trainer is drawn uniformly from strictly lower tiers.
    Self-hires and overseas hires are drawn first, with their own
    probabilities.
    """

    tier_sizes: tuple[int, ...] = (5, 10, 20, 40)
    hire_rates: tuple[float, ...] | None = None
    downward_bias: float = 0.9
    self_loop_prob: float = 0.1
    overseas_prob: float = 0.1
    year_range: tuple[int, int] = (1980, 2021)
    n_records: int = 2000
    seed: int = 0
    prestige_decay: float = 0.75

    def __post_init__(self):
        if not self.tier_sizes:
            raise ConfigurationError("market needs at least one tier")
        if any(int(s) < 1 for s in self.tier_sizes):
            raise ConfigurationError("tier sizes must be positive")
        if self.hire_rates is not None:
            if len(self.hire_rates) != len(self.tier_sizes):
                raise ConfigurationError("one hire rate per tier required")
            if any(r < 0 for r in self.hire_rates) or sum(self.hire_rates) <= 0:
                raise ConfigurationError("hire rates must be non-negative and not all zero")
        for name in ("downward_bias", "self_loop_prob", "overseas_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name}={p} outside [0, 1]")
        if self.self_loop_prob + self.overseas_prob > 1.0:
            raise ConfigurationError("self_loop_prob + overseas_prob exceeds 1")
        if not 0.0 < self.prestige_decay <= 1.0:
            raise ConfigurationError("prestige_decay must lie in (0, 1]")
        lo, hi = self.year_range
        if lo > hi - 1:
            raise ConfigurationError("year_range must span at least two years")
        if self.n_records < 0:
            raise ConfigurationError("n_records must be non-negative")

    def node_tiers(self) -> dict[str, int]:
        """Node id → tier number, 1 being the most prestigious."""
        out = {}
        for t, size in enumerate(self.tier_sizes, start=1):
            for k in range(size):
                out[f"t{t}_u{k:03d}"] = t
        return out


def synthesize_market(spec: MarketSpec) -> list[HireRecord]:
    rng = np.random.default_rng(spec.seed)
    tiers = [[f"t{t}_u{k:03d}" for k in range(size)] for t, size in enumerate(spec.tier_sizes, start=1)]
    n_tiers = len(tiers)
    rates = np.ones(n_tiers) if spec.hire_rates is None else np.asarray(spec.hire_rates, float)
    employer_pool = [(t, u) for t, members in enumerate(tiers) for u in members]
    p_emp = np.array([rates[t] for t, _ in employer_pool])
    p_emp /= p_emp.sum()
    lo, hi = spec.year_range

    # per-employer trainer pools: same-or-higher tiers (node weight decays with
    # tier) and strictly lower tiers (uniform)
    pools = {}
    for t_emp, employer in employer_pool:
        up = [(v, spec.prestige_decay ** t) for t in range(t_emp + 1) for v in tiers[t] if v != employer]
        down = [v for t in range(t_emp + 1, n_tiers) for v in tiers[t]]
        up_w = np.array([w for _, w in up])
        pools[employer] = ([v for v, _ in up], up_w / up_w.sum() if up else None, down)

    records = []
    for k in range(spec.n_records):
        t_emp, employer = employer_pool[rng.choice(len(employer_pool), p=p_emp)]
        higher, higher_p, lower = pools[employer]
        u = rng.random()
        if u < spec.overseas_prob:
            trainer = OVERSEAS
        elif u < spec.overseas_prob + spec.self_loop_prob:
            trainer = employer
        else:
            downward = rng.random() < spec.downward_bias
            if (downward or not lower) and higher:
                trainer = higher[rng.choice(len(higher), p=higher_p)]
            elif lower:
                trainer = lower[int(rng.integers(len(lower)))]
            else:
                trainer = OVERSEAS  # one-node market
        grad = int(rng.integers(lo, hi))
        emp = int(rng.integers(grad + 1, min(grad + 3, hi) + 1))
        records.append(HireRecord(f"p{k:06d}", trainer, employer, grad, emp))
    return records
