#!/usr/bin/env python3
"""
Network and training setup of a planning scenario.

A scenario holds N clients (throughput p_n in FLOPS/s, dataset size D_n), the
server throughput p_s, a symmetric link-rate matrix over clients plus the
server (bytes/s) and the number of epochs per round E. Scenarios are immutable;
system changes produce new scenarios.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from scripts.errors import PlanningError, ScenarioError
from scripts.model_profile import ModelProfile
from scripts.reference_models import resolve_profile

logger = logging.getLogger(__name__)

SERVER = "server"
ALL_TARGETS = "*"

# Reference testbed: strong phones, weak RPis, a 40-core server and 20-25 Mbps links
STRONG_THROUGHPUT = 17.6e9
WEAK_THROUGHPUT = 2.4e9
SERVER_THROUGHPUT = 100e9
STRONG_FRACTION = 0.3
RATE_RANGE_MBPS = (20.0, 25.0)

_RATE_UNITS = {
    "b/s": 1 / 8, "bps": 1 / 8,
    "kbps": 1e3 / 8, "kb/s": 1e3 / 8,
    "mbps": 1e6 / 8, "mb/s": 1e6 / 8,
    "gbps": 1e9 / 8, "gb/s": 1e9 / 8,
}
_BYTE_RATE_UNITS = {"B/s": 1.0, "kB/s": 1e3, "KB/s": 1e3, "MB/s": 1e6, "GB/s": 1e9}
_RATE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z/]*)\s*$")

PathLike = Union[str, Path]


def ceil_count(fraction: float, total: int) -> int:
    """ceil(fraction * total) without float noise (0.07 * 100 must give 7)."""
    return int(math.ceil(round(fraction * total, 9)))


def mbps(value: float) -> float:
    """Megabits per second to bytes per second."""
    return value * 1e6 / 8


def parse_rate(value: Union[str, float, int]) -> float:
    """
    Parse a link rate into bytes/s.

    Bare numbers are bytes/s. Strings may carry a unit suffix: bit rates
    (bps, kbps, Mbps, Gbps) or byte rates (B/s, kB/s, MB/s, GB/s).
    """
    if isinstance(value, (int, float)):
        return float(value)
    match = _RATE_RE.match(str(value))
    if not match:
        raise ScenarioError(f"cannot parse rate '{value}'")
    number, unit = float(match.group(1)), match.group(2)
    if not unit:
        return number
    if unit in _BYTE_RATE_UNITS:
        return number * _BYTE_RATE_UNITS[unit]
    if unit.lower() in _RATE_UNITS and not unit.endswith("B/s"):
        return number * _RATE_UNITS[unit.lower()]
    raise ScenarioError(f"unknown rate unit '{unit}' in '{value}'")


@dataclass(frozen=True)
class ClientSpec:
    id: str
    throughput: float
    dataset_size: int = 1

    def __post_init__(self) -> None:
        if self.id == SERVER:
            raise ScenarioError(f"client id '{SERVER}' is reserved for the server")
        if not self.throughput > 0:
            raise ScenarioError(f"client {self.id}: throughput must be > 0, got {self.throughput}")
        if int(self.dataset_size) < 1:
            raise ScenarioError(f"client {self.id}: dataset_size must be >= 1, got {self.dataset_size}")


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Immutable planning scenario.

    ``rates`` is an (N+1)x(N+1) matrix in bytes/s; rows/columns 0..N-1 follow
    ``clients`` and row/column N is the server. The diagonal is infinite: a node
    exchanging data with itself pays no transmission delay.
    """

    clients: Tuple[ClientSpec, ...]
    server_throughput: float
    rates: np.ndarray
    epochs_per_round: int
    model: ModelProfile
    _index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.clients:
            raise ScenarioError("scenario needs at least one client")
        ids = [c.id for c in self.clients]
        if len(set(ids)) != len(ids):
            raise ScenarioError("client ids must be unique")
        if not self.server_throughput > 0:
            raise ScenarioError(f"server_throughput must be > 0, got {self.server_throughput}")
        if int(self.epochs_per_round) < 1:
            raise ScenarioError(f"epochs_per_round must be >= 1, got {self.epochs_per_round}")

        size = len(self.clients) + 1
        rates = np.array(self.rates, dtype=float)
        if rates.shape != (size, size):
            raise ScenarioError(f"rate matrix must be {size}x{size}, got {rates.shape}")
        np.fill_diagonal(rates, np.inf)
        off = ~np.eye(size, dtype=bool)
        if not np.all(rates[off] > 0):
            raise ScenarioError("link rates must be > 0 for every pair of distinct endpoints")
        if not np.array_equal(rates, rates.T):
            raise ScenarioError("link rates must be symmetric (r_ij = r_ji)")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "_index", {cid: i for i, cid in enumerate(ids)})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.clients == other.clients
            and self.server_throughput == other.server_throughput
            and self.epochs_per_round == other.epochs_per_round
            and self.model == other.model
            and np.array_equal(self.rates, other.rates)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    @property
    def client_ids(self) -> List[str]:
        return [c.id for c in self.clients]

    @property
    def throughputs(self) -> np.ndarray:
        return np.array([c.throughput for c in self.clients], dtype=float)

    @property
    def server_index(self) -> int:
        return len(self.clients)

    @property
    def batches_per_epoch(self) -> int:
        """Q: clients synchronise per batch, so the largest ceil(D_n / B) wins."""
        B = self.model.batch_size
        return max(int(math.ceil(c.dataset_size / B)) for c in self.clients)

    def has_client(self, client_id: str) -> bool:
        return client_id in self._index

    def index_of(self, endpoint: str) -> int:
        if endpoint == SERVER:
            return self.server_index
        try:
            return self._index[endpoint]
        except KeyError:
            raise ScenarioError(f"unknown endpoint '{endpoint}'") from None

    def client(self, client_id: str) -> ClientSpec:
        return self.clients[self.index_of(client_id)]

    def link_rate(self, a: str, b: str) -> float:
        return float(self.rates[self.index_of(a), self.index_of(b)])

    def to_document(self) -> Dict[str, Any]:
        matrix = [[None if i == j else float(r) for j, r in enumerate(row)] for i, row in enumerate(self.rates)]
        return {
            "model": self.model.name,
            "server_throughput": self.server_throughput,
            "epochs_per_round": self.epochs_per_round,
            "clients": [asdict(c) for c in self.clients],
            "links": {"matrix": matrix},
        }


def heterogeneity(s: Scenario) -> float:
    """gamma = max(p_n) / min(p_n)."""
    p = s.throughputs
    return float(p.max() / p.min())


def uniform_rates(n_clients: int, rate: float) -> np.ndarray:
    size = n_clients + 1
    rates = np.full((size, size), float(rate))
    np.fill_diagonal(rates, np.inf)
    return rates


def random_rates(n_clients: int, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric matrix with every off-diagonal rate drawn from U[lo, hi]."""
    if lo > hi:
        raise ScenarioError(f"rate range lower bound {lo} exceeds upper bound {hi}")
    size = n_clients + 1
    upper = np.triu(rng.uniform(lo, hi, size=(size, size)), k=1)
    rates = upper + upper.T
    np.fill_diagonal(rates, np.inf)
    return rates


def generate_scenario(
    n_clients: int,
    strong_fraction: float,
    strong_p: float,
    weak_p: float,
    rate_range: Tuple[float, float],
    seed: int,
    model: ModelProfile,
    server_p: float = SERVER_THROUGHPUT,
    epochs_per_round: int = 3,
    dataset_size: int = 600,
) -> Scenario:
    """
    Random heterogeneous scenario on the reference testbed.

    ceil(strong_fraction * N) clients (chosen by the seeded RNG) get ``strong_p``,
    the rest ``weak_p``. Every link, including client-server links, is drawn
    uniformly from ``rate_range`` (bytes/s). Identical seeds give identical
    scenarios.
    """
    if not 0.0 <= strong_fraction <= 1.0:
        raise ScenarioError(f"strong_fraction must lie in [0, 1], got {strong_fraction}")
    if n_clients < 1:
        raise ScenarioError(f"n_clients must be >= 1, got {n_clients}")
    lo, hi = rate_range
    rng = np.random.default_rng(seed)

    n_strong = ceil_count(strong_fraction, n_clients)
    strong = set(rng.choice(n_clients, size=n_strong, replace=False).tolist()) if n_strong else set()
    clients = tuple(
        ClientSpec(id=f"c{i + 1}", throughput=strong_p if i in strong else weak_p, dataset_size=dataset_size)
        for i in range(n_clients)
    )
    rates = random_rates(n_clients, lo, hi, rng)
    return Scenario(
        clients=clients,
        server_throughput=server_p,
        rates=rates,
        epochs_per_round=epochs_per_round,
        model=model,
    )


@dataclass(frozen=True)
class GeneratorSettings:
    """Parameters of ``generate_scenario``; defaults describe the reference testbed."""

    n_clients: int = 10
    strong_fraction: float = STRONG_FRACTION
    strong_p: float = STRONG_THROUGHPUT
    weak_p: float = WEAK_THROUGHPUT
    server_p: float = SERVER_THROUGHPUT
    rate_lo: float = mbps(RATE_RANGE_MBPS[0])
    rate_hi: float = mbps(RATE_RANGE_MBPS[1])
    epochs_per_round: int = 3
    dataset_size: int = 600

    def generate(self, model: ModelProfile, seed: int) -> Scenario:
        return generate_scenario(
            n_clients=self.n_clients,
            strong_fraction=self.strong_fraction,
            strong_p=self.strong_p,
            weak_p=self.weak_p,
            rate_range=(self.rate_lo, self.rate_hi),
            seed=seed,
            model=model,
            server_p=self.server_p,
            epochs_per_round=self.epochs_per_round,
            dataset_size=self.dataset_size,
        )

    @classmethod
    def from_document(cls, raw: Mapping[str, Any]) -> "GeneratorSettings":
        known = {k: raw[k] for k in cls.__dataclass_fields__ if k in raw}
        for key in ("rate_lo", "rate_hi"):
            if key in known:
                known[key] = parse_rate(known[key])
        try:
            return cls(**known)
        except TypeError as e:
            raise ScenarioError(f"invalid generator block: {e}") from e


# ---------- System changes ----------

THROUGHPUT_SCALE = "throughput_scale"
LINK_RATE_OVERRIDE = "link_rate_override"
CHANGE_KINDS = (THROUGHPUT_SCALE, LINK_RATE_OVERRIDE)

LinkTarget = Tuple[str, str]


@dataclass(frozen=True)
class SystemChange:
    """
    A change of available resources between rounds.

    ``throughput_scale`` multiplies the throughput of the target clients by
    ``factor`` in (0, 1]; ``link_rate_override`` sets the rate of the target
    links to ``value`` bytes/s. ``targets`` holds client ids or, for links,
    endpoint pairs; a client id as a link target selects every link of that
    client, its server link included. ``("*",)`` selects everything.
    """

    kind: str
    targets: Tuple[Union[str, LinkTarget], ...] = (ALL_TARGETS,)
    factor: Optional[float] = None
    value: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in CHANGE_KINDS:
            raise ScenarioError(f"unknown change kind '{self.kind}'; expected one of {CHANGE_KINDS}")
        if self.kind == THROUGHPUT_SCALE:
            if self.factor is None or not 0.0 < self.factor <= 1.0:
                raise ScenarioError(f"throughput_scale factor must lie in (0, 1], got {self.factor}")
        elif self.value is None or not self.value > 0:
            raise ScenarioError(f"link_rate_override value must be > 0, got {self.value}")

    @property
    def applies_to_all(self) -> bool:
        return ALL_TARGETS in self.targets

    @property
    def label(self) -> str:
        if self.kind == THROUGHPUT_SCALE:
            return f"throughput_scale x{self.factor:g}"
        return f"link_rate_override {self.value:g} B/s"

    def to_document(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"kind": self.kind, "targets": [t if isinstance(t, str) else list(t) for t in self.targets]}
        if self.factor is not None:
            doc["factor"] = self.factor
        if self.value is not None:
            doc["value"] = self.value
        return doc


def apply_change(s: Scenario, c: SystemChange) -> Scenario:
    """Return a new scenario with ``c`` applied; ``s`` is left untouched."""
    if c.kind == THROUGHPUT_SCALE:
        if c.applies_to_all:
            targets = set(s.client_ids)
        else:
            targets = set()
            for t in c.targets:
                if not isinstance(t, str) or not s.has_client(t):
                    raise ScenarioError(f"throughput_scale target '{t}' is not a client of the scenario")
                targets.add(t)
        clients = tuple(
            replace(client, throughput=client.throughput * float(c.factor)) if client.id in targets else client
            for client in s.clients
        )
        return replace(s, clients=clients)

    rates = np.array(s.rates, dtype=float)
    if c.applies_to_all:
        rates[:] = float(c.value)  # type: ignore[arg-type]
    else:
        for t in c.targets:
            if isinstance(t, str):
                if not s.has_client(t):
                    raise ScenarioError(f"link_rate_override target '{t}' is not a client of the scenario")
                i = s.index_of(t)
                rates[i, :] = rates[:, i] = float(c.value)  # type: ignore[arg-type]
                continue
            if len(t) != 2:
                raise ScenarioError(f"link target must be a client id or an endpoint pair, got '{t}'")
            a, b = t
            if a == b:
                raise ScenarioError(f"link target ({a}, {b}) is a self-link")
            i, j = s.index_of(a), s.index_of(b)
            rates[i, j] = rates[j, i] = float(c.value)  # type: ignore[arg-type]
    np.fill_diagonal(rates, np.inf)
    return replace(s, rates=rates)


def apply_changes(s: Scenario, changes: Iterable[SystemChange]) -> Scenario:
    for change in changes:
        s = apply_change(s, change)
    return s


def parse_change(raw: Mapping[str, Any]) -> SystemChange:
    if "kind" not in raw:
        raise ScenarioError("change entry missing 'kind'")
    targets_raw = raw.get("targets", ALL_TARGETS)
    if targets_raw in (ALL_TARGETS, "all"):
        targets: Tuple[Union[str, LinkTarget], ...] = (ALL_TARGETS,)
    elif isinstance(targets_raw, list):
        targets = tuple(
            ALL_TARGETS if t == "all" else (t if isinstance(t, str) else (str(t[0]), str(t[1])))
            for t in targets_raw
        )
    else:
        raise ScenarioError(f"'targets' must be a list or 'all', got {targets_raw!r}")
    value = raw.get("value")
    return SystemChange(
        kind=str(raw["kind"]),
        targets=targets,
        factor=None if raw.get("factor") is None else float(raw["factor"]),
        value=None if value is None else parse_rate(value),
    )


def load_changes(source: Union[PathLike, Sequence[Mapping[str, Any]]]) -> List[SystemChange]:
    """Load a JSON list of change documents (applied in order)."""
    if isinstance(source, (str, Path)):
        document = _read_json(Path(source))
    else:
        document = source
    if not isinstance(document, list):
        raise ScenarioError("change document must be a JSON list")
    return [parse_change(raw) for raw in document]


# ---------- Scenario documents ----------

def _read_json(path: Path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ScenarioError(f"document not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path} is not valid JSON: {e}") from e


def _resolve_model(ref: Any, base_dir: Optional[Path]) -> ModelProfile:
    if isinstance(ref, str) and base_dir is not None:
        candidate = base_dir / ref
        if candidate.exists():
            return resolve_profile(candidate)
    try:
        return resolve_profile(ref)
    except PlanningError as e:
        raise ScenarioError(f"cannot resolve model profile {ref!r}: {e}") from e


def _rates_from_links(links: Mapping[str, Any], ids: List[str], seed: Optional[int]) -> np.ndarray:
    n = len(ids)
    if "matrix" in links:
        matrix = [[np.inf if r is None else parse_rate(r) for r in row] for row in links["matrix"]]
        return np.array(matrix, dtype=float)
    if "lo" in links or "hi" in links:
        lo, hi = parse_rate(links["lo"]), parse_rate(links["hi"])
        rng = np.random.default_rng(int(links.get("seed", seed if seed is not None else 0)))
        rates = random_rates(n, lo, hi, rng)
    elif "default" in links:
        rates = uniform_rates(n, parse_rate(links["default"]))
    else:
        raise ScenarioError("'links' needs a 'matrix', a {'lo', 'hi', 'seed'} block or a 'default' rate")

    index = {cid: i for i, cid in enumerate(ids)}
    index[SERVER] = n
    for override in links.get("overrides", []):
        try:
            i, j = index[override["a"]], index[override["b"]]
        except KeyError as e:
            raise ScenarioError(f"link override names unknown endpoint {e}") from e
        rates[i, j] = rates[j, i] = parse_rate(override["rate"])
    return rates


def load_generator_settings(source: Union[PathLike, Mapping[str, Any]]) -> Optional[GeneratorSettings]:
    """The scenario document's ``generator`` block, or None for explicit scenarios."""
    document = _read_json(Path(source)) if isinstance(source, (str, Path)) else source
    if not isinstance(document, Mapping) or "generator" not in document:
        return None
    return GeneratorSettings.from_document(document["generator"])


def load_scenario(
    source: Union[PathLike, Mapping[str, Any]],
    model: Optional[ModelProfile] = None,
    seed: Optional[int] = None,
) -> Scenario:
    """
    Build a scenario from a JSON document.

    Either a ``generator`` block (``GeneratorSettings`` fields) or explicit
    ``clients`` + ``links`` must be present. ``model`` names a reference model,
    a profile path (relative to the document) or an inline profile; the
    ``model`` argument overrides it.
    """
    base_dir: Optional[Path] = None
    if isinstance(source, (str, Path)):
        base_dir = Path(source).parent
        document = _read_json(Path(source))
    else:
        document = source
    if not isinstance(document, Mapping):
        raise ScenarioError("scenario document must be a JSON object")

    if model is None:
        if "model" not in document:
            raise ScenarioError("scenario document names no 'model' and no profile was given")
        model = _resolve_model(document["model"], base_dir)

    if "generator" in document:
        settings = GeneratorSettings.from_document(document["generator"])
        gen_seed = int(document["generator"].get("seed", seed if seed is not None else 0))
        return settings.generate(model, gen_seed)

    try:
        clients = tuple(
            ClientSpec(
                id=str(raw["id"]),
                throughput=float(raw["throughput"]),
                dataset_size=int(raw.get("dataset_size", model.batch_size)),
            )
            for raw in document["clients"]
        )
        server_throughput = float(document["server_throughput"])
        epochs = int(document.get("epochs_per_round", 1))
        links = document["links"]
    except KeyError as e:
        raise ScenarioError(f"scenario document missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"scenario document has an invalid value: {e}") from e

    rates = _rates_from_links(links, [c.id for c in clients], seed)
    scenario = Scenario(
        clients=clients,
        server_throughput=server_throughput,
        rates=rates,
        epochs_per_round=epochs,
        model=model,
    )
    logger.debug("Loaded scenario with N=%d clients on model %s", scenario.num_clients, model.name)
    return scenario
