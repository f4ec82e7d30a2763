"""Multi-relational airport graph construction.

Three relations: a thresholded-Gaussian distance kernel, origin->destination
flight volume, and its transpose. Diffusion uses powers of the row-normalized
transition matrix of each relation.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np

GRAPH_FORMAT_VERSION = 1

EARTH_RADIUS_KM = 6371.0088


@dataclass
class MultiGraph:
    """Ordered airport codes plus one weighted adjacency per relation."""

    airports: list[str]
    relations: list[tuple[str, np.ndarray]]
    coordinates: dict[str, tuple[float, float]] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.airports)

    def relation(self, kind: str) -> np.ndarray:
        for k, a in self.relations:
            if k == kind:
                return a
        raise KeyError(f"no relation {kind!r} in graph (have {[k for k, _ in self.relations]})")

    def validate(self) -> None:
        n = self.n
        for kind, a in self.relations:
            if a.shape != (n, n):
                raise ValueError(f"relation {kind!r} has shape {a.shape}, expected {(n, n)}")
            if np.any(a < 0):
                raise ValueError(f"relation {kind!r} has negative weights")


def great_circle_km(lat1, lon1, lat2, lon2) -> float:
    """Haversine distance in kilometers."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def pairwise_distances(coords: list[tuple[float, float]]) -> np.ndarray:
    n = len(coords)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = great_circle_km(*coords[i], *coords[j])
    return d


def distance_adjacency(pairwise_dist, sigma: float) -> np.ndarray:
    """Gaussian kernel exp(-d^2/sigma^2), zeroed where the kernel value <= 0.1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = np.asarray(pairwise_dist, dtype=np.float64)
    if d.shape[0] != d.shape[1] or not np.allclose(d, d.T):
        raise ValueError("distance matrix must be square and symmetric")
    if np.any(np.diag(d) != 0):
        raise ValueError("distance matrix must have a zero diagonal")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    a = np.exp(-(d**2) / sigma**2)
    a[a <= 0.1] = 0.0
    return a


def default_sigma(pairwise_dist) -> float:
    """Standard deviation of all off-diagonal pairwise distances."""
    d = np.asarray(pairwise_dist, dtype=np.float64)
    off = d[~np.eye(d.shape[0], dtype=bool)]
    s = float(off.std())
    if s <= 0:
        raise ValueError("degenerate distance matrix: zero spread")
    return s


def od_adjacency(flow) -> np.ndarray:
    """Scale O->D flight counts by the maximum pair, dropping weak pairs.

    Entries below 0.15 * max go to zero; the rest are flow / (1.5 * max),
    so retained weights live in [0.1, 2/3]. Flows must come from the
    training split only.
    """
    f = np.asarray(flow, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("flow counts must be nonnegative")
    f_max = f.max()
    if f_max == 0:
        raise ValueError("all-zero flow matrix: degenerate graph")
    a = np.where(f < 0.15 * f_max, 0.0, f / (1.5 * f_max))
    return a


def do_adjacency(od) -> np.ndarray:
    return np.asarray(od, dtype=np.float64).T.copy()


def row_normalize(a) -> np.ndarray:
    """Divide each row by its sum; all-zero rows stay zero."""
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0):
        raise ValueError("row_normalize requires nonnegative entries")
    sums = a.sum(axis=1, keepdims=True)
    out = np.divide(a, sums, out=np.zeros_like(a), where=sums > 0)
    return out


def power_series(a_hat, order: int) -> list[np.ndarray]:
    """[I, A, A^2, ..., A^order] by repeated multiplication."""
    if order < 0:
        raise ValueError(f"diffusion order must be >= 0, got {order}")
    a_hat = np.asarray(a_hat, dtype=np.float64)
    n = a_hat.shape[0]
    powers = [np.eye(n)]
    for _ in range(order):
        powers.append(powers[-1] @ a_hat)
    return powers


def build_multigraph(
    airports: list[str],
    coords: list[tuple[float, float]],
    flow: np.ndarray,
    sigma: float | None = None,
) -> MultiGraph:
    """Assemble the standard three-relation graph from coordinates and O-D flow."""
    dist = pairwise_distances(coords)
    sigma_used = default_sigma(dist) if sigma is None else sigma
    od = od_adjacency(flow)
    g = MultiGraph(
        airports=list(airports),
        relations=[
            ("distance", distance_adjacency(dist, sigma_used)),
            ("od", od),
            ("do", do_adjacency(od)),
        ],
        coordinates={code: (float(la), float(lo)) for code, (la, lo) in zip(airports, coords)},
        metadata={"sigma_km": sigma_used},
    )
    g.validate()
    return g


# ---------------------------------------------------------------------------
# artifact io (versioned JSON, base64 row-major float64 matrices)


def _encode_matrix(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "rows": a.shape[0],
        "cols": a.shape[1],
        "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_matrix(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    a = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return a.reshape(d["rows"], d["cols"])


def save_graph(graph: MultiGraph, path) -> None:
    doc = {
        "format_version": GRAPH_FORMAT_VERSION,
        "airports": graph.airports,
        "coordinates": {k: list(v) for k, v in graph.coordinates.items()},
        "relations": [{"kind": kind, "matrix": _encode_matrix(a)} for kind, a in graph.relations],
        "metadata": graph.metadata,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True)


def load_graph(path) -> MultiGraph:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    version = doc.get("format_version")
    if version != GRAPH_FORMAT_VERSION:
        raise ValueError(f"unsupported graph artifact version {version!r}")
    g = MultiGraph(
        airports=list(doc["airports"]),
        relations=[(r["kind"], _decode_matrix(r["matrix"])) for r in doc["relations"]],
        coordinates={k: (float(v[0]), float(v[1])) for k, v in doc.get("coordinates", {}).items()},
        metadata=doc.get("metadata", {}),
    )
    g.validate()
    return g
