"""Seed-deterministic synthetic delay benchmark with planted propagation.

Departure delays follow a daily seasonal profile plus a persistent
AR(1) "weather" shock; arrival delays are a lagged mixture of upstream
departures through planted O-D weights. Weather codes are severity buckets
of the shock, so the covariate channel carries real signal. A declared
fraction of cells is masked at random.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import numpy as np

from . import graphs
from .data import (
    CLIP_MAX_MINUTES,
    CLIP_MIN_MINUTES,
    CovariateSeq,
    DatasetBundle,
    DelayTensor,
    build_time_axis,
    make_bundle,
    save_dataset,
)

SYNTH_WEATHER_CATEGORIES = ["calm", "breezy", "stormy", "severe"]


@dataclass
class PlantedPropagation:
    """Ground-truth knobs for the generator."""

    od_weights: np.ndarray  # (N, N), row = origin, col = destination
    lag_steps: int = 2
    weather_shock: float = 5.0  # stationary std of the AR shock, minutes
    mask_fraction: float = 0.15
    shock_persistence: float = 0.95
    base_amplitude: float = 8.0
    noise_std: float = 1.0

    def __post_init__(self):
        self.od_weights = np.asarray(self.od_weights, dtype=np.float64)
        if self.lag_steps < 1:
            raise ValueError("lag_steps must be >= 1")


def default_planted(n_airports: int, seed: int = 0, **kwargs) -> PlantedPropagation:
    """One dominant directed edge (0 -> 1) over weak random background flow."""
    rng = np.random.default_rng(seed)
    w = 0.04 * rng.random((n_airports, n_airports))
    np.fill_diagonal(w, 0.0)
    w[0, 1] = 0.9
    return PlantedPropagation(od_weights=w, **kwargs)


def gen_synthetic(
    seed: int,
    n_airports: int,
    days: int,
    planted: PlantedPropagation,
    slots_per_day: int = 36,
    start: date = date(2021, 1, 4),
) -> tuple[DelayTensor, CovariateSeq, graphs.MultiGraph, dict]:
    if planted.od_weights.shape != (n_airports, n_airports):
        raise ValueError(
            f"od_weights shape {planted.od_weights.shape} != ({n_airports}, {n_airports})"
        )
    rng = np.random.default_rng(seed)
    day_start = 6
    day_end = day_start + slots_per_day // 2
    axis = build_time_axis(start, days, day_start, day_end)
    t_total = len(axis)
    n = n_airports

    # two-peak daily departure profile, scaled per airport
    slot = np.arange(slots_per_day)
    profile = 0.5 + 0.25 * np.sin(4 * np.pi * slot / slots_per_day) + 0.25 * np.sin(
        2 * np.pi * slot / slots_per_day
    )
    airport_scale = rng.uniform(0.6, 1.4, size=n)
    base = planted.base_amplitude * airport_scale[:, None] * np.tile(profile, days)[None, :]

    phi = planted.shock_persistence
    innov_std = planted.weather_shock * np.sqrt(max(1e-12, 1.0 - phi**2))
    shock = np.zeros((n, t_total))
    shock[:, 0] = rng.normal(0.0, planted.weather_shock, size=n)
    innovations = rng.normal(0.0, innov_std, size=(n, t_total))
    for t in range(1, t_total):
        shock[:, t] = phi * shock[:, t - 1] + innovations[:, t]

    dep = base + shock + rng.normal(0.0, planted.noise_std, size=(n, t_total))
    dep = np.clip(dep, CLIP_MIN_MINUTES, CLIP_MAX_MINUTES)

    lag = planted.lag_steps
    arr = np.zeros((n, t_total))
    arr[:, lag:] = planted.od_weights.T @ dep[:, :-lag]
    arr[:, :lag] = planted.od_weights.T @ dep[:, :lag]  # warmup: contemporaneous mix
    arr += rng.normal(0.0, planted.noise_std, size=(n, t_total))
    arr = np.clip(arr, CLIP_MIN_MINUTES, CLIP_MAX_MINUTES)

    values = np.stack([arr, dep], axis=-1)
    mask = rng.random((n, t_total, 2)) >= planted.mask_fraction
    values = np.where(mask, values, 0.0)

    # weather severity buckets of the shock
    s = planted.weather_shock
    codes = np.digitize(shock, [-0.5 * s, 0.5 * s, 1.5 * s])
    covariates = CovariateSeq(codes, list(SYNTH_WEATHER_CATEGORIES))

    airports = [f"AP{i:02d}" for i in range(n)]
    coords = [
        (39.0 + 6.0 * np.sin(2 * np.pi * i / n), -95.0 + 8.0 * np.cos(2 * np.pi * i / n))
        for i in range(n)
    ]
    flow = np.rint(planted.od_weights * 1000)
    if flow.max() == 0:
        # zero planted weights still need a usable graph prior
        flow = np.ones((n, n)) - np.eye(n)
    graph = graphs.build_multigraph(airports, coords, flow)

    source = int(np.unravel_index(np.argmax(planted.od_weights), planted.od_weights.shape)[0])
    sink = int(np.argmax(planted.od_weights[source]))
    truth = {
        "source_airport": airports[source],
        "sink_airport": airports[sink],
        "source_index": source,
        "sink_index": sink,
        "lag_steps": lag,
        "mask_fraction": planted.mask_fraction,
        "weather_shock": planted.weather_shock,
        "shock_persistence": phi,
        "seed": seed,
    }
    delays = DelayTensor(values, mask, axis, slots_per_day, airports)
    return delays, covariates, graph, truth


def make_synthetic_bundle(
    seed: int,
    n_airports: int = 8,
    days: int = 60,
    planted: PlantedPropagation | None = None,
    train_frac: float = 0.7,
    val_frac: float = 0.1,
) -> tuple[DatasetBundle, graphs.MultiGraph, dict]:
    if planted is None:
        planted = default_planted(n_airports, seed=seed)
    delays, covariates, graph, truth = gen_synthetic(seed, n_airports, days, planted)
    bundle = make_bundle(delays, covariates, train_frac, val_frac, meta={"ground_truth": truth})
    return bundle, graph, truth


def write_synthetic_artifacts(
    out_dir,
    seed: int = 0,
    n_airports: int = 8,
    days: int = 60,
    planted: PlantedPropagation | None = None,
) -> dict:
    """Write dataset + graph artifacts for demos and tests; returns paths."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle, graph, truth = make_synthetic_bundle(seed, n_airports, days, planted)
    dataset_path = out / "synthetic.dataset.stpn"
    graph_path = out / "synthetic.graph.json"
    save_dataset(bundle, dataset_path)
    graphs.save_graph(graph, graph_path)
    return {"dataset": str(dataset_path), "graph": str(graph_path), "ground_truth": truth}
