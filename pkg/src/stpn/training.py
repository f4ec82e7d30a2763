"""Training loop, metrics, horizon-sliced evaluation, checkpoints,
attention export, and counterfactual interventions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .artifacts import read_container, write_container
from .config import ModelConfig
from .data import DatasetBundle, Normalization
from .graphs import MultiGraph
from .model import STPN, forward
from .autodiff import AdamState, ParamStore

CHECKPOINT_FORMAT_VERSION = 1
METRICS_SCHEMA_VERSION = 1
INTERVENTION_SCHEMA_VERSION = 1
ATTENTION_SCHEMA_VERSION = 1


class UnknownAirport(KeyError):
    def __init__(self, bad, valid):
        super().__init__(f"unknown airport(s) {sorted(bad)}; valid codes: {sorted(valid)}")
        self.bad = sorted(bad)
        self.valid = sorted(valid)


@dataclass
class Checkpoint:
    config: ModelConfig
    norm: Normalization
    params: dict[str, np.ndarray]
    optimizer: dict | None = None
    metadata: dict = field(default_factory=dict)

    def model(self, graph: MultiGraph) -> STPN:
        return STPN(self.config, graph, params=ParamStore(self.params))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    meta = {
        "checkpoint_format_version": CHECKPOINT_FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "normalization": ckpt.norm.to_dict(),
        "param_names": sorted(ckpt.params),
        "has_optimizer": ckpt.optimizer is not None,
        "metadata": ckpt.metadata,
    }
    arrays = {f"param.{name}": v for name, v in ckpt.params.items()}
    if ckpt.optimizer is not None:
        arrays["adam.step"] = np.asarray(float(ckpt.optimizer["step"]))
        for name, v in ckpt.optimizer["m"].items():
            arrays[f"adam.m.{name}"] = v
        for name, v in ckpt.optimizer["v"].items():
            arrays[f"adam.v.{name}"] = v
    write_container(path, "checkpoint", meta, arrays)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = read_container(path, expect_kind="checkpoint")
    if meta.get("checkpoint_format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('checkpoint_format_version')!r}")
    params = {name: arrays[f"param.{name}"] for name in meta["param_names"]}
    optimizer = None
    if meta.get("has_optimizer"):
        optimizer = {
            "step": int(arrays["adam.step"]),
            "m": {name: arrays[f"adam.m.{name}"] for name in meta["param_names"]},
            "v": {name: arrays[f"adam.v.{name}"] for name in meta["param_names"]},
        }
    return Checkpoint(
        config=ModelConfig.from_dict(meta["config"]),
        norm=Normalization.from_dict(meta["normalization"]),
        params=params,
        optimizer=optimizer,
        metadata=meta.get("metadata", {}),
    )


# ---------------------------------------------------------------------------
# training


def _clip_gradients(store: ParamStore, max_norm: float) -> None:
    grads = store.grad_arrays()
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for _, p in store.items():
            if p.grad is not None:
                p.grad = p.grad * scale


def _val_rmse_minutes(model: STPN, norm: Normalization, windows, batch_size: int) -> float:
    """Masked RMSE in minutes over a whole windowed segment."""
    if len(windows) == 0:
        return float("nan")
    sse, count = 0.0, 0
    for lo in range(0, len(windows), batch_size):
        batch = windows.batch(range(lo, min(lo + batch_size, len(windows))))
        pred = model.predict_batch(batch["x_norm"], batch["z"], batch["pos_in"], batch["pos_out"])
        minutes = norm.invert(pred)
        diff = (minutes - batch["y_minutes"]) * batch["y_mask"]
        sse += float(np.sum(diff * diff))
        count += int(batch["y_mask"].sum())
    return float(np.sqrt(sse / count)) if count else float("nan")


def train(
    config: ModelConfig,
    bundle: DatasetBundle,
    graph: MultiGraph,
    seed: int = 0,
    epochs: int | None = None,
    log=None,
) -> tuple[Checkpoint, dict]:
    """Minimize masked RMSE with Adam; keep the best-validation parameters.

    Deterministic for a fixed seed (and single-threaded BLAS). A non-finite
    loss aborts and returns the best checkpoint so far.
    """
    config.validate()
    if config.slots_per_day != bundle.delays.slots_per_day:
        raise ValueError(
            f"config slots_per_day={config.slots_per_day} but dataset has "
            f"{bundle.delays.slots_per_day}"
        )
    epochs = config.epochs if epochs is None else epochs
    h, p = config.history_steps, config.horizon_steps
    train_ws = bundle.windows(h, p, "train")
    val_ws = bundle.windows(h, p, "val")
    model = STPN(config, graph, seed=seed)
    state = AdamState(model.params)
    rng = np.random.default_rng(seed)

    best = {
        "params": model.params.to_arrays(),
        "val_rmse": _val_rmse_minutes(model, bundle.norm, val_ws, config.batch_size),
        "epoch": 0,
    }
    history = {"train_loss": [], "val_rmse": [best["val_rmse"]]}
    aborted = False

    for epoch in range(epochs):
        order = rng.permutation(len(train_ws))
        epoch_losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = train_ws.batch(order[lo : lo + config.batch_size])
            if ad.masked_count(batch["y_mask"]) == 0:
                continue
            pred, _ = model.forward_batch(
                batch["x_norm"], batch["z"], batch["pos_in"], batch["pos_out"]
            )
            loss = ad.masked_rmse(pred, batch["y_norm"], batch["y_mask"])
            if not np.isfinite(loss.value):
                aborted = True
                break
            epoch_losses.append(float(loss.value))
            model.params.zero_grads()
            ad.backward(loss)
            if config.grad_clip > 0:
                _clip_gradients(model.params, config.grad_clip)
            ad.adam_step(
                model.params, state, lr=config.lr, beta1=config.beta1,
                beta2=config.beta2, eps=config.eps,
            )
        if aborted:
            break
        val_rmse = _val_rmse_minutes(model, bundle.norm, val_ws, config.batch_size)
        history["train_loss"].append(float(np.mean(epoch_losses)) if epoch_losses else float("nan"))
        history["val_rmse"].append(val_rmse)
        if np.isnan(best["val_rmse"]) or (not np.isnan(val_rmse) and val_rmse < best["val_rmse"]):
            best = {"params": model.params.to_arrays(), "val_rmse": val_rmse, "epoch": epoch + 1}
        if log:
            log(f"epoch {epoch + 1}/{epochs} train_loss={history['train_loss'][-1]:.4f} "
                f"val_rmse={val_rmse:.4f}")

    ckpt = Checkpoint(
        config=config,
        norm=bundle.norm,
        params=best["params"],
        optimizer={"step": state.step, "m": state.m, "v": state.v},
        metadata={
            "seed": seed,
            "epochs_run": len(history["train_loss"]),
            "best_epoch": best["epoch"],
            "best_val_rmse": None if np.isnan(best["val_rmse"]) else best["val_rmse"],
            "aborted_non_finite": aborted,
        },
    )
    return ckpt, history


# ---------------------------------------------------------------------------
# evaluation


HORIZON_SLICE_STEPS = (3, 6, 12)
CHANNEL_NAMES = ("arrival", "departure")


def _slice_label(step: int) -> str:
    return f"{step * 0.5:g}h"


def predict_segment(ckpt: Checkpoint, bundle: DatasetBundle, graph: MultiGraph, segment: str,
                    batch_size: int = 64):
    """Inverse-normalized predictions plus targets for one split segment."""
    model = ckpt.model(graph)
    ws = bundle.windows(ckpt.config.history_steps, ckpt.config.horizon_steps, segment)
    if len(ws) == 0:
        raise ValueError(f"no evaluable windows in segment {segment!r}")
    preds, targets, masks = [], [], []
    for lo in range(0, len(ws), batch_size):
        batch = ws.batch(range(lo, min(lo + batch_size, len(ws))))
        pred_norm = model.predict_batch(batch["x_norm"], batch["z"], batch["pos_in"], batch["pos_out"])
        preds.append(ckpt.norm.invert(pred_norm))
        targets.append(batch["y_minutes"])
        masks.append(batch["y_mask"])
    return np.concatenate(preds), np.concatenate(targets), np.concatenate(masks)


def metric_triple(pred: np.ndarray, target: np.ndarray) -> dict:
    """MAE, RMSE, and R^2 over a flat prediction set."""
    err = pred - target
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    sst = float(np.sum((target - target.mean()) ** 2))
    r2 = None if sst == 0 else float(1.0 - np.sum(err * err) / sst)
    return {"mae": mae, "rmse": rmse, "r2": r2, "count": int(pred.size)}


def evaluate(
    ckpt: Checkpoint,
    bundle: DatasetBundle,
    graph: MultiGraph,
    segment: str = "test",
    slice_steps=HORIZON_SLICE_STEPS,
    aggregate_up_to: bool = False,
) -> dict:
    """Per-channel, per-horizon-slice metrics over unmasked entries.

    A slice at step k scores only the predictions at that lead time;
    ``aggregate_up_to`` pools steps 1..k instead.
    """
    preds, targets, masks = predict_segment(ckpt, bundle, graph, segment)
    p = ckpt.config.horizon_steps
    channels = {}
    for c, name in enumerate(CHANNEL_NAMES):
        slices = {}
        for step in slice_steps:
            if step > p:
                continue
            sel = slice(0, step) if aggregate_up_to else slice(step - 1, step)
            m = masks[:, :, sel, c]
            slices[_slice_label(step)] = metric_triple(
                preds[:, :, sel, c][m], targets[:, :, sel, c][m]
            )
        all_mask = masks[:, :, :, c]
        slices["all"] = metric_triple(preds[:, :, :, c][all_mask], targets[:, :, :, c][all_mask])
        channels[name] = slices
    return {
        "schema_version": METRICS_SCHEMA_VERSION,
        "kind": "metrics_report",
        "segment": segment,
        "horizon_mode": "aggregated" if aggregate_up_to else "single_step",
        "channels": channels,
    }


def metrics_report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


PREDICTION_SCHEMA_VERSION = 1


def predict_window(ckpt: Checkpoint, bundle: DatasetBundle, graph: MultiGraph, window_start: str) -> dict:
    """Prediction in minutes for the window whose first input step is ``window_start``."""
    t0 = bundle.timeline_index(window_start)
    h, p = ckpt.config.history_steps, ckpt.config.horizon_steps
    values, mask, z, pos_in, pos_out = _window_inputs(bundle, t0, h, p)
    model = ckpt.model(graph)
    x = ckpt.norm.apply(values, mask)
    pred = ckpt.norm.invert(model.predict_batch(x[None], z[None], pos_in[None], pos_out[None])[0])
    d = bundle.delays
    horizon_times = [d.time_axis[t0 + h + j] if t0 + h + j < d.t else None for j in range(p)]
    return {
        "schema_version": PREDICTION_SCHEMA_VERSION,
        "kind": "prediction",
        "window_start": window_start,
        "horizon_times": horizon_times,
        "airports": list(d.airports),
        "prediction": pred.tolist(),
    }


def predict_arrays(
    ckpt: Checkpoint,
    graph: MultiGraph,
    delays,
    weather_codes,
    mask=None,
    pos_in=None,
) -> dict:
    """Prediction from explicit (N, h, 2) delays and (N, h) weather codes.

    Delays are raw minutes; a missing mask means fully observed. Time-of-day
    positions default to consecutive slots starting at 0.
    """
    delays = np.asarray(delays, dtype=np.float64)
    weather_codes = np.asarray(weather_codes)
    h, p = ckpt.config.history_steps, ckpt.config.horizon_steps
    n = len(graph.airports)
    if delays.shape != (n, h, 2):
        raise ValueError(f"delays shape {delays.shape} does not match required ({n}, {h}, 2)")
    if weather_codes.shape != (n, h):
        raise ValueError(f"weather codes shape {weather_codes.shape} does not match ({n}, {h})")
    mask = np.ones((n, h, 2), bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != (n, h, 2):
        raise ValueError(f"mask shape {mask.shape} does not match ({n}, {h}, 2)")
    t_d = ckpt.config.slots_per_day
    pos_in = (
        np.arange(h) % t_d if pos_in is None else np.asarray(pos_in, dtype=np.int64) % t_d
    )
    if pos_in.shape != (h,):
        raise ValueError(f"pos_in must have {h} entries")
    pos_out = (pos_in[-1] + 1 + np.arange(p)) % t_d
    model = ckpt.model(graph)
    x = ckpt.norm.apply(delays, mask)
    pred = ckpt.norm.invert(model.predict_batch(x[None], weather_codes[None], pos_in[None], pos_out[None])[0])
    return {
        "schema_version": PREDICTION_SCHEMA_VERSION,
        "kind": "prediction",
        "window_start": None,
        "horizon_times": [None] * p,
        "airports": list(graph.airports),
        "prediction": pred.tolist(),
    }


# ---------------------------------------------------------------------------
# intervention


def _window_inputs(bundle: DatasetBundle, t0: int, h: int, p: int):
    d = bundle.delays
    if t0 < 0 or t0 + h > d.t:
        raise ValueError(
            f"input window [{t0}, {t0 + h}) does not fit the timeline of {d.t} steps"
        )
    slots = d.slot_positions()
    pos_in = slots[t0 : t0 + h]
    if t0 + h + p <= d.t:
        pos_out = slots[t0 + h : t0 + h + p]
    else:
        pos_out = (pos_in[-1] + 1 + np.arange(p)) % d.slots_per_day
    values = d.values[:, t0 : t0 + h, :]
    mask = d.mask[:, t0 : t0 + h, :]
    z = bundle.covariates.codes[:, t0 : t0 + h]
    return values, mask, z, pos_in, pos_out


def intervene(
    ckpt: Checkpoint,
    bundle: DatasetBundle,
    graph: MultiGraph,
    window_start: str,
    airports: list[str],
) -> dict:
    """Zero the departure history of the chosen airports and re-predict.

    delta = factual - intervened, in minutes, per (airport, step, channel).
    The intervened cells are marked observed before normalization, so the
    model sees "0 minutes", not "missing".
    """
    d = bundle.delays
    index = {code: i for i, code in enumerate(d.airports)}
    bad = [a for a in airports if a not in index]
    if bad:
        raise UnknownAirport(bad, d.airports)
    t0 = bundle.timeline_index(window_start)
    h, p = ckpt.config.history_steps, ckpt.config.horizon_steps
    values, mask, z, pos_in, pos_out = _window_inputs(bundle, t0, h, p)

    model = ckpt.model(graph)

    def predict(vals, msk) -> np.ndarray:
        x = ckpt.norm.apply(vals, msk)
        pred = model.predict_batch(x[None], z[None], pos_in[None], pos_out[None])[0]
        return ckpt.norm.invert(pred)

    factual = predict(values, mask)
    if airports:
        rows = [index[a] for a in airports]
        values2 = values.copy()
        mask2 = mask.copy()
        values2[rows, :, 1] = 0.0
        mask2[rows, :, 1] = True
        intervened = predict(values2, mask2)
    else:
        intervened = factual.copy()
    delta = factual - intervened

    horizon_times = [
        d.time_axis[t0 + h + j] if t0 + h + j < d.t else None for j in range(p)
    ]
    return {
        "schema_version": INTERVENTION_SCHEMA_VERSION,
        "kind": "intervention_result",
        "window_start": window_start,
        "input_times": list(d.time_axis[t0 : t0 + h]),
        "horizon_times": horizon_times,
        "airports": list(d.airports),
        "intervened_airports": list(airports),
        "delta": delta.tolist(),
        "factual": factual.tolist(),
        "intervened": intervened.tolist(),
    }


# ---------------------------------------------------------------------------
# attention export


def export_attention(ckpt: Checkpoint, bundle: DatasetBundle, graph: MultiGraph, window_start: str) -> dict:
    """Per-layer, per-head temporal adjacency matrices for one window."""
    t0 = bundle.timeline_index(window_start)
    h, p = ckpt.config.history_steps, ckpt.config.horizon_steps
    values, mask, z, pos_in, pos_out = _window_inputs(bundle, t0, h, p)
    model = ckpt.model(graph)
    x = ckpt.norm.apply(values, mask)
    _, maps = forward(ckpt.config, model.params, model.spatial_powers, x, z, pos_in, pos_out)
    layers = []
    for layer_idx, stacked in enumerate(maps):
        is_output = layer_idx == len(maps) - 1
        heads = [
            {"head": i, "weights": stacked[i].tolist()} for i in range(stacked.shape[0])
        ]
        layers.append(
            {
                "layer": "output" if is_output else layer_idx,
                "t_in": int(stacked.shape[1]),
                "t_out": int(stacked.shape[2]),
                "heads": heads,
            }
        )
    return {
        "schema_version": ATTENTION_SCHEMA_VERSION,
        "kind": "attention_export",
        "window_start": window_start,
        "layers": layers,
    }
