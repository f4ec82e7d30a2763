"""Command-line entry points for the full pipeline.

Every subcommand takes --config pointing at the key-value config file
(see config.py for the format and the STPN_ env-var override rule).
Failures print one machine-parsable line to stderr:

    STPN_ERROR {"code": "...", "message": "..."}

and exit nonzero; argparse usage errors exit 2 with usage text on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date

from . import config as C
from . import data as D
from . import graphs as G
from . import training as TR


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _require(cfg: dict, key: str) -> str:
    if key not in cfg:
        raise CliError("missing_config", f"config key {key!r} is required")
    return cfg[key]


def _load_dataset(cfg):
    return D.load_dataset(_require(cfg, "data.dataset_artifact"))


def _load_graph(cfg):
    return G.load_graph(_require(cfg, "graph.artifact"))


def _load_checkpoint(cfg):
    return TR.load_checkpoint(_require(cfg, "train.checkpoint"))


def _model_config_from(cfg, bundle, graph) -> C.ModelConfig:
    """Architecture knobs come from the config file; dataset/graph-derived
    shapes (airport count, relation count, weather vocabulary, slot count)
    come from the artifacts."""
    mc = C.ModelConfig.from_config_map(cfg)
    mc.n_airports = bundle.delays.n
    mc.relations = len(graph.relations)
    mc.weather_categories = len(bundle.covariates.categories)
    mc.slots_per_day = bundle.delays.slots_per_day
    mc.validate()
    return mc


def _write_json(doc: dict, out_path: str | None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(cfg, args) -> int:
    delim = cfg.get("data.delimiter", ",")
    time_format = cfg.get("data.time_format", "%Y-%m-%d %H:%M")
    airports, coords = D.read_airport_table(
        _require(cfg, "data.airports_file"),
        delimiter=delim,
        col_code=cfg.get("data.airports.col_code", "code"),
        col_lat=cfg.get("data.airports.col_lat", "lat"),
        col_lon=cfg.get("data.airports.col_lon", "lon"),
    )
    records = D.read_flight_records(
        _require(cfg, "data.flights_file"),
        delimiter=delim,
        time_format=time_format,
        col_origin=cfg.get("data.flights.col_origin", "origin"),
        col_destination=cfg.get("data.flights.col_destination", "destination"),
        col_sched_dep=cfg.get("data.flights.col_scheduled_departure", "scheduled_departure"),
        col_sched_arr=cfg.get("data.flights.col_scheduled_arrival", "scheduled_arrival"),
        col_dep_delay=cfg.get("data.flights.col_departure_delay", "departure_delay"),
        col_arr_delay=cfg.get("data.flights.col_arrival_delay", "arrival_delay"),
    )
    day_start = C.get_int(cfg, "data.day_start_hour", 6)
    day_end = C.get_int(cfg, "data.day_end_hour", 24)
    start_key = cfg.get("data.start_date")
    days_key = cfg.get("data.days")
    delays, report = D.aggregate(
        records,
        airports,
        start=date.fromisoformat(start_key) if start_key else None,
        days=int(days_key) if days_key else None,
        day_start_hour=day_start,
        day_end_hour=day_end,
        clip_max=C.get_float(cfg, "data.clip_max", D.CLIP_MAX_MINUTES),
        clip_min=C.get_float(cfg, "data.clip_min", D.CLIP_MIN_MINUTES),
    )
    categories = C.get_list(cfg, "data.weather_categories", C.US_WEATHER_CATEGORIES)
    priority = C.get_list(cfg, "data.weather_priority", []) or None
    weather_file = cfg.get("data.weather_file")
    if weather_file:
        rows = D.read_weather_rows(
            weather_file,
            delimiter=delim,
            time_format=time_format,
            col_airport=cfg.get("data.weather.col_airport", "airport"),
            col_time=cfg.get("data.weather.col_time", "time"),
            col_category=cfg.get("data.weather.col_category", "category"),
        )
        covariates = D.build_covariates(
            rows, airports, delays.time_axis, delays.slots_per_day, categories, priority,
            day_start_hour=day_start, day_end_hour=day_end,
        )
    else:
        import numpy as np

        covariates = D.CovariateSeq(np.zeros((delays.n, delays.t), dtype=int), categories)
    bundle = D.make_bundle(
        delays,
        covariates,
        train_frac=C.get_float(cfg, "data.train_frac", 0.7),
        val_frac=C.get_float(cfg, "data.val_frac", 0.1),
        meta={"coordinates": {a: list(c) for a, c in zip(airports, coords)}},
    )
    out = _require(cfg, "data.dataset_artifact")
    D.save_dataset(bundle, out)
    print(json.dumps({"dataset": out, "report": report.to_dict(), "steps": delays.t}))
    return 0


def cmd_build_graph(cfg, args) -> int:
    bundle = _load_dataset(cfg)
    delim = cfg.get("data.delimiter", ",")
    airports, coords = D.read_airport_table(
        _require(cfg, "data.airports_file"),
        delimiter=delim,
        col_code=cfg.get("data.airports.col_code", "code"),
        col_lat=cfg.get("data.airports.col_lat", "lat"),
        col_lon=cfg.get("data.airports.col_lon", "lon"),
    )
    if airports != bundle.delays.airports:
        raise CliError("bad_request", "airport table does not match the dataset artifact")
    records = D.read_flight_records(
        _require(cfg, "data.flights_file"),
        delimiter=delim,
        time_format=cfg.get("data.time_format", "%Y-%m-%d %H:%M"),
        col_origin=cfg.get("data.flights.col_origin", "origin"),
        col_destination=cfg.get("data.flights.col_destination", "destination"),
        col_sched_dep=cfg.get("data.flights.col_scheduled_departure", "scheduled_departure"),
        col_sched_arr=cfg.get("data.flights.col_scheduled_arrival", "scheduled_arrival"),
        col_dep_delay=cfg.get("data.flights.col_departure_delay", "departure_delay"),
        col_arr_delay=cfg.get("data.flights.col_arrival_delay", "arrival_delay"),
    )
    train_stop = bundle.split.train[1]
    axis = bundle.delays.time_axis
    cutoff = axis[train_stop] if train_stop < len(axis) else "9999-01-01T00:00"
    flow = D.od_flow_counts(records, airports, cutoff)
    sigma = cfg.get("graph.sigma_km")
    graph = G.build_multigraph(airports, coords, flow, sigma=float(sigma) if sigma else None)
    out = _require(cfg, "graph.artifact")
    G.save_graph(graph, out)
    print(json.dumps({"graph": out, "relations": [k for k, _ in graph.relations]}))
    return 0


def cmd_train(cfg, args) -> int:
    bundle = _load_dataset(cfg)
    graph = _load_graph(cfg)
    mc = _model_config_from(cfg, bundle, graph)
    seed = args.seed if args.seed is not None else C.get_int(cfg, "train.seed", 0)
    ckpt, history = TR.train(mc, bundle, graph, seed=seed, log=lambda msg: print(msg, flush=True))
    out = _require(cfg, "train.checkpoint")
    TR.save_checkpoint(ckpt, out)
    print(json.dumps({
        "checkpoint": out,
        "best_epoch": ckpt.metadata["best_epoch"],
        "best_val_rmse": ckpt.metadata["best_val_rmse"],
        "aborted": ckpt.metadata["aborted_non_finite"],
    }))
    return 0


def cmd_evaluate(cfg, args) -> int:
    bundle = _load_dataset(cfg)
    graph = _load_graph(cfg)
    ckpt = _load_checkpoint(cfg)
    report = TR.evaluate(ckpt, bundle, graph, segment=args.segment, aggregate_up_to=args.agg)
    _write_json(report, args.out)
    return 0


def cmd_predict(cfg, args) -> int:
    graph = _load_graph(cfg)
    ckpt = _load_checkpoint(cfg)
    if args.window_start:
        bundle = _load_dataset(cfg)
        doc = TR.predict_window(ckpt, bundle, graph, args.window_start)
    elif args.input:
        with open(args.input, encoding="utf-8") as f:
            payload = json.load(f)
        doc = TR.predict_arrays(
            ckpt,
            graph,
            payload["delays"],
            payload["weather_codes"],
            mask=payload.get("mask"),
            pos_in=payload.get("pos_in"),
        )
    else:
        raise CliError("bad_request", "predict needs --window-start or --input")
    _write_json(doc, args.out)
    return 0


def cmd_intervene(cfg, args) -> int:
    bundle = _load_dataset(cfg)
    graph = _load_graph(cfg)
    ckpt = _load_checkpoint(cfg)
    airports = [a for a in (args.airports or "").split(",") if a]
    doc = TR.intervene(ckpt, bundle, graph, args.window_start, airports)
    _write_json(doc, args.out)
    return 0


def cmd_export_attention(cfg, args) -> int:
    bundle = _load_dataset(cfg)
    graph = _load_graph(cfg)
    ckpt = _load_checkpoint(cfg)
    doc = TR.export_attention(ckpt, bundle, graph, args.window_start)
    _write_json(doc, args.out)
    return 0


def cmd_serve(cfg, args) -> int:
    from .service import serve

    bundle = _load_dataset(cfg)
    graph = _load_graph(cfg)
    ckpt = _load_checkpoint(cfg)
    serve(ckpt, bundle, graph, host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stpn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", required=True, help="path to the key-value config file")
        p.set_defaults(fn=fn)
        return p

    add("ingest", cmd_ingest, help="aggregate flight/weather files into a dataset artifact")
    add("build-graph", cmd_build_graph, help="build the multi-relational airport graph")

    p = add("train", cmd_train, help="train a model and write a checkpoint")
    p.add_argument("--seed", type=int, default=None)

    p = add("evaluate", cmd_evaluate, help="metrics report on a split segment")
    p.add_argument("--segment", default="test", choices=["train", "val", "test"])
    p.add_argument("--agg", action="store_true", help="aggregate steps 1..k per horizon column")
    p.add_argument("--out", default=None)

    p = add("predict", cmd_predict, help="predict one window")
    p.add_argument("--window-start", default=None, help="timestamp of the first input step")
    p.add_argument("--input", default=None, help="JSON file with delays/weather_codes arrays")
    p.add_argument("--out", default=None)

    p = add("intervene", cmd_intervene, help="counterfactual: zero departure history")
    p.add_argument("--window-start", required=True)
    p.add_argument("--airports", default="", help="comma-separated airport codes (empty = none)")
    p.add_argument("--out", default=None)

    p = add("export-attention", cmd_export_attention, help="write attention maps for a window")
    p.add_argument("--window-start", required=True)
    p.add_argument("--out", default=None)

    p = add("serve", cmd_serve, help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000, help="0 binds an ephemeral port")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = C.load_config(args.config)
        return args.fn(cfg, args)
    except CliError as e:
        print(f'STPN_ERROR {json.dumps({"code": e.code, "message": str(e)})}', file=sys.stderr)
        return 1
    except TR.UnknownAirport as e:
        print(f'STPN_ERROR {json.dumps({"code": "unknown_airport", "message": str(e)})}', file=sys.stderr)
        return 1
    except (KeyError, ValueError, OSError) as e:
        print(f'STPN_ERROR {json.dumps({"code": "bad_request", "message": str(e)})}', file=sys.stderr)
        return 1


cli = main  # exit-code-returning entry point

if __name__ == "__main__":
    sys.exit(main())
