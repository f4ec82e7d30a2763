"""Flight/weather ingestion, delay tensors, normalization, windows, splits.

Delays are aggregated into 30-minute slots per airport: channel 0 is
arrival delay (flights by destination and scheduled arrival), channel 1 is
departure delay (origin and scheduled departure). Per-flight delays are
clipped to [clip_min, clip_max] minutes before averaging; slots with no
flights are masked out and hold 0.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from .artifacts import read_container, write_container

DATASET_FORMAT_VERSION = 1

WINDOW_MINUTES = 30
CLIP_MAX_MINUTES = 30.0
CLIP_MIN_MINUTES = -30.0


@dataclass
class FlightRecord:
    origin: str
    destination: str
    scheduled_departure: datetime
    scheduled_arrival: datetime
    departure_delay: float
    arrival_delay: float


@dataclass
class IngestReport:
    n_records: int = 0
    unknown_airport: int = 0
    out_of_window: int = 0
    arrival_cells: int = 0
    departure_cells: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DelayTensor:
    """(N, T, 2) observed delays in minutes with an observation mask."""

    values: np.ndarray
    mask: np.ndarray
    time_axis: list[str]
    slots_per_day: int
    airports: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.mask.shape or self.values.ndim != 3 or self.values.shape[2] != 2:
            raise ValueError(f"bad delay tensor shapes: {self.values.shape} vs {self.mask.shape}")
        if self.values.shape[1] != len(self.time_axis):
            raise ValueError("time axis length does not match tensor")
        if self.values.shape[0] != len(self.airports):
            raise ValueError("airport list length does not match tensor")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t(self) -> int:
        return self.values.shape[1]

    def slot_positions(self) -> np.ndarray:
        """Time-of-day slot index in [0, slots_per_day) for each timeline step."""
        minutes = np.array(
            [int(ts[11:13]) * 60 + int(ts[14:16]) for ts in self.time_axis], dtype=np.int64
        )
        start = minutes.min()
        return (minutes - start) // WINDOW_MINUTES

    def weekdays(self) -> np.ndarray:
        return np.array(
            [date.fromisoformat(ts[:10]).weekday() for ts in self.time_axis], dtype=np.int64
        )


@dataclass
class CovariateSeq:
    """(N, T) integer weather category codes."""

    codes: np.ndarray
    categories: list[str]

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        c = len(self.categories)
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= c):
            raise ValueError(f"weather codes out of range [0, {c})")


def build_time_axis(start: date, days: int, day_start_hour: int = 6, day_end_hour: int = 24) -> list[str]:
    """ISO timestamps for every 30-minute slot inside the daily operating window."""
    if not 0 <= day_start_hour < day_end_hour <= 24:
        raise ValueError(f"bad operating window {day_start_hour}..{day_end_hour}")
    slots = (day_end_hour - day_start_hour) * 60 // WINDOW_MINUTES
    axis = []
    for d in range(days):
        day = start + timedelta(days=d)
        base = datetime(day.year, day.month, day.day, day_start_hour)
        for s in range(slots):
            axis.append((base + timedelta(minutes=WINDOW_MINUTES * s)).strftime("%Y-%m-%dT%H:%M"))
    return axis


def _slot_index(ts: datetime, start: date, day_start_hour: int, day_end_hour: int, slots_per_day: int):
    minute = ts.hour * 60 + ts.minute
    lo, hi = day_start_hour * 60, day_end_hour * 60
    if not lo <= minute < hi:
        return None
    day = (ts.date() - start).days
    if day < 0:
        return None
    return day * slots_per_day + (minute - lo) // WINDOW_MINUTES


def aggregate(
    records,
    airports: list[str],
    start: date | None = None,
    days: int | None = None,
    day_start_hour: int = 6,
    day_end_hour: int = 24,
    clip_max: float = CLIP_MAX_MINUTES,
    clip_min: float = CLIP_MIN_MINUTES,
) -> tuple[DelayTensor, IngestReport]:
    """Average per-flight delays into (airport, slot, channel) cells.

    Records with an unknown origin or destination are skipped and counted;
    sides whose scheduled time falls outside the operating window are
    skipped per side. Aggregation is a mean, so record order is irrelevant.
    """
    records = list(records)
    report = IngestReport(n_records=len(records))
    index = {code: i for i, code in enumerate(airports)}
    if start is None or days is None:
        if not records:
            raise ValueError("cannot infer a timeline from zero records")
        dates = [r.scheduled_departure.date() for r in records] + [
            r.scheduled_arrival.date() for r in records
        ]
        start = min(dates) if start is None else start
        days = (max(dates) - start).days + 1 if days is None else days
    slots_per_day = (day_end_hour - day_start_hour) * 60 // WINDOW_MINUTES
    axis = build_time_axis(start, days, day_start_hour, day_end_hour)
    n, t = len(airports), len(axis)
    sums = np.zeros((n, t, 2))
    counts = np.zeros((n, t, 2), dtype=np.int64)

    for r in records:
        if r.origin not in index or r.destination not in index:
            report.unknown_airport += 1
            continue
        k_arr = _slot_index(r.scheduled_arrival, start, day_start_hour, day_end_hour, slots_per_day)
        if k_arr is not None and k_arr < t:
            v = index[r.destination]
            sums[v, k_arr, 0] += float(np.clip(r.arrival_delay, clip_min, clip_max))
            counts[v, k_arr, 0] += 1
        else:
            report.out_of_window += 1
        k_dep = _slot_index(r.scheduled_departure, start, day_start_hour, day_end_hour, slots_per_day)
        if k_dep is not None and k_dep < t:
            v = index[r.origin]
            sums[v, k_dep, 1] += float(np.clip(r.departure_delay, clip_min, clip_max))
            counts[v, k_dep, 1] += 1
        else:
            report.out_of_window += 1

    mask = counts > 0
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=mask)
    report.arrival_cells = int(mask[:, :, 0].sum())
    report.departure_cells = int(mask[:, :, 1].sum())
    delays = DelayTensor(values, mask, axis, slots_per_day, list(airports))
    return delays, report


def build_covariates(
    weather_rows,
    airports: list[str],
    time_axis: list[str],
    slots_per_day: int,
    categories: list[str],
    priority: list[str] | None = None,
    day_start_hour: int = 6,
    day_end_hour: int = 24,
) -> CovariateSeq:
    """Assign each (airport, slot) the most severe category reported in it.

    Severity defaults to list position (later = more severe); pass
    ``priority`` (most severe first) to override. Empty slots get code 0.
    """
    index = {code: i for i, code in enumerate(airports)}
    cat_code = {name: i for i, name in enumerate(categories)}
    if priority is None:
        severity = {name: i for i, name in enumerate(categories)}
    else:
        severity = {name: len(priority) - i for i, name in enumerate(priority)}
    start = date.fromisoformat(time_axis[0][:10])
    t = len(time_axis)
    codes = np.zeros((len(airports), t), dtype=np.int64)
    best = np.full((len(airports), t), -1, dtype=np.int64)
    for airport, ts, category in weather_rows:
        if airport not in index or category not in cat_code:
            continue
        k = _slot_index(ts, start, day_start_hour, day_end_hour, slots_per_day)
        if k is None or k >= t:
            continue
        sev = severity.get(category, -1)
        v = index[airport]
        if sev > best[v, k]:
            best[v, k] = sev
            codes[v, k] = cat_code[category]
    return CovariateSeq(codes, list(categories))


# ---------------------------------------------------------------------------
# normalization


@dataclass
class Normalization:
    """Per-channel z-score fitted on observed training entries only."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Normalize; masked cells become 0 (the channel mean)."""
        z = (values - self.mean) / self.std
        return np.where(mask, z, 0.0)

    def invert(self, normalized: np.ndarray) -> np.ndarray:
        return normalized * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def zscore_fit(values: np.ndarray, mask: np.ndarray, train_stop: int) -> Normalization:
    """Fit channel statistics on observed cells in [0, train_stop)."""
    mean = np.zeros(2)
    std = np.zeros(2)
    for c in range(2):
        obs = values[:, :train_stop, c][mask[:, :train_stop, c]]
        if obs.size == 0:
            raise ValueError(f"channel {c}: no observed training entries")
        mean[c] = obs.mean()
        std[c] = obs.std()
        if std[c] == 0:
            raise ValueError(f"channel {c}: zero variance in training data (degenerate)")
    return Normalization(mean, std)


# ---------------------------------------------------------------------------
# chronological split and windowing


@dataclass
class Split:
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]


def chronological_split(n_steps: int, train_frac: float = 0.7, val_frac: float = 0.1) -> Split:
    """Contiguous floor-based segments; test takes the remainder."""
    n_train = int(n_steps * train_frac)
    n_val = int(n_steps * val_frac)
    return Split(
        train=(0, n_train),
        val=(n_train, n_train + n_val),
        test=(n_train + n_val, n_steps),
    )


@dataclass
class WindowSample:
    x_norm: np.ndarray  # (N, h, 2) normalized, masked cells filled with 0
    x_mask: np.ndarray  # (N, h, 2) bool
    z: np.ndarray  # (N, h) weather codes
    y_norm: np.ndarray  # (N, p, 2)
    y_minutes: np.ndarray  # (N, p, 2) raw minutes
    y_mask: np.ndarray  # (N, p, 2) bool
    pos_in: np.ndarray  # (h,) time-of-day slots
    pos_out: np.ndarray  # (p,)
    t_start: int  # timeline index of the first input step


class WindowedDataset:
    """Sliding (h input, p target) windows confined to one split segment."""

    def __init__(
        self,
        delays: DelayTensor,
        covariates: CovariateSeq,
        norm: Normalization,
        h: int,
        p: int,
        segment: tuple[int, int],
        stride: int = 1,
    ):
        if h < 1 or p < 1:
            raise ValueError("h and p must be >= 1")
        self.delays = delays
        self.covariates = covariates
        self.norm = norm
        self.h, self.p = h, p
        self._norm_values = norm.apply(delays.values, delays.mask)
        self._slots = delays.slot_positions()
        lo, hi = segment
        starts = []
        for t0 in range(lo, hi - (h + p) + 1, stride):
            if delays.mask[:, t0 + h : t0 + h + p, :].any():
                starts.append(t0)
        if hi - lo >= 1 and not starts and hi - lo < h + p:
            warnings.warn(
                f"segment of {hi - lo} steps is shorter than h+p={h + p}; no samples",
                RuntimeWarning,
            )
        self.starts = np.asarray(starts, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.starts)

    def sample(self, i: int) -> WindowSample:
        t0 = int(self.starts[i])
        h, p = self.h, self.p
        d = self.delays
        return WindowSample(
            x_norm=self._norm_values[:, t0 : t0 + h, :],
            x_mask=d.mask[:, t0 : t0 + h, :],
            z=self.covariates.codes[:, t0 : t0 + h],
            y_norm=self._norm_values[:, t0 + h : t0 + h + p, :],
            y_minutes=d.values[:, t0 + h : t0 + h + p, :],
            y_mask=d.mask[:, t0 + h : t0 + h + p, :],
            pos_in=self._slots[t0 : t0 + h],
            pos_out=self._slots[t0 + h : t0 + h + p],
            t_start=t0,
        )

    def sample_at(self, t0: int) -> WindowSample:
        """Window addressed by timeline index of its first input step."""
        matches = np.nonzero(self.starts == t0)[0]
        if len(matches) == 0:
            raise KeyError(f"no window starting at timeline index {t0}")
        return self.sample(int(matches[0]))

    def batch(self, indices) -> dict:
        samples = [self.sample(int(i)) for i in indices]
        return {
            "x_norm": np.stack([s.x_norm for s in samples]),
            "x_mask": np.stack([s.x_mask for s in samples]),
            "z": np.stack([s.z for s in samples]),
            "y_norm": np.stack([s.y_norm for s in samples]),
            "y_minutes": np.stack([s.y_minutes for s in samples]),
            "y_mask": np.stack([s.y_mask for s in samples]),
            "pos_in": np.stack([s.pos_in for s in samples]),
            "pos_out": np.stack([s.pos_out for s in samples]),
        }


# ---------------------------------------------------------------------------
# dataset bundle + artifact io


@dataclass
class DatasetBundle:
    delays: DelayTensor
    covariates: CovariateSeq
    norm: Normalization
    split: Split
    meta: dict = field(default_factory=dict)

    def windows(self, h: int, p: int, segment: str, stride: int = 1) -> WindowedDataset:
        seg = getattr(self.split, segment)
        return WindowedDataset(self.delays, self.covariates, self.norm, h, p, seg, stride)

    def timeline_index(self, timestamp: str) -> int:
        try:
            return self.delays.time_axis.index(timestamp)
        except ValueError:
            raise KeyError(
                f"timestamp {timestamp!r} not on the dataset timeline "
                f"({self.delays.time_axis[0]} .. {self.delays.time_axis[-1]})"
            ) from None


def make_bundle(
    delays: DelayTensor,
    covariates: CovariateSeq,
    train_frac: float = 0.7,
    val_frac: float = 0.1,
    meta: dict | None = None,
) -> DatasetBundle:
    split = chronological_split(delays.t, train_frac, val_frac)
    norm = zscore_fit(delays.values, delays.mask, split.train[1])
    return DatasetBundle(delays, covariates, norm, split, meta or {})


def save_dataset(bundle: DatasetBundle, path) -> None:
    d = bundle.delays
    meta = {
        "dataset_format_version": DATASET_FORMAT_VERSION,
        "airports": d.airports,
        "time_axis": d.time_axis,
        "slots_per_day": d.slots_per_day,
        "weather_categories": bundle.covariates.categories,
        "normalization": bundle.norm.to_dict(),
        "split": {
            "train": list(bundle.split.train),
            "val": list(bundle.split.val),
            "test": list(bundle.split.test),
        },
        "extra": bundle.meta,
    }
    arrays = {
        "values": d.values,
        "mask": d.mask.astype(np.float64),
        "weather_codes": bundle.covariates.codes.astype(np.float64),
    }
    write_container(path, "dataset", meta, arrays)


def load_dataset(path) -> DatasetBundle:
    meta, arrays = read_container(path, expect_kind="dataset")
    if meta.get("dataset_format_version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported dataset version {meta.get('dataset_format_version')!r}")
    delays = DelayTensor(
        arrays["values"],
        arrays["mask"] > 0.5,
        list(meta["time_axis"]),
        int(meta["slots_per_day"]),
        list(meta["airports"]),
    )
    covariates = CovariateSeq(arrays["weather_codes"].astype(np.int64), list(meta["weather_categories"]))
    split = Split(
        train=tuple(meta["split"]["train"]),
        val=tuple(meta["split"]["val"]),
        test=tuple(meta["split"]["test"]),
    )
    return DatasetBundle(delays, covariates, Normalization.from_dict(meta["normalization"]), split, meta.get("extra", {}))


# ---------------------------------------------------------------------------
# delimited-file ingestion


def read_airport_table(path, delimiter: str = ",", col_code="code", col_lat="lat", col_lon="lon"):
    airports, coords = [], []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f, delimiter=delimiter):
            airports.append(row[col_code].strip())
            coords.append((float(row[col_lat]), float(row[col_lon])))
    if not airports:
        raise ValueError(f"{path}: no airports")
    return airports, coords


def read_flight_records(
    path,
    delimiter: str = ",",
    time_format: str = "%Y-%m-%d %H:%M",
    col_origin="origin",
    col_destination="destination",
    col_sched_dep="scheduled_departure",
    col_sched_arr="scheduled_arrival",
    col_dep_delay="departure_delay",
    col_arr_delay="arrival_delay",
):
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f, delimiter=delimiter):
            records.append(
                FlightRecord(
                    origin=row[col_origin].strip(),
                    destination=row[col_destination].strip(),
                    scheduled_departure=datetime.strptime(row[col_sched_dep].strip(), time_format),
                    scheduled_arrival=datetime.strptime(row[col_sched_arr].strip(), time_format),
                    departure_delay=float(row[col_dep_delay]),
                    arrival_delay=float(row[col_arr_delay]),
                )
            )
    return records


def read_weather_rows(
    path,
    delimiter: str = ",",
    time_format: str = "%Y-%m-%d %H:%M",
    col_airport="airport",
    col_time="time",
    col_category="category",
):
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f, delimiter=delimiter):
            rows.append(
                (
                    row[col_airport].strip(),
                    datetime.strptime(row[col_time].strip(), time_format),
                    row[col_category].strip(),
                )
            )
    return rows


def od_flow_counts(records, airports: list[str], train_stop_timestamp: str) -> np.ndarray:
    """O->D flight counts restricted to departures before the train boundary."""
    index = {code: i for i, code in enumerate(airports)}
    cutoff = datetime.strptime(train_stop_timestamp, "%Y-%m-%dT%H:%M")
    flow = np.zeros((len(airports), len(airports)))
    for r in records:
        if r.origin in index and r.destination in index and r.scheduled_departure < cutoff:
            flow[index[r.origin], index[r.destination]] += 1
    return flow
