"""Hourly load and renewable capacity-factor series.

Holds the horizon container used everywhere else, a CSV reader/writer for the
``timestamp,load,<resource>...`` layout, a seeded synthetic generator with
diurnal, weekly, seasonal and year-to-year structure, and week slicing.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

logger = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760
DEFAULT_SLICE_HOURS = 168
DEFAULT_START = datetime(2015, 1, 1)


class DataError(ValueError):
    """Base class for input data problems."""


class SchemaError(DataError):
    pass


class ValidationError(DataError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class GapError(DataError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ConfigError(ValueError):
    pass


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HorizonData:
    """Hourly demand (MWh) and per-resource capacity factors over a horizon.

    Arrays are read-only after construction, so instances can be shared
    between workers.
    """

    load: np.ndarray
    profiles: Mapping[str, np.ndarray]
    start_timestamp: datetime = DEFAULT_START

    def __post_init__(self):
        load = _frozen(self.load)
        if load.ndim != 1:
            raise ValidationError("load must be one-dimensional")
        profiles = {}
        for name, series in self.profiles.items():
            arr = _frozen(series)
            if arr.shape != load.shape:
                raise ValidationError(
                    f"profile {name!r} has {arr.size} entries, expected {load.size}"
                )
            profiles[str(name)] = arr
        if not np.all(np.isfinite(load)) or np.any(load < 0):
            row = int(np.flatnonzero(~(load >= 0))[0])
            raise ValidationError("load must be finite and non-negative", row)
        for name, arr in profiles.items():
            bad = np.flatnonzero(~((arr >= 0) & (arr <= 1)))
            if bad.size:
                raise ValidationError(
                    f"capacity factor {name!r}={arr[bad[0]]} outside [0, 1]", int(bad[0])
                )
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "profiles", profiles)

    @property
    def hours(self) -> int:
        return int(self.load.size)

    @property
    def resources(self) -> list[str]:
        return list(self.profiles)

    def window(self, offset: int, length: int) -> "HorizonData":
        if offset < 0 or length < 1 or offset + length > self.hours:
            raise ValueError(f"window [{offset}, {offset + length}) outside horizon of {self.hours} h")
        return HorizonData(
            load=self.load[offset:offset + length],
            profiles={k: v[offset:offset + length] for k, v in self.profiles.items()},
            start_timestamp=self.start_timestamp + timedelta(hours=offset),
        )

    def truncate(self, hours: int) -> "HorizonData":
        return self if hours == self.hours else self.window(0, hours)

    def fingerprint(self) -> bytes:
        """Stable byte encoding of the numeric content (used for cache keys)."""
        parts = [self.load.astype("<f8").tobytes()]
        for name in sorted(self.profiles):
            parts.append(name.encode())
            parts.append(self.profiles[name].astype("<f8").tobytes())
        return b"\0".join(parts)

    def timestamps(self) -> Iterator[datetime]:
        for h in range(self.hours):
            yield self.start_timestamp + timedelta(hours=h)


@dataclass(frozen=True)
class TimeSlice:
    index: int
    offset: int
    length: int = DEFAULT_SLICE_HOURS

    @property
    def stop(self) -> int:
        return self.offset + self.length

    def view(self, data: HorizonData) -> HorizonData:
        return data.window(self.offset, self.length)


def slice_horizon(data: HorizonData, slice_length: int = DEFAULT_SLICE_HOURS) -> list[TimeSlice]:
    """Split the horizon into consecutive whole slices.

    A trailing remainder shorter than ``slice_length`` is dropped (and logged);
    it is never padded.
    """
    if slice_length < 1:
        raise ValueError("slice_length must be >= 1")
    count, dropped = divmod(data.hours, slice_length)
    if count == 0:
        raise ValueError(f"slice_length {slice_length} exceeds horizon of {data.hours} h")
    if dropped:
        logger.warning("dropping trailing %d h that do not fill a %d h slice", dropped, slice_length)
    return [TimeSlice(i, i * slice_length, slice_length) for i in range(count)]


def dropped_hours(data: HorizonData, slice_length: int = DEFAULT_SLICE_HOURS) -> int:
    return data.hours % slice_length


def sliced_prefix(data: HorizonData, slice_length: int = DEFAULT_SLICE_HOURS) -> HorizonData:
    """The part of the horizon covered by whole slices."""
    return data.truncate(data.hours - dropped_hours(data, slice_length))


# --------------------------------------------------------------------------- CSV


def load_csv(path: str | Path, expected_hours: int | None = None) -> HorizonData:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "timestamp" or header[1] != "load":
            raise SchemaError(
                f"{path}: header must be 'timestamp,load,<resource>,...', got {','.join(header)}"
            )
        resources = header[2:]
        if len(set(resources)) != len(resources):
            raise SchemaError(f"{path}: duplicate resource columns")
        stamps: list[datetime] = []
        rows: list[list[float]] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise SchemaError(f"{path}: line {lineno} has {len(rec)} fields, expected {len(header)}")
            row = len(rows)
            try:
                stamps.append(datetime.fromisoformat(rec[0].strip()))
                values = [float(c) for c in rec[1:]]
            except ValueError as exc:
                raise ValidationError(str(exc), row) from None
            if not values[0] >= 0:
                raise ValidationError(f"negative load {values[0]}", row)
            for name, v in zip(resources, values[1:]):
                if not 0.0 <= v <= 1.0:
                    raise ValidationError(f"capacity factor {name!r}={v} outside [0, 1]", row)
            rows.append(values)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    for row in range(1, len(stamps)):
        if stamps[row] - stamps[row - 1] != timedelta(hours=1):
            raise GapError(f"timestamp {stamps[row].isoformat()} does not follow previous by 1 h", row)
    if expected_hours is not None and len(rows) != expected_hours:
        raise ValidationError(f"{len(rows)} rows, expected {expected_hours}")
    table = np.asarray(rows, dtype=float)
    return HorizonData(
        load=table[:, 0],
        profiles={name: table[:, k + 1] for k, name in enumerate(resources)},
        start_timestamp=stamps[0],
    )


def write_csv(data: HorizonData, path: str | Path) -> None:
    path = Path(path)
    names = data.resources
    cols = [data.load] + [data.profiles[n] for n in names]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "load", *names])
        for h, stamp in enumerate(data.timestamps()):
            writer.writerow([stamp.isoformat(), *(repr(float(c[h])) for c in cols)])


# --------------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic weather/demand generator.

    ``noise`` scales every stochastic component (synoptic wind, cloud cover,
    year-to-year factors, hourly jitter). With ``noise=0`` the solar series
    is the clear-sky diurnal bell and repeats exactly every 24 h.
    """

    years: float = 1.0
    base_load: float = 100.0
    load_diurnal_amplitude: float = 0.2
    load_weekly_amplitude: float = 0.08
    load_seasonal_amplitude: float = 0.12
    solar_peak: float = 0.85
    cloud_mean: float = 0.15
    cloud_seasonal_amplitude: float = 0.3
    wind_mean: float = 0.33
    wind_seasonal_amplitude: float = 0.3
    wind_synoptic_amplitude: float = 0.75
    yearly_amplitude: float = 0.08
    noise: float = 1.0
    start: datetime = DEFAULT_START

    @property
    def hours(self) -> int:
        return int(round(self.years * HOURS_PER_YEAR))

    def validate(self) -> None:
        if not self.years > 0 or self.hours < 1:
            raise ConfigError(f"horizon must be positive, got years={self.years}")
        if not self.base_load > 0:
            raise ConfigError("base_load must be positive")
        for name in (
            "load_diurnal_amplitude", "load_weekly_amplitude", "load_seasonal_amplitude",
            "solar_peak", "cloud_mean", "cloud_seasonal_amplitude", "wind_mean",
            "wind_seasonal_amplitude", "wind_synoptic_amplitude", "yearly_amplitude", "noise",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.solar_peak > 1:
            raise ConfigError("solar_peak must be <= 1")


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Unit-variance AR(1) sequence."""
    eps = rng.standard_normal(n) * np.sqrt(1.0 - phi * phi)
    out = np.empty(n)
    out[0] = rng.standard_normal()
    for i in range(1, n):
        out[i] = phi * out[i - 1] + eps[i]
    return out


def synthesize(config: SynthConfig = SynthConfig(), seed: int = 42) -> HorizonData:
    """Generate a load/solar/wind horizon with multi-time-scale variability."""
    config.validate()
    n = config.hours
    rng = np.random.default_rng(seed)
    h = np.arange(n)
    hod = h % 24
    day = h // 24
    doy = day % 365
    year = day // 365
    weekday = day % 7
    n_days = int(day[-1]) + 1
    n_years = int(year[-1]) + 1
    season = np.cos(2 * np.pi * doy / 365.0)  # +1 mid-winter, -1 mid-summer
    k = config.noise

    # draw order is fixed so that a seed always reproduces the same series
    year_wind = 1.0 + k * config.yearly_amplitude * rng.standard_normal(n_years)
    year_cloud = k * config.yearly_amplitude * rng.standard_normal(n_years)
    synoptic = _ar1(rng, n, np.exp(-1.0 / 48.0))
    daily_cloud = _ar1(rng, n_days, 0.6)
    jitter = rng.standard_normal((3, n))

    # solar: clear-sky bell between 06:00 and 18:00 attenuated by cloud cover
    phase = (hod - 6 + 0.5) / 12.0
    bell = np.where((hod >= 6) & (hod < 18), np.sin(np.pi * np.clip(phase, 0, 1)) ** 1.3, 0.0)
    cloud = k * (
        config.cloud_mean
        + config.cloud_seasonal_amplitude * 0.5 * (1 + season)
        + 0.2 * daily_cloud[day]
        + year_cloud[year]
        + 0.05 * jitter[0]
    )
    solar = config.solar_peak * bell * (1.0 - np.clip(cloud, 0.0, 0.95))

    # wind: seasonal mean, small diurnal cycle, multi-day weather systems
    wind_det = config.wind_mean * (1 + config.wind_seasonal_amplitude * season)
    wind_det = wind_det * (1 + 0.05 * np.sin(2 * np.pi * (hod - 3) / 24.0))
    wind = wind_det * year_wind[year] * (1 + k * config.wind_synoptic_amplitude * synoptic)
    wind = wind + k * 0.02 * jitter[1]

    # load: evening peak, weekend dip, winter and summer peaks
    shape = (
        1
        + config.load_diurnal_amplitude * np.cos(2 * np.pi * (hod - 18) / 24.0)
        - config.load_weekly_amplitude * (weekday >= 5)
        + config.load_seasonal_amplitude * np.cos(4 * np.pi * doy / 365.0)
    )
    load = config.base_load * shape * (1 + k * 0.03 * jitter[2])

    return HorizonData(
        load=np.clip(load, 0.0, None),
        profiles={"solar": np.clip(solar, 0.0, 1.0), "wind": np.clip(wind, 0.0, 1.0)},
        start_timestamp=config.start,
    )
