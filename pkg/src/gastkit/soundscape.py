"""Core soundscape data model: calendar time codes, geographic layers,
land-use classes, source signals, sensor descriptions, and the validated
soundscape tuple that the rest of the toolkit consumes.
"""

from __future__ import annotations

import calendar
import csv
import datetime as _dt
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

__all__ = [
    "TimeCode", "GeoLayerKind", "GeoLayer", "LandUseClass", "LAND_USE_NAMES",
    "SourceCategory", "SourceSignal", "SensorSpec", "Soundscape",
    "compare_timecodes", "build_soundscape", "partition_sources",
    "write_manifest", "read_manifest", "ManifestRow",
    "soundscape_to_json", "soundscape_from_json",
]


class OrphanRecordingError(ValueError):
    """A recording refers to a time code missing from the time layer."""


class EmptyTimesError(ValueError):
    """The time layer is empty."""


@dataclass(frozen=True, order=True)
class TimeCode:
    """Ordered (year, month, day, hour, minute) quintuple.

    Field order gives the lexicographic total order directly through the
    generated dataclass comparisons.
    """

    t1: int  # year
    t2: int  # month
    t3: int  # day
    t4: int = 0  # hour
    t5: int = 0  # minute

    def __post_init__(self):
        if not 1 <= self.t2 <= 12:
            raise ValueError(f"month {self.t2} out of range 1..12")
        if not 1 <= self.t3 <= 31:
            raise ValueError(f"day {self.t3} out of range 1..31")
        if not 0 <= self.t4 <= 23:
            raise ValueError(f"hour {self.t4} out of range 0..23")
        if not 0 <= self.t5 <= 59:
            raise ValueError(f"minute {self.t5} out of range 0..59")
        if self.t3 > calendar.monthrange(self.t1, self.t2)[1]:
            raise ValueError(
                f"day {self.t3} does not exist in {self.t1}-{self.t2:02d}")

    def date(self) -> _dt.date:
        return _dt.date(self.t1, self.t2, self.t3)

    def date_code(self) -> "TimeCode":
        """Truncate to midnight: (t1, t2, t3, 0, 0)."""
        return TimeCode(self.t1, self.t2, self.t3)

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        return (self.t1, self.t2, self.t3, self.t4, self.t5)


def compare_timecodes(a: TimeCode, b: TimeCode) -> int:
    """Lexicographic comparison; returns -1, 0, or 1."""
    ta, tb = a.as_tuple(), b.as_tuple()
    return (ta > tb) - (ta < tb)


class GeoLayerKind(str, Enum):
    LAND_USE = "land_use"
    POINT_CLOUD = "point_cloud"
    DISTANCE_MATRIX = "distance_matrix"
    METEOROLOGICAL = "meteorological"
    CUSTOM = "custom"


LAND_USE_NAMES = (
    "commercial area",
    "green space",
    "main street",
    "playground",
    "residential area",
    "residential streets",
    "small garden",
    "urban agriculture",
    "urban forest",
)
N_LAND_USE = len(LAND_USE_NAMES)


@dataclass(frozen=True)
class LandUseClass:
    """One of the nine fixed land-use classes; id and name are a bijection."""

    id: int

    def __post_init__(self):
        if not 1 <= self.id <= N_LAND_USE:
            raise ValueError(f"land-use id {self.id} out of range 1..{N_LAND_USE}")

    @property
    def name(self) -> str:
        return LAND_USE_NAMES[self.id - 1]

    @classmethod
    def from_name(cls, name: str) -> "LandUseClass":
        try:
            return cls(LAND_USE_NAMES.index(name) + 1)
        except ValueError:
            raise ValueError(f"unknown land-use name {name!r}") from None


@dataclass(frozen=True)
class GeoLayer:
    """Typed geographic context layer; non-land-use payloads are opaque."""

    kind: GeoLayerKind
    payload: object
    time_code: Optional[TimeCode] = None

    def __post_init__(self):
        if self.kind == GeoLayerKind.LAND_USE:
            if not isinstance(self.payload, LandUseClass):
                raise ValueError("land_use payload must be a LandUseClass")


class SourceCategory(str, Enum):
    BIOPHONY = "biophony"
    GEOPHONY = "geophony"
    ANTHROPHONY = "anthrophony"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class SourceSignal:
    """An isolated signal from one physical source at one time code."""

    samples: tuple
    time_code: TimeCode
    category: SourceCategory = SourceCategory.UNLABELED
    label: str = ""

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError("source signal must contain at least one sample")
        object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=np.float64)


@dataclass(frozen=True)
class SensorSpec:
    """Recorder description: UTM location, rate, depth, identifier."""

    location: Tuple[float, float]
    sample_rate: float
    bit_depth: int
    device_id: str

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "location",
                           (float(self.location[0]), float(self.location[1])))


@dataclass(frozen=True)
class Soundscape:
    """The validated (geo, sensor, sources, times) tuple.

    ``recordings`` realizes the sensor function as stored sample vectors
    keyed by time code.  All values are immutable after construction.
    """

    geo: Tuple[GeoLayer, ...]
    sensor: SensorSpec
    recordings: Mapping[TimeCode, tuple]
    sources: Tuple[SourceSignal, ...]
    times: Tuple[TimeCode, ...]

    def land_use(self) -> Optional[LandUseClass]:
        for layer in self.geo:
            if layer.kind == GeoLayerKind.LAND_USE:
                return layer.payload
        return None


def build_soundscape(geo: Iterable[GeoLayer], sensor: SensorSpec,
                     recordings: Mapping[TimeCode, Sequence[float]],
                     sources: Iterable[SourceSignal],
                     times: Iterable[TimeCode]) -> Soundscape:
    """Assemble and validate a soundscape; times come out sorted ascending."""
    times = tuple(sorted(set(times)))
    if not times:
        raise EmptyTimesError("time layer may not be empty")
    time_set = set(times)
    frozen: Dict[TimeCode, tuple] = {}
    for tc, samples in recordings.items():
        if tc not in time_set:
            raise OrphanRecordingError(
                f"recording at {tc} has no matching entry in the time layer")
        frozen[tc] = tuple(float(s) for s in samples)
    return Soundscape(tuple(geo), sensor, frozen, tuple(sources), times)


def partition_sources(sources: Iterable[SourceSignal],
                      taxonomy: Mapping[str, SourceCategory]
                      ) -> Dict[SourceCategory, Set[SourceSignal]]:
    """Disjointly cover the sources by category; unmapped labels go to unlabeled."""
    groups: Dict[SourceCategory, Set[SourceSignal]] = {
        cat: set() for cat in SourceCategory}
    for s in sources:
        cat = taxonomy.get(s.label, SourceCategory.UNLABELED)
        groups[cat].add(s)
    return groups


# ----------------------------------------------------------------------
# dataset manifest (CSV) and soundscape metadata (JSON)
# ----------------------------------------------------------------------

MANIFEST_COLUMNS = ("device_id", "utm_east", "utm_north", "lut_id",
                    "wav_path", "t1", "t2", "t3", "t4", "t5")


@dataclass(frozen=True)
class ManifestRow:
    device_id: str
    utm_east: float
    utm_north: float
    lut_id: int
    wav_path: str
    time_code: TimeCode


def write_manifest(path, rows: Iterable[ManifestRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in rows:
            tc = r.time_code
            writer.writerow([r.device_id, repr(float(r.utm_east)),
                             repr(float(r.utm_north)),
                             r.lut_id, r.wav_path,
                             tc.t1, tc.t2, tc.t3, tc.t4, tc.t5])


def read_manifest(path) -> List[ManifestRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
            raise ValueError(f"{path}: unexpected manifest columns "
                             f"{reader.fieldnames}")
        for rec in reader:
            rows.append(ManifestRow(
                rec["device_id"], float(rec["utm_east"]),
                float(rec["utm_north"]), int(rec["lut_id"]), rec["wav_path"],
                TimeCode(int(rec["t1"]), int(rec["t2"]), int(rec["t3"]),
                         int(rec["t4"]), int(rec["t5"]))))
    return rows


def _tc_to_list(tc: TimeCode) -> list:
    return list(tc.as_tuple())


def soundscape_to_json(scape: Soundscape) -> str:
    """Serialize a soundscape to JSON; float round-trips are exact."""
    doc = {
        "geo": [
            {
                "kind": layer.kind.value,
                "payload": (layer.payload.id
                            if layer.kind == GeoLayerKind.LAND_USE
                            else layer.payload),
                "time_code": (_tc_to_list(layer.time_code)
                              if layer.time_code else None),
            }
            for layer in scape.geo
        ],
        "sensor": {
            "location": list(scape.sensor.location),
            "sample_rate": scape.sensor.sample_rate,
            "bit_depth": scape.sensor.bit_depth,
            "device_id": scape.sensor.device_id,
        },
        "recordings": [
            {"time_code": _tc_to_list(tc), "samples": list(samples)}
            for tc, samples in sorted(scape.recordings.items())
        ],
        "sources": [
            {
                "samples": list(s.samples),
                "time_code": _tc_to_list(s.time_code),
                "category": s.category.value,
                "label": s.label,
            }
            for s in scape.sources
        ],
        "times": [_tc_to_list(tc) for tc in scape.times],
    }
    return json.dumps(doc, sort_keys=True)


def soundscape_from_json(text: str) -> Soundscape:
    doc = json.loads(text)
    geo = []
    for layer in doc["geo"]:
        kind = GeoLayerKind(layer["kind"])
        payload = (LandUseClass(layer["payload"])
                   if kind == GeoLayerKind.LAND_USE else layer["payload"])
        tc = TimeCode(*layer["time_code"]) if layer["time_code"] else None
        geo.append(GeoLayer(kind, payload, tc))
    sensor = SensorSpec(tuple(doc["sensor"]["location"]),
                        doc["sensor"]["sample_rate"],
                        doc["sensor"]["bit_depth"],
                        doc["sensor"]["device_id"])
    recordings = {TimeCode(*rec["time_code"]): rec["samples"]
                  for rec in doc["recordings"]}
    sources = [SourceSignal(tuple(s["samples"]), TimeCode(*s["time_code"]),
                            SourceCategory(s["category"]), s["label"])
               for s in doc["sources"]]
    times = [TimeCode(*tc) for tc in doc["times"]]
    return build_soundscape(geo, sensor, recordings, sources, times)


def save_soundscape(path, scape: Soundscape) -> None:
    Path(path).write_text(soundscape_to_json(scape))


def load_soundscape(path) -> Soundscape:
    return soundscape_from_json(Path(path).read_text())
