"""The core data model: time codes, geographic layers, source signals, and
the validated soundscape tuple.

Run:  python3 demos/01_soundscape_model.py
"""

import numpy as np

from gastkit.soundscape import (
    GeoLayer, GeoLayerKind, LandUseClass, SensorSpec, SourceCategory,
    SourceSignal, TimeCode, build_soundscape, compare_timecodes,
    partition_sources, soundscape_from_json, soundscape_to_json,
)

# Time codes are ordered (year, month, day, hour, minute) quintuples.
morning = TimeCode(2019, 5, 6, 8, 0)
evening = TimeCode(2019, 5, 6, 20, 40)
print("compare:", compare_timecodes(morning, evening))   # -1: morning first
print("date code:", morning.date_code())                 # truncated to midnight

# Nine fixed land-use classes, id <-> name bijection.
lut = LandUseClass.from_name("urban forest")
print("land use:", lut.id, "=", lut.name)

# A couple of isolated source signals with categories.
t = np.arange(800) / 8000.0
bird = SourceSignal(tuple(np.sin(2 * np.pi * 2200 * t)), morning,
                    SourceCategory.BIOPHONY, "blackbird")
tram = SourceSignal(tuple(0.4 * np.sin(2 * np.pi * 110 * t)), evening,
                    SourceCategory.ANTHROPHONY, "tram")

scape = build_soundscape(
    geo=[GeoLayer(GeoLayerKind.LAND_USE, lut)],
    sensor=SensorSpec((370123.0, 5701456.0), 8000.0, 16, "dev00"),
    recordings={morning: bird.samples, evening: tram.samples},
    sources=[bird, tram],
    times=[morning, evening],
)
print("times sorted:", [tc.as_tuple() for tc in scape.times])
print("land use from layers:", scape.land_use().name)

# Sources partition disjointly by category via a label taxonomy.
groups = partition_sources(scape.sources, {"blackbird": SourceCategory.BIOPHONY})
for cat, members in groups.items():
    if members:
        print(f"{cat.value}: {sorted(s.label for s in members)}")

# Serialization round-trips exactly.
text = soundscape_to_json(scape)
back = soundscape_from_json(text)
assert back == scape
print("JSON round-trip OK,", len(text), "bytes")
