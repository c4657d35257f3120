"""Per-stage timing on a full 120,000-return scan with clutter.

Run with ``python demos/04_timing_table.py``.
"""
# %% One revolution of a 32-beam sensor: a tag, boxes and poles, and a far wall.
import numpy as np

from beamtag.bench import format_table, time_pipeline
from beamtag.codebook import build_hash_table, default_family
from beamtag.geometry import tag_pose
from beamtag.pipeline import DetectorConfig
from beamtag.synth import TagTarget, puck32, random_clutter, render_scene

family = default_family()
R, t = tag_pose(2.0, azimuth=0.2, tilt=0.2)
target = TagTarget(family, 3, 0.6, R, t)
clutter = random_clutter(np.random.default_rng(7), 25, keep_out=[t])
scan = render_scene(puck32(), target, background_range=20.0, clutter=clutter)

# %% Mean stage times next to the published reference rows.
report = time_pipeline([scan], build_hash_table(family), DetectorConfig(), repetitions=20)
print(format_table(report.columns))
