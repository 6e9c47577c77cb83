"""
Rendering synthetic RGB-D scenes with ground truth
==================================================

Every capability in this package can be exercised without a real depth
camera: the synth module paints deterministic scenes (background plane,
humans as head-disc-plus-torso silhouettes, box or bust distractors),
adds truncated depth noise, and reports each human's head-top pixel as
ground truth. Identical seeds reproduce identical files, byte for byte.
"""

from pathlib import Path

import numpy as np

from glimpsenet import (HumanSpec, SceneSpec, default_intrinsics,
                        render_scene, save_color_ppm, save_depth_pgm)

out_dir = Path("demo_output")
out_dir.mkdir(exist_ok=True)
intrinsics = default_intrinsics()

###############################################################################
# A scene is a declarative spec: humans at world positions plus clutter.

spec = SceneSpec(
    humans=(HumanSpec(x=-0.6, z=2.0),
            HumanSpec(x=0.8, z=3.5, height=1.85)),
    clutter=3,
    noise_sigma=10.0,
    seed=2026,
)
depth, color, truth, warnings = render_scene(spec, intrinsics, 640, 480)

print(f"depth frame: {depth.width} x {depth.height}, "
      f"range {depth.data.min()}..{depth.data.max()} mm")
print(f"ground-truth head-tops: {truth.head_tops}")
print(f"dropped humans: {warnings}")

###############################################################################
# Head-top pixels carry the human's depth (up to the injected noise).

for human, (u, v) in zip(spec.humans, truth.head_tops):
    measured = int(depth.data[v, u])
    print(f"human at z={human.z} m -> head-top ({u}, {v}), "
          f"depth {measured} mm")

###############################################################################
# Frames use plain binary PGM (16-bit depth) and PPM (8-bit color), so any
# netpbm-aware viewer opens them.

save_depth_pgm(depth, out_dir / "scene_depth.pgm")
save_color_ppm(color, out_dir / "scene_color.ppm")
print(f"wrote {out_dir / 'scene_depth.pgm'} and {out_dir / 'scene_color.ppm'}")

###############################################################################
# Determinism is bit-level: rendering the same spec twice matches exactly.

depth2, color2, _, _ = render_scene(spec, intrinsics, 640, 480)
print("bitwise reproducible:",
      bool(np.array_equal(depth.data, depth2.data)
           and np.array_equal(color.data, color2.data)))
