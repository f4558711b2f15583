"""Geometry, grids, and channel models.

Walks through the basic objects: the scenario configuration, the discrete
candidate grid for antenna positions, a random receiver drop, and the
spherical-wave channels with the guided phase response.
"""

import numpy as np

from passwpt import (
    ScenarioConfig,
    build_channel_set,
    build_position_grid,
    candidate_positions,
    sample_user_drop,
    validate_placement,
)
from passwpt.scenario import Placement

cfg = ScenarioConfig()
print(f"carrier {cfg.carrier_frequency / 1e9:.0f} GHz, wavelength "
      f"{cfg.wavelength * 1e3:.2f} mm, guided wavelength "
      f"{cfg.guided_wavelength * 1e3:.2f} mm")
print(f"waveguides at y = {cfg.waveguide_y} m, height {cfg.waveguide_height} m")

# the generated uniform grid vs the default explicit candidate list
uniform = build_position_grid(cfg.with_updates(grid_step=8.0, candidate_x=None))
print(f"uniform grid with 8 m step: {uniform.candidates} "
      f"({uniform.count_per_waveguide} points)")
print(f"default candidate x-coordinates: {candidate_positions(cfg)}")

placement = Placement(x=np.tile([8.0, 16.0, 24.0, 32.0], (4, 1)))
check = validate_placement(placement, cfg)
print(f"reference placement valid: {check.ok}")

layout = sample_user_drop(cfg, seed=7)
print(f"\ndrop 7: first information user at {np.round(layout.idr_positions[0], 2)}, "
      f"first harvester at {np.round(layout.ehr_positions[0], 2)}")

channels = build_channel_set(placement, layout, cfg)
gains_db = 20 * np.log10(np.abs(channels.h_idr[0]))
print(f"per-antenna gains toward user 0: {np.round(gains_db, 1)} dB")
print(f"guided phases are unit modulus: "
      f"{np.allclose(np.abs(channels.g_phase), 1.0)}")
