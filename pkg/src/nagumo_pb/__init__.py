"""Periodic solutions of ``v'' - g v + n(x) F(v) = 0`` with a periodic weight.

Modules: :mod:`.model` (nonlinearity, weights), :mod:`.flow` (integration,
period map), :mod:`.rotation` (rotation numbers), :mod:`.energy`
(autonomous comparison system, time map), :mod:`.orbits` (twist annulus,
fixed points) and :mod:`.cli` (scenario runner).
"""

from .energy import AutonomousSystem, choose_band, equilibrium, level_curve, time_map
from .flow import IntegratorSettings, integrate, poincare_jacobian, poincare_map
from .model import (Nonlinearity, SystemParams, Weight, build_modified, default_params,
                    split_weight)
from .orbits import build_annulus, find_fixed_points, verify_twist
from .rotation import outer_radius_search, rot_m

__version__ = "0.1.0"

__all__ = [
    "AutonomousSystem",
    "IntegratorSettings",
    "Nonlinearity",
    "SystemParams",
    "Weight",
    "build_annulus",
    "build_modified",
    "choose_band",
    "default_params",
    "equilibrium",
    "find_fixed_points",
    "integrate",
    "level_curve",
    "outer_radius_search",
    "poincare_jacobian",
    "poincare_map",
    "rot_m",
    "split_weight",
    "time_map",
    "verify_twist",
]
