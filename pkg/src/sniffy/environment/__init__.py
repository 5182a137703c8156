"""Environment generation and gas dispersion modelling pipeline.

floor plan (or occupancy image) -> potential flow -> filament gas frames -> bundle file
"""

from __future__ import annotations

from sniffy.environment.bundle import Bundle, BundleError, load_bundle, save_bundle
from sniffy.environment.filaments import (
    FilamentConfig,
    GasError,
    GasFieldSequence,
    simulate_filaments,
    sample_concentration,
)
from sniffy.environment.floorplan import FloorplanConfig, GenerationError, generate_environment
from sniffy.environment.flow import FlowError, FlowField, FlowNotConverged, solve_flow
from sniffy.environment.model import Environment, Rect, Vent
from sniffy.environment.occupancy import OccupancyError, load_occupancy_image, read_occupancy

__all__ = [
    "Bundle", "BundleError", "Environment", "FilamentConfig", "FloorplanConfig", "FlowError",
    "FlowField", "FlowNotConverged", "GasError", "GasFieldSequence", "GenerationError",
    "OccupancyError", "Rect", "Vent", "build_bundle", "generate_environment", "load_bundle",
    "load_occupancy_image", "read_occupancy", "sample_concentration", "save_bundle",
    "simulate_filaments", "solve_flow",
]


def build_bundle(
    seed: int,
    floorplan: FloorplanConfig | None = None,
    flow_resolution: float = 0.1,
    filaments: FilamentConfig | None = None,
    duration: float = 100.0,
) -> Bundle:
    """Generate, solve and simulate one environment, fully determined by ``seed``."""
    env = generate_environment(seed, floorplan)
    return bundle_for(env, seed, flow_resolution, filaments, duration)


def bundle_for(
    env: Environment,
    seed: int,
    flow_resolution: float = 0.1,
    filaments: FilamentConfig | None = None,
    duration: float = 100.0,
) -> Bundle:
    flow = solve_flow(env, resolution=flow_resolution)
    gas = simulate_filaments(env, flow, duration=duration, seed=seed, config=filaments)
    gas.mass_log = None
    return Bundle(env, flow, gas)
