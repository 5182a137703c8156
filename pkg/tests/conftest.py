"""Shared fixtures: a few small bundles built once per session."""

from __future__ import annotations

import dataclasses

import pytest
from hypothesis import settings

from sniffy.environment import FloorplanConfig, build_bundle, bundle_for, generate_environment
from sniffy.geometry import Vec2

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def empty_bundle():
    """Empty 10x10 m arena with the source moved to the centre."""
    env = generate_environment(3, FloorplanConfig(room_count=0, obstacles=0))
    env = dataclasses.replace(env, source=Vec2(5.0, 5.0))
    return bundle_for(env, 3)


@pytest.fixture(scope="session")
def room_bundle():
    return build_bundle(11, FloorplanConfig(room_count=2, obstacles=1))


@pytest.fixture(scope="session")
def bundles(empty_bundle, room_bundle):
    return [empty_bundle, room_bundle, build_bundle(12, FloorplanConfig(room_count=3, obstacles=2))]
