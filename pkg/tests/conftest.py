from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from scenefuzz.grammar import parse_schema

ROOT = Path(__file__).resolve().parents[1]
SCENARIO_DIR = ROOT / "scenarios"

LISTING_SCHEMA = {
    "name": "listing",
    "map_id": "straight_road",
    "ego_route": [[0.0, -2.0], [120.0, -2.0]],
    "pedestrian_0": {
        "setup": {
            "location": {
                "x": [-123, -83, ["normal", None, 10]],
                "y": [3.5, 43.5, ["normal", None, 10]],
            },
            "direction": [0, 360],
            "type": {"range": [0, 12], "kind": "discrete"},
        },
        "trigger_event": {
            "trigger_distance": [2, 50],
            "target_speed": [0, 4],
            "travel_distance": [0, 50],
        },
    },
    "vehicle_0": {"trigger_event": {"target_speed": [0, 10]}},
    "vehicle_1": {"trigger_event": {"target_speed": [0, 10]}},
    "customized_constraints": [
        {
            "coefficients": [1, -0.5],
            "labels": [
                "vehicle[0].trigger_event.target_speed",
                "vehicle[1].trigger_event.target_speed",
            ],
            "value": 0,
        }
    ],
}

# Ego on a straight road toward a static obstacle: short, cheap simulations.
OBSTACLE_SCHEMA = {
    "name": "obstacle",
    "map_id": "straight_road",
    "ego_route": [[0.0, -2.0], [70.0, -2.0]],
    "center_transforms": {"static_0": {"absolute": [40.0, -2.0]}},
    "background": {
        "friction": [0.2, 1.0],
        "weather_index": {"range": [0, 20], "kind": "discrete"},
    },
    "static_0": {
        "setup": {
            "type": {"range": [0, 4], "kind": "discrete"},
            "location": {"x": [-5, 5], "y": [-2, 2]},
            "yaw": [0, 180],
        }
    },
    "fixed": {"height": [1.5, 1.5]},
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def listing_schema():
    return parse_schema(json.dumps(LISTING_SCHEMA))


@pytest.fixture
def obstacle_schema():
    return parse_schema(json.dumps(OBSTACLE_SCHEMA))


@pytest.fixture
def box_schema():
    """Three continuous fields, one discrete and one fixed, no map needed."""
    doc = {
        "name": "box",
        "a": [0, 10],
        "b": [-5, 5],
        "c": [0, 1],
        "d": {"range": [0, 4], "kind": "discrete"},
        "e": [2, 2],
    }
    return parse_schema(json.dumps(doc))


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


@pytest.fixture
def obstacle_schema_path(tmp_path):
    path = tmp_path / "obstacle.json"
    path.write_text(json.dumps(OBSTACLE_SCHEMA), encoding="utf-8")
    return path
