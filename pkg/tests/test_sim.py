from __future__ import annotations

import csv
import json
import math
import time

import numpy as np
import pytest

from scenefuzz.grammar import load_schema, parse_schema, sample_many
from scenefuzz.sim import run
from scenefuzz.sim.geometry import box_corners, box_distance, boxes_overlap, quad
from scenefuzz.sim.kernel import SimConfig, _check_road, build_world, step
from scenefuzz.sim.replay import (
    export_ego_path_csv,
    load_trace,
    plot_trace,
    save_trace,
    trace_to_dict,
)


def _schema(**doc):
    base = {"name": "inline", "map_id": "straight_road", "ego_route": [[0.0, -2.0], [70.0, -2.0]]}
    base.update(doc)
    return parse_schema(json.dumps(base))


def _fixed(schema):
    """The schema's single point when every field is pinned."""
    return schema.lower.copy()


@pytest.fixture
def empty_road():
    return _schema(
        ego_route=[[0.0, -2.0], [60.0, -2.0]],
        background={"friction": [1.0, 1.0]},
    )


@pytest.fixture
def slippery_obstacle():
    return _schema(
        center_transforms={"static_0": {"absolute": [40.0, -2.0]}},
        background={"friction": [0.2, 0.2]},
        static_0={"setup": {"type": {"range": [0, 0], "kind": "discrete"}}},
    )


def test_empty_road_reaches_destination(empty_road):
    outcome = run(empty_road, _fixed(empty_road))
    assert outcome.termination == "destination_reached"
    assert outcome.violation is None
    assert outcome.steps < SimConfig().max_steps
    ego = outcome.trace[-1][0]
    assert np.hypot(ego.x - 60.0, ego.y + 2.0) <= SimConfig().goal_tolerance


def test_low_friction_runs_into_static_obstacle(slippery_obstacle):
    outcome = run(slippery_obstacle, _fixed(slippery_obstacle))
    assert outcome.termination == "violation"
    assert outcome.violation.kind == "collision"
    assert outcome.violation.other_kind == "static"
    assert outcome.violation.other_name == "static_0"
    assert outcome.violation.ego_speed_at_impact > 0.0
    assert outcome.friction == pytest.approx(0.2)


def test_simulation_is_deterministic(slippery_obstacle):
    v = _fixed(slippery_obstacle)
    assert trace_to_dict(run(slippery_obstacle, v)) == trace_to_dict(run(slippery_obstacle, v))


def test_pedestrian_with_zero_target_speed_stays_put():
    schema = _schema(
        center_transforms={"pedestrian_0": {"absolute": [30.0, 2.0]}},
        pedestrian_0={"trigger_event": {"target_speed": [0, 0]}},
    )
    outcome = run(schema, _fixed(schema))
    xs = {(snap[1].x, snap[1].y) for snap in outcome.trace}
    assert xs == {(30.0, 2.0)}
    assert all(snap[1].speed == 0.0 for snap in outcome.trace)


def test_rear_impact_outside_view_is_not_a_violation():
    schema = _schema(
        ego_route=[[0.0, -2.0], [80.0, -2.0]],
        center_transforms={"vehicle_0": {"absolute": [-15.0, -2.0]}},
        vehicle_0={
            "setup": {"yaw": [0, 0], "initial_speed": [15, 15]},
            "trigger_event": {"target_speed": [15, 15], "travel_distance": [500, 500]},
        },
    )
    outcome = run(schema, _fixed(schema))
    assert outcome.violation is None
    assert outcome.events
    assert outcome.events[0].reason == "outside_view"
    assert outcome.events[0].other_name == "vehicle_0"
    assert not outcome.events[0].bearing_in_fov


def test_perturbed_route_into_oncoming_lane_is_wronglane():
    schema = _schema(
        ego_route=[[0.0, -2.0], [40.0, -2.0], [80.0, -2.0]],
        ego={"perturbation_0": {"y": [4, 4]}},
    )
    outcome = run(schema, _fixed(schema))
    assert outcome.violation is not None
    assert outcome.violation.kind == "out_of_road"
    assert outcome.violation.sub_kind == "wronglane"
    # the reference route stays unperturbed
    assert np.allclose(outcome.route[:, 1], -2.0)


def test_spawn_outside_map_is_clamped_with_a_warning():
    schema = _schema(
        center_transforms={"static_0": {"absolute": [500.0, 0.0]}},
        static_0={"setup": {"yaw": [0, 0]}},
    )
    world = build_world(schema, _fixed(schema))
    assert world.warnings
    assert "static_0" in world.warnings[0]
    assert world.road_map.in_bounds(world.agents[0].position)[0]


def test_world_needs_an_ego_route(box_schema):
    with pytest.raises(ValueError, match="ego_route"):
        build_world(box_schema, box_schema.lower)


def test_step_size_is_fixed(empty_road):
    world = build_world(empty_road, _fixed(empty_road))
    with pytest.raises(ValueError, match="fixed"):
        step(world, 0.05)


def test_unknown_simulation_keys_are_rejected():
    with pytest.raises(ValueError, match="unknown simulation keys"):
        SimConfig.from_dict({"dt": 0.1, "gravity": 9.81})


def test_sim_config_round_trips_through_dict():
    cfg = SimConfig(dt=0.05, ego_half_extents=(2.0, 0.9))
    assert SimConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_trace_invariants_over_sampled_scenarios(scenario_dir):
    schema = load_schema(scenario_dir / "turning_right_leading_car.json")
    cfg = SimConfig()
    bound = max(cfg.max_accel, cfg.max_brake) * cfg.dt + 1e-9
    for v in sample_many(schema, np.random.default_rng(3), 8):
        outcome = run(schema, v, max_steps=200)
        assert outcome.steps <= 200
        assert len(outcome.trace) == outcome.steps + 1
        assert (outcome.termination == "violation") == (outcome.violation is not None)
        speeds = np.array([[s.speed for s in snap] for snap in outcome.trace])
        assert np.all(speeds >= 0.0)
        assert np.all(np.abs(np.diff(speeds, axis=0)) <= bound)
        triggered = np.array([[s.triggered for s in snap] for snap in outcome.trace])
        assert np.all(triggered[1:] >= triggered[:-1])
        for j, agent in enumerate(outcome.trace[0]):
            if agent.kind == "static":
                assert np.all(speeds[:, j] == 0.0)


def test_trace_file_round_trip(slippery_obstacle, tmp_path):
    outcome = run(slippery_obstacle, _fixed(slippery_obstacle))
    path = save_trace(outcome, tmp_path / "trace.json")
    loaded = load_trace(path)
    assert trace_to_dict(loaded) == trace_to_dict(outcome)
    assert loaded.violation == outcome.violation


def test_ego_path_csv(empty_road, tmp_path):
    outcome = run(empty_road, _fixed(empty_road))
    path = export_ego_path_csv(outcome, tmp_path / "ego.csv", dt=0.1)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "time", "x", "y", "heading", "speed"]
    assert len(rows) == len(outcome.trace) + 1
    assert float(rows[-1][1]) == pytest.approx(0.1 * outcome.steps)


def test_plot_trace_writes_png(slippery_obstacle, tmp_path):
    outcome = run(slippery_obstacle, _fixed(slippery_obstacle))
    out = plot_trace(outcome, path=tmp_path / "plots" / "trace.png")
    assert out.endswith("trace.png")
    assert (tmp_path / "plots" / "trace.png").stat().st_size > 0


# === Road margin ===


@pytest.mark.parametrize("y, off_road", [(-8.3, False), (-8.9, False), (-9.6, True)])
def test_off_road_needs_more_than_half_the_ego_width(empty_road, y, off_road):
    # The straight road's southern edge is at y = -8 and the ego is 2 m wide.
    world = build_world(empty_road, _fixed(empty_road))
    world.ego.x, world.ego.y = 50.0, y
    _check_road(world)
    if off_road:
        assert world.violation.kind == "out_of_road"
        assert world.violation.sub_kind == "offroad"
    else:
        assert world.violation is None


def test_distance_beyond_road(empty_road):
    road_map = build_world(empty_road, _fixed(empty_road)).road_map
    assert road_map.distance_beyond_road(50.0, -2.0) == 0.0
    assert road_map.distance_beyond_road(50.0, -9.6) == pytest.approx(1.6, abs=0.25)
    assert road_map.distance_beyond_road(50.0, -500.0) == math.inf
    assert road_map.opposite_at(50.0, 2.0)
    assert not road_map.opposite_at(50.0, -2.0)


# === Geometry ===


def test_scalar_quad_matches_array_corners(rng):
    for _ in range(20):
        x, y, heading = rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-4, 4)
        half = (rng.uniform(0.2, 3.0), rng.uniform(0.2, 1.5))
        expected = box_corners(np.array([x, y]), heading, half)
        assert np.allclose(np.array(quad(x, y, heading, *half)), expected)


def test_boxes_overlap_on_tuples_and_arrays():
    a = quad(0.0, 0.0, 0.0, 2.0, 1.0)
    touching = quad(3.9, 0.0, 0.3, 2.0, 1.0)
    apart = quad(0.0, 3.5, 0.0, 2.0, 1.0)
    assert boxes_overlap(a, touching)
    assert not boxes_overlap(a, apart)
    assert boxes_overlap(np.array(a), np.array(touching))
    assert box_distance(np.array(a), np.array(apart)) == pytest.approx(1.5)


# === Throughput ===


def test_simulation_throughput(scenario_dir):
    schema = load_schema(scenario_dir / "turning_right_leading_car.json")
    vectors = sample_many(schema, np.random.default_rng(0), 200)
    run(schema, vectors[0])  # builds and caches the map
    start = time.perf_counter()
    for v in vectors:
        run(schema, v)
    rate = len(vectors) / (time.perf_counter() - start)
    assert rate >= 200.0, f"{rate:.1f} simulations per second"
