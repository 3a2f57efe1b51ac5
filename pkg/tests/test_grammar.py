from __future__ import annotations

import json

import numpy as np
import pytest

from scenefuzz.grammar import (
    ConstraintUnsatisfiable,
    SchemaError,
    check_constraints,
    denormalize,
    is_feasible,
    load_schema,
    normalize,
    normalized_constraints,
    parse_schema,
    repair,
    sample,
    sample_many,
)


def test_listing_fields_are_flattened_in_document_order(listing_schema):
    names = listing_schema.names
    assert names[:3] == [
        "pedestrian_0.setup.location.x",
        "pedestrian_0.setup.location.y",
        "pedestrian_0.setup.direction",
    ]
    x = listing_schema.fields[0]
    assert (x.min, x.max) == (-123.0, -83.0)
    assert x.distribution.kind == "normal"
    assert x.distribution.mean is None
    assert x.distribution.variance == 10.0
    assert x.effective_mean == pytest.approx(-103.0)


def test_indexed_constraint_labels_resolve(listing_schema):
    (con,) = listing_schema.constraints
    assert con.coefficients == (1.0, -0.5)
    assert con.labels == (
        "vehicle_0.trigger_event.target_speed",
        "vehicle_1.trigger_event.target_speed",
    )
    assert con.value == 0.0


@pytest.mark.parametrize(
    "doc, message",
    [
        ({"a": [5, 1]}, "malformed range"),
        ({"a": {"range": [0.5, 3], "kind": "discrete"}}, "integer bounds"),
        (
            {
                "a": [0, 1],
                "customized_constraints": [{"coefficients": [1], "labels": ["b"], "value": 0}],
            },
            "not a declared field",
        ),
        ({"a": {"range": [0, 1], "kind": "ordinal"}}, "unknown kind"),
    ],
)
def test_parse_errors(doc, message):
    with pytest.raises(SchemaError, match=message):
        parse_schema(json.dumps(doc))


def test_invalid_json_is_a_schema_error():
    with pytest.raises(SchemaError):
        parse_schema("{not json")


def test_fixture_with_appendix_ranges_has_26_fields(scenario_dir):
    schema = load_schema(scenario_dir / "turning_right_leading_car.json")
    assert schema.dim == 26
    assert schema.map_id == "t_junction"
    assert len(schema.constraints) == 2
    assert schema.center_transforms["vehicle_0"].kind == "absolute"
    # the three agent counts are pinned
    assert schema.n_changeable == 23


@pytest.mark.parametrize(
    "name, dim",
    [
        ("crossing_non_signalized.json", 47),
        ("turning_left_junction_small.json", 11),
        ("static_obstacle_ahead.json", 7),
    ],
)
def test_fixture_dimensions(scenario_dir, name, dim):
    assert load_schema(scenario_dir / name).dim == dim


def test_samples_are_feasible(listing_schema, rng):
    vectors = sample_many(listing_schema, rng, 2000)
    assert vectors.shape == (2000, listing_schema.dim)
    assert np.all(vectors >= listing_schema.lower)
    assert np.all(vectors <= listing_schema.upper)
    i0 = listing_schema.index("vehicle_0.trigger_event.target_speed")
    i1 = listing_schema.index("vehicle_1.trigger_event.target_speed")
    assert np.all(vectors[:, i0] - 0.5 * vectors[:, i1] <= 1e-9)
    disc = vectors[:, listing_schema.discrete_mask]
    np.testing.assert_array_equal(disc, np.round(disc))
    assert all(is_feasible(v, listing_schema) for v in vectors[:50])


def test_sampling_is_deterministic_per_seed(listing_schema):
    a = sample_many(listing_schema, np.random.default_rng(7), 5)
    b = sample_many(listing_schema, np.random.default_rng(7), 5)
    np.testing.assert_array_equal(a, b)


def test_fixed_field_always_samples_its_value(box_schema, rng):
    vectors = sample_many(box_schema, rng, 100)
    np.testing.assert_array_equal(vectors[:, box_schema.index("e")], 2.0)


def test_unsatisfiable_constraint_raises(rng):
    doc = {
        "x": [0, 10],
        "customized_constraints": [{"coefficients": [1], "labels": ["x"], "value": -1}],
    }
    schema = parse_schema(json.dumps(doc))
    with pytest.raises(ConstraintUnsatisfiable):
        sample(schema, rng, max_attempts=50)


def test_normalize_maps_fixed_fields_to_zero(box_schema):
    v = np.array([3.0, 5.0, 0.0, 4.0, 2.0])
    np.testing.assert_allclose(normalize(v, box_schema), [0.3, 1.0, 0.0, 1.0, 0.0])


def test_denormalize_inverts_normalize(box_schema, rng):
    vectors = sample_many(box_schema, rng, 200)
    back = denormalize(normalize(vectors, box_schema), box_schema)
    mask = box_schema.changeable_mask
    np.testing.assert_allclose(back[:, mask], vectors[:, mask], atol=1e-12)


def test_check_constraints_reports_slack(listing_schema):
    v = sample(listing_schema, np.random.default_rng(0))
    v[listing_schema.index("vehicle_0.trigger_event.target_speed")] = 2.0
    v[listing_schema.index("vehicle_1.trigger_event.target_speed")] = 2.0
    ((index, slack),) = check_constraints(v, listing_schema)
    assert index == 0
    assert slack == pytest.approx(1.0)


def test_no_constraints_means_no_violations(box_schema, rng):
    assert check_constraints(sample(box_schema, rng), box_schema) == []


def test_normalized_constraints_match_raw_constraints(listing_schema, rng):
    W, b = listing_schema.constraint_matrix()
    A, c = normalized_constraints(listing_schema)
    for _ in range(100):
        u = rng.random(listing_schema.dim)
        x = denormalize(u, listing_schema)
        np.testing.assert_allclose(A @ u - c, W @ x - b, atol=1e-9)


def test_repair_rounds_and_clips(box_schema):
    out = repair(np.array([11.0, -7.0, 0.5, 2.6, 2.0]), box_schema)
    np.testing.assert_array_equal(out, [10.0, -5.0, 0.5, 3.0, 2.0])
