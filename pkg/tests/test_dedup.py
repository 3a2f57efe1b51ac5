from __future__ import annotations

import json
from itertools import combinations

import numpy as np
import pytest

from scenefuzz.dedup import (
    UniquenessParams,
    ViolationArchive,
    count_differences,
    fields_differ,
    filter_similar,
    required_differences,
    sweep_thresholds,
    unique_count_among,
)
from scenefuzz.grammar import parse_schema, sample_many
from scenefuzz.objectives import ObjectiveVector


@pytest.fixture
def speed_schema():
    doc = {"name": "speeds", "speed": [0, 10], "lane": {"range": [0, 3], "kind": "discrete"}}
    return parse_schema(json.dumps(doc))


def test_small_speed_change_is_not_a_difference(speed_schema):
    # |3 - 4| is 10% of the range, under a 15% threshold
    assert fields_differ(np.array([3.0, 0.0]), np.array([4.0, 0.0]), speed_schema, 15.0) == 0
    assert fields_differ(np.array([3.0, 0.0]), np.array([5.0, 0.0]), speed_schema, 15.0) == 1


def test_discrete_fields_differ_on_any_change(speed_schema):
    assert fields_differ(np.array([3.0, 1.0]), np.array([3.0, 2.0]), speed_schema, 99.0) == 1


def test_fixed_fields_never_count(box_schema):
    a = np.array([0.0, 0.0, 0.0, 0.0, 2.0])
    b = np.array([0.0, 0.0, 0.0, 0.0, 9.0])
    assert fields_differ(a, b, box_schema, 1.0) == 0


@pytest.mark.parametrize("n, th1, need", [(20, 10.0, 2), (23, 10.0, 3), (1, 10.0, 1), (4, 50.0, 2)])
def test_required_differences(n, th1, need):
    assert required_differences(n, th1) == need


@pytest.mark.parametrize("th1, th2", [(0.0, 10.0), (10.0, 0.0), (101.0, 10.0)])
def test_threshold_validation(th1, th2):
    with pytest.raises(ValueError):
        UniquenessParams(th1, th2)


def test_first_of_two_similar_violations_wins(speed_schema):
    archive = ViolationArchive(speed_schema, UniquenessParams(50.0, 15.0))
    assert archive.add(np.array([3.0, 1.0]), "collision", sim_index=0)
    assert not archive.add(np.array([3.5, 1.0]), "collision", sim_index=1)
    assert archive.add(np.array([3.5, 1.0]), "out_of_road", sim_index=2)
    assert [e.sim_index for e in archive] == [0, 2]
    assert archive.count("collision") == 1
    assert archive.is_unique(np.array([9.0, 1.0]), "collision")
    assert not archive.is_unique(np.array([3.5, 1.0]))


def test_unknown_kind_is_rejected(speed_schema):
    with pytest.raises(ValueError, match="unknown violation kind"):
        ViolationArchive(speed_schema).add(np.array([1.0, 1.0]), "speeding")


def test_archive_entries_are_pairwise_distinct(listing_schema, rng):
    params = UniquenessParams(20.0, 20.0)
    archive = ViolationArchive(listing_schema, params)
    kinds = rng.choice(["collision", "out_of_road"], size=300)
    for v, kind in zip(sample_many(listing_schema, rng, 300), kinds):
        archive.add(v, str(kind))
    need = required_differences(listing_schema.n_changeable, params.th1)
    assert len(archive) > 1
    for a, b in combinations(archive.entries, 2):
        if a.kind == b.kind:
            assert fields_differ(a.vector, b.vector, listing_schema, params.th2) >= need


def test_count_differences_matches_pairwise(listing_schema, rng):
    vectors = sample_many(listing_schema, rng, 20)
    batch = count_differences(vectors[0], vectors[1:], listing_schema, 30.0)
    single = [fields_differ(vectors[0], v, listing_schema, 30.0) for v in vectors[1:]]
    np.testing.assert_array_equal(batch, single)


def test_filter_similar_keeps_the_first_of_similar_candidates(speed_schema):
    params = UniquenessParams(50.0, 15.0)
    archive = ViolationArchive(speed_schema, params)
    archive.add(np.array([0.0, 0.0]), "collision")
    candidates = np.array([[0.5, 0.0], [5.0, 1.0], [5.5, 1.0], [9.0, 2.0]])
    assert filter_similar(candidates, archive) == [1, 3]
    assert filter_similar(candidates, archive, pending=[np.array([9.0, 2.0])]) == [1]
    assert filter_similar(candidates, None, schema=speed_schema, params=params) == [0, 1, 3]


def test_filter_similar_needs_a_schema():
    with pytest.raises(ValueError):
        filter_similar(np.zeros((2, 2)), None)


def test_archive_json_round_trip(speed_schema):
    archive = ViolationArchive(speed_schema, UniquenessParams(50.0, 15.0))
    obj = ObjectiveVector(f_collision=3.0, f_object=0.0, violation_kind="collision")
    archive.add(np.array([3.0, 1.0]), "collision", obj, generation=2, sim_index=7)
    loaded = ViolationArchive.from_json(archive.to_json(), speed_schema)
    assert loaded.to_dict() == archive.to_dict()
    assert loaded.params == archive.params


def test_sweep_replays_the_stream_for_every_cell(listing_schema, rng):
    stream = [(v, "collision") for v in sample_many(listing_schema, rng, 150)]
    th2_values, th1_values = (5.0, 10.0, 20.0), (25.0, 50.0, 75.0)
    cells = sweep_thresholds(stream, listing_schema, th2_values, th1_values)
    assert [(c["th2"], c["th1"]) for c in cells] == [
        (th2, th1) for th2 in th2_values for th1 in th1_values
    ]
    assert all(1 <= c["count"] <= len(stream) for c in cells)
    vectors = [v for v, _ in stream]
    for cell in cells:
        params = UniquenessParams(cell["th1"], cell["th2"])
        expected = unique_count_among(vectors, ["collision"] * 150, listing_schema, params)
        assert cell["count"] == expected


@pytest.fixture
def square_schema():
    doc = {"name": "square", "a": [0, 100], "b": [0, 100], "c": [0, 100], "d": [0, 100]}
    return parse_schema(json.dumps(doc))


def _clustered_stream():
    """Three clusters of three; members sit 8 apart and clusters 30 apart on every field."""
    stream = []
    for base in (10.0, 40.0, 70.0):
        center = np.full(4, base)
        for field in (None, 0, 1):
            v = center.copy()
            if field is not None:
                v[field] += 8.0
            stream.append((v, "collision"))
    return stream


def test_sweep_counts_shrink_as_thresholds_grow(square_schema):
    th2_values, th1_values = (5.0, 10.0, 50.0), (25.0, 50.0, 75.0)
    cells = sweep_thresholds(_clustered_stream(), square_schema, th2_values, th1_values)
    grid = np.array([c["count"] for c in cells]).reshape(3, 3)
    np.testing.assert_array_equal(grid, [[9, 3, 3], [3, 3, 3], [2, 2, 2]])
    assert np.all(np.diff(grid, axis=0) <= 0)
    assert np.all(np.diff(grid, axis=1) <= 0)


@pytest.mark.parametrize("seed", range(5))
def test_raising_a_threshold_never_separates_similar_pairs(listing_schema, seed):
    rng = np.random.default_rng(seed)
    vectors = sample_many(listing_schema, rng, 60)
    n = listing_schema.n_changeable
    for th2_low, th2_high in [(5.0, 10.0), (10.0, 30.0), (30.0, 80.0)]:
        low = count_differences(vectors[0], vectors[1:], listing_schema, th2_low)
        high = count_differences(vectors[0], vectors[1:], listing_schema, th2_high)
        assert np.all(high <= low)
    needs = [required_differences(n, th1) for th1 in (5.0, 10.0, 25.0, 50.0, 100.0)]
    assert needs == sorted(needs)


def _jittered_stream(schema, rng, n):
    """Random violations where roughly half are small nudges of an earlier one."""
    base = sample_many(schema, rng, n)
    stream = []
    for i in range(n):
        v = base[i].copy()
        if i and rng.random() < 0.5:
            v = stream[rng.integers(len(stream))][0].copy()
            nudge = rng.normal(scale=0.05, size=schema.dim) * schema.span
            v = np.where(schema.discrete_mask, v, v + np.where(schema.changeable_mask, nudge, 0))
        stream.append((v, str(rng.choice(["collision", "out_of_road"]))))
    return stream


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("th1, th2", [(10.0, 50.0), (20.0, 20.0), (50.0, 10.0)])
def test_archive_invariant_over_random_streams(listing_schema, seed, th1, th2):
    rng = np.random.default_rng(seed)
    params = UniquenessParams(th1, th2)
    need = required_differences(listing_schema.n_changeable, th1)
    archive = ViolationArchive(listing_schema, params)
    accepted = []
    for i, (v, kind) in enumerate(_jittered_stream(listing_schema, rng, 120)):
        earlier = archive.vectors(kind).copy()
        inserted = archive.add(v, kind, sim_index=i)
        assert inserted == bool(
            np.all(count_differences(v, earlier, listing_schema, th2) >= need)
        )
        if inserted:
            accepted.append(i)
    assert [e.sim_index for e in archive] == accepted
    for a, b in combinations(archive.entries, 2):
        if a.kind == b.kind:
            assert fields_differ(a.vector, b.vector, listing_schema, th2) >= need
