import pytest
from hypothesis import given, strategies as st

from carfollow.classify import (ClassifierThresholds, PairClass, VehicleClass,
                                classify_by_length, pair_class)
from carfollow.errors import DomainError


@pytest.mark.parametrize("length,expected", [
    (4.9, VehicleClass.PASSENGER_CAR),
    (5.25, VehicleClass.SUV_LIGHT_TRUCK),
    (6.1, VehicleClass.HEAVY_VEHICLE),
    (5.0, VehicleClass.PASSENGER_CAR),   # boundary: "or below"
    (5.5, VehicleClass.SUV_LIGHT_TRUCK),
    (0.3, VehicleClass.PASSENGER_CAR),
    (18.0, VehicleClass.HEAVY_VEHICLE),
])
def test_length_classification(length, expected):
    assert classify_by_length(length) == expected


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_invalid_length(bad):
    with pytest.raises(DomainError):
        classify_by_length(bad)


def test_threshold_override():
    t = ClassifierThresholds(car_max_m=4.0, suv_max_m=4.8)
    assert classify_by_length(4.5, t) == VehicleClass.SUV_LIGHT_TRUCK
    assert classify_by_length(4.9, t) == VehicleClass.HEAVY_VEHICLE


def test_bad_thresholds_rejected():
    with pytest.raises(DomainError):
        ClassifierThresholds(car_max_m=5.5, suv_max_m=5.0)


@pytest.mark.parametrize("follower,leader,expected", [
    (VehicleClass.PASSENGER_CAR, VehicleClass.PASSENGER_CAR,
     PairClass.CAR_FOLLOWS_CAR),
    (VehicleClass.PASSENGER_CAR, VehicleClass.HEAVY_VEHICLE,
     PairClass.CAR_FOLLOWS_HEAVY),
    (VehicleClass.HEAVY_VEHICLE, VehicleClass.PASSENGER_CAR,
     PairClass.HEAVY_FOLLOWS_CAR),
    (VehicleClass.HEAVY_VEHICLE, VehicleClass.HEAVY_VEHICLE,
     PairClass.HEAVY_FOLLOWS_HEAVY),
    (VehicleClass.SUV_LIGHT_TRUCK, VehicleClass.PASSENGER_CAR,
     PairClass.OTHER_PAIR),
    (VehicleClass.PASSENGER_CAR, VehicleClass.SUV_LIGHT_TRUCK,
     PairClass.OTHER_PAIR),
    (VehicleClass.SUV_LIGHT_TRUCK, VehicleClass.SUV_LIGHT_TRUCK,
     PairClass.OTHER_PAIR),
])
def test_pair_classification(follower, leader, expected):
    assert pair_class(follower, leader) == expected


@given(st.floats(min_value=1e-6, max_value=1e6, allow_nan=False))
def test_every_positive_length_has_exactly_one_class(length):
    assert classify_by_length(length) in VehicleClass


def test_class_changes_only_at_boundaries():
    grid = [x / 100.0 for x in range(1, 2000)]
    changes = [(a, b) for a, b in zip(grid, grid[1:])
               if classify_by_length(a) != classify_by_length(b)]
    assert [(a, b) for a, b in changes] == [(5.0, 5.01), (5.5, 5.51)]


def test_other_pair_iff_suv_member():
    for f in VehicleClass:
        for le in VehicleClass:
            is_other = pair_class(f, le) == PairClass.OTHER_PAIR
            has_suv = VehicleClass.SUV_LIGHT_TRUCK in (f, le)
            assert is_other == has_suv
