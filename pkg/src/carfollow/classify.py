"""Vehicle class assignment from body length, and follower/leader pair classes.

Classification is purely length based: passenger cars up to 5.0 m, SUVs and
light pickups between 5.0 and 5.5 m, heavy vehicles above 5.5 m. Pairs with
an SUV/light-truck participant fall into OtherPair and are excluded from the
four-pair statistics tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import DomainError


class VehicleClass(Enum):
    PASSENGER_CAR = "passenger_car"
    SUV_LIGHT_TRUCK = "suv_light_truck"
    HEAVY_VEHICLE = "heavy_vehicle"


class PairClass(Enum):
    CAR_FOLLOWS_CAR = "car_follows_car"
    CAR_FOLLOWS_HEAVY = "car_follows_heavy"
    HEAVY_FOLLOWS_CAR = "heavy_follows_car"
    HEAVY_FOLLOWS_HEAVY = "heavy_follows_heavy"
    OTHER_PAIR = "other_pair"


#: The four pair classes reported in the summary tables, in emission order.
REPORTED_PAIRS = (
    PairClass.CAR_FOLLOWS_CAR,
    PairClass.CAR_FOLLOWS_HEAVY,
    PairClass.HEAVY_FOLLOWS_CAR,
    PairClass.HEAVY_FOLLOWS_HEAVY,
)


@dataclass(frozen=True)
class ClassifierThresholds:
    """Length boundaries in meters; both boundaries are inclusive upward."""

    car_max_m: float = 5.0
    suv_max_m: float = 5.5

    def __post_init__(self):
        if not 0.0 < self.car_max_m < self.suv_max_m:
            raise DomainError(
                f"invalid classifier thresholds: car_max_m={self.car_max_m}, "
                f"suv_max_m={self.suv_max_m}"
            )


DEFAULT_THRESHOLDS = ClassifierThresholds()


def classify_by_length(length_m: float,
                       thresholds: ClassifierThresholds = DEFAULT_THRESHOLDS) -> VehicleClass:
    """Map a vehicle body length in meters to its class.

    Lengths at exactly 5.0 m classify as passenger car and at exactly 5.5 m
    as SUV/light truck; the three intervals tile (0, inf).
    """
    if not length_m > 0:
        raise DomainError(f"vehicle length must be positive, got {length_m}")
    if length_m <= thresholds.car_max_m:
        return VehicleClass.PASSENGER_CAR
    if length_m <= thresholds.suv_max_m:
        return VehicleClass.SUV_LIGHT_TRUCK
    return VehicleClass.HEAVY_VEHICLE


_PAIR_TABLE = {
    (VehicleClass.PASSENGER_CAR, VehicleClass.PASSENGER_CAR): PairClass.CAR_FOLLOWS_CAR,
    (VehicleClass.PASSENGER_CAR, VehicleClass.HEAVY_VEHICLE): PairClass.CAR_FOLLOWS_HEAVY,
    (VehicleClass.HEAVY_VEHICLE, VehicleClass.PASSENGER_CAR): PairClass.HEAVY_FOLLOWS_CAR,
    (VehicleClass.HEAVY_VEHICLE, VehicleClass.HEAVY_VEHICLE): PairClass.HEAVY_FOLLOWS_HEAVY,
}


def pair_class(follower: VehicleClass, leader: VehicleClass) -> PairClass:
    """Classify a (follower, leader) pair; any SUV/light-truck member -> OtherPair."""
    return _PAIR_TABLE.get((follower, leader), PairClass.OTHER_PAIR)
