import numpy as np
import pytest

from carfollow.synth import dataset_to_ngsim_frame


@pytest.fixture
def write_ngsim(tmp_path):
    """Write a Dataset as a whitespace NGSIM-layout file; returns the path."""

    def _write(dataset, units="meters", name="traj.txt"):
        path = tmp_path / name
        df = dataset_to_ngsim_frame(dataset, units=units)
        df.to_csv(path, sep=" ", header=False, index=False)
        return str(path)

    return _write


@pytest.fixture
def write_rows(tmp_path):
    """Write raw text rows to a file; returns the path."""

    def _write(text, name="rows.txt"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return _write


def ngsim_row(vehicle_id, frame, y, length=4.5, width=1.8, v_class=2,
              speed=10.0, accel=0.0, lane=1, preceding=0, space_headway=0.0,
              sep=" "):
    """One row in the default 16-column layout."""
    fields = [vehicle_id, frame, 100, frame * 100, 0.0, y, length, width,
              v_class, speed, accel, lane, preceding, 0, space_headway, 0.0]
    return sep.join(str(f) for f in fields)


@pytest.fixture
def make_rows():
    return ngsim_row


def assert_array_equal(a, b):
    np.testing.assert_array_equal(np.asarray(a), np.asarray(b))
