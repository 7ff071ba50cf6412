"""Unit tests for report rows and the sliding-sharpness measure."""

from types import SimpleNamespace

import numpy as np
import pytest

from generators.report_generator import CSV_HEADER, reference_rows, sliding_jump
from models.field_models import VectorField
from models.interface_models import PiecewiseVector
from models.registration_models import ReportRow


class TestSlidingJump:
    """Tangential velocity difference sampled one spacing off the curve."""

    def test_smooth_shear_is_measured(self, horizontal32):
        grid = horizontal32.grid
        _, Y = grid.coordinates
        shear = VectorField(grid, 0.3 * (Y - 0.5), np.zeros(grid.shape))
        run = SimpleNamespace(velocities=[PiecewiseVector(None, shear, shear)])
        assert sliding_jump(run, horizontal32) == pytest.approx(0.3 * 2.0 * grid.max_spacing, rel=1e-9)

    def test_sliding_halves_are_measured_in_full(self, horizontal32):
        grid = horizontal32.grid
        zero = np.zeros(grid.shape)
        v = PiecewiseVector(horizontal32, VectorField(grid, zero + 0.1, zero), VectorField(grid, zero - 0.1, zero))
        run = SimpleNamespace(velocities=[v, v])
        assert sliding_jump(run, horizontal32) == pytest.approx(0.2, rel=1e-12)

    def test_translation_has_no_jump(self, horizontal32):
        grid = horizontal32.grid
        zero = np.zeros(grid.shape)
        uniform = VectorField(grid, zero + 0.1, zero + 0.05)
        run = SimpleNamespace(velocities=[PiecewiseVector(None, uniform, uniform)])
        assert sliding_jump(run, horizontal32) == pytest.approx(0.0, abs=1e-14)

    def test_no_velocities(self, horizontal32):
        assert sliding_jump(SimpleNamespace(velocities=[]), horizontal32) == 0.0


class TestRows:
    def test_csv_columns_follow_the_header(self):
        row = ReportRow("rectangle", "Proposed", 6.25, 0.9968, 0.9755, tangential_jump=0.0412)
        assert len(row.as_csv()) == len(CSV_HEADER)
        assert row.as_csv() == ["rectangle", "Proposed", "6.2500", "0.996800", "0.975500", "0.041200"]

    def test_rows_without_velocity_leave_the_jump_blank(self):
        assert ReportRow("wheel", "Before", 100.0, 0.9957, 0.969).as_csv()[-1] == ""

    def test_reference_rows(self):
        rows = reference_rows("wheel")
        assert [r.method for r in rows] == ["Before", "TV", "LDDMM", "Proposed"]
        assert rows[-1].re_ssd == 53.98
        assert reference_rows("bump") == []
