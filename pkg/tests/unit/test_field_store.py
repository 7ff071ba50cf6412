"""Unit tests for field, image, interface, arrow and trajectory files."""

import csv
import json
import os

import numpy as np
import pytest

from engines.mechanics_engine import shoot
from generators.scenario_generator import gen_rectangle
from models.algebroid_models import InertiaOperator, OneFormDensity
from models.field_models import ScalarField, VectorField, make_grid
from models.registration_models import EnergyTerms
from storage.field_store import (ResultStore, load_element, load_field, load_image, load_interface,
                                 load_momentum, load_scalar, save_arrays, save_element, save_field,
                                 save_image, save_interface, save_momentum, write_energy_trace)
from utils.errors import FieldFormatError


class TestFieldFiles:
    """Raw fields with JSON sidecars."""

    def test_scalar_round_trip(self, tmp_path, rng):
        grid = make_grid(12, 9, extent=(2.0, 1.0))
        field = ScalarField(grid, rng.standard_normal(grid.shape))
        raw = save_field(field, str(tmp_path / "f"))
        assert raw.endswith("f.raw")
        assert os.path.isfile(tmp_path / "f.json")
        loaded = load_field(raw)
        assert loaded.grid.matches(grid)
        np.testing.assert_array_equal(loaded.values, field.values)

    def test_vector_round_trip_without_suffix(self, tmp_path, rng):
        grid = make_grid(8, 8)
        field = VectorField(grid, *rng.standard_normal((2,) + grid.shape))
        save_field(field, str(tmp_path / "v.raw"))
        loaded = load_field(str(tmp_path / "v"))
        np.testing.assert_array_equal(loaded.vx, field.vx)
        np.testing.assert_array_equal(loaded.vy, field.vy)

    def test_sidecar_records_grid(self, tmp_path, grid32):
        save_field(ScalarField.zeros(grid32), str(tmp_path / "z"))
        record = json.loads((tmp_path / "z.json").read_text())
        assert record["nx"] == 32
        assert record["components"] == 1

    def test_truncated_payload(self, tmp_path, grid32):
        raw = save_field(ScalarField.zeros(grid32), str(tmp_path / "z"))
        with open(raw, "r+b") as handle:
            handle.truncate(64)
        with pytest.raises(FieldFormatError, match="sidecar expects"):
            load_field(raw)

    def test_missing_sidecar(self, tmp_path, grid32):
        raw = save_field(ScalarField.zeros(grid32), str(tmp_path / "z"))
        os.remove(tmp_path / "z.json")
        with pytest.raises(FieldFormatError, match="missing"):
            load_field(raw)

    def test_three_components_are_not_a_field(self, tmp_path, grid32):
        zero = np.zeros(grid32.shape)
        save_arrays([zero, zero, zero], grid32, str(tmp_path / "t"))
        with pytest.raises(FieldFormatError):
            load_field(str(tmp_path / "t"))


class TestImages:
    """Grayscale image input and output."""

    def test_round_trip_is_quantized(self, tmp_path, grid32):
        X, Y = grid32.coordinates
        field = ScalarField(grid32, 0.5 * X + 0.4 * Y)
        path = save_image(field, str(tmp_path / "img.png"))
        loaded = load_image(path)
        np.testing.assert_allclose(loaded.values, field.values, atol=0.5 / 255.0 + 1e-12)

    def test_top_row_is_largest_y(self, tmp_path, grid32):
        _, Y = grid32.coordinates
        save_image(ScalarField(grid32, Y), str(tmp_path / "ramp.png"))
        loaded = load_scalar(str(tmp_path / "ramp.png"))
        assert loaded.values[-1, 0] == pytest.approx(1.0)
        assert loaded.values[0, 0] == pytest.approx(0.0)

    def test_unreadable_image(self, tmp_path):
        bogus = tmp_path / "bogus.png"
        bogus.write_text("not an image")
        with pytest.raises(FieldFormatError, match="cannot read image"):
            load_image(str(bogus))


class TestInterfacesAndArrows:
    """Interfaces, label images and groupoid elements."""

    def test_interface_round_trip(self, tmp_path, circle64):
        path = save_interface(circle64, str(tmp_path / "gamma"))
        loaded = load_interface(path)
        np.testing.assert_allclose(loaded.sdf.values, circle64.sdf.values, atol=0.1 * circle64.grid.max_spacing)

    def test_label_image(self, tmp_path, grid32):
        _, Y = grid32.coordinates
        save_image(ScalarField(grid32, (Y > 0.5).astype(float)), str(tmp_path / "labels.png"))
        interface = load_interface(str(tmp_path / "labels.png"))
        np.testing.assert_array_equal(interface.plus_mask, Y > 0.5)

    def test_element_round_trip(self, tmp_path):
        truth = gen_rectangle(32, 0.1).truth_element
        save_element(truth, str(tmp_path / "element"))
        loaded = load_element(str(tmp_path / "element"))
        for name in ("phi_plus", "phi_minus", "inv_phi_plus", "inv_phi_minus"):
            np.testing.assert_array_equal(getattr(loaded, name).vx, getattr(truth, name).vx)
        np.testing.assert_allclose(loaded.gamma_trg.sdf.values, truth.gamma_trg.sdf.values, atol=1e-12)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FieldFormatError, match="manifest"):
            load_element(str(tmp_path))


class TestMomentaAndTrajectories:
    """Momentum files, CSV outputs and the result store."""

    def test_piecewise_momentum_round_trip(self, tmp_path, horizontal32, rng):
        grid = horizontal32.grid
        mt = OneFormDensity.from_parts(horizontal32, VectorField(grid, *rng.standard_normal((2,) + grid.shape)),
                                       VectorField(grid, *rng.standard_normal((2,) + grid.shape)))
        save_momentum(mt, str(tmp_path / "m"))
        loaded = load_momentum(str(tmp_path / "m"), horizontal32)
        plus = horizontal32.plus_mask
        np.testing.assert_array_equal(loaded.m.plus_part.vx[plus], mt.m.plus_part.vx[plus])
        np.testing.assert_array_equal(loaded.m.minus_part.vy[~plus], mt.m.minus_part.vy[~plus])

    def test_smooth_momentum_has_two_components(self, tmp_path, grid32):
        save_momentum(OneFormDensity.zeros(grid32), str(tmp_path / "m"))
        record = json.loads((tmp_path / "m.json").read_text())
        assert record["components"] == 2
        assert load_momentum(str(tmp_path / "m")).interface is None

    def test_energy_trace_csv(self, tmp_path):
        path = write_energy_trace([EnergyTerms(3.0, 2.0, 1.0), EnergyTerms(1.5, 1.0, 0.5)],
                                  str(tmp_path / "trace.csv"))
        with open(path) as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["iteration", "total", "similarity", "regularizer"]
        assert float(rows[2][1]) == 1.5

    def test_trajectory_store(self, tmp_path, horizontal32):
        inertia = InertiaOperator(kind="helmholtz", alpha=0.01)
        traj = shoot(OneFormDensity.zeros(horizontal32.grid, horizontal32), horizontal32, 2, inertia)
        written = ResultStore(str(tmp_path / "traj")).save_trajectory(traj, inertia)
        manifest = json.loads(open(written["manifest"]).read())
        assert len(manifest["steps"]) == 3
        assert all("interface" in step for step in manifest["steps"])
        with open(written["diagnostics"]) as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 3
        assert float(rows[0]["hamiltonian"]) == 0.0

    def test_store_root_must_be_creatable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(FieldFormatError, match="cannot create"):
            ResultStore(str(blocker / "out"))
