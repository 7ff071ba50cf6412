"""File formats for fields, images, interfaces, arrows and trajectories.

Fields are raw little-endian float64 arrays (row-major, components stacked)
with a JSON sidecar ``{nx, ny, hx, hy, origin, components}`` next to them.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from PIL import Image

from engines.interface_engine import build_interface, level_set_from_labels, reextend
from engines.mechanics_engine import trajectory_diagnostics
from models.algebroid_models import InertiaOperator, OneFormDensity
from models.field_models import Grid2, ScalarField, VectorField, make_grid
from models.groupoid_models import GroupoidElement, MomentumTrajectory
from models.interface_models import Interface, PiecewiseCovector
from models.registration_models import EnergyTerms, RegistrationResult
from utils.errors import FieldFormatError

logger = logging.getLogger(__name__)

RAW_DTYPE = np.dtype("<f8")
IMAGE_SUFFIXES = (".png", ".pgm", ".pnm", ".tif", ".tiff", ".bmp")
ELEMENT_FILES = ("phi_plus", "phi_minus", "inv_phi_plus", "inv_phi_minus")
MANIFEST = "manifest.json"

Field = Union[ScalarField, VectorField]


def _raw_path(path: str) -> str:
    return path if path.endswith(".raw") else f"{path}.raw"


def _sidecar_path(path: str) -> str:
    return f"{_raw_path(path)[:-4]}.json"


def _grid_record(grid: Grid2) -> Dict:
    return {"nx": grid.nx, "ny": grid.ny, "hx": grid.hx, "hy": grid.hy, "origin": list(grid.origin)}


def _grid_from_record(record: Dict) -> Grid2:
    try:
        return Grid2(int(record["nx"]), int(record["ny"]), float(record["hx"]), float(record["hy"]),
                     tuple(float(o) for o in record.get("origin", (0.0, 0.0))))
    except (KeyError, TypeError, ValueError) as e:
        raise FieldFormatError(f"bad grid record: {e}")


# ============================================================================
# Fields
# ============================================================================

def save_arrays(arrays: Sequence[np.ndarray], grid: Grid2, path: str) -> str:
    """Write stacked component arrays with their sidecar; returns the raw path."""
    raw = _raw_path(path)
    os.makedirs(os.path.dirname(raw) or ".", exist_ok=True)
    payload = np.stack([np.asarray(a, dtype=np.float64) for a in arrays]).astype(RAW_DTYPE)
    payload.tofile(raw)
    record = _grid_record(grid)
    record["components"] = len(arrays)
    with open(_sidecar_path(path), "w") as handle:
        json.dump(record, handle, indent=2)
    return raw


def load_arrays(path: str):
    """Read a raw field file; returns ``(grid, arrays)`` with one array per component."""
    raw = _raw_path(path)
    sidecar = _sidecar_path(path)
    if not os.path.isfile(raw) or not os.path.isfile(sidecar):
        raise FieldFormatError(f"missing field file or sidecar for {path}")
    try:
        with open(sidecar) as handle:
            record = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise FieldFormatError(f"unreadable sidecar {sidecar}: {e}")
    grid = _grid_from_record(record)
    components = int(record.get("components", 1))
    data = np.fromfile(raw, dtype=RAW_DTYPE)
    expected = components * grid.size
    if data.size != expected:
        raise FieldFormatError(f"{raw} holds {data.size} values, sidecar expects {expected}")
    arrays = [a.astype(np.float64) for a in data.reshape(components, grid.ny, grid.nx)]
    return grid, arrays


def save_field(field: Field, path: str) -> str:
    if isinstance(field, ScalarField):
        return save_arrays([field.values], field.grid, path)
    return save_arrays([field.vx, field.vy], field.grid, path)


def load_field(path: str) -> Field:
    grid, arrays = load_arrays(path)
    if len(arrays) == 1:
        return ScalarField(grid, arrays[0])
    if len(arrays) == 2:
        return VectorField(grid, arrays[0], arrays[1])
    raise FieldFormatError(f"{path}: expected 1 or 2 components, found {len(arrays)}")


# ============================================================================
# Images
# ============================================================================

def is_image_path(path: str) -> bool:
    return path.lower().endswith(IMAGE_SUFFIXES)


def image_grid(nx: int, ny: int) -> Grid2:
    """Square-pixel grid whose longer side spans [0, 1]."""
    h = 1.0 / (max(nx, ny) - 1)
    return make_grid(nx, ny, extent=((nx - 1) * h, (ny - 1) * h))


def load_image(path: str, grid: Optional[Grid2] = None) -> ScalarField:
    """
    Read a grayscale image normalized to [0, 1].

    Image row 0 is the top of the picture, so rows are flipped to put it at
    the largest ``y``.
    """
    try:
        with Image.open(path) as img:
            mode = img.mode
            array = np.asarray(img.convert("I") if mode in ("I;16", "I;16B", "I") else img.convert("L"),
                               dtype=np.float64)
    except (OSError, ValueError) as e:
        raise FieldFormatError(f"cannot read image {path}: {e}")
    scale = 65535.0 if mode.startswith("I") else 255.0
    values = np.flipud(array) / scale
    ny, nx = values.shape
    grid = grid if grid is not None else image_grid(nx, ny)
    if grid.shape != values.shape:
        raise FieldFormatError(f"image {path} is {nx}x{ny}, grid expects {grid.nx}x{grid.ny}")
    return ScalarField(grid, values)


def save_image(field: ScalarField, path: str) -> str:
    """Write an 8-bit grayscale image, clipping values to [0, 1]."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    data = np.rint(np.clip(np.flipud(field.values), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)
    return path


def load_scalar(path: str, grid: Optional[Grid2] = None) -> ScalarField:
    """Image or raw scalar field, depending on the suffix."""
    if is_image_path(path):
        return load_image(path, grid)
    field = load_field(path)
    if not isinstance(field, ScalarField):
        raise FieldFormatError(f"{path} is not a scalar field")
    return field


# ============================================================================
# Interfaces
# ============================================================================

def save_interface(interface: Interface, path: str) -> str:
    return save_field(interface.sdf, path)


def load_interface(path: str, grid: Optional[Grid2] = None, band_width: Optional[float] = None) -> Interface:
    """
    Interface from a signed-distance field file or a label image (pixels above one half are D+).
    """
    if is_image_path(path):
        labels = load_image(path, grid)
        return build_interface(level_set_from_labels(labels.values > 0.5, labels.grid), band_width)
    return build_interface(load_scalar(path), band_width)


# ============================================================================
# Groupoid elements
# ============================================================================

def save_element(element: GroupoidElement, directory: str) -> str:
    """Four position maps, two interfaces and a manifest."""
    os.makedirs(directory, exist_ok=True)
    files = {}
    for name in ELEMENT_FILES:
        files[name] = os.path.basename(save_field(getattr(element, name), os.path.join(directory, name)))
    if not element.smooth:
        files["gamma_src"] = os.path.basename(save_interface(element.gamma_src, os.path.join(directory, "gamma_src")))
        files["gamma_trg"] = os.path.basename(save_interface(element.gamma_trg, os.path.join(directory, "gamma_trg")))
    manifest = {"kind": "groupoid_element", "grid": _grid_record(element.grid),
                "smooth": element.smooth, "files": files}
    if not element.smooth:
        manifest["band_width"] = element.gamma_src.band_width
    with open(os.path.join(directory, MANIFEST), "w") as handle:
        json.dump(manifest, handle, indent=2)
    logger.info(f"Saved groupoid element to {directory}")
    return directory


def load_element(directory: str) -> GroupoidElement:
    path = os.path.join(directory, MANIFEST)
    try:
        with open(path) as handle:
            manifest = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise FieldFormatError(f"unreadable element manifest {path}: {e}")
    grid = _grid_from_record(manifest.get("grid", {}))
    files = manifest.get("files", {})
    maps = {}
    for name in ELEMENT_FILES:
        field = load_field(os.path.join(directory, files.get(name, f"{name}.raw")))
        if not isinstance(field, VectorField):
            raise FieldFormatError(f"{name} must be a vector field")
        maps[name] = field
    gamma_src = gamma_trg = None
    if not manifest.get("smooth", False):
        band = manifest.get("band_width")
        gamma_src = build_interface(load_scalar(os.path.join(directory, files["gamma_src"])), band)
        gamma_trg = build_interface(load_scalar(os.path.join(directory, files["gamma_trg"])), band)
    return GroupoidElement(grid, gamma_src, gamma_trg, maps["phi_plus"], maps["phi_minus"],
                           maps["inv_phi_plus"], maps["inv_phi_minus"])


# ============================================================================
# Momenta and trajectories
# ============================================================================

def save_momentum(mt: OneFormDensity, path: str) -> str:
    plus, minus = mt.m.plus_part, mt.m.minus_part
    if mt.interface is None:
        return save_arrays([plus.vx, plus.vy], mt.grid, path)
    return save_arrays([plus.vx, plus.vy, minus.vx, minus.vy], mt.grid, path)


def load_momentum(path: str, interface: Optional[Interface] = None) -> OneFormDensity:
    """Two components give the same covector on both sides; four give plus then minus."""
    grid, arrays = load_arrays(path)
    if len(arrays) not in (2, 4):
        raise FieldFormatError(f"{path}: a momentum needs 2 or 4 components, found {len(arrays)}")
    plus = VectorField(grid, arrays[0], arrays[1])
    minus = VectorField(grid, arrays[2], arrays[3]) if len(arrays) == 4 else plus
    if interface is not None:
        grid.require_same(interface.grid)
    return OneFormDensity(reextend(PiecewiseCovector(interface, plus, minus), interface))


DIAGNOSTIC_COLUMNS = ["time", "hamiltonian", "max_speed", "interface_length", "min_jacobian"]


def write_diagnostics(rows: List[Dict], path: str) -> str:
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=DIAGNOSTIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: f"{row[k]:.10g}" for k in DIAGNOSTIC_COLUMNS})
    return path


def write_energy_trace(trace: Sequence[EnergyTerms], path: str) -> str:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["iteration", "total", "similarity", "regularizer"])
        for k, terms in enumerate(trace):
            writer.writerow([k, f"{terms.total:.12e}", f"{terms.similarity:.12e}", f"{terms.regularizer:.12e}"])
    return path


class ResultStore:
    """Writes registration results and shooting trajectories under one output directory."""

    def __init__(self, root: str):
        self.root = root
        try:
            os.makedirs(root, exist_ok=True)
        except OSError as e:
            raise FieldFormatError(f"cannot create output directory {root}: {e}")

    def path(self, *parts: str) -> str:
        return os.path.join(self.root, *parts)

    def save_registration(self, result: RegistrationResult) -> Dict[str, str]:
        """Warped image (PNG and raw), element directory and energy trace CSV."""
        try:
            written = {
                "warped_png": save_image(result.warped, self.path("warped.png")),
                "warped_raw": save_field(result.warped, self.path("warped")),
                "element": save_element(result.element, self.path("element")),
                "energy_trace": write_energy_trace(result.energy_trace, self.path("energy_trace.csv")),
            }
        except OSError as e:
            raise FieldFormatError(f"failed writing results to {self.root}: {e}")
        logger.info(f"Saved registration result to {self.root}")
        return written

    def save_trajectory(self, traj: MomentumTrajectory, inertia: InertiaOperator) -> Dict[str, str]:
        """Per-step momentum and interface files, a manifest and the diagnostics CSV."""
        steps = []
        try:
            for k, (t, mt, gamma) in enumerate(zip(traj.times, traj.momenta, traj.interfaces)):
                entry = {"time": float(t), "momentum": os.path.basename(save_momentum(mt, self.path(f"m_{k:04d}")))}
                if gamma is not None:
                    entry["interface"] = os.path.basename(save_interface(gamma, self.path(f"gamma_{k:04d}")))
                steps.append(entry)
            with open(self.path(MANIFEST), "w") as handle:
                json.dump({"kind": "momentum_trajectory", "steps": steps}, handle, indent=2)
            diagnostics = trajectory_diagnostics(traj, inertia)
            write_diagnostics(diagnostics, self.path("diagnostics.csv"))
        except OSError as e:
            raise FieldFormatError(f"failed writing trajectory to {self.root}: {e}")
        logger.info(f"Saved trajectory with {len(steps)} states to {self.root}")
        return {"manifest": self.path(MANIFEST), "diagnostics": self.path("diagnostics.csv")}
