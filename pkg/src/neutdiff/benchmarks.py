"""Built-in benchmark domains and their default run settings.

Layouts follow the standard published configurations of the Ringhals-4
1-D slab, the TWIGL seed/blanket quarter core and the IAEA PWR quarter
core; the shipped lattice point counts are the regression oracle that the
geometry data is right.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .geometry import (Box, BoundarySegment, Domain, GeometryError,
                       MaterialCoefficients, Region, load_domain)

BENCHMARKS = ("ringhals1d", "twigl2d", "twigl3r2d", "iaea2d",
              "twigl3d", "iaea3d")

# architecture (residual blocks, neurons) and lattice defaults per benchmark
DEFAULTS = {
    "ringhals1d": {"blocks": 2, "width": 20, "resolution": 0.05},
    "twigl2d":    {"blocks": 4, "width": 32, "resolution": 1.0},
    "twigl3r2d":  {"blocks": 4, "width": 32, "resolution": 1.0},
    "iaea2d":     {"blocks": 4, "width": 40, "resolution": 1.0},
    "twigl3d":    {"blocks": 4, "width": 80, "resolution": 1.0},
    "iaea3d":     {"blocks": 6, "width": 60, "resolution": 1.0},
}

_RINGHALS_MATS = {
    "core": MaterialCoefficients(1.4376, 0.3723, 0.0115, 0.1019, 0.0151,
                                 0.0057, 0.1425),
    "reflector": MaterialCoefficients(1.3116, 0.2624, -0.0098, 0.0284, 0.0238,
                                      0.0, 0.0),
}

_TWIGL_MATS = {
    "seed": MaterialCoefficients(1.4, 0.4, 0.01, 0.15, 0.01, 0.007, 0.2),
    "blanket": MaterialCoefficients(1.3, 0.5, 0.008, 0.05, 0.01, 0.003, 0.06),
}

_TWIGL3R_MATS = dict(_TWIGL_MATS)
_TWIGL3R_MATS["seed_star"] = MaterialCoefficients(1.35, 0.45, 0.009, 0.1,
                                                  0.01, 0.005, 0.13)

_IAEA_MATS = {
    "fuel_main": MaterialCoefficients(1.5, 0.4, 0.01, 0.085, 0.02, 0.0, 0.135),
    "fuel_edge": MaterialCoefficients(1.5, 0.4, 0.01, 0.08, 0.02, 0.0, 0.135),
    "rodded_fuel": MaterialCoefficients(1.5, 0.4, 0.01, 0.13, 0.02, 0.0, 0.135),
    "reflector": MaterialCoefficients(2.0, 0.3, 0.0, 0.01, 0.04, 0.0, 0.0),
    "rodded_reflector": MaterialCoefficients(2.0, 0.3, 0.0, 0.055, 0.04,
                                             0.0, 0.0),
}

# IAEA quarter-core assembly map.  Cell edges sit at 0,10,30,...,170 cm (the
# first cell is the quartered central assembly).  Row 0 is y in [0,10].
#   M = main fuel zone, E = outer fuel ring, R = rodded fuel, F = reflector
_IAEA_GRID = [0.0, 10.0, 30.0, 50.0, 70.0, 90.0, 110.0, 130.0, 150.0, 170.0]
_IAEA_MAP = [
    "RMMMRMMEF",
    "MMMMMMMEF",
    "MMMMMMEEF",
    "MMMMMMEFF",
    "RMMMREEF",
    "MMMMEEFF",
    "MMEEEFF",
    "EEEFFF",
    "FFFF",
]
_IAEA_CODE = {"M": "fuel_main", "E": "fuel_edge", "R": "rodded_fuel",
              "F": "reflector"}
# outer staircase, clockwise from the top of the symmetry axis
_IAEA_OUTLINE = [((0, 170), (70, 170)), ((70, 170), (70, 150)),
                 ((70, 150), (110, 150)), ((110, 150), (110, 130)),
                 ((110, 130), (130, 130)), ((130, 130), (130, 110)),
                 ((130, 110), (150, 110)), ((150, 110), (150, 70)),
                 ((150, 70), (170, 70)), ((170, 70), (170, 0))]
# rod columns of the 3-D core, by (col, row) cell index; the diagonal bank
# is inserted from the top down to z = _IAEA_PARTIAL_Z only
_IAEA_FULL_RODS = ((0, 0), (4, 0), (0, 4))
_IAEA_PARTIAL_ROD = (4, 4)
_IAEA_PARTIAL_Z = 280.0
_IAEA_HEIGHT = 380.0
_IAEA_AXIAL_REFL = 20.0

_TWIGL_SEED_BOXES_2D = [((0.0, 24.0), (56.0, 56.0)),
                        ((24.0, 0.0), (56.0, 24.0))]
_TWIGL_CENTER_2D = ((0.0, 0.0), (24.0, 24.0))
_TWIGL_OUTER_2D = [((56.0, 0.0), (80.0, 80.0)),
                   ((0.0, 56.0), (56.0, 80.0))]
# axial extent of the seed prisms in the 3-D core
_TWIGL_SEED_Z = (30.0, 130.0)
_TWIGL_HEIGHT = 160.0


def _seg(kind, lo, hi, normal, c_bou=None):
    return BoundarySegment(kind=kind, box=Box(lo, hi),
                           normal=np.asarray(normal, dtype=float),
                           c_bou=c_bou)


def _build_ringhals1d() -> Domain:
    a, b = 279.5, 161.25
    length = 2 * a
    x0, x1 = a - b, a + b
    regions = [
        Region("reflector_left", "reflector", (Box([0.0], [x0]),)),
        Region("core", "core", (Box([x0], [x1]),)),
        Region("reflector_right", "reflector", (Box([x1], [length]),)),
    ]
    boundaries = [
        _seg("robin", [0.0], [0.0], [-1.0], c_bou=0.5),
        _seg("robin", [length], [length], [1.0], c_bou=0.5),
    ]
    return Domain(1, [0.0], [length], _RINGHALS_MATS, regions, boundaries,
                  name="ringhals1d", default_resolution=0.05)


def _twigl_boundaries_2d():
    return [
        _seg("dirichlet", [80.0, 0.0], [80.0, 80.0], [1.0, 0.0]),
        _seg("dirichlet", [0.0, 80.0], [80.0, 80.0], [0.0, 1.0]),
        _seg("neumann", [0.0, 0.0], [0.0, 80.0], [-1.0, 0.0]),
        _seg("neumann", [0.0, 0.0], [80.0, 0.0], [0.0, -1.0]),
    ]


def _build_twigl2d() -> Domain:
    regions = [
        Region("seed", "seed",
               tuple(Box(lo, hi) for lo, hi in _TWIGL_SEED_BOXES_2D)),
        Region("blanket", "blanket",
               (Box(*_TWIGL_CENTER_2D),) +
               tuple(Box(lo, hi) for lo, hi in _TWIGL_OUTER_2D)),
    ]
    return Domain(2, [0.0, 0.0], [80.0, 80.0], _TWIGL_MATS, regions,
                  _twigl_boundaries_2d(), name="twigl2d")


def _build_twigl3r2d() -> Domain:
    regions = [
        Region("seed", "seed",
               tuple(Box(lo, hi) for lo, hi in _TWIGL_SEED_BOXES_2D)),
        Region("seed_star", "seed_star", (Box(*_TWIGL_CENTER_2D),)),
        Region("blanket", "blanket",
               tuple(Box(lo, hi) for lo, hi in _TWIGL_OUTER_2D)),
    ]
    return Domain(2, [0.0, 0.0], [80.0, 80.0], _TWIGL3R_MATS, regions,
                  _twigl_boundaries_2d(), name="twigl3r2d")


def _iaea_cells():
    """(col, row, material code) triplets of the quarter-core map."""
    for row, line in enumerate(_IAEA_MAP):
        for col, code in enumerate(line):
            yield col, row, code


def _iaea_cell_box(col, row):
    return ((_IAEA_GRID[col], _IAEA_GRID[row]),
            (_IAEA_GRID[col + 1], _IAEA_GRID[row + 1]))


def _build_iaea2d() -> Domain:
    by_mat = {}
    for col, row, code in _iaea_cells():
        lo, hi = _iaea_cell_box(col, row)
        by_mat.setdefault(_IAEA_CODE[code], []).append(Box(lo, hi))
    regions = [Region(m, m, tuple(by_mat[m]))
               for m in ("fuel_main", "fuel_edge", "rodded_fuel", "reflector")]
    boundaries = [
        _seg("robin", [a[0], min(a[1], b[1])], [b[0], max(a[1], b[1])],
             [0.0, 1.0] if a[1] == b[1] else [1.0, 0.0], c_bou=0.4692)
        for a, b in _IAEA_OUTLINE
    ]
    boundaries += [
        _seg("neumann", [0.0, 0.0], [0.0, 170.0], [-1.0, 0.0]),
        _seg("neumann", [0.0, 0.0], [170.0, 0.0], [0.0, -1.0]),
    ]
    mats = {k: _IAEA_MATS[k] for k in
            ("fuel_main", "fuel_edge", "rodded_fuel", "reflector")}
    return Domain(2, [0.0, 0.0], [170.0, 170.0], mats, regions, boundaries,
                  name="iaea2d", strict_partition=False)


def _build_twigl3d() -> Domain:
    z0, z1 = _TWIGL_SEED_Z
    h = _TWIGL_HEIGHT
    seed_boxes = [Box(lo + (z0,), hi + (z1,))
                  for lo, hi in _TWIGL_SEED_BOXES_2D]
    blanket_boxes = [
        Box((0.0, 0.0, z0), (24.0, 24.0, z1)),        # centre column
        Box((0.0, 0.0, 0.0), (56.0, 56.0, z0)),       # bottom cap
        Box((0.0, 0.0, z1), (56.0, 56.0, h)),         # top cap
        Box((56.0, 0.0, 0.0), (80.0, 80.0, h)),       # outer shells
        Box((0.0, 56.0, 0.0), (56.0, 80.0, h)),
    ]
    regions = [Region("seed", "seed", tuple(seed_boxes)),
               Region("blanket", "blanket", tuple(blanket_boxes))]
    boundaries = [
        _seg("dirichlet", [80.0, 0.0, 0.0], [80.0, 80.0, h], [1, 0, 0]),
        _seg("dirichlet", [0.0, 80.0, 0.0], [80.0, 80.0, h], [0, 1, 0]),
        _seg("dirichlet", [0.0, 0.0, 0.0], [80.0, 80.0, 0.0], [0, 0, -1]),
        _seg("dirichlet", [0.0, 0.0, h], [80.0, 80.0, h], [0, 0, 1]),
        _seg("neumann", [0.0, 0.0, 0.0], [0.0, 80.0, h], [-1, 0, 0]),
        _seg("neumann", [0.0, 0.0, 0.0], [80.0, 0.0, h], [0, -1, 0]),
    ]
    return Domain(3, [0, 0, 0], [80.0, 80.0, h], _TWIGL_MATS, regions,
                  boundaries, name="twigl3d")


def _build_iaea3d() -> Domain:
    zr = _IAEA_AXIAL_REFL
    h = _IAEA_HEIGHT
    zp = _IAEA_PARTIAL_Z
    boxes = {m: [] for m in _IAEA_MATS}
    for col, row, code in _iaea_cells():
        lo, hi = _iaea_cell_box(col, row)
        boxes["reflector"].append(Box(lo + (0.0,), hi + (zr,)))
        cell = (col, row)
        if cell in _IAEA_FULL_RODS:
            boxes["rodded_fuel"].append(Box(lo + (zr,), hi + (h - zr,)))
            boxes["rodded_reflector"].append(Box(lo + (h - zr,), hi + (h,)))
        elif cell == _IAEA_PARTIAL_ROD:
            boxes["fuel_main"].append(Box(lo + (zr,), hi + (zp,)))
            boxes["rodded_fuel"].append(Box(lo + (zp,), hi + (h - zr,)))
            boxes["rodded_reflector"].append(Box(lo + (h - zr,), hi + (h,)))
        else:
            boxes[_IAEA_CODE[code]].append(Box(lo + (zr,), hi + (h - zr,)))
            boxes["reflector"].append(Box(lo + (h - zr,), hi + (h,)))
    regions = [Region(m, m, tuple(boxes[m]))
               for m in ("fuel_main", "fuel_edge", "rodded_fuel", "reflector",
                         "rodded_reflector")]
    boundaries = []
    for a, b in _IAEA_OUTLINE:
        if a[1] == b[1]:
            lo = [min(a[0], b[0]), a[1], 0.0]
            hi = [max(a[0], b[0]), a[1], h]
            normal = [0.0, 1.0, 0.0]
        else:
            lo = [a[0], min(a[1], b[1]), 0.0]
            hi = [a[0], max(a[1], b[1]), h]
            normal = [1.0, 0.0, 0.0]
        boundaries.append(_seg("robin", lo, hi, normal, c_bou=0.4692))
    heights = ((70.0, 170.0), (110.0, 150.0), (130.0, 130.0),
               (150.0, 110.0), (170.0, 70.0))
    x_prev = 0.0
    for x_hi, y_hi in heights:
        for z, nz in ((0.0, -1.0), (h, 1.0)):
            boundaries.append(_seg("robin", [x_prev, 0.0, z], [x_hi, y_hi, z],
                                   [0.0, 0.0, nz], c_bou=0.4692))
        x_prev = x_hi
    boundaries += [
        _seg("neumann", [0.0, 0.0, 0.0], [0.0, 170.0, h], [-1, 0, 0]),
        _seg("neumann", [0.0, 0.0, 0.0], [170.0, 0.0, h], [0, -1, 0]),
    ]
    return Domain(3, [0, 0, 0], [170.0, 170.0, h], _IAEA_MATS, regions,
                  boundaries, name="iaea3d", strict_partition=False)


_BUILDERS = {
    "ringhals1d": _build_ringhals1d,
    "twigl2d": _build_twigl2d,
    "twigl3r2d": _build_twigl3r2d,
    "iaea2d": _build_iaea2d,
    "twigl3d": _build_twigl3d,
    "iaea3d": _build_iaea3d,
}


def build_benchmark_dict(name: str) -> dict:
    if name not in _BUILDERS:
        raise GeometryError(f"unknown benchmark {name!r}; "
                            f"choose from {BENCHMARKS}")
    dom = _BUILDERS[name]()
    doc = dom.to_dict()
    doc["default_resolution"] = DEFAULTS[name]["resolution"]
    return doc


def builtin_benchmark(name: str) -> Domain:
    """Load one of the shipped benchmark domains from its data file."""
    if name not in _BUILDERS:
        raise GeometryError(f"unknown benchmark {name!r}; "
                            f"choose from {BENCHMARKS}")
    ref = resources.files("neutdiff.assets").joinpath(f"{name}.json")
    return load_domain(ref.read_text(encoding="utf-8"))


def write_assets(directory) -> None:
    """Regenerate the shipped benchmark JSON files."""
    from pathlib import Path
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name in BENCHMARKS:
        doc = build_benchmark_dict(name)
        (out / f"{name}.json").write_text(json.dumps(doc, indent=1),
                                          encoding="utf-8")
