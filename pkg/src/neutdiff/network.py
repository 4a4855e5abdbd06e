"""Residual network with per-region output heads and squared outputs.

The raw network maps a d-vector to 2*p outputs (two energy groups for each
of p regions); fluxes are the elementwise squares of the raw outputs, which
keeps them nonnegative everywhere.  Scale is fixed by power normalization:
the domain integral of the fission production is forced to one.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class Architecture:
    """Network shape plus the affine map that scales coordinates into the
    activation's useful range.  A single scalar scale keeps the chain rule
    for the summed second derivative exact: lap_x = scale^2 * lap_xhat."""

    input_dim: int
    blocks: int
    width: int
    regions: int
    activation: str = "tanh"
    input_center: tuple = None
    input_scale: float = 1.0

    def __post_init__(self):
        if self.input_dim not in (1, 2, 3):
            raise ValueError("input_dim must be 1..3")
        if self.blocks < 0 or self.width < 1 or self.regions < 1:
            raise ValueError("bad architecture")
        if self.activation != "tanh":
            raise ValueError("only the tanh activation is supported")
        if self.input_center is None:
            object.__setattr__(self, "input_center",
                               (0.0,) * self.input_dim)
        else:
            object.__setattr__(self, "input_center",
                               tuple(float(c) for c in self.input_center))
        if len(self.input_center) != self.input_dim:
            raise ValueError("input_center dimension mismatch")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be positive")

    @classmethod
    def for_domain(cls, domain, blocks: int, width: int) -> "Architecture":
        center = tuple(0.5 * (lo + hi) for lo, hi in
                       zip(domain.bbox_lo, domain.bbox_hi))
        extent = float(np.max(domain.bbox_hi - domain.bbox_lo))
        return cls(domain.dimension, blocks, width, domain.n_regions,
                   input_center=center, input_scale=2.0 / extent)

    def map_inputs(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return (x - np.asarray(self.input_center)) * self.input_scale

    @property
    def n_out(self) -> int:
        return 2 * self.regions

    @property
    def key(self) -> tuple:
        return (self.input_dim, self.blocks, self.width, self.n_out)

    @property
    def n_params(self) -> int:
        return kernels.param_count(self.key)


def init(arch: Architecture, rng_seed: int) -> np.ndarray:
    """Scaled-uniform weights (bound 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(rng_seed)
    d, t, n_out = arch.input_dim, arch.width, arch.n_out

    def w(rows, cols):
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols)).ravel()

    parts = [w(t, d), np.zeros(t)]
    for _ in range(arch.blocks):
        parts += [w(t, t), np.zeros(t), w(t, t), np.zeros(t)]
    parts += [w(n_out, t), np.zeros(n_out)]
    theta = np.concatenate(parts)
    assert theta.size == arch.n_params
    return theta


def forward(arch: Architecture, theta: np.ndarray, x: np.ndarray,
            backend=None) -> np.ndarray:
    """Raw outputs (length 2p per point)."""
    backend = backend or kernels.get_backend()
    v, _, _, _ = backend.forward(arch.key, theta, arch.map_inputs(x))
    return v


def flux_at(arch: Architecture, theta: np.ndarray, x: np.ndarray,
            region, backend=None) -> tuple:
    """Squared two-group outputs of the requested region head."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    region = np.broadcast_to(np.asarray(region, dtype=np.int64),
                             (x.shape[0],))
    if np.any(region < 0) or np.any(region >= arch.regions):
        raise ValueError("region id out of range")
    v = forward(arch, theta, x, backend=backend)
    c1 = np.take_along_axis(v, (2 * region)[:, None], axis=1)[:, 0]
    c2 = np.take_along_axis(v, (2 * region + 1)[:, None], axis=1)[:, 0]
    return c1 * c1, c2 * c2


class DegenerateStateError(RuntimeError):
    """Raised when the fission power of the current state is not positive."""


def power_normalize(arch: Architecture, theta: np.ndarray, points,
                    domain, backend=None):
    """Power scale over the residual set and a normalized flux accessor."""
    if points.residual.shape[0] == 0:
        raise ValueError("empty residual point set")
    coeffs = domain.coeff_arrays(points.residual_region)
    if not any(domain.material_of_region(r).fissile
               for r in range(domain.n_regions)):
        raise DegenerateStateError("domain has no fissile region")
    phi1, phi2 = flux_at(arch, theta, points.residual,
                         points.residual_region, backend=backend)
    w = points.quadrature_weight
    power = w * float(np.sum(coeffs["nu_sigma_f1"] * phi1 +
                             coeffs["nu_sigma_f2"] * phi2))
    if not np.isfinite(power) or power <= 0.0:
        raise DegenerateStateError(f"fission power {power!r} is not positive")

    def normalized_flux(x, region):
        f1, f2 = flux_at(arch, theta, x, region, backend=backend)
        return f1 / power, f2 / power

    return power, normalized_flux


def save_checkpoint(path, arch: Architecture, theta: np.ndarray,
                    rng_seed: int, epoch: int, lambda_tilde: float,
                    extra: dict | None = None) -> None:
    doc = {
        "schema": "neutdiff-checkpoint/1",
        "architecture": {
            "input_dim": arch.input_dim, "blocks": arch.blocks,
            "width": arch.width, "regions": arch.regions,
            "activation": arch.activation,
            "input_center": list(arch.input_center),
            "input_scale": arch.input_scale,
        },
        "rng_seed": int(rng_seed),
        "epoch": int(epoch),
        "lambda_tilde": float(lambda_tilde),
        "params_b64": base64.b64encode(
            np.ascontiguousarray(theta, dtype="<f8").tobytes()).decode(),
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != "neutdiff-checkpoint/1":
        raise ValueError("unsupported checkpoint schema")
    spec = dict(doc["architecture"])
    if spec.get("input_center") is not None:
        spec["input_center"] = tuple(spec["input_center"])
    arch = Architecture(**spec)
    theta = np.frombuffer(base64.b64decode(doc["params_b64"]),
                          dtype="<f8").astype(np.float64)
    if theta.size != arch.n_params:
        raise ValueError("checkpoint parameter count mismatch")
    return arch, theta, doc
