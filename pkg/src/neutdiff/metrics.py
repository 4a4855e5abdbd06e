"""Error criteria between network and reference solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fd import EigenSolution


@dataclass(frozen=True)
class ErrorReport:
    e_r_k: float
    e_r_2_phi1: float
    e_r_inf_phi1: float
    e_r_2_phi2: float
    e_r_inf_phi2: float
    n_points: int

    def as_dict(self) -> dict:
        return {
            "e_r_k": self.e_r_k,
            "e_r_2_phi1": self.e_r_2_phi1,
            "e_r_inf_phi1": self.e_r_inf_phi1,
            "e_r_2_phi2": self.e_r_2_phi2,
            "e_r_inf_phi2": self.e_r_inf_phi2,
            "n_points": self.n_points,
        }


def keff_error(k_nn: float, k_ref: float) -> float:
    if k_ref == 0:
        raise ValueError("reference eigenvalue is zero")
    return abs(k_nn - k_ref) / abs(k_ref)


def _normalize_pair(phi1, phi2, coeffs, weight):
    power = weight * float(np.sum(coeffs["nu_sigma_f1"] * phi1
                                  + coeffs["nu_sigma_f2"] * phi2))
    if power <= 0:
        raise ValueError("nonpositive power during normalization")
    return phi1 / power, phi2 / power


def flux_error(nn_phi, ref_phi, p) -> float:
    """Discrete relative L^p error; p is 2 or inf.

    Both fields must already be normalized consistently.
    """
    diff = np.asarray(nn_phi) - np.asarray(ref_phi)
    ref = np.asarray(ref_phi)
    if p == 2:
        denom = np.linalg.norm(ref)
        if denom == 0:
            raise ValueError("zero reference norm")
        return float(np.linalg.norm(diff) / denom)
    if np.isinf(p):
        denom = np.max(np.abs(ref))
        if denom == 0:
            raise ValueError("zero reference norm")
        return float(np.max(np.abs(diff)) / denom)
    raise ValueError("p must be 2 or inf")


def compare_fields(points, region, nn_phi1, nn_phi2, ref_phi1, ref_phi2,
                   k_nn, k_ref, domain) -> ErrorReport:
    """Error report on a shared lattice; both pairs are power normalized
    on that lattice before comparison (eigenfunctions carry no scale)."""
    coeffs = domain.coeff_arrays(region)
    w = domain.volume / points.shape[0]
    nn1, nn2 = _normalize_pair(nn_phi1, nn_phi2, coeffs, w)
    rf1, rf2 = _normalize_pair(ref_phi1, ref_phi2, coeffs, w)
    return ErrorReport(
        e_r_k=keff_error(k_nn, k_ref),
        e_r_2_phi1=flux_error(nn1, rf1, 2),
        e_r_inf_phi1=flux_error(nn1, rf1, np.inf),
        e_r_2_phi2=flux_error(nn2, rf2, 2),
        e_r_inf_phi2=flux_error(nn2, rf2, np.inf),
        n_points=points.shape[0],
    )


def report_against_reference(result, reference: EigenSolution) -> ErrorReport:
    """Evaluate a training result on the reference solver's own lattice."""
    pts = reference.grid.points
    region = reference.grid.node_region
    nn1, nn2 = result.flux(pts, region)
    return compare_fields(pts, region, nn1, nn2, reference.phi1,
                          reference.phi2, result.k_eff, reference.k_eff,
                          result.domain)
