"""Loss terms for the physics-constrained eigenvalue solver.

Three residual strategies (decoupling, direct-iterative, inverse-power),
per-kind boundary penalties, the two interface jump penalties, their
weighted total, and the Rayleigh-quotient eigenvalue estimate.  All sums
run over points exactly as written (no averaging).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var

RESIDUAL_KINDS = ("ipm", "de", "di")


@dataclass
class IterationState:
    """Previous-iterate snapshot feeding the current epoch's residual."""

    prev_phi1: np.ndarray      # detached, power normalized, at X_res
    prev_phi2: np.ndarray
    lambda_tilde: float        # 1/k_prev + sigma
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.lambda_tilde):
            raise ValueError("lambda_tilde must be finite")
        if abs(self.k_prev) < 1e-300:
            raise ValueError("previous k_eff must be nonzero")

    @property
    def k_prev(self) -> float:
        return 1.0 / (self.lambda_tilde - self.sigma)


@dataclass(frozen=True)
class LossWeights:
    res: float = 1.0
    bou: float = 1.0
    int0: float = 1.0
    int1: float = 1.0

    def __post_init__(self):
        vals = (self.res, self.bou, self.int0, self.int1)
        if any(v < 0 for v in vals) or all(v == 0 for v in vals):
            raise ValueError("weights must be nonnegative and not all zero")


def flux_records(u: Var, gu: Var, lu: Var) -> tuple:
    """phi = u^2 and its Laplacian: 2 (u lap(u) + |grad u|^2)."""
    phi = u.square()
    lap = 2.0 * (u * lu + gu.square().sum_last())
    return phi, lap


def normal_derivative(u: Var, gu: Var, normals: np.ndarray) -> Var:
    """d(u^2)/dn = 2 u (grad u . n)."""
    return 2.0 * (u * gu.dot_last(normals))


def residual_loss_de(rec, coeffs, state: IterationState) -> Var:
    """Decoupling residual: both group equations keep only the current
    group's unknown; every other flux comes from the previous iterate."""
    c = coeffs
    sig = state.sigma
    lhs1 = (-c["d1"] * rec["lap1"]
            + (c["sigma_a1"] + c["sigma_12"]) * rec["phi1"]
            + sig * c["nu_sigma_f1"] * rec["phi1"])
    rhs1 = (sig * c["nu_sigma_f1"] * state.prev_phi1
            + (1.0 / state.k_prev) * (c["nu_sigma_f1"] * state.prev_phi1
                                      + c["nu_sigma_f2"] * state.prev_phi2))
    lhs2 = -c["d2"] * rec["lap2"] + c["sigma_a2"] * rec["phi2"]
    rhs2 = c["sigma_12"] * state.prev_phi1
    return (lhs1 - rhs1).square().sum() + (lhs2 - rhs2).square().sum()


def residual_loss_di(rec, coeffs, state: IterationState) -> Var:
    """Direct-iterative residual: the shift couples both current fluxes in
    the fast equation; the thermal scattering source is the previous fast
    flux so its information survives when nu_sigma_f1 vanishes."""
    c = coeffs
    sig = state.sigma
    lhs1 = (-c["d1"] * rec["lap1"]
            + (c["sigma_a1"] + c["sigma_12"]) * rec["phi1"]
            + sig * (c["nu_sigma_f1"] * rec["phi1"]
                     + c["nu_sigma_f2"] * rec["phi2"]))
    rhs1 = state.lambda_tilde * (c["nu_sigma_f1"] * state.prev_phi1
                                 + c["nu_sigma_f2"] * state.prev_phi2)
    lhs2 = (-c["d2"] * rec["lap2"] + c["sigma_a2"] * rec["phi2"]
            - c["sigma_12"] * state.prev_phi1)
    return (lhs1 - rhs1).square().sum() + lhs2.square().sum()


def residual_loss_ipm(rec, coeffs, state: IterationState) -> Var:
    """Inverse-power residual: shift-free; the thermal equation uses the
    current fast flux."""
    c = coeffs
    lam = 1.0 / state.k_prev
    r1 = (-c["d1"] * rec["lap1"]
          + (c["sigma_a1"] + c["sigma_12"]) * rec["phi1"]
          - lam * (c["nu_sigma_f1"] * state.prev_phi1
                   + c["nu_sigma_f2"] * state.prev_phi2))
    r2 = (-c["d2"] * rec["lap2"] + c["sigma_a2"] * rec["phi2"]
          - c["sigma_12"] * rec["phi1"])
    return r1.square().sum() + r2.square().sum()


RESIDUAL_LOSSES = {"de": residual_loss_de, "di": residual_loss_di,
                   "ipm": residual_loss_ipm}


def boundary_loss(batches: dict) -> Var:
    """Sum of the per-kind boundary penalties.

    batches maps kind -> dict with Vars phi1, phi2 and, for derivative
    conditions, dphi1_dn, dphi2_dn plus arrays value/c_bou/d1/d2.
    """
    total = Var(0.0)
    for kind, b in batches.items():
        if kind == "dirichlet":
            total = total + ((b["phi1"] - b["value"]).square().sum()
                             + (b["phi2"] - b["value"]).square().sum())
        elif kind == "neumann":
            total = total + (b["dphi1_dn"].square().sum()
                             + b["dphi2_dn"].square().sum())
        elif kind == "robin":
            r1 = b["dphi1_dn"] + (b["c_bou"] / b["d1"]) * b["phi1"]
            r2 = b["dphi2_dn"] + (b["c_bou"] / b["d2"]) * b["phi2"]
            total = total + r1.square().sum() + r2.square().sum()
        else:
            raise ValueError(f"unknown boundary kind {kind!r}")
    return total


def interface_loss(rec) -> tuple:
    """(continuity, current-continuity) jump penalties.

    rec holds per-entry Vars for both region heads: phi1_a/phi1_b,
    phi2_a/phi2_b, dphi*_dn_* and diffusion arrays d1_a, d1_b, d2_a, d2_b.
    """
    jump0 = ((rec["phi1_a"] - rec["phi1_b"]).square().sum()
             + (rec["phi2_a"] - rec["phi2_b"]).square().sum())
    j1 = rec["d1_a"] * rec["dphi1_dn_a"] - rec["d1_b"] * rec["dphi1_dn_b"]
    j2 = rec["d2_a"] * rec["dphi2_dn_a"] - rec["d2_b"] * rec["dphi2_dn_b"]
    jump1 = j1.square().sum() + j2.square().sum()
    return jump0, jump1


def total_loss(res: Var, bou: Var, int0: Var, int1: Var,
               weights: LossWeights) -> Var:
    for name, part in (("res", res), ("bou", bou), ("int0", int0),
                       ("int1", int1)):
        if not np.isfinite(part.value):
            raise FloatingPointError(f"non-finite loss part {name}")
    return (weights.res * res + weights.bou * bou
            + weights.int0 * int0 + weights.int1 * int1)


def rayleigh_quotient(phi1, phi2, lap1, lap2, coeffs, sigma: float) -> float:
    """Discrete Rayleigh quotient over the residual points (gradient-free).

    Returns lambda_tilde = 1/k_eff + sigma.
    """
    c = coeffs
    psi = c["nu_sigma_f1"] * phi1 + c["nu_sigma_f2"] * phi2
    denom = float(np.sum((c["chi1"] * phi1 + c["chi2"] * phi2) * psi))
    if not np.isfinite(denom) or denom <= 0.0:
        raise ValueError("nonpositive Rayleigh-quotient denominator")
    num1 = np.sum((-c["d1"] * lap1
                   + (c["sigma_a1"] + c["sigma_12"]) * phi1
                   + sigma * c["chi1"] * psi) * phi1)
    num2 = np.sum((-c["d2"] * lap2 + c["sigma_a2"] * phi2
                   - c["sigma_12"] * phi1 + sigma * c["chi2"] * psi) * phi2)
    return float((num1 + num2) / denom)
