"""Training loop: full-batch epochs, Adam updates, previous-iterate
snapshots, Rayleigh-quotient eigenvalue tracking, best-loss checkpointing.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import kernels, losses, network
from .autodiff import Var, network_eval, param_gradient
from .benchmarks import DEFAULTS, builtin_benchmark
from .geometry import Domain, PointSets, interface_budget, load_domain, \
    sample_points
from .losses import IterationState, LossWeights
from .network import Architecture, DegenerateStateError

HISTORY_FIELDS = ("epoch", "loss_total", "loss_res", "loss_bou",
                  "loss_int0", "loss_int1", "lambda_tilde", "k_eff")


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, history=None, checkpoint=None):
        super().__init__(msg)
        self.history = history
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    benchmark: str | None = None
    domain_file: str | None = None
    loss: str = "de"
    sigma: float = 0.0
    epochs: int = 1000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rng_seed: int = 0
    sample_rate: float = 1.0
    interface_proportion: float = 1.0
    weights: tuple = (1.0, 1.0, 1.0, 1.0)
    resolution: float | None = None
    blocks: int | None = None
    width: int | None = None
    k0: float = 1.0
    checkpoint_every: int = 0
    deterministic: bool = True
    grad_clip: float | None = None
    max_restarts: int = 2
    kernel: str | None = None
    schema: str = "neutdiff-train/1"

    def __post_init__(self):
        if self.loss not in losses.RESIDUAL_KINDS:
            raise ValueError(f"loss must be one of {losses.RESIDUAL_KINDS}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not (self.benchmark or self.domain_file):
            raise ValueError("need a benchmark name or a domain file")

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        doc.pop("schema", None)
        if "weights" in doc:
            doc["weights"] = tuple(doc["weights"])
        return cls(**doc)


@dataclass
class TrainResult:
    arch: Architecture
    theta: np.ndarray            # best-loss parameters
    lambda_tilde: float          # Rayleigh-quotient estimate at best epoch
    sigma: float
    epoch: int                   # best epoch
    domain: Domain
    points: PointSets

    @property
    def k_eff(self) -> float:
        return 1.0 / (self.lambda_tilde - self.sigma)

    def flux(self, x, region):
        """Power-normalized flux accessor of the stored best state."""
        _, acc = network.power_normalize(self.arch, self.theta, self.points,
                                         self.domain)
        return acc(x, region)


def optimizer_step(params, grad, m, v, step, lr, beta1, beta2, eps):
    """Adam with bias correction; returns (params, m, v)."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, m, v


def resolve_domain(config: TrainConfig) -> Domain:
    if config.benchmark:
        return builtin_benchmark(config.benchmark)
    return load_domain(config.domain_file)


def build_points(config: TrainConfig, domain: Domain) -> PointSets:
    res = config.resolution
    if res is None:
        res = (DEFAULTS[config.benchmark]["resolution"]
               if config.benchmark else domain.default_resolution)
    pts = sample_points(domain, res, sample_rate=config.sample_rate,
                        rng_seed=config.rng_seed)
    if config.interface_proportion < 1.0:
        pts = interface_budget(pts, config.interface_proportion)
    return pts


def default_architecture(config: TrainConfig, domain: Domain) -> Architecture:
    base = DEFAULTS.get(config.benchmark or "", {})
    blocks = config.blocks if config.blocks is not None \
        else base.get("blocks", 4)
    width = config.width if config.width is not None \
        else base.get("width", 32)
    return Architecture.for_domain(domain, blocks, width)


class _EvalPlan:
    """Precomputed per-point arrays shared by every epoch.

    Coordinates are stored pre-mapped into the network's input range; the
    chain-rule factors (scale for gradients, scale^2 for Laplacians) are
    applied where records are assembled.
    """

    def __init__(self, domain: Domain, points: PointSets,
                 arch: Architecture):
        self.points = points
        self.w = points.quadrature_weight
        self.gscale = arch.input_scale
        self.lscale = arch.input_scale ** 2
        self.res_x = arch.map_inputs(points.residual)
        rid = points.residual_region
        self.res_c1 = (2 * rid).astype(np.int64)
        self.res_c2 = (2 * rid + 1).astype(np.int64)
        self.coeffs = domain.coeff_arrays(rid)

        self.bou = {}
        for kind, b in points.boundary.items():
            rid_b = b["regions"]
            cb = domain.coeff_arrays(rid_b)
            self.bou[kind] = {
                "x": arch.map_inputs(b["points"]), "normals": b["normals"],
                "c1": (2 * rid_b).astype(np.int64),
                "c2": (2 * rid_b + 1).astype(np.int64),
                "value": b["value"], "c_bou": b["c_bou"],
                "d1": cb["d1"], "d2": cb["d2"],
            }

        if points.interface.shape[0]:
            pa = points.interface_pair[:, 0].astype(np.int64)
            pb = points.interface_pair[:, 1].astype(np.int64)
            ca = domain.coeff_arrays(pa)
            cb = domain.coeff_arrays(pb)
            self.int_rec = {
                "x": arch.map_inputs(points.interface),
                "normals": points.interface_normal,
                "a_c1": 2 * pa, "a_c2": 2 * pa + 1,
                "b_c1": 2 * pb, "b_c2": 2 * pb + 1,
                "d1_a": ca["d1"], "d2_a": ca["d2"],
                "d1_b": cb["d1"], "d2_b": cb["d2"],
            }
        else:
            self.int_rec = None


def _residual_records(theta_var, plan, arch, backend, precomputed=None):
    v, g, lap = network_eval(theta_var, plan.res_x, arch.key,
                             backend, precomputed=precomputed)
    u1 = v.gather(plan.res_c1)
    u2 = v.gather(plan.res_c2)
    gu1 = g.gather_g(plan.res_c1) * plan.gscale
    gu2 = g.gather_g(plan.res_c2) * plan.gscale
    lu1 = lap.gather(plan.res_c1) * plan.lscale
    lu2 = lap.gather(plan.res_c2) * plan.lscale
    phi1, lap1 = losses.flux_records(u1, gu1, lu1)
    phi2, lap2 = losses.flux_records(u2, gu2, lu2)
    return phi1, phi2, lap1, lap2


def _power(plan, phi1, phi2):
    c = plan.coeffs
    return plan.w * (c["nu_sigma_f1"] * phi1
                     + c["nu_sigma_f2"] * phi2).sum()


def _boundary_batches(theta_var, plan, arch, backend, power):
    out = {}
    for kind, b in plan.bou.items():
        if b["x"].shape[0] == 0:
            continue
        v, g, _ = network_eval(theta_var, b["x"], arch.key, backend)
        rec = {}
        u1 = v.gather(b["c1"])
        u2 = v.gather(b["c2"])
        rec["phi1"] = u1.square() / power
        rec["phi2"] = u2.square() / power
        if kind in ("neumann", "robin"):
            gu1 = g.gather_g(b["c1"]) * plan.gscale
            gu2 = g.gather_g(b["c2"]) * plan.gscale
            rec["dphi1_dn"] = losses.normal_derivative(
                u1, gu1, b["normals"]) / power
            rec["dphi2_dn"] = losses.normal_derivative(
                u2, gu2, b["normals"]) / power
        rec["value"] = b["value"]
        rec["c_bou"] = b["c_bou"]
        rec["d1"] = b["d1"]
        rec["d2"] = b["d2"]
        out[kind] = rec
    return out


def _interface_records(theta_var, plan, arch, backend, power):
    r = plan.int_rec
    if r is None:
        return None
    v, g, _ = network_eval(theta_var, r["x"], arch.key, backend)
    rec = {"d1_a": r["d1_a"], "d2_a": r["d2_a"],
           "d1_b": r["d1_b"], "d2_b": r["d2_b"]}
    for side in ("a", "b"):
        u1 = v.gather(r[f"{side}_c1"])
        u2 = v.gather(r[f"{side}_c2"])
        gu1 = g.gather_g(r[f"{side}_c1"]) * plan.gscale
        gu2 = g.gather_g(r[f"{side}_c2"]) * plan.gscale
        rec[f"phi1_{side}"] = u1.square() / power
        rec[f"phi2_{side}"] = u2.square() / power
        rec[f"dphi1_dn_{side}"] = losses.normal_derivative(
            u1, gu1, r["normals"]) / power
        rec[f"dphi2_dn_{side}"] = losses.normal_derivative(
            u2, gu2, r["normals"]) / power
    return rec


def _detached_fields(theta, plan, arch, backend, keep_forward=False):
    """Post-update normalized fields (no gradient linkage).

    With keep_forward=True the raw forward products are returned as well so
    the next epoch's graph can reuse them (theta is unchanged in between).
    """
    v, g, lap, cache = backend.forward(arch.key, theta, plan.res_x,
                                       need_cache=keep_forward)
    u1 = np.take_along_axis(v, plan.res_c1[:, None], axis=1)[:, 0]
    u2 = np.take_along_axis(v, plan.res_c2[:, None], axis=1)[:, 0]
    gu1 = np.take_along_axis(g, plan.res_c1[:, None, None],
                             axis=2)[:, :, 0] * plan.gscale
    gu2 = np.take_along_axis(g, plan.res_c2[:, None, None],
                             axis=2)[:, :, 0] * plan.gscale
    lu1 = np.take_along_axis(lap, plan.res_c1[:, None],
                             axis=1)[:, 0] * plan.lscale
    lu2 = np.take_along_axis(lap, plan.res_c2[:, None],
                             axis=1)[:, 0] * plan.lscale
    phi1 = u1 * u1
    phi2 = u2 * u2
    lap1 = 2.0 * (u1 * lu1 + (gu1 * gu1).sum(axis=1))
    lap2 = 2.0 * (u2 * lu2 + (gu2 * gu2).sum(axis=1))
    c = plan.coeffs
    power = plan.w * float(np.sum(c["nu_sigma_f1"] * phi1
                                  + c["nu_sigma_f2"] * phi2))
    if not np.isfinite(power) or power <= 0.0:
        raise DegenerateStateError(f"fission power {power!r} not positive")
    fields = (phi1 / power, phi2 / power, lap1 / power, lap2 / power, power)
    if keep_forward:
        return fields, (v, g, lap, cache)
    return fields


def initial_state(config: TrainConfig, arch, theta, plan,
                  backend) -> IterationState:
    """lambda_0 = 1/k0 + sigma with the initial network as the snapshot."""
    phi1, phi2, _, _, _ = _detached_fields(theta, plan, arch, backend)
    return IterationState(prev_phi1=phi1, prev_phi2=phi2,
                          lambda_tilde=1.0 / config.k0 + config.sigma,
                          sigma=config.sigma)


def _blas_single_thread():
    """Small-width matmuls run fastest single threaded; parallelism lives
    at the run level instead."""
    try:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(limits=1)
    except ImportError:
        import contextlib
        return contextlib.nullcontext()


def history_csv_bytes(history) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_FIELDS)
    for row in history:
        writer.writerow(["%d" % row["epoch"]] +
                        ["%.17g" % row[k] for k in HISTORY_FIELDS[1:]])
    return buf.getvalue().encode()


def train(config: TrainConfig, out_dir=None, log_every: int = 0):
    """Run the training loop; returns (TrainResult, history list)."""
    domain = resolve_domain(config)
    attempt = 0
    seed = config.rng_seed
    while True:
        try:
            return _train_once(config, domain, seed, out_dir, log_every)
        except DegenerateStateError:
            attempt += 1
            if attempt > config.max_restarts:
                raise
            seed = seed + 7919 * attempt


def _train_once(config, domain, seed, out_dir, log_every):
    with _blas_single_thread():
        return _train_loop(config, domain, seed, out_dir, log_every)


def _train_loop(config, domain, seed, out_dir, log_every):
    backend = kernels.get_backend(config.kernel)
    points = build_points(config, domain)
    arch = default_architecture(config, domain)
    plan = _EvalPlan(domain, points, arch)
    theta = network.init(arch, seed)
    weights = LossWeights(*config.weights)
    fields, pending = _detached_fields(theta, plan, arch, backend,
                                       keep_forward=True)
    state = IterationState(prev_phi1=fields[0], prev_phi2=fields[1],
                           lambda_tilde=1.0 / config.k0 + config.sigma,
                           sigma=config.sigma)
    res_fn = losses.RESIDUAL_LOSSES[config.loss]

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history = []
    best = {"loss": np.inf, "theta": theta.copy(),
            "lambda": state.lambda_tilde, "epoch": 0}
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            json.dump(asdict(config), fh, indent=1)

    t0 = time.time()
    for epoch in range(1, config.epochs + 1):
        theta_var = Var(theta)
        phi1, phi2, lap1, lap2 = _residual_records(theta_var, plan, arch,
                                                   backend,
                                                   precomputed=pending)
        pending = None
        power = _power(plan, phi1, phi2)
        if not np.isfinite(power.value) or power.value <= 0.0:
            raise DegenerateStateError(
                f"fission power {power.value!r} at epoch {epoch}")
        rec = {"phi1": phi1 / power, "phi2": phi2 / power,
               "lap1": lap1 / power, "lap2": lap2 / power}
        loss_res = res_fn(rec, plan.coeffs, state)
        loss_bou = losses.boundary_loss(
            _boundary_batches(theta_var, plan, arch, backend, power))
        int_rec = _interface_records(theta_var, plan, arch, backend, power)
        if int_rec is None:
            loss_i0 = Var(0.0)
            loss_i1 = Var(0.0)
        else:
            loss_i0, loss_i1 = losses.interface_loss(int_rec)
        total = losses.total_loss(loss_res, loss_bou, loss_i0, loss_i1,
                                  weights)
        if not np.isfinite(total.value):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}",
                                   history=history, checkpoint=best)
        grad = param_gradient(total, theta_var)
        if not np.all(np.isfinite(grad)):
            raise TrainingDiverged(f"non-finite gradient at epoch {epoch}",
                                   history=history, checkpoint=best)
        if config.grad_clip is not None:
            norm = float(np.linalg.norm(grad))
            if norm > config.grad_clip:
                grad = grad * (config.grad_clip / norm)
        theta, m, v = optimizer_step(theta, grad, m, v, epoch,
                                     config.learning_rate, config.beta1,
                                     config.beta2, config.eps)

        (p1, p2, l1, l2, _), pending = _detached_fields(
            theta, plan, arch, backend, keep_forward=True)
        lam = losses.rayleigh_quotient(p1, p2, l1, l2, plan.coeffs,
                                       config.sigma)
        state = IterationState(prev_phi1=p1, prev_phi2=p2, lambda_tilde=lam,
                               sigma=config.sigma)

        row = {"epoch": epoch, "loss_total": float(total.value),
               "loss_res": float(loss_res.value),
               "loss_bou": float(loss_bou.value),
               "loss_int0": float(loss_i0.value),
               "loss_int1": float(loss_i1.value),
               "lambda_tilde": lam,
               "k_eff": 1.0 / (lam - config.sigma)}
        history.append(row)
        if row["loss_total"] < best["loss"]:
            best = {"loss": row["loss_total"], "theta": theta.copy(),
                    "lambda": lam, "epoch": epoch}
        if log_every and (epoch % log_every == 0 or epoch == 1):
            print(f"epoch {epoch:>7d}  loss {row['loss_total']:.6e}  "
                  f"k_eff {row['k_eff']:.6f}  [{time.time() - t0:.0f}s]",
                  flush=True)
        if out and config.checkpoint_every and \
                epoch % config.checkpoint_every == 0:
            network.save_checkpoint(out / "checkpoint_last.json", arch,
                                    theta, seed, epoch, lam)

    result = TrainResult(arch=arch, theta=best["theta"],
                         lambda_tilde=best["lambda"], sigma=config.sigma,
                         epoch=best["epoch"], domain=domain, points=points)
    if out:
        (out / "history.csv").write_bytes(history_csv_bytes(history))
        network.save_checkpoint(out / "checkpoint_best.json", arch,
                                best["theta"], seed, best["epoch"],
                                best["lambda"],
                                extra={"loss": best["loss"]})
        network.save_checkpoint(out / "checkpoint_last.json", arch, theta,
                                seed, config.epochs,
                                history[-1]["lambda_tilde"])
        _export_solution(out / "solution.csv", result)
    return result, history


def _export_solution(path, result: TrainResult) -> None:
    from .fd import Grid
    grid = Grid(result.domain, result.points.resolution)
    region = grid.node_region
    phi1, phi2 = result.flux(grid.points, region)
    write_flux_csv(path, grid.points, region, phi1, phi2)


def write_flux_csv(path, points, region, phi1, phi2) -> None:
    d = points.shape[1]
    header = ["x", "y", "z"][:d] + ["region", "phi1", "phi2"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(points.shape[0]):
            row = ["%.17g" % c for c in points[i]]
            row.append("%d" % region[i])
            row.append("%.17g" % phi1[i])
            row.append("%.17g" % phi2[i])
            writer.writerow(row)


def read_flux_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader]
    arr = np.asarray(rows)
    d = len(header) - 3
    return (arr[:, :d], arr[:, d].astype(int), arr[:, d + 1], arr[:, d + 2])
