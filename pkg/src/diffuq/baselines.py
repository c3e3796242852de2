"""Reference posterior approximations to compare the diffusion sampler to.

Every method returns a SampleBank: an (n, d) array of parameter vectors
plus provenance, so downstream prediction and calibration code treats all
methods identically. Methods that fit a point or a variational family
still emit banks (a single row for MAP, reparameterized draws for MFVI,
masked parameter copies for MC dropout).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import rng
from .autodiff import Tape
from .data import Dataset
from .errors import DataError, DimensionError, NumericalError
from .optim import Adam, OptimizerConfig
from .regression import HeteroModel
from .targets import LogDensity, PosteriorTarget

__all__ = ["SampleBank", "load_bank", "map_fit", "ensemble_fit",
           "sgld_sample", "svgd_step", "svgd_sample", "mfvi_fit",
           "mfvi_sample", "dropout_params", "mc_dropout_fit",
           "mc_dropout_sample"]


@dataclass
class SampleBank:
    """Parameter samples (n, d) with method provenance."""

    samples: np.ndarray
    method: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples,
                                                dtype=np.float64))
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise DimensionError(
                f"samples must be (n, d), got {self.samples.shape}")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def save_csv(self, path) -> None:
        """Write samples as CSV plus a JSON sidecar with the provenance."""
        path = str(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"theta{i}" for i in range(self.dim)])
            for row in self.samples:
                writer.writerow([repr(float(v)) for v in row])
        sidecar = {"method": self.method, "n_samples": len(self),
                   "dim": self.dim, "meta": self.meta}
        with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, sort_keys=True, indent=1)
            fh.write("\n")


def _sidecar_path(path: str) -> str:
    return path + ".meta.json"


def load_bank(path) -> SampleBank:
    path = str(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not all(h.startswith("theta") for h in header):
            raise DataError(f"{path}: not a sample bank CSV")
        try:
            samples = np.array([[float(v) for v in row] for row in reader])
        except ValueError as err:
            raise DataError(f"{path}: non-numeric sample value: {err}") from err
    if samples.size == 0:
        raise DataError(f"{path}: bank holds no samples")
    method, meta = "", {}
    try:
        with open(_sidecar_path(path), encoding="utf-8") as fh:
            sidecar = json.load(fh)
        method = sidecar.get("method", "")
        meta = sidecar.get("meta", {})
    except FileNotFoundError:
        pass
    return SampleBank(samples, method=method, meta=meta)


def _init_point(target: LogDensity, seed: int, init, scale: float = 0.1):
    if init is not None:
        init = np.asarray(init, dtype=np.float64)
        if init.shape != (target.dim,):
            raise DimensionError(
                f"init shape {init.shape} != target dim ({target.dim},)")
        return init.copy()
    return scale * rng.normals(seed, "init", shape=target.dim)


def map_fit(target: LogDensity,
            opt: OptimizerConfig = OptimizerConfig(learning_rate=0.01,
                                                   max_iter=2000),
            seed: int = 0, init=None) -> np.ndarray:
    """Mode of the target by Adam ascent on logp."""
    theta = _init_point(target, seed, init)
    adam = Adam(opt)
    for _ in range(opt.max_iter):
        theta = adam.step(theta, -target.grad_logp(theta))
    if not np.all(np.isfinite(theta)):
        raise NumericalError("MAP ascent diverged to non-finite parameters")
    return theta


def ensemble_fit(target: LogDensity, n_members: int,
                 opt: OptimizerConfig = OptimizerConfig(learning_rate=0.01,
                                                        max_iter=2000),
                 seed: int = 0) -> SampleBank:
    """Deep ensemble: independent MAP fits from different random inits."""
    if n_members < 1:
        raise ValueError(f"n_members must be >= 1, got {n_members}")
    member_seeds = rng.spawn_seeds(seed, "ensemble", n_members)
    rows = [map_fit(target, opt, seed=s) for s in member_seeds]
    return SampleBank(np.stack(rows), method="ensemble",
                      meta={"n_members": n_members, "seed": seed})


def sgld_sample(target: LogDensity, step_size: float, n_steps: int,
                burn_in: float = 0.5, thin: int = 1, seed: int = 0,
                init=None, data_minibatch: int | None = None) -> SampleBank:
    """Stochastic gradient Langevin dynamics chain.

    theta += (eps / 2) grad logp(theta) + N(0, eps I) per step; the first
    ``burn_in`` fraction is discarded and every ``thin``-th retained. With
    ``data_minibatch`` set and a posterior target, gradients come from
    rescaled minibatches.
    """
    if step_size <= 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError(f"burn_in must be in [0, 1), got {burn_in}")
    if thin < 1 or n_steps < 1:
        raise ValueError("n_steps and thin must be >= 1")
    use_minibatch = (isinstance(target, PosteriorTarget)
                     and data_minibatch is not None
                     and data_minibatch < target.n_rows)
    theta = _init_point(target, seed, init)
    noise_gen = rng.stream(seed, "sgld-noise")
    keep_from = int(np.ceil(burn_in * n_steps))
    rows = []
    sqrt_eps = np.sqrt(step_size)
    for t in range(n_steps):
        if use_minibatch:
            batch = rng.stream(seed, "sgld-batch", t).choice(
                target.n_rows, size=data_minibatch, replace=False)
            grad = _posterior_grad(target, theta, batch)
        else:
            grad = target.grad_logp(theta)
        theta = (theta + 0.5 * step_size * grad
                 + sqrt_eps * noise_gen.standard_normal(target.dim))
        if not np.all(np.isfinite(theta)):
            raise NumericalError(f"SGLD chain diverged at step {t}")
        if t >= keep_from and (t - keep_from) % thin == 0:
            rows.append(theta.copy())
    if not rows:
        raise ValueError(
            f"no samples retained: n_steps={n_steps}, burn_in={burn_in}, "
            f"thin={thin}")
    return SampleBank(np.stack(rows), method="sgld",
                      meta={"step_size": step_size, "n_steps": n_steps,
                            "burn_in": burn_in, "thin": thin, "seed": seed})


def _posterior_grad(target: PosteriorTarget, theta: np.ndarray,
                    batch) -> np.ndarray:
    tape = Tape()
    leaf = tape.var(theta[None, :])
    out = ad.array_sum(target.posterior_logp(leaf, batch))
    return tape.gradients(out, [leaf])[0][0]


def _rbf_bandwidth(particles: np.ndarray) -> float:
    """Median squared pairwise distance over log n; 1.0 when degenerate."""
    n = particles.shape[0]
    if n < 2:
        return 1.0
    d2 = np.sum((particles[:, None, :] - particles[None, :, :]) ** 2, axis=-1)
    med = float(np.median(d2[np.triu_indices(n, k=1)]))
    if med <= 0.0 or np.log(n) <= 0.0:
        return 1.0
    return med / np.log(n)


def svgd_step(particles: np.ndarray, target: LogDensity, step_size: float,
              bandwidth: float | None = None) -> np.ndarray:
    """One Stein variational update with an RBF kernel.

    With a single particle the kernel term is constant and the update
    reduces to plain gradient ascent on logp.
    """
    particles = np.asarray(particles, dtype=np.float64)
    h = _rbf_bandwidth(particles) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    diff2 = np.sum((particles[:, None, :] - particles[None, :, :]) ** 2,
                   axis=-1)
    kernel = np.exp(-diff2 / h)
    grads = target.grad_logp(particles)
    drive = kernel @ grads
    repulse = (2.0 / h) * (particles * kernel.sum(axis=1)[:, None]
                           - kernel @ particles)
    return particles + step_size * (drive + repulse) / particles.shape[0]


def svgd_sample(target: LogDensity, n_particles: int, n_steps: int = 1000,
                step_size: float = 0.05, seed: int = 0,
                init_scale: float = 1.0) -> SampleBank:
    """Run SVGD from a Gaussian particle cloud; particles are the bank."""
    if n_particles < 1:
        raise ValueError(f"n_particles must be >= 1, got {n_particles}")
    particles = init_scale * rng.normals(seed, "svgd-init",
                                         shape=(n_particles, target.dim))
    for t in range(n_steps):
        particles = svgd_step(particles, target, step_size)
        if not np.all(np.isfinite(particles)):
            raise NumericalError(f"SVGD diverged at step {t}")
    return SampleBank(particles, method="svgd",
                      meta={"n_particles": n_particles, "n_steps": n_steps,
                            "step_size": step_size, "seed": seed})


def mfvi_fit(target: LogDensity,
             opt: OptimizerConfig = OptimizerConfig(learning_rate=0.01,
                                                    max_iter=3000),
             seed: int = 0, init_log_sd: float = np.log(0.1)):
    """Mean-field Gaussian fit by maximizing a 1-sample ELBO estimate.

    Returns (mean, log_sd). Each iteration reparameterizes one draw
    theta = mean + exp(log_sd) * xi and ascends E[logp] + entropy. The
    single-sample gradient leaves the iterates jittering around the
    optimum, so the returned fit averages the final quarter of them.
    """
    d = target.dim
    mean = np.zeros(d)
    log_sd = np.full(d, float(init_log_sd))
    adam = Adam(opt)
    noise_gen = rng.stream(seed, "mfvi-noise")
    tail_from = opt.max_iter - max(1, opt.max_iter // 4)
    tail_sum = np.zeros(2 * d)
    tail_count = 0
    for it in range(opt.max_iter):
        xi = noise_gen.standard_normal(d)
        tape = Tape()
        m = tape.var(mean)
        rho = tape.var(log_sd)
        theta = ad.reshape(m + ad.exp(rho) * xi, (1, d))
        elbo = target.logp(theta)[0] + ad.array_sum(rho)
        g_m, g_rho = tape.gradients(-elbo, [m, rho])
        packed = adam.step(np.concatenate([mean, log_sd]),
                           np.concatenate([g_m, g_rho]))
        mean, log_sd = packed[:d], packed[d:]
        if it >= tail_from:
            tail_sum += packed
            tail_count += 1
    packed = tail_sum / tail_count
    mean, log_sd = packed[:d], packed[d:]
    if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(log_sd)):
        raise NumericalError("MFVI fit diverged")
    return mean, log_sd


def mfvi_sample(mean: np.ndarray, log_sd: np.ndarray, n: int,
                seed: int = 0) -> SampleBank:
    """n draws from the fitted factorized Gaussian."""
    mean = np.asarray(mean, dtype=np.float64)
    log_sd = np.asarray(log_sd, dtype=np.float64)
    xi = rng.normals(seed, "mfvi-sample", shape=(n, mean.shape[0]))
    return SampleBank(mean + np.exp(log_sd) * xi, method="mfvi",
                      meta={"n_samples": n, "seed": seed})


# ---------------------------------------------------------------------------
# MC dropout: masks realized as parameter-space copies

def dropout_params(model: HeteroModel, theta, masks, rate: float):
    """Flat parameters with mean-net hidden units dropped.

    Dropping hidden unit j of layer l zeroes row j of the next layer's
    weights; kept rows are rescaled by 1 / (1 - rate) (inverted dropout).
    The precision net's slice passes through untouched.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    layout = model.mean_layout
    sizes = layout.layer_sizes()
    if len(masks) != len(layout.hidden):
        raise DimensionError(
            f"need one mask per hidden layer ({len(layout.hidden)}), "
            f"got {len(masks)}")
    keep = 1.0 - rate
    pieces = []
    offset = 0
    prev_mask = None
    for li, (fi, fo) in enumerate(sizes):
        w = theta[..., offset:offset + fi * fo]
        if prev_mask is not None:
            scaled = ad.reshape(w, (fi, fo)) * (prev_mask / keep)[:, None]
            w = ad.reshape(scaled, (fi * fo,))
        pieces.append(w)
        offset += fi * fo
        pieces.append(theta[..., offset:offset + fo])
        offset += fo
        if li < len(layout.hidden):
            prev_mask = np.asarray(masks[li], dtype=np.float64)
            if prev_mask.shape != (fo,):
                raise DimensionError(
                    f"mask {li} must have shape ({fo},), got {prev_mask.shape}")
    pieces.append(theta[..., offset:])
    return ad.concatenate(pieces, axis=-1)


def _draw_masks(model: HeteroModel, rate: float, gen) -> list[np.ndarray]:
    return [(gen.uniform(size=w) >= rate).astype(np.float64)
            for w in model.mean_layout.hidden]


def mc_dropout_fit(model: HeteroModel, train: Dataset, rate: float = 0.1,
                   opt: OptimizerConfig = OptimizerConfig(learning_rate=0.01,
                                                          max_iter=2000),
                   seed: int = 0) -> np.ndarray:
    """MAP-style fit with a fresh dropout mask on each iteration."""
    post = PosteriorTarget(model, train.X, train.y)
    theta = _init_point(post, seed, None)
    adam = Adam(opt)
    for it in range(opt.max_iter):
        masks = _draw_masks(model, rate, rng.stream(seed, "dropout", it))
        tape = Tape()
        leaf = tape.var(theta)
        masked = ad.reshape(dropout_params(model, leaf, masks, rate),
                            (1, post.dim))
        obj = -post.posterior_logp(masked)[0]
        grad = tape.gradients(obj, [leaf])[0]
        theta = adam.step(theta, grad)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("MC dropout fit diverged")
    return theta


def mc_dropout_sample(model: HeteroModel, theta: np.ndarray, n: int,
                      rate: float = 0.1, seed: int = 0) -> SampleBank:
    """Bank of n masked copies of theta, one dropout mask per row."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    theta = np.asarray(theta, dtype=np.float64)
    rows = []
    for i in range(n):
        masks = _draw_masks(model, rate, rng.stream(seed, "dropout-bank", i))
        rows.append(ad.value_of(dropout_params(model, theta, masks, rate)))
    return SampleBank(np.stack(rows), method="mc_dropout",
                      meta={"rate": rate, "n_samples": n, "seed": seed})
