"""Posterior sampling by learning the drift of a controlled diffusion.

A network u(t, theta) steers the SDE

    d theta_t = u(t, theta_t) dt + sqrt(gamma) dB_t,   theta_0 = 0,

simulated by Euler-Maruyama on [0, horizon]. Training minimizes

    E[ integral ||u||^2 / (2 gamma) dt  +  log N(theta_1; 0, gamma I)
       - log pi(theta_1) ]

whose minimum makes the terminal law equal to the (unnormalized) target pi.
Gradients flow through the whole rollout pathwise: the Brownian increments
are frozen per iteration and the state update is differentiable in the
drift parameters.

After training, drawing n posterior samples is just simulating n fresh
trajectories at the finer sampling step.
"""

from __future__ import annotations

import io
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import rng
from .autodiff import Tape
from .errors import CheckpointError, ConfigError, DimensionError, NumericalError
from .nets import NetLayout, init_params, mlp_forward, param_count
from .optim import Adam, OptimizerConfig
from .targets import LogDensity, PosteriorTarget, gaussian_logp

__all__ = ["SdeConfig", "DriftNetwork", "drift_layout", "new_drift",
           "drift_control", "TrajectoryBatch", "simulate", "LossParts",
           "loss", "TrainReport", "train", "sample",
           "save_checkpoint", "load_checkpoint"]

_CKPT_MAGIC = b"DUQCKPT1"
# trajectories per chunk are capped so noise buffers stay modest
_CHUNK_ELEMENTS = 3 * 10 ** 7


@dataclass(frozen=True)
class SdeConfig:
    """Diffusion and discretization constants."""

    gamma: float = 1.0
    dt_train: float = 0.04
    dt_sample: float = 0.01
    horizon: float = 1.0
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.horizon <= 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("dt_train", "dt_sample"):
            self.steps(getattr(self, name))

    def steps(self, dt: float) -> int:
        """Number of Euler steps for a requested dt.

        The count rounds to the nearest integer, so the effective step is
        horizon / steps(dt); a dt that does not divide the horizon is
        honoured as closely as a uniform grid allows.
        """
        if dt <= 0 or dt > self.horizon:
            raise ConfigError(f"dt must lie in (0, horizon], got {dt}")
        return max(1, int(round(self.horizon / dt)))

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "dt_train": self.dt_train,
                "dt_sample": self.dt_sample, "horizon": self.horizon,
                "batch_size": self.batch_size, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SdeConfig":
        return cls(**d)


def drift_layout(dim: int, width: int = 32, depth: int = 8) -> NetLayout:
    """Drift net layout: input is state plus raw time, hidden layers use
    layer normalization (no affine part) before the GELU."""
    return NetLayout(dim + 1, dim, (width,) * depth, "gelu", layernorm=True)


@dataclass
class DriftNetwork:
    """A drift u(t, theta) given by a net over [theta, t] features."""

    layout: NetLayout
    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.layout.input_dim != self.layout.output_dim + 1:
            raise DimensionError(
                "drift net must map (state, time) to state: input_dim "
                f"{self.layout.input_dim} != output_dim {self.layout.output_dim} + 1")
        if self.params.shape != (param_count(self.layout),):
            raise DimensionError(
                f"params shape {self.params.shape} does not match layout "
                f"({param_count(self.layout)} scalars)")

    @property
    def dim(self) -> int:
        return self.layout.output_dim


def new_drift(dim: int, seed: int = 0, width: int = 32,
              depth: int = 8, zero_final: bool = False) -> DriftNetwork:
    """Freshly initialized drift net over [state, time] features.

    ``zero_final`` zeroes the output layer so the initial control is
    exactly zero and the chain starts at the reference law. The random
    init's O(1) outputs otherwise swamp targets that live on a much
    smaller scale (tight posteriors sampled around a center).
    """
    layout = drift_layout(dim, width, depth)
    params = init_params(layout, rng.stream(seed, "init"))
    if zero_final:
        fi, fo = layout.layer_sizes()[-1]
        params[-(fi * fo + fo):] = 0.0
    return DriftNetwork(layout, params)


def _control(layout: NetLayout, params, t: float, states):
    n = states.shape[0]
    t_col = np.full((n, 1), float(t))
    feats = ad.concatenate([states, t_col], axis=1)
    return mlp_forward(layout, params, feats)


def drift_control(drift: DriftNetwork, t: float, states):
    """u(t, states) for a batch of states (n, d)."""
    states_v = ad.value_of(states) if not isinstance(states, ad.Var) else states
    return _control(drift.layout, drift.params, t, states_v)


@dataclass
class TrajectoryBatch:
    """Terminal states (n, d) and pathwise running costs (n,)."""

    terminal: np.ndarray
    running_cost: np.ndarray


def _rollout(layout: NetLayout, params, gamma: float, dt: float,
             noise: np.ndarray):
    """Euler-Maruyama from the origin; returns (terminal, running_cost).

    ``noise`` holds standard normal increments of shape (n, steps, d);
    outputs are Vars when ``params`` is a Var.
    """
    n, steps, d = noise.shape
    sqrt_gdt = np.sqrt(gamma * dt)
    cost_scale = dt / (2.0 * gamma)
    states = np.zeros((n, d))
    costs = np.zeros(n)
    for k in range(steps):
        u = _control(layout, params, k * dt, states)
        costs = costs + ad.array_sum(ad.square(u), axis=-1) * cost_scale
        states = states + u * dt + sqrt_gdt * noise[:, k, :]
        vals = ad.value_of(states)
        if not np.all(np.isfinite(vals)):
            bad = int(np.argwhere(~np.isfinite(vals).all(axis=1))[0, 0])
            raise NumericalError(
                f"trajectory {bad} became non-finite at step {k + 1}/{steps} "
                f"(t={(k + 1) * dt:.4f})")
    return states, costs


def _trajectory_noise(seed: int, steps: int, dim: int, n: int,
                      first_traj: int) -> np.ndarray:
    out = np.empty((n, steps, dim))
    for i in range(n):
        out[i] = rng.normals(seed, "sde-noise", first_traj + i,
                             shape=(steps, dim))
    return out


def simulate(drift: DriftNetwork, config: SdeConfig, n: int,
             dt: float | None = None, seed: int | None = None,
             first_traj: int = 0) -> TrajectoryBatch:
    """Simulate n trajectories with per-trajectory noise streams.

    Trajectory ``first_traj + i`` always sees the same Brownian increments
    for a given seed, no matter how the batch is partitioned.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    dt = config.dt_sample if dt is None else dt
    steps = config.steps(dt)
    seed = config.seed if seed is None else seed
    noise = _trajectory_noise(seed, steps, drift.dim, n, first_traj)
    terminal, costs = _rollout(drift.layout, drift.params, config.gamma,
                               config.horizon / steps, noise)
    return TrajectoryBatch(terminal, costs)


@dataclass
class LossParts:
    """Objective decomposition: total = running + terminal (batch means)."""

    total: float
    running: float
    terminal: float


def _loss_core(layout, params, target: LogDensity, config: SdeConfig,
               noise: np.ndarray, data_batch=None):
    terminal, costs = _rollout(layout, params, config.gamma,
                               config.horizon / noise.shape[1], noise)
    if isinstance(target, PosteriorTarget):
        logp = target.posterior_logp(terminal, data_batch)
    else:
        logp = target.logp(terminal)
    ref = gaussian_logp(terminal, np.zeros(noise.shape[2]),
                        config.gamma * config.horizon)
    terminal_vec = ref - logp
    total = ad.mean(costs + terminal_vec)
    parts = LossParts(float(ad.value_of(total)),
                      float(np.mean(ad.value_of(costs))),
                      float(np.mean(ad.value_of(terminal_vec))))
    return total, parts


def loss(drift: DriftNetwork, target: LogDensity, config: SdeConfig,
         n: int | None = None, data_batch=None, dt: float | None = None,
         noise_seed: int | None = None, iteration: int = 0) -> LossParts:
    """Monte Carlo estimate of the control objective (no gradient)."""
    n = config.batch_size if n is None else n
    dt = config.dt_train if dt is None else dt
    steps = config.steps(dt)
    seed = config.seed if noise_seed is None else noise_seed
    noise = rng.normals(seed, "train-noise", iteration,
                        shape=(n, steps, drift.dim))
    _, parts = _loss_core(drift.layout, drift.params, target, config, noise,
                          data_batch)
    return parts


@dataclass
class TrainReport:
    """Per-iteration training trace with a fixed CSV schema."""

    COLUMNS = ("iteration", "total", "running", "terminal", "grad_norm",
               "seconds")

    rows: list = field(default_factory=list)

    def append(self, iteration: int, parts: LossParts, grad_norm: float,
               seconds: float) -> None:
        self.rows.append((int(iteration), float(parts.total),
                          float(parts.running), float(parts.terminal),
                          float(grad_norm), float(seconds)))

    def column(self, name: str) -> np.ndarray:
        idx = self.COLUMNS.index(name)
        return np.array([r[idx] for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in self.rows:
                fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r},"
                         f"{row[4]!r},{row[5]!r}\n")

    @classmethod
    def from_csv(cls, path) -> "TrainReport":
        rows = []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != cls.COLUMNS:
                raise ConfigError(f"unexpected train report header: {header}")
            for line in fh:
                vals = line.strip().split(",")
                rows.append((int(vals[0]), *map(float, vals[1:])))
        return cls(rows)


def train(drift: DriftNetwork, target: LogDensity, config: SdeConfig,
          opt: OptimizerConfig = OptimizerConfig(learning_rate=1e-3,
                                                 max_iter=1500),
          data_minibatch: int | None = None,
          callback=None) -> tuple[DriftNetwork, TrainReport]:
    """Fit the drift by Adam on pathwise gradients of the control objective.

    Each iteration draws fresh Brownian increments (and, for posterior
    targets, a fresh data minibatch) from iteration-keyed streams, so runs
    are reproducible for a given config. Raises NumericalError if the loss
    diverges instead of silently returning garbage.
    """
    if target.dim != drift.dim:
        raise DimensionError(
            f"target dim {target.dim} != drift dim {drift.dim}")
    steps = config.steps(config.dt_train)
    phi = drift.params.copy()
    adam = Adam(opt)
    report = TrainReport()
    use_minibatch = (isinstance(target, PosteriorTarget)
                     and data_minibatch is not None
                     and data_minibatch < target.n_rows)
    best_total = None
    runaway = 0
    for it in range(opt.max_iter):
        t0 = time.perf_counter()
        noise = rng.normals(config.seed, "train-noise", it,
                            shape=(config.batch_size, steps, drift.dim))
        batch = None
        if use_minibatch:
            batch = rng.stream(config.seed, "minibatch", it).choice(
                target.n_rows, size=data_minibatch, replace=False)
        tape = Tape()
        phi_var = tape.var(phi)
        try:
            total, parts = _loss_core(drift.layout, phi_var, target, config,
                                      noise, batch)
            grad = tape.gradients(total, [phi_var])[0]
        except NumericalError as err:
            raise NumericalError(f"iteration {it}: {err}") from err
        grad_norm = float(np.linalg.norm(grad))
        phi = adam.step(phi, grad)
        report.append(it, parts, grad_norm, time.perf_counter() - t0)
        if not np.isfinite(parts.total):
            raise NumericalError(
                f"training loss became non-finite at iteration {it}")
        # stiff targets spike for a step or two and recover; only a
        # sustained runaway above the best loss seen counts as divergence
        if best_total is None or parts.total < best_total:
            best_total = parts.total
            runaway = 0
        elif parts.total > best_total + 10.0 * max(1.0, abs(best_total)):
            runaway += 1
            if runaway >= 25:
                raise NumericalError(
                    f"training diverged at iteration {it}: total "
                    f"{parts.total:.4g} stuck above best {best_total:.4g}")
        else:
            runaway = 0
        if callback is not None:
            callback(it, parts, grad_norm)
    return DriftNetwork(drift.layout, phi), report


def sample(drift: DriftNetwork, config: SdeConfig, n: int,
           seed: int | None = None, first_traj: int = 0) -> np.ndarray:
    """n posterior draws: fresh trajectories at the sampling step size."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    steps = config.steps(config.dt_sample)
    chunk = max(1, _CHUNK_ELEMENTS // (steps * drift.dim))
    out = np.empty((n, drift.dim))
    start = 0
    while start < n:
        stop = min(n, start + chunk)
        batch = simulate(drift, config, stop - start, dt=config.dt_sample,
                         seed=seed, first_traj=first_traj + start)
        out[start:stop] = batch.terminal
        start = stop
    return out


# ---------------------------------------------------------------------------
# checkpoints

def _checkpoint_header(drift: DriftNetwork, config: SdeConfig) -> dict:
    return {"format": "diffuq-checkpoint", "version": 1,
            "layout": drift.layout.to_dict(), "sde": config.to_dict(),
            "n_params": int(drift.params.size)}


def save_checkpoint(path, drift: DriftNetwork, config: SdeConfig,
                    fmt: str = "json") -> None:
    """Write drift weights + SDE constants, as JSON or packed binary.

    Binary layout: magic ``DUQCKPT1``, uint32 little-endian header length,
    UTF-8 JSON header, then float64 little-endian parameters.
    """
    if fmt == "json":
        payload = _checkpoint_header(drift, config)
        payload["params"] = [float(v) for v in drift.params]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
    elif fmt == "binary":
        header = json.dumps(_checkpoint_header(drift, config),
                            sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_CKPT_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(drift.params.astype("<f8").tobytes())
    else:
        raise ConfigError(f"unknown checkpoint format {fmt!r} "
                          "(options: json, binary)")


def load_checkpoint(path) -> tuple[DriftNetwork, SdeConfig]:
    """Read either checkpoint format back; validates parameter count."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        if blob[:len(_CKPT_MAGIC)] == _CKPT_MAGIC:
            reader = io.BytesIO(blob[len(_CKPT_MAGIC):])
            (hlen,) = struct.unpack("<I", reader.read(4))
            header = json.loads(reader.read(hlen).decode("utf-8"))
            params = np.frombuffer(reader.read(), dtype="<f8").astype(np.float64)
        else:
            header = json.loads(blob.decode("utf-8"))
            params = np.asarray(header.pop("params"), dtype=np.float64)
    except (ValueError, KeyError, struct.error, UnicodeDecodeError) as err:
        raise CheckpointError(f"cannot parse checkpoint {path}: {err}") from err
    if header.get("format") != "diffuq-checkpoint":
        raise CheckpointError(f"{path} is not a checkpoint file")
    layout = NetLayout.from_dict(header["layout"])
    config = SdeConfig.from_dict(header["sde"])
    if params.size != header.get("n_params", params.size):
        raise CheckpointError(
            f"checkpoint {path}: header says {header['n_params']} params, "
            f"file holds {params.size}")
    try:
        drift = DriftNetwork(layout, params)
    except DimensionError as err:
        raise CheckpointError(f"checkpoint {path}: {err}") from err
    return drift, config
