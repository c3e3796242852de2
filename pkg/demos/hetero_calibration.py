"""Uncertainty-quantified regression on a heteroscedastic synthetic task.

Fits the same mean/log-precision model by MAP and by posterior sampling
(diffusion drift), then compares test NLL and calibration. The posterior
over the 118 network weights is extremely tight, so the drift is trained
in offset coordinates around a polished fit (``center=``) with a small
noise scale and a zero-initialized output layer; draws are mapped back by
adding the center. The point of the second row: comparable calibration
and lower NLL from sampled mass instead of a point estimate.
"""

import dataclasses

import numpy as np

from diffuq import (OptimizerConfig, SdeConfig, evaluate, map_fit, new_drift,
                    sample, standardize_splits, synth_dataset, train)
from diffuq.baselines import SampleBank
from diffuq.data import Dataset
from diffuq.regression import preset
from diffuq.targets import PosteriorTarget

SEED = 1

full = synth_dataset("hetero_sine", 4000, seed=SEED)
train_raw = Dataset(full.X[:2000], full.y[:2000])
test_raw = Dataset(full.X[2000:], full.y[2000:])
train_split, test_split = standardize_splits(train_raw, test_raw)

model = preset("hlt", train_split.n_features)
posterior = PosteriorTarget(model, train_split.X, train_split.y)
print(f"model: {model.param_dim} parameters, "
      f"{train_split.X.shape[0]} training rows")


def row(name, bank):
    r = evaluate(bank, model, test_split)
    print(f"{name:<8} nll {r.nll:7.4f}  ece {r.ece:.4f}  mce {r.mce:.4f}  "
          f"r2 {r.r2:.3f}")
    return r


theta_map = map_fit(posterior,
                    OptimizerConfig(learning_rate=0.01, max_iter=2000),
                    seed=SEED)
row("map", SampleBank(theta_map[None, :], method="map"))

# polish the fit at a lower rate; this is the expansion point, the MAP row
# above stays the baseline
center = map_fit(posterior, OptimizerConfig(learning_rate=1e-3,
                                            max_iter=3000), init=theta_map)
centered = PosteriorTarget(model, train_split.X, train_split.y, center=center)

print("training the posterior sampler (a few minutes on one core)...")
config = SdeConfig(gamma=1e-4, seed=SEED, batch_size=64)
drift = new_drift(model.param_dim, seed=SEED, zero_final=True)
drift, _ = train(drift, centered, config,
                 OptimizerConfig(learning_rate=1e-3, max_iter=3200),
                 data_minibatch=64)
drift, _ = train(drift, centered, dataclasses.replace(config, seed=SEED + 9000),
                 OptimizerConfig(learning_rate=3e-4, max_iter=800),
                 data_minibatch=64)
draws = center + sample(drift, config, 128)
report = row("diffuq", SampleBank(draws, method="diffuq"))

report.reliability_csv("reliability.csv")
print("reliability curve written to reliability.csv "
      "(nominal vs empirical coverage)")
