"""Deterministic toy tasks: a linear teacher-student regression and a
K-way classification of overlapping Gaussian clusters.

Each task is a fixed dataset plus a freshly initialized net; every random
draw comes from the run's single PRNG stream in a fixed order, so a given
(config, seed) pair always builds the same problem.
"""

from dataclasses import dataclass

import numpy as np

from ..models import IDENTITY, L2, LEAKY_RELU, LOGSOFTMAX, ReversibleNet

# Classification geometry: clusters separated enough that features stay
# clustered (gradients keep an approximately rank-K structure), with a slice
# of flipped labels so the loss floor is bounded away from zero and every
# optimizer comparison is of plateau heights, not race positions.
CLUSTER_SPREAD = 2.0
CLUSTER_NOISE = 0.8
LABEL_FLIP = 0.15


@dataclass
class Task:
    net: ReversibleNet
    X: np.ndarray  # (dataset_size, in_dim)
    Y: np.ndarray  # (dataset_size, out_dim) targets or one-hot labels


def _init_layers(dims, rng):
    layers = []
    for l in range(1, len(dims)):
        fan_in = dims[l - 1]
        layers.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), (dims[l], fan_in)))
    return layers


def build_task(config, rng):
    dims = list(config.dims)
    if config.task == "linear-regression":
        teacher = rng.normal(0.0, 1.0, (dims[-1], dims[0]))
        X = rng.normal(0.0, 1.0, (config.dataset_size, dims[0]))
        Y = X @ teacher.T
        net = ReversibleNet(layers=_init_layers(dims, rng),
                            activation=IDENTITY, loss=L2)
        return Task(net=net, X=X, Y=Y)

    k = dims[-1]
    means = rng.normal(0.0, CLUSTER_SPREAD, (k, dims[0]))
    labels = rng.integers(0, k, size=config.dataset_size)
    X = means[labels] + rng.normal(0.0, CLUSTER_NOISE,
                                   (config.dataset_size, dims[0]))
    flip = rng.random(config.dataset_size) < LABEL_FLIP
    labels = np.where(flip, rng.integers(0, k, size=config.dataset_size), labels)
    Y = np.eye(k)[labels]
    net = ReversibleNet(layers=_init_layers(dims, rng),
                        activation=LEAKY_RELU, loss=LOGSOFTMAX)
    return Task(net=net, X=X, Y=Y)
