"""Shared-trunk multi-head regression MLP with manual reverse-mode gradients.

All parameters live in one flat vector: trunk layers first (shared across
tasks), then one single-layer linear head per task. Targets are synthetic
random sinusoid mixtures, with higher-frequency mixtures for later tasks so
the tasks are genuinely heterogeneous. Task loss is per-head mean squared
error.
"""

from dataclasses import dataclass

import numpy as np

from .objectives import Minibatch, TaskObjective, TaskSuite
from .params import RngStream

__all__ = ["MLPTopology", "MLPTask", "MLPSuite", "synthetic_mlp_suite", "init_mlp_params"]


@dataclass(frozen=True)
class MLPTopology:
    input_dim: int
    hidden: tuple
    n_tasks: int

    def layer_shapes(self):
        """Trunk (W, b) shapes in order, then one (W, b) pair per head."""
        shapes = []
        fan_in = self.input_dim
        for width in self.hidden:
            shapes.append(((fan_in, width), (width,)))
            fan_in = width
        for _ in range(self.n_tasks):
            shapes.append(((fan_in, 1), (1,)))
        return shapes

    def slices(self):
        out, offset = [], 0
        for w_shape, b_shape in self.layer_shapes():
            w_size = int(np.prod(w_shape))
            b_size = int(np.prod(b_shape))
            out.append(
                (slice(offset, offset + w_size), w_shape, slice(offset + w_size, offset + w_size + b_size))
            )
            offset += w_size + b_size
        return out

    @property
    def trunk_size(self) -> int:
        fan_in, total = self.input_dim, 0
        for width in self.hidden:
            total += fan_in * width + width
            fan_in = width
        return total

    @property
    def dim(self) -> int:
        head = self.hidden[-1] + 1
        return self.trunk_size + self.n_tasks * head

    def head_slice(self, k: int) -> slice:
        head = self.hidden[-1] + 1
        start = self.trunk_size + k * head
        return slice(start, start + head)

    def unpack(self, w: np.ndarray):
        """Views into w: list of trunk (W, b), list of head (W, b)."""
        parts = []
        for w_slice, w_shape, b_slice in self.slices():
            parts.append((w[w_slice].reshape(w_shape), w[b_slice]))
        n_trunk = len(self.hidden)
        return parts[:n_trunk], parts[n_trunk:]

    def forward_trunk(self, w: np.ndarray, x: np.ndarray):
        trunk, _ = self.unpack(w)
        activations = [x]
        h = x
        for w_mat, b in trunk:
            h = np.tanh(h @ w_mat + b)
            activations.append(h)
        return activations

    def task_value(self, w, k, x, y):
        _, heads = self.unpack(w)
        h = self.forward_trunk(w, x)[-1]
        w_head, b_head = heads[k]
        pred = h @ w_head + b_head
        return float(np.mean((pred - y) ** 2))

    def task_gradient(self, w, k, x, y):
        trunk, heads = self.unpack(w)
        activations = self.forward_trunk(w, x)
        h_last = activations[-1]
        w_head, b_head = heads[k]
        pred = h_last @ w_head + b_head

        grad = np.zeros_like(w)
        g_trunk, g_heads = self.unpack(grad)

        d_pred = 2.0 * (pred - y) / y.shape[0]
        g_heads[k][0][...] = h_last.T @ d_pred
        g_heads[k][1][...] = d_pred.sum(axis=0)
        d_h = d_pred @ w_head.T
        for i in reversed(range(len(trunk))):
            d_z = d_h * (1.0 - activations[i + 1] ** 2)
            g_trunk[i][0][...] = activations[i].T @ d_z
            g_trunk[i][1][...] = d_z.sum(axis=0)
            d_h = d_z @ trunk[i][0].T
        return grad


class _SinusoidTarget:
    """Smooth random function: amplitude-weighted mixture of sinusoids."""

    def __init__(self, input_dim, n_terms, freq_scale, gen):
        self.freqs = gen.normal(0.0, freq_scale, size=(n_terms, input_dim))
        self.phases = gen.uniform(0.0, 2.0 * np.pi, size=n_terms)
        amps = gen.uniform(0.5, 1.0, size=n_terms)
        self.amps = amps / np.sqrt(n_terms)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (np.sin(x @ self.freqs.T + self.phases) @ self.amps)[:, None]


class MLPTask(TaskObjective):
    def __init__(self, index: int, topology: MLPTopology):
        self.index = index
        self.topology = topology

    def value(self, w, xi: Minibatch) -> float:
        x, targets = xi.payload
        return self.topology.task_value(w, self.index, x, targets[self.index])

    def gradient(self, w, xi: Minibatch) -> np.ndarray:
        x, targets = xi.payload
        return self.topology.task_gradient(w, self.index, x, targets[self.index])


class MLPSuite(TaskSuite):
    def __init__(self, topology: MLPTopology, targets, batch_size: int, val_inputs: np.ndarray):
        super().__init__([MLPTask(k, topology) for k in range(topology.n_tasks)])
        self.topology = topology
        self.targets = targets
        self.batch_size = batch_size
        self.val_inputs = val_inputs
        self.val_targets = [f(val_inputs) for f in targets]
        mask = np.zeros(topology.dim, dtype=bool)
        mask[: topology.trunk_size] = True
        self.shared_mask = mask
        self._task_masks = []
        for k in range(topology.n_tasks):
            m = mask.copy()
            m[topology.head_slice(k)] = True
            self._task_masks.append(m)

    @property
    def dim(self) -> int:
        return self.topology.dim

    def task_mask(self, k: int) -> np.ndarray:
        return self._task_masks[k]

    def sample_minibatch(self, gen: np.random.Generator) -> Minibatch:
        x = gen.uniform(-1.0, 1.0, size=(self.batch_size, self.topology.input_dim))
        return Minibatch(payload=(x, [f(x) for f in self.targets]))

    def validation_task_losses(self, w: np.ndarray) -> np.ndarray:
        return np.array(
            [
                self.topology.task_value(w, k, self.val_inputs, self.val_targets[k])
                for k in range(self.n_tasks)
            ]
        )

    def validation_loss(self, w: np.ndarray) -> float:
        return float(np.mean(self.validation_task_losses(w)))


def synthetic_mlp_suite(
    n_tasks: int = 4,
    input_dim: int = 2,
    hidden=(32, 32),
    batch_size: int = 32,
    dataset_seed: int = 7,
    target_terms: int = 3,
    val_size: int = 128,
) -> MLPSuite:
    """Build the synthetic heterogeneous regression suite.

    Task k's target uses frequency scale 1 + 0.8k, so later tasks demand
    progressively sharper functions of the same inputs.
    """
    topology = MLPTopology(input_dim=input_dim, hidden=tuple(hidden), n_tasks=n_tasks)
    target_gen = RngStream(dataset_seed, "targets").gen
    targets = [
        _SinusoidTarget(input_dim, target_terms, 1.0 + 0.8 * k, target_gen)
        for k in range(n_tasks)
    ]
    val_inputs = RngStream(dataset_seed, "validation").gen.uniform(
        -1.0, 1.0, size=(val_size, input_dim)
    )
    return MLPSuite(topology, targets, batch_size, val_inputs)


def init_mlp_params(suite: MLPSuite, gen: np.random.Generator) -> np.ndarray:
    """Scaled-normal weights, zero biases, packed flat."""
    w = np.zeros(suite.dim)
    trunk, heads = suite.topology.unpack(w)
    for w_mat, _ in trunk + heads:
        fan_in = w_mat.shape[0]
        w_mat[...] = gen.normal(0.0, 1.0 / np.sqrt(fan_in), size=w_mat.shape)
    return w
