"""Distributed objectives ``f(x) = sum_i f_i(x)`` and the datasets behind them.

Each node objective is ``f_i(x) = mean_j loss(x, s_j) + (l2 / 2) ||x||^2`` over
the samples assigned to node ``i``. Losses:

* ``linear``   -- ``0.5 * (<a, x> - y)^2``
* ``relu``     -- ``0.5 * (relu(<a, x>) - y)^2``  (subgradient 0 at the kink)
* ``logistic`` -- binary cross-entropy ``log(1 + e^z) - y z`` with ``z = <a, x>``
"""
from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from delicoco.errors import ConfigurationError, ContractViolation, DivergenceError, IngestionError
from delicoco.numkit import INIT_STREAM, SeededRng, power_iteration, randn

TASKS = ("linear", "relu", "logistic")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (m, d)
    labels: np.ndarray  # (m,)
    task: str

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ContractViolation(f"features must be a non-empty (m, d) matrix, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ContractViolation("labels must be a vector with one entry per sample")
        if self.task == "logistic" and not np.all((self.labels == 0) | (self.labels == 1)):
            raise ContractViolation("logistic labels must be 0 or 1")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Partition:
    """Contiguous ranges over ``order``, a permutation of the sample indices."""

    node_ranges: tuple[tuple[int, int], ...]
    order: np.ndarray

    @property
    def n(self) -> int:
        return len(self.node_ranges)

    def indices(self, i: int) -> np.ndarray:
        lo, hi = self.node_ranges[i]
        return self.order[lo:hi]


def _split_ranges(m: int, n: int) -> tuple[tuple[int, int], ...]:
    if n < 1:
        raise ConfigurationError(f"need at least one node, got {n}")
    if n > m:
        raise ConfigurationError(f"cannot split {m} samples over {n} nodes")
    base, extra = divmod(m, n)
    ranges, lo = [], 0
    for i in range(n):
        hi = lo + base + (1 if i < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return tuple(ranges)


def partition_even(dataset: Dataset, n: int) -> Partition:
    return Partition(_split_ranges(dataset.m, n), np.arange(dataset.m))


def partition_sorted(dataset: Dataset, n: int) -> Partition:
    """Stable sort by label, then contiguous near-equal ranges."""
    ranges = _split_ranges(dataset.m, n)
    return Partition(ranges, np.argsort(dataset.labels, kind="stable"))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss_terms(task, z, y):
    if task == "linear":
        return 0.5 * (z - y) ** 2
    if task == "relu":
        return 0.5 * (np.maximum(z, 0.0) - y) ** 2
    return np.logaddexp(0.0, z) - y * z


def _residual(task, z, y):
    """d loss / d z."""
    if task == "linear":
        return z - y
    if task == "relu":
        return np.where(z > 0.0, z - y, 0.0)
    return _sigmoid(z) - y


@dataclass(frozen=True)
class DistributedObjective:
    dataset: Dataset
    partition: Partition
    l2: float = 0.0
    _blocks: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.l2 < 0:
            raise ConfigurationError(f"l2 must be nonnegative, got {self.l2}")
        blocks = []
        for i in range(self.partition.n):
            idx = self.partition.indices(i)
            if idx.size == 0:
                raise ContractViolation(f"node {i} has no samples")
            blocks.append((np.ascontiguousarray(self.dataset.features[idx]), self.dataset.labels[idx]))
        object.__setattr__(self, "_blocks", blocks)

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def d(self) -> int:
        return self.dataset.d

    @property
    def task(self) -> str:
        return self.dataset.task

    def node_data(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self._blocks[i]

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ContractViolation(f"expected a vector of length {self.d}, got shape {x.shape}")
        return x

    def local_loss(self, i: int, x) -> float:
        x = self._check(x)
        a, y = self._blocks[i]
        return float(np.mean(_loss_terms(self.task, a @ x, y)) + 0.5 * self.l2 * (x @ x))

    def local_grad(self, i: int, x) -> np.ndarray:
        x = self._check(x)
        a, y = self._blocks[i]
        r = _residual(self.task, a @ x, y)
        return a.T @ r / a.shape[0] + self.l2 * x

    def global_loss(self, x) -> float:
        x = self._check(x)
        return sum(self.local_loss(i, x) for i in range(self.n))

    def global_grad(self, x) -> np.ndarray:
        x = self._check(x)
        g = np.zeros(self.d)
        for i in range(self.n):
            g += self.local_grad(i, x)
        return g

    def grad_matrix(self, x: np.ndarray) -> np.ndarray:
        """Stacked local gradients: column ``i`` is ``grad f_i(x[:, i])``."""
        if x.shape != (self.d, self.n):
            raise ContractViolation(f"expected a ({self.d}, {self.n}) iterate matrix, got {x.shape}")
        g = np.empty_like(x)
        for i, (a, y) in enumerate(self._blocks):
            xi = x[:, i]
            r = _residual(self.task, a @ xi, y)
            g[:, i] = a.T @ r / a.shape[0] + self.l2 * xi
        return g

    def global_smoothness(self) -> float:
        """Upper bound on the smoothness constant of ``f`` itself."""

        def hess(v):
            return sum(a.T @ (a @ v) / a.shape[0] for a, _ in self._blocks)

        top = power_iteration(hess, self.d)
        curv = 0.25 if self.task == "logistic" else 1.0
        return curv * top + self.n * self.l2

    def smoothness(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-node smoothness and strong convexity estimates ``(L_i, mu_i)``.

        Quadratic tasks use the extreme eigenvalues of the node Gram matrix
        ``A_i^T A_i / n_i`` plus ``l2``. For relu the same upper bound is used
        and ``mu_i = l2``; for logistic ``L_i = 0.25 * lambda_max + l2`` and
        ``mu_i = l2``.
        """
        ls, mus = [], []
        for a, _ in self._blocks:
            ni = a.shape[0]

            def gram(v, a=a, ni=ni):
                return a.T @ (a @ v) / ni

            top = power_iteration(gram, self.d)
            if self.task == "linear":
                low = top - power_iteration(lambda v: top * v - gram(v), self.d)
                ls.append(top + self.l2)
                mus.append(max(low, 0.0) + self.l2)
            elif self.task == "relu":
                ls.append(top + self.l2)
                mus.append(self.l2)
            else:
                ls.append(0.25 * top + self.l2)
                mus.append(self.l2)
        return np.array(ls), np.array(mus)


def make_objective(dataset: Dataset, n: int, l2: float = 0.0, *, sort_by_label: bool = False) -> DistributedObjective:
    part = partition_sorted(dataset, n) if sort_by_label else partition_even(dataset, n)
    return DistributedObjective(dataset, part, l2)


def _gen(rng, m, d, noise_var):
    if m < 1 or d < 1:
        raise ConfigurationError(f"need m, d >= 1, got m={m}, d={d}")
    if noise_var < 0:
        raise ConfigurationError(f"noise variance must be >= 0, got {noise_var}")
    theta = randn(rng.spawn(0), d, 1)[:, 0]
    a = randn(rng.spawn(1), m, d)
    e = np.sqrt(noise_var) * randn(rng.spawn(2), m, 1)[:, 0]
    return theta, a, e


def gen_syn1(rng: SeededRng, m: int, d: int, noise_var: float) -> tuple[Dataset, np.ndarray]:
    """Linear regression data ``y = <theta*, a> + e`` with Gaussian ``a``, ``theta*`` and noise."""
    theta, a, e = _gen(rng, m, d, noise_var)
    return Dataset(a, a @ theta + e, "linear"), theta


def gen_syn2(rng: SeededRng, m: int, d: int, noise_var: float) -> tuple[Dataset, np.ndarray]:
    """Non-linear regression data ``y = relu(<theta*, a>) + e``."""
    theta, a, e = _gen(rng, m, d, noise_var)
    return Dataset(a, np.maximum(a @ theta, 0.0) + e, "relu"), theta


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_bytes(path):
    path = Path(path)
    try:
        with (gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")) as fh:
            return fh.read()
    except OSError as exc:
        raise IngestionError(path, 0, f"cannot read file: {exc}") from exc


def _read_idx(path, magic, ndim):
    raw = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IngestionError(path, len(raw), f"truncated header, need {header} bytes")
    (got,) = struct.unpack_from(">I", raw, 0)
    if got != magic:
        raise IngestionError(path, 0, f"bad magic number {got:#010x}, expected {magic:#010x}")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise IngestionError(path, len(raw), f"truncated payload, expected {header + size} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_mnist_binary(image_path, label_path) -> Dataset:
    """MNIST in IDX format as a binary task: digits 0-4 -> 0, digits 5-9 -> 1."""
    images = _read_idx(image_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(label_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IngestionError(
            label_path, 4, f"label count {labels.shape[0]} does not match image count {images.shape[0]}"
        )
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = (labels >= 5).astype(np.float64)
    return Dataset(x, y, "logistic")


MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")


def find_mnist(directory=None) -> tuple[Path, Path]:
    directory = Path(directory or os.environ.get("DELICOCO_MNIST_DIR", "."))
    found = []
    for name in MNIST_FILES:
        for cand in (directory / name, directory / f"{name}.gz"):
            if cand.exists():
                found.append(cand)
                break
        else:
            raise IngestionError(directory / name, 0, "MNIST file not found (set DELICOCO_MNIST_DIR)")
    return found[0], found[1]


def save_dataset_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(dataset.d)] + ["label"])
        for row, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def load_dataset_csv(path, task: str) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise IngestionError(path, 0, "no data rows")
    data = np.array(rows[1:], dtype=np.float64)
    return Dataset(data[:, :-1].copy(), data[:, -1].copy(), task)


class Optimum(NamedTuple):
    x_star: np.ndarray
    f_star: float
    converged: bool
    iterations: int


def initial_point(task: str, d: int, seed: int = 0) -> np.ndarray:
    """Default starting vector shared by all nodes.

    Zero, except for ``relu`` where zero is a stationary point of every
    sample loss (all units sit on the kink); there a draw from
    ``N(0, I / d)`` on the init sub-stream of ``seed`` is used.
    """
    if task != "relu":
        return np.zeros(d)
    return SeededRng(seed).spawn(INIT_STREAM).normal(d) / np.sqrt(d)


def centralized_optimum(obj: DistributedObjective, step: float | None = None, tol: float = 1e-10,
                        max_iters: int = 100_000, patience: int = 10, x0=None) -> Optimum:
    """Full-batch gradient descent on ``f`` from ``x0`` (default zero).

    ``step`` defaults to ``1 / L_f`` (see :meth:`DistributedObjective.global_smoothness`). Stops when ``||grad f|| <= tol``.
    Raises :class:`DivergenceError` if the loss grows ``patience`` steps in a row.
    """
    if step is None:
        step = 1.0 / obj.global_smoothness()
    if step <= 0 or tol <= 0:
        raise ConfigurationError("step and tol must be positive")
    x = np.zeros(obj.d) if x0 is None else np.array(x0, dtype=np.float64)
    f = obj.global_loss(x)
    rising = 0
    for it in range(max_iters):
        g = obj.global_grad(x)
        if np.linalg.norm(g) <= tol:
            return Optimum(x, f, True, it)
        x = x - step * g
        f_new = obj.global_loss(x)
        if not np.isfinite(f_new):
            raise DivergenceError(it + 1, f_new, "try a smaller step")
        rising = rising + 1 if f_new > f else 0
        if rising >= patience:
            raise DivergenceError(it + 1, f_new, f"loss increased for {patience} consecutive steps; try a smaller step")
        f = f_new
    converged = bool(np.linalg.norm(obj.global_grad(x)) <= tol)
    return Optimum(x, f, converged, max_iters)
