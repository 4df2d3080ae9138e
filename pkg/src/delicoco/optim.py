"""DeLi-CoCo: local gradient steps interleaved with Q compressed gossip rounds.

Iterates are stored column-wise: ``X[:, i]`` is node ``i``'s parameter
vector. Each gossip round every node sends one compressed message
``C(x_i - z_i)``; ``Z`` accumulates what was sent (error feedback) and
``S`` accumulates the mixing-weighted messages received. ``Z`` and ``S`` are
carried over between outer iterations.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from delicoco.compression import CompressorSpec, compress_columns, message_bits, omega_of
from delicoco.errors import ConfigurationError, ContractViolation, DivergenceError
from delicoco.numkit import COMPRESSION_STREAM, SeededRng
from delicoco.objectives import DistributedObjective
from delicoco.topology import MixingMatrix

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class AlgoConfig:
    eta: float
    gamma: float
    q_steps: int
    iters: int
    compressor: CompressorSpec
    mixing: MixingMatrix
    seed: int = 0
    stream: int = 0  # compression sub-stream id, so sweeps can share data but not noise
    bit_cost: str = "nominal"

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError(f"eta must be > 0, got {self.eta}")
        if not 0 < self.gamma <= 1:
            raise ConfigurationError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.q_steps < 1:
            raise ConfigurationError(f"q_steps must be >= 1, got {self.q_steps}")
        if self.iters < 1:
            raise ConfigurationError(f"iters must be >= 1, got {self.iters}")


@dataclass
class NodeStates:
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, d: int, n: int) -> NodeStates:
        return cls(np.zeros((d, n)), np.zeros((d, n)), np.zeros((d, n)))

    @classmethod
    def start(cls, x0: np.ndarray) -> NodeStates:
        x0 = np.array(x0, dtype=np.float64)
        return cls(x0, np.zeros_like(x0), np.zeros_like(x0))


class TraceRecord(NamedTuple):
    iter: int
    suboptimality: float
    consensus_error: float
    feedback_gap: float
    cumulative_bits: int


CSV_HEADER = "iter,suboptimality,consensus_error,feedback_gap,cumulative_bits"


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def to_csv(self) -> str:
        out = io.StringIO()
        for k, v in self.metadata.items():
            out.write(f"# {k}={v}\n")
        out.write(CSV_HEADER + "\n")
        for r in self.records:
            out.write(f"{r.iter},{r.suboptimality!r},{r.consensus_error!r},{r.feedback_gap!r},{r.cumulative_bits}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> RunTrace:
        meta, records = {}, []
        lines = iter(text.splitlines())
        for line in lines:
            if line.startswith("# "):
                k, _, v = line[2:].partition("=")
                meta[k] = v
            elif line == CSV_HEADER:
                break
            else:
                raise ContractViolation(f"unexpected trace line {line!r}")
        for line in lines:
            if not line:
                continue
            t, sub, cons, fb, bits = line.split(",")
            records.append(TraceRecord(int(t), float(sub), float(cons), float(fb), int(bits)))
        return cls(records, meta)


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def consensus_error(states: NodeStates) -> tuple[float, float]:
    """``(||X - xbar 1^T||_F^2, ||X - Z||_F^2)``."""
    x = states.x
    dev = x - x.mean(axis=1, keepdims=True)
    gap = x - states.z
    return float(np.sum(dev * dev)), float(np.sum(gap * gap))


def gossip_round(states: NodeStates, mixing: MixingMatrix, gamma: float,
                 compressor: CompressorSpec, rng: SeededRng | None = None) -> NodeStates:
    """One compressed gossip step.

    ``M = C(X - Z)`` column-wise, ``S' = S + M W``, ``Z' = Z + M``,
    ``X' = X + gamma (S' - Z')``. Column ``j`` of a randomized compressor
    draws from the ``j``-th child stream of ``rng``.
    """
    x, z, s = states.x, states.z, states.s
    if not (x.shape == z.shape == s.shape) or x.ndim != 2:
        raise ContractViolation("X, Z, S must be matrices of identical shape")
    if x.shape[1] != mixing.n:
        raise ContractViolation(f"{x.shape[1]} node columns but mixing matrix is {mixing.n}x{mixing.n}")
    if not 0 < gamma <= 1:
        raise ConfigurationError(f"gamma must be in (0, 1], got {gamma}")
    keys = None
    if compressor.kind in ("rand_k", "rand2", "qsgd"):
        if rng is None:
            raise ContractViolation(f"{compressor.kind} needs a SeededRng")
        keys = rng.child_keys(x.shape[1])
    m = compress_columns(compressor, x - z, keys)
    s_new = s + m @ mixing.w
    z_new = z + m
    x_new = x + gamma * (s_new - z_new)
    return NodeStates(x_new, z_new, s_new)


def _metadata(algorithm, config: AlgoConfig | None, obj, f_star, extra=None):
    meta = {"algorithm": algorithm, "generator": SeededRng.algorithm}
    if config is not None:
        meta.update({
            "seed": config.seed,
            "stream": config.stream,
            "eta": config.eta,
            "gamma": config.gamma,
            "q_steps": config.q_steps,
            "iters": config.iters,
            "compressor": str(config.compressor),
            "omega": omega_of(config.compressor, obj.d),
            "n": config.mixing.n,
            "delta": config.mixing.delta,
            "lambda_max_i_minus_w": config.mixing.lambda_max_i_minus_w,
            "bit_cost": config.bit_cost,
        })
    meta["d"] = obj.d
    meta["f_star"] = f_star
    if extra:
        meta.update(extra)
    return {k: _fmt(v) for k, v in meta.items()}


def _record(t, obj, x, z, f_star, bits):
    xbar = x.mean(axis=1)
    f = obj.global_loss(xbar)
    if not math.isfinite(f) or f > DIVERGENCE_LIMIT:
        raise DivergenceError(t, f, "reduce eta or gamma")
    dev = x - xbar[:, None]
    gap = x - z
    return TraceRecord(t, f - f_star, float(np.sum(dev * dev)), float(np.sum(gap * gap)), bits)


def _check_inputs(config: AlgoConfig, obj: DistributedObjective, x0):
    if obj.n != config.mixing.n:
        raise ContractViolation(f"objective has {obj.n} nodes, mixing matrix {config.mixing.n}")
    if x0 is None:
        return np.zeros((obj.d, obj.n))
    x0 = np.array(x0, dtype=np.float64)
    if x0.shape != (obj.d, obj.n):
        raise ContractViolation(f"x0 must have shape ({obj.d}, {obj.n}), got {x0.shape}")
    return x0


def deli_coco(config: AlgoConfig, obj: DistributedObjective, f_star: float = 0.0,
              x0=None, *, keep_states: bool = False) -> RunTrace:
    """Run ``config.iters`` outer iterations and record one trace row per iteration.

    ``f_star`` is subtracted from ``f(xbar_t)`` to give the suboptimality.
    With ``keep_states`` the final :class:`NodeStates` is stored on the trace
    as ``trace.states``.
    """
    states = NodeStates.start(_check_inputs(config, obj, x0))
    per_round = obj.n * message_bits(config.compressor, obj.d, config.bit_cost)
    root = SeededRng(config.seed).spawn(COMPRESSION_STREAM, config.stream)
    trace = RunTrace(metadata=_metadata("deli_coco", config, obj, f_star))
    bits = 0
    for t in range(1, config.iters + 1):
        states.x = states.x - config.eta * obj.grad_matrix(states.x)
        for q in range(config.q_steps):
            states = gossip_round(states, config.mixing, config.gamma, config.compressor, root.spawn(t, q))
            bits += per_round
        trace.records.append(_record(t, obj, states.x, states.z, f_star, bits))
    if keep_states:
        trace.states = states
    return trace


def dgd(config: AlgoConfig, obj: DistributedObjective, f_star: float = 0.0, x0=None) -> RunTrace:
    """Decentralized gradient descent ``X <- (X - eta grad F(X)) W``, uncompressed.

    ``gamma``, ``q_steps`` and the compressor in ``config`` are ignored.
    """
    x = _check_inputs(config, obj, x0)
    w = config.mixing.w
    per_iter = obj.n * message_bits(CompressorSpec("identity"), obj.d, config.bit_cost)
    trace = RunTrace(metadata=_metadata("dgd", config, obj, f_star))
    for t in range(1, config.iters + 1):
        x = (x - config.eta * obj.grad_matrix(x)) @ w
        trace.records.append(_record(t, obj, x, x, f_star, t * per_iter))
    return trace


def centralized_gd(obj: DistributedObjective, step: float, iters: int, f_star: float = 0.0, x0=None) -> RunTrace:
    """Single-machine gradient descent on ``f`` recorded in the trace format."""
    x = np.zeros(obj.d) if x0 is None else np.array(x0, dtype=np.float64)
    trace = RunTrace(metadata=_metadata("centralized", None, obj, f_star, {"step": step, "iters": iters}))
    for t in range(1, iters + 1):
        x = x - step * obj.global_grad(x)
        trace.records.append(_record(t, obj, x[:, None], x[:, None], f_star, 0))
    trace.x = x
    return trace
