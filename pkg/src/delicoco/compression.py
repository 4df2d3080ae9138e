"""Contraction compression operators and per-message bit accounting.

Operators act on the columns of a ``(d, n)`` matrix, one column per node.
Randomized operators take one uint64 stream key per column; column ``j``
reads its uniforms from counter position 0 of stream ``keys[j]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from delicoco import kernels
from delicoco.errors import ConfigurationError, ContractViolation
from delicoco.numkit import SeededRng, bits_to_unit

KINDS = ("identity", "top_k", "rand_k", "rand2", "qsgd")

# config-string prefix -> kind
_ALIASES = {"identity": "identity", "top": "top_k", "rand": "rand_k", "rand2": "rand2", "qsgd": "qsgd"}
_PREFIX = {v: k for k, v in _ALIASES.items()}

FLOAT_BITS = 32
BIT_MODELS = ("nominal", "exact")


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown compressor kind {self.kind!r}")
        p = self.param
        if self.kind in ("top_k", "rand_k") and not 0.0 < p <= 1.0:
            raise ConfigurationError(f"{self.kind}: fraction must be in (0, 1], got {p}")
        if self.kind == "rand2" and not 0.0 < p <= 1.0:
            raise ConfigurationError(f"rand2: probability must be in (0, 1], got {p}")
        if self.kind == "qsgd" and (p < 1 or p != int(p)):
            raise ConfigurationError(f"qsgd: bit width must be a positive integer, got {p}")

    @classmethod
    def parse(cls, text: str) -> CompressorSpec:
        """Parse ``identity``, ``top:0.05``, ``rand:0.05``, ``rand2:0.5`` or ``qsgd:2``."""
        name, _, arg = text.strip().partition(":")
        kind = _ALIASES.get(name)
        if kind is None:
            raise ConfigurationError(f"unknown compressor {text!r}")
        if kind == "identity":
            if arg:
                raise ConfigurationError(f"identity takes no parameter: {text!r}")
            return cls("identity")
        if not arg:
            raise ConfigurationError(f"compressor {text!r} needs a parameter, e.g. {name}:0.1")
        try:
            value = float(arg)
        except ValueError:
            raise ConfigurationError(f"bad compressor parameter in {text!r}") from None
        if kind == "qsgd":
            if value != int(value):
                raise ConfigurationError(f"qsgd: bit width must be an integer, got {arg}")
            value = int(value)
        return cls(kind, value)

    def __str__(self):
        if self.kind == "identity":
            return "identity"
        if self.kind == "qsgd":
            return f"qsgd:{int(self.param)}"
        return f"{_PREFIX[self.kind]}:{self.param:g}"

    def k(self, d: int) -> int:
        """Number of kept coordinates for the sparsifiers (half-up rounding, at least 1)."""
        return max(1, min(d, math.floor(self.param * d + 0.5)))


def qsgd_w(b: int, d: int) -> float:
    return 1.0 + min(math.sqrt(d) / 2.0 ** b, d / 2.0 ** (2 * b))


def omega_of(spec: CompressorSpec, d: int) -> float:
    if d < 1:
        raise ConfigurationError(f"dimension must be >= 1, got {d}")
    if spec.kind == "identity":
        return 1.0
    if spec.kind in ("top_k", "rand_k"):
        return spec.k(d) / d
    if spec.kind == "rand2":
        return float(spec.param)
    return 1.0 / qsgd_w(int(spec.param), d)


def compress_columns(spec: CompressorSpec, x: np.ndarray, keys=None) -> np.ndarray:
    """Apply ``spec`` to every column of ``x`` independently."""
    d, n = x.shape
    if spec.kind == "identity":
        return x.copy()
    if spec.kind == "top_k":
        return np.where(kernels.topk_mask(x, spec.k(d)), x, 0.0)
    if keys is None or len(keys) != n:
        raise ContractViolation(f"{spec.kind} needs one stream key per column ({n})")
    keys = np.asarray(keys, dtype=np.uint64)
    if spec.kind == "rand2":
        u = bits_to_unit(kernels.splitmix64_block(keys, 0, 1)[:, 0])
        return np.where((u < spec.param)[None, :], x, 0.0)
    u = bits_to_unit(kernels.splitmix64_block(keys, 0, d)).T
    if spec.kind == "rand_k":
        # the k largest uniforms form a uniformly random k-subset
        return np.where(kernels.topk_mask(u, spec.k(d)), x, 0.0)
    b = int(spec.param)
    norms = np.sqrt(np.einsum("ij,ij->j", x, x))
    return kernels.qsgd_quantize(x, norms, np.ascontiguousarray(u), 2.0 ** b, qsgd_w(b, d))


def compress(spec: CompressorSpec, x, rng: SeededRng | None = None) -> np.ndarray:
    """Compress a single vector. Randomized kinds consume one child stream of ``rng``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractViolation("compress expects a vector; use compress_columns for matrices")
    keys = None
    if spec.kind in ("rand_k", "rand2", "qsgd"):
        if rng is None:
            raise ContractViolation(f"{spec.kind} needs a SeededRng")
        keys = rng.bits(1)
    return compress_columns(spec, x[:, None], keys)[:, 0]


def message_bits(spec: CompressorSpec, d: int, model: str = "nominal") -> int:
    """Bits charged for one compressed message of dimension ``d``.

    ``nominal`` counts payload only (``d*b`` for qsgd, ``32k`` for the
    sparsifiers). ``exact`` adds coordinate indices, the qsgd norm and sign
    bits, and the rand2 send flag. rand2 is charged its expected size.
    """
    if model not in BIT_MODELS:
        raise ConfigurationError(f"unknown bit cost model {model!r}")
    if spec.kind == "identity":
        return d * FLOAT_BITS
    if spec.kind in ("top_k", "rand_k"):
        k = spec.k(d)
        if model == "nominal":
            return k * FLOAT_BITS
        return k * (FLOAT_BITS + math.ceil(math.log2(d)))
    if spec.kind == "rand2":
        payload = round(spec.param * d * FLOAT_BITS)
        return payload if model == "nominal" else 1 + payload
    b = int(spec.param)
    return d * b if model == "nominal" else FLOAT_BITS + d * (b + 1)
