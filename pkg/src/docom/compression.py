"""Contractive compression operators.

Every operator here satisfies ``E||x - Q(x)||^2 <= (1 - delta) ||x||^2``.
Sparsifiers keep ``k`` of the ``d`` coordinates untouched and zero the
rest; ``rand_k`` is deliberately *not* rescaled by ``d/k``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CompressorSpec",
    "compress",
    "empirical_contraction",
    "parse_compressor",
    "KINDS",
]

KINDS = ("identity", "top_k", "rand_k")


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    d: int
    k: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown compressor kind {self.kind!r}; expected one of {KINDS}")
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")
        if self.kind == "identity":
            object.__setattr__(self, "k", self.d)
        elif self.k is None or not 1 <= self.k <= self.d:
            raise ValueError(f"{self.kind} needs 1 <= k <= d={self.d}, got k={self.k}")

    @property
    def delta(self) -> float:
        """Nominal contraction parameter: ``k/d`` for sparsifiers, 1 for identity."""
        return 1.0 if self.kind == "identity" else self.k / self.d

    @property
    def payload_floats(self) -> int:
        """Real values carried by one compressed message."""
        return self.d if self.kind == "identity" else self.k

    @property
    def index_floats(self) -> int:
        """Extra index words per message; a dense vector needs none."""
        return 0 if self.kind == "identity" else self.k

    def __str__(self):
        return "identity" if self.kind == "identity" else f"{self.kind}@{self.k}"


def parse_compressor(text: str, d: int) -> CompressorSpec:
    """Parse ``identity``, ``top_k:0.05`` (ratio of d) or ``rand_k@16`` (absolute k)."""
    text = text.strip()
    if text == "identity":
        return CompressorSpec("identity", d)
    m = re.fullmatch(r"(top_k|rand_k)(?::([0-9.eE+-]+)|@(\d+))", text)
    if m is None:
        raise ValueError(f"cannot parse compressor {text!r}")
    kind, ratio, absolute = m.groups()
    if absolute is not None:
        k = int(absolute)
    else:
        r = float(ratio)
        if not 0 < r <= 1:
            raise ValueError(f"compression ratio must be in (0, 1], got {r}")
        k = max(1, int(round(r * d)))
    return CompressorSpec(kind, d, k)


def _top_k_support(x: np.ndarray, k: int) -> np.ndarray:
    # exact top-k by magnitude, ties resolved toward the lowest index
    mag = np.abs(x)
    d = mag.size
    if k == d:
        return np.arange(d)
    thresh = np.partition(mag, d - k)[d - k]
    above = np.flatnonzero(mag > thresh)
    ties = np.flatnonzero(mag == thresh)[: k - above.size]
    return np.sort(np.concatenate([above, ties]))


def support(spec: CompressorSpec, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Indices retained by ``spec`` for input ``x`` (sorted)."""
    if spec.kind == "identity" or spec.k == spec.d:
        return np.arange(spec.d)
    if spec.kind == "top_k":
        return _top_k_support(x, spec.k)
    if rng is None:
        raise ValueError("rand_k needs a random stream")
    return np.sort(rng.choice(spec.d, size=spec.k, replace=False))


def compress(spec: CompressorSpec, x, rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply ``Q`` to ``x``; retained coordinates are copied bit-for-bit."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise ValueError(f"expected a vector of length {spec.d}, got shape {x.shape}")
    if spec.kind == "identity":
        return x.copy()
    idx = support(spec, x, rng)
    out = np.zeros_like(x)
    out[idx] = x[idx]
    return out


def empirical_contraction(spec: CompressorSpec, x, trials: int, rng: np.random.Generator) -> float:
    """Sample mean of ``||x - Q(x)||^2 / ||x||^2`` over ``trials`` draws."""
    x = np.asarray(x, dtype=float)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    norm2 = float(x @ x)
    if norm2 == 0.0:
        raise ValueError("contraction ratio is undefined for the zero vector")
    total = 0.0
    for _ in range(trials):
        r = x - compress(spec, x, rng)
        total += float(r @ r)
    return total / (trials * norm2)
