"""Multi-basis quantization codebook, channel-shape quantization and the
feedback gate applied at each mobile.

Codeword indices are 0-based throughout: entry ``k`` belongs to
orthonormal set ``k // n_t``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ChannelRealization,
    ConfigurationError,
    draw_orthonormal_basis,
    draw_channel_matrix,
)

__all__ = [
    "Codebook",
    "GateDecision",
    "build_codebook",
    "quantize",
    "quantize_many",
    "feedback_gate",
    "gate_many",
    "codeword_priors",
]

DEFAULT_DELTA = 0.1
DEFAULT_G_TH = 2.0

_MAGIC = b"SDMACB01"


@dataclass(frozen=True)
class Codebook:
    """``N`` unit vectors grouped into orthonormal sets of ``n_t`` vectors.

    ``entries`` has shape ``(N, n_t)``; ``set_of[k]`` is the set id of
    entry ``k`` and ``pairwise_sin[i, j]`` the sine of the angle between
    entries ``i`` and ``j``.
    """

    entries: np.ndarray
    n_t: int
    c_fb: int
    seed: int | None = None
    set_of: np.ndarray = field(init=False, repr=False)
    pairwise_sin: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", entries)
        n = entries.shape[0]
        object.__setattr__(self, "set_of", np.arange(n) // self.n_t)
        gram = np.abs(entries.conj() @ entries.T) ** 2
        d = np.clip(1.0 - gram, 0.0, 1.0)
        np.fill_diagonal(d, 0.0)
        s = np.sqrt(d)
        s = 0.5 * (s + s.T)
        object.__setattr__(self, "pairwise_sin", s)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def n_sets(self) -> int:
        return int(self.set_of[-1]) + 1

    @property
    def distortion_matrix(self) -> np.ndarray:
        return self.pairwise_sin**2

    def members(self, m: int) -> np.ndarray:
        """Indices of the codewords in orthonormal set ``m``."""
        return np.flatnonzero(self.set_of == m)

    def save(self, path) -> None:
        """Write the codebook as a small self-describing binary file.

        Layout: 8-byte magic, little-endian int64 ``n_t, c_fb, seed, N``
        (seed ``-1`` when unknown), then ``N * n_t`` complex entries as
        interleaved real/imag float64, row-major.
        """
        seed = -1 if self.seed is None else int(self.seed)
        header = struct.pack("<4q", self.n_t, self.c_fb, seed, self.size)
        payload = np.ascontiguousarray(self.entries, dtype="<c16").tobytes()
        Path(path).write_bytes(_MAGIC + header + payload)

    @classmethod
    def load(cls, path) -> "Codebook":
        raw = Path(path).read_bytes()
        if raw[:8] != _MAGIC:
            raise ValueError(f"{path}: not a codebook file")
        n_t, c_fb, seed, n = struct.unpack("<4q", raw[8:40])
        entries = np.frombuffer(raw[40:], dtype="<c16").reshape(n, n_t)
        return cls(entries.copy(), n_t, c_fb, None if seed < 0 else seed)


def build_codebook(
    rng: np.random.Generator,
    n_t: int,
    c_fb: int,
    seed: int | None = None,
    allow_partial: bool = False,
) -> Codebook:
    """Draw ``2**c_fb / n_t`` independent Haar bases and stack them.

    With ``allow_partial`` a codebook smaller than one basis is allowed; it
    then holds the first ``2**c_fb`` vectors of a single basis. The coded
    feedback baseline needs this when the Hamming payload is tiny.
    """
    n = 2**c_fb
    if n % n_t:
        if not (allow_partial and n < n_t):
            raise ConfigurationError(
                f"codebook size 2**c_fb = {n} (c_fb={c_fb}) is not divisible "
                f"by n_t={n_t}"
            )
    n_bases = max(1, n // n_t)
    vecs = np.concatenate(
        [draw_orthonormal_basis(rng, n_t).vectors for _ in range(n_bases)]
    )
    return Codebook(vecs[:n], n_t, c_fb, seed)


def quantize_many(shapes: np.ndarray, cb: Codebook) -> tuple[np.ndarray, np.ndarray]:
    """Quantize a stack of unit shapes (last axis ``n_t``).

    Returns the nearest codeword index and its distortion for each shape.
    ``argmax`` keeps the first maximum, so ties go to the smallest index.
    """
    corr = np.abs(shapes @ cb.entries.conj().T) ** 2
    idx = np.argmax(corr, axis=-1)
    best = np.take_along_axis(corr, idx[..., None], axis=-1)[..., 0]
    return idx, np.clip(1.0 - best, 0.0, 1.0)


def quantize(shape, cb: Codebook) -> int:
    """Index of the codeword with minimum distortion to ``shape``."""
    idx, _ = quantize_many(np.asarray(shape, dtype=complex)[None, :], cb)
    return int(idx[0])


@dataclass(frozen=True)
class GateDecision:
    feed_back: bool
    index: int
    distortion: float


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta={delta!r} must lie in (0, 1)")


def gate_many(shapes, gains, cb: Codebook, delta: float, g_th: float):
    """Vectorized feedback gate. Returns ``(feed_back, index, distortion)``."""
    _check_delta(delta)
    idx, dist = quantize_many(shapes, cb)
    return (dist < delta) & (np.asarray(gains) > g_th), idx, dist


def feedback_gate(
    h: ChannelRealization,
    cb: Codebook,
    delta: float = DEFAULT_DELTA,
    g_th: float = DEFAULT_G_TH,
) -> GateDecision:
    """Feed back only well-quantized, strong channels."""
    ok, idx, dist = gate_many(h.shape[None, :], np.array([h.gain]), cb, delta, g_th)
    return GateDecision(bool(ok[0]), int(idx[0]), float(dist[0]))


def _sample_caps(rng, cb: Codebook, delta: float, count: int) -> np.ndarray:
    """Uniform samples on the union of distortion caps of radius ``delta``.

    A cap is picked uniformly, a point is drawn uniformly inside it, and the
    point is kept with probability ``1 / (number of caps containing it)``.
    """
    n_t = cb.n_t
    centre = rng.integers(cb.size, size=count)
    v = cb.entries[centre]
    # sin^2 of the angle to the centre has CDF (y / delta)^(n_t - 1) on the cap
    s2 = delta * rng.random(count) ** (1.0 / (n_t - 1))
    u = draw_channel_matrix(rng, n_t, count)
    u -= np.sum(v.conj() * u, axis=1)[:, None] * v
    u /= np.linalg.norm(u, axis=1)[:, None]
    shapes = np.sqrt(1.0 - s2)[:, None] * v + np.sqrt(s2)[:, None] * u
    corr = np.abs(shapes @ cb.entries.conj().T) ** 2
    covering = np.sum(corr > 1.0 - delta, axis=1)
    keep = rng.random(count) * np.maximum(covering, 1) < 1.0
    return shapes[keep]


def codeword_priors(
    cb: Codebook,
    delta: float = DEFAULT_DELTA,
    g_th: float = DEFAULT_G_TH,
    n_samples: int = 10_000,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Monte Carlo estimate of Pr(codeword i is reported).

    Conditioned on the shape gate only; the gain gate is independent of the
    shape, so ``g_th`` does not enter. ``n_samples`` gate-passing shapes are
    collected and counts get add-one smoothing.
    """
    _check_delta(delta)
    if n_samples < 10_000:
        raise ConfigurationError(f"n_samples={n_samples} < 10000")
    rng = np.random.default_rng() if rng is None else rng
    counts = np.zeros(cb.size)
    got = 0
    while got < n_samples:
        chunk = max(1_000, 4_000_000 // cb.size)
        batch = _sample_caps(rng, cb, delta, min(chunk, 2 * (n_samples - got)))
        batch = batch[: n_samples - got]
        idx, dist = quantize_many(batch, cb)
        idx = idx[dist < delta]
        counts += np.bincount(idx, minlength=cb.size)
        got += idx.size
    counts += 1.0
    return counts / counts.sum()
