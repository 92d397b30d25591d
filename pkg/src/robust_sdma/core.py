"""Complex vector primitives shared by every other module.

Channels are i.i.d. unit-variance complex Gaussian vectors. A channel is
split into its gain (squared norm) and its shape (unit-norm direction);
only the shape is quantized. Distortion between two unit vectors is the
squared sine of their principal angle, ``1 - |v1^H v2|^2``.

All randomness is drawn from an explicit :class:`numpy.random.Generator`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TOL_CONSTRUCT",
    "TOL_INPUT",
    "MI_SATURATION",
    "ConfigurationError",
    "NormalizationError",
    "ChannelRealization",
    "OrthonormalBasis",
    "draw_channel",
    "draw_channel_matrix",
    "draw_orthonormal_basis",
    "distortion",
    "sin_angle",
    "sin_angle_cdf",
]

# construction tolerance / accepted deviation of caller-supplied unit vectors
TOL_CONSTRUCT = 1e-12
TOL_INPUT = 1e-9

# stand-in for infinite mutual information (perfectly aligned precoder)
MI_SATURATION = 64.0


class ConfigurationError(ValueError):
    """Raised for parameter combinations the system model does not admit."""


class NormalizationError(ValueError):
    """Raised when a vector that must be unit-norm is not."""


def _check_antennas(n_t: int) -> int:
    if int(n_t) != n_t or n_t < 2:
        raise ConfigurationError(
            f"n_t={n_t!r}: at least two transmit antennas are required for SDMA"
        )
    return int(n_t)


def _check_unit(v: np.ndarray, name: str = "v") -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > TOL_INPUT:
        raise NormalizationError(f"{name} has norm {norm:.12g}, expected 1")
    return v


@dataclass(frozen=True)
class ChannelRealization:
    """One user's channel vector with its gain/shape split."""

    h: np.ndarray
    gain: float
    shape: np.ndarray

    @classmethod
    def from_vector(cls, h) -> "ChannelRealization":
        h = np.asarray(h, dtype=complex)
        gain = float(np.vdot(h, h).real)
        return cls(h=h, gain=gain, shape=h / np.sqrt(gain))

    @property
    def n_t(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class OrthonormalBasis:
    """``n_t`` orthonormal vectors, stored as the rows of ``vectors``."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        gram = v.conj() @ v.T
        if np.max(np.abs(gram - np.eye(v.shape[0]))) > 1e-10:
            raise NormalizationError("basis vectors are not orthonormal")
        object.__setattr__(self, "vectors", v)

    @property
    def n_t(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def __getitem__(self, i):
        return self.vectors[i]


def draw_channel_matrix(rng: np.random.Generator, n_t: int, count: int) -> np.ndarray:
    """Draw ``count`` channel vectors as a ``(count, n_t)`` complex array."""
    n_t = _check_antennas(n_t)
    re = rng.standard_normal((count, n_t))
    im = rng.standard_normal((count, n_t))
    return (re + 1j * im) * np.sqrt(0.5)


def draw_channel(rng: np.random.Generator, n_t: int) -> ChannelRealization:
    """Draw one i.i.d. CN(0, 1) channel vector of length ``n_t``."""
    return ChannelRealization.from_vector(draw_channel_matrix(rng, n_t, 1)[0])


def draw_orthonormal_basis(rng: np.random.Generator, n_t: int) -> OrthonormalBasis:
    """Draw a Haar-distributed orthonormal basis of C^n_t.

    QR of a complex Ginibre matrix, with the phases of ``diag(R)`` moved
    into ``Q`` so the factorization is unique and ``Q`` is Haar.
    """
    n_t = _check_antennas(n_t)
    z = draw_channel_matrix(rng, n_t, n_t)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    # columns of q are the basis vectors
    return OrthonormalBasis(q.T.copy())


def distortion(v1, v2) -> float:
    """Return ``1 - |v1^H v2|^2`` for unit vectors ``v1`` and ``v2``."""
    v1 = _check_unit(v1, "v1")
    v2 = _check_unit(v2, "v2")
    c = abs(np.vdot(v1, v2)) ** 2
    return float(min(1.0, max(0.0, 1.0 - c)))


def sin_angle(v1, v2) -> float:
    """Sine of the principal angle between two unit vectors."""
    return float(np.sqrt(distortion(v1, v2)))


def sin_angle_cdf(x, n_t: int):
    """CDF of ``sin(angle(shape, v))`` for an isotropic shape and fixed unit ``v``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x ** (2 * (n_t - 1))
