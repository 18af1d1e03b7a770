"""Random Fourier feature map linearizing the exponential (softmax) kernel.

The map is

    phi(x) = e^{|x|^2/2} / sqrt(D) * (sin(u_1.x), .., sin(u_{D/2}.x),
                                      cos(u_1.x), .., cos(u_{D/2}.x))

with u_i drawn once from N(0, sigma^2 I).  Its inner products estimate the
exponential kernel: E[2 phi(x).phi(y)] = e^{x.y} for sigma = 1, and the
estimate is exact whenever x = y (sin^2 + cos^2 identity).  Attention outputs
normalized by c = (1' phi(K)' phi(q))^{-1} are invariant to any constant
rescaling of phi, so the 1/sqrt(D) convention is kept verbatim and the x2
correction appears only in :func:`exp_estimate`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimension, InvalidParameter, OverflowGuard
from .rng import stream

# e^{|x|^2/2} overflows well before this; reject instead of emitting inf.
MAX_SQ_NORM = 500.0


@dataclass(frozen=True)
class FourierFeatureMap:
    """Frozen random frequencies realizing phi. Immutable and pure."""

    input_dim: int
    feature_dim: int
    sigma: float
    seed: int
    frequencies: np.ndarray  # (feature_dim // 2, input_dim)

    def __post_init__(self):
        self.frequencies.setflags(write=False)


def sample_feature_map(
    input_dim: int, feature_dim: int = 128, sigma: float = 1.0, seed: int = 0
) -> FourierFeatureMap:
    """Draw the frequency matrix; a pure function of the four parameters."""
    if input_dim < 1:
        raise InvalidDimension(f"input_dim must be >= 1, got {input_dim}")
    if feature_dim < 2 or feature_dim % 2 != 0:
        raise InvalidDimension(f"feature_dim must be even and >= 2, got {feature_dim}")
    if sigma <= 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    rng = stream(seed, f"rff/{input_dim}/{feature_dim}/{sigma!r}")
    freqs = rng.normal(0.0, sigma, size=(feature_dim // 2, input_dim))
    return FourierFeatureMap(input_dim, feature_dim, float(sigma), seed, freqs)


def _check_input(fmap: FourierFeatureMap, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != fmap.input_dim:
        raise InvalidDimension(
            f"expected leading dimension {fmap.input_dim}, got {x.shape[0]}"
        )
    sq = np.sum(x * x, axis=0)
    if np.any(sq > MAX_SQ_NORM):
        raise OverflowGuard(f"squared norm {np.max(sq):.1f} exceeds {MAX_SQ_NORM}")
    return x


def phi(fmap: FourierFeatureMap, x: np.ndarray) -> np.ndarray:
    """Feature map for a single vector, shape (input_dim,) -> (feature_dim,)."""
    x = _check_input(fmap, x)
    if x.ndim != 1:
        raise InvalidDimension("phi expects a vector; use phi_matrix for batches")
    proj = fmap.frequencies @ x
    scale = np.exp(0.5 * float(x @ x)) / np.sqrt(fmap.feature_dim)
    return scale * np.concatenate([np.sin(proj), np.cos(proj)])


def phi_matrix(fmap: FourierFeatureMap, xs: np.ndarray) -> np.ndarray:
    """Column-wise feature map, shape (input_dim, n) -> (feature_dim, n)."""
    xs = _check_input(fmap, xs)
    if xs.ndim != 2:
        raise InvalidDimension("phi_matrix expects a (input_dim, n) array")
    proj = fmap.frequencies @ xs
    scale = np.exp(0.5 * np.sum(xs * xs, axis=0)) / np.sqrt(fmap.feature_dim)
    return scale[None, :] * np.vstack([np.sin(proj), np.cos(proj)])


def exp_estimate(fmap: FourierFeatureMap, x: np.ndarray, y: np.ndarray) -> float:
    """Estimator of e^{x.y}; exact when x = y, unbiased over seeds otherwise."""
    return 2.0 * float(phi(fmap, x) @ phi(fmap, y))
