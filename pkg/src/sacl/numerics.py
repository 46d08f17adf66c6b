"""Numerically stable primitives shared by all modules.

Everything here is pure and reentrant: no shared mutable state, safe to
call from any number of threads. All math runs in float64; verification
tolerances elsewhere in the package assume that headroom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DegenerateInputError, ProtocolError
from .validation import as_matrix, as_vector, check_positive

#: Norms below this are treated as collapsed vectors and rejected outright
#: rather than clamped (clamping would hide encoder collapse).
NORM_FLOOR = 1e-12


def logsumexp(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted log-sum-exp along ``axis``; tolerates -inf entries."""
    z = np.asarray(z, dtype=np.float64)
    zmax = np.max(z, axis=axis, keepdims=True)
    # A row of all -inf would produce nan; the callers never build one.
    shifted = z - zmax
    out = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True)) + zmax
    return np.squeeze(out, axis=axis)


def softmax_with_temperature(logits: np.ndarray, tau: float) -> np.ndarray:
    """Temperature-scaled softmax, computed via max-subtraction.

    Output entries lie in (0, 1) and sum to 1 within 1e-12 for any finite
    input. Raising ``tau`` smooths the distribution toward uniform;
    lowering it sharpens toward one-hot on the argmax.
    """
    tau = check_positive(tau, "tau")
    z = as_vector(logits, "logits") / tau
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return p


def softmax_rows(logits: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise :func:`softmax_with_temperature` for a 2-D logit matrix."""
    tau = check_positive(tau, "tau")
    z = as_matrix(logits, "logits") / tau
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p


def l2_normalize(f: np.ndarray) -> np.ndarray:
    """Scale a vector to unit Euclidean norm, preserving direction."""
    f = as_vector(f, "f")
    norm = float(np.linalg.norm(f))
    if norm < NORM_FLOOR:
        raise DegenerateInputError(f"cannot normalize vector with norm {norm:.3e}")
    return f / norm


def l2_normalize_rows(F: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization; rejects any near-zero row."""
    F = as_matrix(F, "F")
    norms = np.linalg.norm(F, axis=1)
    if np.any(norms < NORM_FLOOR):
        bad = int(np.argmin(norms))
        raise DegenerateInputError(
            f"row {bad} has norm {norms[bad]:.3e}, below the {NORM_FLOOR} floor"
        )
    return F / norms[:, None]


def normalize_jacobian(f: np.ndarray) -> np.ndarray:
    """Jacobian of :func:`l2_normalize` at ``f``.

    Equals (I - e e^T) / ||f|| with e = f/||f||: a scaled projector onto
    the subspace orthogonal to f, so it is symmetric and annihilates f.
    """
    f = as_vector(f, "f")
    norm = float(np.linalg.norm(f))
    if norm < NORM_FLOOR:
        raise DegenerateInputError(f"cannot differentiate at norm {norm:.3e}")
    e = f / norm
    return (np.eye(f.shape[0]) - np.outer(e, e)) / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; rejects near-zero norms."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_FLOOR or nb < NORM_FLOOR:
        raise DegenerateInputError("cosine undefined for near-zero-norm input")
    return float(np.dot(a, b) / (na * nb))


def mean_and_ci95(values) -> tuple[float, float]:
    """Sample mean and 95% confidence halfwidth (1.96 * s / sqrt(n)).

    Needs at least two values; the halfwidth uses the ddof=1 sample
    standard deviation.
    """
    arr = as_vector(values, "values")
    n = arr.shape[0]
    if n < 2:
        raise ProtocolError(f"need at least 2 values for a confidence interval, got {n}")
    mean = float(arr.mean())
    halfwidth = 1.96 * float(arr.std(ddof=1)) / float(np.sqrt(n))
    return mean, halfwidth


_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream) pair naming one reproducible random stream.

    Backed by the Philox counter-based bit generator with the pair as its
    128-bit key, so any two distinct (seed, stream) pairs yield
    statistically independent streams and the same pair always replays
    the same sequence. Streams are cheap value objects; call
    :meth:`generator` for a fresh generator positioned at the start.

    Consumers partition the stream-id space with named offsets (see e.g.
    the per-episode ids in :mod:`sacl.fewshot`) so parallel work never
    shares a stream.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)):
            raise ConfigurationError(f"seed must be an integer, got {type(self.seed).__name__}")
        if not isinstance(self.stream, (int, np.integer)):
            raise ConfigurationError(f"stream must be an integer, got {type(self.stream).__name__}")
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)
        object.__setattr__(self, "stream", int(self.stream) & 0xFFFFFFFFFFFFFFFF)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, offset: int) -> "RngStream":
        """The stream ``offset`` ids after this one (mod 2^64)."""
        return RngStream(self.seed, (self.stream + int(offset)) & 0xFFFFFFFFFFFFFFFF)
