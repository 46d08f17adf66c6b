"""Small fully-connected encoder with hand-written forward/backward.

Hidden layers use the rectifier, the output layer is linear, and weights
start from scaled Gaussians (stddev sqrt(2/fan_in)) with zero biases.
Forward returns a cache tied to the parameter version; backward refuses
stale caches so gradients can never silently mix parameter states.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, ProtocolError, ShapeError
from .numerics import RngStream
from .validation import as_matrix

_MAGIC = b"SACLENC1"


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    version: int


@dataclass
class MlpEncoder:
    """weights[l] has shape (fan_in, fan_out); relu on all but the last layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    version: int = 0

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ConfigurationError("need matching, nonempty weight and bias lists")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ShapeError(f"layer {l}: weight {W.shape} and bias {b.shape} mismatch")
            if l > 0 and self.weights[l - 1].shape[1] != W.shape[0]:
                raise ShapeError(
                    f"layer {l - 1} outputs {self.weights[l - 1].shape[1]}, "
                    f"layer {l} expects {W.shape[0]}"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ConfigurationError(f"layer {l} has non-finite parameters")

    @classmethod
    def initialize(
        cls, input_dim: int, hidden_dims, output_dim: int, rng: RngStream
    ) -> "MlpEncoder":
        dims = [int(input_dim), *[int(h) for h in hidden_dims], int(output_dim)]
        if any(d < 1 for d in dims):
            raise ConfigurationError(f"all layer widths must be >= 1, got {dims}")
        gen = rng.generator()
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = np.sqrt(2.0 / fan_in)
            weights.append(gen.normal(0.0, scale, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, X) -> tuple[ForwardCache, np.ndarray]:
        X = as_matrix(X, "X")
        if X.shape[1] != self.input_dim:
            raise ShapeError(f"expected {self.input_dim} input features, got {X.shape[1]}")
        pre, act = [], []
        h = X
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append(z)
            h = z if l == last else np.maximum(z, 0.0)
            act.append(h)
        return ForwardCache(inputs=X, pre_activations=pre, activations=act, version=self.version), h

    def backward(self, cache: ForwardCache, d_out) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a scalar loss w.r.t. all weights and biases, given
        the loss gradient with respect to the forward output."""
        if cache.version != self.version:
            raise ProtocolError(
                f"stale forward cache (version {cache.version}, parameters at {self.version})"
            )
        d_out = as_matrix(d_out, "d_out")
        if d_out.shape != cache.activations[-1].shape:
            raise ShapeError(
                f"upstream gradient {d_out.shape} does not match output "
                f"{cache.activations[-1].shape}"
            )
        grads_w = [np.empty(0)] * len(self.weights)
        grads_b = [np.empty(0)] * len(self.biases)
        delta = d_out
        for l in range(len(self.weights) - 1, -1, -1):
            if l != len(self.weights) - 1:
                delta = delta * (cache.pre_activations[l] > 0.0)
            upstream = cache.inputs if l == 0 else cache.activations[l - 1]
            grads_w[l] = upstream.T @ delta
            grads_b[l] = delta.sum(axis=0)
            if l > 0:
                delta = delta @ self.weights[l].T
        return grads_w, grads_b

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def set_parameters(self, params: list[np.ndarray]) -> None:
        n = len(self.weights)
        if len(params) != 2 * n:
            raise ShapeError(f"expected {2 * n} parameter arrays, got {len(params)}")
        for l in range(n):
            if params[l].shape != self.weights[l].shape or params[n + l].shape != self.biases[l].shape:
                raise ShapeError(f"layer {l}: parameter shape changed")
        self.weights = [p.copy() for p in params[:n]]
        self.biases = [p.copy() for p in params[n:]]
        self.version += 1

    def embed(self, X) -> np.ndarray:
        """Unit-normalized encoder output (the embedding used everywhere)."""
        from .numerics import l2_normalize_rows

        _, features = self.forward(X)
        return l2_normalize_rows(features)

    def save(self, path) -> None:
        """Flat binary: magic, u32 layer count, then per layer u32 rows,
        u32 cols, row-major f64 weights, f64 biases (little-endian)."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(self.weights)))
            for W, b in zip(self.weights, self.biases):
                fh.write(struct.pack("<II", W.shape[0], W.shape[1]))
                fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "MlpEncoder":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != _MAGIC:
            raise ConfigurationError(f"{path} is not an encoder checkpoint")
        (layer_count,) = struct.unpack_from("<I", blob, 8)
        offset = 12
        weights, biases = [], []
        for _ in range(layer_count):
            rows, cols = struct.unpack_from("<II", blob, offset)
            offset += 8
            W = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset)
            offset += 8 * rows * cols
            b = np.frombuffer(blob, dtype="<f8", count=cols, offset=offset)
            offset += 8 * cols
            weights.append(W.reshape(rows, cols).copy())
            biases.append(b.copy())
        if offset != len(blob):
            raise ConfigurationError(f"{path}: {len(blob) - offset} trailing bytes")
        return cls(weights=weights, biases=biases)
