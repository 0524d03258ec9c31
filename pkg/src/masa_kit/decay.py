"""Spatial decay constructors for distance-weighted attention.

Builds the per-head decay-rate schedule, 1D causal and bidirectional decay
matrices, the 2D Manhattan-distance decay matrix over a token grid, and its
exact axial factorization (the Kronecker product of the two 1D bidirectional
matrices reproduces the 2D matrix entrywise).

All functions are pure and safe to call concurrently. Matrices come back as
constant (non-tracked) tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .tensor import Tensor


@dataclass(frozen=True)
class GridShape:
    """Token-grid geometry: flat index n maps to (x, y) = (n mod W, n div W)."""

    height: int
    width: int

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ConfigurationError(f"grid sides must be positive, got {self.height}x{self.width}")

    @property
    def size(self) -> int:
        return self.height * self.width

    def coords(self, n: int) -> tuple[int, int]:
        """(x, y) coordinates of flat token index n (row-major, y major)."""
        return n % self.width, n // self.width


@dataclass(frozen=True)
class DecaySpec:
    """Per-head decay rates derived from an exponent range (lower, upper].

    Head i of N receives rate 1 - 2**-(lower + (upper - lower) * i / N) for
    i = 1..N, so rates increase strictly with the head index and the last head
    lands exactly on 1 - 2**-upper.
    """

    lower: float
    upper: float
    num_heads: int
    gammas: tuple[float, ...]


def gamma_schedule(lower: float, upper: float, num_heads: int) -> DecaySpec:
    """Spread decay rates across heads so receptive scale grows per head."""
    if not (0.0 < lower < upper):
        raise ConfigurationError(f"need 0 < lower < upper, got lower={lower}, upper={upper}")
    if num_heads < 1:
        raise ConfigurationError(f"num_heads must be at least 1, got {num_heads}")
    exponents = [lower + (upper - lower) * i / num_heads for i in range(1, num_heads + 1)]
    exponents[-1] = upper  # keep the endpoint exact despite float rounding
    gammas = tuple(1.0 - 2.0 ** -float(e) for e in exponents)
    return DecaySpec(float(lower), float(upper), int(num_heads), gammas)


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (0.0 < gamma < 1.0):
        raise ConfigurationError(f"decay rate must lie strictly inside (0, 1), got {gamma}")
    return gamma


def decay_causal_1d(length: int, gamma: float) -> Tensor:
    """Lower-triangular decay: D[n, m] = gamma**(n - m) for n >= m, else 0."""
    gamma = _check_gamma(gamma)
    if length < 1:
        raise ConfigurationError(f"length must be positive, got {length}")
    n = np.arange(length)
    delta = n[:, None] - n[None, :]
    d = np.where(delta >= 0, gamma ** np.maximum(delta, 0), 0.0)
    return Tensor(d)


def decay_bidirectional_1d(length: int, gamma: float) -> Tensor:
    """Symmetric decay with unit diagonal: D[n, m] = gamma**|n - m|."""
    gamma = _check_gamma(gamma)
    if length < 1:
        raise ConfigurationError(f"length must be positive, got {length}")
    n = np.arange(length)
    return Tensor(gamma ** np.abs(n[:, None] - n[None, :]))


def decay_manhattan_2d(grid: GridShape, gamma: float) -> Tensor:
    """Decay by Manhattan distance between token-grid coordinates.

    D[n, m] = gamma**(|x_n - x_m| + |y_n - y_m|) under the row-major index map.
    """
    gamma = _check_gamma(gamma)
    n = np.arange(grid.size)
    x = n % grid.width
    y = n // grid.width
    dist = np.abs(x[:, None] - x[None, :]) + np.abs(y[:, None] - y[None, :])
    return Tensor(gamma ** dist)


def decay_axial_pair(grid: GridShape, gamma: float) -> tuple[Tensor, Tensor]:
    """1D decay matrices for the height and width axes of a grid.

    Their Kronecker product (height factor first) equals the full Manhattan
    matrix, so splitting attention per axis keeps the same spatial prior.
    """
    return (decay_bidirectional_1d(grid.height, gamma),
            decay_bidirectional_1d(grid.width, gamma))
