"""
Spatial and age meshes.

Space is the interior of (0, 1) with homogeneous Dirichlet data, age is
[0, a_m] with trapezoid weights. Fields are plain numpy arrays:

    SpatialField  shape (n_x,)           interior node values
    AgeField      shape (n_a + 1, n_x)   row k is the spatial field at age a_k

Batched variants carry trailing trajectory axes, e.g. (n_x, m) and
(n_a + 1, n_x, m).
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from apps.common.exceptions import ConfigurationError, InvalidBirthProfileError

SpatialField = NDArray[np.float64]
AgeField = NDArray[np.float64]


@dataclass(frozen=True)
class SpatialGrid:
    n_x: int

    def __post_init__(self):
        if self.n_x < 3:
            raise ConfigurationError(f"n_x must be >= 3, got {self.n_x}")

    @property
    def h_x(self) -> float:
        return 1.0 / (self.n_x + 1)

    @cached_property
    def nodes(self) -> NDArray[np.float64]:
        # i / (n_x + 1) keeps h_x * (n_x + 1) == 1 exact at the node level
        return np.arange(1, self.n_x + 1, dtype=float) / (self.n_x + 1)


@dataclass(frozen=True)
class AgeGrid:
    n_a: int
    a_m: float = 1.0

    def __post_init__(self):
        if self.n_a < 1:
            raise ConfigurationError(f"n_a must be >= 1, got {self.n_a}")
        if not self.a_m > 0:
            raise ConfigurationError(f"a_m must be > 0, got {self.a_m}")

    @property
    def da(self) -> float:
        return self.a_m / self.n_a

    @cached_property
    def nodes(self) -> NDArray[np.float64]:
        return np.arange(self.n_a + 1, dtype=float) * self.da

    @cached_property
    def weights(self) -> NDArray[np.float64]:
        """Trapezoid weights; they sum to a_m."""
        w = np.full(self.n_a + 1, self.da)
        w[0] = w[-1] = self.da / 2.0
        return w


@dataclass(frozen=True, eq=False)
class BirthProfile:
    """
    Birth intensity samples b_k at the age nodes.

    `scale` is the normalization constant c already applied to the raw
    shape (1.0 for an unnormalized profile).
    """

    values: NDArray[np.float64] = field(repr=False)
    scale: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise InvalidBirthProfileError("birth profile must be one-dimensional")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidBirthProfileError("birth profile must be finite and nonnegative")
        if not np.any(values > 0):
            raise InvalidBirthProfileError("birth profile is identically zero")
        n_a = values.size - 1
        tail = values[n_a - n_a // 4:]
        if values[-1] <= 0 or np.any(tail <= 0):
            raise InvalidBirthProfileError(
                "birth profile must be positive on the final quarter of the age grid "
                "(including a_m)"
            )
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def scaled(self, factor: float) -> 'BirthProfile':
        return BirthProfile(self.values * factor, self.scale * factor)

    @classmethod
    def constant(cls, ages: AgeGrid, level: float = 1.0) -> 'BirthProfile':
        return cls(np.full(ages.n_a + 1, float(level)))

    @classmethod
    def ramp(cls, ages: AgeGrid, level: float = 1.0) -> 'BirthProfile':
        """b(a) = level * a / a_m, zero at birth, positive near a_m."""
        return cls(level * ages.nodes / ages.a_m)

    @classmethod
    def from_samples(cls, ages: AgeGrid, sample_ages, sample_values, level: float = 1.0) -> 'BirthProfile':
        """Linear interpolation of (age, value) samples onto the age nodes."""
        sample_ages = np.asarray(sample_ages, dtype=float)
        sample_values = np.asarray(sample_values, dtype=float)
        if sample_ages.size < 2 or sample_ages.shape != sample_values.shape:
            raise InvalidBirthProfileError("custom birth samples need matching age/value columns (>= 2 rows)")
        order = np.argsort(sample_ages, kind='stable')
        return cls(level * np.interp(ages.nodes, sample_ages[order], sample_values[order]))
