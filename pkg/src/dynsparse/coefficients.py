"""Coefficient matrix with box bounds and an activity mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import Dictionary


@dataclass
class CoefficientMatrix:
    """Coefficients laid out like ``Dictionary.mask()``: row ``k`` of column
    ``j`` belongs to ``dictionary.per_state[j][k]``.

    Inactive entries are held at zero; their bounds are NaN.
    """

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    active_mask: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        self.lower = np.array(self.lower, dtype=float)
        self.upper = np.array(self.upper, dtype=float)
        self.active_mask = np.array(self.active_mask, dtype=bool)
        shapes = {a.shape for a in (self.values, self.lower, self.upper, self.active_mask)}
        if len(shapes) != 1:
            raise ValueError("values, bounds and mask must share a shape")
        self.values[~self.active_mask] = 0.0
        self.lower[~self.active_mask] = np.nan
        self.upper[~self.active_mask] = np.nan

    @classmethod
    def unbounded(cls, values, active_mask=None) -> CoefficientMatrix:
        values = np.asarray(values, dtype=float)
        if active_mask is None:
            active_mask = np.ones(values.shape, dtype=bool)
        return cls(values, np.full(values.shape, -np.inf), np.full(values.shape, np.inf), active_mask)

    @classmethod
    def zeros(cls, d: Dictionary) -> CoefficientMatrix:
        shape = (d.n_max, d.n_x)
        return cls.unbounded(np.zeros(shape), d.mask())

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_active(self) -> int:
        return int(self.active_mask.sum())

    def active_values(self) -> np.ndarray:
        """Active entries in column-major (state-by-state) order."""
        return self.values.T[self.active_mask.T]

    def active_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower.T[self.active_mask.T], self.upper.T[self.active_mask.T]

    def with_active_values(self, vec: np.ndarray) -> CoefficientMatrix:
        vals = np.zeros_like(self.values).T
        vals[self.active_mask.T] = vec
        return CoefficientMatrix(vals.T, self.lower, self.upper, self.active_mask)

    def clipped(self) -> CoefficientMatrix:
        vals = self.values.copy()
        m = self.active_mask
        vals[m] = np.clip(vals[m], self.lower[m], self.upper[m])
        return CoefficientMatrix(vals, self.lower, self.upper, m)

    def within_bounds(self, atol: float = 0.0) -> bool:
        m = self.active_mask
        v = self.values[m]
        return bool(np.all(v >= self.lower[m] - atol) and np.all(v <= self.upper[m] + atol))
