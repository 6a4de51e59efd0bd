"""Reference regression functions for simulations.

The catalog holds the product and sin/cos interaction functions in three,
five and seven variables (covariates uniform on (1, 2)) plus the bivariate
four-exponential bump surface used for the grid experiment (covariates on
(0, 1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError


@dataclass(frozen=True)
class TestFunction:
    """A named regression function with its covariate dimension and domain."""

    name: str
    d: int
    fn: callable
    domain: tuple[float, float]

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise InputError(
                f"{self.name} expects d={self.d}, got {X.shape[1]} columns"
            )
        return self.fn(X)


def wendelberger(x, y):
    """Four-exponential bump surface on the unit square.

    The second exponential is evaluated with a positive (9y+1)^2/10 term,
    matching the printed form of the formula this package reproduces.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (
        0.75 * np.exp(-((9 * x - 2) ** 2 + (9 * y - 2) ** 2) / 4.0)
        + 0.75 * np.exp(-((9 * x + 1) ** 2) / 49.0 + ((9 * y + 1) ** 2) / 10.0)
        + 0.5 * np.exp(-((9 * x - 7) ** 2 + (9 * y - 3) ** 2) / 4.0)
        - 0.2 * np.exp(-((9 * x - 4) ** 2) - (9 * y - 7) ** 2)
    )


def _product(X):
    return np.prod(X, axis=1)


def _sincos(X, left, right):
    p = len(left)
    a = np.prod(X[:, left], axis=1) ** (1.0 / p)
    b = np.prod(X[:, right], axis=1) ** (1.0 / p)
    return np.sin(2 * np.pi * a) + np.cos(2 * np.pi * b)


CATALOG = {
    "product3": TestFunction("product3", 3, _product, (1.0, 2.0)),
    "sincos3": TestFunction(
        "sincos3", 3, lambda X: _sincos(X, [0, 1], [1, 2]), (1.0, 2.0)
    ),
    "product5": TestFunction("product5", 5, _product, (1.0, 2.0)),
    "sincos5": TestFunction(
        "sincos5", 5, lambda X: _sincos(X, [0, 1, 2], [2, 3, 4]), (1.0, 2.0)
    ),
    "product7": TestFunction("product7", 7, _product, (1.0, 2.0)),
    "sincos7": TestFunction(
        "sincos7", 7, lambda X: _sincos(X, [0, 1, 2, 3], [3, 4, 5, 6]), (1.0, 2.0)
    ),
    "wendelberger": TestFunction(
        "wendelberger", 2, lambda X: wendelberger(X[:, 0], X[:, 1]), (0.0, 1.0)
    ),
}


def sim_function(name: str) -> TestFunction:
    """Look up a catalog function by name."""
    try:
        return CATALOG[name]
    except KeyError:
        raise InputError(
            f"unknown function {name!r}; choose from {sorted(CATALOG)}"
        ) from None


def wendelberger_grid(points_per_side: int = 10) -> np.ndarray:
    """The regular evaluation grid {0.05, 0.15, ..., 0.95}^2 (row-major)."""
    ticks = (np.arange(points_per_side) + 0.5) / points_per_side
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])
