"""Positive-definiteness diagnostics for kernel smoothers.

A kernel family is safe for the bias-reduction iteration exactly when its
Gram matrices are positive semidefinite.  This module certifies the
eigenvalue range of a built smoother and, for the uniform and epanechnikov
families, hunts for the explicit 3x3 principal minors with negative
determinant that witness indefiniteness: three points of which two are
neighbors of the third but (uniform) not of each other, or (epanechnikov)
three mutual neighbors whose far pair is not the closest pair.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import InputError
from .kernels import KernelSmoother, kernel_function, scaled_distances, validate_bandwidths

EIG_SIGN_TOL = 1e-8
# relative guard so rounding noise in an exactly singular minor is not
# mistaken for a witness
_DET_GUARD = 1e-12
TRIPLE_SCAN_CAP = 1_000_000

NON_PD_FAMILIES = frozenset({"uniform", "epanechnikov"})


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalue range of A = D^{1/2} K D^{1/2} and a PSD verdict."""

    family: str
    n: int
    min_eig: float
    max_eig: float
    verdict: str
    witness: tuple | None = None
    witness_det: float | None = None

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "min_eig": self.min_eig,
            "max_eig": self.max_eig,
            "verdict": self.verdict,
            "witness": list(self.witness) if self.witness is not None else None,
            "witness_det": self.witness_det,
        }


def _as_design(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.X
    return np.atleast_2d(np.asarray(data, dtype=float))


def _minor_det(a, x, y, z):
    """det of [[a, x, z], [x, a, y], [z, y, a]], expanded along the top row."""
    return a * (a * a - y * y) - x * (x * a - y * z) + z * (x * y - a * z)


def minor3_det(data, family: str, h, idx) -> float:
    """Determinant of the 3x3 principal Gram submatrix at rows/columns idx."""
    X = _as_design(data)
    h = validate_bandwidths(h, X.shape[1])
    i1, i2, i3 = (int(i) for i in idx)
    if len({i1, i2, i3}) != 3:
        raise InputError(f"indices must be distinct, got {idx}")
    for i in (i1, i2, i3):
        if not 0 <= i < X.shape[0]:
            raise InputError(f"index {i} out of range for n={X.shape[0]}")
    func = kernel_function(family)
    D = scaled_distances(X[[i1, i2, i3]], X[[i1, i2, i3]], h)
    a = float(func(0.0))
    x = float(func(D[0, 1]))
    y = float(func(D[1, 2]))
    z = float(func(D[0, 2]))
    return float(_minor_det(a, x, y, z))


def _candidate_triples(n: int, cap: int) -> np.ndarray:
    total = n * (n - 1) * (n - 2) // 6
    if total <= cap:
        return np.array(list(itertools.combinations(range(n), 3)), dtype=int)
    # sampled fallback, still scanned in lexicographic order for determinism
    rng = np.random.default_rng(0)
    picks = rng.choice(n, size=(cap, 3))
    picks = picks[
        (picks[:, 0] < picks[:, 1]) & (picks[:, 1] < picks[:, 2])
    ]
    picks = np.unique(picks, axis=0)
    return picks


def find_negative_triple(data, family: str, h, cap: int = TRIPLE_SCAN_CAP):
    """First index triple (lexicographic) whose Gram minor is negative.

    Scans only triples satisfying the geometric neighborhood condition of
    the family; returns None when no scanned triple has a negative minor.
    """
    if family not in NON_PD_FAMILIES:
        raise InputError(
            f"witness search applies to {sorted(NON_PD_FAMILIES)}, not {family!r}"
        )
    X = _as_design(data)
    n = X.shape[0]
    if n < 3:
        return None
    h = validate_bandwidths(h, X.shape[1])
    D = scaled_distances(X, X, h)
    triples = _candidate_triples(n, cap)
    if triples.size == 0:
        return None
    i, j, k = triples.T
    dij, dik, djk = D[i, j], D[i, k], D[j, k]
    if family == "uniform":
        cond = (
            ((dij < 1) & (djk < 1) & (dik > 1))
            | ((dij < 1) & (dik < 1) & (djk > 1))
            | ((dik < 1) & (djk < 1) & (dij > 1))
        )
    else:
        within = (dij < 1) & (dik < 1) & (djk < 1)
        cond = within & (
            (dik > np.minimum(dij, djk))
            | (djk > np.minimum(dij, dik))
            | (dij > np.minimum(dik, djk))
        )
    if not np.any(cond):
        return None
    func = kernel_function(family)
    a = float(func(0.0))
    x = func(dij[cond])
    y = func(djk[cond])
    z = func(dik[cond])
    dets = _minor_det(a, x, y, z)
    hits = dets < -_DET_GUARD * a**3
    if not np.any(hits):
        return None
    first = int(np.argmax(hits))
    return tuple(int(v) for v in triples[cond][first])


def spectrum_report(sm: KernelSmoother, search_witness: bool = False) -> SpectrumReport:
    """Eigenvalue-range certificate for a built kernel smoother.

    With `search_witness`, non-positive-definite families additionally get
    the first negative 3x3 minor attached as an explicit witness.
    """
    min_eig = float(sm.lambdas.min())
    max_eig = float(sm.lambdas.max())
    witness = None
    witness_det = None
    if search_witness and sm.family in NON_PD_FAMILIES:
        witness = find_negative_triple(sm.X, sm.family, sm.h)
        if witness is not None:
            witness_det = minor3_det(sm.X, sm.family, sm.h, witness)
    negative = min_eig < -EIG_SIGN_TOL or (witness_det is not None and witness_det < 0)
    return SpectrumReport(
        family=sm.family,
        n=sm.n,
        min_eig=min_eig,
        max_eig=max_eig,
        verdict="negative-found" if negative else "certified-nonneg",
        witness=witness,
        witness_det=witness_det,
    )
