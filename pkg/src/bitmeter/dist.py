"""Finite discrete distributions, joints, and Shannon entropy in bits."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

__all__ = [
    "MASS_TOLERANCE",
    "DiscreteDistribution",
    "JointDistribution",
    "entropy",
    "entropy_of_pmf",
    "binary_entropy",
    "product",
    "marginals",
]

MASS_TOLERANCE = 1e-12


def _as_support(support):
    if isinstance(support, np.ndarray):
        arr = support
    else:
        items = list(support)
        if items and isinstance(items[0], tuple):
            arr = np.empty(len(items), dtype=object)
            arr[:] = items
        else:
            arr = np.asarray(items)
            if arr.ndim != 1:
                arr = np.empty(len(items), dtype=object)
                arr[:] = items
    if arr.ndim != 1:
        raise ValidationError("support must be one-dimensional")
    return arr


def _check_mass(p, what):
    if p.size == 0:
        raise ValidationError(f"{what}: empty")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValidationError(f"{what}: probabilities must be finite and non-negative")
    total = math.fsum(p.ravel().tolist())
    if abs(total - 1.0) > MASS_TOLERANCE:
        raise ValidationError(f"{what}: total mass {total!r} differs from 1 by more than {MASS_TOLERANCE}")
    return p / total


def entropy_of_pmf(p):
    """``-sum p log2 p`` over the positive entries, with compensated summation."""
    p = np.asarray(p, dtype=np.float64).ravel()
    p = p[p > 0]
    return max(0.0, math.fsum((-p * np.log2(p)).tolist()))


def binary_entropy(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


class DiscreteDistribution:
    """Probability mass function over an ordered, duplicate-free support.

    The pmf is renormalized on construction when its mass is within
    ``MASS_TOLERANCE`` of one; otherwise construction fails.
    """

    def __init__(self, support, pmf):
        self.support = _as_support(support)
        pmf = np.array(pmf, dtype=np.float64)
        if pmf.shape != self.support.shape:
            raise ValidationError(f"pmf has shape {pmf.shape}, support has {self.support.shape}")
        self.pmf = _check_mass(pmf, "distribution")
        self.pmf.flags.writeable = False
        if self.support.dtype == object:
            unique = len(set(self.support.tolist()))
        else:
            unique = np.unique(self.support).size
        if unique != self.support.size:
            raise ValidationError("support entries must be unique")

    @classmethod
    def uniform(cls, support):
        support = _as_support(support)
        return cls(support, np.full(support.size, 1.0 / support.size))

    @classmethod
    def constant(cls, support, outcome):
        support = _as_support(support)
        pmf = np.zeros(support.size)
        hits = [i for i, s in enumerate(support.tolist()) if s == outcome]
        if not hits:
            raise ValidationError(f"{outcome!r} is not in the support")
        pmf[hits[0]] = 1.0
        return cls(support, pmf)

    @classmethod
    def from_counts(cls, counts):
        """Build from a mapping ``outcome -> non-negative count``."""
        items = list(counts.items())
        total = math.fsum(c for _, c in items)
        if total <= 0:
            raise ValidationError("counts must have positive total")
        return cls([k for k, _ in items], [c / total for _, c in items])

    def __len__(self):
        return self.support.size

    def __repr__(self):
        return f"DiscreteDistribution(size={len(self)}, H={entropy(self):.4f} bits)"

    def probability(self, outcome):
        for s, p in zip(self.support.tolist(), self.pmf.tolist()):
            if s == outcome:
                return p
        return 0.0

    def as_dict(self):
        return dict(zip(self.support.tolist(), self.pmf.tolist()))

    def same_support(self, other_support):
        other = _as_support(other_support)
        return other.shape == self.support.shape and bool(np.all(other == self.support))


def entropy(d):
    """Shannon entropy in bits; ``0 log 0`` is taken as 0."""
    if not isinstance(d, DiscreteDistribution):
        raise ValidationError("entropy expects a DiscreteDistribution")
    return entropy_of_pmf(d.pmf)


def product(d1, d2):
    """Joint distribution of two independent variables, over pairs ``(x1, x2)``."""
    pairs = np.empty(len(d1) * len(d2), dtype=object)
    pairs[:] = [(a, b) for a in d1.support.tolist() for b in d2.support.tolist()]
    return DiscreteDistribution(pairs, np.outer(d1.pmf, d2.pmf).ravel())


class JointDistribution:
    """Joint pmf ``p(x, y)`` with rows indexed by X outcomes and columns by Y outcomes.

    ``matrix`` may be a dense array or a scipy sparse matrix; deterministic
    channels over large input spaces produce sparse joints.
    """

    def __init__(self, row_support, col_support, matrix):
        self.row_support = _as_support(row_support)
        self.col_support = _as_support(col_support)
        if sp.issparse(matrix):
            matrix = sp.csr_array(matrix, dtype=np.float64)
            values = matrix.data
        else:
            matrix = np.array(matrix, dtype=np.float64)
            values = matrix
        if matrix.shape != (self.row_support.size, self.col_support.size):
            raise ValidationError(
                f"joint has shape {matrix.shape}, supports are {self.row_support.size}x{self.col_support.size}"
            )
        _check_mass(values, "joint distribution")
        total = math.fsum(values.ravel().tolist())
        self.matrix = matrix / total

    @property
    def is_sparse(self):
        return sp.issparse(self.matrix)

    def nonzero_values(self):
        if self.is_sparse:
            return self.matrix.data
        return self.matrix.ravel()

    def row_mass(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def col_mass(self):
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def to_dense(self):
        return self.matrix.toarray() if self.is_sparse else self.matrix


def marginals(j):
    """Row (X) and column (Y) marginal distributions of a joint."""
    px = DiscreteDistribution(j.row_support, j.row_mass())
    py = DiscreteDistribution(j.col_support, j.col_mass())
    return px, py
