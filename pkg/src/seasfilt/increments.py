"""Multi-seasonal difference operators and periodic blocking.

The central object is the product operator ``prod_i (1 - B**(mu_i*s_i))**d_i``
acting on a time series through the backward shift ``B``.  Expanding the
product gives an integer coefficient polynomial; applying it to a sequence
produces the increment sequence that the filtering machinery works with.
Blocking utilities map a scalar sequence with period ``T`` onto a
``T``-dimensional vector sequence and lift functional weights accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

# Largest coefficient magnitude accepted so downstream int64/float conversion
# stays exact.
_COEFF_LIMIT = 2**62


def _as_positive_ints(values, name):
    out = tuple(int(v) for v in values)
    if len(out) == 0:
        raise ValueError(f"{name} must contain at least one entry")
    if any(v <= 0 for v in out):
        raise ValueError(f"all entries of {name} must be strictly positive, got {out}")
    if any(int(v) != v for v in values):
        raise ValueError(f"{name} entries must be integers, got {values}")
    return out


@dataclass(frozen=True)
class IncrementSpec:
    """Differencing scheme with ``r`` seasonal patterns and period ``T``.

    Parameters
    ----------
    mu : sequence of int
        Step of each pattern (strictly positive).
    s : sequence of int
        Season length of each pattern.
    d : sequence of int
        Differencing order of each pattern.
    T : int
        Period of the underlying scalar sequence; ``T=1`` for plain vector
        sequences.
    """

    mu: tuple
    s: tuple
    d: tuple
    T: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_positive_ints(self.mu, "mu"))
        object.__setattr__(self, "s", _as_positive_ints(self.s, "s"))
        object.__setattr__(self, "d", _as_positive_ints(self.d, "d"))
        if not (len(self.mu) == len(self.s) == len(self.d)):
            raise ValueError("mu, s and d must have equal lengths")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"period T must be a positive integer, got {self.T}")
        object.__setattr__(self, "T", int(self.T))

    @property
    def r(self):
        """Number of seasonal patterns."""
        return len(self.mu)

    @property
    def n_gamma(self):
        """Degree of the expanded operator, ``sum(mu_i * s_i * d_i)``."""
        return sum(m * s * d for m, s, d in zip(self.mu, self.s, self.d))

    @property
    def total_order(self):
        """Total differencing order ``sum(d_i)``."""
        return sum(self.d)


@dataclass(frozen=True)
class IncrementPolynomial:
    """Expanded operator coefficients ``e(0..n_gamma)`` as exact integers."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(int(c) for c in self.coeffs))

    def __len__(self):
        return len(self.coeffs)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def as_array(self):
        return np.array(self.coeffs, dtype=float)


def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return out


def expand_increment_operator(spec):
    """Expand ``prod_i (1 - B**(mu_i*s_i))**d_i`` into shift coefficients.

    Patterns are accumulated left to right so the output is reproducible.
    Coefficients are exact integers; the expansion is rejected if any
    coefficient would exceed the int64-safe range.
    """
    coeffs = [1]
    for mu, s, d in zip(spec.mu, spec.s, spec.d):
        step = mu * s
        factor = [0] * (step * d + 1)
        for l in range(d + 1):
            factor[step * l] = (-1) ** l * comb(d, l)
        coeffs = _poly_mul(coeffs, factor)
    peak = max(abs(c) for c in coeffs)
    if peak >= _COEFF_LIMIT:
        raise OverflowError(
            f"operator coefficients reach {peak}, beyond the exact limit {_COEFF_LIMIT};"
            " reduce the differencing orders d"
        )
    assert len(coeffs) == spec.n_gamma + 1
    return IncrementPolynomial(tuple(coeffs))


def apply_increment(series, spec):
    """Apply the expanded difference operator along the time axis.

    Parameters
    ----------
    series : ndarray
        Shape ``(n,)`` or ``(n, T)``; axis 0 is time, increasing.
    spec : IncrementSpec

    Returns
    -------
    ndarray
        The increment values for the ``n - n_gamma`` indices with full
        history, aligned so entry ``j`` is the increment at input index
        ``j + n_gamma``.
    """
    x = np.asarray(series)
    e = expand_increment_operator(spec).coeffs
    ng = spec.n_gamma
    n = x.shape[0]
    if n <= ng:
        raise ValueError(
            f"series of length {n} is too short: the operator needs {ng} lags, "
            f"so the first computable index is m={ng}"
        )
    out = np.zeros((n - ng,) + x.shape[1:], dtype=np.result_type(x, float))
    for k, ek in enumerate(e):
        if ek:
            out += ek * x[ng - k : n - k]
    return out


def block_sequence(series, T):
    """Reshape a scalar sequence into a ``T``-dimensional vector sequence.

    Component ``p`` of block ``m`` is ``series[m*T + p]`` (zero-based).
    """
    x = np.asarray(series)
    if T < 1:
        raise ValueError("period T must be >= 1")
    if x.ndim != 1:
        raise ValueError("block_sequence expects a one-dimensional series")
    if x.shape[0] % T:
        raise ValueError(f"series length {x.shape[0]} is not a multiple of T={T}")
    return x.reshape(-1, T)


def unblock_sequence(blocks):
    """Inverse of :func:`block_sequence`."""
    x = np.asarray(blocks)
    if x.ndim != 2:
        raise ValueError("unblock_sequence expects a (m, T) array")
    return x.reshape(-1)


def lift_functional(weights, T):
    """Lift scalar functional weights onto the blocked vector sequence.

    With ``M = len(weights) - 1`` and ``N = M // T``, component ``p`` of the
    lifted weight at block ``m`` is ``weights[m*T + p]`` when ``m*T + p <= M``
    and zero for the padding positions of the last block.
    """
    w = np.asarray(weights)
    if w.ndim != 1 or w.shape[0] == 0:
        raise ValueError("weights must be a non-empty one-dimensional array")
    M = w.shape[0] - 1
    N = M // T
    out = np.zeros((N + 1, T), dtype=np.result_type(w, float))
    for m in range(N + 1):
        for p in range(T):
            k = m * T + p
            if k <= M:
                out[m, p] = w[k]
    return out
