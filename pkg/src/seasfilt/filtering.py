"""Optimal filter: spectral characteristic and mean-square error.

Given densities ``f`` (signal increment measure) and ``g`` (stationary noise),
the estimate of ``sum_k a(k)' xi(-k)`` from noisy past observations is fully
described by a frequency-domain weight ``h`` and the error ``Delta``.  Both
are assembled here from the canonical factor of the observed-increment
density, its causal inverse (the whitening series), and the noise factor.

All component indices are zero-based, ``p = 0..T-1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SeasfiltError
from .factorization import (
    CausalMatrixSeries,
    covariances_from_factor,
    factorize,
    invert_factor,
    weighted_observed_factor,
)
from .grids import evaluate_coefficients, transfer_grid
from .increments import expand_increment_operator, lift_functional

NEGATIVE_DELTA_TOL = 1e-9


def derive_a_minus(a, e_gamma):
    """Fold functional weights through the difference operator.

    ``a_minus(m) = sum_{l=max(m,0)}^{min(m+n, N)} e(l-m) a(l)`` for
    ``m = -n .. N`` where ``n`` is the operator degree.  Returns the array
    indexed from ``m = -n`` upward.
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    e = np.asarray(e_gamma, dtype=float)
    n = len(e) - 1
    N = a.shape[0] - 1
    out = np.zeros((N + n + 1, a.shape[1]), dtype=complex)
    for idx in range(out.shape[0]):
        m = idx - n
        lo, hi = max(m, 0), min(m + n, N)
        for l in range(lo, hi + 1):
            out[idx] += e[l - m] * a[l]
    return out


@dataclass
class FunctionalCoefficients:
    """Target weights ``a(0..N)`` and the folded companion vectors.

    ``a_minus`` covers ``m = -n .. N``; ``a_mu(k) = a_minus(k - n)`` re-indexes
    it causally; ``b_minus(k)`` holds the negative-index part with
    ``b_minus(0) = 0`` and ``b_minus(k) = a_minus(-k)`` for ``1 <= k <= n``.
    """

    a: np.ndarray
    e_gamma: tuple

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=complex))
        self.e_gamma = tuple(self.e_gamma)
        self.a_minus = derive_a_minus(self.a, self.e_gamma)
        n = self.n_gamma
        self.a_mu = self.a_minus.copy()
        self.b_minus = np.zeros((n + 1, self.dim), dtype=complex)
        for k in range(1, n + 1):
            self.b_minus[k] = self.a_minus[n - k]  # entry at m = -k
        if self.a.shape[0] > 64:
            total = float(np.sum(np.abs(self.a) ** 2))
            tail = float(np.sum(np.abs(self.a[-(self.a.shape[0] // 8) :]) ** 2))
            if total > 0 and tail > 1e-10 * total:
                warnings.warn(
                    "functional weights decay slowly; the summability condition "
                    "may be violated and truncation error will grow",
                    stacklevel=2,
                )

    @property
    def dim(self):
        return self.a.shape[1]

    @property
    def n_gamma(self):
        return len(self.e_gamma) - 1

    @property
    def support(self):
        return self.a.shape[0] - 1

    def a_minus_causal(self):
        """The ``m >= 0`` slice of ``a_minus``."""
        return self.a_minus[self.n_gamma :]


def _phi_tilde_apply(phi, x):
    """Lower-triangular contraction ``y(k) = sum_{j<=k} phi(k-j)^T x(j)``."""
    L = phi.length
    K = x.shape[0]
    # phi(k) maps innovation space to signal space; its transpose sends the
    # signal-space vectors x(j) into innovation space
    out = np.zeros((L - 1 + K, phi.coeffs.shape[2]), dtype=complex)
    pt = phi.coeffs.transpose(0, 2, 1)
    for j in range(K):
        out[j : j + L] += pt @ x[j]
    return out


def c_minus(phi, a_minus_causal, L=None):
    """Folded-noise moments ``c(m) = sum_k conj(g)(m-k) a_minus(k)``.

    Computed through the two-stage triangular/adjoint composition, which is
    identical to the direct covariance sum for the truncated factor.
    """
    L = phi.length if L is None else L
    y = _phi_tilde_apply(phi, a_minus_causal)
    return _phi_tilde_adjoint(phi, y, L)


def c_plus(phi, b_minus, L=None):
    """Forward-lag companion of :func:`c_minus`,
    ``c(m) = sum_k conj(g)(m+k) b_minus(k)``."""
    L = phi.length if L is None else L
    # Hankel stage: z(l) = sum_k phi(l+k)^T b(k)
    pt = phi.coeffs.transpose(0, 2, 1)
    K = b_minus.shape[0]
    z = np.zeros((phi.length, phi.coeffs.shape[2]), dtype=complex)
    for k in range(K):
        if k < phi.length:
            z[: phi.length - k] += pt[k:] @ b_minus[k]
    return _phi_tilde_adjoint(phi, z, L)


def _phi_tilde_adjoint(phi, y, L):
    """Adjoint contraction ``c(m) = sum_l conj(phi)(l) y(l+m)``."""
    co = phi.coeffs.conj()
    out = np.zeros((L, phi.coeffs.shape[1]), dtype=complex)
    Ky = y.shape[0]
    for m in range(L):
        lmax = min(phi.length, Ky - m)
        if lmax <= 0:
            break
        out[m] = np.einsum("lij,lj->i", co[:lmax], y[m : m + lmax])
    return out


def whitened_moments(psi, c):
    """Contract the whitening series against the moment sequence:
    ``u(m) = sum_k conj(psi)(k) c(k+m)``."""
    pc = psi.coeffs.conj()
    L = c.shape[0]
    out = np.zeros((L, psi.coeffs.shape[1]), dtype=complex)
    for m in range(L):
        kmax = min(psi.length, L - m)
        out[m] = np.einsum("kij,kj->i", pc[:kmax], c[m : m + kmax])
    return out


def spectral_characteristic(psi, u, spec, grid):
    """Assemble ``h`` on the grid from the whitening series and moments.

    ``h(lambda) = (chi/beta) Psi(e^{-i lambda})^T sum_m u(m) e^{-i lambda m}``.
    """
    tg = transfer_grid(spec, grid)
    psi_vals = psi.evaluate(grid)  # (N, q, T)
    u_vals = evaluate_coefficients(grid, u, np.arange(u.shape[0]))  # (N, q)
    h = np.einsum("jqt,jq->jt", psi_vals, u_vals)
    return tg.ratio[:, None] * h


def mean_square_error(phi, a_func, u):
    """Error ``Delta = |Phi-tilde a|^2 - |u|^2`` of the optimal estimate.

    Small negative values from roundoff are clamped to zero; a deficit beyond
    ``1e-9`` of the leading term signals truncation failure and raises.
    """
    ya = _phi_tilde_apply(phi, a_func.a)
    term1 = float(np.sum(np.abs(ya) ** 2))
    term2 = float(np.sum(np.abs(u) ** 2))
    delta = term1 - term2
    if delta < -NEGATIVE_DELTA_TOL * max(term1, 1e-300):
        raise SeasfiltError(
            f"mean-square error {delta:.3e} is negative beyond tolerance; "
            "increase the truncation length"
        )
    if delta < 0:
        warnings.warn(
            f"clamping slightly negative error {delta:.3e} to zero", stacklevel=2
        )
        delta = 0.0
    return delta, term1, term2


@dataclass
class FilterSolution:
    """Spectral characteristic, error value and the series behind them."""

    h: np.ndarray
    delta: float
    terms: tuple
    diagnostics: dict = field(default_factory=dict)
    theta: CausalMatrixSeries | None = None
    psi: CausalMatrixSeries | None = None
    phi: CausalMatrixSeries | None = None
    u: np.ndarray | None = None
    a_func: FunctionalCoefficients | None = None


def filter_solution(f, g, spec, a, L=256, fact_tol=None):
    """Optimal filter for the functional with weights ``a`` (rows = lags).

    Returns a :class:`FilterSolution` whose ``h`` is sampled on the grid of
    ``f`` and whose ``delta`` is the mean-square error.
    """
    grid = f.grid
    if g.grid.size != grid.size or g.dim != f.dim:
        raise ValueError("f and g must share grid and dimension")
    e = expand_increment_operator(spec)
    a_arr = np.atleast_2d(np.asarray(a, dtype=complex))
    if a_arr.shape[1] != f.dim:
        raise ValueError(
            f"functional weights have dimension {a_arr.shape[1]}, densities {f.dim}"
        )
    a_func = FunctionalCoefficients(a_arr, e.coeffs)

    if g.is_zero() or not np.any(a_arr):
        # noise-free observations (or null functional): exact recovery
        h = np.zeros((grid.size, f.dim), dtype=complex)
        dim = f.dim
        zero = CausalMatrixSeries(np.zeros((1, dim, dim)))
        return FilterSolution(
            h=h,
            delta=0.0,
            terms=(0.0, 0.0),
            diagnostics={"degenerate": "zero noise or zero functional"},
            theta=None,
            psi=None,
            phi=zero,
            u=np.zeros((1, dim), dtype=complex),
            a_func=a_func,
        )

    kw = {} if fact_tol is None else {"tol": fact_tol}
    phi = factorize(g, L=L, **kw)
    theta = weighted_observed_factor(f, g, spec, L=L, **kw)
    psi = invert_factor(theta)

    cm = c_minus(phi, a_func.a_minus_causal(), L=L)
    cp = c_plus(phi, a_func.b_minus, L=L)
    u = whitened_moments(psi, cm + cp)
    h = spectral_characteristic(psi, u, spec, grid)
    delta, term1, term2 = mean_square_error(phi, a_func, u)

    tail_budget = (
        phi.tail_energy() + theta.tail_energy() + psi.tail_energy()
    ) * float(np.sum(np.abs(a_arr) ** 2))
    diagnostics = {
        "truncation": L,
        "tail_energies": {
            "phi": phi.tail_energy(),
            "theta": theta.tail_energy(),
            "psi": psi.tail_energy(),
        },
        "factorization_residuals": {
            "phi": phi.diagnostics.get("series_residual"),
            "theta": theta.diagnostics.get("series_residual"),
        },
        "truncation_error_estimate": tail_budget,
    }
    return FilterSolution(
        h=h,
        delta=delta,
        terms=(term1, term2),
        diagnostics=diagnostics,
        theta=theta,
        psi=psi,
        phi=phi,
        u=u,
        a_func=a_func,
    )


def filter_finite(f, g, spec, a, N, L=256):
    """Filter for the functional truncated to lags ``0..N``."""
    a_arr = np.atleast_2d(np.asarray(a, dtype=complex))
    if N < 0:
        raise ValueError("support bound N must be >= 0")
    out = np.zeros((N + 1, a_arr.shape[1]), dtype=complex)
    upto = min(N + 1, a_arr.shape[0])
    out[:upto] = a_arr[:upto]
    return filter_solution(f, g, spec, out, L=L)


def filter_single_value(f, g, spec, N, p, L=256):
    """Filter for a single unobserved component ``p`` at lag ``N`` back.

    For ``N >= n_gamma`` the folded weights live entirely on the causal side
    and the error reduces to
    ``<conj(g)(0) delta_p, delta_p> - |u|^2``; smaller ``N`` falls back to the
    general pipeline.
    """
    if not (0 <= p < f.dim):
        raise ValueError(f"component index p={p} out of range 0..{f.dim - 1}")
    a = np.zeros((N + 1, f.dim), dtype=complex)
    a[N, p] = 1.0
    e = expand_increment_operator(spec)
    if N < e.degree or g.is_zero():
        return filter_solution(f, g, spec, a, L=L)

    grid = f.grid
    a_func = FunctionalCoefficients(a, e.coeffs)
    phi = factorize(g, L=L)
    theta = weighted_observed_factor(f, g, spec, L=L)
    psi = invert_factor(theta)
    cm = c_minus(phi, a_func.a_minus_causal(), L=L)
    u = whitened_moments(psi, cm)
    h = spectral_characteristic(psi, u, spec, grid)
    gbar0 = covariances_from_factor(phi).at(0).conj()
    term1 = float(gbar0[p, p].real)
    term2 = float(np.sum(np.abs(u) ** 2))
    delta = term1 - term2
    if delta < -NEGATIVE_DELTA_TOL * max(term1, 1e-300):
        raise SeasfiltError("negative single-value error beyond tolerance")
    delta = max(delta, 0.0)
    return FilterSolution(
        h=h,
        delta=delta,
        terms=(term1, term2),
        diagnostics={"truncation": L, "reduced_path": True},
        theta=theta,
        psi=psi,
        phi=phi,
        u=u,
        a_func=a_func,
    )


def filter_periodic(f, g, spec, weights, L=256):
    """Filter for a scalar-sequence functional under periodic blocking.

    The scalar weights are lifted onto the ``T``-dimensional blocked sequence
    and the vector pipeline runs unchanged.
    """
    a = lift_functional(weights, spec.T)
    return filter_solution(f, g, spec, a, L=L)


def filter_periodic_single(f, g, spec, M, L=256):
    """Single scalar value ``M`` lags back: maps to block ``N = M // T`` and
    component ``p = M - N*T`` of the vector problem."""
    if M < 0:
        raise ValueError("lag M must be >= 0")
    N, p = divmod(M, spec.T)
    return filter_single_value(f, g, spec, N, p, L=L)


def estimation_error(h, a, f, g, spec):
    """Error of an arbitrary admissible characteristic ``h`` for weights ``a``.

    ``Delta(h; f, g) = (1/2pi) int h' f conj(h)
    + (1/2pi) int (A - beta h)' g conj(A - beta h)`` with
    ``A(lambda) = sum_k a(k) e^{-i lambda k}``; reduces to the optimal error
    when ``h`` is the solution characteristic for ``(f, g)``.
    """
    grid = f.grid
    a_arr = np.atleast_2d(np.asarray(a, dtype=complex))
    tg = transfer_grid(spec, grid)
    A = evaluate_coefficients(grid, a_arr, np.arange(a_arr.shape[0]))  # (N, T)
    resid = A - tg.beta[:, None] * h
    part_f = np.einsum("jt,jts,js->j", h, f.values, h.conj())
    part_g = np.einsum("jt,jts,js->j", resid, g.values, resid.conj())
    return float((part_f.real + part_g.real).mean())
