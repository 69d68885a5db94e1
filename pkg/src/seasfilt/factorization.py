"""Canonical spectral factorization and the whitening series.

A strictly positive definite matrix density ``S`` on the grid is factorized
as ``S(lambda) = Phi(e^{-i lambda}) Phi(e^{-i lambda})*`` with ``Phi`` causal
and minimum-phase.  Scalars go through the cepstral (log/exp) construction;
matrices through Wilson's Newton-type iteration.  The factor is pinned to the
unique representative with lower-triangular, positive-diagonal ``Phi(0)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FactorizationError
from .grids import (
    MatrixDensityGrid,
    causal_part,
    evaluate_coefficients,
    node_coefficients,
    transfer_grid,
)

PD_FLOOR = 1e-10
FACT_TOL = 1e-8
MAX_ITER = 200
TAIL_WARN = 1e-10


@dataclass
class CausalMatrixSeries:
    """One-sided matrix coefficient sequence ``c(0..L-1)``."""

    coeffs: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c[:, None, None]
        if c.ndim != 3:
            raise ValueError("coefficients must have shape (L, rows, cols)")
        self.coeffs = c

    @property
    def length(self):
        return self.coeffs.shape[0]

    @property
    def rows(self):
        return self.coeffs.shape[1]

    @property
    def cols(self):
        return self.coeffs.shape[2]

    def evaluate(self, grid):
        """Node values of ``sum_k c(k) e^{-i lambda k}``."""
        return evaluate_coefficients(grid, self.coeffs, np.arange(self.length))

    def tail_energy(self, fraction=0.125):
        """Relative squared-norm mass of the trailing ``fraction`` of lags."""
        total = float(np.sum(np.abs(self.coeffs) ** 2))
        if total == 0.0:
            return 0.0
        start = self.length - max(1, int(self.length * fraction))
        return float(np.sum(np.abs(self.coeffs[start:]) ** 2)) / total

    def is_zero(self):
        return not np.any(self.coeffs)


def _lower_triangular_pin(coeffs):
    """Right-rotate by a unitary so that c(0) is lower-triangular with a
    positive real diagonal (the canonical representative)."""
    c0 = coeffs[0]
    if c0.shape == (1, 1):
        u = c0[0, 0] / abs(c0[0, 0])
        return coeffs / u
    q, r = np.linalg.qr(c0.conj().T)
    # c0 = r^H q^H; fold the diagonal phases of r^H into the rotation
    diag = np.diagonal(r.conj().T).copy()
    d = np.where(np.abs(diag) > 0, np.conj(diag) / np.abs(diag), 1.0)
    u = q @ np.diag(d)
    return coeffs @ u


def _grid_residual(phi_vals, target):
    recon = phi_vals @ phi_vals.conj().transpose(0, 2, 1)
    return float(np.linalg.norm(recon - target, axis=(1, 2)).max())


def factorize(density, L=256, tol=FACT_TOL, max_iter=MAX_ITER, pd_floor=PD_FLOOR):
    """Canonical factorization of a strictly positive definite density.

    Parameters
    ----------
    density : MatrixDensityGrid
    L : int
        Truncation length of the returned coefficient series.
    tol : float
        Relative sup-node reconstruction tolerance of the iteration.
    max_iter : int
        Wilson iteration budget; exceeding it raises ``FactorizationError``
        with the residual history attached.
    pd_floor : float
        Minimum eigenvalue required of the input at every node.
    """
    grid = density.grid
    if L > grid.size // 2:
        raise ValueError(f"truncation L={L} exceeds half the grid size {grid.size}")
    vals = 0.5 * (density.values + density.values.conj().transpose(0, 2, 1))
    eigs = np.linalg.eigvalsh(vals)
    if eigs.min() < pd_floor:
        raise FactorizationError(
            f"density '{density.label}' is not strictly positive definite: "
            f"minimum eigenvalue {eigs.min():.3e} < {pd_floor:.0e}"
        )
    scale = float(np.linalg.norm(vals, axis=(1, 2)).max())

    if density.dim == 1:
        phi_vals, history = _cepstral_values(vals[:, 0, 0].real)
    else:
        phi_vals, history = _wilson_values(vals, scale, tol, max_iter)

    coeffs = node_coefficients(grid, phi_vals, np.arange(L))
    coeffs = _lower_triangular_pin(coeffs)
    series = CausalMatrixSeries(coeffs)
    series_vals = series.evaluate(grid)
    residual = _grid_residual(series_vals, vals) / scale
    tail = series.tail_energy()
    if tail > TAIL_WARN:
        warnings.warn(
            f"factor tail energy {tail:.3e} exceeds {TAIL_WARN:.0e}; "
            f"increase the truncation L={L}",
            stacklevel=2,
        )
    series.diagnostics = {
        "iterations": len(history),
        "residual_history": history,
        "grid_residual": _grid_residual(phi_vals, vals) / scale,
        "series_residual": residual,
        "tail_energy": tail,
        "truncation": L,
    }
    return series


def _cepstral_values(values):
    # exp of the causal half of log s; exact for scalars up to roundoff
    alpha = causal_part(np.log(values))
    return np.exp(alpha), [0.0]


def _wilson_values(vals, scale, tol, max_iter):
    n, t, _ = vals.shape
    c0 = vals.mean(axis=0)
    c0 = 0.5 * (c0 + c0.conj().T)
    x = np.broadcast_to(np.linalg.cholesky(c0), vals.shape).copy()
    eye = np.eye(t)
    history = []
    for _ in range(max_iter):
        y = np.linalg.solve(x, vals)  # X^-1 S
        a = np.linalg.solve(x, y.conj().transpose(0, 2, 1)).conj().transpose(0, 2, 1)
        a = 0.5 * (a + a.conj().transpose(0, 2, 1)) + eye
        x = x @ causal_part(a)
        res = _grid_residual(x, vals) / scale
        history.append(res)
        if res <= tol:
            return x, history
    raise FactorizationError(
        f"Wilson iteration did not reach tolerance {tol:.0e} in {max_iter} steps "
        f"(last residual {history[-1]:.3e})",
        residual_history=history,
    )


def weighted_observed_factor(f, g, spec, L=256, tol=FACT_TOL, max_iter=MAX_ITER):
    """Causal factor of the observed-increment density.

    Factorizes the node-wise product
    ``(|chi(e^{-i lambda})|**2 / |beta(i lambda)|**2) * (f + |beta|**2 g)``,
    the spectral density of the differenced observations, whose inverse
    factor is the whitening series used by the filter formulas.
    """
    if f.grid.size != g.grid.size or f.dim != g.dim:
        raise ValueError("f and g must share grid and dimension")
    tg = transfer_grid(spec, f.grid)
    chi_mag = np.abs(tg.chi)
    if chi_mag.min() < 1e-13:
        raise FactorizationError(
            "shift transfer function vanishes on the grid; "
            "this cannot happen on the half-offset grid"
        )
    beta2 = np.abs(tg.beta) ** 2
    p = f.values + beta2[:, None, None] * g.values
    weighted = tg.weight[:, None, None] * p
    dens = MatrixDensityGrid(f.grid, weighted, label="observed-increment")
    return factorize(dens, L=L, tol=tol, max_iter=max_iter)


def invert_factor(theta, L=None):
    """Whitening series: causal inverse with ``Psi(z) Theta(z) = I``.

    ``psi(0) = theta(0)^-1`` and
    ``psi(k) = -theta(0)^-1 sum_{j=1..k} theta(j) psi(k-j)``.
    """
    if theta.rows != theta.cols:
        raise ValueError("only square factors can be inverted")
    L = theta.length if L is None else L
    t = theta.rows
    th = theta.coeffs
    try:
        inv0 = np.linalg.inv(th[0])
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("leading factor coefficient is singular") from exc
    psi = np.zeros((L, t, t), dtype=complex)
    psi[0] = inv0
    for k in range(1, L):
        jmax = min(k, theta.length - 1)
        acc = np.zeros((t, t), dtype=complex)
        for j in range(1, jmax + 1):
            acc += th[j] @ psi[k - j]
        psi[k] = -inv0 @ acc
    return CausalMatrixSeries(psi)


@dataclass
class CovarianceSeries:
    """Two-sided covariance blocks ``c(-L+1 .. L-1)`` with ``c(-k) = c(k)*``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 3 or v.shape[0] % 2 == 0:
            raise ValueError("covariance stack must have odd length (2L-1, T, T)")
        self.values = v

    @property
    def max_lag(self):
        return (self.values.shape[0] - 1) // 2

    def at(self, k):
        """Block at lag ``k``; zero beyond the stored range."""
        if abs(k) > self.max_lag:
            return np.zeros_like(self.values[0])
        return self.values[k + self.max_lag]


def covariances_from_factor(phi):
    """Covariances ``c(k) = sum_m phi(m) phi(k+m)*`` of the factored density."""
    co = phi.coeffs
    L, t, _ = co.shape
    out = np.zeros((2 * L - 1, t, t), dtype=complex)
    conj = co.conj()
    for k in range(L):
        blk = np.einsum("mij,mlj->il", co[: L - k], conj[k:])
        out[L - 1 + k] = blk
        out[L - 1 - k] = blk.conj().T
    return CovarianceSeries(out)


def convolution_identity_residual(psi, theta):
    """Max deviation of ``(Psi * Theta)(k)`` from ``delta_k0 I`` over k < L."""
    L = min(psi.length, theta.length)
    t = theta.rows
    worst = 0.0
    for k in range(L):
        acc = np.zeros((t, t), dtype=complex)
        for j in range(0, k + 1):
            if j < psi.length and k - j < theta.length:
                acc += psi.coeffs[j] @ theta.coeffs[k - j]
        if k == 0:
            acc -= np.eye(t)
        worst = max(worst, float(np.abs(acc).max()))
    return worst
