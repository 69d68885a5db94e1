"""Frequency grids, matrix spectral densities and transfer functions.

All integrals ``(1/2pi) * integral_{-pi}^{pi} F(lambda) dlambda`` are computed
by the rectangular rule ``mean_j F(lambda_j)`` on a uniform grid offset by half
a bin,

    ``lambda_j = -pi + (j + 1/2) * 2*pi / N,  j = 0..N-1``,

which is spectrally accurate for trigonometric polynomials and never samples
the seasonal frequencies ``2*pi*k/s`` (for power-of-two ``N``), so the ratio
of the two transfer functions is always evaluated by direct division.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError
from .increments import IncrementSpec, expand_increment_operator

HERMITIAN_TOL = 1e-12
PSD_TOL = -1e-10
REFLECT_TOL = 1e-10


@dataclass(frozen=True)
class FrequencyGrid:
    """Offset uniform grid of ``size`` nodes covering ``[-pi, pi)``."""

    size: int = 4096

    def __post_init__(self):
        n = self.size
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"grid size must be a power of two >= 2, got {n}")

    @cached_property
    def nodes(self):
        n = self.size
        return -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)

    def quadrature(self, values):
        """Normalized integral ``(1/2pi) * int values dlambda``."""
        return np.asarray(values).mean(axis=0)


def _phase(ks, size):
    # e^{i lambda_j k} = e^{-i pi k (1 - 1/N)} e^{2 pi i j k / N}
    return np.exp(-1j * np.pi * np.asarray(ks, dtype=float) * (1.0 - 1.0 / size))


def node_coefficients(grid, values, ks):
    """Fourier analysis on the grid: ``c(k) = mean_j values_j * e^{i lambda_j k}``.

    ``ks`` may be any signed integers with distinct residues mod the grid size.
    """
    values = np.asarray(values, dtype=complex)
    n = grid.size
    if values.shape[0] != n:
        raise ValueError("values must have one entry per grid node along axis 0")
    ks = np.asarray(ks)
    u = np.fft.ifft(values, axis=0)
    ph = _phase(ks, n).reshape((-1,) + (1,) * (values.ndim - 1))
    return ph * u[ks % n]


def evaluate_coefficients(grid, coeffs, ks):
    """Fourier synthesis: ``v(lambda_j) = sum_k coeffs[k] * e^{-i lambda_j k}``."""
    coeffs = np.asarray(coeffs, dtype=complex)
    ks = np.asarray(ks)
    n = grid.size
    if len(ks) != coeffs.shape[0]:
        raise ValueError("coeffs and ks must have matching leading length")
    if len(np.unique(ks % n)) != len(ks):
        raise ValueError("coefficient indices collide modulo the grid size")
    buf = np.zeros((n,) + coeffs.shape[1:], dtype=complex)
    ph = np.conj(_phase(ks, n)).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    buf[ks % n] = coeffs * ph
    return np.fft.fft(buf, axis=0)


def causal_part(values, half_zero=True):
    """Project node values onto the causal half ``sum_{k>=0} c(k) e^{-i lambda k}``.

    With ``half_zero`` the zero coefficient enters with weight one half, which
    is the convention used by the factorization iterations.
    """
    values = np.asarray(values, dtype=complex)
    n = values.shape[0]
    u = np.fft.ifft(values, axis=0)
    # index m of the ifft corresponds to coefficient k=m for m < n/2 and to
    # the negative k=m-n otherwise; the offset-grid phases cancel between
    # analysis and synthesis, so masking the raw ifft output is exact.
    u[n // 2 :] = 0.0
    if half_zero:
        u[0] *= 0.5
    return np.fft.fft(u, axis=0)


# ---------------------------------------------------------------------------
# densities


@dataclass(frozen=True)
class MatrixDensityGrid:
    """Hermitian matrix-valued spectral density sampled on a grid."""

    grid: FrequencyGrid
    values: np.ndarray
    label: str = "f"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("density values must have shape (N, T, T)")
        if v.shape[0] != self.grid.size:
            raise ValueError("density values do not match the grid size")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.values.shape[1]

    def is_zero(self):
        return not np.any(self.values)

    def validate(self):
        """Check Hermitian symmetry, positive semidefiniteness and the
        reflection symmetry of real-valued sequences; raises on violation."""
        v = self.values
        scale = max(np.abs(v).max(), 1.0)
        herm = np.abs(v - v.conj().transpose(0, 2, 1)).max()
        if herm > HERMITIAN_TOL * scale:
            raise ValueError(f"density '{self.label}' is not Hermitian (deviation {herm:.3e})")
        eigs = np.linalg.eigvalsh(0.5 * (v + v.conj().transpose(0, 2, 1)))
        if eigs.min() < PSD_TOL * scale:
            raise ValueError(
                f"density '{self.label}' has negative eigenvalue {eigs.min():.3e}"
            )
        refl = np.abs(v[::-1] - v.conj()).max()
        if refl > REFLECT_TOL * scale:
            raise ValueError(
                f"density '{self.label}' breaks the real-sequence symmetry "
                f"f(-lambda) = conj(f(lambda)) (deviation {refl:.3e})"
            )
        return self

    def scaled(self, c):
        return MatrixDensityGrid(self.grid, c * self.values, label=self.label)


def constant_density(grid, value, label="f"):
    """Density with the same Hermitian PSD matrix at every node."""
    m = np.atleast_2d(np.asarray(value, dtype=complex))
    vals = np.broadcast_to(m, (grid.size,) + m.shape)
    return MatrixDensityGrid(grid, vals, label=label).validate()


def zero_density(grid, dim=1, label="g"):
    return MatrixDensityGrid(grid, np.zeros((grid.size, dim, dim)), label=label)


def rational_density(grid, ma, ar=None, label="f"):
    """Rational density ``B(z) B(z)* / |A(z)|**2`` with ``z = e^{-i lambda}``.

    ``ma`` lists the (real) matrix coefficients of the moving-average
    polynomial ``B``; ``ar`` the scalar autoregressive coefficients of ``A``
    (leading one included).  The quotient is Hermitian PSD by construction.
    """
    coeffs = [np.atleast_2d(np.asarray(c, dtype=float)) for c in ma]
    dim = coeffs[0].shape[0]
    if any(c.shape != (dim, dim) for c in coeffs):
        raise ValueError("all ma coefficients must share the same square shape")
    lam = grid.nodes
    z = np.exp(-1j * lam)
    b = np.zeros((grid.size, dim, dim), dtype=complex)
    for k, c in enumerate(coeffs):
        b += (z**k)[:, None, None] * c
    vals = b @ b.conj().transpose(0, 2, 1)
    if ar is not None:
        a = np.zeros(grid.size, dtype=complex)
        for k, c in enumerate(np.asarray(ar, dtype=float)):
            a += c * z**k
        mag = np.abs(a) ** 2
        if mag.min() < 1e-12:
            raise ValueError("ar polynomial vanishes on the grid")
        vals = vals / mag[:, None, None]
    return MatrixDensityGrid(grid, vals, label=label).validate()


def tabulated_density(grid, values, label="f", validate=True):
    dens = MatrixDensityGrid(grid, np.asarray(values, dtype=complex), label=label)
    return dens.validate() if validate else dens


@dataclass(frozen=True)
class DensityForm:
    """Declarative density specification: constant, rational or tabulated.

    This is the schema consumed from run configurations; ``sample`` produces
    the node values for any grid (tabulated forms are tied to one size).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def sample(self, grid, label="f"):
        if self.kind == "constant":
            return constant_density(grid, self.params["value"], label=label)
        if self.kind == "rational":
            return rational_density(
                grid, self.params["ma"], self.params.get("ar"), label=label
            )
        if self.kind == "tabulated":
            vals = np.asarray(self.params["values"], dtype=complex)
            if vals.shape[0] != grid.size:
                raise ConfigError(
                    f"tabulated density has {vals.shape[0]} nodes, grid needs {grid.size}"
                )
            return tabulated_density(grid, vals, label=label)
        if self.kind == "zero":
            return zero_density(grid, self.params.get("dim", 1), label=label)
        raise ConfigError(f"unknown density kind '{self.kind}'")

    @property
    def refinable(self):
        return self.kind in ("constant", "rational", "zero")

    @staticmethod
    def from_dict(data):
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigError("density spec must be an object with a 'kind' key")
        kind = data["kind"]
        params = {k: v for k, v in data.items() if k != "kind"}
        if kind == "constant" and "value" not in params:
            raise ConfigError("constant density needs a 'value'")
        if kind == "rational" and "ma" not in params:
            raise ConfigError("rational density needs 'ma' coefficients")
        if kind == "tabulated" and "values" not in params:
            raise ConfigError("tabulated density needs 'values'")
        return DensityForm(kind, params)


# ---------------------------------------------------------------------------
# transfer functions


def eval_chi(spec, grid, mu=None):
    """Shift-operator transfer function ``prod_j (1 - e^{-i lambda mu_j s_j})**d_j``."""
    lam = grid.nodes if isinstance(grid, FrequencyGrid) else np.asarray(grid)
    mu = spec.mu if mu is None else tuple(mu)
    out = np.ones_like(lam, dtype=complex)
    for m, s, d in zip(mu, spec.s, spec.d):
        out *= (1.0 - np.exp(-1j * lam * m * s)) ** d
    return out


def eval_beta(spec, grid):
    """Continuous-frequency normalizer ``prod_j prod_k (i lambda - 2 pi i k/s_j)**d_j``.

    The inner product runs over ``k = -floor(s_j/2) .. floor(s_j/2)``; its
    zeros match the seasonal zeros of :func:`eval_chi` on ``[-pi, pi]`` for
    unit steps, which keeps the ratio of the two functions bounded there.
    """
    lam = grid.nodes if isinstance(grid, FrequencyGrid) else np.asarray(grid)
    out = np.ones_like(lam, dtype=complex)
    for s, d in zip(spec.s, spec.d):
        half = s // 2
        for k in range(-half, half + 1):
            out *= (1j * lam - 2j * np.pi * k / s) ** d
    return out


@dataclass(frozen=True)
class TransferGrid:
    """Both transfer functions and their ratio sampled on a grid."""

    grid: FrequencyGrid
    chi: np.ndarray
    beta: np.ndarray

    @cached_property
    def ratio(self):
        return self.chi / self.beta

    @cached_property
    def weight(self):
        """``|chi|**2 / |beta|**2`` -- the observed-increment density weight."""
        return np.abs(self.ratio) ** 2


def transfer_grid(spec, grid):
    return TransferGrid(grid, eval_chi(spec, grid), eval_beta(spec, grid))


def observed_density(f, g, spec):
    """Density of the observed sum process, ``p = f + |beta|**2 g``."""
    if f.grid.size != g.grid.size:
        raise ValueError("f and g must share one grid")
    if f.dim != g.dim:
        raise ValueError(f"dimension mismatch: f is {f.dim}x{f.dim}, g is {g.dim}x{g.dim}")
    beta2 = np.abs(eval_beta(spec, f.grid)) ** 2
    vals = f.values + beta2[:, None, None] * g.values
    return MatrixDensityGrid(f.grid, vals, label="p")


# ---------------------------------------------------------------------------
# covariances and the minimality heuristic


def structural_covariance(density, spec, lag, mu1=None, mu2=None):
    """Covariance of the stationary increment sequence at the given lag.

    Quadrature of
    ``e^{i lambda m} chi_1(e^{-i lambda}) conj(chi_2(e^{-i lambda}))
    |beta|**-2 density(lambda)``.
    """
    tg = transfer_grid(spec, density.grid)
    chi1 = tg.chi if mu1 is None else eval_chi(spec, density.grid, mu=mu1)
    chi2 = tg.chi if mu2 is None else eval_chi(spec, density.grid, mu=mu2)
    lam = density.grid.nodes
    w = np.exp(1j * lam * lag) * chi1 * np.conj(chi2) / np.abs(tg.beta) ** 2
    return (w[:, None, None] * density.values).mean(axis=0)


def covariance_from_density(density, lags):
    """Plain autocovariances ``R(t) = (1/2pi) int e^{i lambda t} density dlambda``."""
    lags = np.atleast_1d(np.asarray(lags))
    ph = np.exp(1j * np.outer(lags, density.grid.nodes))
    return np.einsum("kj,jab->kab", ph, density.values) / density.grid.size


@dataclass(frozen=True)
class MinimalityReport:
    """Refinement trace for the inverse-density integrability heuristic."""

    values: tuple
    suspect: bool


def minimality_value(f, g, spec, levels=3, base_size=1024):
    """Quadrature of ``Tr[(|beta|**2/|chi|**2) p**-1]`` across grid refinements.

    ``f`` and ``g`` may be :class:`DensityForm` objects (refinable) or
    sampled grids (single level).  The report is flagged ``suspect`` when the
    value more than doubles between refinements, indicating the integral may
    diverge; a finite grid can only offer this heuristic, not a verdict.
    """
    refinable = isinstance(f, DensityForm) and isinstance(g, DensityForm)
    if not refinable:
        levels = 1
    values = []
    for level in range(levels):
        if refinable:
            grid = FrequencyGrid(base_size * 2**level)
            fg = f.sample(grid, label="f")
            gg = g.sample(grid, label="g")
        else:
            grid, fg, gg = f.grid, f, g
        tg = transfer_grid(spec, grid)
        p = observed_density(fg, gg, spec)
        sign_scale = np.abs(p.values).max()
        bad = np.abs(np.linalg.det(p.values)) < 1e-300 * max(sign_scale, 1.0) ** p.dim
        if np.any(bad):
            node = int(np.argmax(bad))
            raise ValueError(
                f"observed density is singular at node {node} "
                f"(lambda={grid.nodes[node]:.6f})"
            )
        pinv = np.linalg.inv(p.values)
        integrand = np.einsum("jaa->j", pinv).real / tg.weight
        values.append(float(integrand.mean()))
    suspect = any(b > 2.0 * a for a, b in zip(values, values[1:]))
    return MinimalityReport(tuple(values), suspect)
