"""Neumann-Laplacian cosine eigenbasis on intervals and rectangles.

The basis is closed-form: on [0, L] the eigenfunctions of -d^2/dx^2 with
zero Neumann data are w_0 = 1/sqrt(L) and w_m(x) = sqrt(2/L) cos(m pi x / L)
with eigenvalue (m pi / L)^2.  Rectangles use the tensor product, with
eigenvalues adding.  All quadrature is the uniform midpoint rule, which
integrates products of resolved cosine modes exactly, so the transforms
below are projections rather than approximations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class SpectralError(Exception):
    """Base error for the spectral layer."""


class InvalidDomainError(SpectralError):
    pass


class BasisMismatchError(SpectralError):
    pass


class ZeroMeanViolationError(SpectralError):
    pass


MEAN_ZERO_TOL = 1e-10


@dataclass(frozen=True)
class Domain:
    """Interval [0, L] or axis-aligned rectangle [0, Lx] x [0, Ly]."""

    kind: str  # "interval" | "rectangle"
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("interval", "rectangle"):
            raise InvalidDomainError(f"unknown domain kind {self.kind!r}")
        expected = 1 if self.kind == "interval" else 2
        if len(self.lengths) != expected:
            raise InvalidDomainError(
                f"{self.kind} needs {expected} length(s), got {len(self.lengths)}"
            )
        if any(L <= 0 for L in self.lengths):
            raise InvalidDomainError(f"lengths must be positive, got {self.lengths}")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def boundary_measure(self) -> float:
        if self.dim == 1:
            return 2.0
        Lx, Ly = self.lengths
        return 2.0 * (Lx + Ly)


def _eigenvalues_1d(L: float, k: int) -> np.ndarray:
    m = np.arange(k)
    return (m * np.pi / L) ** 2


def _synthesis_1d(L: float, k: int, x: np.ndarray) -> np.ndarray:
    """W[i, m] = w_m(x_i)."""
    m = np.arange(k)
    W = np.sqrt(2.0 / L) * np.cos(np.outer(x, m) * np.pi / L)
    W[:, 0] = 1.0 / np.sqrt(L)
    return W


def _derivative_1d(L: float, k: int, x: np.ndarray) -> np.ndarray:
    """DW[i, m] = w_m'(x_i)."""
    m = np.arange(k)
    DW = -np.sqrt(2.0 / L) * (m * np.pi / L) * np.sin(np.outer(x, m) * np.pi / L)
    DW[:, 0] = 0.0
    return DW


def _trace_1d(L: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Basis values at the endpoints 0 and L."""
    m = np.arange(k)
    left = np.full(k, np.sqrt(2.0 / L))
    left[0] = 1.0 / np.sqrt(L)
    right = left * np.where(m % 2 == 0, 1.0, -1.0)
    right[0] = 1.0 / np.sqrt(L)
    return left, right


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Tensor cosine basis; coefficient index 0 is always the constant mode."""

    domain: Domain
    modes: tuple[int, ...]
    eigenvalues_1d: tuple[np.ndarray, ...] = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)  # flat, C-order over mode tuple

    @property
    def n_modes(self) -> int:
        return int(np.prod(self.modes))

    @property
    def dim(self) -> int:
        return self.domain.dim

    def quadrature_grid(self, oversample: float = 2.0) -> "QuadratureGrid":
        """Midpoint grid with at least ceil(3k/2)+1 points per dimension.

        The default 2x grid also integrates quartic products (needed for
        the double-well potential) exactly.
        """
        npoints = tuple(
            max(int(np.ceil(1.5 * k)) + 1, int(np.ceil(oversample * k)))
            for k in self.modes
        )
        return self.grid_with_points(npoints)

    def grid_with_points(self, npoints: tuple[int, ...]) -> "QuadratureGrid":
        minimum = tuple(int(np.ceil(1.5 * k)) + 1 for k in self.modes)
        if any(n < m for n, m in zip(npoints, minimum)):
            raise BasisMismatchError(
                f"grid {npoints} below dealiasing minimum {minimum}"
            )
        nodes, weights, synth, deriv = [], [], [], []
        for L, k, n in zip(self.domain.lengths, self.modes, npoints):
            x = (np.arange(n) + 0.5) * (L / n)
            nodes.append(x)
            weights.append(np.full(n, L / n))
            synth.append(_synthesis_1d(L, k, x))
            deriv.append(_derivative_1d(L, k, x))
        return QuadratureGrid(
            basis=self,
            npoints=tuple(npoints),
            nodes=tuple(nodes),
            weights=tuple(weights),
            synth=tuple(synth),
            deriv=tuple(deriv),
        )


@lru_cache(maxsize=128)
def _default_grid(basis: SpectralBasis) -> "QuadratureGrid":
    return basis.quadrature_grid()


def default_grid(basis: SpectralBasis) -> "QuadratureGrid":
    """Shared dealiased grid for a basis (cached by basis identity)."""
    return _default_grid(basis)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    basis: SpectralBasis
    npoints: tuple[int, ...]
    nodes: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]
    synth: tuple[np.ndarray, ...]  # per-dim synthesis matrices, (n, k)
    deriv: tuple[np.ndarray, ...]  # per-dim derivative matrices, (n, k)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def weight_array(self) -> np.ndarray:
        if self.dim == 1:
            return self.weights[0]
        return np.outer(self.weights[0], self.weights[1])

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        if self.dim == 1:
            return (self.nodes[0],)
        return np.meshgrid(self.nodes[0], self.nodes[1], indexing="ij")

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weight_array() * values))


@dataclass(eq=False)
class FieldCoeffs:
    """A scalar field as coefficients in a SpectralBasis, C-order flat."""

    basis: SpectralBasis
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != (self.basis.n_modes,):
            raise BasisMismatchError(
                f"coefficient vector of length {self.data.shape} does not match "
                f"basis with {self.basis.n_modes} modes"
            )
        if not np.all(np.isfinite(self.data)):
            raise SpectralError("non-finite coefficients")

    def copy(self) -> "FieldCoeffs":
        return FieldCoeffs(self.basis, self.data.copy())

    def mean(self) -> float:
        return float(self.data[0]) / np.sqrt(self.basis.domain.volume)

    def tensor(self) -> np.ndarray:
        return self.data.reshape(self.basis.modes)


@dataclass(eq=False)
class GridField:
    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.npoints:
            raise BasisMismatchError(
                f"grid values shape {self.values.shape} does not match grid "
                f"{self.grid.npoints}"
            )


def _check_same_basis(a: FieldCoeffs, b: FieldCoeffs):
    if a.basis is not b.basis:
        raise BasisMismatchError("fields live on different bases")


def build_basis(domain: Domain, modes_per_dim) -> SpectralBasis:
    """Closed-form Neumann eigenbasis; modes_per_dim is an int or per-dim tuple."""
    if isinstance(modes_per_dim, int):
        modes = (modes_per_dim,) * domain.dim
    else:
        modes = tuple(int(k) for k in modes_per_dim)
    if len(modes) != domain.dim or any(k < 1 for k in modes):
        raise InvalidDomainError(f"invalid mode counts {modes} for {domain.kind}")
    eigs_1d = tuple(
        _eigenvalues_1d(L, k) for L, k in zip(domain.lengths, modes)
    )
    if domain.dim == 1:
        flat = eigs_1d[0].copy()
    else:
        flat = (eigs_1d[0][:, None] + eigs_1d[1][None, :]).ravel()
    return SpectralBasis(
        domain=domain, modes=modes, eigenvalues_1d=eigs_1d, eigenvalues=flat
    )


def to_grid(c: FieldCoeffs, g: QuadratureGrid) -> GridField:
    """Synthesis: evaluate the cosine series at the grid nodes."""
    if g.basis is not c.basis:
        raise BasisMismatchError("grid was built for a different basis")
    if c.basis.dim == 1:
        vals = g.synth[0] @ c.data
    else:
        C = c.tensor()
        vals = g.synth[0] @ C @ g.synth[1].T
    return GridField(g, vals)


def to_coeffs(f: GridField) -> FieldCoeffs:
    """Analysis: L2 projection of nodal data onto the basis via quadrature."""
    g = f.grid
    if g.dim == 1:
        data = g.synth[0].T @ (g.weights[0] * f.values)
    else:
        wv = (g.weights[0][:, None] * g.weights[1][None, :]) * f.values
        data = (g.synth[0].T @ wv @ g.synth[1]).ravel()
    return FieldCoeffs(g.basis, data)


def gradient_on_grid(c: FieldCoeffs, g: QuadratureGrid | None = None) -> tuple[GridField, ...]:
    """Exact derivative of the cosine series, evaluated at the nodes."""
    if g is None:
        g = default_grid(c.basis)
    if g.basis is not c.basis:
        raise BasisMismatchError("grid was built for a different basis")
    if c.basis.dim == 1:
        return (GridField(g, g.deriv[0] @ c.data),)
    C = c.tensor()
    gx = g.deriv[0] @ C @ g.synth[1].T
    gy = g.synth[0] @ C @ g.deriv[1].T
    return (GridField(g, gx), GridField(g, gy))


def divergence_to_coeffs(components: tuple[GridField, ...]) -> FieldCoeffs:
    """Weak divergence: j-th coefficient is -int g . grad(w_j).

    With the zero-normal-flux basis this is the integration-by-parts
    partner of gradient_on_grid.
    """
    g = components[0].grid
    if len(components) != g.dim:
        raise BasisMismatchError(
            f"{len(components)} components for a {g.dim}-dimensional grid"
        )
    for comp in components:
        if comp.grid is not g:
            raise BasisMismatchError("vector components on mismatched grids")
    if g.dim == 1:
        data = -(g.deriv[0].T @ (g.weights[0] * components[0].values))
    else:
        W = g.weights[0][:, None] * g.weights[1][None, :]
        data = -(
            g.deriv[0].T @ (W * components[0].values) @ g.synth[1]
            + g.synth[0].T @ (W * components[1].values) @ g.deriv[1]
        ).ravel()
    return FieldCoeffs(g.basis, data)


def inverse_neumann_laplacian(c: FieldCoeffs) -> FieldCoeffs:
    """Diagonal inverse of -Laplacian on the mean-zero subspace."""
    scale = max(1.0, float(np.max(np.abs(c.data))))
    if abs(c.data[0]) > MEAN_ZERO_TOL * scale:
        raise ZeroMeanViolationError(
            f"constant-mode coefficient {c.data[0]:.3e} violates the "
            "mean-zero precondition"
        )
    out = np.zeros_like(c.data)
    lam = c.basis.eigenvalues
    positive = lam > 0
    out[positive] = c.data[positive] / lam[positive]
    return FieldCoeffs(c.basis, out)


def boundary_mass_matrix(basis: SpectralBasis) -> np.ndarray:
    """M[j, i] = int_{boundary} w_i w_j, assembled in closed form."""
    if basis.dim == 1:
        left, right = _trace_1d(basis.domain.lengths[0], basis.modes[0])
        return np.outer(left, left) + np.outer(right, right)
    (Lx, Ly), (kx, ky) = basis.domain.lengths, basis.modes
    lx, rx = _trace_1d(Lx, kx)
    ly, ry = _trace_1d(Ly, ky)
    Bx = np.outer(lx, lx) + np.outer(rx, rx)  # traces at x = 0 and x = Lx
    By = np.outer(ly, ly) + np.outer(ry, ry)
    # Edge x = const contributes trace_x * delta_{n n'}; likewise for y.
    M = np.kron(Bx, np.eye(ky)) + np.kron(np.eye(kx), By)
    return M


def boundary_integral_vector(basis: SpectralBasis) -> np.ndarray:
    """b_j = int_{boundary} w_j; equals M_boundary applied to the constant field."""
    one = np.zeros(basis.n_modes)
    one[0] = np.sqrt(basis.domain.volume)
    return boundary_mass_matrix(basis) @ one


def inner_product(c1: FieldCoeffs, c2: FieldCoeffs, kind: str = "L2") -> float:
    _check_same_basis(c1, c2)
    if kind == "L2":
        return float(c1.data @ c2.data)
    if kind == "H1-seminorm":
        return float((c1.basis.eigenvalues * c1.data) @ c2.data)
    raise ValueError(f"unknown inner product kind {kind!r}")


def norm(c: FieldCoeffs, kind: str = "L2") -> float:
    if kind == "H1":
        return float(
            np.sqrt(inner_product(c, c, "L2") + inner_product(c, c, "H1-seminorm"))
        )
    return float(np.sqrt(inner_product(c, c, kind)))


def constant_field(basis: SpectralBasis, value: float) -> FieldCoeffs:
    data = np.zeros(basis.n_modes)
    data[0] = value * np.sqrt(basis.domain.volume)
    return FieldCoeffs(basis, data)
