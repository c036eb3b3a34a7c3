"""The semi-discrete Galerkin system as a time integrator.

The unknowns are the coefficient vectors of the order parameter and the
nutrient; the chemical potential, pressure, and velocity are derived
algebraically each step.  Two steppers are provided: a stabilized
first-order IMEX scheme whose implicit operator is diagonal in the
eigenbasis, and an explicit RK4 oracle for cross-checks at small steps.
A dense-quadrature operator assembly serves as the brute-force oracle
for the matrix-free right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model as md
from . import spectral as sp
from .model import ModelParams, TumourModel
from .spectral import FieldCoeffs, GridField, QuadratureGrid, SpectralBasis


class StepFailureError(Exception):
    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class BlowUpError(StepFailureError):
    pass


@dataclass
class DerivedFields:
    mu: FieldCoeffs
    p: FieldCoeffs
    v: tuple[GridField, ...]


@dataclass
class SimState:
    t: float
    alpha: FieldCoeffs  # order parameter
    gamma: FieldCoeffs  # nutrient
    _derived: DerivedFields | None = field(default=None, repr=False)

    @property
    def basis(self) -> SpectralBasis:
        return self.alpha.basis

    def copy(self) -> "SimState":
        return SimState(self.t, self.alpha.copy(), self.gamma.copy())

    def norm(self) -> float:
        return float(np.sqrt(self.alpha.data @ self.alpha.data
                             + self.gamma.data @ self.gamma.data))


@dataclass
class StepperConfig:
    dt: float
    scheme: str = "imex1"  # "imex1" | "rk4-explicit"
    kappa: float | None = None  # None: sup |psi''| on [-1.2, 1.2]
    mbar: float | None = None   # None: upper mobility bound m1
    nbar: float | None = None
    energy_guard: bool = False
    tol_E: float = 0.0          # absolute slack allowed per guarded step
    max_halvings: int = 8
    no_flow: bool = False
    no_chemotaxis: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("imex1", "rk4-explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def resolved_kappa(self, model: TumourModel) -> float:
        if self.kappa is not None:
            return self.kappa
        t = np.linspace(-1.2, 1.2, 241)
        return float(np.max(np.abs(model.potential.d2psi(t))))


def project_initial_data(phi0, sigma0, basis: SpectralBasis,
                         grid: QuadratureGrid | None = None
                         ) -> tuple[FieldCoeffs, FieldCoeffs]:
    """L2 projection of initial fields onto the truncated basis.

    phi0 / sigma0 may be callables of the grid coordinates, GridFields,
    or coefficient vectors already in the basis.
    """
    if grid is None:
        grid = sp.default_grid(basis)

    def project(f):
        if isinstance(f, FieldCoeffs):
            if f.basis is not basis:
                raise sp.BasisMismatchError("initial data on a different basis")
            return f.copy()
        if isinstance(f, GridField):
            vals = f.values
        else:
            vals = np.asarray(f(*grid.meshgrid()), dtype=float)
            vals = np.broadcast_to(vals, grid.npoints).copy()
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite initial data")
        return sp.to_coeffs(GridField(grid, vals))

    return project(phi0), project(sigma0)


def _effective(model: TumourModel, config: StepperConfig) -> TumourModel:
    return model.effective(no_chemotaxis=config.no_chemotaxis)


def derive(state: SimState, model: TumourModel, config: StepperConfig,
           grid: QuadratureGrid | None = None) -> DerivedFields:
    """Chemical potential, pressure, and velocity at the current state."""
    if state._derived is not None:
        return state._derived
    eff = _effective(model, config)
    basis = state.basis
    if grid is None:
        grid = sp.default_grid(basis)
    mu = md.chemical_potential(state.alpha, state.gamma, eff.params,
                               eff.potential, grid)
    if config.no_flow:
        p = FieldCoeffs(basis, np.zeros(basis.n_modes))
        v = tuple(GridField(grid, np.zeros(grid.npoints))
                  for _ in range(basis.dim))
    else:
        if eff.params.K <= 0:
            raise ValueError("K = 0 requires no-flow mode")
        gv = eff.gamma_v(state.t) if eff.gamma_v is not None else None
        p, v = md.solve_darcy(state.alpha, mu, state.gamma, gv,
                              eff.params, grid)
    state._derived = DerivedFields(mu=mu, p=p, v=v)
    return state._derived


def rhs(state: SimState, model: TumourModel, config: StepperConfig,
        grid: QuadratureGrid | None = None
        ) -> tuple[np.ndarray, np.ndarray]:
    """Matrix-free right-hand side of the coefficient ODE system."""
    eff = _effective(model, config)
    params = eff.params
    basis = state.basis
    if grid is None:
        grid = sp.default_grid(basis)
    der = derive(state, model, config, grid)

    phi_g = sp.to_grid(state.alpha, grid)
    sigma_g = sp.to_grid(state.gamma, grid)
    mu_g = sp.to_grid(der.mu, grid)
    grad_mu = sp.gradient_on_grid(der.mu, grid)
    grad_phi = sp.gradient_on_grid(state.alpha, grid)
    grad_sigma = sp.gradient_on_grid(state.gamma, grid)

    m_vals = eff.mobility_m(phi_g.values)
    n_vals = eff.mobility_n(phi_g.values)

    # d/dt alpha_j = -int m grad(mu).grad(w_j) + int Gamma_phi w_j
    #               + int phi v . grad(w_j)
    flux_mu = tuple(GridField(grid, m_vals * g.values) for g in grad_mu)
    dalpha = sp.divergence_to_coeffs(flux_mu).data
    gamma_phi_g, S_g = md.evaluate_sources(phi_g, mu_g, sigma_g, eff.sources)
    dalpha += sp.to_coeffs(gamma_phi_g).data
    if not config.no_flow:
        conv_phi = tuple(GridField(grid, phi_g.values * vi.values)
                         for vi in der.v)
        dalpha -= sp.divergence_to_coeffs(conv_phi).data

    # d/dt gamma_j = -int n (D grad(sigma) - chi grad(phi)).grad(w_j)
    #               - int S w_j + int sigma v . grad(w_j)
    #               + b int_bdry (sigma_inf - sigma) w_j
    flux_sigma = tuple(
        GridField(grid, n_vals * (params.D * gs.values - params.chi * gp.values))
        for gs, gp in zip(grad_sigma, grad_phi)
    )
    dgamma = sp.divergence_to_coeffs(flux_sigma).data
    dgamma -= sp.to_coeffs(S_g).data
    if not config.no_flow:
        conv_sigma = tuple(GridField(grid, sigma_g.values * vi.values)
                           for vi in der.v)
        dgamma -= sp.divergence_to_coeffs(conv_sigma).data
    if params.b != 0.0:
        M_bdry = _boundary_matrix(basis)
        sigma_inf = eff.sigma_inf(state.t)
        Sigma_vec = sigma_inf * sp.boundary_integral_vector(basis)
        dgamma += params.b * (Sigma_vec - M_bdry @ state.gamma.data)

    return dalpha, dgamma


_boundary_cache: dict[int, np.ndarray] = {}


def _boundary_matrix(basis: SpectralBasis) -> np.ndarray:
    key = id(basis)
    if key not in _boundary_cache:
        _boundary_cache[key] = sp.boundary_mass_matrix(basis)
    return _boundary_cache[key]


@dataclass
class DenseGalerkinOperators:
    """All Galerkin matrices and vectors at a state, by dense quadrature."""

    S: np.ndarray        # stiffness, diagonal eigenvalues
    S_m: np.ndarray      # mobility-weighted stiffness for the order parameter
    S_n: np.ndarray      # mobility-weighted stiffness for the nutrient
    C: np.ndarray        # convection matrix at the state's velocity
    M_bdry: np.ndarray
    R_phi: np.ndarray
    R_S: np.ndarray
    psi_vec: np.ndarray  # projections of psi'(phi)
    Sigma_vec: np.ndarray
    beta: np.ndarray     # chemical potential coefficients
    p: FieldCoeffs
    v: tuple[GridField, ...]


def dense_galerkin_operators(state: SimState, model: TumourModel,
                             config: StepperConfig,
                             oversample: float = 4.0) -> DenseGalerkinOperators:
    """Assemble every operator on an oversampled grid; the rhs oracle."""
    eff = _effective(model, config)
    params = eff.params
    basis = state.basis
    grid = basis.quadrature_grid(oversample=oversample)
    W = grid.weight_array()

    phi_g = sp.to_grid(state.alpha, grid).values
    sigma_g = sp.to_grid(state.gamma, grid).values
    grad_phi = [g.values for g in sp.gradient_on_grid(state.alpha, grid)]
    m_vals = eff.mobility_m(phi_g)
    n_vals = eff.mobility_n(phi_g)

    k = basis.n_modes
    nflat = int(np.prod(grid.npoints))
    Wf = W.reshape(nflat)
    # nodal values and gradients of every basis function, spatially flattened
    basis_vals = np.empty((k, nflat))
    basis_grads = [np.empty((k, nflat)) for _ in range(basis.dim)]
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1.0
        cj = FieldCoeffs(basis, e)
        basis_vals[j] = sp.to_grid(cj, grid).values.reshape(nflat)
        for d, comp in enumerate(sp.gradient_on_grid(cj, grid)):
            basis_grads[d][j] = comp.values.reshape(nflat)

    def stiffness(weight):
        wf = (Wf * weight.reshape(nflat))
        return sum((gb * wf) @ gb.T for gb in basis_grads)

    S = np.diag(basis.eigenvalues)
    S_m = stiffness(m_vals)
    S_n = stiffness(n_vals)

    psi_vec = basis_vals @ (Wf * eff.potential.dpsi(phi_g).reshape(nflat))
    beta = params.A * psi_vec + params.B * basis.eigenvalues * state.alpha.data \
        - params.chi * state.gamma.data
    mu_g = (basis_vals.T @ beta).reshape(grid.npoints)

    # Darcy on the dense grid
    if config.no_flow:
        p = FieldCoeffs(basis, np.zeros(k))
        v_vals = [np.zeros(nflat) for _ in range(basis.dim)]
    else:
        drive = (mu_g + params.chi * sigma_g).reshape(nflat)
        forcing = [drive * g.reshape(nflat) for g in grad_phi]
        rhs_p = sum(gb @ (Wf * f) for gb, f in zip(basis_grads, forcing))
        if eff.gamma_v is not None:
            rhs_p = rhs_p + eff.gamma_v(state.t).data / params.K
        rhs_p[0] = 0.0
        p = sp.inverse_neumann_laplacian(FieldCoeffs(basis, rhs_p))
        grad_p = [gb.T @ p.data for gb in basis_grads]
        v_vals = [-params.K * (gp - f) for gp, f in zip(grad_p, forcing)]
    v = tuple(GridField(grid, vv.reshape(grid.npoints)) for vv in v_vals)

    C = sum(
        (gb * (Wf * vv)) @ basis_vals.T
        for gb, vv in zip(basis_grads, v_vals)
    ) if not config.no_flow else np.zeros((k, k))

    gamma_phi_g = eff.sources.gamma_phi(phi_g, mu_g, sigma_g)
    S_vals = eff.sources.S(phi_g, mu_g, sigma_g)
    R_phi = basis_vals @ (Wf * gamma_phi_g.reshape(nflat))
    R_S = basis_vals @ (Wf * S_vals.reshape(nflat))

    M_bdry = sp.boundary_mass_matrix(basis)
    Sigma_vec = eff.sigma_inf(state.t) * sp.boundary_integral_vector(basis)

    return DenseGalerkinOperators(
        S=S, S_m=S_m, S_n=S_n, C=C, M_bdry=M_bdry, R_phi=R_phi, R_S=R_S,
        psi_vec=psi_vec, Sigma_vec=Sigma_vec, beta=beta, p=p, v=v,
    )


def dense_rhs(state: SimState, model: TumourModel, config: StepperConfig,
              ops: DenseGalerkinOperators | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side assembled from the dense operators."""
    if ops is None:
        ops = dense_galerkin_operators(state, model, config)
    params = _effective(model, config).params
    dalpha = -ops.S_m @ ops.beta + ops.R_phi + ops.C @ state.alpha.data
    dgamma = (-ops.S_n @ (params.D * state.gamma.data
                          - params.chi * state.alpha.data)
              - ops.R_S + ops.C @ state.gamma.data
              - params.b * ops.M_bdry @ state.gamma.data
              + params.b * ops.Sigma_vec)
    return dalpha, dgamma


def _implicit_factors(basis: SpectralBasis, model: TumourModel,
                      config: StepperConfig, dt: float
                      ) -> tuple[np.ndarray, np.ndarray]:
    params = _effective(model, config).params
    lam = basis.eigenvalues
    mbar = config.mbar if config.mbar is not None else model.mobility_m.upper
    nbar = config.nbar if config.nbar is not None else model.mobility_n.upper
    kappa = config.resolved_kappa(model)
    L_phi = mbar * (params.B * lam ** 2 + params.A * kappa * lam)
    L_sigma = nbar * params.D * lam
    return 1.0 + dt * L_phi, 1.0 + dt * L_sigma


def _imex_increment(state: SimState, model: TumourModel,
                    config: StepperConfig, dt: float) -> SimState:
    dalpha, dgamma = rhs(state, model, config)
    denom_phi, denom_sigma = _implicit_factors(state.basis, model, config, dt)
    alpha = state.alpha.data + dt * dalpha / denom_phi
    gamma = state.gamma.data + dt * dgamma / denom_sigma
    return SimState(state.t + dt,
                    FieldCoeffs(state.basis, alpha),
                    FieldCoeffs(state.basis, gamma))


def _source_free(model: TumourModel, config: StepperConfig) -> bool:
    eff = _effective(model, config)
    return (eff.sources.kind == "zero" and eff.params.b == 0.0
            and eff.gamma_v is None)


def step_imex(state: SimState, config: StepperConfig,
              model: TumourModel) -> SimState:
    """One stabilized IMEX step of length config.dt.

    The implicit operator damps each mode of the increment with the
    frozen worst-case linear symbol, so no linear solve is needed.  In
    source-free runs an optional energy guard re-takes the interval with
    halved substeps whenever the discrete energy rises beyond tol_E.
    """
    dt = config.dt
    if not (config.energy_guard and _source_free(model, config)):
        return _imex_increment(state, model, config, dt)

    from .diagnostics import energy  # local import: diagnostics sits above

    E0 = energy(state, model, config).total
    for halving in range(config.max_halvings + 1):
        nsub = 2 ** halving
        sub = state
        try:
            with np.errstate(over="raise", invalid="raise"):
                for _ in range(nsub):
                    sub = _imex_increment(sub, model, config, dt / nsub)
        except (sp.SpectralError, FloatingPointError):
            continue  # non-finite substep counts as a rejected interval
        if energy(sub, model, config).total <= E0 + config.tol_E:
            return sub
    raise StepFailureError(
        f"energy guard exhausted {config.max_halvings} halvings",
        t=state.t, state=state,
    )


def step_rk4_explicit(state: SimState, config: StepperConfig,
                      model: TumourModel) -> SimState:
    """Classical RK4 step; oracle integrator for small dt."""
    dt = config.dt
    basis = state.basis

    def f(t, a, g):
        s = SimState(t, FieldCoeffs(basis, a), FieldCoeffs(basis, g))
        return rhs(s, model, config)

    a0, g0 = state.alpha.data, state.gamma.data
    try:
        k1a, k1g = f(state.t, a0, g0)
        k2a, k2g = f(state.t + dt / 2, a0 + dt / 2 * k1a, g0 + dt / 2 * k1g)
        k3a, k3g = f(state.t + dt / 2, a0 + dt / 2 * k2a, g0 + dt / 2 * k2g)
        k4a, k4g = f(state.t + dt, a0 + dt * k3a, g0 + dt * k3g)
        a1 = a0 + dt / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        g1 = g0 + dt / 6 * (k1g + 2 * k2g + 2 * k3g + k4g)
        new = SimState(state.t + dt, FieldCoeffs(basis, a1),
                       FieldCoeffs(basis, g1))
    except sp.SpectralError as exc:
        raise BlowUpError("explicit step produced non-finite values",
                          t=state.t, state=state) from exc
    if new.norm() > 1e3 * max(1.0, state.norm()):
        raise BlowUpError("explicit step blew up", t=state.t, state=state)
    return new


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[SimState] = field(default_factory=list)

    def append(self, state: SimState):
        self.times.append(state.t)
        self.states.append(state)

    def __len__(self):
        return len(self.states)


Observer = Callable[[int, float, SimState], None]


def run(initial: SimState, config: StepperConfig, model: TumourModel,
        T: float, observer: Observer | None = None,
        cadence: int = 1, observe_initial: bool = True) -> Trajectory:
    """Advance for a duration T, snapshotting every `cadence` steps.

    observe_initial=False skips recording the starting state, which is
    what a resumed run wants: its first snapshot was already written.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    stepper = step_imex if config.scheme == "imex1" else step_rk4_explicit
    traj = Trajectory()
    state = initial
    if observe_initial:
        traj.append(state)
        if observer is not None:
            observer(0, state.t, state)
    n_steps = int(round(T / config.dt))
    for i in range(1, n_steps + 1):
        try:
            state = stepper(state, config, model)
        except StepFailureError as exc:
            exc.t = state.t
            raise
        if i % cadence == 0 or i == n_steps:
            traj.append(state)
            if observer is not None:
                observer(i, state.t, state)
    return traj
