"""Scripted studies: asymptotic-limit sweeps, manufactured solutions,
and rate fitting.

The two sweeps drive the permeability (with b = K) and the chemotaxis
strength (with b = chi) toward zero and compare each member trajectory
against the corresponding limit system run on the same basis, initial
data, and time grid.  The manufactured-solution study verifies spatial
in-span exactness and the first-order temporal rate of the IMEX scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from . import dynamics as dyn
from . import spectral as sp
from .dynamics import SimState, StepperConfig, Trajectory
from .model import TumourModel
from .spectral import FieldCoeffs, SpectralBasis


@dataclass
class RateFit:
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    residual: float


def fit_rate(x, y) -> RateFit:
    """Least-squares slope in log-log coordinates."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3 or len(x) != len(y):
        raise ValueError("need at least 3 matched points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), res, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    residual = float(np.sqrt(res[0])) if len(res) else 0.0
    return RateFit(x, y, float(slope), float(intercept), residual)


@dataclass
class SweepSpec:
    parameter: str              # "K" | "chi"
    values: tuple[float, ...]   # strictly decreasing, positive
    dt: float
    T: float
    comparison: str = "Linf-L2"  # | "L2-H1"
    cadence: int = 1

    def __post_init__(self):
        if self.parameter not in ("K", "chi"):
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        vals = tuple(float(v) for v in self.values)
        if any(v <= 0 for v in vals):
            raise ValueError("sweep values must be positive")
        if any(nxt >= prev for prev, nxt in zip(vals[:-1], vals[1:])):
            raise ValueError("sweep values must be strictly decreasing")
        if self.comparison not in ("Linf-L2", "L2-H1"):
            raise ValueError(f"unknown comparison norm {self.comparison!r}")
        object.__setattr__(self, "values", vals)


@dataclass
class SweepRow:
    value: float
    v_l2l2: float
    v_scaled: float   # K^{-1/2} |v|_{L2(L2)} for K-sweeps, same for chi
    diff_phi: float
    diff_sigma: float
    failed: str | None = None


def _difference_norm(a: Trajectory, b: Trajectory, field: str,
                     comparison: str) -> float:
    if len(a) != len(b):
        raise ValueError("trajectories must share the snapshot grid")
    diffs = []
    for sa, sb in zip(a.states, b.states):
        ca = sa.alpha if field == "phi" else sa.gamma
        cb = sb.alpha if field == "phi" else sb.gamma
        d = FieldCoeffs(ca.basis, ca.data - cb.data)
        kind = "L2" if comparison == "Linf-L2" else "H1"
        diffs.append(sp.norm(d, kind))
    diffs = np.asarray(diffs)
    if comparison == "Linf-L2":
        return float(np.max(diffs))
    times = np.asarray(a.times)
    from scipy.integrate import trapezoid
    return float(np.sqrt(trapezoid(diffs ** 2, times)))


def _run_member(model: TumourModel, initial: SimState, spec: SweepSpec,
                **config_kw) -> tuple[Trajectory, StepperConfig]:
    config = StepperConfig(dt=spec.dt, **config_kw)
    traj = dyn.run(initial.copy(), config, model, spec.T,
                   cadence=spec.cadence)
    return traj, config


def sweep_vanishing_permeability(spec: SweepSpec, model: TumourModel,
                                 initial: SimState) -> list[SweepRow]:
    """Member runs at decreasing K with b = K, against the no-flow limit."""
    if spec.parameter != "K":
        raise ValueError("spec.parameter must be 'K'")
    if model.gamma_v is not None:
        raise ValueError("permeability sweep requires a zero volume source")
    limit_model = model.with_params(model.params.with_(b=0.0))
    limit_traj, _ = _run_member(limit_model, initial, spec, no_flow=True)

    rows = []
    for K in spec.values:
        member = model.with_params(model.params.with_(K=K, b=K))
        try:
            traj, config = _run_member(member, initial, spec)
            suite = dg.norm_suite(traj, member, config)
            rows.append(SweepRow(
                value=K,
                v_l2l2=suite.v_l2l2,
                v_scaled=suite.v_l2l2_scaled,
                diff_phi=_difference_norm(traj, limit_traj, "phi",
                                          spec.comparison),
                diff_sigma=_difference_norm(traj, limit_traj, "sigma",
                                            spec.comparison),
            ))
        except dyn.StepFailureError as exc:
            rows.append(SweepRow(K, np.nan, np.nan, np.nan, np.nan,
                                 failed=str(exc)))
    return rows


def sweep_vanishing_chemotaxis(spec: SweepSpec, model: TumourModel,
                               initial: SimState) -> list[SweepRow]:
    """Member runs at decreasing chi with b = chi, against the chi = 0 run."""
    if spec.parameter != "chi":
        raise ValueError("spec.parameter must be 'chi'")
    limit_model = model.with_params(model.params.with_(chi=0.0, b=0.0))
    limit_traj, _ = _run_member(limit_model, initial, spec)

    rows = []
    for chi in spec.values:
        member = model.with_params(model.params.with_(chi=chi, b=chi))
        try:
            traj, config = _run_member(member, initial, spec)
            suite = dg.norm_suite(traj, member, config)
            rows.append(SweepRow(
                value=chi,
                v_l2l2=suite.v_l2l2,
                v_scaled=suite.v_l2l2_scaled,
                diff_phi=_difference_norm(traj, limit_traj, "phi",
                                          spec.comparison),
                diff_sigma=_difference_norm(traj, limit_traj, "sigma",
                                            spec.comparison),
            ))
        except dyn.StepFailureError as exc:
            rows.append(SweepRow(chi, np.nan, np.nan, np.nan, np.nan,
                                 failed=str(exc)))
    return rows


# ---------------------------------------------------------------------------
# manufactured solutions (1D)

@dataclass(frozen=True)
class ManufacturedSolution:
    """Separable cosine-polynomial fields with exponential time decay:

        phi*(x, t) = exp(-decay t) * sum_m a_m cos(m pi x / L),

    and likewise for sigma*.  Cosine modes have zero normal derivative,
    so the fields are Neumann-compatible by construction.
    """

    phi_amplitudes: tuple[tuple[int, float], ...]
    sigma_amplitudes: tuple[tuple[int, float], ...]
    decay: float = 1.0

    @staticmethod
    def default() -> "ManufacturedSolution":
        # phi* = cos(pi x) e^{-t}, sigma* = cos(2 pi x) e^{-t} / 2
        return ManufacturedSolution(((1, 1.0),), ((2, 0.5),))

    @staticmethod
    def equilibrium(value: float = 1.0) -> "ManufacturedSolution":
        return ManufacturedSolution(((0, value),), ((0, 0.0),), decay=0.0)

    @staticmethod
    def from_callables(phi_fn, sigma_fn, basis: SpectralBasis,
                       decay: float = 1.0,
                       tol: float = 1e-10) -> "ManufacturedSolution":
        """Extract amplitudes by projection; reject off-span data.

        Anything with a nonzero normal derivative (a sine component, say)
        leaves a projection residual and is refused.
        """
        if basis.dim != 1:
            raise ValueError("manufactured solutions are one-dimensional")
        grid = basis.quadrature_grid(oversample=4.0)
        x = grid.nodes[0]
        L = basis.domain.lengths[0]
        amps = []
        for fn in (phi_fn, sigma_fn):
            vals = np.asarray(fn(x), dtype=float)
            c = sp.to_coeffs(sp.GridField(grid, vals))
            back = sp.to_grid(c, grid).values
            if np.max(np.abs(back - vals)) > tol * max(1.0, np.max(np.abs(vals))):
                raise ValueError(
                    "manufactured field is not Neumann-compatible within the basis"
                )
            a = [(0, float(c.data[0]) / np.sqrt(L))]
            a += [(m, float(c.data[m]) * np.sqrt(2.0 / L))
                  for m in range(1, basis.modes[0])]
            amps.append(tuple((m, v) for m, v in a if abs(v) > 1e-14))
        return ManufacturedSolution(amps[0], amps[1], decay=decay)

    def max_wavenumber(self) -> int:
        ms = [m for m, _ in self.phi_amplitudes + self.sigma_amplitudes]
        return max(ms) if ms else 0

    def _coeffs_one(self, amps, basis: SpectralBasis, t: float) -> FieldCoeffs:
        L = basis.domain.lengths[0]
        data = np.zeros(basis.n_modes)
        for m, a in amps:
            if m >= basis.modes[0]:
                continue  # unresolvable part is dropped by projection
            data[m] = a * (np.sqrt(L) if m == 0 else np.sqrt(L / 2.0))
        return FieldCoeffs(basis, data * np.exp(-self.decay * t))

    def coeffs(self, basis: SpectralBasis, t: float
               ) -> tuple[FieldCoeffs, FieldCoeffs]:
        return (self._coeffs_one(self.phi_amplitudes, basis, t),
                self._coeffs_one(self.sigma_amplitudes, basis, t))

    def rate_coeffs(self, basis: SpectralBasis, t: float
                    ) -> tuple[np.ndarray, np.ndarray]:
        cp, cs = self.coeffs(basis, t)
        return -self.decay * cp.data, -self.decay * cs.data


def _forcing(ms: ManufacturedSolution, basis: SpectralBasis, t: float,
             model: TumourModel, config: StepperConfig
             ) -> tuple[np.ndarray, np.ndarray]:
    """f(t) = d/dt c*(t) - rhs(c*(t)): makes c* an exact ODE solution."""
    cp, cs = ms.coeffs(basis, t)
    rp, rs = ms.rate_coeffs(basis, t)
    da, dg_ = dyn.rhs(SimState(t, cp, cs), model, config)
    return rp - da, rs - dg_


def _forced_step(state: SimState, model: TumourModel, config: StepperConfig,
                 ms: ManufacturedSolution) -> SimState:
    basis = state.basis
    dt = config.dt
    if config.scheme == "imex1":
        fa, fg = _forcing(ms, basis, state.t, model, config)
        da, dg_ = dyn.rhs(state, model, config)
        denom_phi, denom_sigma = dyn._implicit_factors(basis, model, config, dt)
        alpha = state.alpha.data + dt * (da + fa) / denom_phi
        gamma = state.gamma.data + dt * (dg_ + fg) / denom_sigma
        return SimState(state.t + dt, FieldCoeffs(basis, alpha),
                        FieldCoeffs(basis, gamma))

    def f(t, a, g):
        s = SimState(t, FieldCoeffs(basis, a), FieldCoeffs(basis, g))
        da, dg_ = dyn.rhs(s, model, config)
        fa, fg = _forcing(ms, basis, t, model, config)
        return da + fa, dg_ + fg

    a0, g0 = state.alpha.data, state.gamma.data
    k1a, k1g = f(state.t, a0, g0)
    k2a, k2g = f(state.t + dt / 2, a0 + dt / 2 * k1a, g0 + dt / 2 * k1g)
    k3a, k3g = f(state.t + dt / 2, a0 + dt / 2 * k2a, g0 + dt / 2 * k2g)
    k4a, k4g = f(state.t + dt, a0 + dt * k3a, g0 + dt * k3g)
    return SimState(
        state.t + dt,
        FieldCoeffs(basis, a0 + dt / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)),
        FieldCoeffs(basis, g0 + dt / 6 * (k1g + 2 * k2g + 2 * k3g + k4g)),
    )


def run_manufactured(ms: ManufacturedSolution, basis: SpectralBasis,
                     model: TumourModel, config: StepperConfig,
                     T: float) -> float:
    """Integrate the forced system from the projected exact data;
    returns the final-time coefficient-space L2 error."""
    cp, cs = ms.coeffs(basis, 0.0)
    state = SimState(0.0, cp, cs)
    n = int(round(T / config.dt))
    for _ in range(n):
        state = _forced_step(state, model, config, ms)
    ep, es = ms.coeffs(basis, state.t)
    return float(np.sqrt(np.sum((state.alpha.data - ep.data) ** 2)
                         + np.sum((state.gamma.data - es.data) ** 2)))


@dataclass
class MMSResult:
    spatial_orders: tuple[int, ...]
    spatial_errors: np.ndarray
    temporal_dts: tuple[float, ...]
    temporal_errors: np.ndarray
    temporal_fit: RateFit
    resolved_spatial_error: float  # max error over orders that span the data


def manufactured_solution_study(orders, dts, model: TumourModel,
                                ms: ManufacturedSolution | None = None,
                                domain: sp.Domain | None = None,
                                T: float = 0.1,
                                dt_space: float = 5e-4,
                                modes_time: int = 6) -> MMSResult:
    """Spatial in-span exactness and temporal first-order rate.

    orders are maximal resolved wavenumbers; the basis for order k has
    k + 1 modes.  Spatial errors use the RK4 stepper at a small fixed
    dt; temporal errors use the IMEX stepper on a resolving basis.
    """
    if ms is None:
        ms = ManufacturedSolution.default()
    if domain is None:
        domain = sp.Domain("interval", (1.0,))
    orders = tuple(int(k) for k in orders)
    dts = tuple(float(dt) for dt in dts)

    spatial_errors = []
    for k in orders:
        basis = sp.build_basis(domain, k + 1)
        config = StepperConfig(dt=dt_space, scheme="rk4-explicit")
        spatial_errors.append(run_manufactured(ms, basis, model, config, T))
    spatial_errors = np.asarray(spatial_errors)

    basis_t = sp.build_basis(domain, modes_time)
    temporal_errors = []
    for dt in dts:
        config = StepperConfig(dt=dt)
        temporal_errors.append(run_manufactured(ms, basis_t, model, config, T))
    temporal_errors = np.asarray(temporal_errors)
    fit = fit_rate(dts, temporal_errors)

    resolved = [e for k, e in zip(orders, spatial_errors)
                if k >= ms.max_wavenumber()]
    return MMSResult(
        spatial_orders=orders,
        spatial_errors=spatial_errors,
        temporal_dts=dts,
        temporal_errors=temporal_errors,
        temporal_fit=fit,
        resolved_spatial_error=max(resolved) if resolved else np.nan,
    )
