"""JSON run configuration: schema validation and run assembly.

The schema is strict: unknown keys anywhere are reported with their
path, every numeric constraint on the model constants is re-checked at
load through validate_assumptions, and initial data comes from a small
set of named analytic profiles so Neumann compatibility holds by
construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from . import model as md
from . import spectral as sp
from .dynamics import SimState, StepperConfig
from .model import ModelParams, TumourModel
from .spectral import FieldCoeffs, SpectralBasis


class ConfigError(Exception):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class RunConfig:
    raw: dict
    domain: sp.Domain
    modes: tuple[int, ...]
    dt: float
    T: float
    scheme: str
    kappa: float | None
    energy_guard: bool
    tol_E: float
    max_halvings: int
    params: ModelParams
    potential_kind: str
    mobility_m: float
    mobility_n: float
    source_spec: dict
    gamma_v_spec: dict
    sigma_inf_value: float
    initial_phi: dict
    initial_sigma: dict
    limit_mode: str            # "none" | "no-flow" | "no-chemotaxis"
    cadence: int
    seed: int
    validation: md.ValidationReport = field(repr=False, default=None)

    def content_hash(self) -> str:
        """Hash of everything that fixes the trajectory (not T or output)."""
        body = {k: v for k, v in self.raw.items()
                if k not in ("T", "cadence", "output_dir")}
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    # ---- assembly -------------------------------------------------------

    def build_basis(self) -> SpectralBasis:
        return sp.build_basis(self.domain, self.modes)

    def build_model(self, basis: SpectralBasis) -> TumourModel:
        potential = (md.Potential.quartic_double_well()
                     if self.potential_kind == "quartic-double-well"
                     else md.Potential.quadratic())
        spec = self.source_spec
        if spec["kind"] == "zero":
            sources = md.SourceModel.zero()
        elif spec["kind"] == "hawkins":
            sources = md.SourceModel.hawkins(
                spec["f0"], self.params,
                interpolated=spec.get("interpolated", False))
        else:
            sources = md.SourceModel.proliferation(
                spec["lambda_p"], spec["lambda_a"], spec["lambda_c"])
        gamma_v = self._build_gamma_v(basis)
        return TumourModel(
            params=self.params,
            potential=potential,
            mobility_m=md.Mobility.constant(self.mobility_m),
            mobility_n=md.Mobility.constant(self.mobility_n),
            sources=sources,
            sigma_inf=md.BoundaryAndInitialData.constant_sigma_inf(
                self.sigma_inf_value),
            gamma_v=gamma_v,
        )

    def _build_gamma_v(self, basis: SpectralBasis):
        spec = self.gamma_v_spec
        if spec["kind"] == "zero":
            return None
        # cosine profile: zero-mean by construction (no constant mode)
        mode = tuple(spec["mode"])
        amplitude = float(spec["amplitude"])
        data = np.zeros(basis.n_modes)
        scale = amplitude
        for L, m in zip(basis.domain.lengths, mode):
            scale *= np.sqrt(L) if m == 0 else np.sqrt(L / 2.0)
        flat = int(np.ravel_multi_index(mode, basis.modes))
        data[flat] = scale
        coeffs = FieldCoeffs(basis, data)
        return lambda t: coeffs

    def build_stepper(self) -> StepperConfig:
        return StepperConfig(
            dt=self.dt,
            scheme=self.scheme,
            kappa=self.kappa,
            energy_guard=self.energy_guard,
            tol_E=self.tol_E,
            max_halvings=self.max_halvings,
            no_flow=self.limit_mode == "no-flow",
            no_chemotaxis=self.limit_mode == "no-chemotaxis",
        )

    def build_initial_state(self, basis: SpectralBasis) -> SimState:
        phi0 = _profile_values(self.initial_phi, basis, self.seed)
        sigma0 = _profile_values(self.initial_sigma, basis, self.seed + 1)
        alpha, gamma = dyn.project_initial_data(phi0, sigma0, basis)
        return SimState(0.0, alpha, gamma)


def _profile_values(spec: dict, basis: SpectralBasis, seed: int):
    kind = spec["kind"]
    if kind == "constant":
        value = float(spec["value"])
        return lambda *coords: np.full_like(np.asarray(coords[0], float), value)
    if kind == "cosine":
        mean = float(spec.get("mean", 0.0))
        amplitude = float(spec["amplitude"])
        mode = tuple(spec["mode"])
        lengths = basis.domain.lengths

        def cosine(*coords):
            out = np.full_like(np.asarray(coords[0], float), mean)
            bump = amplitude
            for x, m, L in zip(coords, mode, lengths):
                bump = bump * np.cos(m * np.pi * x / L)
            return out + bump

        return cosine
    if kind == "tanh-front":
        center = float(spec["center"])
        width = float(spec["width"])

        def front(*coords):
            return np.tanh((coords[0] - center) / width)

        return front
    # random: seeded low-mode cosine mixture, reproducible across runs
    amplitude = float(spec["amplitude"])
    cutoff = int(spec.get("cutoff", 4))
    rng = np.random.default_rng(int(spec.get("seed", seed)))
    shape = tuple(min(cutoff, k) for k in basis.modes)
    weights = rng.standard_normal(shape)
    lengths = basis.domain.lengths

    def random_profile(*coords):
        out = np.zeros_like(np.asarray(coords[0], float))
        for idx in np.ndindex(shape):
            term = weights[idx]
            for x, m, L in zip(coords, idx, lengths):
                term = term * np.cos(m * np.pi * x / L)
            out = out + term
        return amplitude * out

    return random_profile


# ---------------------------------------------------------------------------
# schema checking

_PROFILE_KEYS = {
    "constant": ({"kind", "value"}, {"kind", "value"}),
    "cosine": ({"kind", "amplitude", "mode"}, {"kind", "amplitude", "mode", "mean"}),
    "tanh-front": ({"kind", "center", "width"}, {"kind", "center", "width"}),
    "random": ({"kind", "amplitude"}, {"kind", "amplitude", "cutoff", "seed"}),
}

_SOURCE_KEYS = {
    "zero": ({"kind"}, {"kind"}),
    "hawkins": ({"kind", "f0"}, {"kind", "f0", "interpolated"}),
    "proliferation": ({"kind", "lambda_p", "lambda_a", "lambda_c"},
                      {"kind", "lambda_p", "lambda_a", "lambda_c"}),
}


class _Checker:
    def __init__(self, strict: bool):
        self.strict = strict
        self.violations: list[str] = []

    def fail(self, path: str, message: str):
        self.violations.append(f"{path}: {message}")

    def keys(self, obj: dict, path: str, required: set, optional: set = frozenset()):
        for k in required:
            if k not in obj:
                self.fail(path, f"missing key '{k}'")
        if self.strict:
            for k in obj:
                if k not in required and k not in optional:
                    self.fail(f"{path}.{k}", "unknown key")

    def number(self, obj: dict, key: str, path: str, positive=False,
               nonnegative=False) -> float | None:
        if key not in obj:
            return None
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{path}.{key}", "must be a number")
            return None
        v = float(v)
        if positive and v <= 0:
            self.fail(f"{path}.{key}", "must be positive")
        if nonnegative and v < 0:
            self.fail(f"{path}.{key}", "must be nonnegative")
        return v

    def choice(self, obj: dict, key: str, path: str, allowed) -> str | None:
        v = obj.get(key)
        if v is None:
            return None
        if v not in allowed:
            self.fail(f"{path}.{key}", f"must be one of {sorted(allowed)}")
            return None
        return v


def parse_config(text: str, strict: bool = True) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"$: invalid JSON ({exc})"])
    if not isinstance(raw, dict):
        raise ConfigError(["$: top level must be an object"])

    ck = _Checker(strict)
    top_required = {"domain", "modes", "dt", "T", "params", "potential",
                    "sources", "initial"}
    top_optional = {"scheme", "mobility", "gamma_v", "sigma_inf",
                    "limit_mode", "cadence", "output_dir", "seed"}
    ck.keys(raw, "$", top_required, top_optional)
    if ck.violations and any("missing key" in v for v in ck.violations):
        raise ConfigError(ck.violations)

    dom_spec = raw.get("domain", {})
    domain = None
    if isinstance(dom_spec, dict):
        ck.keys(dom_spec, "$.domain", {"kind", "lengths"})
        kind = ck.choice(dom_spec, "kind", "$.domain", {"interval", "rectangle"})
        lengths = dom_spec.get("lengths")
        if kind and isinstance(lengths, list):
            try:
                domain = sp.Domain(kind, tuple(float(x) for x in lengths))
            except (sp.InvalidDomainError, ValueError, TypeError) as exc:
                ck.fail("$.domain", str(exc))
    else:
        ck.fail("$.domain", "must be an object")

    modes_spec = raw.get("modes")
    if isinstance(modes_spec, int):
        modes = (modes_spec,) * (domain.dim if domain else 1)
    elif isinstance(modes_spec, list) and all(isinstance(m, int) for m in modes_spec):
        modes = tuple(modes_spec)
    else:
        ck.fail("$.modes", "must be an int or list of ints")
        modes = ()
    if modes and any(m < 1 for m in modes):
        ck.fail("$.modes", "mode counts must be >= 1")
    if domain and modes and len(modes) != domain.dim:
        ck.fail("$.modes", f"expected {domain.dim} entries")

    dt = ck.number(raw, "dt", "$", positive=True)
    T = ck.number(raw, "T", "$", nonnegative=True)

    scheme_spec = raw.get("scheme", {})
    scheme, kappa, energy_guard, tol_E, max_halvings = "imex1", None, False, 0.0, 8
    if isinstance(scheme_spec, dict):
        ck.keys(scheme_spec, "$.scheme", set(),
                {"name", "kappa", "energy_guard", "tol_E", "max_halvings"})
        scheme = ck.choice(scheme_spec, "name", "$.scheme",
                           {"imex1", "rk4-explicit"}) or "imex1"
        kappa = ck.number(scheme_spec, "kappa", "$.scheme", positive=True)
        energy_guard = bool(scheme_spec.get("energy_guard", False))
        tol_E = ck.number(scheme_spec, "tol_E", "$.scheme", nonnegative=True) or 0.0
        max_halvings = int(scheme_spec.get("max_halvings", 8))
    else:
        ck.fail("$.scheme", "must be an object")

    limit_mode = ck.choice(raw, "limit_mode", "$",
                           {"none", "no-flow", "no-chemotaxis"}) or "none"

    params_spec = raw.get("params", {})
    params = None
    if isinstance(params_spec, dict):
        ck.keys(params_spec, "$.params", {"A", "B", "K", "D", "chi", "b"})
        vals = {}
        for name in ("A", "B", "D"):
            vals[name] = ck.number(params_spec, name, "$.params", positive=True)
        for name in ("K", "chi", "b"):
            vals[name] = ck.number(params_spec, name, "$.params", nonnegative=True)
        if all(v is not None for v in vals.values()):
            try:
                params = ModelParams(**vals)
            except ValueError as exc:
                ck.fail("$.params", str(exc))
        if params is not None and params.K == 0 and limit_mode != "no-flow":
            ck.fail("$.params.K", "K = 0 requires limit_mode 'no-flow'")
    else:
        ck.fail("$.params", "must be an object")

    potential_kind = ck.choice(raw, "potential", "$",
                               {"quartic-double-well", "quadratic"})
    if potential_kind is None and "potential" in raw:
        pass  # already reported
    elif "potential" not in raw:
        ck.fail("$.potential", "missing")

    mob_spec = raw.get("mobility", {"m": 1.0, "n": 1.0})
    mobility_m = mobility_n = 1.0
    if isinstance(mob_spec, dict):
        ck.keys(mob_spec, "$.mobility", set(), {"m", "n"})
        mobility_m = ck.number(mob_spec, "m", "$.mobility", positive=True) or 1.0
        mobility_n = ck.number(mob_spec, "n", "$.mobility", positive=True) or 1.0
    else:
        ck.fail("$.mobility", "must be an object")

    source_spec = raw.get("sources", {})
    if isinstance(source_spec, dict):
        kind = ck.choice(source_spec, "kind", "$.sources", set(_SOURCE_KEYS))
        if kind:
            req, opt = _SOURCE_KEYS[kind]
            ck.keys(source_spec, "$.sources", req, opt)
            for key in req | opt:
                if key in ("kind", "interpolated"):
                    continue
                ck.number(source_spec, key, "$.sources", nonnegative=True)
        elif "kind" not in source_spec:
            ck.fail("$.sources.kind", "missing key 'kind'")
    else:
        ck.fail("$.sources", "must be an object")

    gamma_v_spec = raw.get("gamma_v", {"kind": "zero"})
    if isinstance(gamma_v_spec, dict):
        gk = ck.choice(gamma_v_spec, "kind", "$.gamma_v", {"zero", "cosine"})
        if gk == "cosine":
            ck.keys(gamma_v_spec, "$.gamma_v", {"kind", "amplitude", "mode"})
            mode = gamma_v_spec.get("mode")
            if (not isinstance(mode, list) or not mode
                    or not all(isinstance(m, int) and m >= 0 for m in mode)
                    or all(m == 0 for m in mode)):
                ck.fail("$.gamma_v.mode",
                        "must be nonnegative ints with at least one nonzero "
                        "(zero-mean requirement)")
            elif modes and (len(mode) != len(modes)
                            or any(m >= k for m, k in zip(mode, modes))):
                ck.fail("$.gamma_v.mode", "outside the basis")
        else:
            ck.keys(gamma_v_spec, "$.gamma_v", {"kind"})
    else:
        ck.fail("$.gamma_v", "must be an object")

    sigma_inf_spec = raw.get("sigma_inf", {"kind": "constant", "value": 0.0})
    sigma_inf_value = 0.0
    if isinstance(sigma_inf_spec, dict):
        ck.keys(sigma_inf_spec, "$.sigma_inf", {"kind", "value"})
        ck.choice(sigma_inf_spec, "kind", "$.sigma_inf", {"constant"})
        sigma_inf_value = ck.number(sigma_inf_spec, "value", "$.sigma_inf") or 0.0
    else:
        ck.fail("$.sigma_inf", "must be an object")

    initial_spec = raw.get("initial", {})
    initial_phi = {"kind": "constant", "value": 0.0}
    initial_sigma = {"kind": "constant", "value": 0.0}
    if isinstance(initial_spec, dict):
        ck.keys(initial_spec, "$.initial", {"phi", "sigma"})
        for name in ("phi", "sigma"):
            prof = initial_spec.get(name)
            path = f"$.initial.{name}"
            if not isinstance(prof, dict):
                ck.fail(path, "must be an object")
                continue
            pk = ck.choice(prof, "kind", path, set(_PROFILE_KEYS))
            if pk:
                req, opt = _PROFILE_KEYS[pk]
                ck.keys(prof, path, req, opt)
                if pk == "cosine":
                    mode = prof.get("mode")
                    if (not isinstance(mode, list)
                            or not all(isinstance(m, int) and m >= 0 for m in mode)):
                        ck.fail(f"{path}.mode", "must be nonnegative ints")
                    elif modes and (len(mode) != len(modes)
                                    or any(m >= k for m, k in zip(mode, modes))):
                        ck.fail(f"{path}.mode", "outside the basis")
                if name == "phi":
                    initial_phi = prof
                else:
                    initial_sigma = prof
            elif "kind" not in prof:
                ck.fail(f"{path}.kind", "missing key 'kind'")
    else:
        ck.fail("$.initial", "must be an object")

    cadence = raw.get("cadence", 1)
    if not isinstance(cadence, int) or cadence < 1:
        ck.fail("$.cadence", "must be a positive int")
        cadence = 1
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        ck.fail("$.seed", "must be an int")
        seed = 0
    if "output_dir" in raw and not isinstance(raw["output_dir"], str):
        ck.fail("$.output_dir", "must be a string")

    if ck.violations:
        raise ConfigError(ck.violations)

    config = RunConfig(
        raw=raw, domain=domain, modes=modes, dt=dt, T=T,
        scheme=scheme, kappa=kappa, energy_guard=energy_guard,
        tol_E=tol_E, max_halvings=max_halvings,
        params=params, potential_kind=potential_kind,
        mobility_m=mobility_m, mobility_n=mobility_n,
        source_spec=source_spec, gamma_v_spec=gamma_v_spec,
        sigma_inf_value=sigma_inf_value,
        initial_phi=initial_phi, initial_sigma=initial_sigma,
        limit_mode=limit_mode, cadence=cadence, seed=seed,
    )

    # structural hypotheses on the assembled model pieces
    basis = config.build_basis()
    model = config.build_model(basis)
    report = md.validate_assumptions(
        model.params, model.potential, model.mobility_m, model.mobility_n,
        model.sources,
        gamma_v_zero=model.gamma_v is None,
        allow_limit_modes=limit_mode != "none",
    )
    config.validation = report
    hard_failures = [c for c in report.failures() if c.name != "A5 growth regime"]
    if hard_failures:
        raise ConfigError(
            [f"$.params: {c.name}" + (f" ({c.detail})" if c.detail else "")
             for c in hard_failures]
        )
    return config
