"""Structure factors, cross-sections and transport coefficients.

Everything here is a pure function of its arguments.  Vector arguments are
arrays whose last axis holds the three Cartesian components, so a batch of
momenta has shape ``(n, 3)``.

Internal units are dimensionless: ``hbar``, the test mass ``M``, ``beta`` and
the gas density ``n`` are free parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate

__all__ = [
    "PhysicalParams",
    "CrossSectionModel",
    "QuadratureError",
    "energy_transfer",
    "structure_factor_mb",
    "structure_factor_brownian",
    "log_structure_factor",
    "structure_factor",
    "differential_cross_section",
    "friction_coefficient",
    "friction_coefficient_closed_form",
    "position_diffusion_coefficient",
    "einstein_coefficient",
    "smoluchowski_coefficient",
    "correction_factor",
    "detailed_balance_residual",
    "radial_cutoff",
]

StructureForm = Literal["mb", "brownian"]


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, what: str, value: float, abserr: float, rtol: float):
        self.value = value
        self.abserr = abserr
        self.rtol = rtol
        achieved = abserr / abs(value) if value else math.inf
        super().__init__(
            f"{what}: quadrature reached relative error {achieved:.3e} "
            f"(requested {rtol:.1e}, value {value:.6e})"
        )


@dataclass(frozen=True)
class PhysicalParams:
    """Test particle in an ideal Maxwell-Boltzmann gas."""

    test_mass: float = 1.0
    gas_mass: float = 0.1
    beta: float = 1.0
    density: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("test_mass", "gas_mass", "beta", "density"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not (math.isfinite(self.hbar) and self.hbar >= 0):
            raise ValueError(f"hbar must be finite and >= 0, got {self.hbar!r}")

    @property
    def M(self) -> float:
        return self.test_mass

    @property
    def m(self) -> float:
        return self.gas_mass

    @property
    def alpha(self) -> float:
        """Mass ratio m/M."""
        return self.gas_mass / self.test_mass

    @property
    def thermal_momentum_sq(self) -> float:
        return self.test_mass / self.beta

    @property
    def thermal_length_sq(self) -> float:
        return self.beta * self.hbar**2 / (4.0 * self.test_mass)

    def require_quantum(self, what: str) -> None:
        if self.hbar == 0:
            raise ValueError(f"{what} is a quantum quantity and needs hbar > 0")

    def replace(self, **changes) -> "PhysicalParams":
        values = {k: getattr(self, k) for k in ("test_mass", "gas_mass", "beta", "density", "hbar")}
        values.update(changes)
        return PhysicalParams(**values)


@dataclass(frozen=True)
class CrossSectionModel:
    """Single-collision cross-section as a function of the transfer modulus.

    ``constant``: sigma0.  ``gaussian``: sigma0 * exp(-q^2 / (2 width^2)).
    ``tabulated``: linear interpolation of ``(table_q, table_sigma)`` with the
    end values held constant outside the table.
    """

    kind: Literal["constant", "gaussian", "tabulated"] = "constant"
    sigma0: float = 1.0
    width: float | None = None
    table_q: tuple[float, ...] = field(default=())
    table_sigma: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind == "constant":
            if not self.sigma0 >= 0:
                raise ValueError("sigma0 must be >= 0")
        elif self.kind == "gaussian":
            if not self.sigma0 >= 0:
                raise ValueError("sigma0 must be >= 0")
            if self.width is None or not self.width > 0:
                raise ValueError("gaussian cross-section needs width > 0")
        elif self.kind == "tabulated":
            q = np.asarray(self.table_q, dtype=float)
            s = np.asarray(self.table_sigma, dtype=float)
            if q.ndim != 1 or q.size < 2 or q.shape != s.shape:
                raise ValueError("tabulated cross-section needs matching 1-D tables of length >= 2")
            if np.any(np.diff(q) <= 0):
                raise ValueError("table_q must be strictly increasing")
            if np.any(s < 0) or not np.all(np.isfinite(s)):
                raise ValueError("table_sigma must be finite and >= 0")
            object.__setattr__(self, "table_q", tuple(float(v) for v in q))
            object.__setattr__(self, "table_sigma", tuple(float(v) for v in s))
        else:
            raise ValueError(f"unknown cross-section kind {self.kind!r}")

    @classmethod
    def constant(cls, sigma0: float = 1.0) -> "CrossSectionModel":
        return cls("constant", sigma0)

    @classmethod
    def gaussian(cls, sigma0: float, width: float) -> "CrossSectionModel":
        return cls("gaussian", sigma0, width)

    @classmethod
    def tabulated(cls, q, sigma) -> "CrossSectionModel":
        return cls("tabulated", 0.0, None, tuple(q), tuple(sigma))

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "constant":
            return np.full_like(q, self.sigma0)
        if self.kind == "gaussian":
            return self.sigma0 * np.exp(-0.5 * (q / self.width) ** 2)
        return np.interp(q, self.table_q, self.table_sigma)

    @property
    def max_value(self) -> float:
        if self.kind == "tabulated":
            return max(self.table_sigma)
        return self.sigma0

    @property
    def is_null(self) -> bool:
        return self.max_value == 0.0

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.table_q if self.kind == "tabulated" else ()


def _norm(v):
    return np.sqrt(np.sum(np.square(v), axis=-1))


def energy_transfer(q, p, params: PhysicalParams):
    """Energy q^2/2M + p.q/M gained by the test particle when p -> p + q."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    M = params.test_mass
    return (np.sum(q * q, axis=-1) / 2.0 + np.sum(p * q, axis=-1)) / M


def _prefactor(params: PhysicalParams) -> float:
    return math.sqrt(params.beta * params.gas_mass / (2.0 * math.pi))


def log_structure_factor(q_mod, E, params: PhysicalParams, form: StructureForm = "mb"):
    """log S(q, E) as a function of the transfer modulus and energy transfer.

    Raises ``ValueError`` for q = 0, where the 1/q prefactor is singular.
    """
    q_mod = np.asarray(q_mod, dtype=float)
    E = np.asarray(E, dtype=float)
    if np.any(q_mod <= 0):
        raise ValueError("structure factor is singular at q = 0")
    b, m = params.beta, params.gas_mass
    base = math.log(_prefactor(params)) - np.log(q_mod)
    if form == "mb":
        # (2mE + q^2)^2 / q^2 expanded; avoids cancellation near E = -q^2/2m
        return base - 0.5 * b * m * E**2 / q_mod**2 - 0.5 * b * E - (b / (8.0 * m)) * q_mod**2
    if form == "brownian":
        return base - (b / (8.0 * m)) * q_mod**2 - 0.5 * b * E
    raise ValueError(f"unknown structure factor form {form!r}")


def structure_factor(q_mod, E, params: PhysicalParams, form: StructureForm = "mb"):
    return np.exp(log_structure_factor(q_mod, E, params, form))


def structure_factor_mb(q, p, params: PhysicalParams):
    """Ideal-gas dynamic structure factor at transfer q for a particle at p."""
    return structure_factor(_norm(q), energy_transfer(q, p, params), params, "mb")


def structure_factor_brownian(q, p, params: PhysicalParams):
    """Small mass-ratio limit of the ideal-gas structure factor."""
    return structure_factor(_norm(q), energy_transfer(q, p, params), params, "brownian")


def differential_cross_section(p, q, params: PhysicalParams, xs: CrossSectionModel):
    """(|p+q|/|p|) Sigma(q) S(q, E(q, p)) with the full ideal-gas S."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p_mod = _norm(p)
    if np.any(p_mod <= 0):
        raise ValueError("differential cross-section needs |p| > 0")
    q_mod = _norm(q)
    ratio = _norm(p + q) / p_mod
    return ratio * xs(q_mod) * structure_factor_mb(q, p, params)


def detailed_balance_residual(q_mod, E, params: PhysicalParams, which: StructureForm = "mb",
                              relative: bool = False):
    """S(q,E) - exp(-beta E) S(q,-E), evaluated in log space.

    With ``relative=True`` the residual is divided by S(q, E); this form stays
    well conditioned for extreme beta*E where S itself under/overflows.
    """
    log_fwd = log_structure_factor(q_mod, E, params, which)
    log_bwd = log_structure_factor(q_mod, -np.asarray(E, dtype=float), params, which) - params.beta * np.asarray(E)
    rel = -np.expm1(log_bwd - log_fwd)
    if relative:
        return rel
    return np.exp(log_fwd) * rel


def radial_cutoff(params: PhysicalParams) -> float:
    """Upper radial limit beyond which the Gaussian tail is below 1e-14."""
    return 10.0 * math.sqrt(8.0 * params.gas_mass / (params.beta * (1.0 + 2.0 * params.alpha)))


def friction_coefficient(params: PhysicalParams, xs: CrossSectionModel, rtol: float = 1e-10) -> float:
    """Friction rate eta of the Brownian-limit Kramers equation.

    eta = (n beta / 6 M^3) sqrt(beta m / 2 pi) int d^3q q Sigma(q) exp(-beta (1+2 alpha) q^2 / 8m),
    reduced to a radial integral and evaluated adaptively.
    """
    if xs.is_null:
        return 0.0
    M, b, m = params.test_mass, params.beta, params.gas_mass
    decay = b * (1.0 + 2.0 * params.alpha) / (8.0 * m)
    q_max = radial_cutoff(params)

    def integrand(q):
        return q**3 * float(xs(q)) * math.exp(-decay * q * q)

    points = [p for p in xs.breakpoints if 0 < p < q_max] or None
    value, abserr = integrate.quad(integrand, 0.0, q_max, epsabs=0.0, epsrel=rtol,
                                   limit=500, points=points)
    if value > 0 and abserr > rtol * value:
        raise QuadratureError("friction coefficient", value, abserr, rtol)
    return params.density / (6.0 * M**3) * b * _prefactor(params) * 4.0 * math.pi * value


def friction_coefficient_closed_form(params: PhysicalParams, sigma0: float) -> float:
    """eta for a constant cross-section, from the Gaussian moment int q^3 e^{-a q^2} = 1/(2a^2)."""
    M, b, m, n = params.test_mass, params.beta, params.gas_mass, params.density
    return (64.0 * math.pi / 3.0) * n * sigma0 * m**2 * _prefactor(params) / (
        M**3 * b * (1.0 + 2.0 * params.alpha) ** 2
    )


def position_diffusion_coefficient(eta: float, params: PhysicalParams) -> float:
    """Quantum position diffusion D_xx = eta beta hbar^2 / 16 M."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    return eta * params.beta * params.hbar**2 / (16.0 * params.test_mass)


def einstein_coefficient(eta: float, params: PhysicalParams) -> float:
    return 1.0 / (eta * params.test_mass * params.beta)


def smoluchowski_coefficient(eta: float, params: PhysicalParams) -> float:
    """Einstein coefficient plus the quantum position diffusion."""
    return einstein_coefficient(eta, params) + position_diffusion_coefficient(eta, params)


def correction_factor(eta: float, params: PhysicalParams) -> float:
    """Ratio of the quantum to the classical Smoluchowski coefficient."""
    return 1.0 + (eta * params.beta * params.hbar) ** 2 / 16.0
