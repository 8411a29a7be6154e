"""Quantum evolutions of the test particle.

Three levels of description live here:

* Gaussian states under the quantum Brownian (Lindblad) generator, whose
  first and second moments obey a closed linear ODE system.
* The operator-valued Boltzmann master equation on a uniform 1-D momentum
  lattice, rho[a, b] = <p_a| rho |p_b>, with momentum transfers restricted to
  lattice multiples so every collision lands on a node.
* The Wigner-function form of the same collision term in the Brownian limit,
  Fourier transformed in x, where the quantum correction multiplies the loss
  term by cosh(beta hbar q k / 4M) at x-wavenumber k.

Momentum transfers that would leave the lattice are dropped from both gain
and loss by default ("conserving" boundary).  The truncated generator is then
itself of Lindblad form: trace is exact and the discrete Maxwellian is exactly
stationary.  ``boundary="leaky"`` keeps the full loss instead and reports the
probability lost through the edges.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp

from .physics import (CrossSectionModel, PhysicalParams, StructureForm, log_structure_factor,
                      position_diffusion_coefficient)

__all__ = [
    "UncertaintyViolation",
    "PositivityError",
    "GaussianState",
    "GaussianTrajectory",
    "gaussian_propagate",
    "gaussian_rhs",
    "coherence_decay_rate",
    "MomentumLattice",
    "MomentumGridDensityMatrix",
    "GridDiagnostics",
    "GridEvolution",
    "nonabelian_grid_evolve",
    "lattice_rates",
    "WignerSpectralField",
    "WignerBoltzmannOperator",
    "wigner_boltzmann_step",
    "wigner_evolve",
    "WignerGridField",
    "wigner_transform",
]

Boundary = Literal["conserving", "leaky"]


class UncertaintyViolation(RuntimeError):
    """sigma_xx sigma_pp - sigma_xp^2 fell below hbar^2 / 4."""

    def __init__(self, t: float, det: float, bound: float):
        self.t = t
        self.det = det
        self.bound = bound
        super().__init__(f"uncertainty certificate violated at t = {t:.6g}: det = {det:.12g} < {bound:.12g}")


class PositivityError(RuntimeError):
    """The density matrix acquired a significantly negative eigenvalue."""


# ---------------------------------------------------------------------------
# Gaussian states


@dataclass(frozen=True)
class GaussianState:
    """Means and covariance of one Cartesian direction."""

    mean_x: float = 0.0
    mean_p: float = 0.0
    sxx: float = 1.0
    sxp: float = 0.0
    spp: float = 1.0

    def __post_init__(self):
        if not (self.sxx > 0 and self.spp > 0):
            raise ValueError("variances must be positive")

    @property
    def uncertainty_det(self) -> float:
        return self.sxx * self.spp - self.sxp**2

    def is_physical(self, hbar: float, rtol: float = 1e-9) -> bool:
        bound = hbar**2 / 4.0
        return self.uncertainty_det >= bound * (1.0 - rtol)

    def as_array(self) -> np.ndarray:
        return np.array([self.mean_x, self.mean_p, self.sxx, self.sxp, self.spp])

    @classmethod
    def from_array(cls, v) -> "GaussianState":
        return cls(*(float(c) for c in v))

    @classmethod
    def minimum_uncertainty(cls, spp: float, hbar: float, mean_x: float = 0.0, mean_p: float = 0.0):
        """Uncorrelated state saturating sxx spp = hbar^2 / 4."""
        return cls(mean_x, mean_p, hbar**2 / (4.0 * spp), 0.0, spp)


def gaussian_rhs(state, eta: float, params: PhysicalParams, d_xx: float):
    """Time derivative of (mean_x, mean_p, sxx, sxp, spp)."""
    mx, mp, sxx, sxp, spp = state
    M = params.test_mass
    return np.array([
        mp / M,
        -eta * mp,
        2.0 * sxp / M + 2.0 * d_xx,
        spp / M - eta * sxp,
        -2.0 * eta * spp + 2.0 * eta * params.thermal_momentum_sq,
    ])


@dataclass
class GaussianTrajectory:
    t: np.ndarray
    states: np.ndarray  # columns mean_x, mean_p, sxx, sxp, spp
    d_xx: float
    hbar: float

    @property
    def final(self) -> GaussianState:
        return GaussianState.from_array(self.states[-1])

    @property
    def uncertainty_det(self) -> np.ndarray:
        s = self.states
        return s[:, 2] * s[:, 4] - s[:, 3] ** 2

    def msd_slope(self, params: PhysicalParams) -> np.ndarray:
        """d sigma_xx / dt along the trajectory, from the moment equations."""
        return 2.0 * self.states[:, 3] / params.test_mass + 2.0 * self.d_xx

    def first_violation(self, rtol: float = 1e-9):
        bound = self.hbar**2 / 4.0
        bad = np.nonzero(self.uncertainty_det < bound * (1.0 - rtol))[0]
        return None if bad.size == 0 else float(self.t[bad[0]])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "mean_x", "mean_p", "sxx", "sxp", "spp", "uncertainty_det"])
            for t, row, det in zip(self.t, self.states, self.uncertainty_det):
                writer.writerow([repr(float(v)) for v in (t, *row, det)])


def gaussian_propagate(s0: GaussianState, eta: float, t_end: float, params: PhysicalParams,
                       n_record: int = 401, position_diffusion: bool = True, check: bool = True,
                       rtol: float = 1e-10) -> GaussianTrajectory:
    """Exact moment dynamics of the quantum Brownian generator.

    The generator is quadratic, so means and covariances close; the ODE is
    integrated with an embedded 4(5) Runge-Kutta pair.  The uncertainty
    certificate is checked on ``n_record`` evenly spaced times and a
    violation raises ``UncertaintyViolation`` unless ``check`` is false.
    ``position_diffusion=False`` drops the D_xx term, which is what breaks
    complete positivity.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    if not s0.is_physical(params.hbar):
        raise ValueError("initial state violates sxx spp - sxp^2 >= hbar^2/4")
    d_xx = position_diffusion_coefficient(eta, params) if position_diffusion else 0.0
    t_eval = np.linspace(0.0, t_end, n_record)
    scale = max(abs(v) for v in s0.as_array()) or 1.0
    sol = solve_ivp(lambda t, y: gaussian_rhs(y, eta, params, d_xx), (0.0, t_end), s0.as_array(),
                    method="RK45", t_eval=t_eval, rtol=rtol, atol=rtol * 1e-3 * scale)
    if not sol.success:
        raise RuntimeError(f"moment integration failed: {sol.message}")
    traj = GaussianTrajectory(sol.t, sol.y.T.copy(), d_xx, params.hbar)
    if check:
        t_bad = traj.first_violation()
        if t_bad is not None:
            k = int(np.searchsorted(traj.t, t_bad))
            raise UncertaintyViolation(t_bad, float(traj.uncertainty_det[k]), params.hbar**2 / 4.0)
    return traj


def coherence_decay_rate(dx_sep, eta: float, params: PhysicalParams):
    """Decay rate (eta/hbar^2) dp_th^2 dx^2 of the position coherence rho(x, x + dx)."""
    params.require_quantum("coherence decay rate")
    if eta < 0:
        raise ValueError("eta must be >= 0")
    return eta / params.hbar**2 * params.thermal_momentum_sq * np.square(dx_sep)


# ---------------------------------------------------------------------------
# momentum lattice


@dataclass(frozen=True)
class MomentumLattice:
    """N equally spaced momenta centred on zero."""

    n: int
    dp: float

    def __post_init__(self):
        if self.n < 2 or not self.dp > 0:
            raise ValueError("lattice needs n >= 2 and dp > 0")

    @classmethod
    def spanning(cls, n: int, p_max: float) -> "MomentumLattice":
        return cls(n, 2.0 * p_max / (n - 1))

    @property
    def p(self) -> np.ndarray:
        return (np.arange(self.n) - 0.5 * (self.n - 1)) * self.dp

    @property
    def p_max(self) -> float:
        return 0.5 * (self.n - 1) * self.dp

    def maxwell(self, params: PhysicalParams) -> np.ndarray:
        g = np.exp(-params.beta * self.p**2 / (2.0 * params.test_mass))
        return g / (g.sum() * self.dp)


def lattice_rates(lattice: MomentumLattice, params: PhysicalParams, xs: CrossSectionModel,
                  form: StructureForm = "mb", boundary: Boundary = "conserving", reach: int | None = None):
    """Jump rates on the lattice.

    Returns ``(shifts, rates)`` where ``rates[s, c]`` is the rate of the jump
    p_c -> p_c + shifts[s] * dp, i.e. (n/M^2) Sigma(|q|) S1(q, p_c) dp with the
    one-dimensional structure factor.  With a conserving boundary, jumps
    leaving the lattice get rate zero.
    """
    if reach is None:
        reach = lattice.n - 1
    shifts = np.array([j for j in range(-reach, reach + 1) if j != 0])
    p = lattice.p
    M = params.test_mass
    q = shifts[:, None] * lattice.dp
    E = (q**2 / 2.0 + p[None, :] * q) / M
    S = np.exp(log_structure_factor(np.abs(q) * np.ones_like(E), E, params, form))
    rates = params.density / M**2 * xs(np.abs(q)) * S * lattice.dp
    if boundary == "conserving":
        target = np.arange(lattice.n)[None, :] + shifts[:, None]
        rates = np.where((target >= 0) & (target < lattice.n), rates, 0.0)
    elif boundary != "leaky":
        raise ValueError(f"unknown boundary {boundary!r}")
    return shifts, rates


@dataclass
class MomentumGridDensityMatrix:
    """rho[a, b] = <p_a|rho|p_b> on a momentum lattice, trace sum rho[a, a] dp = 1."""

    lattice: MomentumLattice
    rho: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (self.lattice.n, self.lattice.n):
            raise ValueError("rho shape does not match the lattice")

    def trace(self) -> float:
        return float(np.trace(self.rho).real * self.lattice.dp)

    def hermiticity_error(self) -> float:
        return float(np.abs(self.rho - self.rho.conj().T).max())

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T) * self.lattice.dp)

    def diagonal(self) -> np.ndarray:
        return self.rho.diagonal().real.copy()

    def check(self, tol: float = 1e-12) -> None:
        if self.hermiticity_error() > tol * max(1.0, np.abs(self.rho).max()):
            raise ValueError("density matrix is not Hermitian")
        if abs(self.trace() - 1.0) > 1e-8:
            raise ValueError(f"density matrix trace {self.trace():.12g} != 1")
        ev = self.eigenvalues()
        if ev.min() < -1e-10 * max(ev.max(), 1e-300):
            raise ValueError("density matrix is not positive semidefinite")

    @classmethod
    def thermal(cls, lattice: MomentumLattice, params: PhysicalParams) -> "MomentumGridDensityMatrix":
        return cls(lattice, np.diag(lattice.maxwell(params)).astype(complex))

    @classmethod
    def diagonal_state(cls, lattice: MomentumLattice, weights) -> "MomentumGridDensityMatrix":
        w = np.asarray(weights, dtype=float)
        return cls(lattice, np.diag(w / (w.sum() * lattice.dp)).astype(complex))

    @classmethod
    def pure(cls, lattice: MomentumLattice, psi) -> "MomentumGridDensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / math.sqrt(float(np.sum(np.abs(psi) ** 2)) * lattice.dp)
        return cls(lattice, np.outer(psi, psi.conj()))

    @classmethod
    def wavepacket(cls, lattice: MomentumLattice, p0: float, width: float, x0: float = 0.0,
                   hbar: float = 1.0) -> "MomentumGridDensityMatrix":
        p = lattice.p
        psi = np.exp(-((p - p0) ** 2) / (4.0 * width**2) - 1j * p * x0 / hbar)
        return cls.pure(lattice, psi)


@dataclass
class GridDiagnostics:
    t: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    min_eig: list = field(default_factory=list)
    offdiag_l2: list = field(default_factory=list)
    diag_l1_dist_to_maxwell: list = field(default_factory=list)
    hermiticity: list = field(default_factory=list)

    COLUMNS = ("t", "trace", "min_eig", "offdiag_l2", "diag_l1_dist_to_maxwell")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in zip(*(getattr(self, k) for k in self.COLUMNS)):
                writer.writerow([repr(float(v)) for v in row])


@dataclass
class GridEvolution:
    state: MomentumGridDensityMatrix
    diagnostics: GridDiagnostics
    dt: float
    steps: int
    leaked: float
    tracked: dict = field(default_factory=dict)  # (a, b) -> complex values at record times


class _NonAbelianGenerator:
    """Collision part of the master equation on the lattice, as a superoperator."""

    def __init__(self, lattice, params, xs, form, boundary):
        self.shifts, rates = lattice_rates(lattice, params, xs, form, boundary)
        self.amp = np.sqrt(rates)
        self.loss = rates.sum(axis=0)
        self.half_loss = 0.5 * (self.loss[:, None] + self.loss[None, :])
        self.n = lattice.n

    def __call__(self, rho):
        out = -self.half_loss * rho
        n = self.n
        for j, a in zip(self.shifts, self.amp):
            src = (a[:, None] * a[None, :]) * rho
            if j > 0:
                out[j:, j:] += src[: n - j, : n - j]
            else:
                out[: n + j, : n + j] += src[-j:, -j:]
        return out


def nonabelian_grid_evolve(rho0: MomentumGridDensityMatrix, t_end: float, dt: float, params: PhysicalParams,
                           xs: CrossSectionModel, form: StructureForm = "mb", boundary: Boundary = "conserving",
                           record_every: int = 1, track=(), check_positivity: bool = True) -> GridEvolution:
    """Evolve rho under free motion plus the operator-valued collision term.

    d rho(p,p')/dt = -(i/hbar)(p^2 - p'^2)/2M rho(p,p')
                     + sum_q [sqrt(S(q,p-q) S(q,p'-q)) rho(p-q,p'-q) - (S(q,p) + S(q,p'))/2 rho(p,p')]
                       * (n/M^2) Sigma(q) dp

    with the one-dimensional structure factor.  The kinetic phase is applied
    exactly in two half steps around a classical RK4 step of the collision
    term.  Smallest eigenvalue below -1e-6 times the largest raises
    ``PositivityError``.
    """
    params.require_quantum("non-Abelian grid evolution")
    lat = rho0.lattice
    gen = _NonAbelianGenerator(lat, params, xs, form, boundary)
    r_max = float(gen.loss.max())
    if r_max > 0 and dt * r_max > 1.0 + 1e-12:
        from .fokker_planck import StabilityError
        raise StabilityError(dt, 1.0 / r_max, "non-Abelian grid evolution")
    n_steps = max(1, math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    h = t_end / n_steps if n_steps else dt
    p = lat.p
    energy = p**2 / (2.0 * params.test_mass)
    half_phase = np.exp(-0.5j * h * (energy[:, None] - energy[None, :]) / params.hbar)
    maxwell = lat.maxwell(params)

    diag = GridDiagnostics()
    tracked = {tuple(k): [] for k in track}

    def record(rho, t):
        m = MomentumGridDensityMatrix(lat, rho, t)
        ev = m.eigenvalues()
        if check_positivity and ev.min() < -1e-6 * max(ev.max(), 1e-300):
            raise PositivityError(f"smallest eigenvalue {ev.min():.3e} at t = {t:.6g}")
        off = rho - np.diag(rho.diagonal())
        diag.t.append(t)
        diag.trace.append(m.trace())
        diag.min_eig.append(float(ev.min()))
        diag.offdiag_l2.append(float(np.linalg.norm(off) * lat.dp))
        diag.diag_l1_dist_to_maxwell.append(float(np.abs(rho.diagonal().real - maxwell).sum() * lat.dp))
        diag.hermiticity.append(m.hermiticity_error())
        for (a, b), series in tracked.items():
            series.append(rho[a, b])

    rho = np.array(rho0.rho, dtype=complex)
    record(rho, rho0.t)
    for step in range(1, n_steps + 1):
        rho = rho * half_phase
        k1 = gen(rho)
        k2 = gen(rho + 0.5 * h * k1)
        k3 = gen(rho + 0.5 * h * k2)
        k4 = gen(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = rho * half_phase
        if step % record_every == 0 or step == n_steps:
            record(rho, rho0.t + step * h)
    final = MomentumGridDensityMatrix(lat, rho, rho0.t + n_steps * h)
    leaked = rho0.trace() - final.trace()
    return GridEvolution(final, diag, h, n_steps, leaked,
                         {k: np.asarray(v) for k, v in tracked.items()})


# ---------------------------------------------------------------------------
# Wigner function in Fourier-x representation


@dataclass
class WignerSpectralField:
    """f~(k, p) = FFT over the periodic x grid of the Wigner function f(x, p)."""

    length: float
    lattice: MomentumLattice
    values: np.ndarray  # shape (n_x, n_p), complex
    t: float = 0.0

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_x, d=self.length / self.n_x)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.length / self.n_x

    @classmethod
    def from_real(cls, length: float, lattice: MomentumLattice, f, t: float = 0.0) -> "WignerSpectralField":
        f = np.asarray(f, dtype=float)
        return cls(length, lattice, np.fft.fft(f, axis=0), t)

    def to_real(self) -> np.ndarray:
        return np.fft.ifft(self.values, axis=0).real

    def reality_error(self) -> float:
        """max |f~(-k) - conj f~(k)|."""
        flipped = np.roll(self.values[::-1], 1, axis=0)
        return float(np.abs(flipped - self.values.conj()).max())

    def homogeneous(self) -> np.ndarray:
        """Spatial average of f(x, p) over the period."""
        return self.values[0].real / self.n_x


class WignerBoltzmannOperator:
    """Brownian-limit collision term acting on f~(k, p) on a momentum lattice.

    gain(k, p) = sum_q w(q) exp(-beta q (p-q) / 2M) f~(k, p-q)
    loss(k, p) = sum_q w(q) F(q k) exp(-beta q p / 2M) f~(k, p)

    with w(q) = (n/M^2) sqrt(beta m/2pi) Sigma(|q|)/|q| exp(-beta (1+2alpha) q^2/8m) dp.
    F = cosh(beta hbar q k / 4M) in quantum mode and 1 in classical mode.
    """

    def __init__(self, length: float, n_x: int, lattice: MomentumLattice, params: PhysicalParams,
                 xs: CrossSectionModel, mode: Literal["quantum", "classical"] = "quantum",
                 boundary: Boundary = "conserving"):
        if mode not in ("quantum", "classical"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.lattice = lattice
        n = lattice.n
        M, b, m = params.test_mass, params.beta, params.gas_mass
        self.shifts = np.array([j for j in range(-(n - 1), n) if j != 0])
        q = self.shifts * lattice.dp
        p = lattice.p
        w = (params.density / M**2 * math.sqrt(b * m / (2.0 * math.pi)) * xs(np.abs(q)) / np.abs(q)
             * np.exp(-b * (1.0 + 2.0 * params.alpha) * q**2 / (8.0 * m)) * lattice.dp)
        # rate of p_c -> p_c + q
        rates = w[:, None] * np.exp(-b * q[:, None] * p[None, :] / (2.0 * M))
        if boundary == "conserving":
            target = np.arange(n)[None, :] + self.shifts[:, None]
            rates = np.where((target >= 0) & (target < n), rates, 0.0)
        elif boundary != "leaky":
            raise ValueError(f"unknown boundary {boundary!r}")
        self.rates = rates
        k = 2.0 * np.pi * np.fft.fftfreq(n_x, d=length / n_x)
        if mode == "quantum":
            factor = np.cosh(b * params.hbar * q[:, None] * k[None, :] / (4.0 * M))  # (shift, k)
        else:
            factor = np.ones((q.size, k.size))
        self.loss = factor.T @ rates  # (k, p)
        self.k = k
        self.velocity = p / M

    @property
    def max_rate(self) -> float:
        return float(self.loss.max())

    def __call__(self, f):
        n = self.lattice.n
        out = -self.loss * f
        for j, r in zip(self.shifts, self.rates):
            src = r[None, :] * f
            if j > 0:
                out[:, j:] += src[:, : n - j]
            else:
                out[:, : n + j] += src[:, -j:]
        return out


def wigner_boltzmann_step(field_: WignerSpectralField, dt: float, params: PhysicalParams,
                          xs: CrossSectionModel, mode: Literal["quantum", "classical"] = "quantum",
                          operator: WignerBoltzmannOperator | None = None) -> WignerSpectralField:
    """Advance f~ by one step: exact free streaming split around a Heun collision step."""
    op = operator or WignerBoltzmannOperator(field_.length, field_.n_x, field_.lattice, params, xs, mode)
    if dt * op.max_rate > 1.0 + 1e-12:
        from .fokker_planck import StabilityError
        raise StabilityError(dt, 1.0 / op.max_rate, "Wigner spectral step")
    stream = np.exp(-0.5j * dt * np.outer(op.k, op.velocity))
    f = field_.values * stream
    k1 = op(f)
    k2 = op(f + dt * k1)
    f = (f + 0.5 * dt * (k1 + k2)) * stream
    return WignerSpectralField(field_.length, field_.lattice, f, field_.t + dt)


def wigner_evolve(field_: WignerSpectralField, t_end: float, dt: float, params: PhysicalParams,
                  xs: CrossSectionModel, mode: Literal["quantum", "classical"] = "quantum",
                  boundary: Boundary = "conserving") -> WignerSpectralField:
    op = WignerBoltzmannOperator(field_.length, field_.n_x, field_.lattice, params, xs, mode, boundary)
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    out = field_
    for _ in range(n_steps):
        out = wigner_boltzmann_step(out, h, params, xs, mode, operator=op)
    return out


# ---------------------------------------------------------------------------
# Wigner transform of a lattice density matrix


@dataclass
class WignerGridField:
    """Wigner function on the half-index momentum grid.

    ``p`` holds the 2N-1 pair centres (p_a + p_b)/2; even indices coincide
    with lattice nodes.  ``x`` spans one period 2 pi hbar / dp.  The x-integral
    at a lattice node returns rho[a, a]; at half-integer centres it is zero.
    """

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray  # (n_x, 2N-1)
    dx: float
    dp: float  # lattice spacing, the integration weight of the node columns

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.dx

    def total(self) -> float:
        return float(self.values.sum() * self.dx * self.dp)


def wigner_transform(state: MomentumGridDensityMatrix, hbar: float, n_x: int | None = None) -> WignerGridField:
    """f(x, p_c) = (1/L) sum_d exp(i x d dp / hbar) rho[(s+d)/2, (s-d)/2], L = 2 pi hbar / dp.

    The difference index d runs over values of the same parity as the centre
    index s.  ``n_x`` must be at least 2N - 1 so the difference frequencies
    are not aliased on the x grid.
    """
    if not hbar > 0:
        raise ValueError("Wigner transform needs hbar > 0")
    lat = state.lattice
    N = lat.n
    if n_x is None:
        n_x = 2 * N
    if n_x < 2 * N - 1:
        raise ValueError(f"x grid of {n_x} points aliases the {2 * N - 1} momentum differences; need n_x >= {2 * N - 1}")
    if state.hermiticity_error() > 1e-10 * max(1.0, np.abs(state.rho).max()):
        raise ValueError("Wigner transform needs a Hermitian density matrix")
    length = 2.0 * math.pi * hbar / lat.dp
    x = np.arange(n_x) * length / n_x
    rho = state.rho
    # coefficient table c[s, d + N - 1] = rho[(s+d)/2, (s-d)/2]
    a_idx, b_idx = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    s_idx = (a_idx + b_idx).ravel()
    d_idx = (a_idx - b_idx).ravel()
    coef = np.zeros((2 * N - 1, 2 * N - 1), dtype=complex)
    coef[s_idx, d_idx + N - 1] = rho.ravel()
    d = np.arange(-(N - 1), N)
    phase = np.exp(1j * np.outer(x, d) * lat.dp / hbar)  # (n_x, d)
    values = (phase @ coef.T) / length
    if np.abs(values.imag).max() > 1e-12 * max(1.0, np.abs(values).max()):
        raise ValueError("Wigner transform produced a complex result; rho is not Hermitian")
    centres = 0.5 * (np.arange(2 * N - 1) - (N - 1)) * lat.dp
    return WignerGridField(x, centres, values.real, length / n_x, lat.dp)
