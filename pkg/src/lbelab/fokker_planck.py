"""Grid solvers for the Kramers and Smoluchowski equations in one direction.

Phase space is a periodic x axis times a bounded p axis with zero flux at
+-p_max.  A step is a Strang splitting

    transport(dt/2) -> collision(dt) -> x-diffusion(dt) -> transport(dt/2)

where the collision operator eta d/dp [p f + (M/beta) df/dp] uses the
Chang-Cooper (Scharfetter-Gummel) exponentially fitted flux.  That flux
vanishes identically on the node values of exp(-beta p^2 / 2M), so the
discrete Maxwellian is an exact stationary state, and with the enforced
time-step bound the update is positivity preserving.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .physics import PhysicalParams, einstein_coefficient, position_diffusion_coefficient

__all__ = [
    "StabilityError",
    "PhaseSpaceGrid",
    "PhaseSpaceField",
    "PositionField",
    "MomentSeries",
    "KramersResult",
    "SmoluchowskiResult",
    "maxwell_profile",
    "gaussian_field",
    "gaussian_position_field",
    "stable_dt",
    "kramers_solve",
    "quantum_kramers_solve",
    "smoluchowski_solve",
    "smoluchowski_stable_dt",
    "high_friction_compare",
    "HighFrictionReport",
]

Transport = Literal["upwind", "limited", "spectral"]
SAFETY = 0.4


class StabilityError(ValueError):
    """Requested time step violates the explicit stability bound."""

    def __init__(self, dt: float, suggested: float, what: str = "solver"):
        self.dt = dt
        self.suggested = suggested
        super().__init__(f"{what}: dt = {dt:.6g} exceeds the stability bound; use dt <= {suggested:.6g}")


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Uniform grid: periodic x in [x_min, x_max), p in [-p_max, p_max] inclusive."""

    x_min: float = -10.0
    x_max: float = 10.0
    n_x: int = 64
    p_max: float = 8.0
    n_p: int = 128

    def __post_init__(self):
        if self.n_x < 8 or self.n_p < 8:
            raise ValueError("grid needs at least 8 nodes per axis")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dp(self) -> float:
        return 2.0 * self.p_max / (self.n_p - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(-self.p_max, self.p_max, self.n_p)

    def check_momentum_range(self, params: PhysicalParams) -> None:
        need = 6.0 * math.sqrt(params.thermal_momentum_sq)
        if self.p_max < need * (1 - 1e-12):
            raise ValueError(f"p_max = {self.p_max:g} must cover 6 thermal momenta ({need:g})")


@dataclass
class PhaseSpaceField:
    """f[i, j] = f(x_i, p_j) on a PhaseSpaceGrid."""

    grid: PhaseSpaceGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n_x, self.grid.n_p):
            raise ValueError(f"values shape {self.values.shape} does not match the grid")

    def copy(self) -> "PhaseSpaceField":
        return PhaseSpaceField(self.grid, self.values.copy(), self.t)

    def norm(self) -> float:
        return float(self.values.sum() * self.grid.dx * self.grid.dp)

    def marginal_x(self) -> "PositionField":
        return PositionField(self.grid.x_min, self.grid.x_max, self.values.sum(axis=1) * self.grid.dp, self.t)

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.grid.dx

    def moments(self) -> dict:
        return _moments(self.values, self.grid)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "p", "f"])
            for i, xv in enumerate(self.grid.x):
                for j, pv in enumerate(self.grid.p):
                    writer.writerow([repr(float(xv)), repr(float(pv)), repr(float(self.values[i, j]))])


@dataclass
class PositionField:
    """sigma[i] on a periodic x grid."""

    x_min: float
    x_max: float
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 8:
            raise ValueError("position field needs a 1-D array of at least 8 nodes")

    @property
    def n_x(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    def copy(self) -> "PositionField":
        return PositionField(self.x_min, self.x_max, self.values.copy(), self.t)

    def norm(self) -> float:
        return float(self.values.sum() * self.dx)

    def mean(self) -> float:
        return float(np.sum(self.x * self.values) * self.dx / self.norm())

    def variance(self) -> float:
        mu = self.mean()
        return float(np.sum((self.x - mu) ** 2 * self.values) * self.dx / self.norm())


@dataclass
class MomentSeries:
    t: list = field(default_factory=list)
    mean_x: list = field(default_factory=list)
    mean_p: list = field(default_factory=list)
    var_x: list = field(default_factory=list)
    var_p: list = field(default_factory=list)
    cov_xp: list = field(default_factory=list)
    norm: list = field(default_factory=list)

    COLUMNS = ("t", "mean_x", "mean_p", "var_x", "var_p", "cov_xp", "norm")

    def append(self, t: float, m: dict) -> None:
        self.t.append(t)
        for key in self.COLUMNS[1:]:
            getattr(self, key).append(m[key])

    def array(self, key: str) -> np.ndarray:
        return np.asarray(getattr(self, key))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in zip(*(getattr(self, k) for k in self.COLUMNS)):
                writer.writerow([repr(float(v)) for v in row])


@dataclass
class KramersResult:
    field: PhaseSpaceField
    moments: MomentSeries
    dt: float
    steps: int
    position_diffusion: float


@dataclass
class SmoluchowskiResult:
    field: PositionField
    t: np.ndarray
    variance: np.ndarray
    norm: np.ndarray
    coefficient: float
    dt: float
    steps: int


def _moments(f: np.ndarray, grid: PhaseSpaceGrid) -> dict:
    x, p = grid.x, grid.p
    w = grid.dx * grid.dp
    norm = f.sum() * w
    fx = f.sum(axis=1) * grid.dp
    fp = f.sum(axis=0) * grid.dx
    mx = np.dot(x, fx) * grid.dx / norm
    mp = np.dot(p, fp) * grid.dp / norm
    vx = np.dot((x - mx) ** 2, fx) * grid.dx / norm
    vp = np.dot((p - mp) ** 2, fp) * grid.dp / norm
    cxp = (x - mx) @ f @ (p - mp) * w / norm
    return {"norm": float(norm), "mean_x": float(mx), "mean_p": float(mp), "var_x": float(vx),
            "var_p": float(vp), "cov_xp": float(cxp)}


def maxwell_profile(grid: PhaseSpaceGrid, params: PhysicalParams, shift: float = 0.0) -> np.ndarray:
    """Node values of a (shifted) Maxwellian, normalised with the grid weight dp."""
    g = np.exp(-params.beta * (grid.p - shift) ** 2 / (2.0 * params.test_mass))
    return g / (g.sum() * grid.dp)


def gaussian_field(grid: PhaseSpaceGrid, params: PhysicalParams, x0: float = 0.0, var_x: float = 1.0,
                   p0: float = 0.0, var_p: float | None = None) -> PhaseSpaceField:
    """Product of a Gaussian in x and a Gaussian in p, normalised on the grid.

    ``var_p`` defaults to the thermal value, giving a shifted Maxwellian.
    """
    if var_p is None:
        var_p = params.thermal_momentum_sq
    gx = np.exp(-((grid.x - x0) ** 2) / (2.0 * var_x))
    gp = np.exp(-((grid.p - p0) ** 2) / (2.0 * var_p))
    f = np.outer(gx, gp)
    f /= f.sum() * grid.dx * grid.dp
    return PhaseSpaceField(grid, f)


def gaussian_position_field(x_min: float, x_max: float, n_x: int, x0: float = 0.0,
                            var: float = 1.0) -> PositionField:
    field_ = PositionField(x_min, x_max, np.zeros(n_x))
    g = np.exp(-((field_.x - x0) ** 2) / (2.0 * var))
    field_.values = g / (g.sum() * field_.dx)
    return field_


def _bernoulli(w):
    """B(w) = w / (exp(w) - 1), with B(0) = 1."""
    w = np.asarray(w, dtype=float)
    out = np.ones_like(w)
    nz = np.abs(w) > 1e-12
    out[nz] = w[nz] / np.expm1(w[nz])
    return out


class _CollisionOperator:
    """eta d/dp [p f + D df/dp] with Chang-Cooper fluxes and zero flux at the ends."""

    def __init__(self, grid: PhaseSpaceGrid, eta: float, params: PhysicalParams):
        p_half = 0.5 * (grid.p[1:] + grid.p[:-1])
        diff = params.thermal_momentum_sq
        w = p_half * grid.dp / diff
        scale = eta * diff / grid.dp
        # J_{j+1/2} = -scale [B(-w) f_{j+1} - B(w) f_j]
        self.upper = -scale * _bernoulli(-w)
        self.lower = scale * _bernoulli(w)
        self.inv_dp = 1.0 / grid.dp
        # largest outflow rate from a node, used for the positivity bound
        out_rate = np.zeros(grid.n_p)
        out_rate[:-1] += self.lower * self.inv_dp
        out_rate[1:] += -self.upper * self.inv_dp
        self.max_out_rate = float(out_rate.max()) if eta > 0 else 0.0

    def rhs(self, f):
        flux = self.upper * f[:, 1:] + self.lower * f[:, :-1]
        out = np.zeros_like(f)
        out[:, :-1] -= flux
        out[:, 1:] += flux
        return out * self.inv_dp

    def step(self, f, dt):
        # SSP-RK2 (Heun): second order, positivity preserving under the forward Euler bound
        f1 = f + dt * self.rhs(f)
        return 0.5 * (f + f1 + dt * self.rhs(f1))


class _Transport:
    """-(p/M) df/dx on the periodic x axis, one p column at a time."""

    def __init__(self, grid: PhaseSpaceGrid, params: PhysicalParams, scheme: Transport):
        if scheme not in ("upwind", "limited", "spectral"):
            raise ValueError(f"unknown transport scheme {scheme!r}")
        self.scheme = scheme
        self.velocity = grid.p / params.test_mass
        self.dx = grid.dx
        self.length = grid.x_max - grid.x_min
        if scheme == "spectral":
            self.k = 2.0 * np.pi * np.fft.fftfreq(grid.n_x, d=grid.dx)
            self._phases = {}

    def _rhs(self, f):
        a = self.velocity[None, :]
        pos = a > 0
        if self.scheme == "upwind":
            back = f - np.roll(f, 1, axis=0)
            fwd = np.roll(f, -1, axis=0) - f
            return -np.where(pos, a * back, a * fwd) / self.dx
        # MUSCL reconstruction with the van Leer limiter
        d_minus = f - np.roll(f, 1, axis=0)
        d_plus = np.roll(f, -1, axis=0) - f
        prod = d_minus * d_plus
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(prod > 0, 2.0 * prod / (d_minus + d_plus), 0.0)
        left = f + 0.5 * slope                       # state at i+1/2 from cell i
        right = np.roll(f - 0.5 * slope, -1, axis=0)  # state at i+1/2 from cell i+1
        flux = np.where(pos, a * left, a * right)
        return -(flux - np.roll(flux, 1, axis=0)) / self.dx

    def step(self, f, dt):
        if self.scheme == "spectral":
            # exact shift of each p column by velocity * dt
            phase = self._phases.get(dt)
            if phase is None:
                phase = self._phases[dt] = np.exp(-1j * np.outer(self.k[: f.shape[0] // 2 + 1], self.velocity) * dt)
            return np.fft.irfft(np.fft.rfft(f, axis=0) * phase, n=f.shape[0], axis=0)
        f1 = f + dt * self._rhs(f)
        return 0.5 * (f + f1 + dt * self._rhs(f1))


def _laplacian_x(f):
    return np.roll(f, 1, axis=0) - 2.0 * f + np.roll(f, -1, axis=0)


def stable_dt(grid: PhaseSpaceGrid, eta: float, params: PhysicalParams, position_diffusion: float = 0.0) -> float:
    """Largest time step the Kramers solvers accept."""
    bounds = [grid.dx / (grid.p_max / params.test_mass)]
    if eta > 0:
        bounds.append(grid.dp**2 * params.beta / (2.0 * eta * params.test_mass))
    if position_diffusion > 0:
        bounds.append(grid.dx**2 / (2.0 * position_diffusion))
    dt = SAFETY * min(bounds)
    if eta > 0:
        op = _CollisionOperator(grid, eta, params)
        dt = min(dt, 0.9 / op.max_out_rate)
    return dt


def _steps(t_end: float, dt: float) -> tuple[int, float]:
    if not t_end >= 0:
        raise ValueError("t_end must be >= 0")
    if t_end == 0:
        return 0, dt
    n = max(1, math.ceil(t_end / dt - 1e-9))
    return n, t_end / n


def _evolve(f0: PhaseSpaceField, eta: float, t_end: float, dt: float, params: PhysicalParams,
            d_xx: float, transport: Transport, record_every: int, enforce_positive: bool) -> KramersResult:
    grid = f0.grid
    grid.check_momentum_range(params)
    if eta < 0:
        raise ValueError("eta must be >= 0")
    limit = stable_dt(grid, eta, params, d_xx)
    if dt > limit * (1 + 1e-12):
        raise StabilityError(dt, limit, "Kramers solver")
    n_steps, h = _steps(t_end, dt)
    coll = _CollisionOperator(grid, eta, params) if eta > 0 else None
    trans = _Transport(grid, params, transport)
    diff_factor = d_xx * h / grid.dx**2

    f = np.array(f0.values, dtype=float)
    series = MomentSeries()
    series.append(f0.t, _moments(f, grid))
    for step in range(1, n_steps + 1):
        f = trans.step(f, 0.5 * h)
        if coll is not None:
            f = coll.step(f, h)
        if d_xx > 0:
            f = f + diff_factor * _laplacian_x(f)
        f = trans.step(f, 0.5 * h)
        if step % record_every == 0 or step == n_steps:
            series.append(f0.t + step * h, _moments(f, grid))
    if enforce_positive and f.min() < 0 and transport != "spectral":
        raise FloatingPointError(f"classical solver produced a negative value {f.min():.3e}")
    return KramersResult(PhaseSpaceField(grid, f, f0.t + n_steps * h), series, h, n_steps, d_xx)


def kramers_solve(f0: PhaseSpaceField, eta: float, t_end: float, dt: float, params: PhysicalParams,
                  transport: Transport = "limited", record_every: int = 1) -> KramersResult:
    """Classical Kramers equation  df/dt = -(p/M) df/dx + eta [d(p f)/dp + (M/beta) d2f/dp2]."""
    return _evolve(f0, eta, t_end, dt, params, 0.0, transport, record_every, enforce_positive=True)


def quantum_kramers_solve(f0: PhaseSpaceField, eta: float, t_end: float, dt: float, params: PhysicalParams,
                          transport: Transport = "limited", record_every: int = 1) -> KramersResult:
    """Kramers equation plus the position diffusion D_xx d2f/dx2 with D_xx = eta beta hbar^2 / 16 M.

    The Wigner function may turn negative; only normalisation is conserved.
    With hbar = 0 this performs exactly the same operations as ``kramers_solve``.
    """
    d_xx = position_diffusion_coefficient(eta, params)
    return _evolve(f0, eta, t_end, dt, params, d_xx, transport, record_every, enforce_positive=False)


def smoluchowski_stable_dt(dx: float, coefficient: float) -> float:
    return SAFETY * dx**2 / (2.0 * coefficient) if coefficient > 0 else math.inf


def smoluchowski_solve(sigma0: PositionField, eta: float, t_end: float, dt: float, params: PhysicalParams,
                       record_every: int = 1) -> SmoluchowskiResult:
    """Heat equation  dsigma/dt = (1/(eta M beta) + D_xx) d2sigma/dx2  on the periodic x grid."""
    if not eta > 0:
        raise ValueError("Smoluchowski limit needs eta > 0")
    coef = einstein_coefficient(eta, params) + position_diffusion_coefficient(eta, params)
    limit = smoluchowski_stable_dt(sigma0.dx, coef)
    if dt > limit * (1 + 1e-12):
        raise StabilityError(dt, limit, "Smoluchowski solver")
    n_steps, h = _steps(t_end, dt)
    factor = coef * h / sigma0.dx**2
    s = sigma0.values.copy()
    work = sigma0.copy()
    times, variances, norms = [sigma0.t], [sigma0.variance()], [sigma0.norm()]
    for step in range(1, n_steps + 1):
        s = s + factor * (np.roll(s, 1) - 2.0 * s + np.roll(s, -1))
        if step % record_every == 0 or step == n_steps:
            work.values = s
            times.append(sigma0.t + step * h)
            variances.append(work.variance())
            norms.append(work.norm())
    out = PositionField(sigma0.x_min, sigma0.x_max, s, sigma0.t + n_steps * h)
    return SmoluchowskiResult(out, np.asarray(times), np.asarray(variances), np.asarray(norms), coef, h, n_steps)


@dataclass
class HighFrictionReport:
    etas: np.ndarray
    deviations: np.ndarray
    t_end: float
    slope: float
    monotone: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eta", "inv_eta", "l1_deviation"])
            for e, d in zip(self.etas, self.deviations):
                writer.writerow([repr(float(e)), repr(float(1.0 / e)), repr(float(d))])


def _check_separable_maxwell(f0: PhaseSpaceField, params: PhysicalParams, tol: float = 1e-6) -> None:
    grid = f0.grid
    fx = f0.values.sum(axis=1) * grid.dp
    fp = f0.values.sum(axis=0) * grid.dx / f0.norm()
    product = np.outer(fx, fp)
    scale = np.abs(f0.values).max()
    if np.abs(product - f0.values).max() > tol * scale:
        raise ValueError("initial field is not separable in x and p")
    if np.abs(fp - maxwell_profile(grid, params)).max() > tol * fp.max():
        raise ValueError("initial momentum marginal is not the thermal Maxwellian")


def high_friction_compare(f0: PhaseSpaceField, etas, t_end: float, params: PhysicalParams,
                          transport: Transport = "spectral", dt_fraction: float = 1.0) -> HighFrictionReport:
    """L1 distance between the quantum Kramers x-marginal and the Smoluchowski solution.

    For each eta both equations are advanced from the same initial position
    profile to ``t_end`` and the distance sum |sigma_K - sigma_S| dx is
    recorded.  The report carries the fitted log-log slope of the distance
    against eta (-1 for an O(1/eta) error) and whether the distance falls monotonically as eta grows.
    """
    _check_separable_maxwell(f0, params)
    etas = np.asarray(sorted(float(e) for e in etas))
    sigma0 = f0.marginal_x()
    devs = []
    for eta in etas:
        d_xx = position_diffusion_coefficient(eta, params)
        dt = dt_fraction * stable_dt(f0.grid, eta, params, d_xx)
        kr = quantum_kramers_solve(f0, eta, t_end, dt, params, transport=transport,
                                   record_every=10**9)
        coef = einstein_coefficient(eta, params) + d_xx
        sm = smoluchowski_solve(sigma0, eta, t_end, min(dt, smoluchowski_stable_dt(sigma0.dx, coef)), params,
                                record_every=10**9)
        devs.append(float(np.abs(kr.field.marginal_x().values - sm.field.values).sum() * sigma0.dx))
    devs = np.asarray(devs)
    slope = float(np.polyfit(np.log(etas), np.log(devs), 1)[0]) if len(etas) > 1 else float("nan")
    monotone = bool(np.all(np.diff(devs) < 0))
    return HighFrictionReport(etas, devs, t_end, slope, monotone)
