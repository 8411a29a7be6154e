"""Jump-process Monte Carlo for the classical linear Boltzmann equation.

A trajectory flies freely, x += p/M * tau, and at collision times jumps
p -> p + q with q drawn from the gain kernel Sigma(|q|) S(q, p).  Collisions
are generated by thinning: candidate events arrive at the rate of an
analytic envelope of the kernel and are kept with probability
kernel/envelope.  Kept events then form a Poisson process with the exact
state-dependent rate R(p), so no rate quadrature is needed inside the loop.

In coordinates (q, u = cos angle(q, p), phi) the kernel is, up to the
constant (n/M^2) sqrt(beta m / 2 pi),

    mb:        q Sigma(q) exp(-c (q (1+alpha) + 2 alpha |p| u)^2)
    brownian:  q Sigma(q) exp(-c (1+2 alpha) q^2 - beta |p| q u / 2M)

with c = beta/8m.  Maximising over u gives an envelope of the shape
Sigma_max q exp(L0 - kappa (q - s)_+^2), which is sampled exactly as a
mixture of a triangle, a shifted Rayleigh and a shifted half-normal law.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate

from .physics import (CrossSectionModel, PhysicalParams, QuadratureError, StructureForm,
                      energy_transfer, log_structure_factor)

__all__ = [
    "EnvelopeViolation",
    "TransferSampler",
    "InitialCondition",
    "EnsembleStats",
    "kernel_density",
    "total_rate",
    "sample_transfer",
    "evolve_ensemble",
    "fit_relaxation_rate",
]

LOW_ACCEPTANCE = 1e-3
_STAT_COLUMNS = 8  # px, py, pz, p2, x, y, z, x2


class EnvelopeViolation(RuntimeError):
    """The rejection envelope was found below the target density."""


def kernel_density(q_mod, u, p_mod, params: PhysicalParams, xs: CrossSectionModel,
                   form: StructureForm = "mb"):
    """Gain kernel per unit dq du dphi: (n/M^2) q^2 Sigma(q) S(q, E).

    ``u`` is the cosine of the angle between q and p.
    """
    q_mod = np.asarray(q_mod, dtype=float)
    E = (q_mod**2 / 2.0 + p_mod * q_mod * u) / params.test_mass
    S = np.exp(log_structure_factor(q_mod, E, params, form))
    return params.density / params.test_mass**2 * q_mod**2 * xs(q_mod) * S


def total_rate(p, params: PhysicalParams, xs: CrossSectionModel, form: StructureForm = "mb",
               rtol: float = 1e-8) -> float:
    """Collision rate R(p) = (n/M^2) int d^3q Sigma(q) S(q, p).

    Nested adaptive quadrature over (q, cos theta); the azimuth gives 2 pi.
    """
    if xs.is_null:
        return 0.0
    p_mod = float(np.linalg.norm(p))
    c = params.beta / (8.0 * params.gas_mass)
    a = params.alpha
    if form == "mb":
        kappa = c * (1.0 + a) ** 2
        centre = 2.0 * a * p_mod / (1.0 + a)
    else:
        kappa = c * (1.0 + 2.0 * a)
        centre = 2.0 * a * p_mod / (1.0 + 2.0 * a)
    q_hi = centre + 9.0 / math.sqrt(kappa)
    worst = [0.0]

    def inner(q):
        if q <= 0.0:
            return 0.0
        val, err = integrate.quad(lambda u: float(kernel_density(q, u, p_mod, params, xs, form)),
                                  -1.0, 1.0, epsabs=0.0, epsrel=rtol * 0.1, limit=200)
        if val > 0:
            worst[0] = max(worst[0], err / val)
        return val

    points = sorted({v for v in (centre, *xs.breakpoints) if 0 < v < q_hi}) or None
    value, abserr = integrate.quad(inner, 0.0, q_hi, epsabs=0.0, epsrel=rtol, limit=200,
                                   points=points)
    if value > 0 and (abserr > rtol * value or worst[0] > rtol):
        raise QuadratureError("total rate", value, max(abserr, worst[0] * value), rtol)
    return 2.0 * math.pi * value


class TransferSampler:
    """Exact sampler of collision waiting times and momentum transfers."""

    def __init__(self, params: PhysicalParams, xs: CrossSectionModel, form: StructureForm = "mb"):
        if form not in ("mb", "brownian"):
            raise ValueError(f"unknown structure factor form {form!r}")
        self.params = params
        self.xs = xs
        self.form = form
        self.sigma_max = xs.max_value
        self._c = params.beta / (8.0 * params.gas_mass)
        self._const = (params.density / params.test_mass**2
                       * math.sqrt(params.beta * params.gas_mass / (2.0 * math.pi)))
        self.proposals = 0
        self.accepted = 0

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposals if self.proposals else float("nan")

    def _shape(self, p_mod):
        a = self.params.alpha
        if self.form == "mb":
            kappa = self._c * (1.0 + a) ** 2
            s = 2.0 * a * p_mod / (1.0 + a)
            log0 = np.zeros_like(p_mod)
        else:
            kappa = self._c * (1.0 + 2.0 * a)
            s = 2.0 * a * p_mod / (1.0 + 2.0 * a)
            log0 = kappa * s * s
        return kappa, s, log0

    def envelope_rate(self, p_mod):
        """Total rate of the envelope; an upper bound on R(p)."""
        p_mod = np.asarray(p_mod, dtype=float)
        kappa, s, log0 = self._shape(p_mod)
        radial = 0.5 * s * s + 0.5 * s * math.sqrt(math.pi / kappa) + 0.5 / kappa
        return 4.0 * math.pi * self._const * self.sigma_max * np.exp(log0) * radial

    def _log_kernel(self, q, u, p_mod):
        """log of the kernel shape without the Sigma factor and the q measure."""
        a, c = self.params.alpha, self._c
        if self.form == "mb":
            return -c * (q * (1.0 + a) + 2.0 * a * p_mod * u) ** 2
        return (-c * (1.0 + 2.0 * a) * q * q
                - self.params.beta * p_mod * q * u / (2.0 * self.params.test_mass))

    def _propose_radius(self, s, kappa, rng):
        n = s.size
        w_tri = 0.5 * s * s
        w_ray = np.full(n, 0.5 / kappa)
        w_half = 0.5 * s * math.sqrt(math.pi / kappa)
        total = w_tri + w_ray + w_half
        pick = rng.random(n) * total
        q = np.empty(n)
        tri = pick < w_tri
        ray = ~tri & (pick < w_tri + w_ray)
        half = ~(tri | ray)
        q[tri] = s[tri] * np.sqrt(rng.random(tri.sum()))
        q[ray] = s[ray] + np.sqrt(-np.log1p(-rng.random(ray.sum())) / kappa)
        q[half] = s[half] + np.abs(rng.standard_normal(half.sum())) / math.sqrt(2.0 * kappa)
        return q

    def _propose(self, p_mod, rng):
        """One thinning proposal per entry; returns (q, u, phi, accepted)."""
        kappa, s, log0 = self._shape(p_mod)
        q = self._propose_radius(s, kappa, rng)
        u = 2.0 * rng.random(p_mod.size) - 1.0
        phi = 2.0 * math.pi * rng.random(p_mod.size)
        log_env = log0 - kappa * np.maximum(q - s, 0.0) ** 2
        ratio = self.xs(q) / self.sigma_max * np.exp(self._log_kernel(q, u, p_mod) - log_env)
        if np.any(ratio > 1.0 + 1e-9):
            raise EnvelopeViolation(f"kernel/envelope ratio {ratio.max():.6g} > 1")
        accepted = rng.random(p_mod.size) < ratio
        self.proposals += p_mod.size
        self.accepted += int(accepted.sum())
        return q, u, phi, accepted

    def _check_acceptance(self):
        if self.proposals >= 1000 and self.acceptance < LOW_ACCEPTANCE:
            warnings.warn(f"rejection acceptance {self.acceptance:.2e} below {LOW_ACCEPTANCE:g}",
                          RuntimeWarning, stacklevel=3)

    def sample(self, p, rng):
        """Transfers q for each row of p, distributed as Sigma S / R(p)."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        p_mod = np.linalg.norm(p, axis=1)
        out_q = np.empty(len(p))
        out_u = np.empty(len(p))
        out_phi = np.empty(len(p))
        pending = np.arange(len(p))
        while pending.size:
            q, u, phi, ok = self._propose(p_mod[pending], rng)
            done = pending[ok]
            out_q[done], out_u[done], out_phi[done] = q[ok], u[ok], phi[ok]
            pending = pending[~ok]
        self._check_acceptance()
        return _to_cartesian(p, out_q, out_u, out_phi)

    def next_collision(self, p, rng):
        """Waiting time to the next real collision and its transfer, per row of p."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        p_mod = np.linalg.norm(p, axis=1)
        env_rate = self.envelope_rate(p_mod)
        if np.any(env_rate <= 0):
            raise ValueError("collision rate vanishes; no collision to sample")
        tau = np.zeros(len(p))
        out_q = np.empty(len(p))
        out_u = np.empty(len(p))
        out_phi = np.empty(len(p))
        pending = np.arange(len(p))
        while pending.size:
            tau[pending] += rng.standard_exponential(pending.size) / env_rate[pending]
            q, u, phi, ok = self._propose(p_mod[pending], rng)
            done = pending[ok]
            out_q[done], out_u[done], out_phi[done] = q[ok], u[ok], phi[ok]
            pending = pending[~ok]
        self._check_acceptance()
        return tau, _to_cartesian(p, out_q, out_u, out_phi)


def _to_cartesian(p, q_mod, u, phi):
    """Build transfer vectors from (|q|, cos angle to p, azimuth about p)."""
    p_mod = np.linalg.norm(p, axis=1)
    axis = np.zeros_like(p)
    axis[:, 2] = 1.0
    moving = p_mod > 0
    axis[moving] = p[moving] / p_mod[moving, None]
    helper = np.zeros_like(p)
    use_x = np.abs(axis[:, 0]) < 0.9
    helper[use_x, 0] = 1.0
    helper[~use_x, 1] = 1.0
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(axis, e1)
    sin_t = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    direction = (u[:, None] * axis
                 + (sin_t * np.cos(phi))[:, None] * e1
                 + (sin_t * np.sin(phi))[:, None] * e2)
    return q_mod[:, None] * direction


def sample_transfer(p, params: PhysicalParams, xs: CrossSectionModel, rng,
                    form: StructureForm = "mb"):
    """Draw one transfer q per row of ``p`` from the gain kernel."""
    return TransferSampler(params, xs, form).sample(p, rng)


@dataclass(frozen=True)
class InitialCondition:
    """Initial ensemble: ``delta`` at (x0, p0), or Maxwell optionally shifted by p0."""

    kind: Literal["delta", "maxwell", "shifted_maxwell"] = "delta"
    p0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    x0: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def draw(self, n: int, params: PhysicalParams, rng):
        x = np.tile(np.asarray(self.x0, dtype=float), (n, 1))
        p = np.tile(np.asarray(self.p0, dtype=float), (n, 1))
        if self.kind == "maxwell":
            p = rng.standard_normal((n, 3)) * math.sqrt(params.thermal_momentum_sq)
        elif self.kind == "shifted_maxwell":
            p = p + rng.standard_normal((n, 3)) * math.sqrt(params.thermal_momentum_sq)
        elif self.kind != "delta":
            raise ValueError(f"unknown initial condition {self.kind!r}")
        return x, p


@dataclass
class EnsembleStats:
    t: np.ndarray
    mean_p: np.ndarray
    mean_p2: np.ndarray
    mean_x: np.ndarray
    mean_x2: np.ndarray
    se_p: np.ndarray
    se_p2: np.ndarray
    se_x2: np.ndarray
    n_samples: int
    collisions: int = 0
    proposals: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def acceptance(self) -> float:
        return self.collisions / self.proposals if self.proposals else float("nan")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "mean_px", "mean_py", "mean_pz", "mean_p2", "mean_x2",
                             "se_p2", "n_samples"])
            for k in range(len(self.t)):
                writer.writerow([repr(float(self.t[k])), *(repr(float(v)) for v in self.mean_p[k]),
                                 repr(float(self.mean_p2[k])), repr(float(self.mean_x2[k])),
                                 repr(float(self.se_p2[k])), self.n_samples])


def _block_rng(seed: int, block: int):
    # counter-based stream keyed by (seed, block) so results do not depend on scheduling
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(block,))))


def _run_block(block: int, size: int, seed: int, t_end: float, rec_t: np.ndarray,
               init: InitialCondition, params: PhysicalParams, xs: CrossSectionModel,
               form: StructureForm):
    rng = _block_rng(seed, block)
    x, p = init.draw(size, params, rng)
    inv_mass = 1.0 / params.test_mass
    n_rec = rec_t.size
    sums = np.zeros((n_rec, _STAT_COLUMNS))
    squares = np.zeros((n_rec, _STAT_COLUMNS))
    t = np.zeros(size)
    next_rec = np.zeros(size, dtype=np.int64)

    def record(rows, t_limit):
        # all record times strictly before t_limit, by exact free flight from (t, x, p)
        while True:
            r = next_rec[rows]
            todo = r < n_rec
            todo[todo] = rec_t[r[todo]] < t_limit[todo]
            if not todo.any():
                return
            sel = rows[todo]
            tr = rec_t[next_rec[sel]]
            xr = x[sel] + p[sel] * (inv_mass * (tr - t[sel]))[:, None]
            vals = np.column_stack([p[sel], np.sum(p[sel] ** 2, axis=1), xr, np.sum(xr**2, axis=1)])
            np.add.at(sums, next_rec[sel], vals)
            np.add.at(squares, next_rec[sel], vals * vals)
            next_rec[sel] += 1
            t_limit = t_limit[todo]
            rows = sel

    sampler = TransferSampler(params, xs, form) if not xs.is_null else None
    active = np.arange(size)
    collisions = 0
    while active.size:
        if sampler is None:
            record(active, np.full(active.size, np.inf))
            break
        tau, q = sampler.next_collision(p[active], rng)
        t_next = t[active] + tau
        record(active, t_next)
        going = t_next <= t_end
        rows = active[going]
        x[rows] += p[rows] * (inv_mass * tau[going])[:, None]
        t[rows] = t_next[going]
        p[rows] += q[going]
        collisions += rows.size
        active = rows
    proposals = sampler.proposals if sampler else 0
    return sums, squares, collisions, proposals


def evolve_ensemble(n_traj: int, t_end: float, dt_record: float, init: InitialCondition,
                    params: PhysicalParams, xs: CrossSectionModel, seed: int = 0,
                    form: StructureForm = "mb", block_size: int = 1024,
                    threads: int = 1) -> EnsembleStats:
    """Simulate ``n_traj`` independent trajectories and accumulate moments.

    Trajectories are grouped in blocks of ``block_size``; every block owns a
    random stream derived from ``(seed, block index)`` and the block sums are
    reduced in block order, so the result is bit-identical for any number of
    threads.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if not t_end > 0 or not dt_record > 0:
        raise ValueError("t_end and dt_record must be positive")
    n_rec = int(math.floor(t_end / dt_record * (1 + 1e-12))) + 1
    rec_t = np.arange(n_rec) * dt_record
    sizes = [min(block_size, n_traj - start) for start in range(0, n_traj, block_size)]

    def job(b):
        return _run_block(b, sizes[b], seed, t_end, rec_t, init, params, xs, form)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(len(sizes))))
    else:
        results = [job(b) for b in range(len(sizes))]

    sums = np.zeros((n_rec, _STAT_COLUMNS))
    squares = np.zeros((n_rec, _STAT_COLUMNS))
    collisions = proposals = 0
    for s, sq, c, pr in results:
        sums += s
        squares += sq
        collisions += c
        proposals += pr

    N = n_traj
    mean = sums / N
    if N > 1:
        var = np.clip((squares - N * mean**2) / (N - 1), 0.0, None)
        se = np.sqrt(var / N)
    else:
        se = np.zeros_like(mean)
    return EnsembleStats(
        t=rec_t, mean_p=mean[:, 0:3], mean_p2=mean[:, 3], mean_x=mean[:, 4:7], mean_x2=mean[:, 7],
        se_p=se[:, 0:3], se_p2=se[:, 3], se_x2=se[:, 7], n_samples=N,
        collisions=collisions, proposals=proposals,
        diagnostics={"blocks": len(sizes), "block_size": block_size, "form": form},
    )


def fit_relaxation_rate(stats: EnsembleStats, component: int = 2, t_max: float | None = None):
    """Weighted fit of <p_i(t)> = A exp(-r t); returns (r, r_stderr, A)."""
    from scipy.optimize import curve_fit

    t = stats.t
    y = stats.mean_p[:, component]
    se = stats.se_p[:, component]
    keep = se > 0
    if t_max is not None:
        keep &= t <= t_max
    if keep.sum() < 3:
        raise ValueError("not enough recorded points with nonzero spread to fit a rate")
    y0 = y[0] if y[0] != 0 else y[keep][0]
    guess_rate = 1.0 / max(t[keep][-1], 1e-300)
    popt, pcov = curve_fit(lambda tt, A, r: A * np.exp(-r * tt), t[keep], y[keep],
                           p0=(y0, guess_rate), sigma=se[keep], absolute_sigma=True, maxfev=10000)
    return float(popt[1]), float(math.sqrt(pcov[1, 1])), float(popt[0])
