"""Energy functionals over finished trajectories and inequality probes.

For a trajectory u and a cut radius tau, the ledger samples

    H(t, tau)   L2 mass of u over the outer region {|x| > tau}
    E(t, tau)   gradient plus weighted-absorption energy over the region
    I_s^T(tau)  time integral of E from s to T
    J_s^T(tau)  time integral of the squared flux through the sphere |x|=tau
    y(tau) = I_{s(tau)}^T(tau), the outer-region energy driven by the ramp

The structural constants of the differential inequalities are never pinned
down analytically, so the probes invert the problem: they fit the minimal
constant making an inequality hold across the tau grid and report it, and
refinement studies check the fit is stable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .profiles import SRamp
from .solver import SolutionTrajectory, Stepper


@dataclass(frozen=True)
class ExponentPack:
    """The interpolation exponents and inequality powers for (q, N)."""

    q: float
    dimension: int

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def theta1(self) -> float:
        q, n = self.q, self.dimension
        return ((q + 1) + n * (1 - q)) / (2 * (q + 1) + n * (1 - q))

    @property
    def theta2(self) -> float:
        q, n = self.q, self.dimension
        return n * (1 - q) / (2 * (q + 1) + n * (1 - q))

    @property
    def lambda0(self) -> float:
        return (1 - self.q) / (1 + self.q)

    @property
    def lambda1(self) -> float:
        b = (1 - self.theta1) * (1 - self.q)
        return b / (2 - b)

    @property
    def lambda2(self) -> float:
        b = (1 - self.theta2) * (1 - self.q)
        return b / (2 - b)

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda0, self.lambda1, self.lambda2)

    def psi(self, a_tau, sp_tau) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Weights (psi_0, psi_1, psi_2) from the potential and ramp slope."""
        a_tau = np.asarray(a_tau, dtype=float)
        sp_tau = np.asarray(sp_tau, dtype=float)
        return (a_tau * sp_tau,
                a_tau ** (1 - self.theta1),
                a_tau ** (1 - self.theta2) * sp_tau)


@dataclass
class EnergyLedger:
    """Sampled energy functionals of one trajectory on a tau grid."""

    tau_grid: np.ndarray
    t_snap: np.ndarray
    s_tau: np.ndarray            # ramp value s(tau) per tau (zeros if no ramp)
    a_tau: np.ndarray            # absorption coefficient at each tau
    H: np.ndarray                # (K, M): L2 mass outside tau at snapshot k
    E: np.ndarray                # (K, M): gradient + weighted absorption
    flux2: np.ndarray            # (K, M): squared flux through |x| = tau
    I: np.ndarray                # (M,): integral of E over [s(tau), T]
    J: np.ndarray                # (M,): integral of flux2 over [s(tau), T]
    y0: float
    quad_error: np.ndarray       # (M,): trapezoid error proxy for I

    @property
    def T(self) -> float:
        return float(self.t_snap[-1])

    @property
    def y(self) -> np.ndarray:
        """Outer-region energy y(tau) = I_{s(tau)}^T(tau)."""
        return self.I

    def H_at(self, t: float, tau_index: int = 0) -> float:
        return float(np.interp(t, self.t_snap, self.H[:, tau_index]))

    def E_at_s(self) -> np.ndarray:
        """E(s(tau), tau) interpolated along the snapshot times."""
        out = np.empty_like(self.tau_grid)
        for j in range(self.tau_grid.size):
            out[j] = np.interp(self.s_tau[j], self.t_snap, self.E[:, j])
        return out


def _suffix_interp(faces: np.ndarray, cell_values: np.ndarray,
                   taus: np.ndarray) -> np.ndarray:
    """Integral of a cell field over {r > tau}, linear inside the cut cell."""
    suffix = np.concatenate([np.cumsum(cell_values[::-1])[::-1], [0.0]])
    return np.interp(taus, faces, suffix)


def compute_ledger(traj: SolutionTrajectory, potential, tau_grid,
                   sramp: SRamp | None = None) -> EnergyLedger:
    """Evaluate the energy functionals of a finished run on a tau grid.

    ``sramp`` supplies the lower integration limit s(tau); without one the
    time integrals start at zero.  Tau values outside the domain are clipped
    with a warning.
    """
    grid = traj.grid
    tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    if np.any(tau_grid < 0) or np.any(tau_grid > grid.radius):
        warnings.warn("tau grid clipped into [0, R]")
        tau_grid = np.clip(tau_grid, 0.0, grid.radius)

    stepper = Stepper(grid, potential, traj.spec.q)
    a_cells = stepper.a
    q = traj.spec.q
    faces = grid.faces
    inner_faces = faces[1:-1]
    N = grid.dimension

    K, M = traj.snapshots.shape[0], tau_grid.size
    H = np.empty((K, M))
    E = np.empty((K, M))
    flux2 = np.empty((K, M))
    for k, u in enumerate(traj.snapshots):
        H[k] = _suffix_interp(faces, grid.volumes * u**2, tau_grid)
        absorb = _suffix_interp(faces, grid.volumes * a_cells * np.abs(u) ** (q + 1), tau_grid)
        grad_at_faces = np.diff(u) / np.diff(grid.centers)
        grad_energy = stepper.conduct * np.diff(u) ** 2
        # gradient energy sits on interior faces; suffix-sum over them
        gsuffix = np.concatenate([np.cumsum(grad_energy[::-1])[::-1], [0.0]])
        E[k] = absorb + np.interp(tau_grid, np.concatenate([inner_faces, [faces[-1]]]), gsuffix)
        g_tau = np.interp(tau_grid, inner_faces, grad_at_faces,
                          left=0.0, right=0.0)
        flux2[k] = g_tau**2 * tau_grid ** (N - 1)

    if sramp is not None:
        s_tau = np.array([sramp.value(t) if t > 0 else 0.0 for t in tau_grid])
    else:
        s_tau = np.zeros(M)
    s_tau = np.minimum(s_tau, traj.snapshot_times[-1])

    I = np.empty(M)
    J = np.empty(M)
    qerr = np.empty(M)
    t = traj.snapshot_times
    for j in range(M):
        s = s_tau[j]
        I[j] = _trapz_from(t, E[:, j], s)
        J[j] = _trapz_from(t, flux2[:, j], s)
        dE = np.abs(np.diff(E[:, j]))
        qerr[j] = 0.5 * float(np.dot(dE, np.diff(t))) + 1e-15 * abs(I[j])

    if potential is None:
        a_tau = np.zeros(M)
    elif isinstance(potential, (int, float)):
        a_tau = np.full(M, float(potential))
    else:
        a_tau = np.asarray(potential.a(tau_grid), dtype=float)

    return EnergyLedger(tau_grid=tau_grid, t_snap=t.copy(), s_tau=s_tau,
                        a_tau=a_tau, H=H, E=E, flux2=flux2, I=I, J=J,
                        y0=traj.y0, quad_error=qerr)


def _trapz_from(t: np.ndarray, f: np.ndarray, s: float) -> float:
    """Trapezoid integral of samples (t, f) over [s, t[-1]]."""
    if s <= t[0]:
        return float(np.trapezoid(f, t))
    if s >= t[-1]:
        return 0.0
    i = int(np.searchsorted(t, s))
    fs = np.interp(s, t, f)
    tt = np.concatenate([[s], t[i:]])
    ff = np.concatenate([[fs], f[i:]])
    return float(np.trapezoid(ff, tt))


@dataclass(frozen=True)
class GlobalEstimateReport:
    t_checked: np.ndarray
    slack: np.ndarray            # y0 - H(t,0) - I_0^t(0) at each checkpoint
    quad_error: float
    min_slack: float

    @property
    def holds(self) -> bool:
        return bool(self.min_slack >= -self.quad_error)


def verify_global_estimate(ledger: EnergyLedger) -> GlobalEstimateReport:
    """Margin of the a priori bound H(t, 0) + I_0^t(0) <= y0 at each snapshot.

    Small negative slack can only come from time discretization of I and is
    bounded by the reported trapezoid error.
    """
    j = int(np.argmin(ledger.tau_grid))
    if ledger.tau_grid[j] > 0:
        warnings.warn("global estimate checked at the smallest tabulated tau, "
                      f"tau = {ledger.tau_grid[j]:.3g} > 0")
    t = ledger.t_snap
    E0 = ledger.E[:, j]
    H0 = ledger.H[:, j]
    I_cum = np.concatenate([[0.0], np.cumsum(0.5 * (E0[1:] + E0[:-1]) * np.diff(t))])
    slack = ledger.y0 - H0 - I_cum
    qerr = 0.5 * float(np.dot(np.abs(np.diff(E0)), np.diff(t)))
    return GlobalEstimateReport(t, slack, qerr + 1e-12 * abs(ledger.y0),
                                float(np.min(slack)))


@dataclass(frozen=True)
class RelationProbe:
    tau: np.ndarray
    lhs: np.ndarray
    rhs_terms: np.ndarray        # (M, 4) with unit constants
    c_hat: float                 # minimal uniform constant covering all rows
    skipped: int


def probe_outer_energy_relation(ledger: EnergyLedger, exponents: ExponentPack) -> RelationProbe:
    """Fit the minimal constant in the outer-region energy relationship.

    The left side is H(T, tau) + I_{s(tau)}^T(tau); the right side combines
    powers of E(s(tau), tau) and J with the two interpolation exponents.
    Rows where the absorption coefficient vanishes are skipped.
    """
    q = exponents.q
    t1, t2 = exponents.theta1, exponents.theta2
    D1 = 2 - (1 - t1) * (1 - q)
    D2 = 2 - (1 - t2) * (1 - q)
    a = ledger.a_tau
    E_s = ledger.E_at_s()
    lhs = ledger.H[-1, :] + ledger.I
    alive = a > 0
    skipped = int(np.count_nonzero(~alive))
    if skipped:
        warnings.warn(f"relation probe: skipped {skipped} rows with a(tau) = 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.stack([
            a ** (-2 * (1 - t2) / D2) * E_s ** (2 / D2),
            a ** (-2 / (q + 1)) * E_s ** (2 / (q + 1)),
            a ** (-2 / (q + 1)) * ledger.J ** (2 / (q + 1)),
            a ** (-2 * (1 - t1) / D1) * ledger.J ** (2 / D1),
        ], axis=1)
    rhs = np.where(alive, np.nansum(terms, axis=1), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(alive & (rhs > 0), lhs / rhs, 0.0)
    c_hat = float(np.max(ratios)) if ratios.size else 0.0
    return RelationProbe(ledger.tau_grid, lhs, terms, c_hat, skipped)


@dataclass(frozen=True)
class InterpolationProbe:
    c1: float
    c2: float
    corpus_size: int
    worst_margin: float          # min over corpus of c1*G + c2*P - L (>= 0)


def _radial_corpus(grid, n_random: int, seed: int) -> list[np.ndarray]:
    r = grid.centers
    R = grid.radius
    corpus = [np.ones_like(r), 0.5 * np.ones_like(r), r / R, 1.0 - r / R]
    for c, w in [(0.0, 0.1), (0.0, 0.3), (0.4, 0.1), (0.8, 0.05), (0.6, 0.2)]:
        corpus.append(np.exp(-((r - c) ** 2) / (2 * w**2)))
    rng = np.random.RandomState(seed)
    for _ in range(n_random):
        coef = rng.standard_normal(6) / (1.0 + np.arange(6)) ** 2
        v = np.zeros_like(r)
        for k, ck in enumerate(coef):
            v += ck * np.cos(math.pi * k * r / R)
        corpus.append(v - v.min() + 0.1)   # keep them nonnegative
    return corpus


def probe_interpolation(grid, inner_radius: float, lam: float,
                        sample_functions=None, n_random: int = 40,
                        seed: int = 42) -> InterpolationProbe:
    """Fit minimal (c1, c2) in  ||v||_2 <= c1 ||grad v||_2 + c2 ||v||_{lam, inner}.

    The inner region is the centered ball of the given radius (strictly
    interior).  The corpus mixes constants, bumps and random smooth radial
    functions; the reported pair minimizes c1 + c2 along the feasibility
    frontier.
    """
    if not 1.0 < lam <= 2.0:
        raise ValueError("lam must lie in (1, 2]")
    if not 0 < inner_radius < grid.radius:
        raise ValueError("inner region must be strictly interior")
    corpus = list(sample_functions) if sample_functions is not None else \
        _radial_corpus(grid, n_random, seed)
    stepper = Stepper(grid, None, 0.5)
    inner = grid.centers < inner_radius
    L = np.empty(len(corpus))
    G = np.empty(len(corpus))
    P = np.empty(len(corpus))
    for i, v in enumerate(corpus):
        L[i] = math.sqrt(grid.integrate(v**2))
        G[i] = math.sqrt(stepper.gradient_energy(v))
        P[i] = float(np.dot(grid.volumes[inner], np.abs(v[inner]) ** lam)) ** (1.0 / lam)
    if np.any(P <= 0):
        raise ValueError("corpus contains a function vanishing on the inner region")

    best = None
    for c1 in np.geomspace(1e-3, 1e3, 181):
        c2 = float(np.max(np.maximum(L - c1 * G, 0.0) / P))
        if best is None or c1 + c2 < best[0] + best[1]:
            best = (float(c1), c2)
    c1, c2 = best
    margin = float(np.min(c1 * G + c2 * P - L))
    return InterpolationProbe(c1, c2, len(corpus), margin)


@dataclass(frozen=True)
class OdiResidual:
    tau: np.ndarray
    y: np.ndarray
    y_prime: np.ndarray
    comparison_sum: np.ndarray   # sum_i (-y'/psi_i)^(1+lambda_i)
    c0: float
    residual: np.ndarray         # c0 * comparison_sum - y  (>= 0 at fitted c0)
    clipped: int
    skipped: int


def ode_inequality_residual(ledger: EnergyLedger, exponents: ExponentPack,
                            sramp: SRamp, c0: float | None = None) -> OdiResidual:
    """Residual of the ordinary differential inequality satisfied by y(tau).

    y' is taken by second-order finite differences on the ledger tau grid;
    positive slopes (non-monotone numerical artifacts) are clipped to zero
    with a warning.  With c0 = None the minimal constant making the
    inequality hold on the grid is fitted and reported.
    """
    tau = ledger.tau_grid
    if tau.size < 3:
        raise ValueError("need at least 3 tau points to differentiate y")
    y = ledger.y
    yp = np.gradient(y, tau)
    clipped = int(np.count_nonzero(yp > 0))
    if clipped:
        warnings.warn(f"odi residual: clipped {clipped} positive slopes of y")
    yp = np.minimum(yp, 0.0)
    _, sp = sramp.value_and_derivative(np.maximum(tau, 1e-300))
    psis = exponents.psi(ledger.a_tau, sp)
    lams = (exponents.lambda0, exponents.lambda1, exponents.lambda2)
    S = np.zeros_like(tau)
    alive = ledger.a_tau > 0
    skipped = int(np.count_nonzero(~alive))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for psi, lam in zip(psis, lams):
            contrib = np.where(alive & (psi > 0), (-yp / psi) ** (1 + lam), np.inf)
            S += np.where(np.isfinite(contrib), contrib, np.inf)
    usable = alive & np.isfinite(S) & (S > 0)
    if c0 is None:
        c0 = float(np.max(y[usable] / S[usable])) if np.any(usable) else 0.0
    residual = np.where(usable, c0 * S - y, np.nan)
    return OdiResidual(tau, y, yp, S, c0, residual, clipped, skipped)
