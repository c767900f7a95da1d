"""Dominating curve and multi-round extinction-time bound.

The outer-region energy y(tau) of a run obeys a first-order differential
inequality whose solutions are dominated by an explicit piecewise curve:

* a plateau at the initial energy y0 up to the radius tau' where the first
  region boundary is crossed,
* a closed-form decaying piece Y2 driven by psi_2 = a^(1-theta2) * s',
* a faster closed-form piece Y1 driven by psi_1 = a^(1-theta1),

hitting zero at a finite radius.  Feeding the zero radius back into the
original problem and restarting yields rounds (tau_i, t_i) whose total

    R = sum_i t_i + sum_i s(tau_i)

is finite exactly when the endpoint integral of omega(s)/s converges.  The
structural constants are not pinned by the theory; they are configuration
here, and every report echoes the values used.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import dini_integral
from .energy import ExponentPack
from .profiles import OmegaProfile, PotentialField, SRamp

_LOG_TAU_FLOOR = -250.0  # bisection lower end in ln(tau)


class NoPlateauError(ValueError):
    """y0 >= 3 c0: the curve starts past its plateau."""


class RegionSkippedError(RuntimeError):
    """The middle curve piece never meets its matching boundary."""


class CurveRangeError(RuntimeError):
    """A root search left the domain of the potential."""


@dataclass(frozen=True)
class OdiConfig:
    potential: PotentialField
    y0: float
    q: float = 0.5
    dimension: int = 1
    c0: float = 1.0
    c4: float = 1.0
    c7: float | None = None   # None: the derivation's own value 2/(1-q)
    cbar: float = 1.0         # Poincare rate scale, 1/R^2 of the domain
    gamma: float = 1.0        # per-round gain exponent
    tau_max: float = 1.0

    def __post_init__(self):
        if self.y0 <= 0:
            raise ValueError("y0 must be positive")
        if self.c7 is None:
            # the exponent comparison behind the logarithmic radius relation
            # yields 2(1-nu)/(1-q); nu is absorbed here in the limit nu -> 0
            object.__setattr__(self, "c7", 2.0 / (1.0 - self.q))
        for name in ("c0", "c4", "c7", "cbar", "gamma", "tau_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def exponents(self) -> ExponentPack:
        return ExponentPack(self.q, self.dimension)

    @property
    def omega(self) -> OmegaProfile:
        return self.potential.omega

    @property
    def sramp(self) -> SRamp:
        return SRamp(self.omega)


def _bisect_log_tau(g, target: float, hi: float, lo_log: float = _LOG_TAU_FLOOR,
                    iters: int = 200) -> float:
    """Solve g(tau) = target for g increasing in tau, bisecting in ln(tau).

    Stopping on the log-interval width keeps tiny roots relatively accurate,
    which absolute tau tolerances cannot (they are vacuous below their own
    scale); 200 halvings push the width to rounding anyway.
    """
    lo, hi_log = lo_log, math.log(hi)
    g_lo, g_hi = g(math.exp(lo)), g(math.exp(hi_log))
    if g_lo > target:
        raise CurveRangeError("root lies below the tau search range")
    if g_hi < target:
        raise CurveRangeError("root lies beyond the domain radius")
    for _ in range(iters):
        mid = 0.5 * (lo + hi_log)
        if g(math.exp(mid)) >= target:
            hi_log = mid
        else:
            lo = mid
        if hi_log - lo < 1e-15:
            break
    return math.exp(0.5 * (lo + hi_log))


def solve_tau_prime(config: OdiConfig) -> float:
    """Radius where the plateau at y0 meets y = 3 c0 a(tau)^(2/(1-q)).

    With unit amplitude this is the relation tau^2/omega(tau) =
    (2/(1-q)) / ln(3 c0 / y0); the solve works on ln a directly so other
    amplitudes are handled too.
    """
    if config.y0 >= 3.0 * config.c0:
        raise NoPlateauError(
            f"y0 = {config.y0:.3g} >= 3 c0 = {3 * config.c0:.3g}: curve starts "
            "past the plateau")
    target = (math.log(config.y0) - math.log(3.0 * config.c0)) * (1.0 - config.q) / 2.0

    def g(tau):
        return config.potential.log_a(tau)

    return _bisect_log_tau(g, target, config.tau_max)


def _cumulative_log_integral(logf, knots: np.ndarray) -> np.ndarray:
    """Cumulative integral of exp(logf) along knots, log-space per segment."""
    from .analysis import _GL_NODES, _GL_WEIGHTS
    out = np.zeros(knots.size)
    total = 0.0
    for i in range(knots.size - 1):
        a, b = knots[i], knots[i + 1]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        g = logf(mid + half * _GL_NODES)
        m = float(np.max(g))
        seg = 0.0 if not np.isfinite(m) else \
            math.exp(m) * half * float(np.dot(_GL_WEIGHTS, np.exp(g - m)))
        total += seg
        out[i + 1] = total
    return out


@dataclass(frozen=True)
class CurvePiece:
    start_tau: float
    start_value: float
    decay_exponent: float       # p = lambda/(1+lambda) of the driving mode
    coefficient: float          # p * (3c0)^(-1/(1+lambda))
    knots: np.ndarray = field(repr=False)
    cum_integral: np.ndarray = field(repr=False)

    def __call__(self, tau):
        taus = np.atleast_1d(np.asarray(tau, dtype=float))
        Q = np.interp(taus, self.knots, self.cum_integral)
        base = self.start_value ** self.decay_exponent - self.coefficient * Q
        vals = np.maximum(base, 0.0) ** (1.0 / self.decay_exponent)
        return float(vals[0]) if np.ndim(tau) == 0 else vals

    def zero_radius(self) -> float:
        """Where the bracket hits zero; inf if not inside the knot range."""
        need = self.start_value ** self.decay_exponent / self.coefficient
        if self.cum_integral[-1] < need:
            return math.inf
        return float(np.interp(need, self.cum_integral, self.knots))


def curve_y2(config: OdiConfig, tau_prime: float, n_knots: int = 800) -> CurvePiece:
    """Closed-form middle piece started at (tau', y0).

    Matches the separable solution of Y' = -psi_2(tau) (Y/(3c0))^(1/(1+lam2));
    the weight integral of a^(1-theta2) s' is accumulated by log-space
    quadrature on a geometric knot grid.
    """
    ep = config.exponents
    lam2 = ep.lambda2
    p2 = lam2 / (1.0 + lam2)           # equals (1-theta2)(1-q)/2
    coeff = p2 * (3.0 * config.c0) ** (-1.0 / (1.0 + lam2))
    sramp = config.sramp

    def log_psi2(tau):
        _, log_sp = sramp.log_value_and_derivative(tau)
        return (1.0 - ep.theta2) * config.potential.log_a(tau) + log_sp

    knots = np.geomspace(tau_prime, config.tau_max, n_knots)
    cum = _cumulative_log_integral(log_psi2, knots)
    return CurvePiece(tau_prime, config.y0, p2, coeff, knots, cum)


def _log_match_boundary(config: OdiConfig, tau):
    """ln of 3c0 a^(2/(1-q)) s'^(2/((1-q)(theta1-theta2)))."""
    ep = config.exponents
    q = config.q
    _, log_sp = config.sramp.log_value_and_derivative(tau)
    return (math.log(3.0 * config.c0)
            + 2.0 / (1.0 - q) * config.potential.log_a(tau)
            + 2.0 / ((1.0 - q) * (ep.theta1 - ep.theta2)) * log_sp)


@dataclass(frozen=True)
class TauDoublePrime:
    tau: float
    value: float                 # Y2(tau'')
    bracket_constant: float      # a^(1-theta2) s'^2 / y0^((1-theta2)(1-q)/2)


def solve_tau_double_prime(config: OdiConfig, piece2: CurvePiece,
                           tau_prime: float) -> TauDoublePrime:
    """Radius where Y2 meets the lower region boundary, by bracketed bisection.

    Also evaluates the matching constant a^(1-theta2) s'^2 / y0^(...), whose
    stability across y0 is the independence cross-check.
    """
    zero = piece2.zero_radius()
    hi = min(zero * (1 - 1e-12) if math.isfinite(zero) else config.tau_max,
             config.tau_max)

    def G(tau):
        y2 = piece2(tau)
        if y2 <= 0:
            return -math.inf
        return math.log(y2) - float(_log_match_boundary(config, tau))

    lo = tau_prime
    if G(lo) <= 0:
        raise RegionSkippedError("curve already below the matching boundary at tau'")
    if G(hi) > 0:
        raise RegionSkippedError("no sign change before the curve piece dies")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if G(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    tau_pp = 0.5 * (lo + hi)
    ep = config.exponents
    _, log_sp = config.sramp.log_value_and_derivative(tau_pp)
    p2 = (1.0 - ep.theta2) * (1.0 - config.q) / 2.0
    k = math.exp((1.0 - ep.theta2) * config.potential.log_a(tau_pp)
                 + 2.0 * log_sp - p2 * math.log(config.y0))
    return TauDoublePrime(tau_pp, float(piece2(tau_pp)), k)


def curve_y1(config: OdiConfig, tau_pp: float, start_value: float,
             n_knots: int = 800) -> CurvePiece:
    """Closed-form final piece started at (tau'', Y2(tau'')).

    The knot range extends (beyond the domain radius if necessary, since the
    weight integral keeps growing there) until the bracket reaches zero, so
    the assembled curve always terminates.
    """
    ep = config.exponents
    lam1 = ep.lambda1
    p1 = lam1 / (1.0 + lam1)           # equals (1-theta1)(1-q)/2
    coeff = p1 * (3.0 * config.c0) ** (-1.0 / (1.0 + lam1))

    def log_psi1(tau):
        return (1.0 - ep.theta1) * config.potential.log_a(tau)

    need = start_value**p1 / coeff
    hi = config.tau_max * 4.0
    while True:
        knots = np.geomspace(tau_pp, hi, n_knots)
        cum = _cumulative_log_integral(log_psi1, knots)
        if cum[-1] >= need or hi > 1e4 * config.tau_max:
            break
        hi *= 4.0
    return CurvePiece(tau_pp, start_value, p1, coeff, knots, cum)


def solve_extinction_radius(config: OdiConfig, level: float | None = None,
                            log_level: float | None = None) -> tuple[float, bool]:
    """Extinction radius from tau^2/omega(tau) = c7 / ln(1/level).

    Returns (tau, clipped): clipped means the required radius exceeded the
    domain and was cut to tau_max (the machinery assumes it stays inside).
    Levels may be passed in log space to survive deep rounds.
    """
    if log_level is None:
        log_level = math.log(level)
    if log_level >= 0:
        raise ValueError("level must lie strictly below one")
    target = math.log(config.c7 / (-log_level))

    def g(tau):
        return 2.0 * math.log(tau) - math.log(config.omega.omega(tau))

    try:
        return _bisect_log_tau(g, target, config.tau_max), False
    except CurveRangeError:
        warnings.warn("extinction radius exceeds the domain; clipped")
        return config.tau_max, True


@dataclass(frozen=True)
class TauTriplePrime:
    tau: float                   # enforced final radius (curve hits zero here)
    direct_root: float           # root of a^(1-theta2) s'^2 = c4 y0^(...)
    ad_hoc_root: float           # root of the closed logarithmic relation
    y1_zero: float               # where the final curve piece reaches zero
    bumped: bool                 # true when forced above 2 tau''


def curve_y1_and_tau_triple_prime(config: OdiConfig, tau_pp: float,
                                  start_value: float) -> tuple[CurvePiece, TauTriplePrime]:
    """Final curve piece plus the three candidate extinction radii.

    The direct root solves the sufficient matching condition with constant
    c4; the logarithmic form absorbs the free constants into c7.  Whatever
    the candidates say, the reported radius is never below the actual zero
    of the final piece nor below twice tau''.
    """
    ep = config.exponents
    p2 = (1.0 - ep.theta2) * (1.0 - config.q) / 2.0
    piece1 = curve_y1(config, tau_pp, start_value)

    def h(tau):
        _, log_sp = config.sramp.log_value_and_derivative(tau)
        return ((1.0 - ep.theta2) * config.potential.log_a(tau)
                + 2.0 * log_sp)

    target = math.log(config.c4) + p2 * math.log(config.y0)
    try:
        direct = _bisect_log_tau(h, target, config.tau_max * 4.0)
    except CurveRangeError:
        direct = math.inf
    ad5, _ = solve_extinction_radius(config, config.y0)
    y1_zero = piece1.zero_radius()

    candidates = [c for c in (direct, y1_zero) if math.isfinite(c)]
    tau_ppp = max(candidates) if candidates else config.tau_max
    bumped = False
    if tau_ppp <= 2.0 * tau_pp:
        tau_ppp = 2.0 * tau_pp * (1.0 + 1e-9)
        bumped = True
        warnings.warn("tau''' bumped to 2 tau'' (sufficient-condition floor)")
    return piece1, TauTriplePrime(tau_ppp, direct, ad5, y1_zero, bumped)


@dataclass(frozen=True)
class OdiCurve:
    config: OdiConfig
    tau_prime: float
    tau_double_prime: float
    tau_triple_prime: float
    tau: np.ndarray
    Y: np.ndarray
    labels: np.ndarray           # "plateau" | "mid" | "final" per sample
    triple_info: TauTriplePrime
    bracket_constant: float
    region2_skipped: bool
    join_gap_prime: float        # piece mismatch at tau' (0 by construction)
    join_gap_double_prime: float

    def value(self, tau):
        return np.interp(tau, self.tau, self.Y)

    def join_gaps(self) -> tuple[float, float]:
        return self.join_gap_prime, self.join_gap_double_prime


def build_curve(config: OdiConfig, samples_per_piece: int = 160) -> OdiCurve:
    """Assemble the full dominating curve with its region labels."""
    tau_p = solve_tau_prime(config)
    piece2 = curve_y2(config, tau_p)
    skipped = False
    try:
        tpp = solve_tau_double_prime(config, piece2, tau_p)
        tau_pp, y_pp, k = tpp.tau, tpp.value, tpp.bracket_constant
    except RegionSkippedError:
        skipped = True
        tau_pp, y_pp, k = tau_p, config.y0, math.nan
    piece1, triple = curve_y1_and_tau_triple_prime(config, tau_pp, y_pp)

    gap1 = abs(piece2(tau_p) - config.y0)
    gap2 = abs(piece1(tau_pp) - (config.y0 if skipped else piece2(tau_pp)))

    t_plateau = np.linspace(0.0, tau_p, max(samples_per_piece // 4, 8))
    t_mid = np.geomspace(tau_p, tau_pp, samples_per_piece) if tau_pp > tau_p \
        else np.array([tau_p])
    t_fin = np.geomspace(tau_pp, triple.tau, samples_per_piece)
    tau = np.concatenate([t_plateau, t_mid, t_fin])
    Y = np.concatenate([np.full(t_plateau.size, config.y0),
                        piece2(t_mid) if t_mid.size > 1 else [config.y0],
                        piece1(t_fin)])
    labels = np.concatenate([np.full(t_plateau.size, "plateau"),
                             np.full(t_mid.size, "mid"),
                             np.full(t_fin.size, "final")])
    return OdiCurve(config, tau_p, tau_pp, triple.tau, tau, Y, labels,
                    triple, k, skipped, float(gap1), float(gap2))


# ---------------------------------------------------------------------------
# region classification
# ---------------------------------------------------------------------------

def region_boundaries(config: OdiConfig, tau):
    """Closed-form (upper, lower) boundaries separating the three regions."""
    q = config.q
    upper = 3.0 * config.c0 * np.exp(2.0 / (1.0 - q) * config.potential.log_a(tau))
    lower = np.exp(_log_match_boundary(config, tau))
    return upper, lower


def region_classifier(tau, y, config: OdiConfig):
    """Index of the slowest decay mode at (tau, y): argmin of the mode speeds.

    Ties break toward the lower index.  Vectorizes over tau/y arrays.
    """
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(taus <= 0) or np.any(ys <= 0):
        raise ValueError("region classification needs tau > 0 and y > 0")
    ep = config.exponents
    _, log_sp = config.sramp.log_value_and_derivative(taus)
    log_a = config.potential.log_a(taus)
    log_y = np.log(ys / (3.0 * config.c0))
    log_psis = (log_a + log_sp,
                (1.0 - ep.theta1) * log_a,
                (1.0 - ep.theta2) * log_a + log_sp)
    lams = (ep.lambda0, ep.lambda1, ep.lambda2)
    F = np.stack([lp + log_y / (1.0 + lam) for lp, lam in zip(log_psis, lams)])
    shifted = F - F.min(axis=0, keepdims=True)
    out = np.where(shifted[0] <= 1e-12, 0,
                   np.where(shifted[1] <= 1e-12, 1, 2)).astype(int)
    return int(out[0]) if np.ndim(tau) == 0 and np.ndim(y) == 0 else out


# ---------------------------------------------------------------------------
# multi-round extinction iteration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtinctionBoundReport:
    config: OdiConfig
    tau_rounds: np.ndarray
    t_rounds: np.ndarray
    s_rounds: np.ndarray
    log_levels: np.ndarray       # ln of the energy bound entering each round
    clipped_rounds: int
    sum_t: float
    sum_s: float
    t_tail_estimate: float
    total: float                 # R = sum_t + sum_s (+ tail), inf if unbounded
    verdict: str                 # "bounded" | "unbounded" | "inconclusive"
    dini_verdict: str
    omega_sum_partial: float     # sum of omega(tau_i), for the integral check
    integral_comparison: float   # ln(1/lambda)^{-1} * integral of omega/s

    @property
    def rounds(self) -> int:
        return self.tau_rounds.size


def extinction_iteration(config: OdiConfig, max_rounds: int = 200,
                         rel_tol: float = 1e-10) -> ExtinctionBoundReport:
    """Run the extinction rounds and total the time bound R.

    Round i shrinks the energy bound to y0^((1+gamma)^i); its radius tau_i
    solves the logarithmic relation with the shrunken level, the waiting
    time is t_i = (gamma c7 / cbar) omega(tau_i) and the restart offset is
    s(tau_i).  A divergent endpoint integral for omega makes the t-sums
    non-summable; the report then carries an infinite total instead of
    raising.
    """
    if config.y0 >= 1.0:
        raise ValueError("the iteration needs y0 < 1 (shrink u0 or rescale)")
    omega = config.omega
    dini = dini_integral(omega, c=min(omega.s0, math.exp(-1.0)))
    lam = (1.0 + config.gamma) ** -0.5
    log_y0 = math.log(config.y0)

    taus, ts, ss, log_levels = [], [], [], []
    clipped = 0
    stalled = 0
    for i in range(max_rounds):
        log_level = log_y0 * (1.0 + config.gamma) ** i
        tau_i, was_clipped = solve_extinction_radius(config, log_level=log_level)
        clipped += int(was_clipped)
        w_i = omega.omega(tau_i)
        t_i = config.gamma * config.c7 / config.cbar * w_i
        s_i = tau_i**2 * config.c7 / (-log_level)
        taus.append(tau_i)
        ts.append(t_i)
        ss.append(s_i)
        log_levels.append(log_level)
        if i >= 1 and ts[-1] >= ts[-2] * 0.999:
            stalled += 1
        else:
            stalled = 0
        if (t_i + s_i) < rel_tol * (sum(ts) + sum(ss)):
            break
        if stalled >= 20:
            break

    taus = np.asarray(taus)
    ts = np.asarray(ts)
    ss = np.asarray(ss)
    sum_t, sum_s = float(ts.sum()), float(ss.sum())

    # majorant of the remaining t-rounds through the window-sum comparison:
    # sum_{i>j} omega(C1 lam^i) <~ ln(1/lam)^(-1) * integral_0^{tau_j} omega/s
    tail_quad = dini_integral(omega, c=float(taus[-1]))
    if dini.verdict == "diverged":
        verdict, total, t_tail = "unbounded", math.inf, math.inf
    elif dini.verdict == "converged" and tail_quad.converged:
        t_tail = (config.gamma * config.c7 / config.cbar) * tail_quad.value \
            / math.log(1.0 / lam)
        total = sum_t + sum_s + t_tail
        verdict = "bounded"
    else:
        verdict, total, t_tail = "inconclusive", math.nan, math.nan

    # partial-sum vs integral comparison over the dominating radii
    C1 = math.sqrt(config.c7 * omega.omega0 / ((-log_y0) * (1.0 + config.gamma)))
    j = taus.size
    comp = dini_integral(omega, c=C1)
    comp_lo = dini_integral(omega, c=max(C1 * lam**j, 1e-250))
    integral_comparison = (comp.value - comp_lo.value) / math.log(1.0 / lam) \
        if comp.verdict != "diverged" else math.inf
    omega_partial = float(np.sum(omega.omega(np.minimum(C1 * lam ** np.arange(1, j + 1),
                                                        config.tau_max))))

    return ExtinctionBoundReport(
        config=config, tau_rounds=taus, t_rounds=ts, s_rounds=ss,
        log_levels=np.asarray(log_levels), clipped_rounds=clipped,
        sum_t=sum_t, sum_s=sum_s, t_tail_estimate=t_tail, total=total,
        verdict=verdict, dini_verdict=dini.verdict,
        omega_sum_partial=omega_partial, integral_comparison=integral_comparison)
