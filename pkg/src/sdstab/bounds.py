"""Maximum-allowable-sampling-interval computations.

Four bound families, all returning a SamplingBoundResult whose tau_max is a
strict upper bound on the admissible supremum of sampling gaps:

* generic: tau(q) = -ln q / ((a1 q)^{-1} a2 at1 + at2) for a coupled pair of
  Lyapunov functions, with the interior maximizer found from
  (a2 at1 / (a1 at2)) (1 + ln q) + q = 0;
* single-V emulation: the closed-form KKT optimum of the three-parameter
  reciprocal objective in (q, b1, b2), plus its rate parameterization
  r = alpha * sqrt(q);
* two-function emulation: tau(q) = -alpha^2 q ln q / (alpha_b g1 + g2 alpha^2 q)
  with q* the root of alpha^2 g2 q + alpha_b g1 (ln q + 1) = 0;
* discrete-time approximation: the same single-V bound after mapping the
  discrete design data (c_bar, h, alpha_u) to the decay rate
  2 alpha = c_bar / h + alpha_u h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, InfeasibleError
from .numerics import bracket_root, find_root

_Q_FLOOR = 1e-300  # open-left brackets are closed at a representable positive value
_ROOT_TOL = 1e-14


def _require_positive(**kwargs) -> None:
    for name, v in kwargs.items():
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive and finite, got {v}")


def _require_nonnegative(**kwargs) -> None:
    for name, v in kwargs.items():
        if not (math.isfinite(v) and v >= 0):
            raise DomainError(f"{name} must be nonnegative and finite, got {v}")


@dataclass(frozen=True)
class GainConstants:
    """Scalar data of the coupled-Lyapunov stability conditions.

    alpha1/alpha2 bound the physical generator, alphat1/alphat2 the cyber one,
    beta1..beta3 the impulse-time comparison, p is the moment order.
    """

    alpha1: float
    alpha2: float
    alphat1: float
    alphat2: float
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    p: float = 2.0

    def __post_init__(self):
        _require_positive(alpha1=self.alpha1, alphat2=self.alphat2, p=self.p)
        _require_nonnegative(
            alpha2=self.alpha2, alphat1=self.alphat1,
            beta1=self.beta1, beta2=self.beta2, beta3=self.beta3,
        )


@dataclass(frozen=True)
class EmulationConstants:
    """Single-Lyapunov-function emulation data: decay rate and the two envelopes."""

    alpha_bar: float
    alpha_b: float
    alpha_f: float

    def __post_init__(self):
        _require_positive(alpha_bar=self.alpha_bar, alpha_b=self.alpha_b, alpha_f=self.alpha_f)


@dataclass(frozen=True)
class TwoFunctionConstants:
    """Two-Lyapunov-function data: decay rate, feedback energy, cross gains."""

    alpha_bar: float
    alpha_b: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        _require_positive(
            alpha_bar=self.alpha_bar, alpha_b=self.alpha_b,
            gamma1=self.gamma1, gamma2=self.gamma2,
        )


@dataclass(frozen=True)
class SamplingBoundResult:
    """Optimizer output: the maximizing q, the bound, and solver auxiliaries.

    tau_max is strict: schedules must keep their supremum gap strictly below it.
    """

    q_star: float
    tau_max: float
    provenance: str
    auxiliary: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConditionReport:
    value: float
    ok: bool
    degenerate: bool


def check_condition_iii(g: GainConstants) -> ConditionReport:
    """Impulse-comparison feasibility: value = beta1*alpha2/alpha1 + beta2 + beta3 < 1.

    Value exactly 0 is allowed and flagged degenerate (the sampled-data reset
    case, where the comparison constants can be taken arbitrarily small).
    """
    value = g.alpha2 * g.beta1 / g.alpha1 + g.beta2 + g.beta3
    return ConditionReport(value=value, ok=value < 1.0, degenerate=value == 0.0)


def htau_generic(q: float, g: GainConstants) -> float:
    """Generic interval bound tau(q) = -ln q / ((alpha1 q)^{-1} alpha2 alphat1 + alphat2)."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    return -math.log(q) / (g.alpha2 * g.alphat1 / (g.alpha1 * q) + g.alphat2)


def solve_qhat_star(g: GainConstants, q_hat: Optional[float] = None) -> SamplingBoundResult:
    """Maximize the generic bound over admissible q.

    The stationary q* solves (alpha2 alphat1/(alpha1 alphat2))(1 + ln q) + q = 0
    inside (exp(-(a1 at2 + a2 at1)/(a2 at1)), 1); the reported bound is taken at
    max(q*, q0) where q0 also respects the impulse-comparison constraint.

    With alpha2 == 0 or alphat1 == 0 the bound loses its q-coupling (ISS-free
    branch): the caller must supply q_hat and gets -ln(q_hat)/alphat2 back.
    """
    cond = check_condition_iii(g)
    if not cond.ok:
        raise InfeasibleError(
            f"impulse comparison value {cond.value:.6g} >= 1; no admissible q exists"
        )
    if g.alpha2 == 0.0 or g.alphat1 == 0.0:
        if q_hat is None:
            raise DomainError(
                "alpha2 == 0 or alphat1 == 0: bound is governed by alphat2 only; supply q_hat"
            )
        if not cond.value < q_hat < 1.0:
            raise DomainError(f"q_hat must lie in ({cond.value:.6g}, 1)")
        return SamplingBoundResult(
            q_star=q_hat,
            tau_max=htau_generic(q_hat, g),
            provenance="generic-iss-free",
            auxiliary={"condition_iii": cond.value, "degenerate": cond.degenerate},
        )
    c = g.alpha2 * g.alphat1 / (g.alpha1 * g.alphat2)
    lo = math.exp(-(g.alpha1 * g.alphat2 + g.alpha2 * g.alphat1) / (g.alpha2 * g.alphat1))

    def slope(q: float) -> float:
        return c * (1.0 + math.log(q)) + q

    q_star = find_root(slope, bracket_root(slope, lo, 1.0), tol=_ROOT_TOL)
    q0 = max(cond.value, lo)
    q_eff = max(q_star, q0)
    return SamplingBoundResult(
        q_star=q_eff,
        tau_max=htau_generic(q_eff, g),
        provenance="generic",
        auxiliary={
            "q_hat_star": q_star,
            "q_hat_0": q0,
            "bracket": (lo, 1.0),
            "stationarity_residual": slope(q_star),
            "condition_iii": cond.value,
            "degenerate": cond.degenerate,
        },
    )


# ---------------------------------------------------------------------------
# single-Lyapunov-function emulation bound (closed-form KKT optimum)
# ---------------------------------------------------------------------------

def single_v_objective(q, b1, b2, c: EmulationConstants):
    """Three-parameter bound surface tau(q, b1, b2); numpy-broadcastable.

    tau = -a^2 q ln q / ([2 sqrt(ab) + b1 + (b1+a) b2] a^2 q
                         + ab [b1 + af/b1 + (b1+a)/b2]).
    """
    a, ab, af = c.alpha_bar, c.alpha_b, c.alpha_f
    a2q = a * a * q
    den = (2.0 * np.sqrt(ab) + b1 + (b1 + a) * b2) * a2q + ab * (b1 + af / b1 + (b1 + a) / b2)
    return -a2q * np.log(q) / den


def single_v_stationarity(q: float, c: EmulationConstants) -> float:
    """Derivative condition whose unique root in (0, 1/e) locates the optimum."""
    a, ab, af = c.alpha_bar, c.alpha_b, c.alpha_f
    r = a * math.sqrt(q)
    return 2.0 * r * r + (a + math.sqrt(af)) * r + (
        (a + math.sqrt(af)) * r + 2.0 * math.sqrt(ab * af)
    ) * (math.log(q) + 1.0)


def single_v_curve(q: float, c: EmulationConstants, q_star: float) -> float:
    """Bound curve tau(q) with the auxiliary parameters frozen at their optima."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    a, ab, af = c.alpha_bar, c.alpha_b, c.alpha_f
    rs = a * math.sqrt(q_star)
    r2 = a * a * q
    den = math.sqrt(ab) * (
        (2.0 * rs + a + math.sqrt(af)) * r2
        + (a + math.sqrt(af)) * rs * rs
        + 2.0 * math.sqrt(ab * af) * rs
    )
    return -rs * r2 * math.log(q) / den


def emulation_bound_single(c: EmulationConstants) -> SamplingBoundResult:
    """Single-V bound: solve the stationarity equation, apply the KKT closed form.

    b1* = sqrt(ab af) / (a sqrt(q*) + sqrt(ab)), b2* = sqrt(ab) / (a sqrt(q*)),
    and tau_max = tau(q*, b1*, b2*), the maximum of the full surface.
    """
    f = lambda q: single_v_stationarity(q, c)
    q_star = find_root(f, bracket_root(f, _Q_FLOOR, math.exp(-1.0)), tol=_ROOT_TOL)
    a, ab, af = c.alpha_bar, c.alpha_b, c.alpha_f
    r = a * math.sqrt(q_star)
    b1 = math.sqrt(ab * af) / (r + math.sqrt(ab))
    b2 = math.sqrt(ab) / r
    tau = float(single_v_objective(q_star, b1, b2, c))
    return SamplingBoundResult(
        q_star=q_star,
        tau_max=tau,
        provenance="emulation-single",
        auxiliary={
            "b1_star": b1,
            "b2_star": b2,
            "stationarity_residual": f(q_star),
            "bracket": (0.0, math.exp(-1.0)),
        },
    )


def emulation_bound_single_rate_form(c: EmulationConstants) -> SamplingBoundResult:
    """Rate parameterization r = alpha sqrt(q) of the single-V bound.

    Identical tau_max; reports r* = alpha*sqrt(q*) in (0, alpha/sqrt(e)), which
    measures how much of the designed decay rate survives sampling.
    """
    a = c.alpha_bar
    af_s = math.sqrt(c.alpha_f)
    ab_af = 2.0 * math.sqrt(c.alpha_b * c.alpha_f)
    log_edge = math.log(a / math.sqrt(math.e))

    def slope_r(r: float) -> float:
        return 2.0 * r * r + (a + af_s) * r + 2.0 * ((a + af_s) * r + ab_af) * (math.log(r) - log_edge)

    r_star = find_root(slope_r, bracket_root(slope_r, _Q_FLOOR, a / math.sqrt(math.e)), tol=_ROOT_TOL)
    q_star = (r_star / a) ** 2
    base = emulation_bound_single(c)
    return SamplingBoundResult(
        q_star=base.q_star,
        tau_max=base.tau_max,
        provenance="emulation-single-rate",
        auxiliary={
            **base.auxiliary,
            "r_star": r_star,
            "r_bracket": (0.0, a / math.sqrt(math.e)),
            "r_residual": slope_r(a * math.sqrt(base.q_star)),
            "q_from_r": q_star,
        },
    )


# ---------------------------------------------------------------------------
# two-Lyapunov-function emulation bound
# ---------------------------------------------------------------------------

def two_v_curve(q: float, c: TwoFunctionConstants) -> float:
    """tau(q) = -alpha^2 q ln q / (alpha_b gamma1 + gamma2 alpha^2 q) on (0, 1)."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    a2q = c.alpha_bar * c.alpha_bar * q
    return -a2q * math.log(q) / (c.alpha_b * c.gamma1 + c.gamma2 * a2q)


def emulation_bound_two(c: TwoFunctionConstants) -> SamplingBoundResult:
    """Two-function bound: q* solves alpha^2 g2 q + alpha_b g1 (ln q + 1) = 0 in (0, 1/e)."""
    a2g2 = c.alpha_bar * c.alpha_bar * c.gamma2
    abg1 = c.alpha_b * c.gamma1

    def slope(q: float) -> float:
        return a2g2 * q + abg1 * (math.log(q) + 1.0)

    q_star = find_root(slope, bracket_root(slope, _Q_FLOOR, math.exp(-1.0)), tol=_ROOT_TOL)
    return SamplingBoundResult(
        q_star=q_star,
        tau_max=two_v_curve(q_star, c),
        provenance="emulation-two",
        auxiliary={
            "stationarity_residual": slope(q_star),
            "bracket": (0.0, math.exp(-1.0)),
        },
    )


# ---------------------------------------------------------------------------
# discrete-time-approximation route
# ---------------------------------------------------------------------------

def dta_map(c_bar: float, h: float, alpha_u: float) -> float:
    """Decay rate implied by a discrete-time contraction: alpha = (c_bar/h + alpha_u h)/2.

    Requires c_bar in (0, 1), h > 0, alpha_u > 0, and the strict stepsize
    admissibility c_bar + alpha_u h^2 < 1 (equivalently h < 1/(2 alpha)).
    """
    _require_positive(h=h, alpha_u=alpha_u)
    if not 0.0 < c_bar < 1.0:
        raise DomainError(f"c_bar must lie in (0, 1), got {c_bar}")
    if not c_bar + alpha_u * h * h < 1.0:
        raise DomainError(
            f"stepsize h={h} is not strictly admissible: c_bar + alpha_u h^2 = "
            f"{c_bar + alpha_u * h * h:.6g} >= 1"
        )
    return 0.5 * (c_bar / h + alpha_u * h)


def dta_bound(
    c_bar: float, h: float, alpha_u: float, alpha_b: float, alpha_f: float
) -> SamplingBoundResult:
    """Sampling bound for a discretely designed controller.

    Maps (c_bar, h, alpha_u) to the equivalent continuous decay rate, then
    defers to the single-V bound; reported in the rate parameterization, which
    separates the model stepsize h from the implementation sampling period.
    """
    alpha_bar = dta_map(c_bar, h, alpha_u)
    base = emulation_bound_single_rate_form(
        EmulationConstants(alpha_bar=alpha_bar, alpha_b=alpha_b, alpha_f=alpha_f)
    )
    return SamplingBoundResult(
        q_star=base.q_star,
        tau_max=base.tau_max,
        provenance="discrete-time-approximation",
        auxiliary={**base.auxiliary, "alpha_bar": alpha_bar, "c_bar": c_bar, "h": h, "alpha_u": alpha_u},
    )
