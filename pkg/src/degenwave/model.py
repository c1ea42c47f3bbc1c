"""Coefficient and delay families, hypothesis validation, structural constants.

The wave speed squared a(x) vanishes at x = 0 and is classified by its
degeneracy index

    mu_a = sup_{0 < x <= 1} x |a'(x)| / a(x),

which must stay below 2.  Weak degeneracy (mu_a < 1) pairs with a Dirichlet
condition at x = 0, strong degeneracy (1 <= mu_a < 2) with a vanishing
weighted flux.  The boundary feedback gains (mu1, mu2, beta) and the delay
envelope (tau0, tau1, d) determine the margins that drive well-posedness and
decay certification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import (
    DegeneracyOutOfRange,
    DelayHypothesisViolated,
    NonPositive,
)

# Smooth positive factors g(x) available for the power_times_factor family,
# stored as (g, g') pairs.
FACTORS: dict[str, tuple[Callable, Callable]] = {
    "one_plus_x": (lambda x: 1.0 + x, lambda x: np.ones_like(np.asarray(x, float))),
    "two_minus_x": (lambda x: 2.0 - x, lambda x: -np.ones_like(np.asarray(x, float))),
    "exp": (np.exp, np.exp),
}


@dataclass(frozen=True)
class CoefficientSpec:
    """Validated degenerate coefficient a(x) on [0, 1].

    Fields
    ------
    kind : "power", "power_times_factor" or "tabulated"
    alpha : power exponent (0 for tabulated)
    scale : multiplicative constant in front of the power law
    factor : id of the smooth factor g(x), or None
    a_of_1 : value a(1) > 0
    mu_a : degeneracy index, exact for pure powers, sampled otherwise
    """

    kind: str
    alpha: float
    scale: float
    factor: Optional[str]
    a_of_1: float
    mu_a: float
    table_x: Optional[np.ndarray] = None
    table_a: Optional[np.ndarray] = None

    @property
    def strong(self) -> bool:
        """True in the strong-degeneracy regime (natural left boundary)."""
        return self.mu_a >= 1.0

    def a(self, x):
        """Evaluate a(x); vectorized, never needs a(0)^-1 or a'."""
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            return self.scale * x**self.alpha
        if self.kind == "power_times_factor":
            g, _ = FACTORS[self.factor]
            return self.scale * x**self.alpha * g(x)
        return self._spline()(x)

    def a_prime(self, x):
        """Evaluate a'(x) for x > 0."""
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            if self.alpha == 0.0:
                return np.zeros_like(x)
            return self.scale * self.alpha * x ** (self.alpha - 1.0)
        if self.kind == "power_times_factor":
            g, gp = FACTORS[self.factor]
            if self.alpha == 0.0:
                return self.scale * gp(x)
            return self.scale * (
                self.alpha * x ** (self.alpha - 1.0) * g(x) + x**self.alpha * gp(x)
            )
        return self._spline().derivative()(x)

    def inv_integral(self, x0: float, x1: float) -> float:
        """Integral of 1/a over [x0, x1]; may be +inf at a strong degeneracy.

        Closed form for pure powers, quadrature otherwise.  Used by the
        flux-exact elliptic assembly.
        """
        if x1 <= x0:
            return 0.0
        if self.kind == "power":
            al, s = self.alpha, self.scale
            if al == 0.0:
                return (x1 - x0) / s
            if x0 <= 0.0 and al >= 1.0:
                return math.inf
            if al == 1.0:
                return math.log(x1 / x0) / s
            p = 1.0 - al
            lo = 0.0 if x0 <= 0.0 else x0**p
            return (x1**p - lo) / (p * s)
        from scipy.integrate import quad

        if x0 <= 0.0 and self.mu_a >= 1.0:
            return math.inf
        val, _ = quad(lambda x: 1.0 / float(self.a(x)), x0, x1, limit=200)
        return val

    def _spline(self):
        from scipy.interpolate import PchipInterpolator

        return PchipInterpolator(self.table_x, self.table_a)


def _geom_grid(n: int, lo: float = 1e-8) -> np.ndarray:
    # geometric sample of (0, 1], clustered at the degeneracy point
    return np.geomspace(lo, 1.0, n)


def degeneracy_mu_a(spec: CoefficientSpec, n_samples: int = 2001) -> float:
    """Estimate mu_a = sup x |a'(x)| / a(x) over a geometric sample of (0, 1].

    Exact for pure power laws.  Raises NonPositive if the coefficient is not
    positive at a sampled interior point.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    if spec.kind == "power":
        return float(spec.alpha)
    xs = _geom_grid(n_samples, lo=1e-6)
    a = np.asarray(spec.a(xs), dtype=float)
    if np.any(a <= 0.0):
        raise NonPositive("coefficient must be positive on (0, 1]")
    ratio = xs * np.abs(np.asarray(spec.a_prime(xs), dtype=float)) / a
    return float(np.max(ratio))


def make_coefficient(kind: str, params: dict) -> CoefficientSpec:
    """Build and validate a coefficient family member.

    params by kind:
      power: alpha (0 <= alpha < 2), scale (default 1)
      power_times_factor: alpha, factor (id in FACTORS), scale
      tabulated: xs, values (grids with xs[0] = 0, xs[-1] = 1, values[0] = 0)

    Raises DegeneracyOutOfRange when the degeneracy index reaches 2, and
    NonPositive when the coefficient fails positivity on (0, 1].

    Tabulated data are interpolated by a shape-preserving spline; the
    degeneracy index is measured on that interpolant, which behaves linearly
    below the first table node (index 1 regardless of the sampled decay).
    """
    if kind == "power":
        alpha = float(params["alpha"])
        scale = float(params.get("scale", 1.0))
        if alpha < 0.0:
            raise DegeneracyOutOfRange("power exponent must be >= 0")
        if alpha >= 2.0:
            raise DegeneracyOutOfRange(
                f"degeneracy hypothesis: mu_a = sup x|a'|/a must be < 2, "
                f"got mu_a = {alpha} for the power coefficient"
            )
        if scale <= 0.0:
            raise NonPositive("coefficient scale must be positive")
        return CoefficientSpec(
            kind="power", alpha=alpha, scale=scale, factor=None,
            a_of_1=scale, mu_a=alpha,
        )

    if kind == "power_times_factor":
        alpha = float(params["alpha"])
        factor = params["factor"]
        scale = float(params.get("scale", 1.0))
        if factor not in FACTORS:
            raise ValueError(f"unknown factor id {factor!r}; have {sorted(FACTORS)}")
        if alpha < 0.0 or scale <= 0.0:
            raise NonPositive("need alpha >= 0 and scale > 0")
        g, _ = FACTORS[factor]
        draft = CoefficientSpec(
            kind="power_times_factor", alpha=alpha, scale=scale, factor=factor,
            a_of_1=scale * float(g(1.0)), mu_a=0.0,
        )
        mu = degeneracy_mu_a(draft)
        if mu >= 2.0:
            raise DegeneracyOutOfRange(
                f"degeneracy hypothesis: sampled mu_a = {mu:.6g} >= 2"
            )
        if alpha > 0.0 and draft.a_of_1 <= 0.0:
            raise NonPositive("a(1) must be positive")
        return replace(draft, mu_a=mu)

    if kind == "tabulated":
        xs = np.asarray(params["xs"], dtype=float)
        vals = np.asarray(params["values"], dtype=float)
        if xs.ndim != 1 or xs.shape != vals.shape or xs.size < 3:
            raise ValueError("tabulated coefficient needs matching 1-d grids")
        if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
            raise ValueError("xs must increase strictly from 0 to 1")
        if vals[0] != 0.0:
            raise NonPositive("tabulated coefficient must vanish at x = 0")
        if np.any(vals[1:] <= 0.0):
            raise NonPositive("coefficient must be positive on (0, 1]")
        draft = CoefficientSpec(
            kind="tabulated", alpha=0.0, scale=1.0, factor=None,
            a_of_1=float(vals[-1]), mu_a=0.0,
            table_x=xs.copy(), table_a=vals.copy(),
        )
        mu = degeneracy_mu_a(draft)
        if mu >= 2.0:
            raise DegeneracyOutOfRange(
                f"degeneracy hypothesis: sampled mu_a = {mu:.6g} >= 2"
            )
        return replace(draft, mu_a=mu)

    raise ValueError(f"unknown coefficient kind {kind!r}")


@dataclass(frozen=True)
class DelaySpec:
    """Nondecreasing delay tau(t) with envelope 0 < tau0 <= tau <= tau1 and
    derivative bound 0 <= tau' <= d < 1."""

    kind: str
    tau0: float
    tau1: float
    d: float
    params: tuple = ()

    def tau(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.tau0)
        if self.kind == "saturating_exponential":
            k = self.params[0]
            return self.tau1 - (self.tau1 - self.tau0) * np.exp(-k * t)
        t0, t1 = self.params
        s = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        return self.tau0 + (self.tau1 - self.tau0) * (3 * s**2 - 2 * s**3)

    def tau_prime(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(t)
        if self.kind == "saturating_exponential":
            k = self.params[0]
            return k * (self.tau1 - self.tau0) * np.exp(-k * t)
        t0, t1 = self.params
        s = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        return (self.tau1 - self.tau0) * 6 * s * (1 - s) / (t1 - t0)

    def tau_second(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(t)
        if self.kind == "saturating_exponential":
            k = self.params[0]
            return -(k**2) * (self.tau1 - self.tau0) * np.exp(-k * t)
        t0, t1 = self.params
        s = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        inside = (t >= t0) & (t <= t1)
        return np.where(
            inside, (self.tau1 - self.tau0) * (6 - 12 * s) / (t1 - t0) ** 2, 0.0
        )


def make_delay(kind: str, params: dict) -> DelaySpec:
    """Build and validate a delay family member.

    params by kind:
      constant: tau
      saturating_exponential: tau0, tau1, k
        (tau(t) = tau1 - (tau1 - tau0) exp(-k t), so d = k (tau1 - tau0))
      piecewise_smooth: tau0, tau1, rise_start, rise_end
        (cubic smoothstep rise, so d = 1.5 (tau1 - tau0) / rise duration)
    """
    if kind == "constant":
        tau = float(params["tau"])
        if tau <= 0.0:
            raise DelayHypothesisViolated("constant delay must be positive")
        return DelaySpec(kind="constant", tau0=tau, tau1=tau, d=0.0)

    if kind == "saturating_exponential":
        tau0 = float(params["tau0"])
        tau1 = float(params["tau1"])
        k = float(params["k"])
        if not (0.0 < tau0 <= tau1) or k < 0.0:
            raise DelayHypothesisViolated("need 0 < tau0 <= tau1 and k >= 0")
        d = k * (tau1 - tau0)
        if d >= 1.0:
            raise DelayHypothesisViolated(
                f"delay hypothesis: sup tau' = k (tau1 - tau0) = {d:.6g} >= 1"
            )
        return DelaySpec(kind=kind, tau0=tau0, tau1=tau1, d=d, params=(k,))

    if kind == "piecewise_smooth":
        tau0 = float(params["tau0"])
        tau1 = float(params["tau1"])
        t0 = float(params["rise_start"])
        t1 = float(params["rise_end"])
        if not (0.0 < tau0 <= tau1) or not (t1 > t0 >= 0.0):
            raise DelayHypothesisViolated("need 0 < tau0 <= tau1 and a rise window")
        d = 1.5 * (tau1 - tau0) / (t1 - t0)
        if d >= 1.0:
            raise DelayHypothesisViolated(
                f"delay hypothesis: sup tau' = {d:.6g} >= 1"
            )
        return DelaySpec(kind=kind, tau0=tau0, tau1=tau1, d=d, params=(t0, t1))

    raise ValueError(f"unknown delay kind {kind!r}")


def validate_delay(spec: DelaySpec, horizon: float, n: int = 10_000,
                   tol: float = 1e-12) -> None:
    """Sample tau, tau' on [0, horizon] and enforce the envelope within tol."""
    ts = np.linspace(0.0, max(horizon, spec.tau1), n)
    tau = np.asarray(spec.tau(ts))
    taup = np.asarray(spec.tau_prime(ts))
    if np.any(tau < spec.tau0 - tol) or np.any(tau > spec.tau1 + tol):
        raise DelayHypothesisViolated("sampled tau leaves [tau0, tau1]")
    if np.any(taup < -tol) or np.any(taup > spec.d + tol):
        raise DelayHypothesisViolated("sampled tau' leaves [0, d]")
    if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(taup))
            and np.all(np.isfinite(spec.tau_second(ts)))):
        raise DelayHypothesisViolated("delay derivatives must stay finite")


@dataclass(frozen=True)
class GainSet:
    """Boundary feedback gains: mu1 >= 0 on the instantaneous velocity trace,
    mu2 on the delayed trace, beta > 0 on the displacement trace.

    mu1 = 0 (with mu2 = 0) is the conservative limit with a purely elastic
    boundary; decay certification requires mu1 > 0.
    """

    mu1: float
    mu2: float
    beta: float

    def __post_init__(self):
        if self.mu1 < 0.0:
            raise ValueError("mu1 must be nonnegative")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class StructuralConstants:
    """Closed-form constants of the energy framework.

    poincare_const : constant of ||u||_L2^2 <= 2 u(1)^2 + poincare_const * int a u'^2
    coercivity_const : elliptic coercivity min{1/poincare_const, beta a(1)/2}
    trace_const : constant of u(1)^2 <= trace_const * ||u||_{1,a}^2, always >= 2
    gain_margin : mu1 - |mu2| / sqrt(1 - d); >= 0 is the well-posedness gate
    damping_const : coefficient of the boundary-trace dissipation bound; > 0
        certifies strict damping (requires mu1 > 2 |mu2| / sqrt(1 - d))
    """

    poincare_const: Optional[float] = None
    coercivity_const: Optional[float] = None
    trace_const: Optional[float] = None
    gain_margin: Optional[float] = None
    damping_const: Optional[float] = None
    wellposed: Optional[bool] = None
    strictly_damped: Optional[bool] = None

    def merged_with(self, other: "StructuralConstants") -> "StructuralConstants":
        """Fill any None fields from other."""
        kw = {}
        for f in self.__dataclass_fields__:
            mine = getattr(self, f)
            kw[f] = mine if mine is not None else getattr(other, f)
        return StructuralConstants(**kw)


def feedback_margins(gains: GainSet, delay: DelaySpec) -> StructuralConstants:
    """Report the two gain margins of the feedback loop.

    gain_margin = mu1 - |mu2| / sqrt(1 - d) must be >= 0 for well-posedness.
    damping_const = min{mu1/2 - |mu2|/sqrt(1-d),
                        mu1 (1-d)/2 - |mu2| sqrt(1-d)/2}
    is the dissipation coefficient; it is positive iff
    mu1 > 2 |mu2| / sqrt(1 - d), a strictly stronger condition.  Both are
    reported; nothing is assumed.
    """
    root = math.sqrt(1.0 - delay.d)
    margin = gains.mu1 - abs(gains.mu2) / root
    c3 = min(
        0.5 * gains.mu1 - abs(gains.mu2) / root,
        0.5 * gains.mu1 * (1.0 - delay.d) - 0.5 * abs(gains.mu2) * root,
    )
    return StructuralConstants(
        gain_margin=margin,
        damping_const=c3,
        wellposed=margin >= 0.0,
        strictly_damped=c3 > 0.0,
    )


def structural_constants(spec: CoefficientSpec, beta: float) -> StructuralConstants:
    """Evaluate the coefficient-side constants for a given boundary stiffness."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    a1 = spec.a_of_1
    cap = (1.0 / a1) * min(4.0, 2.0 / (2.0 - spec.mu_a))
    alpha_a = min(1.0 / cap, beta * a1 / 2.0)
    return StructuralConstants(
        poincare_const=cap,
        coercivity_const=alpha_a,
        trace_const=max(2.0, 1.0 / a1),
    )


def full_constants(spec: CoefficientSpec, gains: GainSet,
                   delay: DelaySpec) -> StructuralConstants:
    """structural_constants and feedback_margins in one record."""
    return structural_constants(spec, gains.beta).merged_with(
        feedback_margins(gains, delay)
    )
