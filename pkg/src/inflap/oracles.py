"""Closed-form radial profiles and their operator values.

For a radial function ``u(x) = φ(|x|)`` with ``φ'(r) != 0``,

    Δ^γ_∞ u = |φ'|^{2-γ} φ'',      q·∇u |∇u|^{2-γ} = q_r φ' |φ'|^{2-γ},

where ``q_r = q·x/|x|``.  Each profile below carries hand-derived first and
second derivatives; ``tests/test_oracles.py`` checks them against finite
differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Sampler


class OracleDomainError(ValueError):
    pass


@dataclass(frozen=True)
class RadialProfile:
    """Base class: ``phi(r)``, ``d1(r)``, ``d2(r)`` and a support radius."""

    def phi(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    @property
    def support(self) -> float:
        return math.inf

    def sampler(self, center=None) -> Sampler:
        return Sampler.radial(self.phi, center=center, note=type(self).__name__)


@dataclass(frozen=True)
class Power(RadialProfile):
    """``amplitude * r^alpha``."""

    alpha: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.alpha == 0:
            raise ValueError("Power needs alpha != 0")

    def phi(self, r):
        return self.amplitude * np.asarray(r, float) ** self.alpha

    def d1(self, r):
        return self.amplitude * self.alpha * np.asarray(r, float) ** (self.alpha - 1)

    def d2(self, r):
        a = self.alpha
        return self.amplitude * a * (a - 1) * np.asarray(r, float) ** (a - 2)


@dataclass(frozen=True)
class Exponential(RadialProfile):
    """``amplitude * (exp(-a r) - exp(-a r0))``."""

    a: float
    r0: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("Exponential needs a > 0")

    def phi(self, r):
        return self.amplitude * (np.exp(-self.a * np.asarray(r, float)) - math.exp(-self.a * self.r0))

    def d1(self, r):
        return -self.amplitude * self.a * np.exp(-self.a * np.asarray(r, float))

    def d2(self, r):
        return self.amplitude * self.a**2 * np.exp(-self.a * np.asarray(r, float))


@dataclass(frozen=True)
class Gaussian(RadialProfile):
    """``amplitude * (exp(-k r^2) - exp(-k R^2))``."""

    k: float
    R: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("Gaussian needs k > 0")

    def phi(self, r):
        r = np.asarray(r, float)
        return self.amplitude * (np.exp(-self.k * r**2) - math.exp(-self.k * self.R**2))

    def d1(self, r):
        r = np.asarray(r, float)
        return -2 * self.k * r * self.amplitude * np.exp(-self.k * r**2)

    def d2(self, r):
        r = np.asarray(r, float)
        k = self.k
        return self.amplitude * (4 * k * k * r**2 - 2 * k) * np.exp(-k * r**2)


@dataclass(frozen=True)
class Bump(RadialProfile):
    """``amplitude * exp(-1 / (1 - (eps r)^2))`` on ``r < 1/eps``, zero outside."""

    eps: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("Bump needs eps > 0")

    @property
    def support(self) -> float:
        return 1.0 / self.eps

    def _s(self, r):
        return 1.0 - (self.eps * np.asarray(r, float)) ** 2

    def phi(self, r):
        s = self._s(r)
        out = np.zeros_like(s)
        pos = s > 0
        with np.errstate(under="ignore"):
            out[pos] = np.exp(-1.0 / s[pos])
        return self.amplitude * out

    def d1(self, r):
        r = np.asarray(r, float)
        s = self._s(r)
        with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
            out = -2 * self.eps**2 * r * self.phi(r) / s**2
        return np.where(s > 0, out, 0.0)

    def d2(self, r):
        r = np.asarray(r, float)
        e2 = self.eps**2
        s = self._s(r)
        p = self.phi(r)
        with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
            out = p * (-2 * e2 / s**2 - 8 * e2**2 * r**2 / s**3 + 4 * e2**2 * r**2 / s**4)
        return np.where(s > 0, out, 0.0)


@dataclass(frozen=True)
class RationalDecay(RadialProfile):
    """``amplitude / (1 + r^2)``."""

    amplitude: float = 1.0

    def phi(self, r):
        return self.amplitude / (1 + np.asarray(r, float) ** 2)

    def d1(self, r):
        r = np.asarray(r, float)
        return -2 * self.amplitude * r / (1 + r**2) ** 2

    def d2(self, r):
        r = np.asarray(r, float)
        return self.amplitude * (6 * r**2 - 2) / (1 + r**2) ** 3


def radial_L_value(profile: RadialProfile, gamma: float, r, q_radial=0.0):
    """``|φ'|^{2-γ} φ'' + q_r φ' |φ'|^{2-γ}`` at radius ``r``.

    Raises
    ------
    OracleDomainError
        If ``r <= 0``, ``r`` is outside the support, or ``φ'(r) = 0``.
    """
    if not 0 <= gamma <= 2:
        raise ValueError("gamma must lie in [0, 2]")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise OracleDomainError("radial formula needs r > 0")
    if np.any(r >= profile.support):
        raise OracleDomainError("radius outside the profile support")
    d1 = profile.d1(r)
    if np.any(d1 == 0):
        raise OracleDomainError("critical point of the profile (zero derivative)")
    a = np.abs(d1) ** (2 - gamma)
    out = a * profile.d2(r) + np.asarray(q_radial) * d1 * a
    return out if out.ndim else float(out)


@dataclass
class CertificateResult:
    passed: bool
    min_value: float
    worst_radius: float
    radii: np.ndarray
    values: np.ndarray

    @property
    def margin(self) -> float:
        return self.min_value


def certificate(
    profile: RadialProfile,
    gamma: float,
    r_lo: float,
    r_hi: float,
    q_bound: float = 0.0,
    c_bound: float = 0.0,
    zero_order: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
    predicate: str = ">",
    margin: float = 0.0,
    n: int = 2001,
) -> CertificateResult:
    """Worst-case sign check of ``L φ + c φ^{3-γ}`` on ``[r_lo, r_hi]``.

    The drift and potential enter through bounds ``|q| <= q_bound`` and
    ``|c| <= c_bound`` taken with the unfavourable sign for ``predicate``
    (``>``/``>=`` use lower bounds, ``<``/``<=`` use upper bounds).  An
    optional ``zero_order(r, φ)`` is added as is.  For ``>`` the check is
    ``value > margin``; for ``<`` it is ``value < -margin``.
    """
    if predicate not in (">", ">=", "<", "<="):
        raise ValueError(f"unknown predicate {predicate!r}")
    r = np.linspace(r_lo, r_hi, n)
    lower = predicate.startswith(">")
    sgn = -1.0 if lower else 1.0
    d1 = profile.d1(r)
    if np.any(d1 == 0):
        raise OracleDomainError("critical point inside the certificate range")
    val = np.abs(d1) ** (2 - gamma) * profile.d2(r)
    val = val + sgn * q_bound * np.abs(d1) ** (3 - gamma)
    val = val + sgn * c_bound * np.abs(profile.phi(r)) ** (3 - gamma)
    if zero_order is not None:
        val = val + zero_order(r, profile.phi(r))
    if lower:
        i = int(np.argmin(val))
        ok = val > margin if predicate == ">" else val >= margin
    else:
        i = int(np.argmax(val))
        ok = val < -margin if predicate == "<" else val <= -margin
    return CertificateResult(bool(np.all(ok)), float(val[i]), float(r[i]), r, val)


def hopf_barrier_bracket(alpha, gamma, q_norm, c_norm, r, x_abs):
    """Bracketed factor of the exponential barrier's lower bound.

    ``e^{-α(3-γ)|x|} [α^{4-γ} - |q| α^{3-γ} - |c| (1 - e^{-α(r-|x|)})^{3-γ}]``.
    """
    x_abs = np.asarray(x_abs, float)
    br = alpha ** (4 - gamma) - q_norm * alpha ** (3 - gamma)
    br = br - c_norm * (1 - np.exp(-alpha * (r - x_abs))) ** (3 - gamma)
    return np.exp(-alpha * (3 - gamma) * x_abs) * br


# --------------------------------------------------------------------------
# discrete agreement


DEFAULT_CASES = (
    (Power(4.0 / 3.0), 0.5, 2.0),
    (Exponential(1.0, 3.0), 0.5, 2.0),
    (Gaussian(1.0, 3.0), 0.3, 1.5),
    (Bump(0.2), 0.5, 4.0),
    (RationalDecay(), 0.5, 2.5),
)


@dataclass
class AgreementRow:
    profile: str
    gamma: float
    h: float
    abs_error: float
    rel_error: float


def discrete_agreement(profile: RadialProfile, gamma: float, h: float, r_lo: float, r_hi: float, dim: int = 1) -> AgreementRow:
    """Sup error of the discrete operator against ``radial_L_value`` on ``r_lo < |x| < r_hi``.

    The profile is sampled on the annulus with exact boundary data at ray
    crossings; the error is taken over all interior nodes.
    """
    from .core import Annulus, Grid, build_mask, sample
    from .operator import CoefficientSet, DiscreteOperator

    grid = Grid.centered(dim, h, r_hi)
    mask = build_mask(grid, Annulus((0.0,) * dim, r_lo, r_hi))
    fld = sample(profile.sampler(), mask)
    op = DiscreteOperator(mask, CoefficientSet(gamma))
    got = op.apply(fld)
    exact = radial_L_value(profile, gamma, np.linalg.norm(op.x, axis=1))
    err = float(np.max(np.abs(got - exact)))
    return AgreementRow(repr(profile), gamma, h, err, err / float(np.max(np.abs(exact))))


def agreement_table(gammas=(0.0, 1.0, 2.0), hs=(1e-2, 5e-3), cases=DEFAULT_CASES, dim: int = 1):
    """Rows of :func:`discrete_agreement` over profiles, ``gammas`` and ``hs``."""
    return [
        discrete_agreement(p, g, h, lo, hi, dim) for p, lo, hi in cases for g in gammas for h in hs
    ]


def p_laplace_eigenvalue(gamma: float, half_length: float = 1.0) -> float:
    """Principal eigenvalue on ``(-L, L)`` in 1D with ``c = 0`` and no drift.

    In one dimension the equation reduces to the p-Laplace eigenproblem with
    ``p = 4 - γ``, whose first eigenvalue is ``(π_p / 2L)^p`` with
    ``π_p = 2π / (p sin(π/p))``.
    """
    p = 4.0 - gamma
    pi_p = 2 * math.pi / (p * math.sin(math.pi / p))
    return (pi_p / (2 * half_length)) ** p
