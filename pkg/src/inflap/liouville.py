"""Desk-scale certificates for the Liouville statements.

Whole-space rigidity cannot be checked on a finite grid.  Each experiment
below certifies the inequality that drives the argument (a strict sub- or
supersolution, checked node-wise with the discrete operator) and then runs
the comparison on growing domains.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core import Annulus, Ball, Grid, Sampler, ScalarField, build_mask, bump, sample
from .dirichlet import SolverConfig, relax_to_steady
from .operator import CoefficientSet, DiscreteOperator, ZeroOrderTerm

log = logging.getLogger(__name__)


class EnvelopeCertificateError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters shared by the Liouville experiments.

    Parameters
    ----------
    gamma : operator exponent in ``[0, 2]``.
    alpha_test : exponent of ``θ_ε = (|x|/ε)^α``, in ``(-1, 0)``.
    epsilon : inner radius of the certification annulus.
    beta : absorption exponent in ``(0, 3 - γ]``.
    radii : outer radii of the growing domains.
    h : lattice spacing.
    tol : residual tolerance of the solves.
    """

    gamma: float = 0.0
    alpha_test: float = -0.5
    epsilon: float = 1.0
    beta: float = 1.0
    radii: tuple = (4.0, 8.0, 16.0)
    h: float = 1e-2
    tol: float = 1e-9
    dim: int = 1

    def __post_init__(self):
        if not 0 <= self.gamma <= 2:
            raise ValueError("gamma must lie in [0, 2]")
        if not -1 < self.alpha_test < 0:
            raise ValueError("alpha_test must lie in (-1, 0)")
        if not 0 < self.beta <= 3 - self.gamma:
            raise ValueError("beta must lie in (0, 3 - gamma]")
        if self.epsilon <= 0 or self.h <= 0:
            raise ValueError("epsilon and h must be positive")

    def replace(self, **kw) -> "ExperimentConfig":
        d = dict(self.__dict__)
        d.update(kw)
        return ExperimentConfig(**d)


# --------------------------------------------------------------------------
# θ_ε certificate


def theta_closed_form(r, alpha: float, eps: float, gamma: float = 0.0, c: float = 1.0):
    """``Δ^γ_∞ θ_ε - c |∇θ_ε|^{4-γ}`` for ``θ_ε = (r/ε)^α``.

    With ``θ' = α ε^{-α} r^{α-1}`` and ``θ'' = α(α-1) ε^{-α} r^{α-2}`` this is
    ``|θ'|^{2-γ} (θ'' - c θ'^2)``; for ``γ = 0``, ``c = 1`` it reduces to
    ``α^3 ε^{-3α} r^{3α-4} (α - 1 - α ε^{-α} r^α)``.
    """
    r = np.asarray(r, float)
    d1 = alpha * eps ** (-alpha) * r ** (alpha - 1)
    d2 = alpha * (alpha - 1) * eps ** (-alpha) * r ** (alpha - 2)
    return np.abs(d1) ** (2 - gamma) * (d2 - c * d1**2)


@dataclass
class ThetaReport:
    alpha: float
    min_margin: float
    max_deviation: float
    worst_radius: float
    small_margin: bool
    passed: bool
    n_nodes: int


def certify_theta_subsolution(cfg: ExperimentConfig, r_out: Optional[float] = None, c: float = 1.0) -> ThetaReport:
    """Discrete ``Δ^γ_∞ θ_ε - c G^{4-γ}`` on ``ε < |x| < r_out``.

    Reports the minimal node value (must be positive), the largest deviation
    from the closed form, and flags margins below ``10 h``.
    """
    r_out = r_out or 4.0 * cfg.epsilon
    a, eps, g = cfg.alpha_test, cfg.epsilon, cfg.gamma
    grid = Grid.centered(cfg.dim, cfg.h, r_out)
    mask = build_mask(grid, Annulus((0.0,) * cfg.dim, eps, r_out))
    theta = Sampler.radial(lambda r: (r / eps) ** a, note="theta")
    fld = sample(theta, mask)
    op = DiscreteOperator(mask, CoefficientSet(g))
    ev = op.evaluate(fld.values, theta)
    vals = ev.value - c * ev.G ** (4 - g)
    r = np.linalg.norm(op.x, axis=1)
    exact = theta_closed_form(r, a, eps, g, c)
    i = int(np.argmin(vals))
    m = float(vals[i])
    return ThetaReport(
        a, m, float(np.max(np.abs(vals - exact))), float(r[i]), m < 10 * cfg.h, m > 0, len(vals)
    )


# --------------------------------------------------------------------------
# Liouville II


@dataclass
class LiouvilleIIReport:
    radii: List[float]
    inf_values: List[float]
    oscillations: List[float]
    comparison_gaps: List[float]
    min_K: float
    flat: bool
    monotone: bool


def drift_x_envelope(q: Optional[Sampler], r_max: float, dim: int = 1, n: int = 4001) -> float:
    """Sampled ``sup (q(x)·x)_+`` over ``|x| <= r_max`` along the axes."""
    if q is None:
        return 0.0
    t = np.linspace(-r_max, r_max, n)
    best = 0.0
    for k in range(dim):
        x = np.zeros((n, dim))
        x[:, k] = t
        best = max(best, float(np.max(np.einsum("ij,ij->i", q(x), x))))
    return best


def liouville_II_experiment(
    cfg: ExperimentConfig,
    q: Optional[Sampler] = None,
    r_K: float = 1.0,
    outer_value: float = 2.0,
    alphas: Sequence[float] = (-0.5, -0.25, -0.1),
    tol: float = 1e-6,
    config: Optional[SolverConfig] = None,
) -> LiouvilleIIReport:
    """``L u = 0`` on ``r_K < |x| < R`` with data 1 inside and ``outer_value`` outside.

    The solutions are supersolutions bounded below by 1.  The trace records
    ``inf u`` (should stay at least ``min_K u - tol = 1 - tol``), the
    oscillation on the fixed annulus ``r_K < |x| < R_0/2`` (should decrease
    with ``R``), and the worst gap ``u - (|x|/r_K)^α`` over the α sweep
    (the comparison used by the argument; should be ``>= -tol``).

    Raises
    ------
    EnvelopeCertificateError
        If ``(q·x)_+ >= 1`` somewhere outside ``B_{r_K}`` on the largest domain.
    """
    R_max = max(cfg.radii)
    env = drift_x_envelope(q, R_max, cfg.dim)
    if env >= 1.0:
        raise EnvelopeCertificateError(f"(q.x)_+ reaches {env:.3f} >= 1")
    config = config or SolverConfig(tol_residual=cfg.tol, max_iters=2000)
    coeffs = CoefficientSet(cfg.gamma, q=q)
    R0 = min(cfg.radii)

    def data(x):
        r = np.linalg.norm(x, axis=1)
        return np.where(r < 0.5 * (r_K + R0), 1.0, outer_value)

    g = Sampler(data, note="inner 1, outer constant")
    infs, oscs, gaps = [], [], []
    for R in sorted(cfg.radii):
        grid = Grid.centered(cfg.dim, cfg.h, R)
        mask = build_mask(grid, Annulus((0.0,) * cfg.dim, r_K, R))
        x_all = mask.coords("active")
        r_all = np.linalg.norm(x_all, axis=1)
        vals = np.full(grid.n_nodes, np.nan)
        # linear-in-radius start between the two data values
        vals[mask.active] = 1.0 + (outer_value - 1.0) * (r_all - r_K) / (R - r_K)
        u0 = ScalarField(mask, vals, g)
        rep = relax_to_steady(u0, coeffs, None, g, config)
        u = rep.field.values[mask.interior]
        x = mask.coords("interior")
        r = np.linalg.norm(x, axis=1)
        infs.append(float(np.min(u)))
        sel = r <= 0.5 * R0
        oscs.append(float(np.ptp(u[sel])))
        gaps.append(float(min(np.min(u - (r / r_K) ** a) for a in alphas)))
        log.info("liouville II R=%s status=%s inf=%s osc=%s", R, rep.status, infs[-1], oscs[-1])
    flat = all(v >= 1.0 - tol for v in infs)
    mono = all(b <= a + tol for a, b in zip(oscs, oscs[1:]))
    return LiouvilleIIReport(sorted(cfg.radii), infs, oscs, gaps, 1.0, flat, mono)


# --------------------------------------------------------------------------
# sharpness


@dataclass
class SharpnessReport:
    max_error: float
    max_value: float
    nonconstant: bool
    values: np.ndarray
    exact: np.ndarray
    x: np.ndarray


def sharpness_counterexample(h: float = 1e-3, half_width: float = 3.0, gamma: float = 0.0) -> SharpnessReport:
    """Discrete ``L u`` for ``u = 1/(1+x^2)`` with ``q = 4x/(1+x^2)`` in one dimension.

    The closed form is ``-8x^2/(1+x^2)^6`` for ``γ = 0``.  The drift has
    ``(q·x)_+ -> 4``, so the bounded-below supersolution ``u`` is not constant.
    """
    grid = Grid.centered(1, h, half_width)
    from .core import Box

    mask = build_mask(grid, Box((-half_width,), (half_width,)))
    u = Sampler(lambda x: 1.0 / (1.0 + x[:, 0] ** 2), note="1/(1+x^2)")
    q = Sampler(lambda x: 4.0 * x / (1.0 + x**2), note="4x/(1+x^2)", vector=True)
    fld = sample(u, mask)
    op = DiscreteOperator(mask, CoefficientSet(gamma, q=q))
    vals = op.apply(fld)
    x = op.x[:, 0]
    exact = -8 * x**2 / (1 + x**2) ** 6
    return SharpnessReport(
        float(np.max(np.abs(vals - exact))),
        float(np.max(vals)),
        bool(fld.oscillation() > 0),
        vals,
        exact,
        x,
    )


# --------------------------------------------------------------------------
# Liouville III


def power_envelope(gamma: float, beta: float):
    """``V = |x|^α`` with ``α = (4-γ)/(3-γ-β)``; requires ``β < 3 - γ``."""
    if not 0 < beta < 3 - gamma:
        raise ValueError("power envelope needs 0 < beta < 3 - gamma")
    alpha = (4 - gamma) / (3 - gamma - beta)
    return alpha, Sampler.radial(lambda r: r**alpha, note=f"|x|^{alpha}")


def envelope_potential(gamma: float, beta: float, qx_plus: float = 0.0) -> float:
    """Largest constant ``c`` with ``-c >= α^{3-γ}((α-1) + (q·x)_+)``."""
    alpha = (4 - gamma) / (3 - gamma - beta)
    return -(alpha ** (3 - gamma)) * ((alpha - 1) + qx_plus)


def _absorption_term(c: float, beta: float) -> ZeroOrderTerm:
    def val(x, s):
        return c * np.maximum(s, 0.0) ** beta

    def der(x, s):
        sp = np.maximum(s, 0.0)
        with np.errstate(divide="ignore"):
            d = np.where(s > 0, c * beta * sp ** (beta - 1), 0.0)
        return d

    return ZeroOrderTerm(val, der, note=f"{c} u_+^{beta}")


@dataclass
class LiouvilleIIIReport:
    alpha: float
    c: float
    certificate_max: float
    radii: List[float]
    kappas: List[float]
    sup_plus: List[float]
    final_sup_plus: float
    below_barrier: bool
    statuses: List[str] = field(default_factory=list)


def liouville_III_experiment(
    cfg: ExperimentConfig,
    c: Optional[float] = None,
    seed: Optional[Sampler] = None,
    q: Optional[Sampler] = None,
    config: Optional[SolverConfig] = None,
    cert_tol: Optional[float] = None,
) -> LiouvilleIIIReport:
    """Decay of ``u_+`` for ``L u + c u_+^β = 0`` under a power envelope.

    The envelope certificate ``L_h V + c V^β <= 0`` is checked on the
    largest ball first, relative to ``1 + |c V^β|`` and up to ``cert_tol``
    (default ``h²``: for ``V = |x|²`` the flux form gives ``8|x|² + 2h²/3``
    at ``γ = 0``, so the borderline case ``c = -8`` holds only to that order).  On each ball ``B_R`` the relaxation starts from
    ``seed`` with outer data ``κ_R V``, where ``κ_R`` is the smallest
    constant with ``seed_+ <= κ_R V`` on the boundary layer.  The report
    records ``sup u_+`` on the inner half and whether ``u <= κ_R V`` holds.

    Raises
    ------
    EnvelopeCertificateError
        If the certificate fails (wrong exponent or ``c`` too weak).
    """
    g, beta = cfg.gamma, cfg.beta
    alpha, V = power_envelope(g, beta)
    if c is None:
        c = envelope_potential(g, beta, drift_x_envelope(q, max(cfg.radii), cfg.dim))
    if c >= 0:
        raise ValueError("c must be negative")
    seed = seed or bump(1.0 / (0.5 * min(cfg.radii)))
    coeffs = CoefficientSet(g, q=q)
    config = config or SolverConfig(tol_residual=cfg.tol, max_iters=2000)

    big = build_mask(Grid.centered(cfg.dim, cfg.h, max(cfg.radii)), Ball((0.0,) * cfg.dim, max(cfg.radii)))
    vf = sample(V, big)
    op = DiscreteOperator(big, coeffs)
    cert = op.apply(vf) + c * vf.values[big.interior] ** beta
    scale = 1.0 + np.abs(c * vf.values[big.interior] ** beta)
    cert_max = float(np.max(cert / scale))
    if cert_tol is None:
        cert_tol = cfg.h**2
    if cert_max > cert_tol:
        raise EnvelopeCertificateError(f"L V + c V^beta reaches {cert_max:.3e} (relative)")

    term = _absorption_term(c, beta)
    kappas, sups, statuses = [], [], []
    below = True
    for R in sorted(cfg.radii):
        mask = build_mask(Grid.centered(cfg.dim, cfg.h, R), Ball((0.0,) * cfg.dim, R))
        xb = mask.coords("boundary")
        vb = V(xb)
        sb = np.maximum(seed(xb), 0.0)
        kappa = float(np.max(np.where(vb > 0, sb / np.where(vb > 0, vb, 1.0), 0.0)))
        gb = Sampler(lambda x, k=kappa: k * V(x), note="kappa V")
        vals = np.full(mask.grid.n_nodes, np.nan)
        vals[mask.interior] = seed(mask.coords("interior"))
        vals[mask.boundary] = gb(xb)
        rep = relax_to_steady(ScalarField(mask, vals, gb), coeffs, term, gb, config)
        u = rep.field.values[mask.interior]
        x = mask.coords("interior")
        inner = np.linalg.norm(x, axis=1) <= 0.5 * R
        kappas.append(kappa)
        sups.append(float(np.max(np.maximum(u[inner], 0.0))))
        below = below and bool(np.all(u <= kappa * V(x) + 10 * cfg.tol * (1 + kappa * V(x))))
        statuses.append(rep.status)
    return LiouvilleIIIReport(alpha, c, cert_max, sorted(cfg.radii), kappas, sups, sups[-1], below, statuses)
