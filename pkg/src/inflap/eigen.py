"""Principal eigenvalue of ``L + c`` on bounded domains.

``λ_O`` is located by bisection on the solvability of the forced problem

    L u + (c + λ) u^{3-γ} = -1 in O,   u = 0 on ∂O,

which has a positive solution exactly when ``λ < λ_O``.  The forced problem
is solved by the increasing iteration from the subsolution ``0``: the part of
``(c + λ) u^{3-γ}`` with a negative coefficient is kept implicit and the
positive part is lagged, so every iterate is a subsolution of the next.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core import Ball, DomainMask, Sampler, ScalarField, build_mask
from .dirichlet import SolverConfig, relax_to_steady
from .operator import CoefficientSet, DiscreteOperator, ZeroOrderTerm, signed_power
from .oracles import Gaussian

log = logging.getLogger(__name__)

ZERO = Sampler.constant(0.0)


class BracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenConfig:
    """Caps and tolerances of the eigenvalue search."""

    blowup_cap: float = 1e6
    max_outer: int = 20000
    step_tol: float = 1e-9
    bracket_tol: Optional[float] = None
    inner: SolverConfig = SolverConfig(tol_residual=1e-10, max_iters=1000)
    ratio_window: int = 10
    ratio_spread: float = 1e-4
    mp_max_iters: int = 5000
    mp_tol: float = 1e-7


@dataclass
class ForcedReport:
    status: str
    iterations: int
    sup_norm: float
    field: ScalarField
    sup_history: List[float]

    @property
    def feasible(self) -> bool:
        return self.status == "converged"


@dataclass
class EigenResult:
    lambda_lo: float
    lambda_hi: float
    eigenfunction: ScalarField
    probes: List[tuple] = field(default_factory=list)

    @property
    def estimate(self) -> float:
        return 0.5 * (self.lambda_lo + self.lambda_hi)

    @property
    def width(self) -> float:
        return self.lambda_hi - self.lambda_lo


def _split_term(kneg, rhs_const, p):
    # z(s) = kneg s^p + rhs_const  (kneg <= 0, so z is nonincreasing)
    return ZeroOrderTerm(
        lambda x, s: kneg * signed_power(s, p) + rhs_const,
        lambda x, s: kneg * p * np.abs(s) ** (p - 1),
    )


def solve_forced(
    lam: float,
    mask: DomainMask,
    coeffs: CoefficientSet,
    config: EigenConfig = EigenConfig(),
    op: Optional[DiscreteOperator] = None,
) -> ForcedReport:
    """Increasing iteration for ``L u + (c + λ) u^{3-γ} = -1``, ``u = 0`` on the boundary.

    Returns a report whose ``status`` is ``converged`` (a positive bounded
    solution was found), ``blowup`` (the iterates exceeded ``blowup_cap`` or
    kept growing geometrically) or ``stalled``.
    """
    op = op or DiscreteOperator(mask, coeffs.replace(h_rhs=None))
    p = 3.0 - coeffs.gamma
    k = op.c + lam
    kneg, kpos = np.minimum(k, 0.0), np.maximum(k, 0.0)
    I = mask.interior
    vals = np.full(mask.grid.n_nodes, np.nan)
    vals[mask.active] = 0.0
    u = np.zeros(len(I))
    sups = [0.0]
    prev_step = None
    ratios: List[float] = []
    status = "stalled"
    inner = config.inner
    it = 0
    base = coeffs.replace(h_rhs=None)
    for it in range(1, config.max_outer + 1):
        rhs = 1.0 + kpos * u**p
        cfg = inner.replace(tol_residual=inner.tol_residual * float(np.max(rhs)))
        rep = relax_to_steady(ScalarField(mask, vals, ZERO), base, _split_term(kneg, rhs, p), ZERO, cfg, op)
        if not rep.converged:
            status = "stalled"
            break
        new = rep.field.values[I]
        step = float(np.max(np.abs(new - u)))
        vals = np.array(rep.field.values)
        u = new
        sup = float(np.max(u))
        sups.append(sup)
        if not np.isfinite(sup) or sup > config.blowup_cap:
            status = "blowup"
            break
        if prev_step is not None and prev_step > 0:
            ratios.append(step / prev_step)
        prev_step = step
        scale = 1.0 + sup
        if step <= config.step_tol * scale:
            status = "converged"
            break
        if len(ratios) >= config.ratio_window:
            win = ratios[-config.ratio_window:]
            lo_r, hi_r = min(win), max(win)
            if hi_r - lo_r <= config.ratio_spread:
                if hi_r < 1.0:
                    # increments decay geometrically: the limit is bounded by sup + tail
                    tail = step * hi_r / (1.0 - hi_r)
                    if sup + tail <= config.blowup_cap:
                        status = "converged"
                        break
                    status = "blowup"
                    break
                if lo_r > 1.0:
                    status = "blowup"
                    break
    return ForcedReport(status, it, float(np.max(u)), ScalarField(mask, vals, ZERO), sups)


# --------------------------------------------------------------------------
# maximum-principle test


def max_principle_test(
    lam: float,
    mask: DomainMask,
    coeffs: CoefficientSet,
    config: EigenConfig = EigenConfig(),
    return_factor: bool = False,
):
    """Does the maximum principle hold for ``L + c + λ`` on ``mask``?

    Starting from a positive bump with zero boundary data, iterate
    ``L w + (c+λ)_- w^{3-γ} = -(c+λ)_+ u^{3-γ}``, ``u <- w / max w``.  By
    homogeneity the growth factor ``max w`` converges to a number below one
    exactly when positive profiles decay, i.e. when ``λ < λ_O``.
    """
    op = DiscreteOperator(mask, coeffs.replace(h_rhs=None))
    p = 3.0 - coeffs.gamma
    k = op.c + lam
    kneg, kpos = np.minimum(k, 0.0), np.maximum(k, 0.0)
    I = mask.interior
    if not np.any(kpos > 0):
        return (True, 0.0) if return_factor else True
    ball = mask.shape.inscribed_ball()
    d = np.linalg.norm(op.x - np.asarray(ball.center), axis=1)
    u = np.clip(1.0 - (d / ball.radius) ** 2, 0.0, None) + 1e-3
    u /= u.max()
    vals = np.full(mask.grid.n_nodes, np.nan)
    vals[mask.active] = 0.0
    base = coeffs.replace(h_rhs=None)
    g_prev = None
    g = 0.0
    for _ in range(config.mp_max_iters):
        term = _split_term(kneg, kpos * u**p, p)
        vals[I] = u
        rep = relax_to_steady(ScalarField(mask, vals, ZERO), base, term, ZERO, config.inner, op)
        w = rep.field.values[I]
        g = float(np.max(w))
        if g <= 0:
            g = 0.0
            break
        u = np.maximum(w / g, 0.0)
        if g_prev is not None and abs(g - g_prev) <= config.mp_tol * max(1.0, g):
            break
        g_prev = g
    holds = g < 1.0
    return (holds, g) if return_factor else holds


# --------------------------------------------------------------------------
# Gaussian barrier bound


def gaussian_upper_bound(
    mask: DomainMask,
    coeffs: CoefficientSet,
    margin: float = 1e-6,
    n_k: int = 8,
    max_retries: int = 8,
) -> float:
    """Certified upper bound for ``λ_O`` from the Gaussian test function.

    On the ball ``B_R(x0)`` (the domain itself, or its inscribed ball) the
    function ``φ = exp(-k|x-x0|^2) - exp(-k R^2)`` satisfies
    ``L φ + (c + λ) φ^{3-γ} > 0`` as soon as

        λ > sup(-c) + sup_r (|q|_∞ |φ'|^{3-γ} - |φ'|^{2-γ} φ'') / φ^{3-γ}.

    Each candidate ``k`` is checked node-wise with the discrete operator and
    the smallest certified value is returned.
    """
    ball = mask.shape if isinstance(mask.shape, Ball) else mask.shape.inscribed_ball()
    bmask = mask if ball is mask.shape else build_mask(mask.grid, ball)
    op = DiscreteOperator(bmask, coeffs.replace(h_rhs=None))
    R = ball.radius
    gamma = coeffs.gamma
    p = 3.0 - gamma
    qn = float(np.max(np.linalg.norm(op.q, axis=1))) if op.has_drift else 0.0
    sup_neg_c = float(np.max(-op.c))
    k0 = 2.0 * (1.0 + qn * R) / R**2
    r = np.linspace(0.0, R, 4001)[1:-1]
    best = math.inf
    for j in range(n_k):
        k = k0 * 2.0**j
        prof = Gaussian(k, R)
        d1, d2, phi = prof.d1(r), prof.d2(r), prof.phi(r)
        with np.errstate(under="ignore"):
            live = phi**p > 0  # large k underflows near the rim
        ratio = (qn * np.abs(d1[live]) ** p - np.abs(d1[live]) ** (2 - gamma) * d2[live]) / phi[live] ** p
        if gamma == 2.0:
            # at the centre the gradient vanishes and L φ = φ''(0) = -2k
            ratio = np.append(ratio, 2 * k / prof.phi(0.0) ** p)
        lam = sup_neg_c + float(np.max(ratio))
        lam = lam + margin * (1.0 + abs(lam))
        if lam >= best:
            continue
        fld = prof.sampler(center=ball.center)
        vals = np.full(bmask.grid.n_nodes, np.nan)
        vals[bmask.active] = fld(bmask.coords("active"))
        vals[bmask.boundary] = np.maximum(vals[bmask.boundary], 0.0)
        ev = op.evaluate(vals, None)
        phin = vals[bmask.interior]
        lhs = ev.value + (op.c + lam) * phin**p
        if np.all(lhs > 0):
            best = lam
    if not math.isfinite(best):
        # fall back to the discrete ratio itself, which certifies by construction
        for j in range(max_retries):
            k = k0 * 2.0 ** (n_k + j)
            prof = Gaussian(k, R)
            vals = np.full(bmask.grid.n_nodes, np.nan)
            vals[bmask.active] = prof.sampler(center=ball.center)(bmask.coords("active"))
            ev = op.evaluate(vals, None)
            phin = vals[bmask.interior]
            ok = phin > 0
            lam = float(np.max(-op.c[ok] - ev.value[ok] / phin[ok] ** p))
            lam = lam + margin * (1.0 + abs(lam))
            if np.all(ev.value + (op.c + lam) * phin**p > 0):
                return lam
        raise BracketError("Gaussian barrier could not be certified on this grid")
    return best


# --------------------------------------------------------------------------
# bisection


def principal_eigenvalue(
    mask: DomainMask,
    coeffs: CoefficientSet,
    bracket_tol: Optional[float] = None,
    config: EigenConfig = EigenConfig(),
    bracket: Optional[tuple] = None,
) -> EigenResult:
    """Bisection for ``λ_O`` on the solvability of the forced problem.

    Parameters
    ----------
    mask : bounded domain.
    coeffs : ``gamma``, ``q`` and ``c`` (``h_rhs`` is ignored).
    bracket_tol : final bracket width, default ``1e-2 (1 + |c|_∞)``.
    bracket : optional starting bracket; defaults to
        ``[-|c|_∞ - 1, Gaussian bound]``.

    Raises
    ------
    BracketError
        If the upper end is still feasible after one widening.
    """
    coeffs = coeffs.replace(h_rhs=None)
    op = DiscreteOperator(mask, coeffs)
    cnorm = float(np.max(np.abs(op.c)))
    tol = bracket_tol if bracket_tol is not None else (config.bracket_tol or 1e-2 * (1 + cnorm))
    if bracket is None:
        lo = -cnorm - 1.0
        hi = gaussian_upper_bound(mask, coeffs)
    else:
        lo, hi = bracket
    probes = []

    def probe(lam):
        rep = solve_forced(lam, mask, coeffs, config, op)
        probes.append((lam, rep.status, rep.sup_norm, rep.iterations))
        log.debug("probe %.6g %s sup=%.3g it=%d", lam, rep.status, rep.sup_norm, rep.iterations)
        return rep

    lo_rep = probe(lo)
    if not lo_rep.feasible:
        raise BracketError(f"lower end {lo} is not feasible ({lo_rep.status})")
    hi_rep = probe(hi)
    if hi_rep.feasible:
        hi = hi + 2.0 * (hi - lo)
        hi_rep = probe(hi)
        if hi_rep.feasible:
            raise BracketError(f"upper end {hi} is still feasible after widening")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        rep = probe(mid)
        if rep.feasible:
            lo, lo_rep = mid, rep
        else:
            hi = mid
    u = lo_rep.field.values.copy()
    I = mask.interior
    u[I] = u[I] / max(float(np.max(u[I])), 1e-300)
    u[mask.boundary] = 0.0
    return EigenResult(lo, hi, ScalarField(mask, u, ZERO), probes)


def hopf_fit(phi: ScalarField, ball: Optional[Ball] = None) -> float:
    """Largest ``ν`` with ``φ(x) >= ν (r - |x - x0|)`` on interior nodes of a ball."""
    ball = ball or phi.mask.shape.inscribed_ball()
    x = phi.mask.coords("interior")
    dist = ball.radius - np.linalg.norm(x - np.asarray(ball.center), axis=1)
    ok = dist > 0
    return float(np.min(phi.values[phi.mask.interior][ok] / dist[ok]))


def scaling_limit_check(
    alphas: Sequence[float],
    mask: DomainMask,
    coeffs: CoefficientSet,
    config: EigenConfig = EigenConfig(),
    rel_tol: float = 1e-3,
) -> List[tuple]:
    """``(α, λ_α, λ_α / α)`` where ``λ_α`` is the eigenvalue with potential ``α c``."""
    alphas = list(alphas)
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be increasing")
    c = coeffs.c
    out = []
    for a in alphas:
        ca = Sampler(lambda x, a=a: a * c(x), note=f"{a} * c")
        res = principal_eigenvalue(mask, coeffs.replace(c=ca), rel_tol * (1 + a), config)
        out.append((a, res.estimate, res.estimate / a))
    return out


def domain_continuity_check(
    masks: Sequence[DomainMask],
    coeffs: CoefficientSet,
    bracket_tol: Optional[float] = None,
    config: EigenConfig = EigenConfig(),
) -> List[EigenResult]:
    """Eigenvalues of a nested family (largest domain first)."""
    return [principal_eigenvalue(m, coeffs, bracket_tol, config) for m in masks]
