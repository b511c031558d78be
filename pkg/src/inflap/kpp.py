"""Whole-space KPP problems ``L u + f(x, u) = 0`` by domain exhaustion.

Each ball ``B_n`` is solved with zero Dirichlet data by the shifted monotone
iteration started at the supersolution ``M``; the family of balls is followed
until the solutions agree on an inner ball.  A certified compactly supported
bump gives the lower half of the sandwich ``κψ <= u_n <= M``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import Ball, DomainMask, Grid, Sampler, ScalarField, build_mask, bump
from .dirichlet import SolveReport, SolverConfig, monotone_iteration, relax_to_steady
from .operator import CoefficientSet, DiscreteOperator

log = logging.getLogger(__name__)


class SandwichViolation(RuntimeError):
    pass


class CertificateFailure(RuntimeError):
    pass


class HypothesisError(ValueError):
    pass


# --------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term ``f(x, s)`` with the constants used by the theory.

    Parameters
    ----------
    f : ``(x (n, dim), s (n,)) -> (n,)``.
    ell : ``x -> ℓ(x)``, the limit of ``f(x, s) / s^alpha_exp`` as ``s -> 0``.
    M : level with ``f(x, M) <= 0`` (a constant supersolution).
    M1 : asymptotic level in ``(0, M]``.
    alpha_exp : small-``s`` exponent in ``(0, 3 - γ]``.
    lip_bound : Lipschitz bound of ``f(x, .)`` on ``[0, M]``.
    df : optional ``s``-derivative.
    lipschitz_at_zero : False when ``f`` is not Lipschitz at ``s = 0``.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ell: Callable[[np.ndarray], np.ndarray]
    M: float
    M1: float
    alpha_exp: float
    lip_bound: float
    df: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    lipschitz_at_zero: bool = True
    note: str = ""

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not 0 < self.M1 <= self.M:
            raise ValueError("M1 must lie in (0, M]")
        if not self.alpha_exp > 0:
            raise ValueError("alpha_exp must be positive")

    def evaluate(self, x, s):
        with np.errstate(invalid="ignore"):
            return self.f(x, s)

    def derivative(self, x, s):
        if self.df is not None:
            return self.df(x, s)
        e = 1e-7 * (1.0 + np.abs(s))
        return (self.evaluate(x, s + e) - self.evaluate(x, s - e)) / (2 * e)

    def shifted(self, eps: float) -> "Nonlinearity":
        """``f_ε(x, s) = f(x, ε + s)`` with supersolution level ``M - ε``."""
        if not 0 < eps < self.M:
            raise ValueError("shift must lie in (0, M)")
        f, df = self.f, self.df
        return Nonlinearity(
            lambda x, s: f(x, s + eps),
            self.ell,
            self.M - eps,
            min(self.M1, self.M - eps),
            self.alpha_exp,
            self.lip_bound,
            None if df is None else (lambda x, s: df(x, s + eps)),
            True,
            f"{self.note} shifted by {eps}",
        )

    def lipschitz_on(self, top: float, dim: int, n_s: int = 401, radius: float = 50.0, seed: int = 0) -> float:
        """Sampled Lipschitz bound of ``f(x, .)`` on ``[0, top]``."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-radius, radius, size=(32, dim))
        s = np.linspace(0.0, top, n_s)
        best = 0.0
        for xi in x:
            xx = np.repeat(xi[None, :], n_s, axis=0)
            v = self.evaluate(xx, s)
            best = max(best, float(np.max(np.abs(np.diff(v) / np.diff(s)))))
        return best

    def check_hypotheses(self, dim: int, n: int = 64, radius: float = 50.0, seed: int = 0) -> dict:
        """Spot checks of ``f(x, 0) = 0`` and ``f(x, M) <= 0`` at random points."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-radius, radius, size=(n, dim))
        f0 = self.evaluate(x, np.zeros(n))
        fM = self.evaluate(x, np.full(n, self.M))
        return {
            "f_zero": bool(np.all(np.abs(f0) <= 1e-14)),
            "f_M_nonpositive": bool(np.all(fM <= 1e-14)),
            "ell_liminf": float(np.min(self.ell(rng.normal(size=(n, dim)) * 1e3))),
        }


def kpp_power(gamma: float) -> Nonlinearity:
    """``f(s) = s^{3-γ}(1 - s)`` with ``ℓ = 1``, ``M = M1 = 1``."""
    p = 3.0 - gamma
    return Nonlinearity(
        lambda x, s: s**p * (1.0 - s),
        lambda x: np.ones(len(np.atleast_2d(x))),
        1.0,
        1.0,
        p,
        1.0,
        lambda x, s: p * np.abs(s) ** (p - 1) - (p + 1) * np.abs(s) ** p,
        p >= 1,
        f"s^{p}(1-s)",
    )


def absorption(power: float = 3.0) -> Nonlinearity:
    """``f(s) = -s^power`` (``ℓ`` is ``-1`` when ``power`` is ``3 - γ``)."""
    return Nonlinearity(
        lambda x, s: -np.sign(s) * np.abs(s) ** power,
        lambda x: -np.ones(len(np.atleast_2d(x))),
        1.0,
        1.0,
        power,
        power,
        lambda x, s: -power * np.abs(s) ** (power - 1),
        True,
        f"-s^{power}",
    )


def zero_reaction() -> Nonlinearity:
    return Nonlinearity(
        lambda x, s: np.zeros_like(s),
        lambda x: np.zeros(len(np.atleast_2d(x))),
        1.0,
        1.0,
        3.0,
        0.0,
        lambda x, s: np.zeros_like(s),
        True,
        "f = 0",
    )


def heterogeneous_example(alpha: float = 1.0) -> Nonlinearity:
    """``f(x, s) = s^α (a(x) - b(x) s^{4-α})`` with ``a, b -> 1`` at infinity.

    ``a = 1 + exp(-|x|^2)/2`` and ``b = 1 + 1/(4(1+|x|^2))``; the local
    equilibrium ``(a/b)^{1/(4-α)}`` lies in ``[1, 1.2^{1/(4-α)}]``, so ``M = 1.2``
    is a supersolution level and ``M1 = 1``.
    """

    def ab(x):
        r2 = np.einsum("ij,ij->i", x, x)
        return 1.0 + 0.5 * np.exp(-r2), 1.0 + 0.25 / (1.0 + r2)

    def f(x, s):
        a, b = ab(x)
        return s**alpha * (a - b * s ** (4 - alpha))

    def df(x, s):
        a, b = ab(x)
        return alpha * np.abs(s) ** (alpha - 1) * a - 4 * b * np.abs(s) ** 3

    M = 1.2
    lip = 4 * 1.25 * M**3 + 1.5 * alpha * (1 if alpha >= 1 else 1e3)
    return Nonlinearity(f, lambda x: ab(np.atleast_2d(x))[0], M, 1.0, alpha, lip, df, alpha >= 1,
                        f"s^{alpha}(a - b s^{4 - alpha})")


def absorbing_outside_ball(gamma: float) -> Nonlinearity:
    """``f(x, s) = s^{3-γ}(a(x) - s)`` with ``a = -(1 + min(|x|^2, 1))/2``.

    ``ℓ = a <= -1/2`` everywhere and ``a = -1`` outside the unit ball.
    """
    p = 3.0 - gamma

    def a(x):
        r2 = np.einsum("ij,ij->i", x, x)
        return -0.5 * (1.0 + np.minimum(r2, 1.0))

    return Nonlinearity(
        lambda x, s: s**p * (a(x) - s),
        lambda x: a(np.atleast_2d(x)),
        1.0,
        1.0,
        p,
        p + 1.0 + p,
        lambda x, s: p * np.abs(s) ** (p - 1) * a(x) - (p + 1) * np.abs(s) ** p,
        True,
        "s^p(a(x) - s)",
    )


@dataclass(frozen=True)
class DriftSpec:
    """Drift sampler with a radial envelope ``|q(x)| <= env(|x|)``."""

    q: Optional[Sampler] = None
    vanishing: bool = True
    envelope: Callable[[np.ndarray], np.ndarray] = lambda r: np.zeros_like(np.asarray(r, float))

    def __post_init__(self):
        r = np.linspace(0.0, 1e3, 2001)
        env = np.asarray(self.envelope(r), float)
        if np.any(np.diff(env) > 1e-12):
            raise ValueError("drift envelope must be non-increasing")
        if self.vanishing and float(self.envelope(np.array([1e6]))[0]) > 1e-3:
            raise ValueError("vanishing drift needs an envelope tending to zero")

    @classmethod
    def none(cls) -> "DriftSpec":
        return cls()

    @classmethod
    def radial_decay(cls, scale: float = 1.0) -> "DriftSpec":
        """``q(x) = scale x / (1 + |x|^2)`` with envelope ``scale / (2 max(r, 1))``-type bound."""
        q = Sampler(
            lambda x: scale * x / (1.0 + np.einsum("ij,ij->i", x, x))[:, None],
            note="scale x/(1+|x|^2)",
            vector=True,
        )
        env = lambda r: scale * np.where(np.asarray(r) <= 1.0, 0.5, 1.0 / (1.0 + np.asarray(r) ** 2) * np.asarray(r))
        return cls(q, True, env)

    def radius_where_below(self, eps: float, r_max: float = 1e4) -> float:
        r = np.linspace(0.0, r_max, 200001)
        env = np.asarray(self.envelope(r), float)
        idx = np.flatnonzero(env <= eps)
        if len(idx) == 0:
            raise ValueError("envelope never drops below eps")
        return float(r[idx[0]])


@dataclass(frozen=True)
class GrowthEnvelope:
    """Positive envelope ``V`` with absorption exponent ``beta``."""

    V: Sampler
    beta: float
    inf_V: float

    def __post_init__(self):
        if not self.inf_V > 0:
            raise ValueError("inf_V must be positive")

    def check(self, mask: DomainMask, gamma: float) -> None:
        if not 0 < self.beta <= 3 - gamma:
            raise ValueError("beta must lie in (0, 3 - gamma]")
        v = self.V(mask.coords("active"))
        if np.any(v < self.inf_V):
            raise ValueError("envelope falls below inf_V on the mask")


# --------------------------------------------------------------------------
# bump subsolution


@dataclass
class BumpCertificate:
    """Node values of ``L_h ψ + δ ψ^{3-γ}``.

    Nodes where ``ψ`` underflows to zero carry no information and are
    skipped; ``relative_margin`` is the minimum of the value divided by
    ``ψ^{3-γ}`` over the remaining nodes.
    """

    field: ScalarField
    margin: float
    values: np.ndarray
    failing: np.ndarray
    relative_margin: float = float("nan")

    @property
    def passed(self) -> bool:
        return len(self.failing) == 0


def bump_subsolution(
    center: Sequence[float],
    epsilon: float,
    delta: float,
    coeffs: CoefficientSet,
    h: float,
    grid: Optional[Grid] = None,
) -> BumpCertificate:
    """Certify ``L_h ψ + δ ψ^{3-γ} > 0`` for ``ψ = exp(-1/(1-|ε(x-z)|^2))``.

    The bump is sampled on ``Ball(z, 1/ε)``; the certificate lists the
    minimal node-wise margin and the coordinates of failing nodes.
    """
    z = np.atleast_1d(np.asarray(center, float))
    dim = len(z)
    R = 1.0 / epsilon
    if grid is None:
        grid = Grid.centered(dim, h, float(np.max(np.abs(z))) + R + 2 * h)
    mask = build_mask(grid, Ball(tuple(z), R))
    psi = bump(epsilon, z)
    vals = np.full(grid.n_nodes, np.nan)
    vals[mask.active] = psi(mask.coords("active"))
    fld = ScalarField(mask, vals, psi)
    op = DiscreteOperator(mask, coeffs.replace(h_rhs=None))
    pw = vals[mask.interior] ** (3.0 - coeffs.gamma)
    lhs = op.apply(fld) + delta * pw
    live = pw > 0
    bad = np.flatnonzero(live & (lhs <= 0))
    rel = float(np.min(lhs[live] / pw[live]))
    return BumpCertificate(fld, float(np.min(lhs[live])), lhs, op.x[bad], rel)


def find_bump(center, delta, coeffs, h, eps_grid=(0.3, 0.25, 0.2, 0.15, 0.12, 0.1, 0.08, 0.06, 0.05)):
    """First ε in ``eps_grid`` whose bump certificate passes, with the certificate."""
    for eps in eps_grid:
        cert = bump_subsolution(center, eps, delta, coeffs, h)
        if cert.passed:
            return eps, cert
    return None, None


# --------------------------------------------------------------------------
# ball solves


@dataclass
class BallSolve:
    radius: float
    report: SolveReport
    field: ScalarField
    sandwich_ok: bool
    sandwich_gap: float
    monotone_ok: bool
    eps_used: List[float] = field(default_factory=list)


def _kpp_config(f: Nonlinearity, top: float, dim: int, config: SolverConfig) -> SolverConfig:
    lip = f.lip_bound if top <= f.M else f.lipschitz_on(top, dim)
    sigma = max(config.sigma, 1.05 * lip + 1e-3)
    return config.replace(sigma=sigma)


def _ball_mask(radius: float, h: float, dim: int, stencil_radius: int = 1) -> DomainMask:
    grid = Grid.centered(dim, h, radius, stencil_radius)
    return build_mask(grid, Ball((0.0,) * dim, radius))


def _sandwich_seed(f: Nonlinearity, drift: DriftSpec, gamma: float, h: float, dim: int,
                   radius: float, delta: Optional[float] = None):
    """Scaled certified bump ``κψ`` placed where the drift is small.

    Returns ``(z, ε, κ)`` or None when no certified bump fits in the ball.
    """
    coeffs = CoefficientSet(gamma, q=drift.q)
    z = np.zeros(dim)
    ell_min = float(np.min(f.ell(np.atleast_2d(z))))
    if ell_min <= 0:
        return None
    delta = delta if delta is not None else 0.5 * ell_min
    epsilon = None
    for eps in (0.3, 0.25, 0.2, 0.15, 0.12, 0.1, 0.08):
        r1 = drift.radius_where_below(eps) if drift.q is not None else 0.0
        if r1 + 1.0 / eps > radius - 2 * h:
            break
        z = np.zeros(dim)
        z[0] = r1
        if bump_subsolution(z, eps, delta, coeffs, h).passed:
            epsilon = eps
            break
    if epsilon is None:
        return None
    # f(x, κψ) >= δ (κψ)^{3-γ} where κψ <= s_max; find the largest admissible level
    p = 3.0 - gamma
    s = np.linspace(1e-6, f.M, 2000)
    xz = np.repeat(z[None, :], len(s), axis=0)
    ok = f.evaluate(xz, s) >= delta * s**p
    if not ok[0]:
        return None
    s_max = float(s[np.argmin(ok)] if not ok.all() else s[-1])
    kappa = 0.9 * s_max / math.exp(-1.0)
    kappa = min(kappa, 1.0)
    return z, epsilon, kappa


def _seed_values(mask: DomainMask, seed) -> np.ndarray:
    if seed is None:
        return np.zeros(mask.n_interior)
    z, eps, kappa = seed
    return kappa * bump(eps, z)(mask.coords("interior"))


def solve_kpp_ball(
    radius: float,
    f: Nonlinearity,
    drift: DriftSpec = DriftSpec(),
    gamma: float = 0.0,
    h: float = 0.05,
    dim: int = 1,
    config: SolverConfig = SolverConfig(tol_residual=1e-8),
    start: Optional[float] = None,
    eps_schedule: Sequence[float] = (1e-1, 1e-2, 1e-3),
    check_sandwich: bool = True,
    seed=...,
    polish_after: int = 500,
) -> BallSolve:
    """Monotone iteration on ``B_radius`` with zero Dirichlet data.

    Starts from ``start`` (default ``M``).  When ``f`` is not Lipschitz at
    zero, the shifted reactions ``f(x, ε + s)`` are solved for the ε in
    ``eps_schedule`` (each from its own supersolution ``M - ε``) and the last
    one is returned.  If the monotone sweeps have not converged after
    ``polish_after`` sweeps (slow algebraic decay near a degenerate zero), the
    last iterate is finished by Newton relaxation; the polished field is kept
    only if it stays below the iterate.

    Raises
    ------
    SandwichViolation
        If the solution falls below the certified bump.
    """
    mask = _ball_mask(radius, h, dim)
    coeffs = CoefficientSet(gamma, q=drift.q)
    stages = [None] if f.lipschitz_at_zero else list(eps_schedule)
    eps_used = []
    rep = None
    for eps in stages:
        fe = f if eps is None else f.shifted(eps)
        top = fe.M if start is None else max(start - (eps or 0.0), fe.M)
        cfg = _kpp_config(fe, top, dim, config)
        rep = monotone_iteration(fe, mask, coeffs, cfg.replace(max_iters=polish_after), start=top)
        if not rep.converged:
            rep = _polish(rep, fe, coeffs, config)
        if eps is not None:
            eps_used.append(eps)
    u = rep.field
    monotone_ok = all(
        np.all(b <= a + config.tol_residual * 10) for a, b in zip(rep.stack, rep.stack[1:])
    )
    ok, gap = True, 0.0
    if check_sandwich:
        if seed is ...:
            seed = _sandwich_seed(f, drift, gamma, h, dim, radius)
        if seed is not None:
            psi = _seed_values(mask, seed)
            gap = float(np.min(u.values[mask.interior] - psi))
            ok = gap >= -10 * config.tol_residual
            if not ok:
                raise SandwichViolation(
                    f"solution drops below the certified bump by {-gap:.3e} on radius {radius}"
                )
    return BallSolve(radius, rep, u, ok, gap, monotone_ok, eps_used)


def _polish(rep: SolveReport, f: Nonlinearity, coeffs: CoefficientSet, config: SolverConfig) -> SolveReport:
    u = rep.field
    pol = relax_to_steady(u, coeffs, f, u.bc, config.replace(sigma=0.0, max_iters=config.inner_max_iters))
    I = u.mask.interior
    if pol.converged and np.all(pol.field.values[I] <= u.values[I] + 10 * config.tol_residual):
        stack = (rep.stack or []) + [pol.field.values[I].copy()]
        return SolveReport(rep.iterations + pol.iterations, rep.residuals + pol.residuals, True,
                           pol.field, "converged", "polished by Newton relaxation", stack)
    return rep


def _inner_compare(a: ScalarField, b: ScalarField, r_inner: float) -> float:
    """Sup of ``|a - b|`` over nodes of both masks with ``|x| <= r_inner``."""
    ga, gb = a.grid, b.grid
    xa = a.mask.coords("interior")
    ka = np.rint(xa / ga.h).astype(np.int64)
    keep = np.linalg.norm(xa, axis=1) <= r_inner
    xb = b.mask.coords("interior")
    kb = np.rint(xb / gb.h).astype(np.int64)
    lookup = {tuple(k): v for k, v in zip(kb, b.values[b.mask.interior])}
    diffs = [abs(va - lookup[tuple(k)]) for k, va, kp in zip(ka, a.values[a.mask.interior], keep)
             if kp and tuple(k) in lookup]
    return float(max(diffs)) if diffs else float("inf")


@dataclass
class WholeSpaceResult:
    field: ScalarField
    trace: List[dict]
    converged: bool
    status: str
    balls: List[BallSolve]

    def inner_values(self, frac: float = 0.5) -> np.ndarray:
        x = self.field.mask.coords("interior")
        r = self.field.mask.shape.radius
        keep = np.linalg.norm(x, axis=1) <= frac * r
        return self.field.values[self.field.mask.interior][keep]


def solve_kpp_whole_space(
    f: Nonlinearity,
    drift: DriftSpec = DriftSpec(),
    radii: Sequence[float] = (10.0, 20.0, 40.0),
    gamma: float = 0.0,
    h: float = 0.05,
    dim: int = 1,
    config: SolverConfig = SolverConfig(tol_residual=1e-8),
    cauchy_tol: float = 1e-3,
    start: Optional[float] = None,
    check_sandwich: bool = True,
) -> WholeSpaceResult:
    """Exhaustion over increasing balls; Cauchy test on the smaller ball's inner half."""
    radii = list(radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be increasing")
    trace = []
    balls = []
    prev = None
    converged = False
    for R in radii:
        bs = solve_kpp_ball(R, f, drift, gamma, h, dim, config, start=start, check_sandwich=check_sandwich)
        balls.append(bs)
        u = bs.field
        I = u.mask.interior
        x = u.mask.coords("interior")
        inner = np.linalg.norm(x, axis=1) <= 0.5 * R
        entry = {
            "radius": R,
            "iterations": bs.report.iterations,
            "center": float(u.values[I][np.argmin(np.linalg.norm(x, axis=1))]),
            "inner_min": float(np.min(u.values[I][inner])),
            "inner_max": float(np.max(u.values[I][inner])),
            "diff": float("nan"),
            "sandwich_gap": bs.sandwich_gap,
        }
        if prev is not None:
            entry["diff"] = _inner_compare(prev, u, 0.5 * prev.mask.shape.radius)
            converged = entry["diff"] <= cauchy_tol and bs.report.converged
        trace.append(entry)
        log.info("kpp radius %s: %s", R, entry)
        prev = u
    status = "converged" if converged else "inconclusive"
    return WholeSpaceResult(prev, trace, converged, status, balls)


# --------------------------------------------------------------------------
# checks


@dataclass
class AsymptoticsReport:
    passed: bool
    min_value: float
    max_value: float
    deficit: float
    excess: float


def asymptotics_check(field: ScalarField, M1: float, r_in: float, r_out: float, tol: float = 0.1) -> AsymptoticsReport:
    """Min and max of ``field`` over ``r_in <= |x| <= r_out`` against ``M1``."""
    x = field.mask.coords("interior")
    r = np.linalg.norm(x, axis=1)
    sel = (r >= r_in) & (r <= r_out)
    if not sel.any():
        raise ValueError("annulus contains no interior nodes")
    v = field.values[field.mask.interior][sel]
    lo, hi = float(v.min()), float(v.max())
    deficit, excess = max(0.0, M1 - lo), max(0.0, hi - M1)
    return AsymptoticsReport(deficit <= tol and excess <= tol, lo, hi, deficit, excess)


@dataclass
class UniquenessReport:
    agree: bool
    max_gap: float
    where: tuple
    runs: List[WholeSpaceResult]
    refused: bool = False
    reason: str = ""


def uniqueness_probe(
    f: Nonlinearity,
    drift: DriftSpec = DriftSpec(),
    radii: Sequence[float] = (10.0, 20.0),
    gamma: float = 0.0,
    h: float = 0.05,
    dim: int = 1,
    config: SolverConfig = SolverConfig(tol_residual=1e-8),
    gap_tol: Optional[float] = None,
) -> UniquenessReport:
    """Whole-space solves from ``M``, from ``1.9 M`` and upward from a bump.

    Refuses (``refused=True``) when ``ℓ`` is not positive at infinity, since
    the uniqueness statement needs it.
    """
    probe = f.check_hypotheses(dim)
    if not probe["ell_liminf"] > 0:
        return UniquenessReport(False, float("nan"), (), [], True, "ell is not positive at infinity")
    tol = gap_tol if gap_tol is not None else 3 * config.tol_residual
    runs = [
        solve_kpp_whole_space(f, drift, radii, gamma, h, dim, config, start=f.M),
        solve_kpp_whole_space(f, drift, radii, gamma, h, dim, config, start=min(1.9 * f.M, 2 * f.M)),
    ]
    # increasing iteration from the certified bump on the largest ball
    R = radii[-1]
    mask = _ball_mask(R, h, dim)
    seed = _sandwich_seed(f, drift, gamma, h, dim, R)
    if seed is not None:
        coeffs = CoefficientSet(gamma, q=drift.q)
        cfg = _kpp_config(f, f.M, dim, config)
        rep = monotone_iteration(f, mask, coeffs, cfg, start=_seed_values(mask, seed), direction="increasing")
        runs.append(WholeSpaceResult(rep.field, [], rep.converged, rep.status, []))
    ref = runs[0].field
    gap, where = 0.0, ()
    for other in runs[1:]:
        x = ref.mask.coords("interior")
        d = _inner_compare(ref, other.field, 0.5 * ref.mask.shape.radius)
        if d > gap:
            gap = d
            a = ref.values[ref.mask.interior]
            where = tuple(x[int(np.argmax(np.abs(a - np.median(a))))])
    return UniquenessReport(gap <= tol, gap, where, runs)


@dataclass
class NonexistenceReport:
    certificate_margin: float
    sup_inner: List[float]
    collapsed: bool
    threshold: float
    fields: List[ScalarField]


def envelope_certificate(
    f: Nonlinearity, envelope: GrowthEnvelope, mask: DomainMask, coeffs: CoefficientSet
) -> float:
    """Largest node value of ``L_h V + ℓ V^{3-γ}`` (must be ``<= 0``)."""
    envelope.check(mask, coeffs.gamma)
    vals = np.full(mask.grid.n_nodes, np.nan)
    vals[mask.active] = envelope.V(mask.coords("active"))
    fld = ScalarField(mask, vals, envelope.V)
    op = DiscreteOperator(mask, coeffs.replace(h_rhs=None))
    ell = f.ell(op.x)
    return float(np.max(op.apply(fld) + ell * vals[mask.interior] ** (3.0 - coeffs.gamma)))


def nonexistence_check(
    f: Nonlinearity,
    envelope: GrowthEnvelope,
    drift: DriftSpec = DriftSpec(),
    radii: Sequence[float] = (10.0, 20.0),
    gamma: float = 0.0,
    h: float = 0.05,
    dim: int = 1,
    config: SolverConfig = SolverConfig(tol_residual=1e-12, max_iters=2000),
    threshold: float = 1e-3,
    cert_tol: float = 1e-12,
) -> NonexistenceReport:
    """Envelope certificate, then the maximal solution on each ball collapses.

    On every ball the problem is relaxed from ``M`` with boundary data ``M``
    (the largest admissible data), and the sup over the inner half is
    reported.  Collapse means that sup is at most ``threshold``.

    Raises
    ------
    CertificateFailure
        If ``L_h V + ℓ V^{3-γ} <= 0`` fails at some node (checked before any solve).
    """
    coeffs = CoefficientSet(gamma, q=drift.q)
    big = _ball_mask(radii[-1], h, dim)
    margin = envelope_certificate(f, envelope, big, coeffs)
    if margin > cert_tol:
        raise CertificateFailure(f"envelope certificate fails: max of L V + l V^p is {margin:.3e}")
    sups, fields = [], []
    for R in radii:
        mask = _ball_mask(R, h, dim)
        g = Sampler.constant(f.M)
        vals = np.full(mask.grid.n_nodes, np.nan)
        vals[mask.active] = f.M
        rep = relax_to_steady(ScalarField(mask, vals, g), coeffs, f, g, config)
        x = mask.coords("interior")
        inner = np.linalg.norm(x, axis=1) <= 0.5 * R
        sups.append(float(np.max(rep.field.values[mask.interior][inner])))
        fields.append(rep.field)
    return NonexistenceReport(margin, sups, sups[-1] <= threshold, threshold, fields)


def exponential_envelope(kappa: float, eps: float, gamma: float) -> GrowthEnvelope:
    """``V = exp(δ θ)`` with ``δ = κ/2`` and the C² profile ``θ`` (``θ = |x|`` off ``B_ε``)."""
    delta = kappa / 2.0

    def theta(r):
        inside = 3 * eps / 8 + 3 * r**2 / (4 * eps) - r**4 / (8 * eps**3)
        return np.where(r < eps, inside, r)

    V = Sampler.radial(lambda r: np.exp(delta * theta(r)), note="exp(delta theta)")
    beta = 3.0 - gamma
    return GrowthEnvelope(V, beta, float(np.exp(delta * 3 * eps / 8)))


def inward_drift(kappa: float, eps: float) -> DriftSpec:
    """``q(x) = -κ x / max(|x|, ε)`` so that ``q·x = -κ|x|`` off ``B_ε``."""
    q = Sampler(
        lambda x: -kappa * x / np.maximum(np.linalg.norm(x, axis=1), eps)[:, None],
        note="inward drift",
        vector=True,
    )
    return DriftSpec(q, False, lambda r: np.full_like(np.asarray(r, float), kappa))


def _theta(r, eps):
    r = np.asarray(r, float)
    return np.where(r < eps, 3 * eps / 8 + 3 * r**2 / (4 * eps) - r**4 / (8 * eps**3), r)


def theta_bracket(r, kappa: float, eps: float, gamma: float) -> np.ndarray:
    """``(L V) / V^{3-γ}`` for ``V = exp(δθ)`` under ``q = -κ x / max(|x|, ε)`` in one dimension."""
    delta = kappa / 2.0
    r = np.asarray(r, float)
    inside = r < eps
    d1 = np.where(inside, 3 * r / (2 * eps) - r**3 / (2 * eps**3), 1.0)
    d2 = np.where(inside, 3 / (2 * eps) - 3 * r**2 / (2 * eps**3), 0.0)
    qr = -kappa * r / np.maximum(r, eps)
    a = np.abs(d1) ** (2 - gamma)
    return delta ** (3 - gamma) * a * d2 + delta ** (4 - gamma) * a * d1**2 + delta ** (3 - gamma) * qr * d1 * a


def inward_drift_example(kappa: float, eps: float, gamma: float, r_pos: float = 3.0, safety: float = 1.5):
    """Reaction, drift and exponential envelope for the inward-drift case.

    ``q = -κ x / max(|x|, ε)``, ``V = exp(κθ/2)`` and
    ``f = s^{3-γ}(ℓ(x) - s)`` where ``ℓ = -Θ`` on ``B_ε`` (``Θ`` bounds the
    bracket there), ``ℓ = δ^{4-γ}/2 > 0`` on ``2ε <= |x| <= r_pos`` and
    ``ℓ = -δ^{4-γ}/2`` beyond ``r_pos + 1``, with linear ramps between.
    ``ℓ`` is positive on an annulus, so ``V = 1`` is not a certificate.
    """
    delta = kappa / 2.0
    p = 3.0 - gamma
    rr = np.linspace(0.0, eps, 4001)
    Theta = safety * max(float(np.max(theta_bracket(rr, kappa, eps, gamma))), 0.0) + 0.1
    lo, mid = -delta ** (4 - gamma) / 2, delta ** (4 - gamma) / 2
    knots = np.array([0.0, eps, 2 * eps, r_pos, r_pos + 1.0])
    levels = np.array([-Theta, -Theta, mid, mid, lo])

    def ell(x):
        r = np.linalg.norm(np.atleast_2d(x), axis=1)
        return np.interp(r, knots, levels)

    f = Nonlinearity(
        lambda x, s: s**p * (ell(x) - s),
        ell,
        1.0,
        1.0,
        p,
        p * (Theta + 1.0) + p + 1.0,
        lambda x, s: p * np.abs(s) ** (p - 1) * ell(x) - (p + 1) * np.abs(s) ** p,
        p >= 1,
        "s^p(l(x) - s), inward drift",
    )
    return f, inward_drift(kappa, eps), exponential_envelope(kappa, eps, gamma), Theta
