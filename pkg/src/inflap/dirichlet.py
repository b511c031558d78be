"""Dirichlet problems ``L u + z(x, u) = h`` on masked domains.

Two relaxations are provided.

* ``explicit``: Jacobi pseudo-time ``u <- u + dt R(u)`` with a per-node step
  that makes every update a convex combination of stencil values.
* ``implicit`` (default): linearly implicit pseudo-time
  ``(I/dt - J) δ = R(u)`` with the frozen-coefficient Jacobian ``J`` of the
  operator and an adaptive step (switched evolution relaxation).  The matrix
  ``I/dt - J`` is an M-matrix, so each step keeps the discrete comparison
  structure, and for large ``dt`` the step becomes a policy-iteration step.

The shifted monotone iteration ``L u_{k+1} - σ u_{k+1} = -f(u_k) - σ u_k``
builds on top of these.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import DomainMask, Sampler, ScalarField
from .operator import CoefficientSet, DiscreteOperator, ZeroOrderTerm

log = logging.getLogger(__name__)


class NonMonotoneStep(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and caps shared by the relaxations.

    Parameters
    ----------
    tol_residual : sup-norm of the residual accepted as converged.
    max_iters : cap on pseudo-time steps (or outer iterations).
    cfl_safety : safety factor of the explicit step, in (0, 1).
    sigma : shift of the monotone iteration.
    scheme : ``"implicit"`` or ``"explicit"``.
    """

    tol_residual: float = 1e-8
    max_iters: int = 5000
    cfl_safety: float = 0.9
    sigma: float = 0.0
    scheme: str = "implicit"
    dt0: Optional[float] = None
    dt_max: float = 1e12
    g_reg: float = 1e-6
    divergence_factor: float = 10.0
    divergence_window: int = 100
    inner_max_iters: int = 400
    exact_jacobian: bool = True

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.scheme not in ("implicit", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def replace(self, **kw) -> "SolverConfig":
        d = dict(self.__dict__)
        d.update(kw)
        return SolverConfig(**d)


@dataclass
class SolveReport:
    iterations: int
    residuals: List[float]
    converged: bool
    field: ScalarField
    status: str = "converged"
    message: str = ""
    stack: Optional[List[np.ndarray]] = None

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")


def _diverging(hist, cfg: SolverConfig) -> bool:
    w = cfg.divergence_window
    if not np.isfinite(hist[-1]):
        return True
    return len(hist) > w and hist[-1] > cfg.divergence_factor * hist[-1 - w]


def _setup(u0: ScalarField, g: Optional[Sampler]):
    mask = u0.mask
    vals = np.array(u0.values, dtype=float)
    if g is not None:
        gb = g(mask.coords("boundary"))
        if not np.all(np.isfinite(gb)):
            raise ValueError("boundary data is not finite on the boundary layer")
        vals[mask.boundary] = gb
        bc = g
    else:
        bc = u0.bc
    if not np.all(np.isfinite(vals[mask.active])):
        raise ValueError("initial field is not finite on the mask")
    return vals, bc


def relax_to_steady(
    u0: ScalarField,
    coeffs: CoefficientSet,
    term=None,
    g: Optional[Sampler] = None,
    config: SolverConfig = SolverConfig(),
    op: Optional[DiscreteOperator] = None,
) -> SolveReport:
    """Relax ``L u + term(x, u) - h_rhs = 0`` with Dirichlet data ``g``.

    Parameters
    ----------
    u0 : initial field; its boundary values are used when ``g`` is None.
    coeffs : operator coefficients (``h_rhs`` is the forcing).
    term : pointwise term with ``evaluate``/``derivative`` or None.
    g : boundary sampler, also used at exact ray crossings.
    config : tolerances and scheme.
    op : a prebuilt operator for ``u0.mask`` and ``coeffs``.

    Returns
    -------
    SolveReport
        ``status`` is ``converged``, ``max_iters`` or ``diverged``.
    """
    mask = u0.mask
    op = op or DiscreteOperator(mask, coeffs)
    vals, bc = _setup(u0, g)
    cache = op.crossing_cache(bc)
    I = mask.interior
    if config.scheme == "explicit":
        return _relax_explicit(op, vals, bc, cache, term, config)

    ev = op.evaluate(vals, bc, cache)
    R = op.residual(vals, term, bc, cache, ev)
    res = float(np.max(np.abs(R)))
    hist = [res]
    eye = sp.identity(op.n, format="csr")
    dt = config.dt0
    it = 0
    status = "max_iters"
    while True:
        if res <= config.tol_residual:
            status = "converged"
            break
        if it >= config.max_iters:
            break
        if _diverging(hist, config):
            status = "diverged"
            break
        J = op.jacobian(ev, config.g_reg, exact=config.exact_jacobian)
        if not np.all(np.isfinite(J.data)):
            J = op.jacobian(ev, config.g_reg)
        if term is not None and hasattr(term, "derivative"):
            dz = np.minimum(np.asarray(term.derivative(op.x, vals[I]), float), 0.0)
            J = J + sp.diags(dz)
        if dt is None:
            # the exact Newton matrix vanishes on flat fields when γ < 2
            d = max(float(np.max(np.abs(J.diagonal()))),
                    float(np.max(np.abs(op.jacobian(ev, config.g_reg).diagonal()))), 1e-300)
            dt = 1e4 / d
        delta = spla.spsolve((eye / dt - J).tocsc(), R)
        trial = vals.copy()
        trial[I] += delta
        ev_t = op.evaluate(trial, bc, cache)
        try:
            R_t = op.residual(trial, term, bc, cache, ev_t)
            res_t = float(np.max(np.abs(R_t)))
        except ValueError:
            res_t = np.inf
        it += 1
        if not np.isfinite(res_t) or res_t > 2.0 * res:
            dt *= 0.25
            hist.append(res)
            if dt < 1e-300:
                status = "diverged"
                break
            continue
        grow = float(np.clip(res / max(res_t, 1e-300), 0.5, 10.0))
        if res_t <= res:
            # a stalled sup-norm (one slow node) must not freeze the step
            grow = max(grow, 2.0)
        dt = min(config.dt_max, dt * grow)
        vals, ev, R, res = trial, ev_t, R_t, res_t
        hist.append(res)
    conv = status == "converged"
    return SolveReport(it, hist, conv, ScalarField(mask, vals, bc), status)


def _relax_explicit(op, vals, bc, cache, term, config):
    mask = op.mask
    I = mask.interior
    rho = mask.min_arm()
    qmax = np.abs(op.q).sum(axis=1)
    lip = 0.0
    hist = []
    status = "max_iters"
    it = 0
    while True:
        ev = op.evaluate(vals, bc, cache)
        R = op.residual(vals, term, bc, cache, ev)
        res = float(np.max(np.abs(R)))
        hist.append(res)
        if res <= config.tol_residual:
            status = "converged"
            break
        if it >= config.max_iters:
            break
        if _diverging(hist, config):
            status = "diverged"
            break
        if term is not None and hasattr(term, "derivative"):
            lip = np.abs(term.derivative(op.x, vals[I]))
        p = 2.0 - op.gamma
        gmax = float(np.max(ev.G)) if p > 0 else 1.0
        a = max(gmax, config.g_reg) ** p
        dt = config.cfl_safety * rho**2 / (2.0 * (a * (1.0 + rho * qmax) + rho**2 * lip))
        vals = vals.copy()
        vals[I] += dt * R
        it += 1
    return SolveReport(it, hist, status == "converged", ScalarField(mask, vals, bc), status)


# --------------------------------------------------------------------------
# shifted monotone iteration


def _shifted_term(f, sigma, x, u_prev):
    """``z(s) = -σ s + f(x, u_prev) + σ u_prev`` so that ``L u + z = 0`` is
    ``L u - σ u = -f(u_prev) - σ u_prev``."""
    rhs = np.asarray(f.evaluate(x, u_prev), float) + sigma * u_prev
    return ZeroOrderTerm(lambda xx, s: rhs - sigma * s, lambda xx, s: np.full_like(s, -sigma))


def monotone_iteration(
    f,
    mask: DomainMask,
    coeffs: CoefficientSet,
    config: SolverConfig,
    start: float | np.ndarray = None,
    g: Optional[Sampler] = None,
    keep_stack: bool = True,
    direction: str = "decreasing",
) -> SolveReport:
    """Shifted monotone iteration for ``L u + f(x, u) = 0``, ``u = g`` on the boundary.

    Parameters
    ----------
    f : nonlinearity with ``evaluate(x, s)`` (and ``M`` when ``start`` is None).
    mask : bounded domain.
    coeffs : operator coefficients.
    config : ``sigma`` must exceed the Lipschitz constant of ``f(x, .)``.
    start : constant or interior array; defaults to ``f.M``.
    g : boundary data, zero by default.
    direction : ``decreasing`` from a supersolution, ``increasing`` from a subsolution.

    Raises
    ------
    NonMonotoneStep
        If an iterate moves against ``direction`` by more than ``10 tol``.
    """
    g = g or Sampler.constant(0.0)
    op = DiscreteOperator(mask, coeffs)
    I = mask.interior
    x = op.x
    if start is None:
        start = f.M
    vals = np.full(mask.grid.n_nodes, np.nan)
    vals[mask.boundary] = g(mask.coords("boundary"))
    vals[I] = start
    cache = op.crossing_cache(g)
    tol = config.tol_residual
    inner = config.replace(tol_residual=0.1 * tol, max_iters=config.inner_max_iters)
    stack = [vals[I].copy()] if keep_stack else None
    hist = []
    sgn = 1.0 if direction == "decreasing" else -1.0
    status = "max_iters"
    msg = ""
    k = 0
    while True:
        R = op.residual(vals, f, g, cache)
        res = float(np.max(np.abs(R)))
        hist.append(res)
        if res <= tol:
            status = "converged"
            break
        if k >= config.max_iters:
            break
        term = _shifted_term(f, config.sigma, x, vals[I])
        rep = relax_to_steady(ScalarField(mask, vals, g), coeffs, term, g, inner, op)
        new = rep.field.values
        step = sgn * (vals[I] - new[I])
        if np.min(step) < -10 * tol:
            i = int(np.argmin(step))
            raise NonMonotoneStep(
                f"sweep {k + 1}: iterate moved the wrong way by {-step[i]:.3e} at node "
                f"{tuple(x[i])}; increase sigma"
            )
        vals = np.array(new)
        k += 1
        if keep_stack:
            stack.append(vals[I].copy())
        if np.max(np.abs(step)) <= 0.01 * tol and rep.converged is False:
            msg = "inner solve stalled"
            break
    return SolveReport(
        k, hist, status == "converged", ScalarField(mask, vals, g), status, msg, stack
    )
