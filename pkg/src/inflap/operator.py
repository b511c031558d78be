"""Wide-stencil discretization of ``L u = Δ^γ_∞ u + q·∇u |∇u|^{2-γ}``.

At an interior node ``x`` with value ``u`` and stencil rays ending at values
``v_j`` a distance ``ρ_j`` away, let ``s_j = (v_j - u) / ρ_j``.  With
``s+ = max s_j`` (arm ``ρ+``) and ``s- = min s_j`` (arm ``ρ-``)

    G = (s+ - s-) / 2                 gradient surrogate
    S = 2 (s+ + s-) / (ρ+ + ρ-)       second difference along the gradient

so that for equal arms ``S = (u_max + u_min - 2u) / ρ²`` and
``G = (u_max - u_min) / (2ρ)``.  The discrete operator is

    L_h u = G^{2-γ} (S + Σ_k q_k D_k u),

where ``D_k`` is the one-sided axis difference chosen by the sign of
``q_k``.  When ``G`` is below ``eps_flat = 1e-12 (1 + osc u)`` the value is
zero for ``γ < 2`` and ``S`` for ``γ = 2``.  This is ``form="product"``.

The default ``form="flux"`` replaces the diffusion part by

    2 (Φ(s+) + Φ(s-)) / (ρ+ + ρ-),    Φ(t) = |t|^{2-γ} t / (3-γ),

which has the same limit (``Φ(a + e) - Φ(a - e) ≈ 2|a|^{2-γ} e``) but is
nondecreasing in every neighbour value.  The product form is not: at a
node where ``S < 0`` raising the largest neighbour raises ``G`` and lowers
the value, and at a symmetric kink ``G = 0`` annihilates any curvature.
Both forms coincide at ``γ = 2``; the drift part is the same in both.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .core import DomainMask, RaySet, Sampler, ScalarField

FLAT_REL = 1e-12
BLEND = 0.1
FORMS = ("flux", "product")


def flux_power(t, p):
    """``Φ(t) = |t|^p t / (p + 1)``, so that ``Φ'(t) = |t|^p``."""
    return np.abs(t) ** p * t / (p + 1.0)


class DomainError(ValueError):
    """A pointwise term was evaluated outside its domain."""


@dataclass(frozen=True)
class CoefficientSet:
    """Operator data: ``gamma``, drift ``q``, potential ``c`` and forcing ``h_rhs``.

    Missing samplers mean zero.
    """

    gamma: float
    q: Optional[Sampler] = None
    c: Optional[Sampler] = None
    h_rhs: Optional[Sampler] = None
    form: str = "flux"

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 2.0):
            raise ValueError(f"gamma must lie in [0, 2], got {self.gamma}")
        if self.form not in FORMS:
            raise ValueError(f"unknown operator form {self.form!r}")
        if self.q is not None and not self.q.vector:
            raise ValueError("drift sampler must be vector valued")

    def replace(self, **kw) -> "CoefficientSet":
        d = dict(gamma=self.gamma, q=self.q, c=self.c, h_rhs=self.h_rhs, form=self.form)
        d.update(kw)
        return CoefficientSet(**d)


@dataclass(frozen=True)
class ZeroOrderTerm:
    """Pointwise term ``z(x, s)`` added to ``L u``.

    ``value(x, s)`` and ``deriv(x, s)`` act on interior coordinates ``x`` of
    shape ``(n, dim)`` and node values ``s`` of shape ``(n,)``.
    """

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    deriv: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    note: str = ""

    def evaluate(self, x, s):
        return self.value(x, s)

    def derivative(self, x, s):
        if self.deriv is None:
            return np.zeros_like(s)
        return self.deriv(x, s)


def signed_power(s, p):
    """Odd extension ``sign(s)|s|^p`` (strictly increasing for ``p > 0``)."""
    return np.sign(s) * np.abs(s) ** p


def potential_term(weight: np.ndarray, p: float, signed: bool = True) -> ZeroOrderTerm:
    """``weight(x) * F(s)`` with ``F(s) = s^p``.

    With ``signed`` the odd extension is used; otherwise negative arguments
    are outside the domain for fractional ``p``.
    """
    w = np.asarray(weight, dtype=float)

    if signed:
        return ZeroOrderTerm(
            lambda x, s: w * signed_power(s, p),
            lambda x, s: w * p * np.abs(s) ** (p - 1),
            note=f"weight * sign(s)|s|^{p}",
        )

    def val(x, s):
        with np.errstate(invalid="ignore"):
            return w * np.power(s, p)

    return ZeroOrderTerm(val, lambda x, s: w * p * np.abs(s) ** (p - 1), note=f"weight * s^{p}")


@dataclass
class Evaluation:
    """Node-wise pieces of one operator evaluation on the interior."""

    value: np.ndarray
    G: np.ndarray
    S: np.ndarray
    drift: np.ndarray
    j_plus: np.ndarray
    j_minus: np.ndarray
    flat: np.ndarray
    eps_flat: float
    slopes: np.ndarray = None
    rho_plus: np.ndarray = None
    rho_minus: np.ndarray = None
    w_plus: np.ndarray = None
    w_minus: np.ndarray = None


class DiscreteOperator:
    """Precomputed discrete ``L_h`` for one mask and one coefficient set.

    With more than two stencil directions the arm lengths entering ``S`` are
    averaged over near-extremal directions (hat weights of width
    ``blend * G`` in slope space).  Without this, ``S`` jumps when the extremal
    direction switches between arms of different length and the discrete
    equation can lose its root.  The weights are scale invariant, so the
    ``(3-γ)``-homogeneity is exact.  The default width is ``BLEND`` for the
    axis/diagonal stencil and ``BLEND / r²`` for the ring of radius ``r``, so
    that the blended set shrinks with the angular resolution.
    """

    def __init__(self, mask: DomainMask, coeffs: CoefficientSet, blend: Optional[float] = None):
        self.mask = mask
        self.coeffs = coeffs
        self.gamma = coeffs.gamma
        self.form = coeffs.form
        if blend is None:
            g = mask.grid
            blend = BLEND / g.stencil_radius**2 if g.directions == "ring" else BLEND
        self.blend = blend
        self.x = mask.coords("interior")
        n, d = self.x.shape
        self.q = coeffs.q(self.x) if coeffs.q is not None else np.zeros((n, d))
        self.c = coeffs.c(self.x) if coeffs.c is not None else np.zeros(n)
        self.h_rhs = coeffs.h_rhs(self.x) if coeffs.h_rhs is not None else np.zeros(n)
        for name, arr in (("q", self.q), ("c", self.c), ("h_rhs", self.h_rhs)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"coefficient {name} is not finite on the mask")
        self.has_drift = bool(np.any(self.q != 0))
        # axis rays are ordered +e_1..+e_d, -e_1..-e_d
        self._drift_col = np.where(self.q >= 0, np.arange(d), d + np.arange(d))
        self._drift_sign = np.where(self.q >= 0, 1.0, -1.0)
        node_of = np.full(mask.grid.n_nodes, -1, dtype=np.int64)
        node_of[mask.interior] = np.arange(n)
        self._node_of = node_of

    @property
    def n(self) -> int:
        return len(self.x)

    # -- extended value vectors ------------------------------------------

    def _ext(self, values, bc, rays: RaySet):
        if rays.n_crossings == 0:
            return values
        if bc is not None:
            cross = bc(rays.crossing_points)
        else:
            w = rays.crossing_weight
            cross = (1 - w) * values[rays.crossing_lo] + w * values[rays.crossing_hi]
        return np.concatenate([values, cross])

    def crossing_cache(self, bc: Optional[Sampler]):
        """Boundary-sampler values at every ray crossing (fixed during a solve)."""
        if bc is None:
            return None
        m = self.mask
        return (bc(m.rays.crossing_points) if m.rays.n_crossings else np.empty(0),
                bc(m.axis_rays.crossing_points) if m.axis_rays.n_crossings else np.empty(0))

    def _ext_cached(self, values, bc, cache, rays, which):
        if cache is not None:
            extra = cache[which]
            return np.concatenate([values, extra]) if len(extra) else values
        return self._ext(values, bc, rays)

    # -- evaluation -------------------------------------------------------

    def evaluate(self, values: np.ndarray, bc: Optional[Sampler] = None, cache=None) -> Evaluation:
        m = self.mask
        values = np.asarray(values, dtype=float)
        u = values[m.interior]
        osc = float(np.ptp(values[m.active]))
        eps_flat = FLAT_REL * (1.0 + osc)

        ext = self._ext_cached(values, bc, cache, m.rays, 0)
        rho = m.rays.length
        slopes = (ext[m.rays.target] - u[:, None]) / rho
        rows = np.arange(len(u))
        jp = np.argmax(slopes, axis=1)
        jm = np.argmin(slopes, axis=1)
        # all slopes equal: pair the maximizer with its antipode (directions are
        # stored symmetrically, so the antipode of j is nd - 1 - j)
        jm = np.where(jm == jp, slopes.shape[1] - 1 - jp, jm)
        sp_, sm_ = slopes[rows, jp], slopes[rows, jm]
        G = 0.5 * (sp_ - sm_)
        if slopes.shape[1] > 2 and self.blend > 0:
            rp, rm, wp, wm = self._blended_arms(slopes, rho, sp_, sm_, G)
        else:
            rp, rm, wp, wm = rho[rows, jp], rho[rows, jm], None, None
        S = 2.0 * (sp_ + sm_) / (rp + rm)

        if self.has_drift:
            ext_a = self._ext_cached(values, bc, cache, m.axis_rays, 1)
            rho_a = m.axis_rays.length
            diff = (ext_a[m.axis_rays.target] - u[:, None]) / rho_a
            # forward difference for q_k >= 0, backward (= -diff on -e_k) otherwise
            d_k = np.take_along_axis(diff, self._drift_col, axis=1) * self._drift_sign
            drift = np.einsum("ij,ij->i", self.q, d_k)
        else:
            drift = np.zeros_like(u)

        flat = G < eps_flat
        p = 2.0 - self.gamma
        with np.errstate(invalid="ignore"):
            a = np.where(flat, 0.0, G) ** p if p > 0 else np.ones_like(G)
        if self.form == "flux" and p > 0:
            diff = 2.0 * (flux_power(sp_, p) + flux_power(sm_, p)) / (rp + rm)
            value = diff + a * drift
        else:
            value = a * (S + drift)
            if self.gamma == 2.0:
                value = np.where(flat, S, value)
            else:
                value = np.where(flat, 0.0, value)
        return Evaluation(value, G, S, drift, jp, jm, flat, eps_flat, slopes, rp, rm, wp, wm)

    def _blended_arms(self, slopes, rho, sp_, sm_, G):
        width = self.blend * G
        tiny = width <= 0
        width = np.where(tiny, 1.0, width)[:, None]
        wp = np.clip(1.0 - (sp_[:, None] - slopes) / width, 0.0, 1.0)
        wm = np.clip(1.0 - (slopes - sm_[:, None]) / width, 0.0, 1.0)
        wp[tiny] = slopes[tiny] == sp_[tiny, None]
        wm[tiny] = slopes[tiny] == sm_[tiny, None]
        rp = (wp * rho).sum(axis=1) / wp.sum(axis=1)
        rm = (wm * rho).sum(axis=1) / wm.sum(axis=1)
        return rp, rm, wp, wm

    def apply(self, field: ScalarField) -> np.ndarray:
        """``L_h`` at interior nodes."""
        return self.evaluate(field.values, field.bc).value

    def zero_order(self, term, u: np.ndarray) -> np.ndarray:
        """Evaluate a pointwise term and name the first node where it is undefined."""
        if term is None:
            return np.zeros_like(u)
        out = np.asarray(term.evaluate(self.x, u), dtype=float)
        bad = ~np.isfinite(out)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(
                f"nonlinearity undefined at node {tuple(self.x[i])} for value {u[i]!r}"
            )
        return out

    def residual(self, values, term=None, bc=None, cache=None, ev=None):
        """``L_h u + z(x, u) - h_rhs`` on the interior."""
        if ev is None:
            ev = self.evaluate(values, bc, cache)
        u = np.asarray(values)[self.mask.interior]
        return ev.value + self.zero_order(term, u) - self.h_rhs

    # -- linearization ----------------------------------------------------

    def _extremal(self, ev: Evaluation):
        n, nd = ev.slopes.shape
        rows = np.arange(n)
        ep = np.zeros((n, nd))
        em = np.zeros((n, nd))
        ep[rows, ev.j_plus] = 1.0
        em[rows, ev.j_minus] = 1.0
        return ep, em

    def _dD_dslopes(self, ev: Evaluation) -> np.ndarray:
        """Derivative of the blended arm sum ``ρ+ + ρ-`` with respect to every slope."""
        n, nd = ev.slopes.shape
        rows = np.arange(n)
        ep, em = self._extremal(ev)
        if ev.w_plus is None:
            return np.zeros((n, nd))
        rho = self.mask.rays.length
        s = ev.slopes
        W = self.blend * ev.G
        ok = ~ev.flat
        Wc = np.where(ok, W, 1.0)[:, None]
        dW = self.blend * 0.5 * (ep - em)
        sp_ = s[rows, ev.j_plus][:, None]
        sm_ = s[rows, ev.j_minus][:, None]
        d_rho = np.zeros((n, nd))
        for w, r_bar, sign, e_ext, gap in (
            (ev.w_plus, ev.rho_plus, 1.0, ep, sp_ - s),
            (ev.w_minus, ev.rho_minus, -1.0, em, s - sm_),
        ):
            act = ((w > 0) & (w < 1)).astype(float)
            coef = act * (rho - r_bar[:, None]) / w.sum(axis=1)[:, None]
            # plus: w_j = 1 - (s+ - s_j)/W ; minus: w_j = 1 - (s_j - s-)/W
            alpha = (coef / Wc).sum(axis=1)[:, None]
            beta = (coef * gap / Wc**2).sum(axis=1)[:, None]
            d_rho += sign * (coef / Wc) - sign * alpha * e_ext + beta * dW
        d_rho[~ok] = 0.0
        return d_rho

    def _dS_dslopes(self, ev: Evaluation) -> np.ndarray:
        """Exact derivative of ``S`` with respect to every slope (a.e.)."""
        ep, em = self._extremal(ev)
        D = (ev.rho_plus + ev.rho_minus)[:, None]
        return 2.0 * (ep + em) / D - (ev.S[:, None] / D) * self._dD_dslopes(ev)

    def _dflux_dslopes(self, ev: Evaluation, p: float) -> np.ndarray:
        """Exact derivative of the flux-form diffusion part (a.e.)."""
        ep, em = self._extremal(ev)
        rows = np.arange(len(ev.G))
        sp_, sm_ = ev.slopes[rows, ev.j_plus], ev.slopes[rows, ev.j_minus]
        D = ev.rho_plus + ev.rho_minus
        diff = 2.0 * (flux_power(sp_, p) + flux_power(sm_, p)) / D
        out = 2.0 * (np.abs(sp_)[:, None] ** p * ep + np.abs(sm_)[:, None] ** p * em) / D[:, None]
        return out - (diff / D)[:, None] * self._dD_dslopes(ev)

    def jacobian(self, ev: Evaluation, g_reg: float = 1e-6, exact: bool = False) -> sp.csr_matrix:
        """Jacobian of ``L_h`` with respect to interior values.

        The default freezes the multiplier ``max(G, g_reg)^{2-γ}``, the
        extremal arms and the blended arm lengths; the result has a
        nonpositive diagonal and nonnegative off-diagonal entries.  With
        ``exact`` the derivatives of the multiplier and of the blended arm
        lengths are included (a Newton matrix, not an M-matrix in general).
        """
        m = self.mask
        n = self.n
        rows = np.arange(n)
        p = 2.0 - self.gamma
        Gr = np.maximum(ev.G, g_reg)
        a = Gr**p if p > 0 else np.ones(n)
        rho = m.rays.length
        nd = rho.shape[1]

        flux = self.form == "flux" and p > 0
        if exact:
            if flux:
                gs = self._dflux_dslopes(ev, p)
                mult = ev.drift
            else:
                gs = a[:, None] * self._dS_dslopes(ev)
                mult = ev.S + ev.drift
            if p > 0:
                ep, em = self._extremal(ev)
                da = p * Gr ** (p - 1) * (ev.G >= g_reg)
                gs += (da * mult)[:, None] * 0.5 * (ep - em)
            gv = gs / rho
        else:
            D = ev.rho_plus + ev.rho_minus
            if flux:
                sp_, sm_ = ev.slopes[rows, ev.j_plus], ev.slopes[rows, ev.j_minus]
                kp = np.maximum(np.abs(sp_), g_reg) ** p
                km = np.maximum(np.abs(sm_), g_reg) ** p
            else:
                kp = km = a
            gv = np.zeros((n, nd))
            gv[rows, ev.j_plus] += 2.0 * kp / D / rho[rows, ev.j_plus]
            gv[rows, ev.j_minus] += 2.0 * km / D / rho[rows, ev.j_minus]

        tgt = m.rays.target
        col = np.where(tgt < m.grid.n_nodes, self._node_of[np.minimum(tgt, m.grid.n_nodes - 1)], -1)
        diag = -gv.sum(axis=1)
        R = [rows]
        C = [rows]
        ok = col >= 0
        R.append(np.broadcast_to(rows[:, None], col.shape)[ok])
        C.append(col[ok])
        extra = [gv[ok]]
        if self.has_drift:
            rho_a = m.axis_rays.length
            tgt_a = m.axis_rays.target
            for k in range(self.x.shape[1]):
                ck = self._drift_col[:, k]
                qa = a * np.abs(self.q[:, k]) / rho_a[rows, ck]
                diag = diag - qa
                t = tgt_a[rows, ck]
                cc = np.where(t < m.grid.n_nodes, self._node_of[np.minimum(t, m.grid.n_nodes - 1)], -1)
                good = cc >= 0
                R.append(rows[good])
                C.append(cc[good])
                extra.append(qa[good])
        v = np.concatenate([diag] + extra)
        return sp.csr_matrix((v, (np.concatenate(R), np.concatenate(C))), shape=(n, n))

# --------------------------------------------------------------------------
# functional entry points


def directional_extremes(field: ScalarField, node: int):
    """``(u_max, u_min, G)`` at the interior node with flat index ``node``."""
    m = field.mask
    pos = np.searchsorted(m.interior, node)
    if pos >= len(m.interior) or m.interior[pos] != node:
        raise ValueError(f"node {node} is not interior")
    ext = np.concatenate([field.values, field.crossing_values(m.rays)])
    v = ext[m.rays.target[pos]]
    rho = m.rays.length[pos]
    s = (v - field.values[node]) / rho
    jp, jm = int(np.argmax(s)), int(np.argmin(s))
    return float(v[jp]), float(v[jm]), float(0.5 * (s[jp] - s[jm]))


def apply_L(field: ScalarField, coeffs: CoefficientSet) -> ScalarField:
    """Discrete ``L_h u`` as a field (boundary entries are zero)."""
    op = DiscreteOperator(field.mask, coeffs)
    out = np.full(field.grid.n_nodes, np.nan)
    out[field.mask.boundary] = 0.0
    out[field.mask.interior] = op.apply(field)
    return ScalarField(field.mask, out)


def residual_semilinear(field: ScalarField, coeffs: CoefficientSet, f=None) -> ScalarField:
    """``L_h u + f(x, u) - h_rhs`` as a field (boundary entries are zero).

    ``f`` is any object with ``evaluate(x, s)`` (a :class:`ZeroOrderTerm` or a
    KPP nonlinearity); ``None`` means no pointwise term.
    """
    op = DiscreteOperator(field.mask, coeffs)
    out = np.full(field.grid.n_nodes, np.nan)
    out[field.mask.boundary] = 0.0
    out[field.mask.interior] = op.residual(field.values, f, field.bc)
    return ScalarField(field.mask, out)
