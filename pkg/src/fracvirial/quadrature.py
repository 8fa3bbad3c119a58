"""Quadrature rules for integrals over m in (0, inf).

All resolvent-type integrals in this package have the form

    int_0^inf m^p f(m) dm

where f decays like a power of m at both ends. A rule is stored as log-nodes
``log_m`` and log-weights ``log_w`` with respect to the measure ``dm``, so the
sum ``sum(exp(log_w + p*log_m) * f(m))`` never forms huge intermediate powers.

Two schemes are provided:

``exp``
    m = e^t and composite Gauss-Legendre on t-panels. Uniform panels cover the
    spectral range [log x_min, log x_max]; geometrically growing panels cover
    the tails until the analytic tail bound drops below ``abs_tol``.
``tangent``
    Split tangent substitution, m = c tan(theta)^(1/s) below c and
    m = c tan(theta)^(1/(1-s)) above c. The substitution removes the
    endpoint singularities of the Balakrishnan integrand. Slower to converge
    for wide spectral ranges; kept as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import log_expit

from .errors import DomainError, QuadratureError

SCHEMES = ("exp", "tangent")

# exp(t) overflows past ~709; leave headroom for products with m^s.
_T_MAX = 600.0


@dataclass(frozen=True)
class MQuadrature:
    """Settings for the m-integral.

    ``panels`` is the minimum number of panels on the core interval (exp) or
    on each half interval (tangent) at refinement level 0. Each refinement
    level halves every panel. Refinement stops when two successive levels agree
    to ``rel_tol`` on the scalar test integrands.
    """

    scheme: str = "exp"
    panels: int = 8
    nodes_per_panel: int = 8
    abs_tol: float = 1e-14
    rel_tol: float = 1e-10
    max_refinements: int = 6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown quadrature scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.panels < 1 or self.nodes_per_panel < 2:
            raise DomainError("panels must be >= 1 and nodes_per_panel >= 2")
        if not (0 < self.abs_tol < 1 and 0 < self.rel_tol < 1):
            raise DomainError("tolerances must lie in (0, 1)")

    def rule(self, x_min: float, x_max: float, s: float) -> "MRule":
        """Validated rule for spectral values in [x_min, x_max]."""
        return _validated_rule(self, float(x_min), float(x_max), float(s))


@dataclass(frozen=True)
class MRule:
    log_m: np.ndarray
    log_w: np.ndarray
    level: int
    residual: float
    panel_edges: np.ndarray = field(repr=False)

    @property
    def m(self) -> np.ndarray:
        return np.exp(self.log_m)

    def __len__(self) -> int:
        return self.log_m.size

    def weights(self, power: float) -> np.ndarray:
        """Weights for int m^power f(m) dm, i.e. w_j m_j^power."""
        return np.exp(self.log_weights(power))

    def log_weights(self, power: float) -> np.ndarray:
        return self.log_w + power * self.log_m


# --- scalar test integrands -------------------------------------------------

def _balakrishnan_normalized(rule: MRule, x: np.ndarray, s: float) -> np.ndarray:
    """(sin(pi s)/pi) int m^(s-1) x/(x+m) dm / x^s, should equal 1."""
    lx = np.log(x)[:, None]
    terms = rule.log_w[None, :] + (s - 1.0) * rule.log_m[None, :] + log_expit(lx - rule.log_m[None, :])
    return math.sin(math.pi * s) / math.pi * np.exp(terms - s * lx).sum(axis=1)


def _plancherel_normalized(rule: MRule, x: np.ndarray, s: float) -> np.ndarray:
    """(sin(pi s)/pi) int m^s/(x+m)^2 dm / (s x^(s-1)), should equal 1."""
    lx = np.log(x)[:, None]
    lm = rule.log_m[None, :]
    # m^s/(x+m)^2 = m^(s-2) * expit(lm - lx)^2
    terms = rule.log_w[None, :] + (s - 2.0) * lm + 2.0 * log_expit(lm - lx)
    return math.sin(math.pi * s) / math.pi * np.exp(terms - (s - 1.0) * lx).sum(axis=1) / s


def _test_points(x_min: float, x_max: float) -> np.ndarray:
    if x_max <= x_min * (1 + 1e-12):
        return np.array([x_min])
    return np.geomspace(x_min, x_max, 9)


# --- rule construction ------------------------------------------------------

def _gauss_on_edges(edges: np.ndarray, n: int):
    z, w = leggauss(n)
    a = edges[:-1, None]
    b = edges[1:, None]
    t = 0.5 * (b - a) * z[None, :] + 0.5 * (a + b)
    wt = 0.5 * (b - a) * w[None, :]
    return t, wt


def _exp_edges(q: MQuadrature, x_min: float, x_max: float, s: float, level: int) -> np.ndarray:
    pad = 3.0
    lo, hi = math.log(x_min) - pad, math.log(x_max) + pad
    core_w = min(2.0, (hi - lo) / q.panels)
    n_core = max(q.panels, int(math.ceil((hi - lo) / core_w)))
    core = np.linspace(lo, hi, n_core + 1)
    # Tail bounds: left integrand <= e^{s t}, right integrand <= x e^{(s-1) t}
    # (and the m^s/(x+m)^2 weight decays faster on both sides).
    t_lo = lo - math.log(1.0 / (s * q.abs_tol)) / s
    t_hi = hi + math.log(1.0 / ((1.0 - s) * q.abs_tol)) / (1.0 - s)
    if t_hi > _T_MAX or t_lo < -_T_MAX:
        raise QuadratureError(
            f"tail truncation for s={s} needs t in [{t_lo:.0f}, {t_hi:.0f}], outside the representable "
            f"range +/-{_T_MAX:.0f}; loosen abs_tol",
            residual=float("inf"),
        )
    left, e, w = [], lo, core_w
    while e > t_lo:
        e -= w
        left.append(e)
        w *= 2.0
    right, e, w = [], hi, core_w
    while e < t_hi:
        e += w
        right.append(e)
        w *= 2.0
    edges = np.concatenate([np.sort(left), core, right])
    for _ in range(level):
        mid = 0.5 * (edges[:-1] + edges[1:])
        edges = np.sort(np.concatenate([edges, mid]))
    return edges


def _exp_rule(q: MQuadrature, x_min: float, x_max: float, s: float, level: int) -> MRule:
    edges = _exp_edges(q, x_min, x_max, s, level)
    t, wt = _gauss_on_edges(edges, q.nodes_per_panel)
    # dm = m dt
    return MRule(log_m=t.ravel(), log_w=np.log(wt.ravel()) + t.ravel(), level=level,
                 residual=float("nan"), panel_edges=edges)


def _tangent_rule(q: MQuadrature, x_min: float, x_max: float, s: float, level: int) -> MRule:
    c = math.sqrt(x_min * x_max)
    n = q.panels * 2 ** level
    quarter = math.pi / 4
    lower = np.linspace(0.0, quarter, n + 1)
    upper = np.linspace(quarter, math.pi / 2, n + 1)
    out_m, out_w = [], []
    for edges, p in ((lower, 1.0 / s), (upper, 1.0 / (1.0 - s))):
        th, wt = _gauss_on_edges(edges, q.nodes_per_panel)
        th, wt = th.ravel(), wt.ravel()
        ltan = np.log(np.tan(th))
        log_m = math.log(c) + p * ltan
        # dm = c p tan^(p-1) sec^2 dtheta
        log_dm = math.log(c * p) + (p - 1.0) * ltan - 2.0 * np.log(np.cos(th))
        out_m.append(log_m)
        out_w.append(np.log(wt) + log_dm)
    log_m = np.concatenate(out_m)
    keep = np.abs(log_m) < _T_MAX
    edges = np.concatenate([lower, upper[1:]])
    return MRule(log_m=log_m[keep], log_w=np.concatenate(out_w)[keep], level=level,
                 residual=float("nan"), panel_edges=edges)


def _build(q: MQuadrature, x_min: float, x_max: float, s: float, level: int) -> MRule:
    if q.scheme == "exp":
        return _exp_rule(q, x_min, x_max, s, level)
    return _tangent_rule(q, x_min, x_max, s, level)


@lru_cache(maxsize=256)
def _validated_rule(q: MQuadrature, x_min: float, x_max: float, s: float) -> MRule:
    if not (0.0 < s < 1.0):
        raise DomainError(f"quadrature needs s in (0, 1), got {s}")
    if not (x_min > 0 and x_max >= x_min and math.isfinite(x_max)):
        raise DomainError(f"bad spectral range [{x_min}, {x_max}]")
    xs = _test_points(x_min, x_max)
    prev = _build(q, x_min, x_max, s, 0)
    prev_vals = np.concatenate([_balakrishnan_normalized(prev, xs, s), _plancherel_normalized(prev, xs, s)])
    residual = float("inf")
    for level in range(1, q.max_refinements + 1):
        cur = _build(q, x_min, x_max, s, level)
        vals = np.concatenate([_balakrishnan_normalized(cur, xs, s), _plancherel_normalized(cur, xs, s)])
        residual = float(np.max(np.abs(vals - prev_vals)))
        if residual < q.rel_tol:
            return MRule(cur.log_m, cur.log_w, level, residual, cur.panel_edges)
        prev, prev_vals = cur, vals
    # Per-test-point residuals stand in for per-panel residuals.
    raise QuadratureError(
        f"m-quadrature ({q.scheme}) did not converge to rel_tol={q.rel_tol:g} after "
        f"{q.max_refinements} refinements (residual {residual:.3e})",
        residual=residual,
        panel_residuals=np.abs(vals - prev_vals),
    )
