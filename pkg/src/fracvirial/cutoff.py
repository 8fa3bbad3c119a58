"""Radial virial cutoff.

The base profile g(r) equals r on [0, 1], r - (r-1)^3 on (1, r0] with
r0 = 1 + 1/sqrt(3), a C^2 bridge on (r0, 10) and zero beyond. The bridge is
two quintic Hermite pieces joined at r = 3 with (g, g', g'') = (0.7, -0.15, 0).
A single quintic matching (g, g', g'') at both ends overshoots: the cubic
arrives at r0 with g'' = -2 sqrt(3), too sharp a turn for one polynomial
spanning (r0, 10), and its derivative turns positive near r = 7.
phi(r) = int_0^r g, so phi'' = g' <= 1 and phi is |x|^2/2 near the origin
and constant far out. The rescaled weight is phi_R(r) = R^2 phi(r/R).

Every polynomial is stored in the local variable t = r - a of its piece
[a, b). Besides g itself each piece keeps exact polynomials for r - g and
1 - g' so that psi_1 = 1 - phi'' and psi_2 = N - Delta phi are evaluated
without cancellation where they vanish to high order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial as P

from .errors import ConstructionError, DomainError, SupportError
from .fracops import Grid

R0 = 1.0 + 1.0 / math.sqrt(3.0)
R_OUTER = 10.0
# Interior knot of the bridge and the (g, g', g'') values there.
BRIDGE_KNOT = (3.0, 0.7, -0.15, 0.0)
VERIFY_POINTS = 10_000


@dataclass(frozen=True)
class Piece:
    a: float
    b: float
    g: P
    r_minus_g: P
    one_minus_dg: P
    phi: P

    def as_json(self) -> dict:
        return {
            "interval": [self.a, self.b],
            "variable": "r - a",
            "g": self.g.coef.tolist(),
            "phi": self.phi.coef.tolist(),
        }


def _shift(poly: P, a: float) -> P:
    """Rewrite p(r) as a polynomial in t = r - a."""
    return poly(P([a, 1.0]))


def _hermite_quintic(h: float, left, right) -> P:
    """Quintic q(t) on [0, h] with (q, q', q'') = left at t=0 and = right at t=h."""
    rows, rhs = [], []
    for t, vals in ((0.0, left), (h, right)):
        for d, v in enumerate(vals):
            row = [0.0] * 6
            for k in range(d, 6):
                row[k] = math.factorial(k) / math.factorial(k - d) * t ** (k - d)
            rows.append(row)
            rhs.append(v)
    return P(np.linalg.solve(np.array(rows), np.array(rhs)))


@dataclass(frozen=True, eq=False)
class CutoffProfile:
    """Piecewise polynomial radial profile g and its antiderivative phi."""

    pieces: tuple
    r0: float = R0
    r_outer: float = R_OUTER
    checks: dict = field(default_factory=dict, compare=False)

    @property
    def bridge(self) -> tuple:
        """Polynomials of the two pieces on (r0, 10)."""
        return self.pieces[2].g, self.pieces[3].g

    @cached_property
    def edges(self) -> np.ndarray:
        return np.array([p.a for p in self.pieces] + [self.pieces[-1].b])

    def _locate(self, r):
        r = np.asarray(r, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, r, side="right") - 1, 0, len(self.pieces) - 1)
        return r, idx

    def _eval(self, r, pick, deriv=0):
        r, idx = self._locate(r)
        out = np.zeros(r.shape, dtype=float)
        for i, pc in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                poly = pick(pc)
                if deriv:
                    poly = poly.deriv(deriv)
                out[mask] = poly(r[mask] - pc.a)
        return out

    def g(self, r, deriv: int = 0):
        """g^(deriv)(r), deriv in 0..3."""
        return self._eval(r, lambda pc: pc.g, deriv)

    def phi(self, r, deriv: int = 0):
        """phi^(deriv)(r); deriv >= 1 delegates to g."""
        if deriv == 0:
            return self._eval(r, lambda pc: pc.phi)
        return self.g(r, deriv - 1)

    def psi1(self, r):
        """1 - phi''(r), evaluated from exact difference polynomials."""
        return self._eval(r, lambda pc: pc.one_minus_dg)

    def one_minus_g_over_r(self, r):
        """1 - phi'(r)/r, with the value 0 on the quadratic core."""
        r = np.asarray(r, dtype=float)
        num = self._eval(r, lambda pc: pc.r_minus_g)
        out = np.zeros(r.shape)
        nz = r > 0
        out[nz] = num[nz] / r[nz]
        return out

    def psi2(self, r, N: int):
        """N - Delta phi = (1 - phi'') + (N-1)(1 - phi'/r)."""
        return self.psi1(r) + (N - 1) * self.one_minus_g_over_r(r)

    def to_json(self) -> str:
        return json.dumps({"r0": self.r0, "r_outer": self.r_outer,
                           "pieces": [p.as_json() for p in self.pieces]}, indent=2)


def build_profile() -> CutoffProfile:
    """Construct the profile and verify smoothness and monotonicity.

    Raises ConstructionError if the bridge is not strictly decreasing on the
    open interval (r0, 10) or if any junction fails C^2 matching.
    """
    r = P([0.0, 1.0])
    g_core = r
    g_cubic = r - (r - 1.0) ** 3

    g_r0 = g_cubic(R0)
    dg_r0 = g_cubic.deriv()(R0)
    d2g_r0 = g_cubic.deriv(2)(R0)
    r1, *knot = BRIDGE_KNOT
    bridge_a = _hermite_quintic(r1 - R0, (g_r0, dg_r0, d2g_r0), knot)
    bridge_b = _hermite_quintic(R_OUTER - r1, knot, (0.0, 0.0, 0.0))

    pieces = []
    phi_left = 0.0
    spec = [
        (0.0, 1.0, _shift(g_core, 0.0)),
        (1.0, R0, _shift(g_cubic, 1.0)),
        (R0, r1, bridge_a),
        (r1, R_OUTER, bridge_b),
        (R_OUTER, math.inf, P([0.0])),
    ]
    for a, b, g_loc in spec:
        ident = P([a, 1.0])  # r in the local variable
        r_minus_g = ident - g_loc
        one_minus_dg = P([1.0]) - g_loc.deriv()
        if a == 1.0:
            # exact forms on the cubic piece: r - g = t^3, 1 - g' = 3 t^2
            r_minus_g = P([0.0, 0.0, 0.0, 1.0])
            one_minus_dg = P([0.0, 0.0, 3.0])
        phi_loc = g_loc.integ(lbnd=0.0, k=phi_left)
        if math.isfinite(b):
            phi_left = float(phi_loc(b - a))
        pieces.append(Piece(a, b, g_loc.trim(), r_minus_g, one_minus_dg, phi_loc))

    prof = CutoffProfile(tuple(pieces))
    checks = _verify_profile(prof)
    object.__setattr__(prof, "checks", checks)
    return prof


def _verify_profile(prof: CutoffProfile) -> dict:
    jumps = {}
    for left, right in zip(prof.pieces[:-1], prof.pieces[1:]):
        h = left.b - left.a
        jumps[right.a] = max(abs(left.g.deriv(d)(h) - right.g.deriv(d)(0.0)) for d in range(3))
    worst = max(jumps.values())
    if worst > 1e-12:
        raise ConstructionError(f"profile is not C^2 at the junctions: jumps {jumps}")

    t = np.unique(np.concatenate([np.linspace(prof.r0, prof.r_outer, VERIFY_POINTS + 2)[1:-1],
                                  [BRIDGE_KNOT[0]]]))
    dg = prof.g(t, 1)
    if np.any(dg >= 0):
        bad = t[np.argmax(dg)]
        raise ConstructionError(f"bridge is not strictly decreasing: g'({bad:.6f}) = {dg.max():.3e} >= 0")
    return {"c2_jump": worst, "bridge_max_dg": float(dg.max())}


@dataclass(frozen=True, eq=False)
class RescaledCutoff:
    """phi_R(r) = R^2 phi(r/R)."""

    base: CutoffProfile
    R: float

    def __post_init__(self):
        if not (self.R > 0 and math.isfinite(self.R)):
            raise DomainError(f"R must be positive, got {self.R}")

    @property
    def support_radius(self) -> float:
        return self.base.r_outer * self.R

    def phi(self, r, deriv: int = 0):
        """Radial derivatives d^k/dr^k of phi_R."""
        r = np.asarray(r, dtype=float)
        return self.R ** (2 - deriv) * self.base.phi(r / self.R, deriv)

    def psi1(self, r):
        return self.base.psi1(np.asarray(r, float) / self.R)

    def psi2(self, r, N: int):
        return self.base.psi2(np.asarray(r, float) / self.R, N)

    def radial_data(self, r, N: int) -> dict:
        """phi_R', phi_R'', phi_R'/r, Delta phi_R, Delta^2 phi_R at radii r.

        On the core r <= R the exact values (r, 1, 1, N, 0) are used, which
        also resolves the removable singularity at r = 0.
        """
        r = np.asarray(r, dtype=float)
        d1, d2, d3, d4 = (self.phi(r, k) for k in (1, 2, 3, 4))
        core = r <= self.R
        safe = np.where(core, 1.0, r)
        over_r = np.where(core, 1.0, d1 / safe)
        lap = np.where(core, float(N), N - self.psi2(r, N))
        # f = Delta phi; f' and f'' for the radial Laplacian of f
        f1 = d3 + (N - 1) * (d2 / safe - d1 / safe ** 2)
        f2 = d4 + (N - 1) * (d3 / safe - 2 * d2 / safe ** 2 + 2 * d1 / safe ** 3)
        bilap = np.where(core, 0.0, f2 + (N - 1) * f1 / safe)
        return {"d1": d1, "d2": d2, "over_r": over_r, "laplacian": lap, "bilaplacian": bilap,
                "psi1": self.psi1(r), "psi2": np.where(core, 0.0, self.psi2(r, N))}


@dataclass(frozen=True, eq=False)
class CutoffFields:
    """phi_R and its derivatives sampled on a grid."""

    grad: tuple          # components of grad phi_R
    hessian: tuple       # H[k][l] arrays
    d2: np.ndarray       # phi_R''(|x|)
    laplacian: np.ndarray
    bilaplacian: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray


def eval_on_grid(c: RescaledCutoff, grid: Grid) -> CutoffFields:
    """Sample grad phi_R, its Hessian, Delta phi_R and Delta^2 phi_R on the grid.

    Raises SupportError unless the ball of radius 10R fits inside the box.
    """
    if c.support_radius > grid.half_length:
        raise SupportError(
            f"cutoff support radius 10R = {c.support_radius:g} exceeds box half-length L = {grid.half_length:g}"
        )
    N = grid.dim
    r = grid.radius
    d = c.radial_data(r, N)
    over_r = d["over_r"]
    grad = tuple(over_r * x for x in grid.coords)
    safe = np.where(r > 0, r, 1.0)
    unit = [np.where(r > 0, x / safe, 0.0) for x in grid.coords]
    diff = d["d2"] - over_r  # vanishes on the core, so r = 0 is harmless
    hess = tuple(tuple((over_r if k == l else 0.0) + unit[k] * unit[l] * diff for l in range(N))
                 for k in range(N))
    return CutoffFields(grad, hess, d["d2"], d["laplacian"], d["bilaplacian"], d["psi1"], d["psi2"])


def c_eta(eta: float, s: float, N: int) -> float:
    """c(eta) = eta / (N + 2s)."""
    return eta / (N + 2.0 * s)


@dataclass(frozen=True)
class PsiReport:
    min_margin: float
    argmin: float
    eta: float
    R: float


def verification_radii(R: float, points: int = VERIFY_POINTS, extent: float = 12.0) -> np.ndarray:
    """Uniform radii on [0, extent R] plus the junctions R, r0 R, 10R."""
    r = np.linspace(0.0, extent * R, points)
    return np.unique(np.concatenate([r, R * np.array([1.0, R0, R_OUTER])]))


def verify_psi_inequality(c: RescaledCutoff, eta: float, s: float, N: int,
                          points: int = VERIFY_POINTS) -> PsiReport:
    """Minimum of psi_1,R - c(eta) psi_2,R^(N/2s) over the verification radii."""
    if not (0 < s < 1):
        raise DomainError(f"s must lie in (0, 1), got {s}")
    if N / (2.0 * s) < 1.0:
        raise DomainError(f"need N/(2s) >= 1, got N={N}, s={s}")
    r = verification_radii(c.R, points)
    margin = _margin(c.base, r / c.R, eta, s, N)
    i = int(np.argmin(margin))
    return PsiReport(float(margin[i]), float(r[i]), float(eta), float(c.R))


def phi1_margins(c: RescaledCutoff, N: int, points: int = VERIFY_POINTS) -> dict:
    """Minima of 1 - phi_R'', 1 - phi_R'/r, N - Delta phi_R and 1 - phi'' on the verification radii."""
    r = verification_radii(c.R, points)
    d1 = c.phi(r, 1)
    d2 = c.phi(r, 2)
    pos = r > 0
    ratio = np.ones_like(r)
    ratio[pos] = d1[pos] / r[pos]
    ratio[~pos] = c.phi(np.zeros(1), 2)[0]
    m1 = 1.0 - d2
    m2 = 1.0 - ratio
    m3 = m1 + (N - 1) * m2
    base = c.base.phi(r / c.R, 2)
    return {"one_minus_d2": float(m1.min()), "one_minus_d1_over_r": float(m2.min()),
            "n_minus_laplacian": float(m3.min()), "one_minus_base_d2": float((1.0 - base).min())}


def _margin(base: CutoffProfile, r, eta, s, N):
    psi2 = base.psi2(r, N)
    if np.any(psi2 < -1e-12):
        raise ConstructionError(f"N - Delta phi is negative: min {psi2.min():.3e}")
    return base.psi1(r) - c_eta(eta, s, N) * np.maximum(psi2, 0.0) ** (N / (2.0 * s))


def find_eta(profile: CutoffProfile, s: float, N: int, rel_tol: float = 1e-3,
             safety: float = 0.1, second_R: float = 7.0) -> float:
    """Largest admissible eta (to rel_tol), reduced by the safety fraction.

    The margin is nonincreasing in eta, so bisection applies. Raises
    ConstructionError if no eta above 1e-8 is admissible. Returns math.inf
    when every eta is admissible (psi_2 vanishing identically).
    """
    unit = RescaledCutoff(profile, 1.0)

    def ok(eta):
        return verify_psi_inequality(unit, eta, s, N).min_margin >= 0.0

    lo = 1e-8
    if not ok(lo):
        raise ConstructionError(f"no admissible eta above {lo:g} for N={N}, s={s}")
    hi = 1.0
    while ok(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            return math.inf
    while (hi - lo) > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    eta = (1.0 - safety) * lo
    other = verify_psi_inequality(RescaledCutoff(profile, second_R), eta, s, N)
    if other.min_margin < 0:
        raise ConstructionError(f"eta={eta:g} admissible at R=1 but not at R={second_R}")
    return eta


def sup_norms(c: RescaledCutoff, points: int = VERIFY_POINTS) -> list:
    """sup_r |phi_R^(j)(r)| for j = 0..4 on the verification radii."""
    r = verification_radii(c.R, points)
    return [float(np.max(np.abs(c.phi(r, j)))) for j in range(5)]


def write_profile_csv(path, c: RescaledCutoff, eta: float, s: float, N: int,
                      points: int = 2001) -> None:
    r = np.linspace(0.0, 12.0 * c.R, points)
    cols = [r, c.phi(r, 1), c.phi(r, 2), c.phi(r), c.phi(r, 2), c.psi1(r), c.psi2(r, N),
            _margin(c.base, r / c.R, eta, s, N)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "g", "dg", "phi", "d2phi", "psi1", "psi2", "margin"])
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
