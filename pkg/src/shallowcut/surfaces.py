"""Distance-function surfaces and their planar bisector geometry.

Two concrete families are implemented, both xy-monotone graphs over the
plane:

* ``plane``: z = a*x + b*y + c (the paraboloid lifting of point sites).
* ``weighted_point``: z = w + dist((x, y), (px, py)), an additively
  weighted Euclidean cone.

The module also provides the brute-force vertical-line oracle
(``lowest_k_along`` / ``below_point``) used everywhere in place of a
hierarchical helper structure, projected bisector curves between two
surfaces as x-monotone arcs, and triple-point computation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .predicates import DEFAULT_TOL, Tolerance

FAMILY_PLANE = "plane"
FAMILY_CONE = "weighted_point"

DEFAULT_JITTER = 1e-7


class InvalidK(ValueError):
    """k outside [1, n] for a selection query."""


class DegenerateBisector(ValueError):
    """Bisector of two identical surfaces is undefined."""


class DegenerateTriple(ValueError):
    """Three surfaces with infinitely many common points; re-jitter."""


class OutOfDomain(ValueError):
    """Query point outside the construction bounding box."""


@dataclass(frozen=True)
class Bbox:
    x0: float
    x1: float
    y0: float
    y1: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def sample(self, rng, m: int) -> np.ndarray:
        xs = rng.uniform(self.x0, self.x1, size=m)
        ys = rng.uniform(self.y0, self.y1, size=m)
        return np.column_stack([xs, ys])


@dataclass(frozen=True)
class Surface:
    """One distance surface; coefficient meaning depends on family."""

    id: int
    family: str
    c0: float
    c1: float
    c2: float

    # plane aliases
    @property
    def a(self) -> float:
        return self.c0

    @property
    def b(self) -> float:
        return self.c1

    @property
    def c(self) -> float:
        return self.c2

    # cone aliases
    @property
    def px(self) -> float:
        return self.c0

    @property
    def py(self) -> float:
        return self.c1

    @property
    def w(self) -> float:
        return self.c2

    def eval(self, p) -> float:
        x, y = float(p[0]), float(p[1])
        if self.family == FAMILY_PLANE:
            return self.c0 * x + self.c1 * y + self.c2
        return self.c2 + math.hypot(x - self.c0, y - self.c1)


def eval_surface(surface: Surface, p) -> float:
    """Height of one surface over a planar point (total function)."""
    return surface.eval(p)


def eval_coeffs(family: str, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Heights of k surfaces over m points; returns an (m, k) array."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if family == FAMILY_PLANE:
        # elementwise, matching Surface.eval's accumulation order exactly
        return coeffs[:, 0] * pts[:, 0:1] + coeffs[:, 1] * pts[:, 1:2] + coeffs[:, 2]
    dx = pts[:, 0:1] - coeffs[:, 0]
    dy = pts[:, 1:2] - coeffs[:, 1]
    return coeffs[:, 2] + np.hypot(dx, dy)


class SurfaceSet:
    """Immutable homogeneous collection of surfaces with shared tolerance.

    ``ids`` are preserved across ``subset``/``jitter`` so samples drawn
    from a set stay identified with the original surfaces.
    """

    def __init__(
        self,
        family: str,
        coeffs,
        ids: Sequence[int] | None = None,
        jitter_seed: int = 0,
        jitter_magnitude: float = 0.0,
        tol: Tolerance = DEFAULT_TOL,
        bbox: Bbox | None = None,
    ):
        if family not in (FAMILY_PLANE, FAMILY_CONE):
            raise ValueError(f"unknown family {family!r}")
        c = np.array(coeffs, dtype=float)
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError("coeffs must be (n, 3)")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        self.family = family
        self.coeffs = c
        self.coeffs.setflags(write=False)
        self.ids = np.arange(len(c)) if ids is None else np.asarray(ids, dtype=int)
        self.jitter_seed = jitter_seed
        self.jitter_magnitude = jitter_magnitude
        self.tol = tol
        self._bbox = bbox
        self._zscale: float | None = None
        self._index_of = {int(s): i for i, s in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.coeffs)

    def index_of(self, surf_id: int) -> int:
        return self._index_of[int(surf_id)]

    def surface(self, surf_id: int) -> Surface:
        i = self.index_of(surf_id)
        c = self.coeffs[i]
        return Surface(int(self.ids[i]), self.family, float(c[0]), float(c[1]), float(c[2]))

    @property
    def surfaces(self) -> list[Surface]:
        return [self.surface(int(s)) for s in self.ids]

    def subset(self, positions: Iterable[int]) -> "SurfaceSet":
        pos = np.asarray(list(positions), dtype=int)
        return SurfaceSet(
            self.family,
            self.coeffs[pos],
            ids=self.ids[pos],
            jitter_seed=self.jitter_seed,
            jitter_magnitude=self.jitter_magnitude,
            tol=self.tol,
            bbox=self._bbox,
        )

    @property
    def bbox(self) -> Bbox:
        if self._bbox is None:
            self._bbox = self._default_bbox()
        return self._bbox

    def with_bbox(self, bbox: Bbox) -> "SurfaceSet":
        return SurfaceSet(
            self.family,
            self.coeffs,
            ids=self.ids,
            jitter_seed=self.jitter_seed,
            jitter_magnitude=self.jitter_magnitude,
            tol=self.tol,
            bbox=bbox,
        )

    def _default_bbox(self) -> Bbox:
        # Sites (or lifted sites for planes) with a 3x margin, at least
        # a unit half-extent so degenerate hand instances get a real box.
        if self.family == FAMILY_CONE:
            sx, sy = self.coeffs[:, 0], self.coeffs[:, 1]
        else:
            sx, sy = -self.coeffs[:, 0] / 2.0, -self.coeffs[:, 1] / 2.0
        cx = (sx.min() + sx.max()) / 2.0 if len(sx) else 0.0
        cy = (sy.min() + sy.max()) / 2.0 if len(sy) else 0.0
        hx = max((sx.max() - sx.min()) / 2.0 if len(sx) else 0.0, 1.0) * 3.0
        hy = max((sy.max() - sy.min()) / 2.0 if len(sy) else 0.0, 1.0) * 3.0
        return Bbox(cx - hx, cx + hx, cy - hy, cy + hy)

    @property
    def zscale(self) -> float:
        """Bound on |height| over the bbox, used for +/-infinity stand-ins."""
        if self._zscale is None:
            bb = self.bbox
            corners = np.array(
                [
                    [bb.x0, bb.y0],
                    [bb.x0, bb.y1],
                    [bb.x1, bb.y0],
                    [bb.x1, bb.y1],
                    [(bb.x0 + bb.x1) / 2, (bb.y0 + bb.y1) / 2],
                ]
            )
            h = eval_coeffs(self.family, self.coeffs, corners)
            self._zscale = float(np.abs(h).max()) if h.size else 1.0
        return self._zscale

    @property
    def z_max(self) -> float:
        return 3.0 * self.zscale + 1.0

    def eval_at(self, p) -> np.ndarray:
        """Heights of all surfaces over one planar point."""
        return eval_coeffs(self.family, self.coeffs, np.asarray(p, dtype=float))[0]

    def eval_points(self, points) -> np.ndarray:
        """Heights of all surfaces over m points, shape (m, n)."""
        return eval_coeffs(self.family, self.coeffs, points)

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        keys = ("a", "b", "c") if self.family == FAMILY_PLANE else ("x", "y", "w")
        items = [dict(zip(keys, map(float, row))) for row in self.coeffs]
        return {"family": self.family, "items": items, "seed": int(self.jitter_seed)}

    @classmethod
    def from_json_dict(cls, d: dict, tol: Tolerance = DEFAULT_TOL) -> "SurfaceSet":
        family = d["family"]
        keys = ("a", "b", "c") if family == FAMILY_PLANE else ("x", "y", "w")
        coeffs = [[it[k] for k in keys] for it in d["items"]]
        return cls(family, coeffs, jitter_seed=int(d.get("seed", 0)), tol=tol)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path, tol: Tolerance = DEFAULT_TOL) -> "SurfaceSet":
        with open(path) as f:
            return cls.from_json_dict(json.load(f), tol=tol)


def _mix(seed: int, stream: tuple[int, ...]) -> int:
    h = (seed & ((1 << 64) - 1)) ^ 0x9E3779B97F4A7C15
    for s in stream:
        h ^= ((s & ((1 << 64) - 1)) + 0x9E3779B97F4A7C15 + ((h << 6) & ((1 << 64) - 1)) + (h >> 2))
        h &= (1 << 64) - 1
    return h


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Portable counter-based generator; streams split by integer tags."""
    return np.random.Generator(np.random.Philox(key=_mix(seed, stream)))


def jitter(fs: SurfaceSet, seed: int, magnitude: float) -> SurfaceSet:
    """Perturb every coefficient by uniform relative noise in +/-magnitude.

    Deterministic in seed; magnitude 0 is the identity.  Coefficients that
    are exactly zero get absolute noise at the set's coefficient scale so
    duplicated degenerate inputs still separate.
    """
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    if magnitude == 0:
        return fs
    rng = rng_for(seed, 7)
    c = np.array(fs.coeffs)
    u = rng.uniform(-magnitude, magnitude, size=c.shape)
    scale = float(np.max(np.abs(c))) or 1.0
    zero = c == 0.0
    c = c * (1.0 + u)
    c[zero] = u[zero] * scale
    return SurfaceSet(
        fs.family, c, ids=fs.ids, jitter_seed=seed, jitter_magnitude=magnitude,
        tol=fs.tol, bbox=fs._bbox,
    )


# -- vertical-line oracle ------------------------------------------------


def lowest_k_along(fs: SurfaceSet, p, k: int) -> list[tuple[int, float]]:
    """The k smallest heights over p, ascending, ties by ascending id."""
    n = len(fs)
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} out of range [1, {n}]")
    h = fs.eval_at(p)
    order = np.lexsort((fs.ids, h))[:k]
    return [(int(fs.ids[i]), float(h[i])) for i in order]


def below_point(fs: SurfaceSet, p3) -> set[int]:
    """Ids of surfaces strictly below a 3D point (tolerance-aware)."""
    x, y, z = float(p3[0]), float(p3[1]), float(p3[2])
    h = fs.eval_at((x, y))
    mask = fs.tol.below(h, z)
    return {int(s) for s in fs.ids[mask]}


# -- bisector geometry ----------------------------------------------------

BRANCH_LINE = "line"
BRANCH_VLINE = "vline"
BRANCH_ALL = "all"
BRANCH_LO = "lo"
BRANCH_HI = "hi"


@dataclass(frozen=True)
class HypFrame:
    """One hyperbola branch |q-p1| - |q-p2| = dw in world coordinates.

    Parametrized by theta: P(theta) = (mx + A ch + B sh, my + C ch + D sh)
    with ch = cosh(theta), sh = sinh(theta).
    """

    mx: float
    my: float
    A: float
    B: float
    C: float
    D: float

    def xy(self, theta):
        ch, sh = np.cosh(theta), np.sinh(theta)
        return self.mx + self.A * ch + self.B * sh, self.my + self.C * ch + self.D * sh

    def x_at(self, theta):
        return self.mx + self.A * np.cosh(theta) + self.B * np.sinh(theta)

    def y_at_theta(self, theta):
        return self.my + self.C * np.cosh(theta) + self.D * np.sinh(theta)

    def x_extreme_theta(self) -> float | None:
        # dX/dtheta = A sh + B ch = 0  =>  tanh(theta) = -B/A
        if abs(self.B) < abs(self.A):
            return math.atanh(-self.B / self.A)
        return None

    def y_extreme_theta(self) -> float | None:
        if abs(self.D) < abs(self.C):
            return math.atanh(-self.D / self.C)
        return None

    def thetas_from_x(self, x: float) -> list[float]:
        """All theta with X(theta) = x (0, 1, or 2 solutions)."""
        return _solve_cosh_sinh(self.A, self.B, x - self.mx)

    def thetas_from_y(self, y: float) -> list[float]:
        return _solve_cosh_sinh(self.C, self.D, y - self.my)


def _solve_cosh_sinh(A: float, B: float, c0: float) -> list[float]:
    """Solve A*cosh(t) + B*sinh(t) = c0 for t."""
    aA, aB = abs(A), abs(B)
    if aA > aB:
        R = math.sqrt(max(A * A - B * B, 0.0))
        if R == 0.0:
            return []
        psi = math.asinh(math.copysign(1.0, A) * B / R)
        gamma = c0 / math.copysign(R, A)
        if gamma < 1.0:
            return []
        t = math.acosh(max(gamma, 1.0))
        return [-t - psi, t - psi] if t > 0 else [-psi]
    if aB > aA:
        R = math.sqrt(max(B * B - A * A, 0.0))
        psi = math.asinh(math.copysign(1.0, B) * A / R)
        return [math.asinh(c0 / math.copysign(R, B)) - psi]
    # |A| == |B|: A (cosh t +/- sinh t) = A e^{+/-t}
    if A == 0.0:
        return []
    ratio = c0 / A
    if ratio <= 0.0:
        return []
    t = math.log(ratio)
    return [t if B == A else -t]


def _solve_cosh_sinh_vec(A: float, B: float, c0: np.ndarray) -> np.ndarray:
    """Vectorized _solve_cosh_sinh for fixed (A, B): returns (2, m) thetas.

    Missing solutions are NaN.  The |A| == |B| degenerate case returns the
    single exponential root in the first row.
    """
    c0 = np.asarray(c0, dtype=float)
    out = np.full((2, len(c0)), np.nan)
    aA, aB = abs(A), abs(B)
    if aA > aB:
        R = math.sqrt(max(A * A - B * B, 0.0))
        if R == 0.0:
            return out
        psi = math.asinh(math.copysign(1.0, A) * B / R)
        gamma = c0 / math.copysign(R, A)
        ok = gamma >= 1.0
        t = np.arccosh(np.where(ok, gamma, 1.0))
        out[0] = np.where(ok, -t - psi, np.nan)
        out[1] = np.where(ok, t - psi, np.nan)
        return out
    if aB > aA:
        R = math.sqrt(max(B * B - A * A, 0.0))
        psi = math.asinh(math.copysign(1.0, B) * A / R)
        out[0] = np.arcsinh(c0 / math.copysign(R, B)) - psi
        return out
    if A == 0.0:
        return out
    ratio = c0 / A
    ok = ratio > 0
    t = np.log(np.where(ok, ratio, 1.0))
    out[0] = np.where(ok, t if B == A else -t, np.nan)
    return out


@dataclass(frozen=True)
class Arc:
    """One x-monotone piece of the projected bisector of two surfaces."""

    surf_lo: int
    surf_hi: int
    kind: str  # 'line' | 'vline' | 'hyp'
    branch: str
    x0: float
    x1: float
    # line: y = m*x + q ; vline: x = x0 ; hyp: frame + theta range
    m: float = 0.0
    q: float = 0.0
    frame: HypFrame | None = None
    t0: float = 0.0
    t1: float = 0.0

    def y_at(self, x):
        """y on the arc at abscissa x (scalar or ndarray); undefined for vline."""
        if self.kind == "line":
            return self.m * np.asarray(x, dtype=float) + self.q
        if self.kind == "vline":
            raise ValueError("vertical arc has no y(x)")
        return self._hyp_y_at(x)

    def _hyp_y_at(self, x):
        fr = self.frame
        tlo, thi = (self.t0, self.t1) if self.t0 <= self.t1 else (self.t1, self.t0)
        pad = 1e-9 * (abs(tlo) + abs(thi) + 1.0)
        if isinstance(x, (float, int)):
            xv = min(max(float(x), min(self.x0, self.x1)), max(self.x0, self.x1))
            best, bdist = None, math.inf
            for t in fr.thetas_from_x(xv):
                d = max(tlo - t, t - thi, 0.0)
                if d < bdist:
                    best, bdist = t, d
            if best is None:
                best = tlo if abs(xv - fr.x_at(tlo)) < abs(xv - fr.x_at(thi)) else thi
            return float(fr.y_at_theta(min(max(best, tlo - pad), thi + pad)))
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        xs = np.atleast_1d(xs).clip(min(self.x0, self.x1), max(self.x0, self.x1))
        # invert X(theta) on the monotone piece, then evaluate Y
        cands = _solve_cosh_sinh_vec(fr.A, fr.B, xs - fr.mx)
        dist = np.maximum(np.maximum(tlo - cands, cands - thi), 0.0)
        dist = np.where(np.isnan(cands), np.inf, dist)
        pick = np.argmin(dist, axis=0)
        best = cands[pick, np.arange(len(xs))]
        # numeric fringe: no candidate at all -> nearest endpoint by x
        bad = ~np.isfinite(best)
        if bad.any():
            xl, xh = float(fr.x_at(tlo)), float(fr.x_at(thi))
            best = np.where(bad,
                            np.where(np.abs(xs - xl) < np.abs(xs - xh), tlo, thi),
                            best)
        out = fr.y_at_theta(np.clip(best, tlo - pad, thi + pad))
        return float(out[0]) if scalar else out

    @property
    def pair(self) -> tuple[int, int]:
        return (self.surf_lo, self.surf_hi)

    def param_range(self) -> tuple[float, float]:
        """Sweep parameter range (x for lines, theta for hyp pieces)."""
        if self.kind == "hyp":
            return (self.t0, self.t1)
        return (self.x0, self.x1)

    def point_at_param(self, t):
        if self.kind == "hyp":
            return self.frame.xy(t)
        if self.kind == "vline":
            return (self.x0, t)
        return (t, self.m * t + self.q)

    def to_json_dict(self) -> dict:
        d = {"lo": self.surf_lo, "hi": self.surf_hi, "kind": self.kind,
             "branch": self.branch, "x0": self.x0, "x1": self.x1}
        if self.kind == "line":
            d["m"], d["q"] = self.m, self.q
        elif self.kind == "hyp":
            d["t0"], d["t1"] = self.t0, self.t1
        return d


def arc_from_json_dict(d: dict, fs: SurfaceSet) -> Arc:
    if d["kind"] == "hyp":
        f = fs.surface(d["lo"])
        g = fs.surface(d["hi"])
        geom = bisector_geometry(f, g, fs.tol)
        assert geom[0] == "hyp"
        return Arc(d["lo"], d["hi"], "hyp", d["branch"], d["x0"], d["x1"],
                   frame=geom[1], t0=d["t0"], t1=d["t1"])
    return Arc(d["lo"], d["hi"], d["kind"], d["branch"], d["x0"], d["x1"],
               m=d.get("m", 0.0), q=d.get("q", 0.0))


def bisector_geometry(f: Surface, g: Surface, tol: Tolerance = DEFAULT_TOL):
    """Classify the equal-height locus of two surfaces.

    Returns one of ('none',), ('line', m, q), ('vline', x), ('hyp', frame).
    Raises DegenerateBisector for identical surfaces.
    """
    if f.family != g.family:
        raise ValueError("mixed families")
    same = all(tol.eq(a, b) for a, b in ((f.c0, g.c0), (f.c1, g.c1), (f.c2, g.c2)))
    if same:
        raise DegenerateBisector(f"surfaces {f.id} and {g.id} coincide")
    if f.family == FAMILY_PLANE:
        A, B, C = f.a - g.a, f.b - g.b, f.c - g.c
        scale = max(abs(f.a), abs(g.a), abs(f.b), abs(g.b), 1.0)
        if abs(A) <= tol.eps * scale and abs(B) <= tol.eps * scale:
            return ("none",)  # parallel, never equal
        if abs(B) > abs(A) * 1e-14 and abs(B) > tol.eps * scale:
            return ("line", -A / B, -C / B)
        return ("vline", -C / A)
    # cones
    dw = g.w - f.w
    dx, dy = g.px - f.px, g.py - f.py
    dist = math.hypot(dx, dy)
    scale = max(dist, abs(dw), 1.0)
    mx, my = (f.px + g.px) / 2.0, (f.py + g.py) / 2.0
    if abs(dw) <= tol.eps * scale:
        # perpendicular bisector of the two apexes
        if abs(dy) > abs(dx):
            return ("line", -dx / dy, my + dx / dy * mx)
        return ("vline", mx)
    if abs(dw) >= dist - tol.eps * scale:
        return ("none",)  # nested cones
    c_f = dist / 2.0
    a = abs(dw) / 2.0
    b = math.sqrt(max(c_f * c_f - a * a, 0.0))
    ux, uy = dx / dist, dy / dist
    # branch of |q-p1| - |q-p2| = dw opens around the nearer focus
    s = 1.0 if dw > 0 else -1.0
    frame = HypFrame(mx=mx, my=my, A=s * a * ux, B=-b * uy, C=s * a * uy, D=b * ux)
    return ("hyp", frame)


def _hyp_pieces(frame: HypFrame, bbox: Bbox, tol: Tolerance) -> list[tuple[float, float]]:
    """Theta intervals of x-monotone pieces clipped to the bbox x-range."""
    tstar = frame.x_extreme_theta()
    spans: list[tuple[float, float]] = []
    lo_ts = frame.thetas_from_x(bbox.x0)  # crossings of the left bbox edge
    hi_ts = frame.thetas_from_x(bbox.x1)
    # theta bound large enough that X leaves the bbox on both ends
    big = 50.0
    for t in lo_ts + hi_ts:
        big = max(big, abs(t) + 1.0)
    pieces = [(-big, big)] if tstar is None else [(-big, tstar), (tstar, big)]
    for ta, tb in pieces:
        xa, xb = frame.x_at(ta), frame.x_at(tb)
        increasing = xa <= xb
        lo_x, hi_x = (xa, xb) if increasing else (xb, xa)
        if hi_x < bbox.x0 or lo_x > bbox.x1:
            continue
        ca, cb = ta, tb
        enter = lo_ts if increasing else hi_ts  # X enters the box going right of these
        leave = hi_ts if increasing else lo_ts
        for t in enter:
            if ta < t < tb:
                ca = max(ca, t)
        for t in leave:
            if ta < t < tb:
                cb = min(cb, t)
        if ca < cb:
            spans.append((ca, cb))
    return spans


def bisector_arcs(f: Surface, g: Surface, bbox: Bbox, tol: Tolerance = DEFAULT_TOL) -> list[Arc]:
    """x-monotone pieces of the projected intersection curve of f and g.

    Pieces are clipped to the bbox x-range and split at x-extreme points.
    Empty for parallel planes and nested cones.
    """
    lo, hi = (f, g) if f.id <= g.id else (g, f)
    geom = bisector_geometry(lo, hi, tol)
    kind = geom[0]
    if kind == "none":
        return []
    if kind == "line":
        m, q = geom[1], geom[2]
        return [Arc(lo.id, hi.id, "line", BRANCH_LINE, bbox.x0, bbox.x1, m=m, q=q)]
    if kind == "vline":
        x = geom[1]
        if bbox.x0 <= x <= bbox.x1:
            return [Arc(lo.id, hi.id, "vline", BRANCH_VLINE, x, x)]
        return []
    frame: HypFrame = geom[1]
    arcs = []
    pieces = _hyp_pieces(frame, bbox, tol)
    split = frame.x_extreme_theta()
    for (ta, tb) in pieces:
        xa, xb = float(frame.x_at(ta)), float(frame.x_at(tb))
        x0, x1 = (xa, xb) if xa <= xb else (xb, xa)
        if split is None:
            branch = BRANCH_ALL
        else:
            branch = BRANCH_LO if tb <= split + 1e-15 else BRANCH_HI
        arcs.append(Arc(lo.id, hi.id, "hyp", branch,
                        max(x0, bbox.x0), min(x1, bbox.x1),
                        frame=frame, t0=ta, t1=tb))
    return arcs


def _bisect_roots(fn, ts: np.ndarray, vals: np.ndarray, iters: int = 60) -> list[float]:
    """Roots of fn between consecutive sample points with a sign change."""
    roots = []
    sgn = np.sign(vals)
    for i in range(len(ts) - 1):
        a, b = ts[i], ts[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if sgn[i] == 0.0:
            roots.append(float(a))
            continue
        if sgn[i] * sgn[i + 1] < 0:
            for _ in range(iters):
                mth = 0.5 * (a + b)
                fm = fn(mth)
                if fa * fm <= 0:
                    b, fb = mth, fm
                else:
                    a, fa = mth, fm
            roots.append(0.5 * (a + b))
    if len(ts) and sgn[-1] == 0.0:
        roots.append(float(ts[-1]))
    return roots


def arc_param_samples(arc: Arc, bbox: Bbox, samples: int) -> np.ndarray:
    """Evenly spaced sweep parameters along an arc (y-span for vlines)."""
    if arc.kind == "vline":
        return np.linspace(bbox.y0, bbox.y1, samples)
    t0, t1 = arc.param_range()
    if t0 > t1:
        t0, t1 = t1, t0
    return np.linspace(t0, t1, samples)


def arc_points_at_params(arc: Arc, ts: np.ndarray) -> np.ndarray:
    """(m, 2) planar points on the arc at the given sweep parameters."""
    if arc.kind == "hyp":
        xs, ys = arc.frame.xy(ts)
    elif arc.kind == "vline":
        xs = np.full_like(ts, arc.x0)
        ys = ts
    else:
        xs = ts
        ys = arc.m * ts + arc.q
    return np.column_stack([xs, ys])


def arc_surface_crossing_params(arc: Arc, f: Surface, h: Surface, bbox: Bbox,
                                samples: int = 65) -> list[float]:
    """Sweep parameters where surface h meets the arc's common height.

    f must be one of the arc's defining pair (the arc lies on eval f ==
    eval g, so the crossing condition is eval(h) == eval(f)).
    """
    ts = arc_param_samples(arc, bbox, samples)
    pts = arc_points_at_params(arc, ts)
    vals = np.array([h.eval(p) - f.eval(p) for p in pts])

    def fn(t: float) -> float:
        p = arc_points_at_params(arc, np.array([t]))[0]
        return h.eval(p) - f.eval(p)

    return _bisect_roots(fn, ts, vals)


def triple_points(f: Surface, g: Surface, h: Surface,
                  bbox: Bbox | None = None,
                  tol: Tolerance = DEFAULT_TOL,
                  samples: int = 65) -> list[tuple[float, float]]:
    """Common points of three surfaces' heights, as planar points.

    Planes yield at most one point; cones at most two (roots isolated
    numerically along the f-g bisector).  Raises DegenerateTriple when the
    common locus is one-dimensional.
    """
    if len({f.id, g.id, h.id}) != 3:
        raise ValueError("surfaces must be pairwise distinct")
    if f.family == FAMILY_PLANE:
        a1, b1, c1 = f.a - g.a, f.b - g.b, f.c - g.c
        a2, b2, c2 = f.a - h.a, f.b - h.b, f.c - h.c
        det = a1 * b2 - a2 * b1
        scale = max(abs(a1), abs(b1), abs(a2), abs(b2), 1.0)
        if abs(det) <= (tol.eps * scale) ** 2:
            # parallel bisector lines: either disjoint (no triple) or equal
            if abs(a1 * c2 - a2 * c1) <= tol.eps * scale ** 2 \
                    and abs(b1 * c2 - b2 * c1) <= tol.eps * scale ** 2 \
                    and (abs(a1) > tol.eps * scale or abs(b1) > tol.eps * scale):
                raise DegenerateTriple("coincident bisector lines")
            return []
        x = (b1 * c2 - b2 * c1) / det
        y = (a2 * c1 - a1 * c2) / det
        return [(x, y)]
    if bbox is None:
        ext = max(abs(f.px), abs(f.py), abs(g.px), abs(g.py), abs(h.px), abs(h.py),
                  abs(f.w), abs(g.w), abs(h.w), 1.0) * 8.0
        bbox = Bbox(-ext, ext, -ext, ext)
    pts: list[tuple[float, float]] = []
    for arc in bisector_arcs(f, g, bbox, tol):
        for t in arc_surface_crossing_params(arc, f, h, bbox, samples):
            x, y = arc_points_at_params(arc, np.array([t]))[0]
            pts.append((float(x), float(y)))
    out: list[tuple[float, float]] = []
    for p in pts:
        if all(math.hypot(p[0] - q[0], p[1] - q[1]) > 1e-7 * max(1.0, abs(p[0]), abs(p[1]))
               for q in out):
            out.append(p)
    return out


def arc_midpoint(arc: Arc, bbox: Bbox) -> tuple[float, float]:
    """A representative interior point of the arc."""
    ts = arc_param_samples(arc, bbox, 3)
    x, y = arc_points_at_params(arc, ts[1:2])[0]
    return float(x), float(y)
