"""Level-restricted vertical decomposition into pseudo-prisms.

``build_vd_leq`` overlays all bisector arcs whose 3D intersection curve
stays at level <= L, trapezoidalizes the overlay once, and stacks prisms
per trapezoid up to level L.  This over-refines relative to a per-cell
decomposition (pieces of one pseudo-prism may appear over several
trapezoids) but keeps every correctness property needed downstream.

Conflict and fully-below tests are exact for the plane family (linear
heights over straight-edged regions attain extremes at vertices) and use
a Lipschitz-certified grid screen plus a stab-line witness method for
cones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _sweep
from .predicates import Tolerance, DEFAULT_TOL
from .surfaces import (
    Arc,
    Bbox,
    DegenerateBisector,
    FAMILY_CONE,
    FAMILY_PLANE,
    Surface,
    SurfaceSet,
    arc_points_at_params,
    bisector_arcs,
    eval_coeffs,
)

F_NEG_INF = -1  # bottom sentinel surface id
F_INF = -2  # top sentinel surface id ("z = +infinity")


@dataclass(frozen=True)
class Trapezoid:
    """xy-footprint of a prism; None arcs mean the bbox edge / unbounded."""

    top_arc: Arc | None
    bottom_arc: Arc | None
    x_left: float
    x_right: float


@dataclass
class Prism:
    """Pseudo-prism: a trapezoid footprint between two surfaces."""

    trapezoid: Trapezoid
    top_surf: int  # surface id or F_INF
    bottom_surf: int  # surface id or F_NEG_INF
    level: int  # count of sample surfaces below interior points
    witness: tuple[float, float, float]
    below_count: int | None = None  # |surfaces of F fully below|, lazy
    conflicts: list[int] | None = None  # F_Delta ids, lazy
    origin: tuple = ()

    def defining_ids(self) -> set[int]:
        ids = set()
        for s in (self.top_surf, self.bottom_surf):
            if s >= 0:
                ids.add(s)
        for arc in (self.trapezoid.top_arc, self.trapezoid.bottom_arc):
            if arc is not None:
                ids.add(arc.surf_lo)
                ids.add(arc.surf_hi)
        return ids


# -- level-clipped arcs ------------------------------------------------------


def _line_triple_params(f: Surface, g: Surface, others: np.ndarray,
                        arc: Arc, tol: Tolerance) -> tuple[np.ndarray, np.ndarray]:
    """Params and surface rows where a third plane crosses the f-g line."""
    a1, b1, c1 = f.a - g.a, f.b - g.b, f.c - g.c
    a2 = f.a - others[:, 0]
    b2 = f.b - others[:, 1]
    c2 = f.c - others[:, 2]
    det = a1 * b2 - a2 * b1
    scale = np.maximum(np.abs(a1) + np.abs(b1), np.abs(a2) + np.abs(b2)) + 1.0
    ok = np.abs(det) > (tol.eps * scale) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (b1 * c2 - b2 * c1) / det
        y = (a2 * c1 - a1 * c2) / det
    t = y if arc.kind == "vline" else x
    rows = np.nonzero(ok)[0]
    return t[ok], rows


def _cone_crossing_params(arc: Arc, f: Surface, R: SurfaceSet, skip: tuple[int, int],
                          bbox: Bbox, samples: int = 49) -> tuple[np.ndarray, np.ndarray]:
    """Params and surface rows where a third cone meets the arc height."""
    t0, t1 = arc.param_range()
    if t0 > t1:
        t0, t1 = t1, t0
    if arc.kind == "vline":
        t0, t1 = bbox.y0, bbox.y1
    ts = np.linspace(t0, t1, samples)
    pts = arc_points_at_params(arc, ts)
    H = R.eval_points(pts)  # (samples, r)
    fh = eval_coeffs(R.family, np.array([[f.c0, f.c1, f.c2]]), pts)[:, 0]
    phi = H - fh[:, None]
    sgn = np.sign(phi)
    flips = sgn[:-1] * sgn[1:] < 0
    rows_all = []
    los, his, vlo = [], [], []
    for k in range(len(R)):
        if k in skip:
            continue
        idx = np.nonzero(flips[:, k])[0]
        for i in idx:
            rows_all.append(k)
            los.append(ts[i])
            his.append(ts[i + 1])
            vlo.append(phi[i, k])
    if not rows_all:
        return np.empty(0), np.empty(0, dtype=int)
    rows = np.array(rows_all, dtype=int)
    lo = np.array(los)
    hi = np.array(his)
    flo = np.array(vlo)
    coef = R.coeffs[rows]
    fc = np.array([f.c0, f.c1, f.c2])
    for _ in range(55):
        mid = 0.5 * (lo + hi)
        p = arc_points_at_params(arc, mid)
        hm = coef[:, 2] + np.hypot(p[:, 0] - coef[:, 0], p[:, 1] - coef[:, 1])
        fm = fc[2] + np.hypot(p[:, 0] - fc[0], p[:, 1] - fc[1])
        vm = hm - fm
        neg = flo * vm <= 0
        hi = np.where(neg, mid, hi)
        lo = np.where(neg, lo, mid)
        flo = np.where(neg, flo, vm)
    return 0.5 * (lo + hi), rows


def _walk_keep_segments(arc: Arc, f: Surface, g: Surface, R: SurfaceSet, L: int,
                        bbox: Bbox, tol: Tolerance) -> list[tuple[float, float]]:
    """Param intervals of the arc whose 3D curve stays at level <= L."""
    i = R.index_of(f.id)
    j = R.index_of(g.id)
    if len(R) > 2:
        if R.family == FAMILY_PLANE:
            t_ev, rows = _line_triple_params(f, g, R.coeffs, arc, tol)
            if arc.kind == "vline":
                keep = (t_ev >= bbox.y0) & (t_ev <= bbox.y1)
            else:
                keep = (t_ev >= arc.x0) & (t_ev <= arc.x1)
            sk = rows != i
            sk &= rows != j
            keep &= sk
            t_ev, rows = t_ev[keep], rows[keep]
        else:
            t_ev, rows = _cone_crossing_params(arc, f, R, (i, j), bbox)
    else:
        t_ev, rows = np.empty(0), np.empty(0, dtype=int)

    t0, t1 = arc.param_range()
    if t0 > t1:
        t0, t1 = t1, t0
    if arc.kind == "vline":
        t0, t1 = bbox.y0, bbox.y1
    order = np.argsort(t_ev, kind="stable")
    t_ev, rows = t_ev[order], rows[order]
    bounds = np.concatenate([[t0], t_ev, [t1]])
    mid0 = 0.5 * (bounds[0] + bounds[1])
    p0 = arc_points_at_params(arc, np.array([mid0]))[0]
    H0 = R.eval_at(p0)
    zf = f.eval(p0)
    m = tol.eps * max(1.0, abs(zf))
    below0 = H0 < zf - m
    lvl0 = int(below0.sum())
    if len(rows):
        first_seen: dict[int, int] = {}
        deltas = np.empty(len(rows))
        for e, k in enumerate(rows):
            rank = first_seen.get(k, 0)
            first_seen[k] = rank + 1
            base = -1.0 if below0[k] else 1.0
            deltas[e] = base * (1 if rank % 2 == 0 else -1)
        levels = lvl0 + np.concatenate([[0.0], np.cumsum(deltas)])
    else:
        levels = np.array([float(lvl0)])
    keep = levels <= L
    out: list[tuple[float, float]] = []
    start = None
    for s in range(len(keep)):
        if keep[s] and start is None:
            start = bounds[s]
        if (not keep[s] or s == len(keep) - 1) and start is not None:
            end = bounds[s] if not keep[s] else bounds[s + 1]
            if end > start:
                out.append((float(start), float(end)))
            start = None
    return out


def clip_arcs_to_level(R: SurfaceSet, L: int, bbox: Bbox | None = None) -> list[Arc]:
    """Sub-arcs of all pairwise bisectors at level <= L w.r.t. R.

    Along each bisector the crossings with every third surface are found,
    the level between consecutive crossings is tracked by one evaluation
    plus +/-1 updates, and qualifying segments are kept.  Vertical-line
    bisectors are kept whole once any segment qualifies (the extra wall
    only over-refines).
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    bbox = bbox or R.bbox
    tol = R.tol
    out: list[Arc] = []
    n = len(R)
    surfs = [R.surface(int(s)) for s in R.ids]
    for i in range(n):
        for j in range(i + 1, n):
            f, g = surfs[i], surfs[j]
            pieces = bisector_arcs(f, g, bbox, tol)
            for arc in pieces:
                segs = _walk_keep_segments(arc, f, g, R, L, bbox, tol)
                if not segs:
                    continue
                if arc.kind == "vline":
                    out.append(arc)
                    continue
                for (ta, tb) in segs:
                    if arc.kind == "line":
                        out.append(Arc(arc.surf_lo, arc.surf_hi, "line", arc.branch,
                                       ta, tb, m=arc.m, q=arc.q))
                    else:
                        xa = float(arc.frame.x_at(ta))
                        xb = float(arc.frame.x_at(tb))
                        out.append(Arc(arc.surf_lo, arc.surf_hi, "hyp", arc.branch,
                                       min(xa, xb), max(xa, xb),
                                       frame=arc.frame, t0=ta, t1=tb))
    return out


# -- trapezoidalization -------------------------------------------------------


def trapezoidalize(arcs: list[Arc], bbox: Bbox, tol: Tolerance = DEFAULT_TOL) -> list[Trapezoid]:
    """Interior-disjoint trapezoids covering the bbox (public wrapper)."""
    dec = _sweep.trapezoidalize(arcs, bbox, tol)
    return [trapezoid_of(dec, i) for i in range(len(dec))]


def trapezoid_of(dec: _sweep.Decomposition, i: int) -> Trapezoid:
    b, t = int(dec.bot[i]), int(dec.top[i])
    return Trapezoid(
        top_arc=None if t == _sweep.TOP else dec.arcs[t],
        bottom_arc=None if b == _sweep.BOT else dec.arcs[b],
        x_left=float(dec.x0[i]),
        x_right=float(dec.x1[i]),
    )


# -- region helpers -----------------------------------------------------------


@dataclass
class Region:
    """A prism footprint: x-interval between two non-crossing arcs.

    Not clipped in y (footprints stay connected, matching the paper's
    unbounded decomposition); sentinel bounds use far stand-in rows well
    outside the query box.
    """

    xl: float
    xr: float
    bot_arc: Arc | None
    top_arc: Arc | None
    bbox: Bbox

    @classmethod
    def of(cls, trap: Trapezoid, bbox: Bbox) -> "Region":
        return cls(trap.x_left, trap.x_right, trap.bottom_arc, trap.top_arc, bbox)

    @property
    def ybig(self) -> tuple[float, float]:
        pad = 3.0 * self.bbox.height
        return (self.bbox.y0 - pad, self.bbox.y1 + pad)

    def ybounds(self, xs):
        """y-interval per column plus validity (numeric inversions only)."""
        xs = np.asarray(xs, dtype=float)
        lo, hi = self.ybig
        yb = np.full_like(xs, lo) if self.bot_arc is None \
            else np.asarray(self.bot_arc.y_at(xs), dtype=float)
        yt = np.full_like(xs, hi) if self.top_arc is None \
            else np.asarray(self.top_arc.y_at(xs), dtype=float)
        valid = yt >= yb
        return yb, yt, valid

    def _inset(self) -> tuple[float, float]:
        d = 1e-9 * max(1.0, abs(self.xl), abs(self.xr))
        return self.xl + d, self.xr - d

    def columns(self):
        """Vertex columns (xs, yb, yt, valid); exact corners for line arcs."""
        xl, xr = self._inset()
        xs = np.array([xl, xr])
        yb, yt, valid = self.ybounds(xs)
        return xs, yb, yt, valid

    def vertices(self) -> np.ndarray:
        """Extreme points of the footprint (exact for the plane family)."""
        xs, yb, yt, valid = self.columns()
        xs, yb, yt = xs[valid], yb[valid], yt[valid]
        pts = np.concatenate([np.column_stack([xs, yb]), np.column_stack([xs, yt])])
        return pts

    def grid(self, G: int) -> tuple[np.ndarray, float]:
        """Grid points inside the footprint and their covering radius."""
        xl, xr = self._inset()
        xs = np.linspace(xl, xr, G)
        yb, yt, valid = self.ybounds(xs)
        xs, yb, yt = xs[valid], yb[valid], yt[valid]
        fr = np.linspace(0.0, 1.0, G)
        X = np.repeat(xs, G)
        Y = (yb[:, None] * (1 - fr)[None, :] + yt[:, None] * fr[None, :]).ravel()
        dx = (xr - xl) / max(G - 1, 1)
        dy = float((yt - yb).max(initial=0.0)) / max(G - 1, 1)
        delta = 0.5 * math.hypot(dx, dy)
        return np.column_stack([X, Y]), delta


def _region_of_prism(prism: Prism, bbox: Bbox) -> Region:
    return Region.of(prism.trapezoid, bbox)


# -- conflict and fully-below predicates --------------------------------------


def _surf_heights(fs: SurfaceSet, pts: np.ndarray) -> np.ndarray:
    return fs.eval_points(pts)  # (m, n)


def _scalar_heights(family: str, coef, pts: np.ndarray) -> np.ndarray:
    return eval_coeffs(family, np.asarray(coef, dtype=float)[None, :], pts)[:, 0]


def _bound_heights(F: SurfaceSet, surf_id: int, pts: np.ndarray, z_big: float) -> np.ndarray:
    if surf_id == F_INF:
        return np.full(len(pts), z_big)
    if surf_id == F_NEG_INF:
        return np.full(len(pts), -z_big)
    return _scalar_heights(F.family, F.coeffs[F.index_of(surf_id)], pts)


def _pair_y_candidates(family: str, Fc: np.ndarray, gcoef: np.ndarray,
                       xs: np.ndarray, eps: float) -> np.ndarray:
    """Per-surface y where surface k meets surface g on the line x = xs[k].

    Returns (k, 2), NaN-padded; candidates are residual-validated.
    """
    k = len(Fc)
    out = np.full((k, 2), np.nan)
    if family == FAMILY_PLANE:
        db = Fc[:, 1] - gcoef[1]
        da = Fc[:, 0] - gcoef[0]
        dc = Fc[:, 2] - gcoef[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            y = -(da * xs + dc) / db
        out[:, 0] = np.where(np.abs(db) > 1e-300, y, np.nan)
        return out
    xh, yh, wh = Fc[:, 0], Fc[:, 1], Fc[:, 2]
    xg, yg, wg = gcoef
    dlt = wg - wh
    alpha = (xs - xh) ** 2 - (xs - xg) ** 2 + yh ** 2 - yg ** 2
    beta = 2.0 * (yg - yh)
    lin = np.abs(dlt) <= eps
    with np.errstate(divide="ignore", invalid="ignore"):
        ylin = -alpha / beta
    qa = beta ** 2 - 4.0 * dlt ** 2
    qb = 2.0 * beta * (alpha + dlt ** 2) + 8.0 * dlt ** 2 * yh
    qc = (alpha + dlt ** 2) ** 2 - 4.0 * dlt ** 2 * (yh ** 2 + (xs - xh) ** 2)
    disc = qb ** 2 - 4.0 * qa * qc
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        r1 = (-qb - sq) / (2.0 * qa)
        r2 = (-qb + sq) / (2.0 * qa)
        rlin2 = -qc / qb  # qa ~ 0: the quadratic degenerates to linear
    degen = np.abs(qa) <= 1e-12 * (np.abs(qb) + np.abs(qc) + 1.0)
    r1 = np.where(degen, rlin2, r1)
    r2 = np.where(degen, np.nan, r2)
    bad = disc < 0
    r1 = np.where(bad & ~degen, np.nan, r1)
    r2 = np.where(bad & ~degen, np.nan, r2)
    r1 = np.where(lin, ylin, r1)
    r2 = np.where(lin, np.nan, r2)
    # residual validation against the unsquared equation
    for col, r in ((0, r1), (1, r2)):
        with np.errstate(invalid="ignore"):
            hh = wh + np.hypot(xs - xh, r - yh)
            hg = wg + np.hypot(xs - xg, r - yg)
            ok = np.abs(hh - hg) <= 1e-6 * np.maximum(1.0, np.abs(hh))
        out[:, col] = np.where(ok & np.isfinite(r), r, np.nan)
    return out


def _cone_event_xs(Fc: np.ndarray, gcoef: np.ndarray, eps: float) -> np.ndarray:
    """Per-surface x of the bisector's x-extreme (or vertical line), NaN if none."""
    xh, yh, wh = Fc[:, 0], Fc[:, 1], Fc[:, 2]
    xg, yg, wg = gcoef
    dw = wg - wh
    dx, dy = xg - xh, yg - yh
    dist = np.hypot(dx, dy)
    out = np.full(len(Fc), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ux, uy = dx / dist, dy / dist
        mx = 0.5 * (xh + xg)
        # equal weights: perpendicular bisector, vertical when dy ~ 0
        vline = (np.abs(dw) <= eps) & (np.abs(dy) <= np.abs(dx))
        out = np.where(vline, mx, out)
        hyp = (np.abs(dw) > eps) & (np.abs(dw) < dist - eps)
        a = np.abs(dw) / 2.0
        b = np.sqrt(np.maximum((dist / 2.0) ** 2 - a ** 2, 0.0))
        s = np.sign(dw)
        A = s * a * ux
        B = -b * uy
        u = -B / A
        has_ext = hyp & (np.abs(B) < np.abs(A))
        ch = 1.0 / np.sqrt(np.maximum(1.0 - u ** 2, 1e-300))
        sh = u * ch
        xext = mx + A * ch + B * sh
        out = np.where(has_ext, xext, out)
    return out


def _conflict_mask_planes(F: SurfaceSet, region: Region, zbot_id: int, ztop_id: int,
                          eps: float, z_big: float,
                          cols=None, HV: np.ndarray | None = None) -> np.ndarray:
    """Exact conflict test for the plane family via region vertices.

    A surface conflicts iff it is above the floor somewhere and below the
    ceiling somewhere within one connected component of the clipped
    region; linear heights attain extremes at component vertices.
    """
    if cols is None:
        cols = region.columns()
    xs, yb, yt, valid = cols
    if not valid.any():
        return np.zeros(len(F), dtype=bool)
    V = np.concatenate([np.column_stack([xs, yb]), np.column_stack([xs, yt])])
    if HV is None:
        HV = _surf_heights(F, V)
    hb = _bound_heights(F, zbot_id, V, z_big)
    ht = _bound_heights(F, ztop_id, V, z_big)
    above_pt = HV > hb[:, None] + eps  # (2*cols, n)
    below_pt = HV < ht[:, None] - eps
    k = len(xs)
    above_col = above_pt[:k] | above_pt[k:]
    below_col = below_pt[:k] | below_pt[k:]
    # connected components of consecutive valid columns
    comp = np.cumsum(~valid)
    out = np.zeros(HV.shape[1], dtype=bool)
    for c in np.unique(comp[valid]):
        sel = valid & (comp == c)
        out |= above_col[sel].any(axis=0) & below_col[sel].any(axis=0)
    return out


def _param_window(arc: Arc, xl: float, xr: float) -> tuple[float, float] | None:
    """Parameter subinterval of the arc whose x lies in [xl, xr]."""
    if arc.kind == "line":
        a, b = max(arc.x0, xl), min(arc.x1, xr)
        return (a, b) if b > a else None
    if arc.kind == "vline":
        return None
    pa, pb = arc.param_range()
    if pa > pb:
        pa, pb = pb, pa
    fr = arc.frame
    xa, xb = float(fr.x_at(pa)), float(fr.x_at(pb))
    lo_x, hi_x = (xa, xb) if xa <= xb else (xb, xa)
    wl, wr = max(lo_x, xl), min(hi_x, xr)
    if wr <= wl:
        return None

    def theta_at(xv: float) -> float:
        best, bd = None, math.inf
        for t in fr.thetas_from_x(xv):
            d = max(pa - t, t - pb, 0.0)
            if d < bd:
                best, bd = t, d
        if best is None:
            return pa if abs(xv - xa) < abs(xv - xb) else pb
        return min(max(best, pa), pb)

    t1, t2 = theta_at(wl), theta_at(wr)
    if t1 > t2:
        t1, t2 = t2, t1
    return (t1, t2) if t2 > t1 else None


def _vec_curve_roots(arc: Arc, g_coef: np.ndarray, Tc: np.ndarray, family: str,
                     bbox: Bbox, x_window: tuple[float, float],
                     samples: int = 65) -> list[tuple[int, float]]:
    """(row, x) where target surfaces meet surface g along the given arc."""
    win = _param_window(arc, x_window[0], x_window[1])
    if win is None:
        return []
    ts = np.linspace(win[0], win[1], samples)
    pts = arc_points_at_params(arc, ts)
    in_win = (pts[:, 0] >= x_window[0] - 1e-12) & (pts[:, 0] <= x_window[1] + 1e-12)
    H = eval_coeffs(family, Tc, pts)  # (samples, k)
    gh = eval_coeffs(family, g_coef[None, :], pts)[:, 0]
    phi = H - gh[:, None]
    usable = in_win[:-1] & in_win[1:]
    flips = (np.sign(phi[:-1]) * np.sign(phi[1:]) < 0) & usable[:, None]
    rows_all, los, his, vlo = [], [], [], []
    for kk in range(Tc.shape[0]):
        for i in np.nonzero(flips[:, kk])[0]:
            rows_all.append(kk)
            los.append(ts[i])
            his.append(ts[i + 1])
            vlo.append(phi[i, kk])
    if not rows_all:
        return []
    rows = np.array(rows_all, dtype=int)
    lo, hi, flo = np.array(los), np.array(his), np.array(vlo)
    tc = Tc[rows]
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        p = arc_points_at_params(arc, mid)
        hm = _diag_eval(family, tc, p)
        gm = eval_coeffs(family, g_coef[None, :], p)[:, 0]
        vm = hm - gm
        neg = flo * vm <= 0
        hi = np.where(neg, mid, hi)
        lo = np.where(neg, lo, mid)
        flo = np.where(neg, flo, vm)
    roots = 0.5 * (lo + hi)
    xs = arc_points_at_params(arc, roots)[:, 0]
    return [(int(r), float(x)) for r, x in zip(rows, xs)]


def _diag_eval(family: str, coefs: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Elementwise heights: coefs[i] evaluated at pts[i]."""
    if family == FAMILY_PLANE:
        return coefs[:, 0] * pts[:, 0] + coefs[:, 1] * pts[:, 1] + coefs[:, 2]
    return coefs[:, 2] + np.hypot(pts[:, 0] - coefs[:, 0], pts[:, 1] - coefs[:, 1])


def _stab_conflict_mask_cones(F_sub: np.ndarray, F: SurfaceSet, region: Region,
                              zbot_id: int, ztop_id: int, eps: float,
                              z_big: float) -> np.ndarray:
    """Witness-set stab-line test restricted to the F rows in F_sub.

    Stab abscissae per surface: the span ends and midpoint, the x-extremes
    of its bisectors with the prism faces, and every crossing of those
    bisectors with the prism's boundary (pinch curve, footprint arcs, bbox
    edges) -- the endpoints of the curves clipped to the trapezoid.
    """
    Fc = F.coeffs[F_sub]
    k = len(Fc)
    xl, xr = region._inset()
    xm = 0.5 * (xl + xr)
    bounds = []
    if zbot_id >= 0:
        bounds.append((zbot_id, F.coeffs[F.index_of(zbot_id)]))
    if ztop_id >= 0:
        bounds.append((ztop_id, F.coeffs[F.index_of(ztop_id)]))
    events: list[list[float]] = [[] for _ in range(k)]
    for (_, gc) in bounds:
        e = _cone_event_xs(Fc, gc, eps)
        for row in np.nonzero((e > xl) & (e < xr))[0]:
            events[row].append(float(e[row]))
    # curves bounding the h-vs-face sign structure inside the footprint
    walk_arcs: list[Arc] = []
    if len(bounds) == 2:
        try:
            walk_arcs.extend(bisector_arcs(F.surface(bounds[0][0]),
                                           F.surface(bounds[1][0]),
                                           region.bbox, F.tol))
        except DegenerateBisector:
            pass
    for arc in (region.bot_arc, region.top_arc):
        if arc is not None:
            walk_arcs.append(arc)
    for ye in (region.bbox.y0, region.bbox.y1):
        walk_arcs.append(Arc(-3, -3, "line", "line", xl, xr, m=0.0, q=ye))
    for arc in walk_arcs:
        if arc.kind == "vline":
            continue
        if min(arc.x0, arc.x1) > xr or max(arc.x0, arc.x1) < xl:
            continue
        for (_, gc) in bounds:
            for (row, x) in _vec_curve_roots(arc, gc, Fc, F.family,
                                             region.bbox, (xl, xr)):
                if xl < x < xr:
                    events[row].append(x)
    emax = max(1, max(len(e) for e in events))
    E = np.full((k, emax + 2), np.nan)
    E[:, 0] = xl
    E[:, 1] = xr
    for row, evs in enumerate(events):
        E[row, 2:2 + len(evs)] = evs
    E = np.sort(np.where(np.isnan(E), xl, E), axis=1)
    mids = 0.5 * (E[:, :-1] + E[:, 1:])
    stabs = np.column_stack([np.full(k, xl), np.full(k, xm), np.full(k, xr), mids])
    conflict = np.zeros(k, dtype=bool)
    for s in range(stabs.shape[1]):
        xs = stabs[:, s]
        yb, yt, valid = region.ybounds(xs)
        yt = np.where(valid, yt, yb)
        cands = [yb, yt]
        for (_, gc) in bounds:
            ys = _pair_y_candidates(F.family, Fc, gc, xs, eps)
            ys = np.where((ys > yb[:, None]) & (ys < yt[:, None]), ys, np.nan)
            cands.append(ys[:, 0])
            cands.append(ys[:, 1])
        C = np.column_stack(cands)
        C = np.where(np.isnan(C), yb[:, None], C)
        C.sort(axis=1)
        for c in range(C.shape[1] - 1):
            ym = 0.5 * (C[:, c] + C[:, c + 1])
            pts = np.column_stack([xs, ym])
            hh = Fc[:, 2] + np.hypot(xs - Fc[:, 0], ym - Fc[:, 1])
            fb = _bound_heights(F, zbot_id, pts, z_big)
            ft = _bound_heights(F, ztop_id, pts, z_big)
            conflict |= (hh > fb + eps) & (hh < ft - eps) & valid
    return conflict


def _conflict_mask_cones(F: SurfaceSet, region: Region, zbot_id: int, ztop_id: int,
                         eps: float, z_big: float) -> np.ndarray:
    n = len(F)
    decided = np.zeros(n, dtype=bool)
    result = np.zeros(n, dtype=bool)
    # cone height differences are 2-Lipschitz: a grid with margin certifies;
    # only a same-point interior witness counts as a definite conflict (the
    # clipped region may be disconnected), the stab method decides the rest
    for G in (5, 9, 17):
        pts, delta = region.grid(G)
        if len(pts) == 0:
            return np.zeros(len(F), dtype=bool)
        H = _surf_heights(F, pts)
        hb = _bound_heights(F, zbot_id, pts, z_big)
        ht = _bound_heights(F, ztop_id, pts, z_big)
        yes = ((H > hb[:, None] + eps) & (H < ht[:, None] - eps)).any(axis=0)
        all_below_bottom = ((H - hb[:, None]) <= -2.0 * delta).all(axis=0)
        all_above_top = ((H - ht[:, None]) >= 2.0 * delta).all(axis=0)
        no = all_below_bottom | all_above_top
        newly = ~decided & (yes | no)
        result[newly] = yes[newly]
        decided |= newly
        if decided.all():
            return result
    rest = np.nonzero(~decided)[0]
    result[rest] = _stab_conflict_mask_cones(rest, F, region, zbot_id, ztop_id, eps, z_big)
    return result


def conflict_mask(F: SurfaceSet, prism: Prism, bbox: Bbox | None = None) -> np.ndarray:
    """Boolean mask over F's rows: surface meets the prism's open interior."""
    bbox = bbox or F.bbox
    region = _region_of_prism(prism, bbox)
    eps = F.tol.eps * max(1.0, F.zscale)
    z_big = F.z_max
    if F.family == FAMILY_PLANE:
        return _conflict_mask_planes(F, region, prism.bottom_surf, prism.top_surf,
                                     eps, z_big)
    return _conflict_mask_cones(F, region, prism.bottom_surf, prism.top_surf,
                                eps, z_big)


def conflict_list(prism: Prism, F: SurfaceSet, bbox: Bbox | None = None) -> list[int]:
    """Ids of surfaces of F meeting the open interior of the prism."""
    mask = conflict_mask(F, prism, bbox)
    return sorted(int(s) for s in F.ids[mask])


def fully_below_mask(F: SurfaceSet, prism: Prism, bbox: Bbox | None = None,
                     conflicts: np.ndarray | None = None) -> np.ndarray:
    """Mask over F: surface lies weakly below the prism's bottom everywhere."""
    bbox = bbox or F.bbox
    region = _region_of_prism(prism, bbox)
    eps = F.tol.eps * max(1.0, F.zscale)
    z_big = F.z_max
    if prism.bottom_surf == F_NEG_INF:
        return np.zeros(len(F), dtype=bool)
    if F.family == FAMILY_PLANE:
        V = region.vertices()
        if len(V) == 0:
            return np.zeros(len(F), dtype=bool)
        HV = _surf_heights(F, V)
        hb = _bound_heights(F, prism.bottom_surf, V, z_big)
        return (HV <= hb[:, None] + eps).all(axis=0)
    # cones: below the witness and not in conflict (the vertical-line dichotomy)
    if conflicts is None:
        conflicts = conflict_mask(F, prism, bbox)
    wx, wy, wz = prism.witness
    H = F.eval_at((wx, wy))
    below_wit = F.tol.below(H, wz)
    return below_wit & ~conflicts


def count_fully_below(prism: Prism, F: SurfaceSet, bbox: Bbox | None = None) -> int:
    """Number of surfaces of F lying below the entire prism.

    Computed as |below_point(F, witness)| - |below and in conflict|: a
    surface below the witness either meets the prism or is fully below it.
    """
    bbox = bbox or F.bbox
    wx, wy, wz = prism.witness
    H = F.eval_at((wx, wy))
    below_wit = F.tol.below(H, wz)
    conf = conflict_mask(F, prism, bbox)
    return int((below_wit & ~conf).sum())


def dips_below_mask(F: SurfaceSet, surf_id: int, region: Region,
                    eps: float, z_big: float) -> np.ndarray:
    """Mask over F: surface height <= the given surface somewhere on region.

    Closed comparison, so the surface itself qualifies.
    """
    if surf_id == F_INF:
        return np.ones(len(F), dtype=bool)
    if F.family == FAMILY_PLANE:
        V = region.vertices()
        if len(V) == 0:
            return np.zeros(len(F), dtype=bool)
        HV = _surf_heights(F, V)
        hg = _bound_heights(F, surf_id, V, z_big)
        return (HV <= hg[:, None] + eps).any(axis=0)
    decided = np.zeros(len(F), dtype=bool)
    result = np.zeros(len(F), dtype=bool)
    for G in (5, 9, 17, 33):
        pts, delta = region.grid(G)
        if len(pts) == 0:
            return np.zeros(len(F), dtype=bool)
        H = _surf_heights(F, pts)
        hg = _bound_heights(F, surf_id, pts, z_big)
        d = H - hg[:, None]
        yes = (d <= eps).any(axis=0)
        no = (d >= 2.0 * delta).all(axis=0)
        newly = ~decided & (yes | no)
        result[newly] = yes[newly]
        decided |= newly
        if decided.all():
            return result
    # unresolved stragglers sit within tolerance of tangency; call them in
    result[~decided] = True
    return result


# -- VDLevels -----------------------------------------------------------------


class VDLevels:
    """Prisms of the vertical decomposition at level <= L, columnar."""

    def __init__(self, sample: SurfaceSet, L: int, bbox: Bbox,
                 dec: _sweep.Decomposition, Rs: SurfaceSet,
                 trap_idx: np.ndarray, level: np.ndarray,
                 bot_id: np.ndarray, top_id: np.ndarray,
                 zbot: np.ndarray, ztop: np.ndarray,
                 wx: np.ndarray, wy: np.ndarray, wz: np.ndarray,
                 arcs: list[Arc]):
        self.sample = sample
        self.L = L
        self.bbox = bbox
        self.dec = dec
        self.Rs = Rs  # sample sorted by id (tie-break order)
        self.trap_idx = trap_idx
        self.level = level
        self.bot_id = bot_id
        self.top_id = top_id
        self.zbot = zbot
        self.ztop = ztop
        self.wx = wx
        self.wy = wy
        self.wz = wz
        self.arcs = arcs
        self._traps: dict[int, Trapezoid] = {}

    def __len__(self) -> int:
        return len(self.level)

    def trapezoid(self, t: int) -> Trapezoid:
        if t not in self._traps:
            self._traps[t] = trapezoid_of(self.dec, t)
        return self._traps[t]

    def prism(self, row: int) -> Prism:
        t = int(self.trap_idx[row])
        return Prism(
            trapezoid=self.trapezoid(t),
            top_surf=int(self.top_id[row]),
            bottom_surf=int(self.bot_id[row]),
            level=int(self.level[row]),
            witness=(float(self.wx[row]), float(self.wy[row]), float(self.wz[row])),
            origin=(t, int(self.level[row])),
        )

    @property
    def prisms(self) -> list[Prism]:
        return [self.prism(i) for i in range(len(self))]

    def prism_containing(self, x: float, y: float, z: float) -> list[int]:
        """Rows of all prisms containing the 3D point (linear scan)."""
        out = []
        for t in range(len(self.dec)):
            if not self.dec.contains(t, x, y):
                continue
            rows = np.nonzero(self.trap_idx == t)[0]
            for r in rows:
                zb = self.zbot_at(int(r), x, y)
                zt = self.ztop_at(int(r), x, y)
                if zb <= z < zt:
                    out.append(int(r))
        return out

    def zbot_at(self, row: int, x: float, y: float) -> float:
        sid = int(self.bot_id[row])
        if sid == F_NEG_INF:
            return -math.inf
        return self.sample.surface(sid).eval((x, y))

    def ztop_at(self, row: int, x: float, y: float) -> float:
        sid = int(self.top_id[row])
        if sid == F_INF:
            return math.inf
        return self.sample.surface(sid).eval((x, y))

    def to_debug_json(self) -> dict:
        """Trapezoid coordinates and levels for visual inspection."""
        cells = []
        for i in range(len(self)):
            t = int(self.trap_idx[i])
            cells.append({
                "trap": t,
                "x0": float(self.dec.x0[t]),
                "x1": float(self.dec.x1[t]),
                "level": int(self.level[i]),
                "bottom": int(self.bot_id[i]),
                "top": int(self.top_id[i]),
            })
        return {"L": self.L, "r": len(self.sample), "prisms": cells}


def build_vd_leq(R: SurfaceSet, L: int, bbox: Bbox | None = None) -> VDLevels:
    """Level-restricted vertical decomposition of the sample R."""
    if len(R) < 1:
        raise ValueError("sample must be nonempty")
    bbox = bbox or R.bbox
    arcs = clip_arcs_to_level(R, L, bbox)
    dec = _sweep.trapezoidalize(arcs, bbox, R.tol)
    pos = np.argsort(R.ids, kind="stable")
    Rs = R.subset(pos)
    r = len(R)
    W = dec.witnesses()
    keep_traps = np.nonzero(~np.isnan(W[:, 0]))[0]
    W = W[keep_traps]
    T = len(keep_traps)
    H = Rs.eval_points(W)  # (T, r)
    order = np.argsort(H, axis=1, kind="stable")  # ties fall to ascending id
    Hs = np.take_along_axis(H, order, axis=1)
    kmax = min(L, r)
    levels = np.arange(kmax + 1)
    trap_idx = np.repeat(keep_traps, kmax + 1)
    local_trap = np.repeat(np.arange(T), kmax + 1)
    level = np.tile(levels, T)
    ids_sorted = np.asarray(Rs.ids)[order]  # (T, r)
    bot_id = np.where(level == 0, F_NEG_INF,
                      ids_sorted[local_trap, np.maximum(level - 1, 0)])
    top_id = np.where(level == r, F_INF,
                      ids_sorted[local_trap, np.minimum(level, r - 1)])
    neg = np.full(T * (kmax + 1), -np.inf)
    zbot = np.where(level == 0, neg, Hs[local_trap, np.maximum(level - 1, 0)])
    ztop = np.where(level == r, -neg, Hs[local_trap, np.minimum(level, r - 1)])
    wx = W[local_trap, 0]
    wy = W[local_trap, 1]
    pad = 1.0 + 0.05 * R.zscale
    wz = np.where(np.isinf(zbot), ztop - pad,
                  np.where(np.isinf(ztop), zbot + pad, 0.5 * (zbot + ztop)))
    return VDLevels(R, L, bbox, dec, Rs, trap_idx, level, bot_id.astype(np.int64),
                    top_id.astype(np.int64), zbot, ztop, wx, wy, wz, arcs)


# -- refinement support -------------------------------------------------------


def vd_clipped(Fp: SurfaceSet, prism: Prism, lookup: SurfaceSet | None = None,
               bbox: Bbox | None = None) -> list[Prism]:
    """Vertical decomposition of Fp clipped inside the prism.

    Children tile the parent exactly: the overlay of all pairwise
    bisectors among Fp plus the parent's top/bottom surfaces, restricted
    to the parent's footprint, with stacks cut at the parent's faces.
    ``lookup`` resolves the parent's face ids when they are not in Fp.
    """
    lookup = lookup if lookup is not None else Fp
    bbox = bbox or lookup.bbox
    tol = lookup.tol
    if len(Fp) == 0:
        return [prism]
    trap = prism.trapezoid
    allsurf: list[Surface] = [Fp.surface(int(s)) for s in Fp.ids]
    for sid in (prism.bottom_surf, prism.top_surf):
        if sid >= 0 and all(s.id != sid for s in allsurf):
            allsurf.append(lookup.surface(sid))
    local_arcs: list[Arc] = []
    for arc in (trap.bottom_arc, trap.top_arc):
        if arc is not None:
            local_arcs.append(arc)
    for i in range(len(allsurf)):
        for j in range(i + 1, len(allsurf)):
            try:
                local_arcs.extend(bisector_arcs(allsurf[i], allsurf[j], bbox, tol))
            except DegenerateBisector:
                continue
    dec = _sweep.trapezoidalize(local_arcs, bbox, tol,
                                x_range=(trap.x_left, trap.x_right))
    zeps = tol.eps * max(1.0, lookup.zscale)
    zpad = 1.0 + 0.05 * lookup.zscale
    children: list[Prism] = []
    for c in range(len(dec)):
        wxy = dec.witness(c)
        if wxy is None or not _between_arcs(trap, wxy):
            continue
        zb = _surface_height_or(lookup, prism.bottom_surf, wxy, -math.inf)
        zt = _surface_height_or(lookup, prism.top_surf, wxy, math.inf)
        hs = Fp.eval_at(wxy)
        inside = (hs > zb + zeps) & (hs < zt - zeps)
        order = np.argsort(hs, kind="stable")
        stack_ids = [int(Fp.ids[k]) for k in order if inside[k]]
        stack_zs = [float(hs[k]) for k in order if inside[k]]
        bounds_ids = [prism.bottom_surf] + stack_ids + [prism.top_surf]
        bounds_zs = [zb] + stack_zs + [zt]
        child_trap = trapezoid_of(dec, c)
        for j in range(len(bounds_ids) - 1):
            lo_z, hi_z = bounds_zs[j], bounds_zs[j + 1]
            if math.isinf(lo_z) and math.isinf(hi_z):
                wz = 0.0
            elif math.isinf(lo_z):
                wz = hi_z - zpad
            elif math.isinf(hi_z):
                wz = lo_z + zpad
            else:
                wz = 0.5 * (lo_z + hi_z)
            children.append(Prism(
                trapezoid=child_trap,
                top_surf=bounds_ids[j + 1],
                bottom_surf=bounds_ids[j],
                level=prism.level,
                witness=(wxy[0], wxy[1], wz),
                origin=prism.origin + ("refined", c, j),
            ))
    return children


def _between_arcs(trap: Trapezoid, p) -> bool:
    x, y = p
    if trap.bottom_arc is not None and y < float(trap.bottom_arc.y_at(x)):
        return False
    if trap.top_arc is not None and y > float(trap.top_arc.y_at(x)):
        return False
    return True


def _surface_height_or(fs: SurfaceSet, sid: int, p, default: float) -> float:
    if sid < 0:
        return default
    return fs.surface(sid).eval(p)
