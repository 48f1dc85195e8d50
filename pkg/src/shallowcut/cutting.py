"""Shallow-cutting pipeline: select AD, refine into RD, build SC.

AD(R) holds the prisms of the level-restricted vertical decomposition
lying fully above at most n/r surfaces of F.  Heavy prisms (conflicting
with more than n/r surfaces) are refined by random resampling of their
conflict lists; the surviving pieces' top faces form an upper envelope
whose trapezoids, extended downward, are the disjoint semi-unbounded
cells of the cutting.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import _sweep
from .predicates import Tolerance
from .surfaces import (
    Arc,
    Bbox,
    DegenerateBisector,
    FAMILY_PLANE,
    SurfaceSet,
    arc_from_json_dict,
    bisector_arcs,
    rng_for,
)
from .vdecomp import (
    F_INF,
    F_NEG_INF,
    Prism,
    Region,
    Trapezoid,
    VDLevels,
    _bound_heights,
    _conflict_mask_planes,
    _surf_heights,
    build_vd_leq,
    conflict_mask,
    dips_below_mask,
    fully_below_mask,
    trapezoid_of,
    vd_clipped,
)

DEFAULT_LEVEL_CAP = 8  # constant start; verification grows it on demand


class RefinementDiverged(RuntimeError):
    """Resampling never produced light children; degenerate input or eps."""


class InclusionFailed(RuntimeError):
    """Paper-faithful mode: the fixed-cap decomposition missed AD prisms."""


@dataclass
class CuttingConfig:
    n: int
    r: int
    level_cap_init: int | None = None
    level_growth: float = 2.0
    refine_sample_factor: float = 2.0
    refine_retry_cap: int = 50
    rng_seed: int = 0
    paper_faithful_resample: bool = False

    def __post_init__(self):
        if not 1 <= self.r <= self.n:
            raise ValueError("need 1 <= r <= n")
        if self.level_growth <= 1 or self.refine_sample_factor <= 0:
            raise ValueError("growth factors must be positive")

    @property
    def nr_floor(self) -> int:
        return self.n // self.r

    @property
    def level_cap(self) -> int:
        if self.level_cap_init is not None:
            return self.level_cap_init
        if self.paper_faithful_resample:
            return int(30 * math.log2(max(self.n, 2)))
        return DEFAULT_LEVEL_CAP


@dataclass
class RefineStats:
    heavy_prisms: int = 0
    total_retries: int = 0
    histogram: dict[int, int] = field(default_factory=dict)

    def record(self, retries: int) -> None:
        self.heavy_prisms += 1
        self.total_retries += retries
        self.histogram[retries] = self.histogram.get(retries, 0) + 1

    @property
    def mean_retries(self) -> float:
        return self.total_retries / self.heavy_prisms if self.heavy_prisms else 0.0


@dataclass
class Cell:
    """One downward semi-unbounded cell of the cutting."""

    trapezoid: Trapezoid
    top_surf: int  # surface id or F_INF
    conflicts: list[int] | None
    origin: tuple


class ShallowCutting:
    """Disjoint downward semi-unbounded prisms covering the (<= n/r)-level."""

    def __init__(self, r: int, n: int, family: str, bbox: Bbox, cells: list[Cell],
                 level_cap_used: int, refine_stats: RefineStats,
                 ad_size: int, rd_size: int):
        self.r = r
        self.n = n
        self.family = family
        self.bbox = bbox
        self.cells = cells
        self.level_cap_used = level_cap_used
        self.refine_stats = refine_stats
        self.ad_size = ad_size
        self.rd_size = rd_size
        self._slab_xs: np.ndarray | None = None
        self._slab_cells: list[list[int]] | None = None

    def __len__(self) -> int:
        return len(self.cells)

    # -- point location ----------------------------------------------------

    def _build_locator(self) -> None:
        xs = sorted({float(c.trapezoid.x_left) for c in self.cells}
                    | {float(c.trapezoid.x_right) for c in self.cells})
        self._slab_xs = np.array(xs)
        slabs: list[list[int]] = [[] for _ in range(max(len(xs) - 1, 1))]
        for ci, c in enumerate(self.cells):
            i0 = bisect_right(xs, c.trapezoid.x_left) - 1
            i1 = bisect_right(xs, c.trapezoid.x_right - 1e-300) - 1
            for s in range(max(i0, 0), min(i1 + 1, len(slabs))):
                if xs[s] >= c.trapezoid.x_left - 1e-300 and xs[s] < c.trapezoid.x_right:
                    slabs[s].append(ci)
        for s, lst in enumerate(slabs):
            if not lst:
                continue
            xm = 0.5 * (xs[s] + xs[s + 1])
            lst.sort(key=lambda ci: self._cell_ybot(ci, xm))
        self._slab_cells = slabs

    def _cell_ybot(self, ci: int, x: float) -> float:
        arc = self.cells[ci].trapezoid.bottom_arc
        return -math.inf if arc is None else float(arc.y_at(x))

    def _cell_ytop(self, ci: int, x: float) -> float:
        arc = self.cells[ci].trapezoid.top_arc
        return math.inf if arc is None else float(arc.y_at(x))

    def locate(self, x: float, y: float) -> int:
        """Cell index containing (x, y); right/upper rule on boundaries."""
        if self._slab_xs is None:
            self._build_locator()
        if not (self.bbox.x0 <= x <= self.bbox.x1 and self.bbox.y0 <= y <= self.bbox.y1):
            raise ValueError("point outside bbox")
        s = int(np.searchsorted(self._slab_xs, x, side="right")) - 1
        s = min(max(s, 0), len(self._slab_cells) - 1)
        order = self._slab_cells[s]
        lo, hi = 0, len(order)
        while lo < hi:
            mid = (lo + hi) // 2
            if self._cell_ytop(order[mid], x) > y:
                hi = mid
            else:
                lo = mid + 1
        if lo >= len(order):
            lo = len(order) - 1
        return order[lo]

    def cells_containing(self, x: float, y: float) -> list[int]:
        """All cells containing the point (for disjointness checks)."""
        if self._slab_xs is None:
            self._build_locator()
        s = int(np.searchsorted(self._slab_xs, x, side="right")) - 1
        s = min(max(s, 0), len(self._slab_cells) - 1)
        out = []
        for ci in self._slab_cells[s]:
            t = self.cells[ci].trapezoid
            if not (t.x_left <= x < t.x_right or
                    (x == t.x_right and x >= self.bbox.x1 - 1e-300)):
                continue
            if self._cell_ybot(ci, x) <= y < self._cell_ytop(ci, x):
                out.append(ci)
        return out

    def top_height_at(self, F: SurfaceSet, ci: int, x: float, y: float) -> float:
        sid = self.cells[ci].top_surf
        if sid == F_INF:
            return math.inf
        return F.surface(sid).eval((x, y))

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        cells = []
        for c in self.cells:
            t = c.trapezoid
            cells.append({
                "x0": t.x_left, "x1": t.x_right,
                "bot": None if t.bottom_arc is None else t.bottom_arc.to_json_dict(),
                "top": None if t.top_arc is None else t.top_arc.to_json_dict(),
                "top_surf": c.top_surf,
                "conflicts": c.conflicts,
            })
        return {"format": "shallowcut-sc-v1", "r": self.r, "n": self.n,
                "family": self.family,
                "bbox": [self.bbox.x0, self.bbox.x1, self.bbox.y0, self.bbox.y1],
                "level_cap_used": self.level_cap_used,
                "ad_size": self.ad_size, "rd_size": self.rd_size,
                "cells": cells}

    @classmethod
    def from_json_dict(cls, d: dict, F: SurfaceSet) -> "ShallowCutting":
        if d.get("format") != "shallowcut-sc-v1":
            raise ValueError("unknown cutting format")
        bbox = Bbox(*d["bbox"])
        cells = []
        for cd in d["cells"]:
            trap = Trapezoid(
                top_arc=None if cd["top"] is None else arc_from_json_dict(cd["top"], F),
                bottom_arc=None if cd["bot"] is None else arc_from_json_dict(cd["bot"], F),
                x_left=cd["x0"], x_right=cd["x1"],
            )
            cells.append(Cell(trap, cd["top_surf"], cd["conflicts"], ()))
        return cls(d["r"], d["n"], d["family"], bbox, cells,
                   d.get("level_cap_used", 0), RefineStats(),
                   d.get("ad_size", 0), d.get("rd_size", 0))


# -- AD selection --------------------------------------------------------------


def _fully_below_count_planes(F: SurfaceSet, region: Region, bot_id: int,
                              eps: float, z_big: float,
                              V: np.ndarray, HV: np.ndarray) -> int:
    if bot_id == F_NEG_INF:
        return 0
    hb = _bound_heights(F, bot_id, V, z_big)
    return int((HV <= hb[:, None] + eps).all(axis=0).sum())


def select_ad(vd: VDLevels, F: SurfaceSet, cfg: CuttingConfig) -> list[Prism]:
    """Prisms of the decomposition lying fully above at most n/r surfaces.

    Fully-below counts are monotone up a column, so each trapezoid stack
    is walked bottom-up until the threshold breaks.  Returned prisms carry
    their conflict lists and below counts.
    """
    nr = cfg.nr_floor
    eps = F.tol.eps * max(1.0, F.zscale)
    z_big = F.z_max
    out: list[Prism] = []
    planes = F.family == FAMILY_PLANE
    n_rows = len(vd)
    row = 0
    while row < n_rows:
        t = int(vd.trap_idx[row])
        end = row
        while end < n_rows and int(vd.trap_idx[end]) == t:
            end += 1
        region = Region.of(vd.trapezoid(t), vd.bbox)
        cols = V = HV = None
        if planes:
            cols = region.columns()
            xs, yb, yt, valid = cols
            V = np.concatenate([np.column_stack([xs, yb]), np.column_stack([xs, yt])])
            HV = _surf_heights(F, V) if valid.any() else None
        for j in range(row, end):
            prism = vd.prism(j)
            if planes and HV is not None:
                flb = _fully_below_count_planes(F, region, prism.bottom_surf,
                                                eps, z_big, V, HV)
                if flb > nr:
                    break
                conf = _conflict_mask_planes(F, region, prism.bottom_surf,
                                             prism.top_surf, eps, z_big,
                                             cols=cols, HV=HV)
            else:
                conf = conflict_mask(F, prism, vd.bbox)
                fb = fully_below_mask(F, prism, vd.bbox, conflicts=conf)
                flb = int(fb.sum())
                if flb > nr:
                    break
            prism.below_count = flb
            prism.conflicts = sorted(int(s) for s in F.ids[conf])
            out.append(prism)
        row = end
    return out


def verify_vd_includes_ad(vd: VDLevels, F: SurfaceSet, cfg: CuttingConfig):
    """Certify AD(R) is inside the level-capped decomposition.

    Passes iff every top face at the cap level lies fully above at least
    ceil(n/r) surfaces of F; vacuous when no prism reaches the cap.
    """
    thresh = math.ceil(cfg.n / cfg.r)
    eps = F.tol.eps * max(1.0, F.zscale)
    z_big = F.z_max
    violations = []
    cap_rows = np.nonzero(vd.level == min(vd.L, len(vd.sample)))[0]
    for row in cap_rows:
        prism = vd.prism(int(row))
        if prism.top_surf == F_INF:
            continue
        region = Region.of(prism.trapezoid, vd.bbox)
        count = _face_fully_above_count(F, region, prism.top_surf, eps, z_big)
        if count < thresh:
            violations.append((int(row), count))
    return (len(violations) == 0, violations)


def _face_fully_above_count(F: SurfaceSet, region: Region, face_id: int,
                            eps: float, z_big: float) -> int:
    """Surfaces (other than the face) weakly below it over the whole region.

    Exact for planes; for cones a certified lower bound (uncertain
    surfaces are not counted, which can only make the inclusion check
    stricter).
    """
    if F.family == FAMILY_PLANE:
        V = region.vertices()
        if len(V) == 0:
            return 0
        HV = _surf_heights(F, V)
        hf = _bound_heights(F, face_id, V, z_big)
        mask = (HV <= hf[:, None] + eps).all(axis=0)
    else:
        mask = None
        for G in (9, 17, 33):
            pts, delta = region.grid(G)
            if len(pts) == 0:
                return 0
            H = _surf_heights(F, pts)
            hf = _bound_heights(F, face_id, pts, z_big)
            d = H - hf[:, None]
            mask = (d <= -2.0 * delta).all(axis=0)
            undecided = (d <= eps).all(axis=0) & ~mask
            if not undecided.any():
                break
    own = F.ids == face_id
    return int((mask & ~own).sum())


# -- refinement ----------------------------------------------------------------


def refine_prism(prism: Prism, F: SurfaceSet, cfg: CuttingConfig,
                 rng=None, stats: RefineStats | None = None) -> list[Prism]:
    """Split a heavy prism until every piece meets few surfaces.

    Resamples a subset of the conflict list until no child conflicts with
    more than |F_conflicts|/t of them, then discards children lying fully
    above more than n/r surfaces.
    """
    if prism.conflicts is None:
        mask = conflict_mask(F, prism, F.bbox)
        prism.conflicts = sorted(int(s) for s in F.ids[mask])
    conf_ids = prism.conflicts
    t = math.ceil(len(conf_ids) * cfg.r / cfg.n)
    if t <= 1:
        return [prism]
    if rng is None:
        rng = rng_for(cfg.rng_seed, 101)
    Fd = F.subset([F.index_of(s) for s in conf_ids]).with_bbox(F.bbox)
    target = min(len(conf_ids), math.ceil(cfg.refine_sample_factor * t * math.log2(t + 1)))
    budget = len(conf_ids) / t
    retries = 0
    for attempt in range(cfg.refine_retry_cap):
        pick = rng.choice(len(conf_ids), size=target, replace=False)
        Fp = Fd.subset(sorted(pick)).with_bbox(F.bbox)
        children = vd_clipped(Fp, prism, lookup=F, bbox=F.bbox)
        masks = [conflict_mask(Fd, ch, F.bbox) for ch in children]
        if max((int(m.sum()) for m in masks), default=0) <= budget:
            break
        retries += 1
    else:
        raise RefinementDiverged(
            f"prism never split below {budget:.1f} conflicts in "
            f"{cfg.refine_retry_cap} attempts")
    if stats is not None:
        stats.record(retries)
    out = []
    for ch, m in zip(children, masks):
        ids = sorted(int(s) for s in Fd.ids[m])
        wx, wy, wz = ch.witness
        hw = F.eval_at((wx, wy))
        below = F.tol.below(hw, wz)
        below_ids = {int(s) for s in F.ids[below]}
        flb = len(below_ids - set(ids))
        if flb > cfg.nr_floor:
            continue
        ch.conflicts = ids
        ch.below_count = flb
        out.append(ch)
    return out


# -- upper envelope ------------------------------------------------------------


def _footprint_key(trap: Trapezoid):
    def arc_key(a: Arc | None):
        if a is None:
            return None
        return (a.surf_lo, a.surf_hi, a.kind, a.branch,
                round(a.x0, 12), round(a.x1, 12))
    return (round(trap.x_left, 12), round(trap.x_right, 12),
            arc_key(trap.bottom_arc), arc_key(trap.top_arc))


def upper_envelope(rd: list[Prism], F: SurfaceSet | None = None,
                   bbox: Bbox | None = None) -> list[tuple[Trapezoid, int, Prism]]:
    """Trapezoids of the upper envelope of the prisms' top faces.

    Prisms are grouped by footprint column (refined children group with
    their parent column); within a column the winner is decided by
    evaluation at a witness, with pairwise top-face bisectors overlaid
    where distinct tops are present.
    """
    if not rd:
        raise ValueError("rd must be nonempty")
    groups: dict[object, list[Prism]] = {}
    for p in rd:
        key = p.origin[0] if p.origin else _footprint_key(p.trapezoid)
        groups.setdefault(key, []).append(p)
    out: list[tuple[Trapezoid, int, Prism]] = []
    for key, members in groups.items():
        refined = [p for p in members if "refined" in p.origin]
        whole = [p for p in members if "refined" not in p.origin]
        if not refined:
            win = _column_winner(members, F)
            out.append((win.trapezoid, win.top_surf, win))
            continue
        out.extend(_envelope_column(members, whole, F, bbox))
    return out


def _column_winner(members: list[Prism], F: SurfaceSet | None) -> Prism:
    top = None
    for p in members:
        if p.top_surf == F_INF:
            return p
        if top is None:
            top = p
            continue
        wx, wy, _ = p.witness
        if F is not None:
            a = F.surface(p.top_surf).eval((wx, wy))
            b = F.surface(top.top_surf).eval((wx, wy))
            if a > b:
                top = p
        elif p.level > top.level:
            top = p
    return top


def _envelope_column(members, whole, F: SurfaceSet, bbox: Bbox):
    """Local overlay for a column containing refined pieces."""
    col_trap = whole[0].trapezoid if whole else None
    if col_trap is None:
        # parent fully refined: recover the parent footprint from any child
        xl = min(p.trapezoid.x_left for p in members)
        xr = max(p.trapezoid.x_right for p in members)
    else:
        xl, xr = col_trap.x_left, col_trap.x_right
    arcs: list[Arc] = []
    seen = set()
    for p in members:
        for a in (p.trapezoid.bottom_arc, p.trapezoid.top_arc):
            if a is not None and id(a) not in seen:
                seen.add(id(a))
                arcs.append(a)
    walls: list[float] = []
    for p in members:
        for xw in (p.trapezoid.x_left, p.trapezoid.x_right):
            if xl < xw < xr:
                walls.append(xw)
    tops = sorted({p.top_surf for p in members if p.top_surf != F_INF})
    for i in range(len(tops)):
        for j in range(i + 1, len(tops)):
            try:
                arcs.extend(bisector_arcs(F.surface(tops[i]), F.surface(tops[j]),
                                          bbox, F.tol))
            except DegenerateBisector:
                continue
    dec = _sweep.trapezoidalize(arcs, bbox, F.tol, walls=walls, x_range=(xl, xr))
    out = []
    for c in range(len(dec)):
        w = dec.witness(c)
        if w is None:
            continue
        best, best_h = None, -math.inf
        for p in members:
            if not _covers(p.trapezoid, w):
                continue
            h = math.inf if p.top_surf == F_INF else F.surface(p.top_surf).eval(w)
            if h > best_h:
                best, best_h = p, h
        if best is None:
            continue
        out.append((trapezoid_of(dec, c), best.top_surf, best))
    return out


def _covers(trap: Trapezoid, p) -> bool:
    x, y = p
    if not (trap.x_left - 1e-12 <= x <= trap.x_right + 1e-12):
        return False
    if trap.bottom_arc is not None and y < float(trap.bottom_arc.y_at(x)) - 1e-12:
        return False
    if trap.top_arc is not None and y > float(trap.top_arc.y_at(x)) + 1e-12:
        return False
    return True


# -- full pipeline -------------------------------------------------------------


def build_shallow_cutting(R: SurfaceSet, F: SurfaceSet, cfg: CuttingConfig,
                          rng=None) -> ShallowCutting:
    """The 1/r shallow cutting of F from the sample R."""
    bbox = F.bbox
    R = R.with_bbox(bbox)
    cap = min(cfg.level_cap, len(R))
    vd = None
    while True:
        vd = build_vd_leq(R, cap, bbox)
        if cap >= len(R):
            break
        ok, _ = verify_vd_includes_ad(vd, F, cfg)
        if ok:
            break
        if cfg.paper_faithful_resample:
            raise InclusionFailed(f"cap {cap} misses AD prisms")
        cap = min(int(math.ceil(cap * cfg.level_growth)), len(R))
    ad = select_ad(vd, F, cfg)
    stats = RefineStats()
    if rng is None:
        rng = rng_for(cfg.rng_seed, 11)
    rd: list[Prism] = []
    for p in ad:
        rd.extend(refine_prism(p, F, cfg, rng=rng, stats=stats))
    env = upper_envelope(rd, F, bbox)
    cells = [Cell(trap, top, ("sc",) + origin.origin) for (trap, top, origin) in env]
    sc = ShallowCutting(cfg.r, cfg.n, F.family, bbox, cells, cap, stats,
                        ad_size=len(ad), rd_size=len(rd))
    attach_conflict_lists(sc, F)
    return sc


class ConflictBoundExceeded(RuntimeError):
    """A cell's conflict list exceeded 2*ceil(n/r): construction bug."""


def attach_conflict_lists(sc: ShallowCutting, F: SurfaceSet) -> ShallowCutting:
    """Store, per cell, all surfaces meeting the region below its top face."""
    eps = F.tol.eps * max(1.0, F.zscale)
    z_big = F.z_max
    bound = 2 * math.ceil(sc.n / sc.r)
    for c in sc.cells:
        region = Region.of(c.trapezoid, sc.bbox)
        mask = dips_below_mask(F, c.top_surf, region, eps, z_big)
        c.conflicts = sorted(int(s) for s in F.ids[mask])
        if len(c.conflicts) > bound and c.top_surf != F_INF:
            raise ConflictBoundExceeded(
                f"cell holds {len(c.conflicts)} > {bound} surfaces")
    return sc


@dataclass
class CuttingReport:
    samples: int
    coverage_violations: int
    disjointness_violations: int
    max_conflict: int
    max_conflict_ratio: float


def verify_cutting(sc: ShallowCutting, F: SurfaceSet, cfg: CuttingConfig,
                   samples: int = 10_000, seed: int = 0) -> CuttingReport:
    """Monte Carlo check of the three cutting conditions.

    (a) each sampled vertical's cell top clears the (floor(n/r)+1)-st
    lowest surface, (c) exactly one cell contains each sample; (b) is
    reported as the max conflict-list size and its ratio to n/r.
    """
    rng = rng_for(seed, 5150)
    pts = sc.bbox.sample(rng, samples)
    kth = cfg.nr_floor  # index of the (floor(n/r)+1)-st lowest height
    coverage = 0
    disjoint = 0
    H = F.eval_points(pts)
    kth_h = np.partition(H, min(kth, len(F) - 1), axis=1)[:, min(kth, len(F) - 1)]
    for i, (x, y) in enumerate(pts):
        hits = sc.cells_containing(x, y)
        if len(hits) != 1:
            if len(hits) == 0:
                coverage += 1
                continue
            disjoint += 1
        ci = hits[0]
        top = sc.top_height_at(F, ci, x, y)
        m = 1e-9 * max(1.0, abs(top))
        if top < kth_h[i] - m:
            coverage += 1
    max_c = max((len(c.conflicts) for c in sc.cells if c.conflicts is not None),
                default=0)
    return CuttingReport(samples, coverage, disjoint, max_c,
                         max_c * sc.r / sc.n)


def save_cutting(sc: ShallowCutting, path) -> None:
    with open(path, "w") as f:
        json.dump(sc.to_json_dict(), f)
        f.write("\n")


def load_cutting(path, F: SurfaceSet) -> ShallowCutting:
    with open(path) as f:
        return ShallowCutting.from_json_dict(json.load(f), F)
