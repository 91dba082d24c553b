"""Known environment geometry: obstacles, grid, geodesic distance fields.

The workspace is a rectangle with convex polygonal obstacles.  Free/blocked
queries treat every boundary (workspace edge or obstacle edge) as blocked.
A regular grid over the rectangle supports Dijkstra distance fields used to
bias control sampling; confidence ellipses of landmark beliefs can be
stamped onto that grid as temporary ("virtual") obstacles.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon, box

__all__ = [
    "Workspace",
    "GeodesicField",
    "GoalBlockedError",
    "chi2_quantile_2d",
    "virtual_obstacles_for_transition",
]

SQRT2 = math.sqrt(2.0)


class GoalBlockedError(ValueError):
    pass


def chi2_quantile_2d(p):
    """Quantile of the chi-square distribution with 2 dof (closed form)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"confidence level must be in [0, 1), got {p}")
    return -2.0 * math.log1p(-p)


class GeodesicField:
    """Grid of shortest-path distances (meters) to one goal cell.

    8-connected over free cells, straight moves cost one resolution,
    diagonal moves cost sqrt(2) resolutions.  Blocked or unreachable
    cells hold inf.
    """

    def __init__(self, dist, goal_cell, origin, resolution):
        self.dist = dist            # (nx, ny) float array
        self.goal_cell = goal_cell
        self.origin = origin
        self.resolution = resolution
        self._inv_res = 1.0 / resolution
        self._flat = dist.ravel()

    def cell_of(self, point):
        ix = int((point[0] - self.origin[0]) // self.resolution)
        iy = int((point[1] - self.origin[1]) // self.resolution)
        nx, ny = self.dist.shape
        return min(max(ix, 0), nx - 1), min(max(iy, 0), ny - 1)

    def value_at(self, point):
        ix, iy = self.cell_of(point)
        return float(self.dist[ix, iy])

    def values_at(self, xs, ys):
        nx, ny = self.dist.shape
        ix = ((xs - self.origin[0]) * self._inv_res).astype(np.intp)
        iy = ((ys - self.origin[1]) * self._inv_res).astype(np.intp)
        np.minimum(ix, nx - 1, out=ix)
        np.maximum(ix, 0, out=ix)
        np.minimum(iy, ny - 1, out=iy)
        np.maximum(iy, 0, out=iy)
        return self._flat.take(ix * ny + iy)


class Workspace:
    """Rectangle with convex polygonal obstacles and a query grid."""

    def __init__(self, bounds, obstacles=(), grid_resolution=0.25):
        if grid_resolution <= 0:
            raise ValueError("grid_resolution must be positive")
        self.bounds = tuple(float(v) for v in bounds)  # xmin, ymin, xmax, ymax
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"degenerate bounds {bounds}")
        self.resolution = float(grid_resolution)
        self._bounds_poly = box(xmin, ymin, xmax, ymax)
        self.obstacles = [np.asarray(o, dtype=float) for o in obstacles]
        polys = []
        for i, o in enumerate(self.obstacles):
            poly = Polygon(o)
            if not poly.is_valid or poly.area <= 0:
                raise ValueError(f"obstacle {i} is not a valid polygon")
            if not self._bounds_poly.covers(poly):
                raise ValueError(f"obstacle {i} extends outside the workspace bounds")
            polys.append(poly)
        self._obstacle_union = shapely.union_all(polys) if polys else None
        if self._obstacle_union is not None:
            shapely.prepare(self._obstacle_union)

        self.nx = max(1, int(math.ceil((xmax - xmin) / self.resolution)))
        self.ny = max(1, int(math.ceil((ymax - ymin) / self.resolution)))
        cx = xmin + (np.arange(self.nx) + 0.5) * self.resolution
        cy = ymin + (np.arange(self.ny) + 0.5) * self.resolution
        self._cell_x, self._cell_y = cx, cy
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        if self._obstacle_union is not None:
            blocked = shapely.intersects_xy(self._obstacle_union, gx.ravel(), gy.ravel())
            self.free_grid = ~blocked.reshape(self.nx, self.ny)
        else:
            self.free_grid = np.ones((self.nx, self.ny), dtype=bool)
        # cells whose center leaked outside the rectangle (ceil overshoot)
        self.free_grid &= (gx <= xmax) & (gy <= ymax)
        self._field_cache = {}
        # cells whose whole square provably avoids every obstacle: points in
        # them skip the exact geometry test (boundary cells stay exact)
        half = 0.5001 * self.resolution
        clear = np.ones((self.nx, self.ny), dtype=bool)
        if self._obstacle_union is not None:
            boxes = shapely.box(gx.ravel() - half, gy.ravel() - half,
                                gx.ravel() + half, gy.ravel() + half)
            clear = ~shapely.intersects(self._obstacle_union, boxes)
            clear = clear.reshape(self.nx, self.ny)
        self._clear_grid = clear

    # -- free-space queries -------------------------------------------------

    def is_free(self, point):
        """True iff the point is strictly inside bounds and off obstacles."""
        x, y = float(point[0]), float(point[1])
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < x < xmax and ymin < y < ymax):
            return False
        if self._obstacle_union is None:
            return True
        ix = int((x - xmin) * (1.0 / self.resolution))
        iy = int((y - ymin) * (1.0 / self.resolution))
        if ix < self.nx and iy < self.ny and self._clear_grid[ix, iy]:
            return True
        return not shapely.intersects_xy(self._obstacle_union, x, y)

    def segment_free(self, a, b):
        """True iff the whole segment stays inside and clear of obstacles.

        The bounds rectangle is convex, so interior endpoints keep the
        whole chord interior; boundary-touching endpoints are blocked,
        matching is_free.
        """
        ax, ay = float(a[0]), float(a[1])
        bx, by = float(b[0]), float(b[1])
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < ax < xmax and ymin < ay < ymax
                and xmin < bx < xmax and ymin < by < ymax):
            return False
        if self._obstacle_union is None:
            return True
        if math.hypot(bx - ax, by - ay) < 1e-12:
            return not shapely.intersects_xy(self._obstacle_union, ax, ay)
        return not self._obstacle_union.intersects(LineString([(ax, ay), (bx, by)]))

    # -- grid ---------------------------------------------------------------

    def cell_of(self, point):
        ix = int((point[0] - self.bounds[0]) // self.resolution)
        iy = int((point[1] - self.bounds[1]) // self.resolution)
        return min(max(ix, 0), self.nx - 1), min(max(iy, 0), self.ny - 1)

    def cell_center(self, cell):
        return float(self._cell_x[cell[0]]), float(self._cell_y[cell[1]])

    def confidence_ellipse_cells(self, mean, cov, epsilon=0.9):
        """Grid cells inside the epsilon-confidence ellipse of N(mean, cov).

        The cell containing the mean is always included, so epsilon -> 0
        degenerates to that single cell.  A singular covariance falls back
        to the mean cell alone.
        """
        if not 0.0 < epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
        mean = np.asarray(mean, dtype=float)
        cells = {self.cell_of(mean)}
        cov = np.asarray(cov, dtype=float)
        w, v = np.linalg.eigh(0.5 * (cov + cov.T))
        w = np.maximum(w, 0.0)
        if w[0] < 1e-12:  # flat or point distribution
            if w[1] < 1e-12:
                return cells
            w = np.maximum(w, 1e-12)
        q = chi2_quantile_2d(epsilon)
        prec = v @ np.diag(1.0 / w) @ v.T
        half = np.sqrt(np.diag(cov).clip(min=1e-12) * q) + self.resolution
        lo = self.cell_of(mean - half)
        hi = self.cell_of(mean + half)
        xs = self._cell_x[lo[0]:hi[0] + 1]
        ys = self._cell_y[lo[1]:hi[1] + 1]
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        dx = gx - mean[0]
        dy = gy - mean[1]
        md = prec[0, 0] * dx * dx + 2 * prec[0, 1] * dx * dy + prec[1, 1] * dy * dy
        ii, jj = np.nonzero(md <= q)
        cells.update(zip((ii + lo[0]).tolist(), (jj + lo[1]).tolist()))
        return cells

    def geodesic_field(self, goal_point, virtual_obstacle_cells=frozenset()):
        """Dijkstra distance field to the goal cell, with caching.

        Cached per (goal cell, virtual-obstacle set); virtual obstacle
        cells are excluded from the traversable grid in addition to the
        static obstacles.  Raises GoalBlockedError when the goal cell
        itself is not traversable.
        """
        goal_cell = self.cell_of(goal_point)
        if not isinstance(virtual_obstacle_cells, frozenset):
            virtual_obstacle_cells = frozenset(virtual_obstacle_cells)
        key = (goal_cell, virtual_obstacle_cells)
        field = self._field_cache.get(key)
        if field is None:
            field = self._build_field(goal_cell, key[1])
            self._field_cache[key] = field
        return field

    def _build_field(self, goal_cell, vo_cells):
        free = self.free_grid.copy()
        for (ix, iy) in vo_cells:
            if 0 <= ix < self.nx and 0 <= iy < self.ny:
                free[ix, iy] = False
        if not free[goal_cell]:
            raise GoalBlockedError(f"goal cell {goal_cell} is blocked")
        res = self.resolution
        dist = np.full((self.nx, self.ny), np.inf)
        dist[goal_cell] = 0.0
        heap = [(0.0, goal_cell)]
        steps = [(-1, -1, SQRT2 * res), (-1, 0, res), (-1, 1, SQRT2 * res),
                 (0, -1, res), (0, 1, res),
                 (1, -1, SQRT2 * res), (1, 0, res), (1, 1, SQRT2 * res)]
        while heap:
            d, (ix, iy) = heapq.heappop(heap)
            if d > dist[ix, iy]:
                continue
            for dx, dy, c in steps:
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < self.nx and 0 <= jy < self.ny and free[jx, jy]:
                    nd = d + c
                    if nd < dist[jx, jy]:
                        dist[jx, jy] = nd
                        heapq.heappush(heap, (nd, (jx, jy)))
        return GeodesicField(dist, goal_cell, (self.bounds[0], self.bounds[1]), res)


def virtual_obstacles_for_transition(workspace, map_estimate, guard, robot_id,
                                     defs_by_name, epsilon=0.9):
    """Cells a robot should treat as blocked while aiming for a transition.

    Any atom that must stay false under every enabling assignment of
    `guard` and belongs to `robot_id` marks the landmarks that could flip
    it as virtual obstacles (their epsilon-confidence ellipses).  Negated
    conjunctions that need several robots at once never force a single
    atom false, so they contribute nothing here.
    """
    cells = set()
    for name in sorted(guard.required_false_atoms()):
        pdef = defs_by_name.get(name)
        if pdef is None or pdef.robot != robot_id:
            continue
        lm_ids = _landmarks_violating(pdef, map_estimate)
        for lm_id in lm_ids:
            lm = map_estimate.landmark(lm_id)
            cells |= workspace.confidence_ellipse_cells(lm.mean, lm.cov, epsilon)
    return cells


def _landmarks_violating(pdef, map_estimate):
    """Landmarks whose approach could make the given predicate true."""
    kind = pdef.kind
    if kind in ("proximity", "uncertainty"):
        return [pdef.landmark]
    out = []
    if kind == "class_proximity":
        for lm in map_estimate.landmarks:
            if lm.class_prob(pdef.cls) >= 1.0 - pdef.delta:
                out.append(lm.id)
    elif kind == "relaxed_class_proximity":
        for lm in map_estimate.landmarks:
            if lm.top_class() == pdef.cls:
                out.append(lm.id)
    return out
