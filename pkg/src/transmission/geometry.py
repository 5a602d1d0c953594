"""Structured unit-square meshes with an embedded interface polyline.

The computational domain is the unit square split into two open pieces by a
polyline interface (a horizontal segment or a snapped Koch prefractal).  The
interface carries its own measure: positive nodal weights approximating an
arc-length or self-similar mass distribution of prescribed dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Invalid geometry request (interface touching the boundary, bad y0, ...)."""


class ResolutionError(GeometryError):
    """Interface features finer than the mesh can resolve."""


class MeasureError(GeometryError):
    """Degenerate interface measure (zero-length edge, nonpositive weight)."""


#: Hausdorff dimension of the Koch curve, ln 4 / ln 3.
KOCH_DIMENSION = math.log(4.0) / math.log(3.0)


@dataclass(frozen=True)
class Segment:
    """Horizontal interface through y = y0, spanning the full square width."""

    y0: float = 0.5


@dataclass(frozen=True)
class KochPrefractal:
    """Koch prefractal of the given level on the baseline y = y0, bumps up."""

    level: int = 1
    y0: float = 0.5


InterfaceSpec = Segment | KochPrefractal


@dataclass
class MeshedDomain:
    """Conforming triangulation of the unit square with a tagged boundary
    and an embedded interface.

    ``interface_nodes`` are the measure-carrying vertices, ordered along the
    interface.  For a segment they are the whole mesh row; for a Koch
    prefractal they are the prefractal vertices snapped to the grid, and the
    geometric separation is realized by ``interface_cut_edges``, the mesh
    edges between the triangle classes above and below the snapped polyline.
    """

    n: int
    vertices: np.ndarray          # (N, 2) float
    triangles: np.ndarray         # (T, 3) int
    boundary_edges: np.ndarray    # (B, 2) int
    boundary_tags: np.ndarray     # (B,) '<U10', 'dirichlet' or 'neumann'
    interface_nodes: np.ndarray   # (K,) int, ordered along the interface
    interface_cut_edges: np.ndarray  # (E, 2) int, mesh edges forming the cut
    interface: InterfaceSpec = field(default_factory=Segment)
    dirichlet_side: str = "left"

    @property
    def domain_area(self) -> float:
        return float(np.sum(triangle_areas(self.vertices, self.triangles)))

    def dirichlet_vertices(self) -> np.ndarray:
        """Sorted vertex indices lying on Dirichlet-tagged boundary edges."""
        mask = self.boundary_tags == "dirichlet"
        if not mask.any():
            return np.empty(0, dtype=int)
        return np.unique(self.boundary_edges[mask].ravel())

    def vertex_index(self, i: int, j: int) -> int:
        return j * (self.n + 1) + i


@dataclass
class InterfaceMeasure:
    """Weighted interface nodes approximating a d-dimensional mass on the
    interface, together with the underlying polyline and per-segment mass
    (needed for ball-overlap diagnostics)."""

    node_positions: np.ndarray   # (K, 2)
    weights: np.ndarray          # (K,) > 0
    dim_d: float
    segment_mass: np.ndarray     # (K-1,) mass carried by each polyline edge

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * np.abs(
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def _koch_vertices(level: int) -> np.ndarray:
    """Vertices of the level-L Koch prefractal on the base segment (0,0)-(1,0),
    bumps toward +y.  Returns (4^L + 1, 2)."""
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    cos60, sin60 = 0.5, math.sqrt(3.0) / 2.0
    for _ in range(level):
        out = [pts[0]]
        for a, b in zip(pts[:-1], pts[1:]):
            d = (b - a) / 3.0
            p1 = a + d
            p3 = a + 2.0 * d
            # apex: rotate the middle third by +60 degrees around p1
            p2 = p1 + np.array([cos60 * d[0] - sin60 * d[1],
                                sin60 * d[0] + cos60 * d[1]])
            out.extend([p1, p2, p3, b])
        pts = np.array(out)
    return pts


def _points_below_polyline(points: np.ndarray, polyline: np.ndarray,
                           y0: float) -> np.ndarray:
    """Even-odd test: which points lie in the region bounded below the
    interface polyline (polyline runs from (0, y0) to (1, y0))."""
    # closed region: bottom side, right side up to (1, y0), then back along
    # the interface to (0, y0); the closing edge down to (0, 0) is implicit
    poly = np.vstack([
        np.array([[0.0, 0.0], [1.0, 0.0], [1.0, y0]]),
        polyline[::-1][1:],
    ])
    inside = np.zeros(len(points), dtype=bool)
    x, y = points[:, 0], points[:, 1]
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    for k in range(len(poly)):
        x0, yy0, x1, yy1 = px[k], py[k], qx[k], qy[k]
        if yy0 == yy1:
            continue
        cond = (yy0 <= y) != (yy1 <= y)
        xint = x0 + (y - yy0) * (x1 - x0) / (yy1 - yy0)
        inside ^= cond & (x < xint)
    return inside


def _segments_intersect(a0, a1, b0, b1) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(a0, a1, b0)
    d2 = orient(a0, a1, b1)
    d3 = orient(b0, b1, a0)
    d4 = orient(b0, b1, a1)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def build_square_mesh(n: int, interface: InterfaceSpec,
                      dirichlet_side: str = "left") -> MeshedDomain:
    """Triangulate the unit square with n subdivisions per side and embed the
    interface so that its vertices are mesh vertices.

    dirichlet_side selects the Dirichlet part of the boundary:
    one of 'left', 'right', 'bottom', 'top', 'all', 'none'.
    """
    if n < 2:
        raise GeometryError(f"subdivision count n={n} too small (need n >= 2)")
    if dirichlet_side not in ("left", "right", "bottom", "top", "all", "none"):
        raise GeometryError(f"unknown dirichlet_side {dirichlet_side!r}")

    h = 1.0 / n
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))   # lower, diagonal a-c
            tris.append((a, c, d))   # upper
    triangles = np.array(tris, dtype=int)

    bedges, btags = [], []
    for i in range(n):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        btags.append("bottom")
        bedges.append((vid(i, n), vid(i + 1, n)))
        btags.append("top")
        bedges.append((vid(0, i), vid(0, i + 1)))
        btags.append("left")
        bedges.append((vid(n, i), vid(n, i + 1)))
        btags.append("right")
    boundary_edges = np.array(bedges, dtype=int)
    if dirichlet_side == "all":
        tags = np.full(len(btags), "dirichlet")
    elif dirichlet_side == "none":
        tags = np.full(len(btags), "neumann")
    else:
        tags = np.where(np.array(btags) == dirichlet_side, "dirichlet", "neumann")
    boundary_tags = tags.astype("<U10")

    # interface row index; the baseline must be an interior mesh row
    if isinstance(interface, Segment):
        y0 = interface.y0
    elif isinstance(interface, KochPrefractal):
        if interface.level < 0:
            raise GeometryError("Koch level must be >= 0")
        y0 = interface.y0
    else:
        raise GeometryError(f"unknown interface type {interface!r}")
    if not (0.0 < y0 < 1.0):
        raise GeometryError(f"interface baseline y0={y0} touches the boundary")
    j0 = int(round(y0 * n))
    if j0 <= 0 or j0 >= n:
        raise GeometryError(
            f"interface baseline y0={y0} snaps onto the boundary at n={n}"
        )

    if isinstance(interface, Segment) or interface.level == 0:
        iface_nodes = np.array([vid(i, j0) for i in range(n + 1)], dtype=int)
        cut = np.array([(vid(i, j0), vid(i + 1, j0)) for i in range(n)], dtype=int)
    else:
        L = interface.level
        if 3.0 ** (-L) < h:
            raise ResolutionError(
                f"Koch level {L} has polyline edges of length 3^-{L} shorter "
                f"than the mesh edge 1/{n}"
            )
        pts = _koch_vertices(L)
        pts = pts + np.array([0.0, y0])
        if pts[:, 1].max() >= 1.0 - h or pts[:, 1].min() <= h:
            raise GeometryError("Koch interface touches the outer boundary")
        gnodes = np.rint(pts * n).astype(int)
        if len(np.unique(gnodes[:, 0] * (n + 1) + gnodes[:, 1])) != len(gnodes):
            raise ResolutionError(
                "distinct Koch vertices snap to the same mesh vertex; increase n"
            )
        interior = gnodes[1:-1]
        if (interior[:, 0] <= 0).any() or (interior[:, 0] >= n).any() \
                or (gnodes[:, 1] <= 0).any() or (gnodes[:, 1] >= n).any():
            raise GeometryError("Koch interface touches the outer boundary")
        snapped = gnodes.astype(float) / n
        for a in range(len(snapped) - 1):
            for b in range(a + 2, len(snapped) - 1):
                if _segments_intersect(snapped[a], snapped[a + 1],
                                       snapped[b], snapped[b + 1]):
                    raise ResolutionError(
                        "snapped interface polyline self-intersects; increase n"
                    )
        # split triangles into the regions below/above the snapped polyline;
        # the cut is the set of mesh edges separating the two classes
        centroids = vertices[triangles].mean(axis=1)
        below = _points_below_polyline(centroids, snapped, j0 * h)
        owners: dict[tuple[int, int], list[int]] = {}
        for t, (a, b, c) in enumerate(triangles):
            for e in ((a, b), (b, c), (c, a)):
                owners.setdefault(tuple(sorted(e)), []).append(t)
        cut_list = [e for e, ts in owners.items()
                    if len(ts) == 2 and below[ts[0]] != below[ts[1]]]
        cut = np.array(sorted(cut_list), dtype=int)
        iface_nodes = np.array([vid(i, j) for i, j in gnodes], dtype=int)

    return MeshedDomain(
        n=n,
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary_edges,
        boundary_tags=boundary_tags,
        interface_nodes=iface_nodes,
        interface_cut_edges=cut,
        interface=interface,
        dirichlet_side=dirichlet_side,
    )


def build_interface_measure(mesh: MeshedDomain, interface: InterfaceSpec | None = None,
                            total_mass: float = 1.0) -> InterfaceMeasure:
    """Nodal weights for the interface measure.

    Segment: arc-length (trapezoidal) weights, dimension d = 1, total mass =
    interface length.  Koch prefractal of level L: dimension d = ln4/ln3 and
    each of the 4^L elementary segments carries mass total_mass / 4^L, split
    half-and-half onto its endpoints.
    """
    if interface is None:
        interface = mesh.interface
    pos = mesh.vertices[mesh.interface_nodes]
    seg_len = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    if (seg_len <= 0.0).any():
        raise MeasureError("zero-length interface polyline edge")

    if isinstance(interface, Segment) or interface.level == 0:
        d = 1.0
        seg_mass = seg_len.copy()
    else:
        d = KOCH_DIMENSION
        seg_mass = np.full(len(seg_len), total_mass / len(seg_len))

    w = np.zeros(len(pos))
    w[:-1] += 0.5 * seg_mass
    w[1:] += 0.5 * seg_mass
    if (w <= 0.0).any():
        raise MeasureError("nonpositive interface weight")
    return InterfaceMeasure(node_positions=pos, weights=w, dim_d=d,
                            segment_mass=seg_mass)


def _ball_polyline_mass(measure: InterfaceMeasure, center: np.ndarray,
                        r: float) -> float:
    """Mass of the interface inside the closed ball B(center, r), computed
    from exact chord overlaps with each polyline edge (mass uniform per edge)."""
    a = measure.node_positions[:-1]
    b = measure.node_positions[1:]
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    # parameter interval of |a + t d - c| <= r, clipped to [0, 1]
    f = a - center
    B = np.einsum("ij,ij->i", f, d)
    C = np.einsum("ij,ij->i", f, f) - r * r
    disc = B * B - L2 * C
    ok = disc > 0.0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = np.clip((-B - sq) / L2, 0.0, 1.0)
    t1 = np.clip((-B + sq) / L2, 0.0, 1.0)
    overlap = np.where(ok, t1 - t0, 0.0)
    return float(np.sum(overlap * measure.segment_mass))


def ahlfors_upper_check(measure: InterfaceMeasure, n_samples: int,
                        radii: list[float], seed: int = 0) -> float:
    """Empirical upper-regularity diagnostic: the maximum of
    mass(B(x, r)) / r^d over sampled interface centers x and the given radii.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    radii = list(radii)
    if not radii:
        return 0.0
    if any(r <= 0.0 or r > 1.0 for r in radii):
        raise ValueError("radii must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    k = len(measure.node_positions)
    idx = rng.choice(k, size=min(n_samples, k), replace=False)
    worst = 0.0
    for i in idx:
        c = measure.node_positions[i]
        for r in radii:
            ratio = _ball_polyline_mass(measure, c, r) / r ** measure.dim_d
            worst = max(worst, ratio)
    return worst


def count_interface_components(mesh: MeshedDomain) -> int:
    """Number of connected components of the triangle adjacency graph once
    the interface cut edges are removed (flood fill)."""
    cut = {tuple(sorted(e)) for e in mesh.interface_cut_edges}
    edge_owner: dict[tuple[int, int], list[int]] = {}
    for t, (a, b, c) in enumerate(mesh.triangles):
        for e in ((a, b), (b, c), (c, a)):
            edge_owner.setdefault(tuple(sorted(e)), []).append(t)
    adj: list[list[int]] = [[] for _ in range(len(mesh.triangles))]
    for e, owners in edge_owner.items():
        if len(owners) == 2 and e not in cut:
            adj[owners[0]].append(owners[1])
            adj[owners[1]].append(owners[0])
    seen = np.zeros(len(mesh.triangles), dtype=bool)
    comps = 0
    for start in range(len(mesh.triangles)):
        if seen[start]:
            continue
        comps += 1
        stack = [start]
        seen[start] = True
        while stack:
            t = stack.pop()
            for u in adj[t]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
    return comps


def export_mesh_csv(mesh: MeshedDomain, out_dir) -> None:
    """Plain-text mesh export: vertices.csv, triangles.csv, boundary_edges.csv."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "vertices.csv", "w") as fh:
        fh.write("vertex,x,y\n")
        for k, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{k},{float(x)!r},{float(y)!r}\n")
    with open(out / "triangles.csv", "w") as fh:
        fh.write("triangle,v0,v1,v2\n")
        for k, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{k},{a},{b},{c}\n")
    with open(out / "boundary_edges.csv", "w") as fh:
        fh.write("v0,v1,tag\n")
        for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{a},{b},{tag}\n")


def export_measure_csv(mesh: MeshedDomain, measure: InterfaceMeasure, path) -> None:
    """Interface measure export: node id, position and weight per row."""
    with open(path, "w") as fh:
        fh.write("node,x,y,w\n")
        for k, ((x, y), w) in enumerate(zip(measure.node_positions, measure.weights)):
            fh.write(f"{mesh.interface_nodes[k]},{float(x)!r},{float(y)!r},{float(w)!r}\n")
