"""Triangulated cross-sections with centroid/principal-axis normalization.

The limit model assumes the section has unit area, centroid at the origin and
vanishing product of inertia; `normalize` enforces that exactly and returns the
second moments used by the effective stiffness.

Mesh file format (plain ASCII):
    line 1:            nv nt
    next nv lines:     x2 x3
    next nt lines:     i j k     (0-based vertex indices)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MeshError

# Degree-2 triangle rule: edge midpoints, weights |T|/3.  Exact for quadratics,
# which covers every geometric moment and P1-strain product assembled here.
_MID_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
_MID_W = np.array([1.0, 1.0, 1.0]) / 3.0


@dataclass
class GeometryReport:
    """Second-moment summary of a (normalized) section."""

    area: float
    centroid: tuple[float, float]
    I2: float          # int x2^2
    I3: float          # int x3^2
    I23: float         # int x2 x3
    mu: float          # polar moment int |x'|^2 = I2 + I3
    scale: float = 1.0  # factor applied by normalize (1/sqrt(raw area))
    angle: float = 0.0  # principal-axis rotation applied by normalize

    def as_dict(self):
        return {
            "area": self.area,
            "centroid": list(self.centroid),
            "I2": self.I2,
            "I3": self.I3,
            "I23": self.I23,
            "mu": self.mu,
            "scale": self.scale,
            "angle": self.angle,
        }


class CrossSectionMesh:
    """P1 triangulation of the section; triangles are kept positively oriented."""

    def __init__(self, nodes, triangles):
        self.nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(triangles, dtype=int).reshape(-1, 3)
        if len(self.nodes) < 3 or len(self.triangles) < 1:
            raise MeshError("mesh needs at least 3 nodes and 1 triangle")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.nodes):
            raise MeshError("triangle index out of range")
        self._orient()
        self._check_degenerate()

    # -- construction helpers ---------------------------------------------

    def _signed_areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def _orient(self):
        s = self._signed_areas()
        flip = s < 0
        if flip.any():
            self.triangles[flip] = self.triangles[flip][:, [0, 2, 1]]

    def _check_degenerate(self):
        a = self._signed_areas()
        scale = max(abs(self.nodes).max(), 1.0)
        if (a <= 1e-14 * scale**2).any():
            bad = int(np.argmin(a))
            raise MeshError(f"degenerate triangle {bad} (area {a[bad]:.3e})")

    # -- bulk properties ----------------------------------------------------

    @property
    def areas(self):
        return self._signed_areas()

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    def quad_points(self):
        """(points (m,3,2), weights (m,3)) of the degree-2 rule, per triangle."""
        p = self.nodes[self.triangles]               # (m, 3, 2)
        pts = np.einsum("qj,mjk->mqk", _MID_BARY, p)
        w = np.outer(self.areas, _MID_W)
        return pts, w

    def moments(self) -> GeometryReport:
        pts, w = self.quad_points()
        x2, x3 = pts[..., 0], pts[..., 1]
        area = float(w.sum())
        c2 = float((w * x2).sum())
        c3 = float((w * x3).sum())
        return GeometryReport(
            area=area,
            centroid=(c2 / area, c3 / area),
            I2=float((w * x2 * x2).sum()),
            I3=float((w * x3 * x3).sum()),
            I23=float((w * x2 * x3).sum()),
            mu=float((w * (x2 * x2 + x3 * x3)).sum()),
        )

    def is_normalized(self, tol: float = 1e-8) -> bool:
        g = self.moments()
        return (
            abs(g.area - 1.0) <= tol
            and abs(g.centroid[0]) <= tol
            and abs(g.centroid[1]) <= tol
            and abs(g.I23) <= tol * g.mu
        )

    def p1_gradients(self):
        """Constant barycentric gradients per triangle: (m, 3 nodes, 2)."""
        p = self.nodes[self.triangles]
        a, b, c = p[:, 0], p[:, 1], p[:, 2]
        det = 2.0 * self.areas
        g = np.empty((len(self.triangles), 3, 2))
        g[:, 0, 0] = b[:, 1] - c[:, 1]
        g[:, 0, 1] = c[:, 0] - b[:, 0]
        g[:, 1, 0] = c[:, 1] - a[:, 1]
        g[:, 1, 1] = a[:, 0] - c[:, 0]
        g[:, 2, 0] = a[:, 1] - b[:, 1]
        g[:, 2, 1] = b[:, 0] - a[:, 0]
        return g / det[:, None, None]

    def boundary_edges(self):
        """Edges owned by exactly one triangle, oriented as in that triangle."""
        edges = {}
        for t in self.triangles:
            for i in range(3):
                e = (int(t[i]), int(t[(i + 1) % 3]))
                key = (min(e), max(e))
                if key in edges:
                    edges.pop(key)
                else:
                    edges[key] = e
        return np.array(sorted(edges.values()), dtype=int).reshape(-1, 2)

    def is_connected(self) -> bool:
        n = len(self.nodes)
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for t in self.triangles:
            a = find(int(t[0]))
            for v in t[1:]:
                b = find(int(v))
                parent[b] = a
        used = np.unique(self.triangles)
        roots = {find(int(i)) for i in used}
        return len(roots) == 1 and len(used) == n


# -- generation -------------------------------------------------------------


def _grid_mesh(nx: int, ny: int, width: float, height: float) -> CrossSectionMesh:
    # Union-jack split: the cell diagonal alternates with (i+j) parity, so an
    # even subdivision count yields a mirror-symmetric triangulation.
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    nodes = np.array([(x, y) for x in xs for y in ys])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return CrossSectionMesh(nodes, tris)


def _disk_mesh(n_rings: int) -> CrossSectionMesh:
    # Ring k carries 6k nodes; sectors are triangulated explicitly so the mesh
    # is invariant under the dihedral symmetries (no Delaunay tie-breaking).
    nodes = [(0.0, 0.0)]
    offsets = [0]
    for k in range(1, n_rings + 1):
        offsets.append(len(nodes))
        r = k / n_rings
        for j in range(6 * k):
            a = 2.0 * math.pi * j / (6 * k)
            nodes.append((r * math.cos(a), r * math.sin(a)))

    def ring_node(k, j):
        if k == 0:
            return 0
        return offsets[k] + (j % (6 * k))

    tris = []
    for s in range(6):
        tris.append((0, ring_node(1, s), ring_node(1, s + 1)))
    for k in range(2, n_rings + 1):
        for s in range(6):
            inner = [ring_node(k - 1, s * (k - 1) + p) for p in range(k)]
            outer = [ring_node(k, s * k + q) for q in range(k + 1)]
            for p in range(k):
                tris.append((inner[p], outer[p], outer[p + 1]))
            for p in range(k - 1):
                tris.append((inner[p], outer[p + 1], inner[p + 1]))
    return CrossSectionMesh(np.array(nodes), tris)


def generate_mesh(shape: str, resolution: int, aspect: float | None = None) -> CrossSectionMesh:
    """Built-in sections: 'disk', 'square', 'rectangle' (needs aspect).

    resolution counts subdivisions (grid cells per side, rings for the disk).
    The raw mesh is not normalized; run `normalize` before solving on it.
    """
    if resolution < 1:
        raise MeshError(f"resolution must be >= 1, got {resolution}")
    if shape == "square":
        return _grid_mesh(resolution, resolution, 1.0, 1.0)
    if shape == "rectangle":
        if aspect is None or aspect <= 0:
            raise MeshError("rectangle needs a positive aspect ratio")
        nx = max(1, round(resolution * aspect))
        return _grid_mesh(nx, resolution, float(aspect), 1.0)
    if shape == "disk":
        return _disk_mesh(resolution)
    raise MeshError(f"unknown section shape {shape!r}")


def load_mesh(path) -> CrossSectionMesh:
    try:
        with open(path) as f:
            tokens = f.read().split()
    except OSError as e:
        raise MeshError(f"cannot read mesh file {path}: {e}") from e
    try:
        nv, nt = int(tokens[0]), int(tokens[1])
        need = 2 + 2 * nv + 3 * nt
        if len(tokens) != need:
            raise ValueError(f"expected {need} tokens, found {len(tokens)}")
        vals = np.array(tokens[2 : 2 + 2 * nv], dtype=float).reshape(nv, 2)
        tris = np.array(tokens[2 + 2 * nv :], dtype=int).reshape(nt, 3)
    except (ValueError, IndexError) as e:
        raise MeshError(f"malformed mesh file {path}: {e}") from e
    return CrossSectionMesh(vals, tris)


def save_mesh(mesh: CrossSectionMesh, path) -> None:
    with open(path, "w") as f:
        f.write(f"{len(mesh.nodes)} {len(mesh.triangles)}\n")
        for x, y in mesh.nodes:
            f.write(f"{x:.17g} {y:.17g}\n")
        for t in mesh.triangles:
            f.write(f"{t[0]} {t[1]} {t[2]}\n")


# -- normalization ------------------------------------------------------------


def normalize(mesh: CrossSectionMesh, tol: float = 1e-12) -> tuple[CrossSectionMesh, GeometryReport]:
    """Translate to the centroid, rotate to principal axes, scale to unit area.

    Returns the new mesh and its geometric report (area 1, zero centroid and
    product moment by construction).
    """
    g = mesh.moments()
    if g.area <= 0.0:
        raise MeshError("zero total area")
    nodes = mesh.nodes - np.array(g.centroid)

    # Central second moments drive the principal-axis angle.
    gc = CrossSectionMesh(nodes, mesh.triangles).moments()
    angle = 0.0
    if abs(gc.I23) > tol * gc.mu:
        angle = 0.5 * math.atan2(2.0 * gc.I23, gc.I2 - gc.I3)
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, s], [-s, c]])
        nodes = nodes @ rot.T

    scale = 1.0 / math.sqrt(g.area)
    out = CrossSectionMesh(nodes * scale, mesh.triangles)
    report = out.moments()
    report.scale = scale
    report.angle = angle
    return out, report


def refine(mesh: CrossSectionMesh) -> CrossSectionMesh:
    """Quadrisect every triangle (nested refinement, same polygonal domain)."""
    nodes = list(map(tuple, mesh.nodes))
    midpoint = {}

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            midpoint[key] = len(nodes)
            nodes.append(tuple(0.5 * (mesh.nodes[i] + mesh.nodes[j])))
        return midpoint[key]

    tris = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return CrossSectionMesh(np.array(nodes), tris)
