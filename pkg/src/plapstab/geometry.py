"""Convex domains, P1 simplicial meshes, quadrature rules, and measures.

Domains are intervals or strictly convex polygons.  Meshes are uniform
1D grids or fan triangulations refined 4-way; every integral in the
package goes through the fixed element quadrature rules defined here
(4-point Gauss-Legendre on segments, 6-point degree-4 rule on triangles)
weighted by a Lebesgue or Gaussian density.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Domain",
    "Measure",
    "Mesh",
    "Field",
    "make_domain",
    "interval_domain",
    "polygon_domain",
    "lebesgue",
    "gaussian",
    "build_mesh",
    "submesh",
    "integrate",
    "interpolate",
    "zero_trace",
    "write_mesh",
    "read_mesh",
]

# 4-point Gauss-Legendre on [-1, 1]
_GL4_NODES = np.array(
    [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526]
)
_GL4_WEIGHTS = np.array(
    [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538]
)

# 6-point degree-4 triangle rule (barycentric points, weights sum to 1)
_TRI6_A = 0.445948490915965
_TRI6_B = 0.091576213509771
_TRI6_WA = 0.223381589678011
_TRI6_WB = 0.109951743655322
_TRI6_BARY = np.array(
    [
        [1.0 - 2.0 * _TRI6_A, _TRI6_A, _TRI6_A],
        [_TRI6_A, 1.0 - 2.0 * _TRI6_A, _TRI6_A],
        [_TRI6_A, _TRI6_A, 1.0 - 2.0 * _TRI6_A],
        [1.0 - 2.0 * _TRI6_B, _TRI6_B, _TRI6_B],
        [_TRI6_B, 1.0 - 2.0 * _TRI6_B, _TRI6_B],
        [_TRI6_B, _TRI6_B, 1.0 - 2.0 * _TRI6_B],
    ]
)
_TRI6_WEIGHTS = np.array([_TRI6_WA, _TRI6_WA, _TRI6_WA, _TRI6_WB, _TRI6_WB, _TRI6_WB])

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """A bounded convex domain: an interval or a strictly convex polygon."""

    kind: str  # "interval" | "polygon"
    dim: int
    diameter: float
    interval: tuple = None
    vertices: np.ndarray = None

    def spec_dict(self):
        if self.kind == "interval":
            return {"interval": [self.interval[0], self.interval[1]]}
        return {"polygon": self.vertices.tolist()}


def interval_domain(a, b):
    a, b = float(a), float(b)
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise ValueError(f"interval requires a < b, got [{a}, {b}]")
    return Domain(kind="interval", dim=1, diameter=b - a, interval=(a, b))


def polygon_domain(vertices):
    """Validated strictly convex polygon, vertices reordered counterclockwise."""
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise ValueError("polygon needs at least 3 planar vertices")
    if not np.all(np.isfinite(verts)):
        raise ValueError("polygon vertices must be finite")
    scale = np.max(np.abs(verts)) + 1.0
    diffs = verts - np.roll(verts, 1, axis=0)
    if np.any(np.hypot(diffs[:, 0], diffs[:, 1]) <= 1e-14 * scale):
        raise ValueError("polygon has repeated vertices")
    if _signed_area(verts) < 0.0:
        verts = verts[::-1].copy()
    e = np.roll(verts, -1, axis=0) - verts
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    if np.any(cross <= 1e-12 * scale * scale):
        raise ValueError("polygon is not strictly convex")
    d2 = np.sum((verts[:, None, :] - verts[None, :, :]) ** 2, axis=-1)
    return Domain(
        kind="polygon",
        dim=2,
        diameter=float(np.sqrt(d2.max())),
        vertices=verts,
    )


def make_domain(spec):
    """Build a Domain from {"interval": [a, b]} or {"polygon": [[x, y], ...]}."""
    if isinstance(spec, Domain):
        return spec
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError(f"domain spec must be a one-key dict, got {spec!r}")
    if "interval" in spec:
        a, b = spec["interval"]
        return interval_domain(a, b)
    if "polygon" in spec:
        return polygon_domain(spec["polygon"])
    raise ValueError(f"unknown domain spec {spec!r}")


def _signed_area(verts):
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class Measure:
    """Lebesgue or standard Gaussian weight attached to every integral."""

    def __init__(self, kind):
        if kind not in ("lebesgue", "gaussian"):
            raise ValueError(f"unknown measure kind {kind!r}")
        self.kind = kind

    def density(self, points):
        """Density values at an (N, dim) array of points."""
        points = np.atleast_2d(points)
        if self.kind == "lebesgue":
            return np.ones(points.shape[0])
        n = points.shape[1]
        r2 = np.sum(points * points, axis=1)
        return (2.0 * np.pi) ** (-0.5 * n) * np.exp(-0.5 * r2)

    def __repr__(self):
        return f"Measure({self.kind!r})"


def lebesgue():
    return Measure("lebesgue")


def gaussian():
    return Measure("gaussian")


class Mesh:
    """P1 simplicial mesh: segments in 1D, positively oriented triangles in 2D.

    All element geometry used by assembly and quadrature is precomputed:
    `grads[e, i]` is the (constant) gradient of nodal basis i on element e,
    `quad_points[e, q]` / `quad_weights[e, q]` give the physical quadrature
    rule (weights already include the element measure), and `basis` holds
    the reference basis values at the quadrature points.
    """

    def __init__(self, nodes, elements, boundary_mask, level=0):
        self.nodes = np.asarray(nodes, dtype=float)
        if self.nodes.ndim == 1:
            self.nodes = self.nodes[:, None]
        self.elements = np.asarray(elements, dtype=int)
        self.boundary_mask = np.asarray(boundary_mask, dtype=bool)
        self.level = int(level)
        self.dim = self.nodes.shape[1]
        if self.elements.shape[1] != self.dim + 1:
            raise ValueError("element arity does not match mesh dimension")
        if self.boundary_mask.shape[0] != self.nodes.shape[0]:
            raise ValueError("boundary mask size mismatch")
        self.rule = "gauss4" if self.dim == 1 else "tri6"
        self._density_cache = {}
        self._build_geometry()

    def _build_geometry(self):
        xe = self.nodes[self.elements]  # (m, k, dim)
        m = xe.shape[0]
        if self.dim == 1:
            lengths = xe[:, 1, 0] - xe[:, 0, 0]
            if np.any(lengths <= 0):
                raise ValueError("1D elements must be positively oriented (a < b)")
            self.measures = lengths
            self.grads = np.empty((m, 2, 1))
            self.grads[:, 0, 0] = -1.0 / lengths
            self.grads[:, 1, 0] = 1.0 / lengths
            mid = 0.5 * (xe[:, 0, 0] + xe[:, 1, 0])
            half = 0.5 * lengths
            self.quad_points = (mid[:, None] + half[:, None] * _GL4_NODES)[:, :, None]
            self.quad_weights = half[:, None] * _GL4_WEIGHTS[None, :]
            self.basis = np.stack([(1.0 - _GL4_NODES) / 2.0, (1.0 + _GL4_NODES) / 2.0], axis=1)
        else:
            v0, v1, v2 = xe[:, 0], xe[:, 1], xe[:, 2]
            det = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (
                v1[:, 1] - v0[:, 1]
            ) * (v2[:, 0] - v0[:, 0])
            if np.any(det <= 0):
                raise ValueError("triangles must be positively oriented")
            area = 0.5 * det
            self.measures = area
            # grad of barycentric i from the opposite edge (j, k)
            b = np.stack([v1[:, 1] - v2[:, 1], v2[:, 1] - v0[:, 1], v0[:, 1] - v1[:, 1]], axis=1)
            c = np.stack([v2[:, 0] - v1[:, 0], v0[:, 0] - v2[:, 0], v1[:, 0] - v0[:, 0]], axis=1)
            self.grads = np.stack([b, c], axis=2) / (2.0 * area[:, None, None])
            self.quad_points = np.einsum("qk,mkd->mqd", _TRI6_BARY, xe)
            self.quad_weights = area[:, None] * _TRI6_WEIGHTS[None, :]
            self.basis = _TRI6_BARY
        scale = np.max(self.measures)
        if np.any(self.measures <= 1e-14 * scale):
            raise ValueError("mesh contains degenerate elements")
        self.grad_gram = np.einsum("mid,mjd->mij", self.grads, self.grads)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def interior(self):
        return ~self.boundary_mask

    @property
    def h(self):
        """Longest element edge."""
        xe = self.nodes[self.elements]
        if self.dim == 1:
            return float(np.max(self.measures))
        edges = np.concatenate(
            [xe[:, 1] - xe[:, 0], xe[:, 2] - xe[:, 1], xe[:, 0] - xe[:, 2]]
        )
        return float(np.max(np.hypot(edges[:, 0], edges[:, 1])))

    def density_at_quad(self, measure):
        key = measure.kind
        if key not in self._density_cache:
            flat = self.quad_points.reshape(-1, self.dim)
            self._density_cache[key] = measure.density(flat).reshape(self.quad_weights.shape)
        return self._density_cache[key]

    def element_density_integrals(self, measure):
        """Per-element integral of the measure density."""
        return np.sum(self.quad_weights * self.density_at_quad(measure), axis=1)

    def values_at_quad(self, nodal_values):
        """P1 interpolation of nodal values at all quadrature points, (m, q)."""
        return np.einsum("qk,mk->mq", self.basis, nodal_values[self.elements])

    def gradients(self, nodal_values):
        """Per-element constant gradients, (m, dim)."""
        return np.einsum("mkd,mk->md", self.grads, nodal_values[self.elements])

    def node_adjacency(self):
        """Symmetric sparse node-to-node adjacency (shared element edge)."""
        from scipy import sparse

        pairs = []
        k = self.elements.shape[1]
        for i in range(k):
            for j in range(i + 1, k):
                pairs.append(self.elements[:, [i, j]])
        ij = np.concatenate(pairs)
        rows = np.concatenate([ij[:, 0], ij[:, 1]])
        cols = np.concatenate([ij[:, 1], ij[:, 0]])
        data = np.ones(rows.shape[0])
        adj = sparse.coo_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        adj = adj.tocsr()
        adj.data[:] = 1.0
        return adj


@dataclass
class Field:
    """Piecewise-linear function given by one nodal value per mesh node."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError("field needs exactly one value per node")

    @property
    def is_zero_trace(self):
        return bool(np.all(self.values[self.mesh.boundary_mask] == 0.0))

    def at_quad(self):
        return self.mesh.values_at_quad(self.values)

    def gradients(self):
        return self.mesh.gradients(self.values)

    def __call__(self, points):
        """Evaluate at arbitrary points inside the domain (brute-force locate)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        mesh = self.mesh
        if mesh.dim == 1:
            x = pts[:, 0]
            xe = mesh.nodes[mesh.elements][:, :, 0]  # (m, 2)
            out = np.empty(x.shape[0])
            for i, xi in enumerate(x):
                e = np.nonzero((xe[:, 0] <= xi + 1e-13) & (xi - 1e-13 <= xe[:, 1]))[0]
                if e.size == 0:
                    raise ValueError(f"point {xi} outside mesh")
                e = e[0]
                lam = (xi - xe[e, 0]) / (xe[e, 1] - xe[e, 0])
                v = self.values[mesh.elements[e]]
                out[i] = (1.0 - lam) * v[0] + lam * v[1]
            return out
        xe = mesh.nodes[mesh.elements]  # (m, 3, 2)
        v0 = xe[:, 0]
        T = np.stack([xe[:, 1] - v0, xe[:, 2] - v0], axis=2)  # (m, 2, 2)
        det = T[:, 0, 0] * T[:, 1, 1] - T[:, 0, 1] * T[:, 1, 0]
        inv = np.empty_like(T)
        inv[:, 0, 0] = T[:, 1, 1] / det
        inv[:, 0, 1] = -T[:, 0, 1] / det
        inv[:, 1, 0] = -T[:, 1, 0] / det
        inv[:, 1, 1] = T[:, 0, 0] / det
        out = np.empty(pts.shape[0])
        for i, xi in enumerate(pts):
            d = xi - v0  # (m, 2)
            l1 = inv[:, 0, 0] * d[:, 0] + inv[:, 0, 1] * d[:, 1]
            l2 = inv[:, 1, 0] * d[:, 0] + inv[:, 1, 1] * d[:, 1]
            ok = (l1 >= -1e-12) & (l2 >= -1e-12) & (l1 + l2 <= 1.0 + 1e-12)
            e = np.nonzero(ok)[0]
            if e.size == 0:
                raise ValueError(f"point {xi} outside mesh")
            e = e[0]
            v = self.values[mesh.elements[e]]
            out[i] = v[0] * (1.0 - l1[e] - l2[e]) + v[1] * l1[e] + v[2] * l2[e]
        return out


def interpolate(mesh, fn):
    """Nodal interpolant of fn(points) as a Field."""
    vals = np.asarray(fn(mesh.nodes), dtype=float).reshape(mesh.n_nodes)
    return Field(mesh, vals)


def zero_trace(mesh, values):
    """Field with the given values and boundary entries forced to exactly 0."""
    v = np.array(values, dtype=float)
    v[mesh.boundary_mask] = 0.0
    return Field(mesh, v)


def build_mesh(domain, level):
    """Uniform mesh of a Domain: 16 * 2^level segments, or a centroid fan
    with `level` rounds of 4-way refinement."""
    if level < 0:
        raise ValueError("refinement level must be >= 0")
    if domain.kind == "interval":
        a, b = domain.interval
        n = 16 * 2**level
        nodes = np.linspace(a, b, n + 1)
        elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        boundary = np.zeros(n + 1, dtype=bool)
        boundary[0] = boundary[-1] = True
        return Mesh(nodes, elements, boundary, level=level)

    verts = domain.vertices
    nv = verts.shape[0]
    centroid = _polygon_centroid(verts)
    nodes = np.vstack([verts, centroid])
    elements = np.array([[i, (i + 1) % nv, nv] for i in range(nv)], dtype=int)
    for _ in range(level):
        nodes, elements = _refine_triangles(nodes, elements)
    boundary = _on_polygon_boundary(nodes, verts)
    nodes = _project_boundary_nodes(nodes, boundary, verts)
    return Mesh(nodes, elements, boundary, level=level)


def _polygon_centroid(verts):
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


def _refine_triangles(nodes, elements):
    """One round of uniform 4-way refinement with deterministic midpoint order."""
    node_list = [nodes]
    midpoint = {}
    next_id = nodes.shape[0]

    def mid(i, j):
        nonlocal next_id
        key = (i, j) if i < j else (j, i)
        if key not in midpoint:
            midpoint[key] = next_id
            node_list.append(0.5 * (nodes[i] + nodes[j])[None, :])
            next_id += 1
        return midpoint[key]

    new_elems = np.empty((4 * elements.shape[0], 3), dtype=int)
    for t, (a, b, c) in enumerate(elements):
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_elems[4 * t + 0] = (a, ab, ca)
        new_elems[4 * t + 1] = (ab, b, bc)
        new_elems[4 * t + 2] = (ca, bc, c)
        new_elems[4 * t + 3] = (ab, bc, ca)
    return np.vstack(node_list), new_elems


def _on_polygon_boundary(points, verts):
    """Boolean mask: point lies on some polygon edge to within 1e-12."""
    scale = np.max(np.abs(verts)) + 1.0
    mask = np.zeros(points.shape[0], dtype=bool)
    nv = verts.shape[0]
    for i in range(nv):
        a, b = verts[i], verts[(i + 1) % nv]
        e = b - a
        d = points - a
        cross = np.abs(e[0] * d[:, 1] - e[1] * d[:, 0])
        t = (d @ e) / (e @ e)
        on = (cross <= _BOUNDARY_TOL * scale * np.hypot(*e)) & (t >= -1e-12) & (t <= 1.0 + 1e-12)
        mask |= on
    return mask


def _project_boundary_nodes(points, mask, verts):
    """Snap boundary-flagged nodes exactly onto their nearest polygon edge."""
    pts = points.copy()
    nv = verts.shape[0]
    idx = np.nonzero(mask)[0]
    for i in idx:
        best, best_d = None, np.inf
        for k in range(nv):
            a, b = verts[k], verts[(k + 1) % nv]
            e = b - a
            t = np.clip(((pts[i] - a) @ e) / (e @ e), 0.0, 1.0)
            proj = a + t * e
            d = np.hypot(*(pts[i] - proj))
            if d < best_d:
                best, best_d = proj, d
        pts[i] = best
    return pts


def submesh(mesh, element_idx):
    """Mesh induced by a subset of elements.

    Nodes touching an element outside the subset (or boundary nodes of the
    parent) are marked as boundary.  Returns (sub, node_map) where node_map
    sends sub-node indices to parent-node indices.
    """
    element_idx = np.asarray(element_idx, dtype=int)
    if element_idx.size == 0:
        raise ValueError("submesh needs at least one element")
    sub_elems_parent = mesh.elements[element_idx]
    node_map = np.unique(sub_elems_parent)
    renumber = -np.ones(mesh.n_nodes, dtype=int)
    renumber[node_map] = np.arange(node_map.size)
    sub_elems = renumber[sub_elems_parent]

    parent_counts = np.bincount(mesh.elements.ravel(), minlength=mesh.n_nodes)
    sub_counts = np.bincount(sub_elems_parent.ravel(), minlength=mesh.n_nodes)
    cut = sub_counts[node_map] < parent_counts[node_map]
    boundary = mesh.boundary_mask[node_map] | cut
    sub = Mesh(mesh.nodes[node_map], sub_elems, boundary, level=mesh.level)
    return sub, node_map


def integrate(mesh, measure, integrand):
    """Quadrature of an integrand against the measure.

    `integrand` is either a callable evaluated at the (N, dim) quadrature
    points or an array of values already shaped like the quadrature grid.
    """
    w = mesh.quad_weights * mesh.density_at_quad(measure)
    if callable(integrand):
        vals = np.asarray(integrand(mesh.quad_points.reshape(-1, mesh.dim)))
        vals = vals.reshape(w.shape)
    else:
        vals = np.asarray(integrand).reshape(w.shape)
    return float(np.sum(w * vals))


def write_mesh(mesh, path):
    """Text format: header `DIM n NODES k ELEMS m`, coordinates, node-index
    tuples, then one line of 0/1 boundary flags."""
    with open(path, "w") as fh:
        fh.write(f"DIM {mesh.dim} NODES {mesh.n_nodes} ELEMS {mesh.n_elements}\n")
        for row in mesh.nodes:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        for row in mesh.elements:
            fh.write(" ".join(str(int(i)) for i in row) + "\n")
        fh.write(" ".join("1" if b else "0" for b in mesh.boundary_mask) + "\n")


def read_mesh(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "DIM" or header[2] != "NODES" or header[4] != "ELEMS":
            raise ValueError(f"bad mesh header in {path}")
        dim, k, m = int(header[1]), int(header[3]), int(header[5])
        nodes = np.array([[float(t) for t in fh.readline().split()] for _ in range(k)])
        elements = np.array([[int(t) for t in fh.readline().split()] for _ in range(m)])
        flags = np.array([t == "1" for t in fh.readline().split()])
    if nodes.shape != (k, dim) or elements.shape != (m, dim + 1) or flags.shape != (k,):
        raise ValueError(f"inconsistent mesh data in {path}")
    return Mesh(nodes, elements, flags)
