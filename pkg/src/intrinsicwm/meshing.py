"""Simplicial meshes: uniform construction, quality, refinement, point location.

Supports 1-D interval meshes and 2-D structured triangulations, plus a text
file format and CSV vertex export for plotting.
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import as_float_array


class MeshError(Exception):
    pass


class OutOfDomainError(MeshError):
    pass


class DegenerateSimplexError(MeshError):
    pass


@dataclass(frozen=True)
class MeshQuality:
    delta: float          # mesh width: max simplex diameter
    shape_ratio: float    # min over simplices of inradius / diameter


@dataclass(frozen=True)
class Mesh:
    """Conforming simplicial mesh (segments for d=1, triangles for d=2)."""

    dim: int
    vertices: np.ndarray   # (N, d)
    simplices: np.ndarray  # (M, d+1) vertex indices
    boundary: np.ndarray = field(default=None)  # bool per vertex

    def __post_init__(self):
        v = as_float_array(self.vertices, "vertices")
        if v.ndim == 1:
            v = v[:, None]
        s = np.asarray(self.simplices, dtype=int)
        if self.dim not in (1, 2):
            raise MeshError("only d=1 and d=2 meshes are supported")
        if v.shape[1] != self.dim or s.shape[1] != self.dim + 1:
            raise MeshError("vertex/simplex shapes inconsistent with dim")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "simplices", s)
        if self.boundary is None:
            object.__setattr__(self, "boundary", _boundary_markers(self.dim, v, s))
        used = np.zeros(len(v), dtype=bool)
        used[s.ravel()] = True
        if not used.all():
            raise MeshError("every vertex must belong to at least one simplex")
        if np.any(_measures(self.dim, v, s) <= 0):
            raise DegenerateSimplexError("simplex with nonpositive measure")

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_simplices(self):
        return self.simplices.shape[0]

    def extents(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _boundary_markers(dim, v, s):
    lo, hi = v.min(axis=0), v.max(axis=0)
    tol = 1e-12 * max(1.0, np.abs(hi - lo).max())
    return np.any((np.abs(v - lo) < tol) | (np.abs(v - hi) < tol), axis=1)


def _measures(dim, v, s):
    """Length (d=1) or area (d=2) per simplex, signed for d=2 orientation."""
    if dim == 1:
        return np.abs(v[s[:, 1], 0] - v[s[:, 0], 0])
    a, b, c = v[s[:, 0]], v[s[:, 1]], v[s[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    return np.abs(cross) / 2.0


def _diameters(dim, v, s):
    if dim == 1:
        return _measures(1, v, s)
    a, b, c = v[s[:, 0]], v[s[:, 1]], v[s[:, 2]]
    e = np.stack([
        np.linalg.norm(b - a, axis=1),
        np.linalg.norm(c - b, axis=1),
        np.linalg.norm(a - c, axis=1),
    ])
    return e.max(axis=0)


def build_uniform(d, domain, resolution):
    """Uniform mesh of a box.

    domain: (lo, hi) for d=1 or ((lo1, hi1), (lo2, hi2)) for d=2.
    resolution: node count per axis (>= 2); 2-D cells split along one diagonal
    for deterministic assembly ordering.
    """
    if d == 1:
        lo, hi = float(domain[0]), float(domain[1])
        n = int(resolution if np.isscalar(resolution) else resolution[0])
        if n < 2 or hi <= lo:
            raise MeshError("need resolution >= 2 and positive extent")
        x = np.linspace(lo, hi, n)
        seg = np.column_stack([np.arange(n - 1), np.arange(1, n)])
        return Mesh(1, x[:, None], seg)
    if d == 2:
        (lo1, hi1), (lo2, hi2) = domain
        if np.isscalar(resolution):
            n1 = n2 = int(resolution)
        else:
            n1, n2 = int(resolution[0]), int(resolution[1])
        if n1 < 2 or n2 < 2 or hi1 <= lo1 or hi2 <= lo2:
            raise MeshError("need resolution >= 2 and positive extents")
        xs = np.linspace(lo1, hi1, n1)
        ys = np.linspace(lo2, hi2, n2)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        verts = np.column_stack([X.ravel(), Y.ravel()])
        tris = []
        for i in range(n1 - 1):
            for j in range(n2 - 1):
                v00 = i * n2 + j
                v10 = (i + 1) * n2 + j
                v01 = i * n2 + j + 1
                v11 = (i + 1) * n2 + j + 1
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
        return Mesh(2, verts, np.array(tris))
    raise MeshError("d must be 1 or 2")


def quality(mesh):
    """Mesh width and worst inradius-to-diameter ratio."""
    v, s = mesh.vertices, mesh.simplices
    meas = _measures(mesh.dim, v, s)
    if np.any(meas <= 0):
        raise DegenerateSimplexError("degenerate simplex")
    diam = _diameters(mesh.dim, v, s)
    if mesh.dim == 1:
        ratio = 0.5  # inscribed "ball" of a segment has radius length/2
    else:
        a, b, c = v[s[:, 0]], v[s[:, 1]], v[s[:, 2]]
        per = (np.linalg.norm(b - a, axis=1) + np.linalg.norm(c - b, axis=1)
               + np.linalg.norm(a - c, axis=1))
        inradius = 2.0 * meas / per
        ratio = float((inradius / diam).min())
    return MeshQuality(delta=float(diam.max()), shape_ratio=ratio)


def refine(mesh):
    """Uniform refinement by midpoint subdivision (halves the mesh width)."""
    v, s = mesh.vertices, mesh.simplices
    edge_mid = {}
    new_verts = [v]
    next_id = len(v)

    def midpoint(i, j):
        nonlocal next_id
        key = (min(i, j), max(i, j))
        if key not in edge_mid:
            edge_mid[key] = next_id
            new_verts.append((v[i] + v[j]) / 2.0)
            next_id += 1
        return edge_mid[key]

    new_simplices = []
    if mesh.dim == 1:
        for (i, j) in s:
            m = midpoint(i, j)
            new_simplices += [(i, m), (m, j)]
    else:
        for (i, j, k) in s:
            mij, mjk, mki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new_simplices += [(i, mij, mki), (mij, j, mjk),
                              (mki, mjk, k), (mij, mjk, mki)]
    verts = np.vstack([new_verts[0]] + [np.atleast_2d(x) for x in new_verts[1:]]) \
        if len(new_verts) > 1 else new_verts[0]
    return Mesh(mesh.dim, verts, np.array(new_simplices))


def locate(mesh, point, tol=1e-12):
    """Containing simplex and barycentric weights of a point.

    Boundary ties resolve to the lowest simplex index; raises OutOfDomainError
    when the point is outside the domain closure (beyond tolerance).
    """
    p = np.atleast_1d(np.asarray(point, dtype=float))
    v, s = mesh.vertices, mesh.simplices
    scale = max(1.0, np.abs(v).max())
    if mesh.dim == 1:
        x = p[0]
        a = v[s[:, 0], 0]
        b = v[s[:, 1], 0]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        inside = (x >= lo - tol * scale) & (x <= hi + tol * scale)
        idx = np.nonzero(inside)[0]
        if idx.size == 0:
            raise OutOfDomainError(f"point {x} outside the mesh domain")
        i = int(idx[0])
        h = b[i] - a[i]
        t = (x - a[i]) / h
        t = min(max(t, 0.0), 1.0)
        return i, np.array([1.0 - t, t])
    a, b, c = v[s[:, 0]], v[s[:, 1]], v[s[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    w1 = ((b[:, 0] - p[0]) * (c[:, 1] - p[1]) - (b[:, 1] - p[1]) * (c[:, 0] - p[0])) / det
    w2 = ((c[:, 0] - p[0]) * (a[:, 1] - p[1]) - (c[:, 1] - p[1]) * (a[:, 0] - p[0])) / det
    w3 = 1.0 - w1 - w2
    W = np.column_stack([w1, w2, w3])
    inside = np.all(W >= -tol * scale - 1e-12, axis=1)
    idx = np.nonzero(inside)[0]
    if idx.size == 0:
        raise OutOfDomainError(f"point {tuple(p)} outside the mesh domain")
    i = int(idx[0])
    w = np.clip(W[i], 0.0, None)
    return i, w / w.sum()


# -- file formats -----------------------------------------------------------

def write_mesh(mesh, path):
    """Text format: dim, vertex block, simplex block (1-based indices)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"dim {mesh.dim}\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for row in mesh.vertices:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        fh.write(f"simplices {mesh.n_simplices}\n")
        for row in mesh.simplices:
            fh.write(" ".join(str(int(i) + 1) for i in row) + "\n")


def read_mesh(path):
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    pos = 0

    def expect(word):
        nonlocal pos
        if tokens[pos] != word:
            raise MeshError(f"malformed mesh file: expected {word!r} at token {pos}")
        pos += 1

    expect("dim")
    d = int(tokens[pos]); pos += 1
    expect("vertices")
    nv = int(tokens[pos]); pos += 1
    verts = np.array(tokens[pos:pos + nv * d], dtype=float).reshape(nv, d)
    pos += nv * d
    expect("simplices")
    ns = int(tokens[pos]); pos += 1
    simp = np.array(tokens[pos:pos + ns * (d + 1)], dtype=int).reshape(ns, d + 1) - 1
    return Mesh(d, verts, simp)


def export_vertices_csv(mesh, path):
    header = ",".join(f"x{i+1}" for i in range(mesh.dim))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in mesh.vertices:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
