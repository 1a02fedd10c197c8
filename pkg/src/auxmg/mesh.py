"""Tetrahedral meshes of box domains.

Meshes are conforming collections of positively oriented tetrahedra.
Structured meshes come from the Kuhn (Freudenthal) subdivision of a
cube grid; genuinely unstructured test meshes are produced by randomly
perturbing interior vertices.
"""

from __future__ import annotations

import itertools

import numpy as np

# the six permutations of (x, y, z) axis steps along the cube diagonal
_KUHN_PATHS = list(itertools.permutations((0, 1, 2)))


class TetMesh:
    """Conforming tetrahedral mesh.

    Attributes
    ----------
    vertices : (nv, 3) float array
    tets : (nt, 4) int array, positively oriented
    boundary_faces : (nb, 3) int array of vertex triples
    boundary_owner : (nb,) int array, owning tet of each boundary face
    """

    def __init__(self, vertices, tets, check=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        tets = np.ascontiguousarray(tets, dtype=np.int64)
        vol = signed_volumes(self.vertices, tets)
        flip = vol < 0
        if np.any(flip):
            tets = tets.copy()
            tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2].copy()
        self.tets = tets
        self.boundary_faces, self.boundary_owner = _boundary_faces(tets, check=check)
        if check:
            vol = signed_volumes(self.vertices, self.tets)
            if np.any(vol <= 0):
                bad = int(np.argmin(vol))
                raise ValueError(f"tet {bad} has nonpositive volume {vol[bad]:g}")

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_tets(self):
        return self.tets.shape[0]

    def volumes(self):
        return signed_volumes(self.vertices, self.tets)

    def edges(self):
        """All unique edges as a (ne, 2) array of sorted vertex pairs."""
        pairs = self.tets[:, _TET_EDGES].reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0)

    def boundary_vertex_mask(self):
        mask = np.zeros(self.num_vertices, dtype=bool)
        mask[self.boundary_faces.ravel()] = True
        return mask

    def __repr__(self):
        return f"TetMesh({self.num_vertices} vertices, {self.num_tets} tets)"


_TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
_TET_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])


def signed_volumes(vertices, tets):
    v = vertices[tets]
    d = v[:, 1:] - v[:, :1]
    return np.linalg.det(d) / 6.0


def _boundary_faces(tets, check=True):
    faces = np.sort(tets[:, _TET_FACES].reshape(-1, 3), axis=1)
    owner = np.repeat(np.arange(len(tets), dtype=np.int64), 4)
    uniq, inv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    if check and np.any(counts > 2):
        raise ValueError("non-conforming mesh: a face is shared by more than 2 tets")
    once = counts[inv] == 1
    return faces[once], owner[once]


def build_cube_mesh(n: int) -> TetMesh:
    """Kuhn subdivision of the unit cube into 6 n^3 tets.

    The (n+1)^3 grid vertices are numbered lexicographically in
    (i, j, k); every subcube splits into the 6 tetrahedra spanned by the
    monotone lattice paths from its lowest to its highest corner, which
    makes neighbouring cubes conform.
    """
    if n < 1:
        raise ValueError("need at least 1 subdivision per axis")
    side = n + 1
    g = np.arange(side)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.stack([X, Y, Z], axis=-1).reshape(-1, 3) / float(n)

    def vid(i, j, k):
        return (i * side + j) * side + k

    tets = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                base = np.array([i, j, k])
                for path in _KUHN_PATHS:
                    corners = [base.copy()]
                    for axis in path:
                        corners.append(corners[-1] + np.eye(3, dtype=int)[axis])
                    tets.append([vid(*c) for c in corners])
    return TetMesh(vertices, np.array(tets, dtype=np.int64))


def refine_uniform(mesh: TetMesh) -> TetMesh:
    """Red refinement: every tet splits into 8 via edge midpoints.

    New vertex count = old vertices + old edges; the interior octahedron
    of each tet is cut along the fixed m02-m13 diagonal.
    """
    edges = mesh.edges()
    nv = mesh.num_vertices
    mid_id = {tuple(e): nv + i for i, e in enumerate(edges)}
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    def m(a, b):
        return mid_id[(a, b) if a < b else (b, a)]

    tets = np.empty((8 * mesh.num_tets, 4), dtype=np.int64)
    for t, (v0, v1, v2, v3) in enumerate(mesh.tets):
        m01, m02, m03 = m(v0, v1), m(v0, v2), m(v0, v3)
        m12, m13, m23 = m(v1, v2), m(v1, v3), m(v2, v3)
        tets[8 * t : 8 * t + 8] = [
            (v0, m01, m02, m03),
            (m01, v1, m12, m13),
            (m02, m12, v2, m23),
            (m03, m13, m23, v3),
            (m01, m02, m03, m13),
            (m01, m02, m12, m13),
            (m02, m03, m13, m23),
            (m02, m12, m13, m23),
        ]
    return TetMesh(vertices, tets)


def perturb_interior(mesh: TetMesh, magnitude=0.2, seed=0) -> TetMesh:
    """Randomly displace interior vertices to break the structured pattern.

    Each interior vertex moves by at most ``magnitude`` times its
    shortest incident edge; boundary vertices stay put so the domain is
    unchanged.  Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    interior = ~mesh.boundary_vertex_mask()
    edges = mesh.edges()
    lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    h = np.full(mesh.num_vertices, np.inf)
    np.minimum.at(h, edges[:, 0], lengths)
    np.minimum.at(h, edges[:, 1], lengths)

    disp = rng.uniform(-1.0, 1.0, size=(mesh.num_vertices, 3)) / np.sqrt(3.0)
    vertices = mesh.vertices.copy()
    vertices[interior] += magnitude * h[interior, None] * disp[interior]
    return TetMesh(vertices, mesh.tets)


# -- plain-text mesh format (.node / .ele) --------------------------------


def write_mesh(mesh: TetMesh, basename):
    """Write ``basename.node`` and ``basename.ele`` (0-based indices)."""
    with open(str(basename) + ".node", "w") as fh:
        fh.write(f"{mesh.num_vertices} 3 0 0\n")
        for i, (x, y, z) in enumerate(mesh.vertices):
            fh.write(f"{i} {float(x)!r} {float(y)!r} {float(z)!r}\n")
    with open(str(basename) + ".ele", "w") as fh:
        fh.write(f"{mesh.num_tets} 4 0\n")
        for i, t in enumerate(mesh.tets):
            fh.write(f"{i} {t[0]} {t[1]} {t[2]} {t[3]}\n")


def read_mesh(basename) -> TetMesh:
    with open(str(basename) + ".node") as fh:
        nv = int(fh.readline().split()[0])
        vertices = np.empty((nv, 3))
        for _ in range(nv):
            parts = fh.readline().split()
            vertices[int(parts[0])] = [float(p) for p in parts[1:4]]
    with open(str(basename) + ".ele") as fh:
        nt = int(fh.readline().split()[0])
        tets = np.empty((nt, 4), dtype=np.int64)
        for _ in range(nt):
            parts = fh.readline().split()
            tets[int(parts[0])] = [int(p) for p in parts[1:5]]
    return TetMesh(vertices, tets)
