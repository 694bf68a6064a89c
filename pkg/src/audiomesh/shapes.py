"""Procedural test geometry: icospheres, UV spheres, simple patches.

These generators are deterministic, which the synthetic data harness and
the regression tests both rely on.
"""

import numpy as np

from .meshio import Mesh


def icosahedron(radius=1.0):
    """Regular icosahedron with circumradius `radius`, 12 vertices, 20 faces."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    verts *= radius / np.linalg.norm(verts[0])
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ],
        dtype=np.int32,
    )
    return Mesh(verts, faces)


def icosphere(subdivisions, radius=1.0):
    """Icosahedron refined `subdivisions` times, vertices projected to the sphere.

    Vertex counts: 12, 42, 162, 642, 2562, 10242 for subdivisions 0..5.
    """
    mesh = icosahedron(1.0)
    verts = [tuple(v) for v in mesh.vertices]
    faces = [tuple(f) for f in mesh.faces]
    for _ in range(subdivisions):
        midpoint = {}
        new_faces = []

        def edge_vertex(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                v = np.asarray(verts[i]) + np.asarray(verts[j])
                v /= np.linalg.norm(v)
                midpoint[key] = len(verts)
                verts.append(tuple(v))
            return midpoint[key]

        for a, b, c in faces:
            ab = edge_vertex(a, b)
            bc = edge_vertex(b, c)
            ca = edge_vertex(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(verts, dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return Mesh(v * radius, np.asarray(faces, dtype=np.int32))


def uv_sphere(n_lat=12, n_lon=18, radius=1.0):
    """Latitude/longitude sphere triangulation (poles are single vertices).

    A deliberately different tessellation of the same surface as
    `icosphere`, used for cross-triangulation tests.
    """
    verts = [(0.0, 0.0, radius)]
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        for j in range(n_lon):
            phi = 2.0 * np.pi * j / n_lon
            verts.append(
                (
                    radius * np.sin(theta) * np.cos(phi),
                    radius * np.sin(theta) * np.sin(phi),
                    radius * np.cos(theta),
                )
            )
    verts.append((0.0, 0.0, -radius))
    south = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(n_lon):
        faces.append((south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    return Mesh(np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int32))


def flat_grid(nx=6, ny=6, spacing=1.0):
    """Planar triangulated grid in the xy-plane (z = 0)."""
    verts = []
    for j in range(ny):
        for i in range(nx):
            verts.append((i * spacing, j * spacing, 0.0))
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b = a + 1
            c = a + nx
            d = c + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    return Mesh(np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int32))


def radial_deform(mesh, amplitudes, seed=0):
    """Smoothly perturb a star-shaped mesh along its radial directions.

    Radii are scaled by 1 + sum_i a_i * (d_i . u)^2 with seeded random unit
    directions d_i, so the same field can be evaluated on any tessellation
    of the same underlying surface.
    """
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((len(amplitudes), 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    v = mesh.vertices
    r = np.linalg.norm(v, axis=1, keepdims=True)
    u = v / r
    scale = 1.0 + sum(a * (u @ d) ** 2 for a, d in zip(amplitudes, dirs))
    return Mesh(u * (r * scale[:, None]), mesh.faces.copy())


def mean_edge_length(mesh):
    """Mean length over the unique edges of the mesh."""
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    d = mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]]
    return float(np.mean(np.linalg.norm(d, axis=1)))
