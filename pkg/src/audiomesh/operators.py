"""Precomputed surface operators: lumped mass, cotangent Laplacian,
truncated eigenbasis, and a per-vertex tangent-plane gradient matrix.

These are the fixed, geometry-only quantities the network layers consume.
The Laplacian follows the weak (integrated) convention: positive
semi-definite, rows summing to zero, off-diagonal entries
-(cot a + cot b)/2. Eigenpairs solve L phi = lambda M phi with the lumped
mass matrix M, so eigenvectors are M-orthonormal. The gradient matrix is
complex-valued: row i maps a scalar field to
(df/de1) + i (df/de2) in the tangent basis (e1, e2) at vertex i.
"""

import hashlib
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh

from .errors import FormatError, MeshError, SolverError
from .meshio import Mesh, triangle_areas

log = logging.getLogger(__name__)

COT_CLAMP = 20.0  # |cot| clamp; near-degenerate scan triangles otherwise dominate
CACHE_MAGIC = b"STOP"
CACHE_VERSION = 1
DEFAULT_K = 128


@dataclass(frozen=True)
class SurfaceOperators:
    """Operator bundle for one mesh at one eigenbasis size k."""

    mass: np.ndarray          # (V,) positive vertex areas, m^2
    laplacian: sp.csr_matrix  # (V, V) sparse symmetric PSD
    eigenvalues: np.ndarray   # (k,) ascending, >= 0, units 1/m^2
    eigenvectors: np.ndarray  # (V, k), M-orthonormal columns
    gradient: sp.csr_matrix   # (V, V) complex tangent-gradient matrix
    k: int
    gradient_regularized: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64)
    )  # vertices whose one-ring fit needed Tikhonov regularization

    @property
    def n_vertices(self):
        return len(self.mass)

    def permute(self, perm):
        """Re-index the bundle by a vertex permutation: vertex perm[i] of the
        original becomes vertex i. Matches Mesh(vertices[perm], remapped faces)."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        P = sp.csr_matrix(
            (np.ones(len(perm)), (np.arange(len(perm)), perm)),
            shape=(len(perm), len(perm)),
        )
        reg = np.sort(inv[self.gradient_regularized]) if len(self.gradient_regularized) else self.gradient_regularized
        return SurfaceOperators(
            mass=self.mass[perm],
            laplacian=(P @ self.laplacian @ P.T).tocsr(),
            eigenvalues=self.eigenvalues.copy(),
            eigenvectors=self.eigenvectors[perm],
            gradient=(P @ self.gradient @ P.T).tocsr(),
            k=self.k,
            gradient_regularized=reg,
        )


def content_hash(mesh, k):
    """SHA-256 over (vertices f64 LE, faces i32 LE, k u32 LE); keys the cache."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(mesh.faces, dtype="<i4").tobytes())
    h.update(struct.pack("<I", k))
    return h.digest()


def cotangent_laplacian(mesh):
    """Weak cotangent Laplacian as a sparse symmetric CSR matrix.

    Off-diagonal L_ij = -(cot a_ij + cot b_ij)/2 over the angles opposite
    edge (i, j); one term only for boundary edges. Diagonal makes rows sum
    to zero. Cotangents are clamped to [-20, 20].
    """
    v, f = mesh.vertices, mesh.faces
    rows, cols, vals = [], [], []
    # for corner c in each face, the opposite edge is (c+1, c+2)
    for c in range(3):
        i = f[:, (c + 1) % 3]
        j = f[:, (c + 2) % 3]
        o = f[:, c]
        e1 = v[i] - v[o]
        e2 = v[j] - v[o]
        cross = np.cross(e1, e2)
        cross_norm = np.linalg.norm(cross, axis=1)
        if (cross_norm <= 0).any():
            raise MeshError("degenerate triangle in cotangent computation")
        cot = np.einsum("ij,ij->i", e1, e2) / cross_norm
        cot = np.clip(cot, -COT_CLAMP, COT_CLAMP)
        w = 0.5 * cot
        rows += [i, j]
        cols += [j, i]
        vals += [-w, -w]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    V = mesh.n_vertices
    L = sp.csr_matrix((vals, (rows, cols)), shape=(V, V))
    L.sum_duplicates()
    diag = -np.asarray(L.sum(axis=1)).ravel()
    L = L + sp.diags(diag)
    L = L.tocsr()
    L.sort_indices()
    return L


def mass_matrix(mesh):
    """Lumped barycentric vertex areas: mass_i = (1/3) sum of incident
    triangle areas. Returned as a dense (V,) vector."""
    areas = triangle_areas(mesh.vertices, mesh.faces)
    mass = np.zeros(mesh.n_vertices)
    for c in range(3):
        np.add.at(mass, mesh.faces[:, c], areas / 3.0)
    return mass


def eigenbasis(L, mass, k, seed=0, tol=1e-8):
    """k smallest generalized eigenpairs of L phi = lambda M phi.

    M is the diagonal lumped mass. Uses shift-invert Lanczos with a seeded
    start vector for determinism; small problems (or k close to V) fall
    back to a dense solve. Eigenvalues are clipped at zero and returned
    ascending; eigenvectors are M-orthonormal with a fixed sign convention
    (largest-magnitude entry positive).
    """
    V = L.shape[0]
    if not (1 <= k <= V):
        raise MeshError(f"eigenbasis size k={k} out of range [1, {V}]")
    if (mass <= 0).any():
        i = int(np.argmin(mass))
        raise MeshError(f"vertex {i} has non-positive mass (isolated vertex?)")

    if k >= V - 1 or V <= 128:
        # dense whitened solve: M^-1/2 L M^-1/2 is symmetric
        inv_sqrt = 1.0 / np.sqrt(mass)
        S = (L.toarray() * inv_sqrt[None, :]) * inv_sqrt[:, None]
        S = 0.5 * (S + S.T)
        evals, evecs = eigh(S)
        evals = evals[:k]
        evecs = inv_sqrt[:, None] * evecs[:, :k]
    else:
        M = sp.diags(mass).tocsc()
        # shift-invert about a small negative sigma: L - sigma M stays SPD
        # and the zero mode is not perturbed (unlike adding eps*I to L)
        scale = float(L.diagonal().sum() / mass.sum())
        sigma = -1e-2 * max(scale, 1e-30)
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(V)
        maxiter = int(5 * k * np.sqrt(V)) + 1
        try:
            evals, evecs = spla.eigsh(
                L.tocsc(), k=k, M=M, sigma=sigma, which="LM", v0=v0, tol=tol,
                maxiter=maxiter,
            )
        except spla.ArpackNoConvergence as e:
            got = len(e.eigenvalues)
            raise SolverError(
                f"eigensolver did not converge after {maxiter} iterations "
                f"({got}/{k} pairs converged)"
            ) from None
        order = np.argsort(evals)
        evals = evals[order]
        evecs = evecs[:, order]
        resid = _pair_residuals(L, mass, evals, evecs)
        if resid.max() > 1e-5:
            raise SolverError(
                f"eigensolver residual {resid.max():.2e} exceeds 1e-5"
            )

    evals = np.clip(evals, 0.0, None)
    # deterministic sign: make the largest-|entry| component positive
    lead = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[lead, np.arange(evecs.shape[1])])
    signs[signs == 0] = 1.0
    return np.ascontiguousarray(evals), np.ascontiguousarray(evecs * signs)


def _pair_residuals(L, mass, evals, evecs):
    r = L @ evecs - mass[:, None] * evecs * evals[None, :]
    num = np.linalg.norm(r, axis=0)
    return num / (1.0 + evals)


def _vertex_normals(mesh):
    v, f = mesh.vertices, mesh.faces
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])  # area-weighted
    n = np.zeros_like(v)
    for c in range(3):
        np.add.at(n, f[:, c], fn)
    norms = np.linalg.norm(n, axis=1)
    zero = norms < 1e-300
    if zero.any():
        raise MeshError(f"vertex {np.where(zero)[0][0]} has no incident faces")
    return n / norms[:, None]


def _tangent_frames(normals):
    # e1: global x projected to the tangent plane, falling back to y near poles
    e1 = np.tile(np.array([1.0, 0.0, 0.0]), (len(normals), 1))
    swap = np.abs(normals[:, 0]) > 0.9
    e1[swap] = np.array([0.0, 1.0, 0.0])
    e1 -= normals * np.einsum("ij,ij->i", e1, normals)[:, None]
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(normals, e1)
    return e1, e2


def spatial_gradient(mesh, return_diagnostics=False):
    """Sparse complex matrix mapping a scalar field to per-vertex
    tangent-plane gradients.

    At each vertex a least-squares linear model is fit over the one-ring
    edge vectors projected into the tangent plane; the row encodes
    (d/de1) + i (d/de2). Rank-deficient one-rings (collinear projected
    neighbors) are regularized with 1e-8 I and flagged.
    """
    v, f = mesh.vertices, mesh.faces
    V = mesh.n_vertices
    normals = _vertex_normals(mesh)
    e1, e2 = _tangent_frames(normals)

    neighbors = [set() for _ in range(V)]
    for a, b, c in f:
        neighbors[a].update((b, c))
        neighbors[b].update((a, c))
        neighbors[c].update((a, b))

    rows, cols, vals = [], [], []
    flagged = []
    for i in range(V):
        nbr = np.fromiter(sorted(neighbors[i]), dtype=np.int64)
        if len(nbr) < 2:
            raise MeshError(f"vertex {i} has fewer than 2 one-ring neighbors")
        edge = v[nbr] - v[i]
        W = np.stack([edge @ e1[i], edge @ e2[i]], axis=1)  # (n, 2)
        G = W.T @ W
        det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
        if det <= 1e-12 * (G[0, 0] + G[1, 1]) ** 2:
            G = G + 1e-8 * np.eye(2)
            flagged.append(i)
        sol = np.linalg.solve(G, W.T)  # (2, n): gradient of (f_j - f_i) data
        coeff = sol[0] + 1j * sol[1]
        rows += [i] * (len(nbr) + 1)
        cols += list(nbr) + [i]
        vals += list(coeff) + [-coeff.sum()]

    grad = sp.csr_matrix(
        (np.asarray(vals, dtype=np.complex128), (rows, cols)), shape=(V, V)
    )
    grad.sort_indices()
    if flagged:
        log.warning("spatial_gradient: %d rank-deficient one-rings regularized", len(flagged))
    if return_diagnostics:
        return grad, np.asarray(flagged, dtype=np.int64)
    return grad


def compute_operators(mesh, k=DEFAULT_K, seed=0):
    """Build the full operator bundle for a mesh.

    k is clipped to V-1 when it exceeds the vertex count (pass an explicit
    k <= V to keep it). Raises on isolated (zero-mass) vertices.
    """
    if k > mesh.n_vertices:
        raise MeshError(
            f"requested k={k} eigenpairs but mesh has only {mesh.n_vertices} vertices"
        )
    mass = mass_matrix(mesh)
    if (mass <= 0).any():
        i = int(np.argmin(mass))
        raise MeshError(f"vertex {i} has zero mass (referenced by no face)")
    L = cotangent_laplacian(mesh)
    evals, evecs = eigenbasis(L, mass, k, seed=seed)
    grad, flagged = spatial_gradient(mesh, return_diagnostics=True)
    return SurfaceOperators(
        mass=mass,
        laplacian=L,
        eigenvalues=evals,
        eigenvectors=evecs,
        gradient=grad,
        k=k,
        gradient_regularized=flagged,
    )


def default_k(n_vertices, k=DEFAULT_K):
    """Default eigenbasis size: k clipped to V-1."""
    return min(k, n_vertices - 1)


# ---------------------------------------------------------------------------
# cache file ("STOP" format)
#
# magic "STOP" | version u32 | content-hash 32B | V u32 | k u32 | n_flagged u32
# mass (V f64) | eigenvalues (k f64) | eigenvectors (V*k f64, row-major)
# laplacian CSR: nnz u32, indptr (V+1) u32, indices (nnz) u32, data (nnz f64)
# gradient  CSR: nnz u32, indptr (V+1) u32, indices (nnz) u32,
#                data_re (nnz f64), data_im (nnz f64)
# flagged vertices (n_flagged u32)
# All little-endian.


def _write_array(fh, arr, dtype):
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read_array(fh, count, dtype, what):
    nbytes = count * np.dtype(dtype).itemsize
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise FormatError(f"operator cache truncated while reading {what}")
    return np.frombuffer(buf, dtype=dtype).copy()


def cache_store(ops, mesh, path):
    """Persist an operator bundle, keyed by the mesh/k content hash."""
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        fh.write(content_hash(mesh, ops.k))
        fh.write(
            struct.pack(
                "<III", ops.n_vertices, ops.k, len(ops.gradient_regularized)
            )
        )
        _write_array(fh, ops.mass, "<f8")
        _write_array(fh, ops.eigenvalues, "<f8")
        _write_array(fh, ops.eigenvectors, "<f8")
        for mat, complex_data in ((ops.laplacian, False), (ops.gradient, True)):
            csr = mat.tocsr()
            csr.sort_indices()
            fh.write(struct.pack("<I", csr.nnz))
            _write_array(fh, csr.indptr, "<u4")
            _write_array(fh, csr.indices, "<u4")
            if complex_data:
                _write_array(fh, csr.data.real, "<f8")
                _write_array(fh, csr.data.imag, "<f8")
            else:
                _write_array(fh, csr.data, "<f8")
        _write_array(fh, ops.gradient_regularized, "<u4")


def cache_load(path, mesh=None, k=None):
    """Load an operator bundle; verifies the content hash when a mesh (and
    optionally k) is supplied, rejecting stale caches."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, not an operator cache")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CACHE_VERSION:
            raise FormatError(
                f"{path}: cache version {version} != supported {CACHE_VERSION}"
            )
        stored_hash = fh.read(32)
        if len(stored_hash) != 32:
            raise FormatError("operator cache truncated while reading hash")
        header = fh.read(12)
        if len(header) != 12:
            raise FormatError("operator cache truncated while reading header")
        V, k_stored, n_flagged = struct.unpack("<III", header)
        if mesh is not None:
            want = content_hash(mesh, k if k is not None else k_stored)
            if want != stored_hash:
                raise FormatError(
                    f"{path}: content hash mismatch, cache is stale for this mesh/k"
                )
        mass = _read_array(fh, V, "<f8", "mass")
        evals = _read_array(fh, k_stored, "<f8", "eigenvalues")
        evecs = _read_array(fh, V * k_stored, "<f8", "eigenvectors").reshape(V, k_stored)
        mats = []
        for what, complex_data in (("laplacian", False), ("gradient", True)):
            raw = fh.read(4)
            if len(raw) != 4:
                raise FormatError(f"operator cache truncated while reading {what}")
            (nnz,) = struct.unpack("<I", raw)
            indptr = _read_array(fh, V + 1, "<u4", what)
            indices = _read_array(fh, nnz, "<u4", what)
            if complex_data:
                re = _read_array(fh, nnz, "<f8", what)
                im = _read_array(fh, nnz, "<f8", what)
                data = np.empty(nnz, dtype=np.complex128)
                data.real = re
                data.imag = im  # assignment keeps signed zeros bit-exact
            else:
                data = _read_array(fh, nnz, "<f8", what)
            mats.append(sp.csr_matrix((data, indices, indptr), shape=(V, V)))
        flagged = _read_array(fh, n_flagged, "<u4", "flags").astype(np.int64)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after operator cache payload")
    return SurfaceOperators(
        mass=mass,
        laplacian=mats[0],
        eigenvalues=evals,
        eigenvectors=evecs,
        gradient=mats[1],
        k=k_stored,
        gradient_regularized=flagged,
    )


def get_operators(mesh, k, cache_path=None, seed=0):
    """Compute or load-from-cache; returns (ops, status) with status one of
    "hit", "stale", "miss", "nocache"."""
    if cache_path is None:
        return compute_operators(mesh, k, seed=seed), "nocache"
    if os.path.exists(cache_path):
        try:
            ops = cache_load(cache_path, mesh, k)
            return ops, "hit"
        except FormatError:
            ops = compute_operators(mesh, k, seed=seed)
            cache_store(ops, mesh, cache_path)
            return ops, "stale"
    ops = compute_operators(mesh, k, seed=seed)
    cache_store(ops, mesh, cache_path)
    return ops, "miss"
