"""Triangle mesh types and ASCII OBJ/PLY persistence.

Vertex order is load order and is never changed by anything in this
package: downstream per-vertex predictions are only meaningful because
the i-th output row corresponds to the i-th input vertex.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, MeshError, MaskError

MIN_TRIANGLE_AREA = 1e-14  # m^2; below this cotangent weights blow up


def triangle_areas(vertices, faces):
    """Areas of all triangles, shape (F,)."""
    p = vertices[faces[:, 0]]
    q = vertices[faces[:, 1]]
    r = vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(q - p, r - p), axis=1)


def _check_mesh(vertices, faces):
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshError(f"vertices must be (V, 3), got {vertices.shape}")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise MeshError(f"faces must be (F, 3), got {faces.shape}")
    if not np.isfinite(vertices).all():
        bad = np.argwhere(~np.isfinite(vertices))[0]
        raise MeshError(f"non-finite coordinate at vertex {bad[0]}")
    V = len(vertices)
    if len(faces):
        if faces.min() < 0 or faces.max() >= V:
            bad = np.where((faces < 0) | (faces >= V))[0][0]
            raise MeshError(f"face {bad} references vertex outside [0, {V})")
        repeated = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        )
        if repeated.any():
            raise MeshError(f"face {np.where(repeated)[0][0]} repeats a vertex")
        areas = triangle_areas(vertices, faces)
        if (areas <= MIN_TRIANGLE_AREA).any():
            i = int(np.argmin(areas))
            raise MeshError(
                f"face {i} is degenerate (area {areas[i]:.3e} <= {MIN_TRIANGLE_AREA:.0e} m^2)"
            )


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh: vertices in meters, faces as index triples."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int32))
        _check_mesh(v, f)
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)


@dataclass(frozen=True)
class VertexMask:
    """Sorted unique vertex indices with a semantic label (lip / upper_face)."""

    indices: np.ndarray
    label: str

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or len(idx) == 0:
            raise MaskError(f"mask '{self.label}' is empty")
        if (idx < 0).any():
            raise MaskError(f"mask '{self.label}' has a negative index")
        srt = np.unique(idx)
        if len(srt) != len(idx):
            raise MaskError(f"mask '{self.label}' has duplicate indices")
        srt.flags.writeable = False
        object.__setattr__(self, "indices", srt)

    def check_against(self, n_vertices):
        if self.indices[-1] >= n_vertices:
            raise MaskError(
                f"mask '{self.label}' index {self.indices[-1]} out of range "
                f"for mesh with {n_vertices} vertices"
            )


def load_mask(path, label):
    """Read a vertex mask file: one integer index per line."""
    indices = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                indices.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{ln}: not an integer index: {line!r}")
    return VertexMask(np.asarray(indices, dtype=np.int64), label)


def save_mask(mask, path):
    with open(path, "w") as fh:
        for i in mask.indices:
            fh.write(f"{int(i)}\n")


@dataclass(frozen=True)
class NormalizationFrame:
    """Target centroid and target RMS scale for normalize_to_frame."""

    centroid: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * x + translation (no rotation)."""

    scale: float
    translation: np.ndarray

    def apply(self, points):
        return self.scale * np.asarray(points) + self.translation


# ---------------------------------------------------------------------------
# parsing


def _parse_obj(path):
    vertices = []
    faces = []
    face_lines = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tag, _, rest = line.partition(" ")
            if tag == "v":
                parts = rest.split()
                if len(parts) < 3:
                    raise FormatError(f"{path}:{ln}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(p) for p in parts[:3]])
                except ValueError:
                    raise FormatError(f"{path}:{ln}: bad vertex coordinate")
            elif tag == "f":
                parts = rest.split()
                if len(parts) != 3:
                    raise FormatError(
                        f"{path}:{ln}: only triangular faces are supported "
                        f"(got {len(parts)} vertices)"
                    )
                idx = []
                for p in parts:
                    head = p.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise FormatError(f"{path}:{ln}: bad face index {p!r}")
                    if i < 1:
                        raise FormatError(
                            f"{path}:{ln}: face indices must be positive 1-based"
                        )
                    idx.append(i - 1)
                faces.append(idx)
                face_lines.append(ln)
            # vn/vt/usemtl/g/o/s/mtllib records are ignored
    return vertices, faces, face_lines


def _parse_ply(path):
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"ply":
            raise FormatError(f"{path}:1: not a PLY file")
        n_vertex = n_face = None
        props = []
        current = None
        ln = 1
        while True:
            raw = fh.readline()
            ln += 1
            if not raw:
                raise FormatError(f"{path}:{ln}: unexpected end of header")
            line = raw.decode("ascii", "replace").strip()
            if line.startswith("comment"):
                continue
            if line.startswith("format"):
                if "ascii" not in line:
                    raise FormatError(
                        f"{path}:{ln}: binary PLY is not supported, convert to ascii"
                    )
            elif line.startswith("element vertex"):
                n_vertex = int(line.split()[-1])
                current = "vertex"
            elif line.startswith("element face"):
                n_face = int(line.split()[-1])
                current = "face"
            elif line.startswith("element"):
                current = "other"
            elif line.startswith("property") and current == "vertex":
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        if n_vertex is None or n_face is None:
            raise FormatError(f"{path}: header missing vertex or face element")
        try:
            ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
        except ValueError:
            raise FormatError(f"{path}: vertex element lacks x/y/z properties")

        vertices = []
        for _ in range(n_vertex):
            raw = fh.readline()
            ln += 1
            if not raw:
                raise FormatError(f"{path}:{ln}: truncated vertex list")
            parts = raw.split()
            try:
                vertices.append(
                    [float(parts[ix]), float(parts[iy]), float(parts[iz])]
                )
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{ln}: bad vertex line")
        faces = []
        face_lines = []
        for _ in range(n_face):
            raw = fh.readline()
            ln += 1
            if not raw:
                raise FormatError(f"{path}:{ln}: truncated face list")
            parts = raw.split()
            try:
                count = int(parts[0])
                idx = [int(p) for p in parts[1 : count + 1]]
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{ln}: bad face line")
            if count != 3:
                raise FormatError(
                    f"{path}:{ln}: only triangular faces are supported (got {count})"
                )
            faces.append(idx)
            face_lines.append(ln)
        return vertices, faces, face_lines


def load_mesh(path):
    """Load an ASCII OBJ or ASCII PLY triangle mesh.

    Vertex order is preserved exactly as in the file. Raises FormatError on
    parse problems (with line numbers) and MeshError on invariant
    violations (out-of-range index, degenerate face, non-finite values).
    """
    if not os.path.exists(path):
        raise FormatError(f"mesh file not found: {path}")
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        vertices, faces, face_lines = _parse_obj(path)
    elif ext == ".ply":
        vertices, faces, face_lines = _parse_ply(path)
    else:
        raise FormatError(f"unsupported mesh extension {ext!r} (use .obj or .ply)")
    if not vertices:
        raise FormatError(f"{path}: no vertices")
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int32).reshape(-1, 3)

    # invariant checks with the offending source line in the message
    def fail(face_idx, why):
        raise MeshError(f"{path}:{face_lines[face_idx]}: {why}")

    if not np.isfinite(v).all():
        bad = int(np.argwhere(~np.isfinite(v))[0][0])
        raise MeshError(f"{path}: non-finite coordinate at vertex {bad}")
    if len(f):
        oob = (f < 0) | (f >= len(v))
        if oob.any():
            i = int(np.where(oob.any(axis=1))[0][0])
            fail(i, f"face references vertex outside [0, {len(v)})")
        repeated = (
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        )
        if repeated.any():
            fail(int(np.where(repeated)[0][0]), "face repeats a vertex (degenerate)")
        areas = triangle_areas(v, f)
        if (areas <= MIN_TRIANGLE_AREA).any():
            i = int(np.argmin(areas))
            fail(i, f"degenerate face (area {areas[i]:.3e} <= {MIN_TRIANGLE_AREA:.0e} m^2)")
    return Mesh(v, f)


def save_mesh(mesh, path):
    """Write a mesh as ASCII OBJ or PLY (by extension), full f64 precision."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        with open(path, "w") as fh:
            for x, y, z in mesh.vertices:
                fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
            for a, b, c in mesh.faces:
                fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
    elif ext == ".ply":
        with open(path, "w") as fh:
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {mesh.n_vertices}\n")
            fh.write("property double x\nproperty double y\nproperty double z\n")
            fh.write(f"element face {mesh.n_faces}\n")
            fh.write("property list uchar int vertex_indices\nend_header\n")
            for x, y, z in mesh.vertices:
                fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
            for a, b, c in mesh.faces:
                fh.write(f"3 {a} {b} {c}\n")
    else:
        raise FormatError(f"unsupported mesh extension {ext!r} (use .obj or .ply)")


def save_sequence(frames, faces, out_dir):
    """Write animation frames as out_dir/frame_0000.obj, frame_0001.obj, ...

    `frames` is a (T, V, 3) array; all frames share `faces`.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or len(frames) == 0:
        raise MeshError("empty sequence")
    os.makedirs(out_dir, exist_ok=True)
    for j, verts in enumerate(frames):
        save_mesh(Mesh(verts, faces), os.path.join(out_dir, f"frame_{j:04d}.obj"))


def load_sequence(seq_dir):
    """Load frame_*.obj files in index order; all must share one topology.

    Returns (frames (T, V, 3), faces (F, 3)).
    """
    names = sorted(
        n for n in os.listdir(seq_dir) if n.startswith("frame_") and n.endswith(".obj")
    )
    if not names:
        raise FormatError(f"no frame_*.obj files in {seq_dir}")
    meshes = [load_mesh(os.path.join(seq_dir, n)) for n in names]
    faces = meshes[0].faces
    for n, m in zip(names, meshes):
        if m.n_vertices != meshes[0].n_vertices or not np.array_equal(m.faces, faces):
            raise MeshError(f"{seq_dir}/{n}: topology differs from first frame")
    return np.stack([m.vertices for m in meshes]), faces


# ---------------------------------------------------------------------------
# diagnostics and normalization


@dataclass(frozen=True)
class MeshDiagnostics:
    boundary_edges: int
    nonmanifold_edges: int
    connected_components: int
    degenerate_triangles: int


def validate_mesh(mesh):
    """Report-only mesh diagnostics; boundaries and holes are permitted.

    Never mutates the input. Non-finite coordinates are a MeshError (the
    Mesh constructor already rejects them, so this can only trigger for
    meshes built by bypassing it).
    """
    if not np.isfinite(mesh.vertices).all():
        raise MeshError("non-finite vertex coordinates")
    f = mesh.faces
    edges = np.sort(
        np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0), axis=1
    )
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    boundary = int((counts == 1).sum())
    nonmanifold = int((counts > 2).sum())
    degenerate = int((triangle_areas(mesh.vertices, f) <= MIN_TRIANGLE_AREA).sum())

    parent = np.arange(mesh.n_vertices)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in uniq:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    components = len({find(i) for i in range(mesh.n_vertices)})
    return MeshDiagnostics(boundary, nonmanifold, components, degenerate)


def normalize_to_frame(mesh, frame):
    """Translate and uniformly scale a mesh to a target centroid and RMS scale.

    RMS scale is the root-mean-square vertex distance from the centroid.
    Rotation is deliberately not solved for; supply pre-rotated meshes.
    Returns (normalized mesh, applied SimilarityTransform) so that the
    transform can be inverted on any output geometry.
    """
    v = mesh.vertices
    centroid = v.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((v - centroid) ** 2, axis=1))))
    if rms < 1e-12:
        raise MeshError("zero-variance mesh: all vertices coincide")
    scale = float(frame.scale) / rms
    translation = np.asarray(frame.centroid, dtype=np.float64) - scale * centroid
    transform = SimilarityTransform(scale, translation)
    return Mesh(transform.apply(v), mesh.faces.copy()), transform
