"""Finite volume meshes: 1D intervals and structured curvilinear channels.

Face metrics are derived from vertex coordinates, so the discrete closure
sum(|face| * n) = 0 holds per cell up to rounding; check_geometric_consistency
measures the worst relative defect.  Interior faces store a unit normal
oriented from the left to the right cell; boundary faces store the outward
normal and an integer tag indexing ``boundary_names``.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mesh:
    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    volumes: np.ndarray
    centroids: np.ndarray
    f_left: np.ndarray
    f_right: np.ndarray
    f_normal: np.ndarray
    f_area: np.ndarray
    f_centroid: np.ndarray
    b_cell: np.ndarray
    b_normal: np.ndarray
    b_area: np.ndarray
    b_centroid: np.ndarray
    b_tag: np.ndarray
    boundary_names: tuple
    meta: dict = field(default_factory=dict)

    @property
    def n_cells(self):
        return self.volumes.shape[0]

    @property
    def n_faces(self):
        return self.f_area.shape[0]

    @property
    def n_bfaces(self):
        return self.b_area.shape[0]

    def boundary_faces(self, name):
        """Indices of boundary faces belonging to a named group."""
        tag = self.boundary_names.index(name)
        return np.flatnonzero(self.b_tag == tag)

    @property
    def cell_max_face_area(self):
        if "_cell_max_face_area" not in self.meta:
            acc = np.zeros(self.n_cells)
            np.maximum.at(acc, self.f_left, self.f_area)
            np.maximum.at(acc, self.f_right, self.f_area)
            np.maximum.at(acc, self.b_cell, self.b_area)
            self.meta["_cell_max_face_area"] = acc
        return self.meta["_cell_max_face_area"]

    @property
    def cell_diameter(self):
        """Volume over largest face area; the length scale used for CFL."""
        return self.volumes / self.cell_max_face_area

    @property
    def mesh_hash(self):
        if "_hash" not in self.meta:
            h = hashlib.sha256()
            h.update(np.int64(self.dim).tobytes())
            h.update(np.ascontiguousarray(self.vertices).tobytes())
            h.update(np.ascontiguousarray(self.cells.astype(np.int64)).tobytes())
            h.update(np.ascontiguousarray(self.b_tag.astype(np.int64)).tobytes())
            self.meta["_hash"] = int.from_bytes(h.digest()[:8], "little")
        return self.meta["_hash"]


def build_interval_mesh(a, b, n_cells):
    """Uniform 1D mesh on [a, b] with boundary groups 'left' and 'right'."""
    if n_cells < 1 or not b > a:
        raise ValueError("need b > a and at least one cell")
    x = np.linspace(a, b, n_cells + 1)
    cells = np.stack([np.arange(n_cells), np.arange(1, n_cells + 1)], axis=1)
    vols = np.diff(x)
    cents = 0.5 * (x[:-1] + x[1:])[:, None]
    nf = n_cells - 1
    return Mesh(
        dim=1,
        vertices=x[:, None],
        cells=cells,
        volumes=vols,
        centroids=cents,
        f_left=np.arange(nf),
        f_right=np.arange(1, n_cells),
        f_normal=np.ones((nf, 1)),
        f_area=np.ones(nf),
        f_centroid=x[1:-1][:, None],
        b_cell=np.array([0, n_cells - 1]),
        b_normal=np.array([[-1.0], [1.0]]),
        b_area=np.ones(2),
        b_centroid=np.array([[x[0]], [x[-1]]]),
        b_tag=np.array([0, 1]),
        boundary_names=("left", "right"),
        meta={"kind": "interval", "a": a, "b": b},
    )


def bump_profile(x, secant=1.0, height=0.024):
    """Circular-arc bump elevation centered at x = 0."""
    x = np.asarray(x, dtype=float)
    if height <= 0.0:
        return np.zeros_like(x)
    radius = secant * secant / (8.0 * height) + 0.5 * height
    y0 = height - radius
    inside = np.abs(x) < 0.5 * secant
    y = np.zeros_like(x)
    y[inside] = y0 + np.sqrt(radius * radius - x[inside] * x[inside])
    return np.maximum(y, 0.0)


def build_bump_channel_mesh(
    length=6.0,
    height=2.0,
    bump_secant=1.0,
    bump_height=0.024,
    level=0,
    base_nx=24,
    base_ny=8,
    warp_amplitude=0.0,
):
    """Structured quad mesh of a channel with a circular-arc bump on the floor.

    The channel spans [-length/2, length/2] x [0, height]; cell counts double
    per refinement level.  ``warp_amplitude`` adds a smooth interior vertex
    displacement (zero on the boundary) to exercise curvilinear metrics.

    Boundary groups: 'inflow' (left), 'outflow' (right), 'bottom', 'top'.
    """
    nx = base_nx * 2**level
    ny = base_ny * 2**level
    xs = np.linspace(-0.5 * length, 0.5 * length, nx + 1)
    yb = bump_profile(xs, bump_secant, bump_height)
    eta = np.linspace(0.0, 1.0, ny + 1)
    X = np.broadcast_to(xs[None, :], (ny + 1, nx + 1)).copy()
    Y = yb[None, :] + (height - yb)[None, :] * eta[:, None]
    if warp_amplitude != 0.0:
        sx = np.sin(2.0 * np.pi * (xs - xs[0]) / length)
        sy = np.sin(np.pi * eta)
        X += warp_amplitude * length * sy[:, None] * np.sin(3.0 * np.pi * eta)[:, None] * sx[None, :]
        Y += warp_amplitude * height * sy[:, None] * np.cos(2.0 * np.pi * (xs - xs[0]) / length)[None, :]
        # keep the boundary exactly in place
        X[0, :] = xs
        X[-1, :] = xs
        Y[0, :] = yb
        Y[-1, :] = height
        X[:, 0] = xs[0]
        X[:, -1] = xs[-1]
        Y[:, 0] = np.interp(eta, [0.0, 1.0], [yb[0], height])
        Y[:, -1] = np.interp(eta, [0.0, 1.0], [yb[-1], height])
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    cells = np.stack(
        [vid(ii, jj), vid(ii + 1, jj), vid(ii + 1, jj + 1), vid(ii, jj + 1)], axis=1
    )

    # polygon area and centroid (counterclockwise quads)
    v = verts[cells]  # (nc, 4, 2)
    x0 = v[:, :, 0]
    y0v = v[:, :, 1]
    x1 = np.roll(x0, -1, axis=1)
    y1 = np.roll(y0v, -1, axis=1)
    cross = x0 * y1 - x1 * y0v
    area = 0.5 * np.sum(cross, axis=1)
    cx = np.sum((x0 + x1) * cross, axis=1) / (6.0 * area)
    cy = np.sum((y0v + y1) * cross, axis=1) / (6.0 * area)
    if np.any(area <= 0.0):
        raise ValueError("degenerate or inverted cell in channel mesh")

    def cid(i, j):
        return j * nx + i

    def face_metrics(a_ids, b_ids, rot):
        # rot=+1: normal (ey, -ex); rot=-1: normal (-ey, ex)
        e = verts[b_ids] - verts[a_ids]
        ln = np.hypot(e[:, 0], e[:, 1])
        n = np.stack([rot * e[:, 1] / ln, -rot * e[:, 0] / ln], axis=1)
        c = 0.5 * (verts[a_ids] + verts[b_ids])
        return ln, n, c

    # vertical interior faces between c(i,j) and c(i+1,j)
    iv, jv = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="xy")
    iv = iv.ravel()
    jv = jv.ravel()
    a_v, n_v, c_v = face_metrics(vid(iv + 1, jv), vid(iv + 1, jv + 1), +1)
    # horizontal interior faces between c(i,j) and c(i,j+1)
    ih, jh = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="xy")
    ih = ih.ravel()
    jh = jh.ravel()
    a_h, n_h, c_h = face_metrics(vid(ih, jh + 1), vid(ih + 1, jh + 1), -1)
    f_left = np.concatenate([cid(iv, jv), cid(ih, jh)])
    f_right = np.concatenate([cid(iv + 1, jv), cid(ih, jh + 1)])
    f_a = np.concatenate([a_v, a_h])
    f_n = np.concatenate([n_v, n_h])
    f_c = np.concatenate([c_v, c_h])

    names = ("inflow", "outflow", "bottom", "top")
    jb = np.arange(ny)
    ib = np.arange(nx)
    a_in, n_in, c_in = face_metrics(vid(0, jb), vid(0, jb + 1), -1)
    a_out, n_out, c_out = face_metrics(vid(nx, jb), vid(nx, jb + 1), +1)
    a_bot, n_bot, c_bot = face_metrics(vid(ib, 0), vid(ib + 1, 0), +1)
    a_top, n_top, c_top = face_metrics(vid(ib, ny), vid(ib + 1, ny), -1)
    b_cell = np.concatenate([cid(0, jb), cid(nx - 1, jb), cid(ib, 0), cid(ib, ny - 1)])
    b_a = np.concatenate([a_in, a_out, a_bot, a_top])
    b_n = np.concatenate([n_in, n_out, n_bot, n_top])
    b_c = np.concatenate([c_in, c_out, c_bot, c_top])
    b_tag = np.concatenate(
        [np.full(ny, 0), np.full(ny, 1), np.full(nx, 2), np.full(nx, 3)]
    )

    return Mesh(
        dim=2,
        vertices=verts,
        cells=cells,
        volumes=area,
        centroids=np.stack([cx, cy], axis=1),
        f_left=np.asarray(f_left, dtype=np.int64),
        f_right=np.asarray(f_right, dtype=np.int64),
        f_normal=np.asarray(f_n),
        f_area=np.asarray(f_a),
        f_centroid=np.asarray(f_c),
        b_cell=np.asarray(b_cell, dtype=np.int64),
        b_normal=np.asarray(b_n),
        b_area=np.asarray(b_a),
        b_centroid=np.asarray(b_c),
        b_tag=np.asarray(b_tag, dtype=np.int64),
        boundary_names=names,
        meta={
            "kind": "bump_channel",
            "level": level,
            "nx": nx,
            "ny": ny,
            "length": length,
            "height": height,
            "bump_secant": bump_secant,
            "bump_height": bump_height,
        },
    )


def check_geometric_consistency(mesh):
    """Worst per-cell relative defect of the closure sum(|face| n) = 0."""
    acc = np.zeros((mesh.n_cells, mesh.dim))
    scale = np.zeros(mesh.n_cells)
    w = mesh.f_area[:, None] * mesh.f_normal
    np.add.at(acc, mesh.f_left, w)
    np.add.at(acc, mesh.f_right, -w)
    np.add.at(scale, mesh.f_left, mesh.f_area)
    np.add.at(scale, mesh.f_right, mesh.f_area)
    wb = mesh.b_area[:, None] * mesh.b_normal
    np.add.at(acc, mesh.b_cell, wb)
    np.add.at(scale, mesh.b_cell, mesh.b_area)
    defect = np.sqrt(np.sum(acc * acc, axis=1)) / scale
    return float(defect.max())


def refine_structured(coarse_values, mesh_coarse, mesh_fine):
    """Inject cell values from a channel mesh onto a finer level of itself.

    Each coarse cell is copied to its 2^dL x 2^dL structured children; used to
    seed fine-level solves from coarse results.
    """
    mc = mesh_coarse.meta
    mf = mesh_fine.meta
    if mc.get("kind") != "bump_channel" or mf.get("kind") != "bump_channel":
        raise ValueError("structured refinement needs two channel meshes")
    fx = mf["nx"] // mc["nx"]
    fy = mf["ny"] // mc["ny"]
    if fx * mc["nx"] != mf["nx"] or fy * mc["ny"] != mf["ny"]:
        raise ValueError("fine mesh is not a refinement of the coarse mesh")
    vals = np.asarray(coarse_values)
    grid = vals.reshape(mc["ny"], mc["nx"], -1)
    fine = np.repeat(np.repeat(grid, fy, axis=0), fx, axis=1)
    return fine.reshape(mesh_fine.n_cells, *vals.shape[1:])


def export_mesh(mesh, path):
    """Plain-text dump: header, vertices, connectivity, boundary tags."""
    with open(path, "w") as fh:
        fh.write("flowadapt-mesh 1\n")
        fh.write(f"dim {mesh.dim}\n")
        fh.write(
            f"counts vertices={mesh.vertices.shape[0]} cells={mesh.n_cells} "
            f"boundary_faces={mesh.n_bfaces}\n"
        )
        fh.write("vertices\n")
        for row in mesh.vertices:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
        fh.write("cells\n")
        for row in mesh.cells:
            fh.write(" ".join(str(int(i)) for i in row) + "\n")
        fh.write("boundary\n")
        for c, a, n, xc, t in zip(
            mesh.b_cell, mesh.b_area, mesh.b_normal, mesh.b_centroid, mesh.b_tag
        ):
            nrm = " ".join(f"{x:.17g}" for x in n)
            cen = " ".join(f"{x:.17g}" for x in xc)
            fh.write(f"{int(c)} {a:.17g} {nrm} {cen} {mesh.boundary_names[int(t)]}\n")
