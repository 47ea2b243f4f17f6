"""Linear 3D morphable face model.

A face is ``mean_shape + id_basis @ alpha + exp_basis @ exp``. Pose is an
intrinsic X->Y->Z Euler rotation (pitch, yaw, roll) plus a translation in
normalized image units, projected with a weak-perspective camera.

Coordinate conventions (shared with the renderer):
  * x grows to the right, y grows downward with the image row, both in
    [-1, 1]; z grows toward the camera (larger z = closer).
  * Projection keeps z so the rasterizer can depth-test.
"""

from dataclasses import dataclass, field

import numpy as np

EXPRESSION_DIM = 64
MOTION_DIM = 70  # 64 expression + 3 angle + 3 translation


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


@dataclass
class MorphableBasis:
    """Mean shape plus identity/expression deformation bases."""

    mean_shape: np.ndarray        # (V, 3)
    id_basis: np.ndarray          # (V, 3, D_id)
    exp_basis: np.ndarray         # (V, 3, 64)
    triangles: np.ndarray         # (T, 3) int
    uv_coords: np.ndarray         # (V, 2) in [0, 1]^2

    def __post_init__(self):
        self.mean_shape = np.asarray(self.mean_shape, dtype=np.float64)
        self.id_basis = np.asarray(self.id_basis, dtype=np.float64)
        self.exp_basis = np.asarray(self.exp_basis, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int32)
        self.uv_coords = np.asarray(self.uv_coords, dtype=np.float64)
        v = self.mean_shape.shape[0]
        if self.mean_shape.shape != (v, 3):
            raise ValueError("mean_shape must be (V, 3)")
        if self.id_basis.shape[:2] != (v, 3):
            raise ValueError("id_basis must be (V, 3, D_id)")
        if self.exp_basis.shape != (v, 3, EXPRESSION_DIM):
            raise ValueError(
                f"exp_basis must be (V, 3, {EXPRESSION_DIM}), "
                f"got {self.exp_basis.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be (T, 3)")
        if self.triangles.min(initial=0) < 0 or \
                self.triangles.max(initial=-1) >= v:
            raise ValueError("triangle indices out of vertex range")
        if self.uv_coords.shape != (v, 2):
            raise ValueError("uv_coords must be (V, 2)")
        if self.uv_coords.min() < 0.0 or self.uv_coords.max() > 1.0:
            raise ValueError("uv_coords must lie in the unit square")
        for name in ("mean_shape", "id_basis", "exp_basis", "uv_coords"):
            _check_finite(name, getattr(self, name))

    @property
    def vertex_count(self):
        return self.mean_shape.shape[0]

    @property
    def identity_dim(self):
        return self.id_basis.shape[2]


@dataclass
class IdentityParams:
    """Identity coefficients; supplied externally or synthesized."""

    alpha: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        _check_finite("alpha", self.alpha)


@dataclass
class MotionParams:
    """Per-frame motion: expression (64), Euler angle (3), translation (3)."""

    exp: np.ndarray
    angle: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        self.exp = np.asarray(self.exp, dtype=np.float64).reshape(-1)
        self.angle = np.asarray(self.angle, dtype=np.float64).reshape(-1)
        self.trans = np.asarray(self.trans, dtype=np.float64).reshape(-1)
        if self.exp.shape != (EXPRESSION_DIM,):
            raise ValueError(f"exp must have length {EXPRESSION_DIM}, "
                             f"got {self.exp.shape[0]}")
        if self.angle.shape != (3,):
            raise ValueError("angle must have length 3")
        if self.trans.shape != (3,):
            raise ValueError("trans must have length 3")
        for name in ("exp", "angle", "trans"):
            _check_finite(name, getattr(self, name))

    @classmethod
    def zero(cls):
        return cls(np.zeros(EXPRESSION_DIM), np.zeros(3), np.zeros(3))


@dataclass
class FaceMesh:
    vertices: np.ndarray   # (V, 3)
    triangles: np.ndarray  # (T, 3)
    uv_coords: np.ndarray  # (V, 2)


@dataclass
class CameraConfig:
    """Weak-perspective camera: uniform scale plus 2D principal point."""

    scale: float = 1.0
    principal: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("camera scale must be positive")


def motion_descriptor(exp, angle, trans):
    """Concatenate (expression, angle, translation) into one 70-vector."""
    exp = np.asarray(exp, dtype=np.float64).reshape(-1)
    angle = np.asarray(angle, dtype=np.float64).reshape(-1)
    trans = np.asarray(trans, dtype=np.float64).reshape(-1)
    if exp.shape[0] != EXPRESSION_DIM or angle.shape[0] != 3 \
            or trans.shape[0] != 3:
        raise ValueError(
            f"motion segments must have lengths ({EXPRESSION_DIM}, 3, 3), got"
            f" ({exp.shape[0]}, {angle.shape[0]}, {trans.shape[0]})")
    return np.concatenate([exp, angle, trans])


def split_motion(vec):
    """Inverse of motion_descriptor."""
    vec = np.asarray(vec, dtype=np.float64).reshape(-1)
    if vec.shape[0] != MOTION_DIM:
        raise ValueError(f"motion vector must have length {MOTION_DIM}")
    return MotionParams(vec[:EXPRESSION_DIM],
                        vec[EXPRESSION_DIM:EXPRESSION_DIM + 3],
                        vec[EXPRESSION_DIM + 3:])


def build_mesh(basis, identity, exp):
    """Evaluate the linear model at (identity, expression) coefficients."""
    alpha = np.asarray(identity.alpha if isinstance(identity, IdentityParams)
                       else identity, dtype=np.float64).reshape(-1)
    exp = np.asarray(exp, dtype=np.float64).reshape(-1)
    if alpha.shape[0] != basis.identity_dim:
        raise ValueError(
            f"identity coefficients have length {alpha.shape[0]}, basis "
            f"expects {basis.identity_dim}")
    if exp.shape[0] != EXPRESSION_DIM:
        raise ValueError(
            f"expression coefficients must have length {EXPRESSION_DIM}")
    vertices = (basis.mean_shape
                + basis.id_basis @ alpha
                + basis.exp_basis @ exp)
    return FaceMesh(vertices, basis.triangles, basis.uv_coords)


def euler_to_rotation(angle):
    """Intrinsic X->Y->Z Euler angles (pitch, yaw, roll) to a 3x3 matrix."""
    angle = np.asarray(angle, dtype=np.float64).reshape(-1)
    if angle.shape[0] != 3:
        raise ValueError("angle must have length 3")
    _check_finite("angle", angle)
    ax, ay, az = angle
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rx @ ry @ rz


def project_vertices(mesh, motion, camera=None):
    """Pose and project vertices; x/y are screen coords, z is kept depth."""
    camera = camera or CameraConfig()
    rot = euler_to_rotation(motion.angle)
    out = camera.scale * (mesh.vertices @ rot.T) + motion.trans
    out = out.copy()
    out[:, 0] += camera.principal[0]
    out[:, 1] += camera.principal[1]
    return out


def _smooth_field(rng, grid, out_n):
    """Bilinearly upsample a random control grid to out_n x out_n."""
    ctrl = rng.standard_normal((grid, grid))
    s = np.linspace(0.0, grid - 1.0, out_n)
    i0 = np.clip(np.floor(s).astype(int), 0, grid - 2)
    f = s - i0
    rows = (ctrl[i0, :] * (1 - f)[:, None] + ctrl[i0 + 1, :] * f[:, None])
    vals = (rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :])
    return vals


def synthetic_basis(n_grid=23, identity_dim=80, seed=0,
                    id_scale=0.02, exp_scale=0.05):
    """Procedural low-poly head for tests and the synthetic corpus.

    A smooth dome ("face patch") over an n_grid x n_grid parameter grid,
    facing +z, with a nose-like bump; basis directions are smooth random
    fields so coefficients deform the surface without folds.
    """
    rng = np.random.default_rng(seed)
    n = n_grid
    s, t = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n),
                       indexing="xy")
    x = (s - 0.5)                       # half-width 0.5 in screen units
    y = (t - 0.5)
    r2 = (2 * s - 1) ** 2 + (2 * t - 1) ** 2
    z = 0.35 * np.exp(-1.2 * r2)
    z += 0.08 * np.exp(-(((2 * s - 1) / 0.25) ** 2
                         + ((2 * t - 0.6) / 0.3) ** 2))  # nose bump
    mean = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def smooth_basis(count, scale):
        basis = np.zeros((n * n, 3, count))
        for k in range(count):
            for axis in range(3):
                basis[:, axis, k] = _smooth_field(rng, 4, n).ravel() * scale
        return basis

    id_basis = smooth_basis(identity_dim, id_scale)
    exp_basis = smooth_basis(EXPRESSION_DIM, exp_scale)

    tris = []
    for row in range(n - 1):
        for col in range(n - 1):
            v00 = row * n + col
            v01 = v00 + 1
            v10 = v00 + n
            v11 = v10 + 1
            tris.append([v00, v01, v10])
            tris.append([v01, v11, v10])
    tris = np.asarray(tris, dtype=np.int32)

    # orient every triangle front-facing (+z outward) at the neutral pose
    a = mean[tris[:, 0], :2]
    b = mean[tris[:, 1], :2]
    c = mean[tris[:, 2], :2]
    area2 = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
             - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    flip = area2 < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    uv = np.stack([s.ravel(), t.ravel()], axis=1)
    return MorphableBasis(mean, id_basis, exp_basis, tris, uv)
