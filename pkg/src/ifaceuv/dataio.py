"""Dataset layout, motion/identity files, checkpoints, synthetic corpus.

Directory layout mirrors cropped talking-head corpora:

    root/basis.bin
    root/{train,test}/{identity}/identity.json
    root/{train,test}/{identity}/{video}/000000.png ... motion.jsonl

Motion files are line-delimited JSON rows {"exp": [64], "angle": [3],
"trans": [3]} with 9-significant-digit decimals: values are quantized to
float32 on write, and 9 digits round-trips float32 exactly, so
read(write(x)) == x for any float32-representable x.

Checkpoints use a binary container: magic "IFUV", u32 version, u32 entry
count, then per entry u16 name length, UTF-8 name, u8 dtype code
(0=float32, 1=uint8, 2=int32), u8 rank, u32 dims, raw little-endian data.
"""

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .facemodel import (CameraConfig, IdentityParams, MotionParams,
                        build_mesh, project_vertices, synthetic_basis)
from .rendering import composite, rasterize

DATA_ROOT_ENV = "IFACEUV_DATA_ROOT"
CHECKPOINT_MAGIC = b"IFUV"
CHECKPOINT_VERSION = 1
_DTYPES = {0: np.float32, 1: np.uint8, 2: np.int32}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.uint8): 1,
                np.dtype(np.int32): 2}


class CheckpointError(Exception):
    """Base for checkpoint container failures."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


def _atomic_write(path, data):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------- images

def save_image(tensor, path):
    """Save a (3, H, W) float image in [-1, 1] as an 8-bit PNG."""
    arr = tensor.detach().cpu().numpy() if torch.is_tensor(tensor) \
        else np.asarray(tensor)
    arr = np.clip((arr + 1.0) * 127.5, 0.0, 255.0)
    arr = np.rint(arr).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path)


def load_image(path):
    """Load a PNG as a (3, H, W) float32 tensor in [-1, 1]."""
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1) / 127.5 - 1.0)


# ------------------------------------------------------- motion/identity

def _fmt(values):
    return "[" + ",".join(f"{float(np.float32(v)):.9g}" for v in values) \
        + "]"


def write_motion_file(path, rows):
    """Write MotionParams rows as line-delimited JSON (float32 precision)."""
    lines = []
    for m in rows:
        lines.append('{"exp":%s,"angle":%s,"trans":%s}'
                     % (_fmt(m.exp), _fmt(m.angle), _fmt(m.trans)))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_motion_file(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(
                    f"{path}:{lineno}: malformed JSON: {exc}") from exc
            for field in ("exp", "angle", "trans"):
                if field not in obj:
                    raise ValueError(
                        f"{path}:{lineno}: missing field '{field}'")
            try:
                rows.append(MotionParams(
                    np.asarray(obj["exp"], dtype=np.float32),
                    np.asarray(obj["angle"], dtype=np.float32),
                    np.asarray(obj["trans"], dtype=np.float32)))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_identity_file(path, identity):
    payload = '{"alpha":%s}\n' % _fmt(identity.alpha)
    _atomic_write(path, payload.encode("utf-8"))


def read_identity_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if "alpha" not in obj:
        raise ValueError(f"{path}: missing field 'alpha'")
    return IdentityParams(np.asarray(obj["alpha"], dtype=np.float32))


# ------------------------------------------------------------ checkpoint

def _coerce_array(value):
    if torch.is_tensor(value):
        value = value.detach().cpu().numpy()
    value = np.asarray(value)
    if value.dtype not in _DTYPE_CODES:
        value = value.astype(np.float32)
    return np.ascontiguousarray(value)


def save_checkpoint(arrays, path, config=None):
    """Serialize named arrays (+ optional config echo) bit-exactly."""
    items = dict(arrays)
    if config is not None:
        items["__config__"] = np.frombuffer(
            json.dumps(config, sort_keys=True).encode("utf-8"),
            dtype=np.uint8)
    chunks = [CHECKPOINT_MAGIC,
              struct.pack("<II", CHECKPOINT_VERSION, len(items))]
    for name in sorted(items):
        arr = _coerce_array(items[name])
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype],
                                  arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        chunks.append(le.tobytes())
    _atomic_write(path, b"".join(chunks))


def load_checkpoint(path):
    """Returns (arrays dict, config dict or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise TruncatedError(
                f"{path}: truncated while reading {what} "
                f"(need {n} bytes at offset {pos}, file has {len(view)})")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, expected "
            f"{CHECKPOINT_VERSION}")
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = bytes(take(nlen, "name")).decode("utf-8")
        code, rank = struct.unpack("<BB", take(2, "entry header"))
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        dtype = np.dtype(_DTYPES[code]).newbyteorder("<")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        data = take(nbytes, f"data of '{name}'")
        arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape) \
            .astype(_DTYPES[code])
    config = None
    if "__config__" in arrays:
        config = json.loads(arrays.pop("__config__").tobytes()
                            .decode("utf-8"))
    return arrays, config


# ----------------------------------------------------------- basis files

_BASIS_ENTRIES = ("mean_shape", "id_basis", "exp_basis", "triangles",
                  "uv_coords")


def save_basis(basis, path):
    arrays = {
        "mean_shape": basis.mean_shape.astype(np.float32),
        "id_basis": basis.id_basis.astype(np.float32),
        "exp_basis": basis.exp_basis.astype(np.float32),
        "triangles": basis.triangles.astype(np.int32),
        "uv_coords": basis.uv_coords.astype(np.float32),
    }
    save_checkpoint(arrays, path)


def load_basis(path):
    arrays, _ = load_checkpoint(path)
    missing = [k for k in _BASIS_ENTRIES if k not in arrays]
    if missing:
        raise CheckpointError(f"{path}: basis entries missing: {missing}")
    from .facemodel import MorphableBasis
    return MorphableBasis(arrays["mean_shape"], arrays["id_basis"],
                          arrays["exp_basis"], arrays["triangles"],
                          arrays["uv_coords"])


# --------------------------------------------------------- video records

@dataclass
class VideoRecord:
    identity_id: str
    video_id: str
    frame_paths: list
    motion: list          # MotionParams per frame
    identity: IdentityParams

    def __post_init__(self):
        if len(self.frame_paths) != len(self.motion):
            raise ValueError(
                f"{self.identity_id}/{self.video_id}: {len(self.frame_paths)}"
                f" frames but {len(self.motion)} motion rows")


def load_video(video_dir):
    video_dir = Path(video_dir)
    frames = sorted(video_dir.glob("*.png"))
    motion = read_motion_file(video_dir / "motion.jsonl")
    identity = read_identity_file(video_dir.parent / "identity.json")
    return VideoRecord(video_dir.parent.name, video_dir.name,
                       [str(p) for p in frames], motion, identity)


def resolve_data_root(root=None):
    root = root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise ValueError(
            f"no dataset root given and {DATA_ROOT_ENV} is unset")
    return Path(root)


def load_split(root, split="train"):
    split_dir = resolve_data_root(root) / split
    if not split_dir.is_dir():
        raise FileNotFoundError(f"dataset split not found: {split_dir}")
    records = []
    for ident_dir in sorted(split_dir.iterdir()):
        if not ident_dir.is_dir():
            continue
        for video_dir in sorted(ident_dir.iterdir()):
            if video_dir.is_dir():
                records.append(load_video(video_dir))
    if not records:
        raise FileNotFoundError(f"no videos under {split_dir}")
    return records


# ------------------------------------------------------- synthetic corpus

def smooth_texture(rng, resolution, n_waves=3, max_cycles=0.6,
                   amp_range=(0.08, 0.18), base_range=(-0.3, 0.3)):
    """Band-limited random RGB field in [-0.9, 0.9]; smooth enough that
    the render/unwrap round trip stays within about 1e-3."""
    u = (np.arange(resolution) + 0.5) / resolution
    uu, vv = np.meshgrid(u, u, indexing="xy")
    out = np.zeros((3, resolution, resolution))
    for ch in range(3):
        field = rng.uniform(*base_range)
        for _ in range(n_waves):
            p, q = rng.uniform(-max_cycles, max_cycles, size=2)
            amp = rng.uniform(*amp_range)
            phase = rng.uniform(0, 2 * np.pi)
            field = field + amp * np.cos(2 * np.pi * (p * uu + q * vv)
                                         + phase)
        out[ch] = field
    return torch.as_tensor(np.clip(out, -0.9, 0.9), dtype=torch.float32)


def smooth_trajectory(rng, n_frames, dims, amplitude, max_delta):
    """Sine-mixture trajectories with per-frame deltas <= max_delta."""
    t = np.arange(n_frames)
    out = np.zeros((n_frames, dims))
    for d in range(dims):
        amp = amplitude * rng.uniform(0.3, 1.0)
        freq = rng.uniform(0.5, 1.5)
        phase = rng.uniform(0, 2 * np.pi)
        out[:, d] = amp * np.sin(2 * np.pi * freq * t / n_frames + phase)
    deltas = np.abs(np.diff(out, axis=0)).max() if n_frames > 1 else 0.0
    if deltas > max_delta:
        out *= max_delta / deltas
    return out


def motion_trajectory(rng, n_frames, exp_amp=0.5, angle_amp=0.18,
                      trans_amp=0.1, max_delta=0.2):
    exp = smooth_trajectory(rng, n_frames, 64, exp_amp, max_delta)
    angle = smooth_trajectory(rng, n_frames, 3, angle_amp, max_delta)
    trans = smooth_trajectory(rng, n_frames, 3, trans_amp, max_delta)
    rows = []
    for t in range(n_frames):
        rows.append(MotionParams(exp[t].astype(np.float32),
                                 angle[t].astype(np.float32),
                                 trans[t].astype(np.float32)))
    return rows


def render_frame(basis, identity, motion, texture, background,
                 camera=None, resolution=64):
    """Rasterize the posed face over the background; the corpus generator
    and self-consistency tests share this exact path."""
    mesh = build_mesh(basis, identity, motion.exp)
    projected = project_vertices(mesh, motion, camera)
    raster = rasterize(mesh, projected, texture, resolution)
    return composite(background, raster.image, raster.mask), mesh


@dataclass
class CorpusSpec:
    n_identities: int = 4
    frames_per_video: int = 32
    resolution: int = 64
    seed: int = 0
    n_test_identities: int = 0
    texture_resolution: int = 32


def generate_synthetic_corpus(root, spec=None, **kwargs):
    """Render a deterministic corpus; returns the root path.

    Per identity: seeded identity coefficients, a smooth facial texture and
    background, and sine-mixture motion with bounded per-frame deltas.
    Frames render through the in-repo model + rasterizer, so the training
    objective is realizable by construction.
    """
    spec = spec or CorpusSpec(**kwargs)
    if spec.n_identities < 1 or spec.frames_per_video < 1 \
            or spec.resolution < 8:
        raise ValueError("corpus counts must be positive")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    basis = synthetic_basis(seed=spec.seed)
    save_basis(basis, root / "basis.bin")
    camera = CameraConfig()

    splits = [("train", spec.n_identities),
              ("test", spec.n_test_identities)]
    ident_counter = 0
    for split, count in splits:
        for _ in range(count):
            rng = np.random.default_rng([spec.seed, ident_counter])
            ident_id = f"id_{ident_counter:04d}"
            ident_dir = root / split / ident_id
            video_dir = ident_dir / "vid_0000"
            video_dir.mkdir(parents=True, exist_ok=True)

            alpha = rng.normal(0.0, 0.5, basis.identity_dim) \
                .astype(np.float32)
            identity = IdentityParams(alpha)
            write_identity_file(ident_dir / "identity.json", identity)

            texture = smooth_texture(rng, spec.texture_resolution)
            background = smooth_texture(rng, spec.resolution, n_waves=4,
                                        max_cycles=2.0,
                                        amp_range=(0.1, 0.3))
            motion = motion_trajectory(rng, spec.frames_per_video)
            write_motion_file(video_dir / "motion.jsonl", motion)

            for t, m in enumerate(motion):
                frame, _ = render_frame(basis, identity, m, texture,
                                        background, camera,
                                        spec.resolution)
                save_image(frame, video_dir / f"{t:06d}.png")
            ident_counter += 1
    return root


def corpus_texture(seed, identity_index, resolution=32):
    """The generating texture of a corpus identity (for consistency checks).

    Replays the identity RNG stream exactly as generate_synthetic_corpus.
    """
    rng = np.random.default_rng([seed, identity_index])
    rng.normal(0.0, 0.5, synthetic_basis(seed=seed).identity_dim)
    return smooth_texture(rng, resolution)
