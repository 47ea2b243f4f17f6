"""Joint end-to-end training and evaluation runs.

Each step samples random (source, target) frame pairs within videos,
runs the full pipeline in both directions (the swapped direction feeds the
UV consistency term), and applies one Adam update to all four networks.
Batch composition is a pure function of (seed, step), so interrupted runs
resume bit-exactly from a checkpoint.
"""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataio import (load_basis, load_checkpoint, load_image, load_split,
                     save_checkpoint)
from .editing import LossWeights, edit_loss, total_loss
from .facemodel import build_mesh, project_vertices
from .metrics import (PyramidEmbedder, RandomProjectionEmbedder, aed, apd,
                      csim, fid, metrics_report, perceptual_distance)
from .motion import assemble_window
from .perceptual import make_extractor
from .pipeline import ModelConfig, ReenactModel
from .rendering import composite, rasterize
from .uvtex import consistency_loss, uvref_loss
from .warping import upsample_flow, warp_image, warp_loss


@dataclass
class TrainConfig:
    data_root: str = ""
    out_dir: str = ""
    resolution: int = 64
    uv_resolution: int = 64
    window_half_width: int = 1
    channels: int = 16
    seed: int = 0
    lr: float = 1e-4
    steps: int = 2000
    batch_size: int = 4
    lambda_warp: float = 2.5
    lambda_uvref: float = 4.0
    lambda_cons: float = 1.0
    lambda_edit: float = 4.0
    checkpoint_every: int = 500
    holdout_frames: int = 4
    extractor: str = "pyramid"

    def loss_weights(self):
        return LossWeights(self.lambda_warp, self.lambda_uvref,
                           self.lambda_cons, self.lambda_edit)

    def model_config(self):
        return ModelConfig(self.resolution, self.uv_resolution,
                           self.window_half_width, self.channels,
                           self.seed, self.extractor)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


class FrameCache:
    """Loads corpus frames once; training re-reads tensors from memory."""

    def __init__(self, records):
        self.records = records
        self._frames = {}
        self._uv = {}

    def frame(self, rec_idx, frame_idx):
        key = (rec_idx, frame_idx)
        if key not in self._frames:
            self._frames[key] = load_image(
                self.records[rec_idx].frame_paths[frame_idx])
        return self._frames[key]

    def source_uv(self, model, rec_idx, frame_idx):
        key = (rec_idx, frame_idx, model.config.uv_resolution)
        if key not in self._uv:
            rec = self.records[rec_idx]
            self._uv[key] = model.source_uv(
                self.frame(rec_idx, frame_idx), rec.motion[frame_idx],
                rec.identity)
        return self._uv[key]


@dataclass
class TrainState:
    model: ReenactModel
    optimizer: torch.optim.Adam
    extractor: object
    weights: LossWeights
    config: TrainConfig
    cache: FrameCache
    step: int = 0
    log_rows: list = field(default_factory=list)


def _sample_batch(state):
    """Deterministic batch for this step: (record, source, target) tuples."""
    cfg = state.config
    rng = np.random.default_rng([cfg.seed, state.step])
    batch = []
    for _ in range(cfg.batch_size):
        rec_idx = int(rng.integers(len(state.cache.records)))
        n = len(state.cache.records[rec_idx].frame_paths)
        usable = max(n - cfg.holdout_frames, 2)
        src = int(rng.integers(usable))
        tgt = int(rng.integers(usable))
        batch.append((rec_idx, src, tgt))
    return batch


def _windows(records, batch, half_width, center_of):
    rows = []
    for rec_idx, src, tgt in batch:
        motion = records[rec_idx].motion
        rows.append(assemble_window(motion, center_of(src, tgt),
                                    half_width).tensor())
    return torch.stack(rows)


def train_step(state, batch=None):
    """One joint optimizer update; returns the loss components as floats."""
    cfg = state.config
    model = state.model
    records = state.cache.records
    if batch is None:
        batch = _sample_batch(state)
    if len(batch) == 0:
        raise ValueError("batch is empty")

    src_imgs = torch.stack([state.cache.frame(r, s) for r, s, _ in batch])
    tgt_imgs = torch.stack([state.cache.frame(r, t) for r, _, t in batch])
    win_t = _windows(records, batch, cfg.window_half_width,
                     lambda s, t: t)
    win_s = _windows(records, batch, cfg.window_half_width,
                     lambda s, t: s)

    z_t = model.encoder(win_t)
    z_s = model.encoder(win_s)

    flow = model.warp(src_imgs, z_t)
    background = warp_image(src_imgs, upsample_flow(flow))

    uv_src = [state.cache.source_uv(model, r, s) for r, s, _ in batch]
    uv_tgt = [state.cache.source_uv(model, r, t) for r, _, t in batch]
    refined_s = model.refiner(
        src_imgs, torch.stack([u.color for u in uv_src]),
        torch.stack([u.validity for u in uv_src]), z_t)
    refined_t = model.refiner(
        tgt_imgs, torch.stack([u.color for u in uv_tgt]),
        torch.stack([u.validity for u in uv_tgt]), z_s)

    rendered, masks = [], []
    for i, (rec_idx, _, tgt) in enumerate(batch):
        rec = records[rec_idx]
        motion = rec.motion[tgt]
        mesh = build_mesh(model.basis, rec.identity, motion.exp)
        projected = project_vertices(mesh, motion, model.camera)
        raster = rasterize(mesh, projected, refined_s[i], cfg.resolution)
        rendered.append(raster.image)
        masks.append(raster.mask)
    rendered = torch.stack(rendered)
    masks = torch.stack(masks)
    combined = composite(background, rendered, masks)

    final = model.editor(src_imgs, background, combined, z_t)

    l_warp = warp_loss(tgt_imgs, background, state.extractor)
    l_uvref = uvref_loss(tgt_imgs, combined, state.extractor)
    l_cons = consistency_loss(refined_s, refined_t)
    l_edit = edit_loss(tgt_imgs, final, state.extractor)
    # non-finite values can hide behind border clamping (a NaN flow still
    # warps to finite pixels), so the intermediates are checked too
    checks = (("warp", flow), ("warp", background),
              ("uvref", refined_s), ("uvref", refined_t),
              ("uvref", combined), ("edit", final),
              ("warp", l_warp), ("uvref", l_uvref), ("cons", l_cons),
              ("edit", l_edit))
    for name, value in checks:
        if not torch.isfinite(value).all():
            raise RuntimeError(
                f"non-finite loss component '{name}' at step {state.step}")
    loss = total_loss(l_warp, l_uvref, l_cons, l_edit, state.weights)

    state.optimizer.zero_grad()
    loss.backward()
    state.optimizer.step()
    state.step += 1
    return {"l_warp": float(l_warp.detach()),
            "l_uvref": float(l_uvref.detach()),
            "l_cons": float(l_cons.detach()),
            "l_edit": float(l_edit.detach()),
            "total": float(loss.detach())}


# ------------------------------------------------------------ checkpoints

def _optimizer_arrays(model, optimizer):
    out = {}
    named = []
    for prefix, net in model.networks().items():
        for name, p in net.named_parameters():
            named.append((f"{prefix}.{name}", p))
    for pname, p in named:
        s = optimizer.state.get(p)
        if not s:
            continue
        out[f"opt.{pname}.step"] = np.asarray(
            [float(s["step"])], dtype=np.float32)
        out[f"opt.{pname}.exp_avg"] = s["exp_avg"].numpy() \
            .astype(np.float32)
        out[f"opt.{pname}.exp_avg_sq"] = s["exp_avg_sq"].numpy() \
            .astype(np.float32)
    return out


def _restore_optimizer(model, optimizer, arrays):
    for prefix, net in model.networks().items():
        for name, p in net.named_parameters():
            key = f"opt.{prefix}.{name}"
            if f"{key}.exp_avg" not in arrays:
                continue
            optimizer.state[p] = {
                "step": torch.tensor(float(arrays[f"{key}.step"][0])),
                "exp_avg": torch.as_tensor(
                    arrays[f"{key}.exp_avg"]).reshape(p.shape).clone(),
                "exp_avg_sq": torch.as_tensor(
                    arrays[f"{key}.exp_avg_sq"]).reshape(p.shape).clone(),
            }


def save_train_checkpoint(state, path):
    arrays = state.model.state_arrays()
    arrays.update(_optimizer_arrays(state.model, state.optimizer))
    arrays["trainer.step"] = np.asarray([state.step], dtype=np.float32)
    config = {"model": state.model.config.to_dict(),
              "train": asdict(state.config)}
    save_checkpoint(arrays, path, config)


def make_state(config, records=None):
    root = Path(config.data_root)
    basis = load_basis(root / "basis.bin")
    records = records or load_split(root, "train")
    model = ReenactModel(basis, config.model_config())
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    extractor = make_extractor(config.extractor)
    return TrainState(model, optimizer, extractor, config.loss_weights(),
                      config, FrameCache(records))


def restore_state(config, checkpoint_path, records=None):
    state = make_state(config, records)
    arrays, _ = load_checkpoint(checkpoint_path)
    state.model.load_state_arrays(arrays)
    _restore_optimizer(state.model, state.optimizer, arrays)
    state.step = int(arrays["trainer.step"][0])
    return state


def train(config, resume_from=None):
    """Run the configured number of steps; returns (state, final ckpt path).

    Writes loss_log.csv plus periodic and final checkpoints to out_dir.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not Path(config.data_root).is_dir():
        raise FileNotFoundError(f"dataset root missing: {config.data_root}")
    state = restore_state(config, resume_from) if resume_from \
        else make_state(config)

    log_path = out_dir / "loss_log.csv"
    mode = "a" if resume_from and log_path.exists() else "w"
    with open(log_path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(["step", "l_warp", "l_uvref", "l_cons",
                             "l_edit", "total"])
        while state.step < config.steps:
            losses = train_step(state)
            state.log_rows.append(losses)
            writer.writerow([state.step,
                             f"{losses['l_warp']:.9g}",
                             f"{losses['l_uvref']:.9g}",
                             f"{losses['l_cons']:.9g}",
                             f"{losses['l_edit']:.9g}",
                             f"{losses['total']:.9g}"])
            if state.step % config.checkpoint_every == 0:
                save_train_checkpoint(
                    state, out_dir / f"checkpoint_{state.step:06d}.bin")
    final_path = out_dir / "checkpoint_final.bin"
    save_train_checkpoint(state, final_path)
    return state, final_path


def load_model_from_checkpoint(checkpoint_path, data_root):
    arrays, config = load_checkpoint(checkpoint_path)
    if config is None or "model" not in config:
        raise ValueError(f"{checkpoint_path}: no model config echo")
    basis = load_basis(Path(data_root) / "basis.bin")
    model = ReenactModel(basis, ModelConfig.from_dict(config["model"]))
    model.load_state_arrays(arrays)
    model.eval()
    return model, config


# ------------------------------------------------------------- evaluation

def reenact_sequence(model, record, cache, target_indices, driver=None):
    """Self- or cross-reenactment of the listed frames; source is frame 0."""
    driver = driver or record
    source = cache.frame_for(record, 0)
    initial_uv = model.source_uv(source, record.motion[0], record.identity)
    frames = []
    with torch.no_grad():
        for t in target_indices:
            window = model.window_for(driver.motion, t)
            out = model.reenact(source, record.motion[0], record.identity,
                                window, initial_uv=initial_uv)
            frames.append(out["final"])
    return source, frames


class _EvalCache:
    def __init__(self):
        self._frames = {}

    def frame_for(self, record, idx):
        key = (id(record), idx)
        if key not in self._frames:
            self._frames[key] = load_image(record.frame_paths[idx])
        return self._frames[key]


def compute_metrics(generated, gt_frames, driving_motion, gt_motion,
                    source, mode, extractor=None, embedder=None,
                    identity_embedder=None):
    """Metric report over aligned generated/ground-truth frame lists.

    ``source`` is one tensor or a per-frame list (CSIM pairs each output
    with its own source image).
    """
    if len(generated) == 0:
        raise ValueError("no frames to evaluate")
    extractor = extractor or make_extractor("pyramid")
    embedder = embedder or PyramidEmbedder()
    identity_embedder = identity_embedder or RandomProjectionEmbedder(
        resolution=generated[0].shape[-1])
    gen_stack = torch.stack(generated)
    gt_stack = torch.stack(gt_frames)
    fid_value = fid(embedder(gen_stack), embedder(gt_stack))
    sources = source if isinstance(source, (list, tuple)) \
        else [source] * len(generated)
    csim_value = float(np.mean([
        csim(identity_embedder(s), identity_embedder(f))
        for s, f in zip(sources, generated)]))
    aed_value = aed(driving_motion, gt_motion)
    if mode == "same":
        lpips = float(np.mean([
            perceptual_distance(g, t, extractor)
            for g, t in zip(generated, gt_frames)]))
        apd_value = apd(driving_motion, gt_motion)
        report = metrics_report("same", len(generated), fid_value, lpips,
                                aed_value, apd_value, csim_value)
        report["pixel_mae"] = float((gen_stack - gt_stack).abs().mean())
        return report
    return metrics_report("cross", len(generated), fid_value, None,
                          aed_value, None, csim_value)


def evaluate(checkpoint_path, data_root, split="train", mode="same"):
    """Reenact the split per protocol and compute the metric report.

    Same-identity: frame 0 is the source, later frames are targets (the
    'holdout' split selects the trailing frames of train videos that the
    trainer never sampled). Cross-identity: each video is driven by the
    next video's motion; APD is omitted.
    """
    model, config = load_model_from_checkpoint(checkpoint_path, data_root)
    actual_split = "train" if split == "holdout" else split
    records = load_split(data_root, actual_split)
    if len(records) == 0:
        raise ValueError(f"split {split} is empty")
    holdout = config.get("train", {}).get("holdout_frames", 4)
    cache = _EvalCache()

    all_gen, all_gt, all_drive, all_gtm, all_src = [], [], [], [], []
    for i, rec in enumerate(records):
        n = len(rec.frame_paths)
        if split == "holdout":
            targets = list(range(max(n - holdout, 1), n))
        else:
            targets = list(range(1, n))
        driver = rec if mode == "same" else records[(i + 1) % len(records)]
        targets = [t for t in targets if t < len(driver.motion)]
        source, frames = reenact_sequence(model, rec, cache, targets,
                                          driver=driver)
        all_gen.extend(frames)
        all_src.extend([source] * len(frames))
        all_gt.extend(cache.frame_for(driver, t) for t in targets)
        all_drive.extend(driver.motion[t] for t in targets)
        all_gtm.extend(driver.motion[t] for t in targets)
    return compute_metrics(all_gen, all_gt, all_drive, all_gtm,
                           all_src, mode)
