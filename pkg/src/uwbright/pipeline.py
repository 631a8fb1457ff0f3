"""End-to-end orchestration: config, dataset split, training, checkpoints,
and enhancement of unseen images with a trained model.

The diffusion chain is defined over the bright reference image; the denoiser
is conditioned on the dark image's fusion map and the target brightness
level. Every random draw flows from explicit seeds, so runs replay exactly
(including across a resume).
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import diffusion
from .denoiser import DenoiserConfig, NoisePredictor, brightness_of, predict_noise
from .losses import FeatureExtractor, LossReport, LossWeights, composite_loss, simple_loss
from .preprocess import (
    FusionMap,
    RawImage,
    TrainingTriple,
    build_training_set,
    color_map,
    fuse,
    load_triples,
    snr_map,
    MANIFEST_NAME,
)
from .imageops import list_image_files, load_image, resize_bilinear, save_image

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
TRAIN_LOG_NAME = "train_log.jsonl"
SPLIT_NAME = "split.json"
ENHANCED_SUFFIX = "_enhanced"


class CheckpointError(RuntimeError):
    """Raised for version mismatches, corruption, or unreadable checkpoints."""


@dataclass(frozen=True)
class TrainConfig:
    image_size: int = 64
    batch_size: int = 8
    epochs: int = 50  # desk-scale default; full-scale runs use 1000
    lr: float = 5e-5
    weight_decay: float = 1e-4
    split: float = 0.9
    stage_switch_epoch: int = 20
    seed: int = 0
    diffusion_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    ddim_steps: int = 50
    cond_dropout_prob: float = 0.1
    base_channels: int = 64
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    infer_brightness: float = 0.55
    extractor: str = "seeded"  # "seeded" (offline) or "pretrained"
    device: str = "cpu"
    threads: int = 1  # torch CPU threads; 1 = deterministic mode, 0 = library default
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ValueError(f"split must be in (0, 1), got {self.split}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.threads < 0:
            raise ValueError(f"threads must be >= 0, got {self.threads}")
        if self.extractor not in ("seeded", "pretrained"):
            raise ValueError(f"extractor must be 'seeded' or 'pretrained', got {self.extractor}")

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["channel_multipliers"] = list(self.channel_multipliers)
        return data

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        data = dict(mapping)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "channel_multipliers" in data:
            data["channel_multipliers"] = tuple(data["channel_multipliers"])
        if isinstance(data.get("loss_weights"), dict):
            data["loss_weights"] = LossWeights(**data["loss_weights"])
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_mapping(json.load(fh))

    def merged(self, overrides: dict) -> "TrainConfig":
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return self.from_mapping(data)

    def schedule(self) -> diffusion.NoiseSchedule:
        return diffusion.make_schedule(self.diffusion_steps, self.beta_start, self.beta_end)

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            base_channels=self.base_channels,
            channel_multipliers=self.channel_multipliers,
            cond_dropout_prob=self.cond_dropout_prob,
        )

    def make_extractor(self) -> FeatureExtractor:
        if self.extractor == "pretrained":
            return FeatureExtractor.pretrained()
        return FeatureExtractor.seeded(self.seed)


@dataclass(frozen=True)
class TrainSample:
    """One loss evaluation: dark input, bright reference, conditioning, draws."""

    low: RawImage
    high: RawImage
    fusion: FusionMap
    brightness: float
    t: int
    noise: np.ndarray


def make_train_sample(triple: TrainingTriple, rng: np.random.Generator, T: int) -> TrainSample:
    """Draw t uniform in [1, T] and unit Gaussian noise for one triple."""
    t = int(rng.integers(1, T + 1))
    noise = rng.standard_normal(triple.high.pixels.shape).astype(np.float32)
    return TrainSample(
        low=triple.low,
        high=triple.high,
        fusion=triple.fusion,
        brightness=brightness_of(triple.high),
        t=t,
        noise=noise,
    )


def split_dataset(items: Sequence, split: float, seed: int) -> tuple[list, list]:
    """Seeded shuffle then split; both parts nonempty, disjoint, exhaustive."""
    if len(items) < 2:
        raise ValueError(f"need at least 2 items to split, got {len(items)}")
    if not 0.0 < split < 1.0:
        raise ValueError(f"split must be in (0, 1), got {split}")
    order = np.random.default_rng(seed).permutation(len(items))
    n_train = min(max(round(split * len(items)), 1), len(items) - 1)
    train = [items[i] for i in order[:n_train]]
    test = [items[i] for i in order[n_train:]]
    return train, test


def _chw(array: np.ndarray, device) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(array)).permute(2, 0, 1).to(device)


def train_step(
    model: NoisePredictor,
    sample: TrainSample | Sequence[TrainSample],
    sched: diffusion.NoiseSchedule,
    epoch: int,
    weights: LossWeights,
    optimizer: torch.optim.Optimizer,
    extractor: FeatureExtractor,
    stage_switch_epoch: int = 20,
    rng: np.random.Generator | None = None,
) -> LossReport:
    """One optimization step over a sample or batch of samples.

    Noises the bright reference to its drawn timestep, estimates the noise
    conditioned on the dark image's fusion map and brightness level, and
    minimizes the simple noise loss plus the staged composite on the
    reconstructed image. The returned report carries the pre-step values,
    with the simple term included at weight 1.
    """
    samples = [sample] if isinstance(sample, TrainSample) else list(sample)
    if not samples:
        raise ValueError("empty batch")
    device = next(model.parameters()).device

    high = torch.stack([_chw(s.high.pixels, device) for s in samples])
    eps = torch.stack([_chw(s.noise, device) for s in samples])
    cond = torch.stack([_chw(s.fusion.values, device) for s in samples])
    lam = torch.tensor([s.brightness for s in samples], dtype=high.dtype, device=device)
    t = torch.tensor([float(s.t) for s in samples], device=device)

    x_t = torch.stack(
        [diffusion.sample_xt(high[i], s.t, sched, eps[i]) for i, s in enumerate(samples)]
    )
    eps_hat = predict_noise(model, x_t, t, cond, lam, rng=rng)
    # The image-space terms are defined on the [0,1] domain; without the
    # clamp, high-t reconstructions are amplified by 1/sqrt(alpha_bar) and
    # the composite becomes a heavy-tailed function of the drawn timestep.
    x0_hat = torch.stack(
        [diffusion.predict_x0(x_t[i], s.t, eps_hat[i], sched) for i, s in enumerate(samples)]
    ).clamp(0.0, 1.0)

    simple = simple_loss(eps, eps_hat)
    comp = composite_loss(x0_hat, high, epoch, weights, extractor, stage_switch_epoch)
    total = simple + comp.total
    if not torch.isfinite(total):
        terms = {name: float(v.detach()) for name, v in comp.per_term.items()}
        raise RuntimeError(
            f"non-finite loss at epoch {epoch}: simple={float(simple.detach())}, "
            f"terms={terms}, timesteps={[s.t for s in samples]}"
        )

    optimizer.zero_grad()
    total.backward()
    optimizer.step()

    per_term = {"simple": simple.detach(), **{k: v.detach() for k, v in comp.per_term.items()}}
    return LossReport(
        total=total.detach(),
        per_term=per_term,
        active_terms=comp.active_terms | {"simple"},
    )


def _payload_bytes(payload: dict) -> bytes:
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    return buffer.getvalue()


def save_checkpoint(
    path: str | Path,
    model: NoisePredictor,
    optimizer: torch.optim.Optimizer,
    config: TrainConfig,
    epoch: int,
) -> Path:
    """Single-file versioned container with an integrity hash."""
    payload = {
        "config": config.to_dict(),
        "epoch": epoch,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict(),
        "torch_rng_state": torch.get_rng_state(),
    }
    data = _payload_bytes(payload)
    container = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "sha256": hashlib.sha256(data).hexdigest(),
        "payload": data,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(container, path)
    return path


def load_checkpoint(path: str | Path) -> dict:
    """Load and verify a checkpoint container; raises CheckpointError on damage."""
    try:
        container = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(container, dict) or "format_version" not in container:
        raise CheckpointError(f"not a checkpoint container: {path}")
    version = container["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    data = container["payload"]
    if hashlib.sha256(data).hexdigest() != container["sha256"]:
        raise CheckpointError(f"integrity hash mismatch for {path}")
    return torch.load(io.BytesIO(data), map_location="cpu", weights_only=False)


def _checkpoint_path(out_dir: Path, epoch: int) -> Path:
    return out_dir / f"checkpoint_epoch{epoch:04d}.pt"


def _latest_checkpoint(out_dir: Path) -> Path | None:
    candidates = sorted(out_dir.glob("checkpoint_epoch*.pt"))
    return candidates[-1] if candidates else None


def _load_dataset(config: TrainConfig, data_dir: Path) -> list[TrainingTriple]:
    if (data_dir / MANIFEST_NAME).is_file():
        triples = load_triples(data_dir)
    else:
        triples = build_training_set(data_dir, config.seed, config.image_size)
    sizes = {t.low.pixels.shape[0] for t in triples}
    if sizes != {config.image_size}:
        raise ValueError(
            f"triple size(s) {sorted(sizes)} do not match config.image_size="
            f"{config.image_size}; re-run preprocess with a matching --size"
        )
    return triples


def _rewrite_log_upto(log_path: Path, epoch: int) -> None:
    if not log_path.is_file():
        return
    kept = [
        line
        for line in log_path.read_text().splitlines()
        if line.strip() and json.loads(line)["epoch"] <= epoch
    ]
    log_path.write_text("".join(line + "\n" for line in kept))


def train(
    config: TrainConfig,
    data_dir: str | Path,
    out_dir: str | Path,
    resume: bool = False,
) -> Path:
    """Full training run; returns the final checkpoint path.

    Writes per-epoch checkpoints, a JSON-lines log (one record per epoch
    with per-term means, per-step totals, and wall time), and the train/test
    split manifest. With resume=True, continues from the latest checkpoint
    in out_dir without duplicating log records.
    """
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    device = torch.device(config.device)
    if config.threads > 0:
        # multi-threaded CPU reductions are not bitwise reproducible from
        # run to run; one thread is the deterministic mode
        torch.set_num_threads(config.threads)

    triples = _load_dataset(config, data_dir)
    train_set, test_set = split_dataset(triples, config.split, config.seed)
    split_manifest = {
        "train": sorted(t.source_id for t in train_set),
        "test": sorted(t.source_id for t in test_set),
    }
    (out_dir / SPLIT_NAME).write_text(json.dumps(split_manifest, indent=2) + "\n")

    torch.manual_seed(config.seed)
    model = NoisePredictor(config.denoiser_config()).to(device)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    sched = config.schedule()
    extractor = config.make_extractor().to(device)

    log_path = out_dir / TRAIN_LOG_NAME
    start_epoch = 0
    if resume:
        latest = _latest_checkpoint(out_dir)
        if latest is not None:
            payload = load_checkpoint(latest)
            model.load_state_dict(payload["model_state"])
            optimizer.load_state_dict(payload["optimizer_state"])
            torch.set_rng_state(payload["torch_rng_state"])
            start_epoch = payload["epoch"] + 1
            _rewrite_log_upto(log_path, payload["epoch"])
            log.info("resuming from %s at epoch %d", latest.name, start_epoch)
    if not resume and log_path.exists():
        log_path.unlink()

    model.train()
    final_path = _latest_checkpoint(out_dir) or _checkpoint_path(out_dir, 0)
    for epoch in range(start_epoch, config.epochs):
        started = time.monotonic()
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train_set))
        step_totals: list[float] = []
        term_sums: dict[str, float] = {}
        sources: set[str] = set()
        for begin in range(0, len(order), config.batch_size):
            batch_triples = [train_set[i] for i in order[begin : begin + config.batch_size]]
            samples = [make_train_sample(t, rng, sched.T) for t in batch_triples]
            sources.update(t.source_id for t in batch_triples)
            report = train_step(
                model, samples, sched, epoch, config.loss_weights, optimizer,
                extractor, config.stage_switch_epoch, rng=rng,
            )
            step_totals.append(report.total_value)
            for name, value in report.scalars().items():
                term_sums[name] = term_sums.get(name, 0.0) + value
        n_steps = len(step_totals)
        record = {
            "epoch": epoch,
            "total": float(np.mean(step_totals)),
            "terms": {name: value / n_steps for name, value in term_sums.items()},
            "step_totals": step_totals,
            "sources": sorted(sources),
            "wall_time_s": time.monotonic() - started,
        }
        with open(log_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")
        final_path = save_checkpoint(
            _checkpoint_path(out_dir, epoch), model, optimizer, config, epoch
        )
        log.info("epoch %d: total %.4f (%d steps)", epoch, record["total"], n_steps)
    return final_path


def _denoiser_adapter(model: NoisePredictor, device) -> callable:
    """Wrap the torch model as the numpy-facing callable ddim_sample expects."""

    def denoise(x_np, t, cond, brightness):
        x = _chw(x_np.astype(np.float32), device)
        cond_t = _chw(getattr(cond, "values", cond), device)
        with torch.no_grad():
            eps = predict_noise(model, x, float(t), cond_t, float(brightness))
        return eps.permute(1, 2, 0).cpu().numpy().astype(np.float64)

    return denoise


def enhance(
    checkpoint: str | Path,
    input_path: str | Path,
    brightness: float = 0.55,
    steps: int | None = None,
    seed: int = 0,
    out_dir: str | Path | None = None,
    device: str | None = None,
) -> list[Path]:
    """Enhance one image or a directory of images with a trained model.

    Each input is resized to the training resolution, its own color/SNR
    fusion map is computed (the input plays the dark-image role), and the
    deterministic sampler generates the enhanced image, written next to the
    input (or into out_dir) with an `_enhanced` suffix. The device defaults
    to the one recorded in the checkpoint config.
    """
    if not 0.0 <= brightness <= 1.0:
        raise ValueError(f"brightness must be in [0, 1], got {brightness}")
    payload = load_checkpoint(checkpoint)
    config = TrainConfig.from_mapping(payload["config"])
    device = torch.device(device or config.device)
    if config.threads > 0:
        torch.set_num_threads(config.threads)
    model = NoisePredictor(config.denoiser_config()).to(device)
    model.load_state_dict(payload["model_state"])
    model.eval()
    sched = config.schedule()
    denoise = _denoiser_adapter(model, device)

    input_path = Path(input_path)
    files = [input_path] if input_path.is_file() else list_image_files(input_path)
    if not files:
        raise ValueError(f"no images found at {input_path}")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    outputs = []
    for index, path in enumerate(files):
        pixels = resize_bilinear(load_image(path), config.image_size, config.image_size)
        raw = RawImage(pixels, source_id=path.stem)
        fusion = fuse(color_map(raw), snr_map(raw))
        image_seed = int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
        result = diffusion.ddim_sample(
            denoise, fusion, brightness, steps or config.ddim_steps, sched, image_seed
        )
        target_dir = out_dir if out_dir is not None else path.parent
        out_path = target_dir / f"{path.stem}{ENHANCED_SUFFIX}.png"
        save_image(result, out_path)
        outputs.append(out_path)
        log.info("enhanced %s -> %s", path.name, out_path.name)
    return outputs
