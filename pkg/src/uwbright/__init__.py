"""Unsupervised diffusion-based brightness enhancement for underwater images.

Synthesizes bright/dark training pairs from unpaired raw images, trains a
brightness-conditioned denoising diffusion model on them, enhances unseen
dark underwater images, and scores results with full- and no-reference
image-quality metrics.
"""

from .denoiser import DenoiserConfig, NoisePredictor, brightness_of, predict_noise
from .diffusion import (
    NoiseSchedule,
    ddim_sample,
    ddim_step,
    forward_step,
    make_schedule,
    posterior_mean,
    predict_x0,
    sample_xt,
)
from .losses import (
    FeatureExtractor,
    LossReport,
    LossWeights,
    brightness_loss,
    color_loss,
    composite_loss,
    lpips_loss,
    mse_loss,
    simple_loss,
    ssim_loss,
    structural_similarity,
)
from .metrics import MetricReport, evaluate_dir, psnr, ssim_metric, uiqm, uism, write_report
from .pipeline import (
    CheckpointError,
    TrainConfig,
    TrainSample,
    enhance,
    load_checkpoint,
    save_checkpoint,
    split_dataset,
    train,
    train_step,
)
from .preprocess import (
    BrightnessPair,
    ColorMap,
    FusionMap,
    RawImage,
    SNRMap,
    TrainingTriple,
    adjust_brightness,
    build_training_set,
    color_map,
    fuse,
    load_triples,
    make_triple,
    save_triples,
    snr_map,
)

__version__ = "0.1.0"
