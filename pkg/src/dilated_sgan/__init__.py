"""Dilated spatial GAN for globally ergodic binary textures."""
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    PatchSampler,
    SourceImage,
    TextureImage,
    batch_iterator,
    load_source,
    make_toy_texture,
    save_png,
)
from .estimator import DilatedSGAN, TextureEvaluator
from .evaluation import MetricConfig, MetricsReport, compare_runs, emit_report, evaluate
from .metrics import (
    binarize,
    chi2_distance,
    connectivity_function,
    hog_histogram,
    lbp_histogram,
    total_variation,
)
from .models import (
    LayerSpec,
    NetworkSpec,
    build_network,
    default_discriminator_spec,
    default_generator_spec,
    discriminator_forward,
    generator_forward,
    init_weights,
    receptive_field_bound,
)
from .training import (
    TrainConfig,
    generate,
    l2_penalty,
    loss_discriminator,
    loss_generator,
    train,
)

__version__ = "0.1.0"
