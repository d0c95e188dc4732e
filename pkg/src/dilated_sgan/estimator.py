"""scikit-learn style wrappers around training, generation and evaluation."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import MODEL, STORAGE, check_random_state
from .checkpoint import load_checkpoint, save_checkpoint
from .data import PatchSampler, SourceImage, TextureImage, as_texture, load_source
from .evaluation import MetricConfig, evaluate, image_features
from .models import (
    build_network,
    default_discriminator_spec,
    default_generator_spec,
    discriminator_forward,
    generator_forward,
    sample_noise,
)
from .training import TrainConfig, train

__all__ = ["DilatedSGAN", "TextureEvaluator", "check_images"]


def check_images(X, value_space=MODEL):
    """Turn a stack ``(n, H, W)`` or a sequence of images into TextureImages."""
    if isinstance(X, (TextureImage, SourceImage)):
        X = [X]
    elif isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    images = [as_texture(x, value_space) for x in X]
    if not images:
        raise ValueError("need at least one image")
    return images


class DilatedSGAN(BaseEstimator):
    """Fully convolutional texture GAN with a dilated refinement stack.

    ``fit`` trains on patches cut from one large ergodic source image;
    ``sample`` then draws images of any size that is a multiple of the
    generator's upsampling factor.

    Parameters
    ----------
    noise_channels : int, default=1
    deconv_filters : tuple of int, default=(256, 128, 64, 64, 64)
        One entry per stride-2 transposed convolution.
    dilated_filters : tuple of int, default=(64, 64, 64, 64)
        Hidden dilated layers; the last dilated layer has one filter.
    deconv_kernel, dilated_kernel : int, default=5, 3
    dilation_rates : tuple of int, default=(1, 2, 3, 4, 5)
    disc_filters : tuple of int, default=(64, 128, 256, 512)
        Hidden discriminator layers (a 1-filter sigmoid layer is appended).
    disc_kernel : int, default=9
    disc_leaky_slope : float, default=0.2
    patch_size : int, default=384
    learning_rate, beta1, beta2, l2_lambda, batch_size, epochs,
    minibatches_per_epoch, d_steps_per_g_step, checkpoint_every,
    sample_every :
        See :class:`~dilated_sgan.training.TrainConfig`.
    random_state : int, default=0
        Seeds weights, patch sampling and noise.
    out_dir : str, optional
        Where training logs, checkpoints and sample sheets go.
    """

    def __init__(self, noise_channels=1, deconv_filters=(256, 128, 64, 64, 64),
                 dilated_filters=(64, 64, 64, 64), deconv_kernel=5,
                 dilated_kernel=3, dilation_rates=(1, 2, 3, 4, 5),
                 disc_filters=(64, 128, 256, 512), disc_kernel=9,
                 disc_leaky_slope=0.2, patch_size=384, learning_rate=5e-4,
                 beta1=0.5, beta2=0.999, l2_lambda=1e-5, batch_size=8,
                 epochs=100, minibatches_per_epoch=100, d_steps_per_g_step=1,
                 checkpoint_every=10, sample_every=10, random_state=0,
                 out_dir=None):
        self.noise_channels = noise_channels
        self.deconv_filters = deconv_filters
        self.dilated_filters = dilated_filters
        self.deconv_kernel = deconv_kernel
        self.dilated_kernel = dilated_kernel
        self.dilation_rates = dilation_rates
        self.disc_filters = disc_filters
        self.disc_kernel = disc_kernel
        self.disc_leaky_slope = disc_leaky_slope
        self.patch_size = patch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.l2_lambda = l2_lambda
        self.batch_size = batch_size
        self.epochs = epochs
        self.minibatches_per_epoch = minibatches_per_epoch
        self.d_steps_per_g_step = d_steps_per_g_step
        self.checkpoint_every = checkpoint_every
        self.sample_every = sample_every
        self.random_state = random_state
        self.out_dir = out_dir

    def make_specs(self):
        gen = default_generator_spec(
            self.noise_channels, 1, deconv_filters=self.deconv_filters,
            dilated_filters=self.dilated_filters,
            deconv_kernel=self.deconv_kernel,
            dilated_kernel=self.dilated_kernel,
            dilation_rates=self.dilation_rates)
        disc = default_discriminator_spec(
            1, filters=self.disc_filters, kernel=self.disc_kernel,
            leaky_slope=self.disc_leaky_slope)
        return gen, disc

    def train_config(self):
        return TrainConfig(**{name: getattr(self, name) for name in (
            "learning_rate", "beta1", "beta2", "l2_lambda", "batch_size",
            "epochs", "minibatches_per_epoch", "d_steps_per_g_step",
            "checkpoint_every", "sample_every")}, seed=self.random_state)

    def fit(self, X, y=None, resume=None):
        """Train on `X`.

        `X` may be a :class:`SourceImage`, a 2D array in ``[0, 1]``, a path
        to an 8-bit grayscale PNG or a ready :class:`PatchSampler`.
        """
        config = self.train_config()
        if isinstance(X, PatchSampler):
            sampler = X
        else:
            if isinstance(X, str):
                X = load_source(X)
            sampler = PatchSampler(X, self.patch_size, self.random_state)
        gen_spec, disc_spec = self.make_specs()
        self.generator_ = build_network(gen_spec, seed=self.random_state)
        self.discriminator_ = build_network(disc_spec, seed=self.random_state + 1)
        self.checkpoint_, self.log_ = train(
            config, sampler, self.generator_, self.discriminator_,
            out_dir=self.out_dir, resume=resume,
            run_config={f"estimator.{k}": _jsonable(v)
                        for k, v in self.get_params().items()})
        self.n_iter_ = self.checkpoint_.step
        return self

    @classmethod
    def from_checkpoint(cls, checkpoint):
        """Rebuild a fitted estimator (generator and discriminator) from a file."""
        if isinstance(checkpoint, str):
            checkpoint = load_checkpoint(checkpoint)
        params = {k[len("estimator."):]: v for k, v in checkpoint.config.items()
                  if k.startswith("estimator.")}
        valid = cls._get_param_names()
        est = cls(**{k: tuple(v) if isinstance(v, list) else v
                     for k, v in params.items() if k in valid})
        est.generator_ = build_network(checkpoint.generator_spec,
                                       checkpoint.generator_weights)
        est.discriminator_ = build_network(checkpoint.discriminator_spec,
                                           checkpoint.discriminator_weights)
        est.generator_.eval()
        est.discriminator_.eval()
        est.checkpoint_ = checkpoint
        est.log_ = []
        est.n_iter_ = checkpoint.step
        return est

    def save(self, path):
        check_is_fitted(self, "checkpoint_")
        save_checkpoint(self.checkpoint_, path)

    def sample(self, n_samples=1, noise_shape=(12, 12), random_state=None):
        """Generate ``(n_samples, H, W)`` model-space images."""
        check_is_fitted(self, "generator_")
        rng = check_random_state(random_state)
        z = sample_noise(rng, n_samples, *noise_shape,
                         self.generator_.spec.input_channels)
        return generator_forward(self.generator_, z)

    def predict_proba(self, X):
        """Discriminator probability maps for model-space images ``(n, H, W)``."""
        check_is_fitted(self, "discriminator_")
        return discriminator_forward(self.discriminator_, np.asarray(X))


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


class TextureEvaluator(TransformerMixin, BaseEstimator):
    """Compare synthetic textures with a reference set fitted beforehand.

    ``transform`` maps images to a feature matrix (isotropic TV,
    anisotropic TV, the LBP histograms, the HOG histogram), so the metrics
    can feed other estimators. ``evaluate`` builds a full
    :class:`~dilated_sgan.evaluation.MetricsReport` against the fitted set.
    """

    def __init__(self, max_lag=100, lbp_radii=(1, 2), hog_cell=(8, 8),
                 hog_bins=9, connectivity=4, threshold=0.0, value_space=MODEL):
        self.max_lag = max_lag
        self.lbp_radii = lbp_radii
        self.hog_cell = hog_cell
        self.hog_bins = hog_bins
        self.connectivity = connectivity
        self.threshold = threshold
        self.value_space = value_space

    def metric_config(self):
        return MetricConfig(self.max_lag, self.lbp_radii, self.hog_cell,
                            self.hog_bins, self.connectivity, self.threshold)

    def fit(self, X, y=None):
        if self.value_space not in (MODEL, STORAGE):
            raise ValueError(f"unknown value_space {self.value_space!r}")
        self.reference_ = check_images(X, self.value_space)
        self.n_reference_ = len(self.reference_)
        return self

    def transform(self, X):
        config = self.metric_config()
        rows = []
        for img in check_images(X, self.value_space):
            feats = image_features(img, config)
            rows.append(np.concatenate(
                [[feats["tv"]["isotropic"], feats["tv"]["anisotropic"]],
                 *feats["hist"].values()]))
        return np.vstack(rows)

    def evaluate(self, X, checkpoint=None):
        """Report comparing `X` (synthetic) against the fitted reference."""
        check_is_fitted(self, "reference_")
        return evaluate(self.reference_, check_images(X, self.value_space),
                        self.metric_config(), checkpoint=checkpoint)
