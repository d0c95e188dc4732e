import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dilated_sgan.data import make_toy_texture
from dilated_sgan.estimator import DilatedSGAN, TextureEvaluator

SMALL = dict(deconv_filters=(8, 8), dilated_filters=(8,), dilation_rates=(1, 2),
             disc_filters=(8,), disc_kernel=5, patch_size=32, batch_size=2,
             epochs=1, minibatches_per_epoch=3)


@pytest.fixture(scope="module")
def fitted():
    src = make_toy_texture("stripes", 64, 64, {"band_width": 2})
    return DilatedSGAN(**SMALL, random_state=2).fit(src)


def test_default_params_match_reference_architecture():
    params = DilatedSGAN().get_params()
    assert params["deconv_filters"] == (256, 128, 64, 64, 64)
    assert params["dilation_rates"] == (1, 2, 3, 4, 5)
    assert params["disc_kernel"] == 9 and params["patch_size"] == 384
    assert (params["learning_rate"], params["beta1"]) == (5e-4, 0.5)


def test_clone_keeps_params():
    est = DilatedSGAN(**SMALL, random_state=5)
    copy = clone(est)
    assert copy.get_params() == est.get_params()
    assert copy is not est


def test_set_params_roundtrip():
    est = DilatedSGAN().set_params(epochs=3, disc_kernel=5)
    assert (est.epochs, est.disc_kernel) == (3, 5)


def test_fit_attributes(fitted):
    assert fitted.n_iter_ == 3
    assert len(fitted.log_) == 3
    assert fitted.checkpoint_.config["estimator.patch_size"] == 32


def test_sample_shape_and_determinism(fitted):
    a = fitted.sample(3, noise_shape=(4, 5), random_state=0)
    assert a.shape == (3, 16, 20)
    assert np.abs(a).max() <= 1
    np.testing.assert_array_equal(a, fitted.sample(3, (4, 5), random_state=0))


def test_predict_proba(fitted):
    probs = fitted.predict_proba(fitted.sample(2, (8, 8), random_state=1))
    assert probs.shape == (2, 8, 8)  # two stride-2 layers on 32x32
    assert np.all((probs >= 0) & (probs <= 1))


def test_checkpoint_restores_estimator(fitted, tmp_path):
    path = str(tmp_path / "est.ckpt")
    fitted.save(path)
    back = DilatedSGAN.from_checkpoint(path)
    assert back.get_params() == {**fitted.get_params(), "out_dir": None}
    np.testing.assert_array_equal(back.sample(2, (3, 3), 7),
                                  fitted.sample(2, (3, 3), 7))


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        DilatedSGAN().sample(1)


def test_fit_rejects_small_source():
    with pytest.raises(ValueError, match="exceeds"):
        DilatedSGAN(**SMALL).fit(np.zeros((20, 20)))


def test_texture_evaluator_transform():
    rng = np.random.default_rng(0)
    images = rng.uniform(-1, 1, (3, 32, 32))
    ev = TextureEvaluator(max_lag=8)
    feats = ev.fit_transform(images)
    assert feats.shape == (3, 2 + 256 + 256 + 9)
    np.testing.assert_allclose(feats[:, 2:258].sum(axis=1), 1.0)


def test_texture_evaluator_report():
    stripes = make_toy_texture("stripes", 32, 32, {"band_width": 4}).pixels
    ev = TextureEvaluator(max_lag=8, value_space="storage").fit([stripes, stripes])
    report = ev.evaluate([stripes])
    assert report.n_real == 2 and report.n_synthetic == 1
    assert all(v == 0 for v in report.chi2.values())
    assert clone(ev).get_params() == ev.get_params()


def test_texture_evaluator_input_validation():
    with pytest.raises(ValueError):
        TextureEvaluator().fit(np.zeros(5))
    with pytest.raises(ValueError):
        TextureEvaluator().fit(np.full((1, 8, 8), 3.0))
    with pytest.raises(ValueError):
        TextureEvaluator(value_space="raw").fit(np.zeros((1, 8, 8)))
