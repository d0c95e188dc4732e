import csv
import json
import math

import numpy as np
import pytest

from dilated_sgan.data import PatchSampler, make_toy_texture
from dilated_sgan.evaluation import (
    MetricConfig,
    MetricsReport,
    compare_runs,
    curve_key,
    emit_report,
    evaluate,
    format_report,
    load_report,
)
from dilated_sgan.metrics import (
    binarize,
    chi2_distance,
    connectivity_function,
    hog_histogram,
    lbp_histogram,
    total_variation,
)

CONFIG = MetricConfig(max_lag=20)


def _patches(kind, n, size=48, seed=0, **params):
    src = make_toy_texture(kind, 160, 160, params or None, seed=seed)
    sampler = PatchSampler(src, size, rng_seed=seed)
    return [sampler.sample() for _ in range(n)]


@pytest.fixture(scope="module")
def channels():
    return _patches("channels", 4, seed=1)


@pytest.fixture(scope="module")
def noise():
    rng = np.random.default_rng(0)
    return [rng.uniform(-1, 1, (48, 48)) for _ in range(3)]


def test_identical_sets_have_zero_distance(channels):
    report = evaluate(channels, channels, CONFIG)
    assert set(report.chi2) == {"lbp_r1", "lbp_r2", "hog"}
    assert all(v == 0.0 for v in report.chi2.values())
    for variant in ("isotropic", "anisotropic"):
        assert report.tv["real"][variant] == report.tv["synthetic"][variant]


def test_stripes_vs_noise(noise):
    stripes = _patches("stripes", 3, band_width=6)
    report = evaluate(stripes, noise, CONFIG)
    assert report.tv["synthetic"]["anisotropic"]["mean"] > \
        2 * report.tv["real"]["anisotropic"]["mean"]
    assert all(v > 0.1 for v in report.chi2.values())


def test_aggregates_match_per_image_metrics(channels, noise):
    report = evaluate(channels, noise, CONFIG)
    tvs = [total_variation(i, "isotropic") for i in noise]
    assert report.tv["synthetic"]["isotropic"]["mean"] == pytest.approx(np.mean(tvs))
    assert report.tv["synthetic"]["isotropic"]["std"] == pytest.approx(np.std(tvs))
    real_pool = np.mean([lbp_histogram(i, 2).bins for i in channels], axis=0)
    syn = [lbp_histogram(i, 2).bins for i in noise]
    assert report.chi2["lbp_r2"] == pytest.approx(
        chi2_distance(np.mean(syn, axis=0), real_pool))
    assert report.chi2_per_image["lbp_r2"] == pytest.approx(
        np.mean([chi2_distance(h, real_pool) for h in syn]))
    hog_pool = np.mean([hog_histogram(i).bins for i in channels], axis=0)
    assert report.chi2["hog"] == pytest.approx(chi2_distance(
        np.mean([hog_histogram(i).bins for i in noise], axis=0), hog_pool))


def test_curves_and_envelopes(channels):
    report = evaluate(channels, channels[:2], CONFIG)
    np.testing.assert_array_equal(report.lags, np.arange(1, 21))
    for s, n in (("real", 4), ("synthetic", 2)):
        for f in (0, 1):
            for axis in ("X", "Y"):
                key = curve_key(f, axis)
                curves = report.curves[s][key]
                assert curves.shape == (n, 20)
                env = report.envelopes[s][key]
                ok = ~np.isnan(curves)
                assert np.all(curves[ok] >= np.broadcast_to(env["min"], curves.shape)[ok])
                assert np.all(curves[ok] <= np.broadcast_to(env["max"], curves.shape)[ok])
                expected = connectivity_function(binarize(channels[0]), f, axis, 20)
                if s == "real":
                    np.testing.assert_array_equal(curves[0], expected.probabilities)
                    np.testing.assert_array_equal(report.pair_counts[s][key][0],
                                                  expected.pair_counts)


def test_undefined_lags_stay_nan():
    blank = [np.full((32, 32), -1.0)] * 2
    report = evaluate(blank, blank, MetricConfig(max_lag=5))
    env = report.envelopes["real"][curve_key(1, "X")]
    assert np.all(np.isnan(env["mean"]))
    assert np.all(report.envelopes["real"][curve_key(0, "X")]["mean"] == 1.0)


def test_json_roundtrip(channels, noise, tmp_path):
    report = evaluate(channels, noise, CONFIG, checkpoint="run.ckpt:step-5")
    paths = emit_report(report, str(tmp_path))
    assert [p.rsplit("/", 1)[1] for p in paths] == \
        ["report.json", "curves.csv", "envelopes.csv"]
    raw = json.loads((tmp_path / "report.json").read_text())
    assert raw["checkpoint"] == "run.ckpt:step-5"
    back = load_report(str(tmp_path))
    assert back.to_dict() == report.to_dict()
    assert isinstance(back, MetricsReport)


def test_json_has_no_nan_tokens(tmp_path):
    blank = [np.full((32, 32), -1.0)]
    emit_report(evaluate(blank, blank, MetricConfig(max_lag=3)), str(tmp_path))
    text = (tmp_path / "report.json").read_text()
    assert "NaN" not in text
    json.loads(text)


def test_curves_csv_layout(channels, tmp_path):
    report = evaluate(channels[:2], channels[:1], MetricConfig(max_lag=4))
    emit_report(report, str(tmp_path))
    with open(tmp_path / "curves.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["set", "facies", "axis", "lag", "probability",
                             "pair_count", "image_id"]
    # (2 real + 1 synthetic) images x 2 facies x 2 axes x 4 lags
    assert len(rows) == 3 * 2 * 2 * 4
    p = float(rows[0]["probability"])
    assert math.isnan(p) or 0 <= p <= 1


def test_compare_table_layout(channels, noise):
    a = evaluate(channels, channels, CONFIG)
    b = evaluate(channels, noise, CONFIG)
    lines = compare_runs(a, b, names=("dilated", "baseline")).splitlines()
    assert [c.strip() for c in lines[0].split("|")] == \
        ["metric", "Real", "dilated", "baseline"]
    labels = [line.split("|")[0].strip() for line in lines[2:]]
    assert labels == ["TV_i", "TV_a", "LBP R=1 chi2", "LBP R=2 chi2", "HOG chi2"]
    assert "0.000e+00" in lines[4]
    assert format_report(a).splitlines()[0].split("|")[1].strip() == "Real"


@pytest.mark.parametrize("real, syn", [([], [np.zeros((32, 32))]),
                                       ([np.zeros((32, 32))], [])])
def test_empty_sets_rejected(real, syn):
    with pytest.raises(ValueError, match="empty|at least one"):
        evaluate(real, syn, CONFIG)


def test_size_mismatch_rejected():
    with pytest.raises(ValueError, match="size"):
        evaluate([np.zeros((32, 32))], [np.zeros((48, 48))], CONFIG)


def test_metric_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(connectivity=6)
    with pytest.raises(ValueError):
        MetricConfig(lbp_radii=())
    assert MetricConfig().descriptor_names() == ["lbp_r1", "lbp_r2", "hog"]
