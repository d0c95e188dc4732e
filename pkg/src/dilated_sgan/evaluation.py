"""Real-vs-synthetic comparison reports.

:func:`evaluate` computes every metric per image and aggregates them into a
:class:`MetricsReport`: total-variation statistics per set, chi-square
distances between the descriptor histograms of the two sets, and
connectivity curves for every image together with per-set min/max
envelopes and mean curves.
"""
from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import MODEL, check_positive_int
from .data import as_texture
from .metrics import (
    AXES,
    binarize,
    chi2_distance,
    connectivity_function,
    hog_histogram,
    lbp_histogram,
    total_variation,
)

__all__ = ["MetricConfig", "MetricsReport", "evaluate", "emit_report",
           "load_report", "compare_runs", "format_report", "REPORT_VERSION"]

REPORT_VERSION = 1
TV_VARIANTS = ("isotropic", "anisotropic")
FACIES = (0, 1)


@dataclass(frozen=True)
class MetricConfig:
    max_lag: int = 100
    lbp_radii: tuple = (1, 2)
    hog_cell: tuple = (8, 8)
    hog_bins: int = 9
    connectivity: int = 4
    threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lbp_radii", tuple(self.lbp_radii))
        object.__setattr__(self, "hog_cell", tuple(self.hog_cell))
        check_positive_int(self.max_lag, "max_lag")
        check_positive_int(self.hog_bins, "hog_bins")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if not self.lbp_radii or any(r <= 0 for r in self.lbp_radii):
            raise ValueError("lbp_radii must be positive")

    def descriptor_names(self):
        return [f"lbp_r{r:g}" for r in self.lbp_radii] + ["hog"]


def curve_key(facies, axis):
    return f"facies{facies}_{axis}"


@dataclass
class MetricsReport:
    """Aggregated metrics for one real set and one synthetic set.

    ``curves[set][key]`` is an ``(n_images, max_lag)`` array of connectivity
    probabilities (NaN where undefined) and ``pair_counts[set][key]`` the
    matching denominators, with ``key`` like ``"facies1_X"``.
    ``envelopes[set][key]`` holds ``min``, ``max`` and ``mean`` curves.
    """

    n_real: int
    n_synthetic: int
    tv: dict
    chi2: dict
    chi2_per_image: dict
    lags: np.ndarray
    curves: dict
    pair_counts: dict
    envelopes: dict
    config: dict = field(default_factory=dict)
    checkpoint: str | None = None
    version: int = REPORT_VERSION

    def to_dict(self):
        def enc(a):
            return [[None if math.isnan(v) else v for v in row] for row in
                    np.atleast_2d(a).tolist()]
        return {
            "version": self.version,
            "checkpoint": self.checkpoint,
            "config": self.config,
            "n_real": self.n_real,
            "n_synthetic": self.n_synthetic,
            "tv": self.tv,
            "chi2": self.chi2,
            "chi2_per_image": self.chi2_per_image,
            "lags": self.lags.tolist(),
            "curves": {s: {k: enc(v) for k, v in c.items()}
                       for s, c in self.curves.items()},
            "pair_counts": {s: {k: v.tolist() for k, v in c.items()}
                            for s, c in self.pair_counts.items()},
            "envelopes": {s: {k: {stat: enc(arr)[0] for stat, arr in e.items()}
                              for k, e in env.items()}
                          for s, env in self.envelopes.items()},
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {data.get('version')!r}")

        def dec(rows):
            return np.array([[np.nan if v is None else v for v in row]
                             for row in rows], dtype=np.float64)
        return cls(
            n_real=data["n_real"], n_synthetic=data["n_synthetic"],
            tv=data["tv"], chi2=data["chi2"],
            chi2_per_image=data["chi2_per_image"],
            lags=np.asarray(data["lags"], dtype=np.int64),
            curves={s: {k: dec(v) for k, v in c.items()}
                    for s, c in data["curves"].items()},
            pair_counts={s: {k: np.asarray(v, dtype=np.int64)
                             for k, v in c.items()}
                         for s, c in data["pair_counts"].items()},
            envelopes={s: {k: {stat: dec([arr])[0] for stat, arr in e.items()}
                           for k, e in env.items()}
                       for s, env in data["envelopes"].items()},
            config=data["config"], checkpoint=data["checkpoint"],
            version=data["version"])


def image_features(img, config, value_space=MODEL):
    """Every per-image metric for one image, as a dict."""
    tex = as_texture(img, value_space)
    fac = binarize(tex, config.threshold)
    out = {"tv": {v: total_variation(tex, v) for v in TV_VARIANTS},
           "hist": {}, "curves": {}}
    for r in config.lbp_radii:
        out["hist"][f"lbp_r{r:g}"] = lbp_histogram(tex, r).bins
    out["hist"]["hog"] = hog_histogram(tex, config.hog_cell, config.hog_bins).bins
    extent = min(tex.shape)
    max_lag = min(config.max_lag, extent - 1)
    for f in FACIES:
        for axis in AXES:
            out["curves"][curve_key(f, axis)] = connectivity_function(
                fac, f, axis, max_lag, config.connectivity)
    return out


def _envelope(curves):
    # all-NaN columns (no image defines that lag) stay NaN
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return {"min": np.nanmin(curves, axis=0),
                "max": np.nanmax(curves, axis=0),
                "mean": np.nanmean(curves, axis=0)}


def _check_set(images, name):
    images = list(images)
    if not images:
        raise ValueError(f"the {name} image set is empty")
    return images


def evaluate(real_images, synthetic_images, metric_config=None, *,
             checkpoint=None, value_space=MODEL):
    """Compare a real and a synthetic image set.

    Chi-square distances compare the pooled (averaged) histogram of the
    synthetic set against the pooled histogram of the real set;
    ``chi2_per_image`` additionally reports the mean over synthetic images
    of the distance to the pooled real histogram. Undefined connectivity
    entries are left out of means and envelopes.

    Parameters
    ----------
    real_images, synthetic_images : sequences of TextureImage or 2D arrays
        Bare arrays are read in `value_space`. All images must share one size.
    metric_config : MetricConfig, optional
    checkpoint : str, optional
        Identifier of the generator checkpoint, recorded in the report.

    Returns
    -------
    MetricsReport
    """
    config = metric_config or MetricConfig()
    sets = {"real": _check_set(real_images, "real"),
            "synthetic": _check_set(synthetic_images, "synthetic")}
    shapes = {as_texture(i, value_space).shape
              for imgs in sets.values() for i in imgs}
    if len(shapes) != 1:
        raise ValueError(f"all images must share one size, got {sorted(shapes)}")

    feats = {s: [image_features(i, config, value_space) for i in imgs]
             for s, imgs in sets.items()}
    tv = {s: {v: {"mean": float(np.mean([f["tv"][v] for f in fs])),
                  "std": float(np.std([f["tv"][v] for f in fs]))}
              for v in TV_VARIANTS}
          for s, fs in feats.items()}

    chi2, chi2_per_image = {}, {}
    for name in config.descriptor_names():
        real_pool = np.mean([f["hist"][name] for f in feats["real"]], axis=0)
        syn_hists = [f["hist"][name] for f in feats["synthetic"]]
        chi2[name] = chi2_distance(np.mean(syn_hists, axis=0), real_pool)
        chi2_per_image[name] = float(np.mean(
            [chi2_distance(h, real_pool) for h in syn_hists]))

    curves, counts, envelopes = {}, {}, {}
    lags = None
    for s, fs in feats.items():
        curves[s], counts[s], envelopes[s] = {}, {}, {}
        for key in fs[0]["curves"]:
            stack = [f["curves"][key] for f in fs]
            lags = stack[0].lags
            curves[s][key] = np.array([c.probabilities for c in stack])
            counts[s][key] = np.array([c.pair_counts for c in stack])
            envelopes[s][key] = _envelope(curves[s][key])

    return MetricsReport(
        n_real=len(sets["real"]), n_synthetic=len(sets["synthetic"]),
        tv=tv, chi2=chi2, chi2_per_image=chi2_per_image, lags=lags,
        curves=curves, pair_counts=counts, envelopes=envelopes,
        config=dict(asdict(config), lbp_radii=list(config.lbp_radii),
                    hog_cell=list(config.hog_cell)),
        checkpoint=checkpoint)


def emit_report(report, out_dir):
    """Write ``report.json``, ``curves.csv`` and ``envelopes.csv`` to `out_dir`.

    ``curves.csv`` has one row per image, facies, axis and lag
    (columns ``set,facies,axis,lag,probability,pair_count,image_id``);
    ``envelopes.csv`` carries the per-set min/max/mean curves.
    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    curves_path = os.path.join(out_dir, "curves.csv")
    with open(curves_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set", "facies", "axis", "lag", "probability",
                         "pair_count", "image_id"])
        for s, by_key in report.curves.items():
            for key, arr in by_key.items():
                facies, axis = _split_key(key)
                for image_id, (row, nrow) in enumerate(
                        zip(arr, report.pair_counts[s][key])):
                    for lag, p, n in zip(report.lags, row, nrow):
                        writer.writerow([s, facies, axis, int(lag), repr(float(p)),
                                         int(n), image_id])
    env_path = os.path.join(out_dir, "envelopes.csv")
    with open(env_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set", "facies", "axis", "lag", "min", "max", "mean"])
        for s, env in report.envelopes.items():
            for key, e in env.items():
                facies, axis = _split_key(key)
                for i, lag in enumerate(report.lags):
                    writer.writerow([s, facies, axis, int(lag),
                                     repr(float(e["min"][i])),
                                     repr(float(e["max"][i])),
                                     repr(float(e["mean"][i]))])
    return [json_path, curves_path, env_path]


def _split_key(key):
    facies, axis = key.split("_")
    return int(facies[len("facies"):]), axis


def load_report(path):
    """Parse a ``report.json`` written by :func:`emit_report`."""
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    with open(path) as fh:
        return MetricsReport.from_dict(json.load(fh))


def _fmt(value):
    return "-" if value is None else f"{value:.3e}"


def _table(reports, names):
    header = ["metric", "Real", *names]
    rows = []
    for variant, label in (("isotropic", "TV_i"), ("anisotropic", "TV_a")):
        rows.append([label, _fmt(reports[0].tv["real"][variant]["mean"])]
                    + [_fmt(r.tv["synthetic"][variant]["mean"]) for r in reports])
    for name in reports[0].chi2:
        label = ("LBP R=" + name[len("lbp_r"):] if name.startswith("lbp")
                 else name.upper()) + " chi2"
        rows.append([label, _fmt(None)] + [_fmt(r.chi2.get(name)) for r in reports])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = [" | ".join(c.ljust(w) for c, w in zip(r, widths))
             for r in [header] + rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def format_report(report, name="synthetic"):
    """Text table of one report: real column, then the synthetic set."""
    return _table([report], [name])


def compare_runs(report_a, report_b, names=("run A", "run B")):
    """Side-by-side text table of TV and chi-square metrics.

    The real-data column comes first (taken from `report_a`), then one
    column per run.
    """
    return _table([report_a, report_b], list(names))
