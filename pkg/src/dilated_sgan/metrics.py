"""Texture quality metrics: connectivity, total variation, LBP, HOG, chi-square."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._validation import MODEL, check_positive_int
from .data import TextureImage, as_texture

__all__ = [
    "BinaryFacies",
    "ConnectivityCurve",
    "DescriptorHistogram",
    "binarize",
    "connectivity_function",
    "total_variation",
    "lbp_codes",
    "lbp_histogram",
    "hog_histogram",
    "chi2_distance",
    "write_curves_csv",
]

AXES = ("X", "Y")
CHI2_EPS = 1e-10
HOG_EPS = 1e-6
# interpolated neighbours within rounding noise of the centre count as ties
LBP_TIE_TOL = 1e-12


@dataclass(frozen=True)
class BinaryFacies:
    labels: np.ndarray
    threshold: float = 0.0

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or not np.isin(labels, (0, 1)).all():
            raise ValueError("facies labels must be a 2D grid of 0s and 1s")
        object.__setattr__(self, "labels", labels.astype(np.uint8))


@dataclass(frozen=True)
class ConnectivityCurve:
    """Connectivity probabilities for lags ``1..max_lag``.

    Lags whose pair count is zero have probability NaN (undefined).
    """

    facies: int
    axis: str
    lags: np.ndarray
    probabilities: np.ndarray
    pair_counts: np.ndarray

    def rows(self):
        for lag, p, n in zip(self.lags, self.probabilities, self.pair_counts):
            yield int(lag), float(p), int(n)


@dataclass(frozen=True)
class DescriptorHistogram:
    kind: str
    bins: np.ndarray

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.float64)
        if bins.ndim != 1 or (bins < 0).any():
            raise ValueError("histogram bins must be a nonnegative 1D array")
        object.__setattr__(self, "bins", bins)


def binarize(img, threshold=0.0, value_space=MODEL):
    """Label model-space pixels strictly above `threshold` as facies 1."""
    tex = as_texture(img, value_space).to_model()
    return BinaryFacies((tex.pixels > threshold).astype(np.uint8), threshold)


def _structure(connectivity):
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndimage.generate_binary_structure(2, 2)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def connectivity_function(fac, facies=1, axis="X", max_lag=None,
                          connectivity=4):
    """Probability that two `facies` pixels `lag` apart share a cluster.

    Clusters are connected components of `facies` pixels (4- or
    8-connected). For lag ``h`` along `axis` the probability is the number of
    pairs ``(p, p + h)`` with both pixels in `facies` and in the same
    component, divided by the number of pairs with both pixels in `facies`.

    Parameters
    ----------
    fac : BinaryFacies or array of {0, 1}
    facies : {0, 1}
    axis : {"X", "Y"}
        ``X`` runs along columns (horizontal), ``Y`` along rows.
    max_lag : int, optional
        Defaults to the extent along `axis` minus one.
    connectivity : {4, 8}

    Returns
    -------
    ConnectivityCurve
    """
    labels = fac.labels if isinstance(fac, BinaryFacies) else BinaryFacies(fac).labels
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    if facies not in (0, 1):
        raise ValueError(f"facies must be 0 or 1, got {facies}")
    grid = labels if axis == "X" else labels.T
    extent = grid.shape[1]
    if max_lag is None:
        max_lag = extent - 1
    check_positive_int(max_lag, "max_lag")
    if max_lag >= extent:
        raise ValueError(f"max_lag {max_lag} must be below the extent "
                         f"{extent} along axis {axis}")
    comp, _ = ndimage.label(grid == facies, structure=_structure(connectivity))
    lags = np.arange(1, max_lag + 1)
    probs = np.full(max_lag, np.nan)
    counts = np.zeros(max_lag, dtype=np.int64)
    for i, h in enumerate(lags):
        a, b = comp[:, :-h], comp[:, h:]
        both = (a > 0) & (b > 0)
        n = int(both.sum())
        counts[i] = n
        if n:
            probs[i] = np.count_nonzero(both & (a == b)) / n
    return ConnectivityCurve(facies, axis, lags, probs, counts)


def total_variation(img, variant="isotropic", value_space=MODEL):
    """Mean per-pixel total variation on ``[0, 1]`` storage values.

    Forward differences that would leave the image count as zero.
    """
    y = as_texture(img, value_space).to_storage().pixels
    if min(y.shape) < 2:
        raise ValueError("total variation needs an image of at least 2x2")
    down = np.zeros_like(y)
    right = np.zeros_like(y)
    down[:-1] = y[1:] - y[:-1]
    right[:, :-1] = y[:, 1:] - y[:, :-1]
    if variant == "isotropic":
        tv = np.sqrt(down ** 2 + right ** 2)
    elif variant == "anisotropic":
        tv = np.abs(down) + np.abs(right)
    else:
        raise ValueError(f"variant must be 'isotropic' or 'anisotropic', "
                         f"got {variant!r}")
    return float(tv.sum() / y.size)


def _sample_bilinear(y, rows, cols):
    """Bilinear samples of `y` at fractional positions (same-shaped arrays)."""
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    r1 = np.minimum(r0 + 1, y.shape[0] - 1)
    c1 = np.minimum(c0 + 1, y.shape[1] - 1)
    # lerp form keeps constant neighbourhoods exact
    top = y[r0, c0] + fc * (y[r0, c1] - y[r0, c0])
    bottom = y[r1, c0] + fc * (y[r1, c1] - y[r1, c0])
    return top + fr * (bottom - top)


def _snap(offset):
    # axis-aligned neighbours land exactly on the pixel grid
    nearest = round(offset)
    return float(nearest) if abs(offset - nearest) < 1e-9 else offset


def lbp_codes(img, radius=1, neighbors=8, value_space=MODEL):
    """Circular LBP code of every pixel at least ``ceil(radius)`` from the border.

    Neighbour ``p`` sits at angle ``2*pi*p/neighbors`` (counter-clockwise,
    starting east), sampled by bilinear interpolation; bit ``p`` is set when
    the neighbour is ``>=`` the centre (up to interpolation rounding).
    """
    y = as_texture(img, value_space).to_storage().pixels
    border = int(np.ceil(radius))
    h, w = y.shape
    if h <= 2 * border or w <= 2 * border:
        raise ValueError(f"image {y.shape} too small for LBP radius {radius}")
    rr, cc = np.mgrid[border:h - border, border:w - border].astype(np.float64)
    centre = y[border:h - border, border:w - border]
    codes = np.zeros(centre.shape, dtype=np.int64)
    for p in range(neighbors):
        theta = 2 * np.pi * p / neighbors
        dr = _snap(-radius * np.sin(theta))
        dc = _snap(radius * np.cos(theta))
        vals = _sample_bilinear(y, rr + dr, cc + dc)
        codes |= (vals >= centre - LBP_TIE_TOL).astype(np.int64) << p
    return codes


def lbp_histogram(img, radius=1, neighbors=8, value_space=MODEL):
    """Normalised ``2**neighbors``-bin histogram of LBP codes."""
    codes = lbp_codes(img, radius, neighbors, value_space)
    counts = np.bincount(codes.ravel(), minlength=2 ** neighbors)
    return DescriptorHistogram(f"lbp_r{radius:g}", counts / counts.sum())


def hog_histogram(img, cell=(8, 8), bins=9, value_space=MODEL):
    """Image-level histogram of oriented gradients.

    Central-difference gradients (zero on the outermost rows/columns),
    unsigned orientations in ``[0, 180)`` degrees hard-binned and weighted by
    magnitude over non-overlapping cells. Each cell histogram is L2
    normalised, the cells are averaged and the result renormalised to sum 1.
    A gradient-free image gets the uniform histogram.
    """
    y = as_texture(img, value_space).to_storage().pixels
    ch, cw = cell
    h, w = y.shape
    if h < ch or w < cw:
        raise ValueError(f"image {y.shape} is smaller than one HOG cell {cell}")
    gx = np.zeros_like(y)
    gy = np.zeros_like(y)
    gx[:, 1:-1] = y[:, 2:] - y[:, :-2]
    gy[1:-1, :] = y[2:, :] - y[:-2, :]
    mag = np.hypot(gx, gy)
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    idx = np.minimum((angle / (180.0 / bins)).astype(np.int64), bins - 1)

    ny, nx = h // ch, w // cw
    idx = idx[:ny * ch, :nx * cw].reshape(ny, ch, nx, cw).transpose(0, 2, 1, 3)
    mag = mag[:ny * ch, :nx * cw].reshape(ny, ch, nx, cw).transpose(0, 2, 1, 3)
    idx = idx.reshape(ny * nx, ch * cw)
    mag = mag.reshape(ny * nx, ch * cw)
    cells = np.zeros((ny * nx, bins))
    np.add.at(cells, (np.repeat(np.arange(ny * nx), ch * cw), idx.ravel()),
              mag.ravel())
    cells /= np.sqrt((cells ** 2).sum(axis=1, keepdims=True) + HOG_EPS ** 2)
    hist = cells.mean(axis=0)
    total = hist.sum()
    if total <= 0:
        return DescriptorHistogram("hog", np.full(bins, 1.0 / bins))
    return DescriptorHistogram("hog", hist / total)


def chi2_distance(p, q, eps=CHI2_EPS):
    """Symmetric chi-square distance ``0.5 * sum (p-q)^2 / (p+q+eps)``."""
    if isinstance(p, DescriptorHistogram) and isinstance(q, DescriptorHistogram):
        if p.kind != q.kind:
            raise ValueError(f"cannot compare {p.kind} with {q.kind} histograms")
    p = p.bins if isinstance(p, DescriptorHistogram) else np.asarray(p, float)
    q = q.bins if isinstance(q, DescriptorHistogram) else np.asarray(q, float)
    if p.shape != q.shape:
        raise ValueError(f"histogram sizes differ: {p.shape} vs {q.shape}")
    return float(0.5 * np.sum((p - q) ** 2 / (p + q + eps)))


def write_curves_csv(curves, path, image_id=""):
    """Write curves as ``facies,axis,lag,probability,pair_count,image_id`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["facies", "axis", "lag", "probability", "pair_count",
                         "image_id"])
        for curve in curves:
            for lag, p, n in curve.rows():
                writer.writerow([curve.facies, curve.axis, lag, repr(p), n,
                                 image_id])
