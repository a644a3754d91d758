"""Frechet-distance evaluation between image sets.

Features come from a small convolutional extractor whose weights are drawn
once from a fixed, published seed and never trained, so scores are fully
deterministic and need no external weight files. Absolute values are
therefore NOT comparable with published Inception-based FID numbers; only
relative comparisons (translated vs. source baseline, or across placement
variants) are meaningful.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
import numpy as np

from . import tensor as T
from .data import load_image_dir
from .errors import ContractError, NumericError
from .layers import kaiming_conv
from .networks import TranslationModel
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

FEATURE_EXTRACTOR_SEED = 271828  # fixed; changing it changes every score
FEATURE_DIM = 64
_BATCH = 64


class FeatureExtractor:
    """Three stride-2 convolutions with leaky relu, then global average pool.

    Runs in float64 so features are identical across runs and machines at
    the same float width.
    """

    def __init__(self, seed: int = FEATURE_EXTRACTOR_SEED, dim: int = FEATURE_DIM):
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.weights = [
            kaiming_conv(rng, 16, 3, 3, np.float64),
            kaiming_conv(rng, 32, 16, 3, np.float64),
            kaiming_conv(rng, dim, 32, 3, np.float64),
        ]
        for w in self.weights:
            w.requires_grad = False

    def features(self, images: np.ndarray) -> np.ndarray:
        """Map (n, 3, h, w) images in [-1, 1] to (n, dim) feature rows."""
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 4 or images.shape[1] != 3:
            raise ContractError(f"expected (n, 3, h, w) images, got {images.shape}")
        if images.shape[2] < 8 or images.shape[3] < 8:
            raise ContractError("images must be at least 8x8 for feature extraction")
        rows = []
        with no_grad():
            for lo in range(0, len(images), _BATCH):
                h = Tensor(images[lo:lo + _BATCH])
                for w in self.weights:
                    h = T.lrelu(T.conv2d(h, w, stride=2, pad=1))
                rows.append(T.global_avg_pool(h).data)
        return np.concatenate(rows, axis=0)


@dataclass(frozen=True)
class FidStats:
    """Feature mean and covariance of an image set."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ContractError("statistics need at least 2 samples")
        d = self.mu.shape[0]
        if self.sigma.shape != (d, d):
            raise ContractError(f"covariance shape {self.sigma.shape} for {d} features")
        asym = np.max(np.abs(self.sigma - self.sigma.T))
        if asym > 1e-8 * max(1.0, float(np.max(np.abs(self.sigma)))):
            raise NumericError(f"covariance asymmetric by {asym:.2e}")


def extract_stats(images: np.ndarray, extractor: FeatureExtractor | None = None) -> FidStats:
    """Mean and unbiased covariance of extracted features."""
    if len(images) < 2:
        raise ContractError(f"need at least 2 images, got {len(images)}")
    extractor = extractor or FeatureExtractor()
    feats = extractor.features(images)
    mu = feats.mean(axis=0)
    centered = feats - mu
    sigma = centered.T @ centered / (len(feats) - 1)
    sigma = (sigma + sigma.T) / 2.0
    return FidStats(mu=mu, sigma=sigma, n=len(feats))


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix via eigendecomposition."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"expected a square matrix, got {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > 1e-8 * scale:
        raise NumericError(f"matrix asymmetric by {asym:.2e}")
    w, vecs = np.linalg.eigh((m + m.T) / 2.0)
    floor = -1e-6 * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if np.any(w < floor):
        raise NumericError(f"matrix has eigenvalue {w.min():.3e}, beyond PSD tolerance")
    w = np.clip(w, 0.0, None)
    return (vecs * np.sqrt(w)) @ vecs.T


def fid(a: FidStats, b: FidStats) -> float:
    """Frechet distance between the Gaussians fitted to two feature sets.

    ||mu_a - mu_b||^2 + tr(sigma_a + sigma_b - 2 (sigma_a sigma_b)^(1/2)),
    with the cross term computed through the symmetric similarity form
    sqrt(sigma_a)^T sigma_b sqrt(sigma_a) to stay in PSD territory.
    """
    if a.mu.shape != b.mu.shape:
        raise ContractError(f"feature dims differ: {a.mu.shape} vs {b.mu.shape}")
    root_a = matrix_sqrt_psd(a.sigma)
    inner = root_a @ b.sigma @ root_a
    inner = (inner + inner.T) / 2.0
    tr_cross = float(np.trace(matrix_sqrt_psd(inner)))
    diff = a.mu - b.mu
    value = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * tr_cross)
    if value < -1e-6:
        raise NumericError(f"Frechet distance came out {value:.3e}; statistics are inconsistent")
    if value < 0:
        log.info("clamping tiny negative Frechet distance %.3e to 0", value)
        return 0.0
    return value


# -- whole-model evaluation ----------------------------------------------------------

_EVAL_STYLE_STREAM = 900


@dataclass(frozen=True)
class FidReport:
    translated_fid: float
    baseline_fid: float
    n_source: int
    n_target: int
    n_styles: int

    def lines(self) -> list[str]:
        return [f"fid(translated, target) = {self.translated_fid:.6f}",
                f"fid(source, target)     = {self.baseline_fid:.6f}"]


def translate_directory(model: TranslationModel, source_dir, n_styles: int = 1,
                        seed: int = 0, source_domain: int = 1) -> np.ndarray:
    """Translate every image in a directory with ``n_styles`` prior draws each.

    Returns (n_images * n_styles, 3, h, w); order is image-major, then style.
    """
    images = load_image_dir(source_dir, dtype=model.dtype)
    outs = []
    with no_grad():
        for i in range(len(images)):
            x = Tensor(images[i][None])
            for j in range(n_styles):
                rng = np.random.default_rng((seed, _EVAL_STYLE_STREAM, i, j))
                style = model.draw_style(rng)
                outs.append(model.translate(x, style, source_domain=source_domain).data[0])
    return np.stack(outs)


def evaluate_translation(model: TranslationModel, source_dir, target_dir,
                         n_styles: int = 1, seed: int = 0, source_domain: int = 1,
                         extractor: FeatureExtractor | None = None) -> FidReport:
    """Score translated-source against target, plus the untranslated baseline."""
    extractor = extractor or FeatureExtractor()
    source = load_image_dir(source_dir, dtype=model.dtype)
    target = load_image_dir(target_dir, dtype=model.dtype)
    translated = translate_directory(model, source_dir, n_styles, seed, source_domain)
    target_stats = extract_stats(target, extractor)
    return FidReport(
        translated_fid=fid(extract_stats(translated, extractor), target_stats),
        baseline_fid=fid(extract_stats(source, extractor), target_stats),
        n_source=len(source), n_target=len(target), n_styles=n_styles,
    )


def format_fid_table(rows: list[dict]) -> str:
    """Aligned text table; expects dicts with dataset/variant/fid/baseline keys."""
    header = ("dataset", "variant", "fid", "baseline_fid")
    cells = [[str(r["dataset"]), str(r["variant"]),
              f"{r['fid']:.4f}", f"{r['baseline']:.4f}"] for r in rows]
    widths = [max(len(header[c]), *(len(row[c]) for row in cells)) if cells else len(header[c])
              for c in range(4)]
    def fmt(row):
        return "  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row))
    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines += [fmt(row) for row in cells]
    return "\n".join(lines)
