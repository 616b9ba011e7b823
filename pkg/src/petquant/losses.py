"""Segmentation loss kernels over two-class probability fields.

These are value kernels only (no gradients): plain and squared-denominator
Dice, cross-entropy, focal, their compounds, and the histogram-weighted
variant that reweights the squared-Dice term by the inverse density of
per-voxel L1 prediction errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import LabelMask

# Probabilities are clamped here before log() so perfect-confidence misses
# stay finite.
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class LossConfig:
    """Kernel parameters.

    epsilon guards Dice denominators; gamma/alpha parameterize the focal
    term; kappa is the L1-error histogram bin width (1/kappa must be an
    integer so the bins tile [0, 1]).
    """

    epsilon: float = 1e-5
    gamma: float = 2.0
    alpha: float = 1.0
    kappa: float = 0.1

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must be in (0, 1]")
        n_bins = 1.0 / self.kappa
        if abs(n_bins - round(n_bins)) > 1e-9:
            raise ValueError(f"1/kappa must be an integer, got kappa={self.kappa}")

    @property
    def top_bin(self) -> int:
        return int(round(1.0 / self.kappa))


@dataclass(frozen=True)
class ProbabilityField:
    """Per-voxel class probabilities paired with one-hot ground truth.

    ``prob`` has shape (2, nx, ny, nz) with channels (background,
    foreground) summing to 1 per voxel; ``truth`` is the matching exact
    one-hot labeling.
    """

    prob: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        prob = np.asarray(self.prob, dtype=np.float64)
        truth = np.asarray(self.truth)
        if prob.ndim != 4 or prob.shape[0] != 2:
            raise ValueError(f"prob must have shape (2, nx, ny, nz), got {prob.shape}")
        if truth.shape != prob.shape:
            raise ValueError(f"truth shape {truth.shape} != prob shape {prob.shape}")
        if prob.min() < 0 or prob.max() > 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if np.abs(prob.sum(axis=0) - 1.0).max() > 1e-6:
            raise ValueError("class probabilities must sum to 1 per voxel (tol 1e-6)")
        truth_u8 = truth.astype(np.uint8)
        if not np.array_equal(truth_u8, truth) or truth_u8.max(initial=0) > 1:
            raise ValueError("truth must be binary")
        if not np.array_equal(truth_u8.sum(axis=0), np.ones(truth_u8.shape[1:], dtype=np.uint8)):
            raise ValueError("truth must be exactly one-hot per voxel")
        object.__setattr__(self, "prob", prob)
        object.__setattr__(self, "truth", truth_u8)

    @classmethod
    def from_foreground(cls, prob_fg: np.ndarray, truth_fg: np.ndarray | LabelMask) -> "ProbabilityField":
        """Build the two-channel field from a foreground probability map and
        a binary foreground labeling; the background channel is implied."""
        if isinstance(truth_fg, LabelMask):
            truth_fg = truth_fg.data
        p1 = np.asarray(prob_fg, dtype=np.float64)
        g1 = np.asarray(truth_fg, dtype=np.uint8)
        prob = np.stack([1.0 - p1, p1])
        truth = np.stack([1 - g1, g1])
        return cls(prob=prob, truth=truth)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.prob.shape[1:]  # type: ignore[return-value]

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.dims))

    def true_class_prob(self) -> np.ndarray:
        """Probability assigned to each voxel's true class, flattened."""
        return (self.prob * self.truth).sum(axis=0).ravel()


@dataclass(frozen=True)
class NormHistogram:
    """Histogram of per-voxel L1 errors with density-normalized bin weights.

    Bins are centered at k*kappa for k = 0..1/kappa; the two boundary bins
    only cover half a width inside [0, 1], so counts are divided by an
    effective width (kappa/2 at the boundaries) to get densities. A bin's
    weight is N / density; empty bins get weight 0 and are never applied.
    """

    centers: np.ndarray
    counts: np.ndarray
    widths: np.ndarray
    densities: np.ndarray
    weights: np.ndarray
    kappa: float

    def bin_of(self, deltas: np.ndarray) -> np.ndarray:
        return _bin_index(np.asarray(deltas, dtype=np.float64), self.kappa)

    def weight_of(self, deltas: np.ndarray) -> np.ndarray:
        """Per-value weight lookup (raw, unnormalized bin weights)."""
        return self.weights[self.bin_of(deltas)]


def _bin_index(deltas: np.ndarray, kappa: float) -> np.ndarray:
    """Index of the bin whose center is nearest each delta.

    Exact midpoints between two centers go to the lower bin; a small snap
    tolerance keeps that rule stable under float rounding.
    """
    top = int(round(1.0 / kappa))
    t = deltas * top - 0.5
    nearest = np.round(t)
    t = np.where(np.abs(t - nearest) < 1e-9, nearest, t)
    idx = np.ceil(t).astype(np.intp)
    return np.clip(idx, 0, top)


def l1_norms(field: ProbabilityField) -> np.ndarray:
    """Per-voxel L1 error |p_fg - g_fg|, flattened.

    With two complementary channels the foreground-channel error equals the
    background-channel error, so one channel is representative.
    """
    return np.abs(field.prob[1] - field.truth[1].astype(np.float64)).ravel()


def norm_histogram(deltas: np.ndarray, cfg: LossConfig = LossConfig()) -> NormHistogram:
    """Bin L1 errors and derive density-normalized weights per bin."""
    deltas = np.asarray(deltas, dtype=np.float64).ravel()
    if deltas.size == 0:
        raise ValueError("norm_histogram needs at least one value")
    if deltas.min() < 0 or deltas.max() > 1:
        raise ValueError("L1 norms must lie in [0, 1]")
    top = cfg.top_bin
    idx = _bin_index(deltas, cfg.kappa)
    counts = np.bincount(idx, minlength=top + 1).astype(np.int64)

    centers = np.arange(top + 1, dtype=np.float64) * cfg.kappa
    widths = np.full(top + 1, cfg.kappa, dtype=np.float64)
    widths[0] = cfg.kappa / 2.0
    widths[top] = cfg.kappa / 2.0

    densities = counts / widths
    n_total = float(deltas.size)
    weights = np.zeros(top + 1, dtype=np.float64)
    occupied = counts > 0
    weights[occupied] = n_total / densities[occupied]
    return NormHistogram(
        centers=centers,
        counts=counts,
        widths=widths,
        densities=densities,
        weights=weights,
        kappa=cfg.kappa,
    )


def _class_sums(field: ProbabilityField, weights: np.ndarray | None = None):
    """Per-class sums (p*g, p, g, p^2, g^2), optionally voxel-weighted."""
    sums = []
    for c in (0, 1):
        p = field.prob[c].ravel()
        g = field.truth[c].ravel().astype(np.float64)
        w = np.ones_like(p) if weights is None else weights
        sums.append({
            "pg": float((w * p * g).sum()),
            "p": float((w * p).sum()),
            "g": float((w * g).sum()),
            "p2": float((w * p * p).sum()),
            "g2": float((w * g * g).sum()),
        })
    return sums


def dice_loss(field: ProbabilityField, cfg: LossConfig = LossConfig()) -> float:
    """1 - mean over classes of 2*sum(p*g) / (sum(p) + sum(g) + epsilon)."""
    total = 0.0
    for s in _class_sums(field):
        total += 2.0 * s["pg"] / (s["p"] + s["g"] + cfg.epsilon)
    return 1.0 - 0.5 * total


def squared_dice_loss(field: ProbabilityField, cfg: LossConfig = LossConfig()) -> float:
    """Dice loss with squared denominator sums (sum p^2 + sum g^2)."""
    total = 0.0
    for s in _class_sums(field):
        total += 2.0 * s["pg"] / (s["p2"] + s["g2"] + cfg.epsilon)
    return 1.0 - 0.5 * total


def cross_entropy_loss(field: ProbabilityField, cfg: LossConfig = LossConfig()) -> float:
    """-1/2 sum over voxels of log p(true class), with the log clamped.

    The ground truth is one-hot, so of the two per-class terms g(c)*log p(c)
    only the true class contributes.
    """
    p_true = field.true_class_prob()
    return -0.5 * float(np.log(np.maximum(p_true, LOG_CLAMP)).sum())


def focal_loss(field: ProbabilityField, cfg: LossConfig = LossConfig()) -> float:
    """Cross-entropy down-weighted by (1 - p_true)^gamma, scaled by alpha."""
    p_true = field.true_class_prob()
    mod = cfg.alpha * (1.0 - p_true) ** cfg.gamma
    return -0.5 * float((mod * np.log(np.maximum(p_true, LOG_CLAMP))).sum())


def dce_loss(field: ProbabilityField, cfg: LossConfig = LossConfig()) -> float:
    return dice_loss(field, cfg) + cross_entropy_loss(field, cfg)


def dfl_loss(field: ProbabilityField, cfg: LossConfig = LossConfig()) -> float:
    return dice_loss(field, cfg) + focal_loss(field, cfg)


def l1dfl_loss(field: ProbabilityField, cfg: LossConfig = LossConfig(),
               weight_mode: str = "voxel") -> float:
    """Histogram-weighted squared-Dice plus focal loss.

    Each voxel's weight is its L1-error bin weight. In ``voxel`` mode the
    weights are rescaled to unit mean and applied inside the squared-Dice
    sums, which makes the weighted term reduce exactly to the plain
    squared-Dice kernel whenever all voxels share one bin (the Dice ratio
    is invariant to a common weight scale). In ``scalar`` mode the mean raw
    weight multiplies the unweighted squared-Dice term instead.
    """
    deltas = l1_norms(field)
    hist = norm_histogram(deltas, cfg)
    w = hist.weight_of(deltas)

    if weight_mode == "scalar":
        weighted = float(w.mean()) * squared_dice_loss(field, cfg)
    elif weight_mode == "voxel":
        w = w / w.mean()
        total = 0.0
        for s in _class_sums(field, weights=w):
            total += 2.0 * s["pg"] / (s["p2"] + s["g2"] + cfg.epsilon)
        weighted = 1.0 - 0.5 * total
    else:
        raise ValueError(f"weight_mode must be 'voxel' or 'scalar', got {weight_mode!r}")
    return weighted + focal_loss(field, cfg)


def all_losses(field: ProbabilityField, cfg: LossConfig = LossConfig()) -> dict[str, float]:
    """All kernels at once, keyed for the CLI report."""
    return {
        "dice": dice_loss(field, cfg),
        "sdice": squared_dice_loss(field, cfg),
        "ce": cross_entropy_loss(field, cfg),
        "focal": focal_loss(field, cfg),
        "dce": dce_loss(field, cfg),
        "dfl": dfl_loss(field, cfg),
        "l1dfl": l1dfl_loss(field, cfg),
    }
