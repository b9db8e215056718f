"""Adaptive per-pixel Gaussian mixture background model.

Every pixel owns K isotropic Gaussian components (weight, mean vector,
scalar variance shared across channels). Each incoming value either
updates the first component it matches, while the rest decay, or
replaces the weakest component outright. Components stay sorted by
weight / sigma so the leading ones model the background; a pixel is
background when its matched component sits inside the cumulative-weight
prefix selected by the background threshold.

Pixels are fully independent, so the whole grid is updated with one
vectorized pass; the same kernel drives the single-pixel API.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frames import Frame

# Segmentation label values, chosen to match the mask dump encoding.
BACKGROUND = 0
SHADOW = 128
FOREGROUND = 255


@dataclass(frozen=True)
class GmmConfig:
    """Mixture size and update-rate parameters.

    alpha is the per-frame learning rate, bg_threshold the cumulative
    weight prefix treated as background, match_distance the match radius
    in units of sigma. var_init seeds new components wide so they match
    generously until evidence accumulates; var_min keeps matching radii
    from collapsing on noise-free input.
    """

    k: int = 3
    alpha: float = 0.005
    bg_threshold: float = 0.7
    match_distance: float = 2.5
    var_init: float = 900.0
    var_min: float = 4.0
    w_init: float = 0.05

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.bg_threshold < 1.0:
            raise ValueError(f"bg_threshold must be in (0, 1), got {self.bg_threshold}")
        if self.match_distance <= 0.0:
            raise ValueError(f"match_distance must be positive, got {self.match_distance}")
        if self.var_min <= 0.0 or self.var_init < self.var_min:
            raise ValueError(
                f"need var_init >= var_min > 0, got {self.var_init}, {self.var_min}"
            )
        if not 0.0 < self.w_init <= 1.0:
            raise ValueError(f"w_init must be in (0, 1], got {self.w_init}")


@dataclass
class GaussianComponent:
    """One mixture component: weight, mean vector, isotropic variance."""

    weight: float
    mean: np.ndarray
    var: float

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        if self.weight < 0.0:
            raise ValueError(f"weight must be non-negative, got {self.weight}")
        if self.var <= 0.0:
            raise ValueError(f"variance must be positive, got {self.var}")

    @property
    def rank(self) -> float:
        return self.weight / np.sqrt(self.var)


@dataclass
class PixelMixture:
    """A pixel's K components, sorted by rank (weight / sigma) descending."""

    components: list[GaussianComponent]

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixture needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {total}")
        ranks = [c.rank for c in self.components]
        if any(ranks[i] < ranks[i + 1] - 1e-9 for i in range(len(ranks) - 1)):
            raise ValueError("components must be sorted by weight/sigma descending")


def match_component(pixel, component: GaussianComponent, match_distance: float) -> bool:
    """True when the pixel lies strictly within match_distance sigmas of the mean."""
    z = np.atleast_1d(np.asarray(pixel, dtype=np.float64))
    diff = z - component.mean
    dist_sq = float(np.sum(diff * diff))
    return dist_sq < (match_distance * match_distance) * component.var


def select_background_count(mixture: PixelMixture, threshold: float) -> int:
    """Smallest component count whose cumulative weight exceeds the threshold."""
    cum = 0.0
    for i, comp in enumerate(mixture.components):
        cum += comp.weight
        if cum > threshold:
            return i + 1
    return len(mixture.components)


def background_estimate(mixture: PixelMixture) -> np.ndarray:
    """Mean of the top-ranked component: the single most likely background value."""
    return mixture.components[0].mean.copy()


def _sort_positions(key):
    """Stable-ascending sort positions: element i of each row belongs at
    slot out[n, i] in the sorted row. Equivalent to inverting a stable
    argsort; the K=3 case counts pairwise comparisons instead, which is
    several times faster than argsort at this shape.
    """
    n, k = key.shape
    if k == 3:
        a, b, c = key[:, 0], key[:, 1], key[:, 2]
        pos = np.empty((n, 3), dtype=np.intp)
        pos[:, 0] = (b < a).astype(np.intp) + (c < a)
        pos[:, 1] = (a <= b).astype(np.intp) + (c < b)
        pos[:, 2] = (a <= c).astype(np.intp) + (b <= c)
        return pos
    order = np.argsort(key, axis=-1, kind="stable")
    pos = np.empty_like(order)
    np.put_along_axis(pos, order, np.arange(k, dtype=order.dtype)[None, :], axis=-1)
    return pos


def _background_count(w_sorted, threshold):
    """Per row: 1 + index of the first cumulative weight above threshold."""
    if w_sorted.shape[-1] == 3:
        c0 = w_sorted[:, 0]
        c1 = c0 + w_sorted[:, 1]
        c2 = c1 + w_sorted[:, 2]
        return np.where(c0 > threshold, 1, np.where(c1 > threshold, 2, np.where(c2 > threshold, 3, 1)))
    cum = np.cumsum(w_sorted, axis=-1)
    return np.argmax(cum > threshold, axis=-1) + 1


def _update_kernel(w, mu, var, z, cfg: GmmConfig):
    """One mixture update step over arbitrary leading batch dims.

    w: (..., K)  mu: (..., K, C)  var: (..., K)  z: (..., C)
    Returns (w, mu, var, is_background) with components re-sorted by rank.
    Inputs are left untouched. Internally everything runs on flat
    (pixels, K) views; flat integer indexing beats take_along_axis here.
    """
    lead = w.shape[:-1]
    k = w.shape[-1]
    dims = mu.shape[-1]
    w = np.ascontiguousarray(w, dtype=np.float64).reshape(-1, k)
    mu = np.ascontiguousarray(mu, dtype=np.float64).reshape(-1, k, dims)
    var = np.ascontiguousarray(var, dtype=np.float64).reshape(-1, k)
    z = np.ascontiguousarray(z, dtype=np.float64).reshape(-1, dims)
    n = w.shape[0]
    rows = np.arange(n)
    d_sq = cfg.match_distance * cfg.match_distance

    diff = z[:, None, :] - mu
    dist_sq = np.einsum("nkc,nkc->nk", diff, diff)
    matched = dist_sq < d_sq * var
    first = matched.argmax(axis=-1)
    any_match = matched[rows, first]

    # Matched-path values are computed for every pixel and simply ignored
    # where nothing matched; the gathered slot is arbitrary there.
    m_mu = mu[rows, first]
    m_var = var[rows, first]
    m_dist_sq = dist_sq[rows, first]
    density = (2.0 * np.pi * m_var) ** (-0.5 * dims) * np.exp(-0.5 * m_dist_sq / m_var)
    rho = np.minimum(cfg.alpha * density, 1.0)
    new_mu = (1.0 - rho)[:, None] * m_mu + rho[:, None] * z
    resid = z - new_mu
    new_var = (1.0 - rho) * m_var + rho * np.einsum("nc,nc->n", resid, resid)

    # Matched path: first match updated, every other weight decayed.
    w_out = (1.0 - cfg.alpha) * w
    mrows = rows[any_match]
    mcols = first[any_match]
    w_out[mrows, mcols] += cfg.alpha
    mu_out = mu.copy()
    mu_out[mrows, mcols] = new_mu[any_match]
    var_out = var.copy()
    var_out[mrows, mcols] = new_var[any_match]

    # No-match path: the weakest component is replaced by a fresh one
    # centered on the pixel; other weights are left as they were.
    urows = rows[~any_match]
    if urows.size:
        repl = w[urows].argmin(axis=-1)
        w_out[urows] = w[urows]
        w_out[urows, repl] = cfg.w_init
        mu_out[urows, repl] = z[urows]
        var_out[urows, repl] = cfg.var_init

    w_out /= np.sum(w_out, axis=-1, keepdims=True)
    np.maximum(var_out, cfg.var_min, out=var_out)

    positions = _sort_positions(-(w_out / np.sqrt(var_out)))
    matched_pos = positions[rows, first]
    # In-place permute, restricted to rows whose order actually changed;
    # on a quiet scene that is almost none of them.
    moved = np.nonzero((positions != np.arange(k, dtype=positions.dtype)).any(axis=-1))[0]
    if moved.size:
        sub = moved[:, None], positions[moved]
        w_out[sub] = w_out[moved]
        var_out[sub] = var_out[moved]
        mu_out[sub] = mu_out[moved]

    # Background label: the matched component, at its post-sort position,
    # must fall inside the cumulative-weight prefix.
    bg_count = _background_count(w_out, cfg.bg_threshold)
    is_background = any_match & (matched_pos < bg_count)

    return (
        w_out.reshape(*lead, k),
        mu_out.reshape(*lead, k, dims),
        var_out.reshape(*lead, k),
        is_background.reshape(lead),
    )


def update_pixel(mixture: PixelMixture, pixel, config: GmmConfig) -> tuple[PixelMixture, int]:
    """Update one pixel's mixture with a new value.

    Returns the updated mixture and the pixel's label, BACKGROUND or
    FOREGROUND. Exactly one of the two update paths runs: first-match
    update with decay of the rest, or replacement of the weakest
    component when nothing matches (always labeled foreground).
    """
    z = np.atleast_1d(np.asarray(pixel, dtype=np.float64))
    w = np.array([c.weight for c in mixture.components], dtype=np.float64)
    mu = np.stack([c.mean for c in mixture.components]).astype(np.float64)
    var = np.array([c.var for c in mixture.components], dtype=np.float64)
    if mu.shape[-1] != z.shape[-1]:
        raise ValueError(
            f"pixel has {z.shape[-1]} channels, mixture has {mu.shape[-1]}"
        )
    w, mu, var, is_bg = _update_kernel(w, mu, var, z, config)
    comps = [GaussianComponent(float(w[i]), mu[i], float(var[i])) for i in range(len(w))]
    label = BACKGROUND if bool(is_bg) else FOREGROUND
    return PixelMixture(comps), label


@dataclass
class SegmentationMask:
    """Per-pixel labels for one frame: BACKGROUND, FOREGROUND, or SHADOW."""

    width: int
    height: int
    labels: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.shape != (self.height, self.width):
            raise ValueError(
                f"label shape {labels.shape} does not match {self.height}x{self.width}"
            )
        self.labels = labels

    def to_frame(self) -> Frame:
        """Render as a grayscale frame (bg=0, shadow=128, fg=255) for PGM dumps."""
        return Frame(self.width, self.height, 1, self.labels, index=self.frame_index)

    def foreground_fraction(self) -> float:
        return float(np.mean(self.labels == FOREGROUND))


class BackgroundModel:
    """Mixture state for a whole frame grid.

    The first processed frame seeds every pixel with a single confident
    component centered on the observed value and is labeled all
    background by convention; later frames run the mixture update.
    """

    def __init__(self, width: int, height: int, channels: int, config: GmmConfig | None = None):
        if channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {channels}")
        self.width = width
        self.height = height
        self.channels = channels
        self.config = config if config is not None else GmmConfig()
        k = self.config.k
        self.weights = np.zeros((height, width, k), dtype=np.float64)
        self.means = np.zeros((height, width, k, channels), dtype=np.float64)
        self.variances = np.full((height, width, k), self.config.var_init, dtype=np.float64)
        self.frames_seen = 0

    def mixture_at(self, row: int, col: int) -> PixelMixture:
        comps = [
            GaussianComponent(
                float(self.weights[row, col, i]),
                self.means[row, col, i].copy(),
                float(self.variances[row, col, i]),
            )
            for i in range(self.config.k)
        ]
        return PixelMixture(comps)

    def background_count(self) -> np.ndarray:
        """Per-pixel count of leading components treated as background."""
        cum = np.cumsum(self.weights, axis=-1)
        return np.argmax(cum > self.config.bg_threshold, axis=-1) + 1

    def process_frame(self, frame: Frame) -> SegmentationMask:
        if (frame.width, frame.height) != (self.width, self.height):
            raise ValueError(
                f"frame is {frame.width}x{frame.height}, model is "
                f"{self.width}x{self.height}"
            )
        if frame.channels != self.channels:
            raise ValueError(
                f"frame has {frame.channels} channels, model has {self.channels}"
            )
        z = frame.data.astype(np.float64)
        if self.frames_seen == 0:
            self.weights[..., 0] = 1.0
            self.weights[..., 1:] = 0.0
            self.means[:] = z[:, :, None, :]
            self.variances[:] = self.config.var_init
            labels = np.full((self.height, self.width), BACKGROUND, dtype=np.uint8)
        else:
            w, mu, var, is_bg = _update_kernel(
                self.weights, self.means, self.variances, z, self.config
            )
            self.weights, self.means, self.variances = w, mu, var
            labels = np.where(is_bg, BACKGROUND, FOREGROUND).astype(np.uint8)
        self.frames_seen += 1
        return SegmentationMask(self.width, self.height, labels, frame_index=frame.index)


def process_frame(model: BackgroundModel, frame: Frame) -> SegmentationMask:
    """Update the model with one frame and return its segmentation mask."""
    return model.process_frame(frame)
