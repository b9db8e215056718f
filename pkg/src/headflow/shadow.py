"""Shadow reclassification by brightness and chromaticity distortion.

A foreground pixel is relabeled as shadow when its color is close to a
dimmed copy of the background color: the projection ratio onto the
background color vector (brightness distortion) falls in a configured
band below one, and the residual perpendicular to that vector
(chromaticity distortion) stays small. Grayscale input degenerates
naturally: the distortion becomes the plain brightness ratio and the
chromaticity residual is identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import Frame
from .gmm import BackgroundModel, FOREGROUND, SHADOW, SegmentationMask


@dataclass(frozen=True)
class ShadowConfig:
    """Acceptance band for the brightness ratio and chromaticity residual.

    bd_low rejects pixels too dark to be cast shadow; bd_high < 1 keeps
    pixels as bright as the background (or brighter) out of the shadow
    class; cd_max bounds the allowed hue shift in brightness units.
    """

    bd_low: float = 0.4
    bd_high: float = 0.95
    cd_max: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.bd_low < self.bd_high <= 1.0:
            raise ValueError(
                f"need 0 < bd_low < bd_high <= 1, got {self.bd_low}, {self.bd_high}"
            )
        if self.cd_max < 0.0:
            raise ValueError(f"cd_max must be non-negative, got {self.cd_max}")


def _as_vec(value) -> np.ndarray:
    return np.atleast_1d(np.asarray(value, dtype=np.float64))


def brightness_distortion(pixel, background) -> float:
    """Scale factor that best maps the background color onto the pixel.

    Computed as (pixel . background) / (background . background). For
    1-channel input this is the plain ratio pixel / background.
    """
    fg = _as_vec(pixel)
    bg = _as_vec(background)
    if fg.shape != bg.shape:
        raise ValueError(f"shape mismatch: pixel {fg.shape} vs background {bg.shape}")
    denom = float(np.dot(bg, bg))
    if denom == 0.0:
        raise ValueError("brightness distortion is undefined for a zero background vector")
    return float(np.dot(fg, bg)) / denom


def chromaticity_distortion(pixel, background) -> float:
    """Distance from the pixel to its brightness-scaled background color."""
    fg = _as_vec(pixel)
    bg = _as_vec(background)
    bd = brightness_distortion(fg, bg)
    resid = fg - bd * bg
    return float(np.sqrt(np.sum(resid * resid)))


def classify_shadow(bd: float, cd: float, config: ShadowConfig) -> bool:
    """True when the distortion pair falls inside the shadow band (inclusive)."""
    return config.bd_low <= bd <= config.bd_high and cd <= config.cd_max


def apply_shadow_pass(
    mask: SegmentationMask,
    frame: Frame,
    model: BackgroundModel,
    config: ShadowConfig | None = None,
) -> SegmentationMask:
    """Relabel foreground pixels that match any background component as shadow.

    Each foreground pixel is tested against every component currently
    counted as background for that pixel; one acceptance suffices.
    Labels only ever move foreground -> shadow. Components with a zero
    mean vector cannot cast a measurable shadow and are skipped.
    """
    if config is None:
        config = ShadowConfig()
    if (frame.width, frame.height) != (mask.width, mask.height):
        raise ValueError(
            f"frame is {frame.width}x{frame.height}, mask is {mask.width}x{mask.height}"
        )
    if (frame.width, frame.height) != (model.width, model.height):
        raise ValueError(
            f"frame is {frame.width}x{frame.height}, model is "
            f"{model.width}x{model.height}"
        )

    fg = mask.labels == FOREGROUND
    if not fg.any():
        return SegmentationMask(mask.width, mask.height, mask.labels.copy(),
                                frame_index=mask.frame_index)

    z = frame.data.astype(np.float64)
    bg_count = model.background_count()
    shadow = np.zeros_like(fg)
    for comp in range(model.config.k):
        candidate = fg & (comp < bg_count) & ~shadow
        if not candidate.any():
            continue
        bg_mean = model.means[:, :, comp, :]
        denom = np.sum(bg_mean * bg_mean, axis=-1)
        valid = candidate & (denom > 0.0)
        if not valid.any():
            continue
        bd = np.zeros_like(denom)
        np.divide(np.sum(z * bg_mean, axis=-1), denom, out=bd, where=valid)
        resid = z - bd[..., None] * bg_mean
        cd = np.sqrt(np.sum(resid * resid, axis=-1))
        accepted = (
            valid
            & (bd >= config.bd_low)
            & (bd <= config.bd_high)
            & (cd <= config.cd_max)
        )
        shadow |= accepted

    labels = mask.labels.copy()
    labels[shadow] = SHADOW
    return SegmentationMask(mask.width, mask.height, labels, frame_index=mask.frame_index)
