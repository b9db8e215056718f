"""Head-gesture recognition from video.

The pipeline stacks three stages: an adaptive per-pixel Gaussian
mixture separates moving heads from the background (with a shadow
reclamation pass), a global smoothness-regularized optical flow solver
runs on the segmented masks, and the signs of the summed flow vector
are classified into per-frame motion directions that a small state
machine turns into nod (YES) and shake (NO) gestures.
"""

from .classify import (
    ClassifierConfig,
    Direction,
    FlowSummary,
    GESTURE_NO,
    GESTURE_YES,
    GestureConfig,
    GestureDetector,
    GestureEvent,
    classify_direction,
    detect_gesture,
    rolling_vote,
    sum_flow,
    vote,
)
from .flow import (
    DerivativeField,
    FlowConfig,
    FlowField,
    estimate_derivatives,
    flow_residuals,
    hs_iterate,
    local_average,
    read_flo,
    solve_flow,
    total_error,
    write_flo,
)
from .frames import (
    DirectorySource,
    Frame,
    FrameSource,
    GrayFrame,
    PnmError,
    PnmMagicError,
    PnmMaxvalError,
    PnmTruncatedError,
    RawStreamSource,
    RawStreamTruncatedError,
    decode_pnm,
    encode_pnm,
    to_gray,
)
from .gmm import (
    BACKGROUND,
    BackgroundModel,
    FOREGROUND,
    GaussianComponent,
    GmmConfig,
    PixelMixture,
    SHADOW,
    SegmentationMask,
    background_estimate,
    match_component,
    process_frame,
    select_background_count,
    update_pixel,
)
from .pipeline import (
    ConfigError,
    EvaluationReport,
    InputSpec,
    PipelineConfig,
    RunReport,
    bench,
    config_from_dict,
    evaluate,
    load_config,
    run_pipeline,
)
from .shadow import (
    ShadowConfig,
    apply_shadow_pass,
    brightness_distortion,
    chromaticity_distortion,
    classify_shadow,
)
from .synth import (
    Background,
    BlobSpec,
    GroundTruth,
    SceneSpec,
    build_corpus,
    gaussian_stream,
    gen_clip,
    gen_gesture_clip,
    write_clip,
)

__version__ = "0.1.0"
