"""lesionforge: signal-aware synthetic brain-MRI anomalies, atlas ROI
prompts, segmentation/report loss functions and metrics, and grounded
report assembly."""

from .errors import (
    DegenerateIntervalError,
    FormatError,
    LesionForgeError,
    NameLookupError,
    SynthesisError,
    UnsupportedError,
    ValidationError,
)
from .grid import BinaryMask, LabelVolume, Volume, zscore_normalize
from .losses import (
    ProbGrid,
    TokenDistribution,
    autoregressive_nll,
    cross_entropy_loss,
    seg_loss,
    soft_dice_loss,
    total_seg_loss,
)
from .metrics import (
    SegScore,
    TextScore,
    bleu4,
    dsc,
    hausdorff,
    precision,
    rouge_n,
    seg_score,
    sensitivity,
    text_score,
    tokenize,
)
from .morphology import (
    DisplacementField,
    StructuringElement,
    connected_components,
    dilate,
    elastic_deform,
    erode,
    gaussian_blur,
    morphological_gradient,
)
from .nifti import (
    load_label_volume,
    load_mask,
    load_volume,
    save_labels,
    save_mask,
    save_volume,
)
from .prompting import (
    FeatureGrid,
    TokenSequence,
    concat_flatten,
    downsample_mask,
    mask_pool,
    unflatten,
)
from .report import (
    GlobalReport,
    RegionalReport,
    TemplateStore,
    assemble_global,
    assemble_modes,
    parse_regional_reports,
)
from .roi import RegionPrompt, prompt_from_names, select_rois, whole_image_prompt
from .synth import (
    LesionRecord,
    RegionStats,
    SynthConfig,
    generate_shape,
    inpaint_lesion,
    region_stats,
    sample_intensity,
    select_location,
    synthesize,
)

__version__ = "0.1.0"
