"""scanbudget: dwell-time budget strategies for scanning electron microscopy.

Simulates equal-budget acquisition schemes (fast raster, low-resolution
raster, random sparse scan), reconstructs them (operator denoising,
bilateral-TV super-resolution, interpolation, analysis-operator / BPFA /
exemplar inpainting), and scores everything with four full-reference quality
metrics over regions of interest.
"""

from .acquisition import (
    BeamModel, ScanBudget, SeededRng, average_dwell, beam_blur_sigma,
    downscale_by_two, electrons_per_pixel, simulate_frame, sparse_scan,
    synthesize_combined_frame,
)
from .analysisop import (
    AnalysisOperator, GoalParams, difference_operator, learn_operator,
    load_operator, operator_denoise, operator_inpaint, save_operator,
)
from .backend import BACKEND, available_backends
from .bpfa import BpfaParams, BpfaState, bpfa_dictionary, bpfa_inpaint, gibbs_sweep
from .ebi import (
    EbiParams, PatchDictionary, best_match, build_dictionary, ebi_inpaint,
    load_dictionary, save_dictionary,
)
from .errors import CodecError, ConfigError, NumericalError, ScanBudgetError
from .harness import (
    BenchConfig, BenchReport, auto_rois, beam_current_sweep, dictionary_study,
    load_config, run_benchmark,
)
from .image import (
    Image, PatchSet, Rect, SparseImage, assemble_patches, crop,
    extract_patches, gaussian_smooth, load_image, load_sparse, save_image,
    save_sparse,
)
from .interpolation import InterpMethod, interpolate, sibson_coordinates
from .metrics import (
    CwSsimParams, MetricReport, SsimParams, cw_ssim, evaluate_rois, psnr,
    psnr_hvs_m, ssim,
)
from .phantom import PhantomSpec, generate_phantom
from .superres import SrParams, btv_superresolve, degrade, sr_objective

__version__ = "0.1.0"
