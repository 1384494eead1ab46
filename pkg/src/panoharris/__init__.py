"""Real-time style panorama stitching with Harris corners and CORDIC gradients.

Pipeline: Sobel derivatives and fixed-point CORDIC magnitude/direction,
Harris response with adaptive non-maximal suppression, a pyramid-free
128-d oriented descriptor, half-overlap ratio-test matching with seeded
consensus, and feathered compositing.
"""

from .config import Config, load_config
from .cordic import CordicResult, Fixed, cordic_vectoring, cordic_vectoring_array
from .descriptor import Descriptor, build_descriptor, describe_all, main_orientation
from .errors import PanoError
from .estimators import (
    DescriptorExtractor,
    HarrisCornerDetector,
    PanoramaStitcher,
    check_frames,
    check_gray_image,
)
from .evaluation import BenchReport, emit_report, generate_sequence, run_variant, textured_master
from .harris import Corner, ResponseMap, adaptive_threshold, corner_response, detect_corners, non_max_suppress
from .matcher import FrameTransform, Match, estimate_transform, match_descriptors, overlap_regions
from .pixels import GradientField, GrayImage, compute_gradients, load_image, save_image
from .stitcher import Panorama, composite, stitch_sequence

__version__ = "0.1.0"

__all__ = [
    "BenchReport", "Config", "CordicResult", "Corner", "Descriptor", "DescriptorExtractor",
    "Fixed", "FrameTransform", "GradientField", "GrayImage", "HarrisCornerDetector", "Match",
    "PanoError", "Panorama", "PanoramaStitcher", "ResponseMap", "adaptive_threshold",
    "build_descriptor", "check_frames", "check_gray_image", "composite", "compute_gradients",
    "cordic_vectoring", "cordic_vectoring_array", "corner_response", "describe_all",
    "detect_corners", "emit_report", "estimate_transform", "generate_sequence", "load_config",
    "load_image", "main_orientation", "match_descriptors", "non_max_suppress", "overlap_regions",
    "run_variant", "save_image", "stitch_sequence", "textured_master",
]
