"""scikit-learn style wrappers around the pipeline stages.

The estimators hold only their constructor parameters (so ``get_params``,
``set_params`` and ``clone`` work as usual) and build a :class:`Config`
from them on each call.  Images go in as 2-D uint8 arrays or
:class:`GrayImage`; the stitcher takes a sequence of them.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import Config
from .descriptor import DESCRIPTOR_SIZE, descriptor_matrix, descriptor_positions
from .errors import DimensionMismatch, UsageError
from .harris import corner_response, detect_corners
from .pipeline import CLASSIC, OPTIMIZED, extract_features
from .pixels import GrayImage, compute_gradients
from .stitcher import stitch_sequence


def check_gray_image(X) -> GrayImage:
    """Validate one image and return it as a :class:`GrayImage`.

    Accepts a ``GrayImage`` or any 2-D array of integral values in
    ``[0, 255]``.  Floats are accepted only when they hold whole numbers.
    """
    if isinstance(X, GrayImage):
        return X
    a = np.asarray(X)
    if a.ndim != 2:
        raise UsageError(f"expected a 2-D grayscale image, got an array of shape {a.shape}")
    if a.size == 0:
        raise UsageError("image is empty")
    if a.dtype == np.uint8:
        return GrayImage(a)
    if a.dtype.kind not in "iuf":
        raise UsageError(f"unsupported image dtype {a.dtype}")
    if a.dtype.kind == "f" and not (np.all(np.isfinite(a)) and np.all(a == np.floor(a))):
        raise UsageError("float images must hold whole gray levels")
    if a.min() < 0 or a.max() > 255:
        raise UsageError("gray levels must lie in [0, 255]")
    return GrayImage(a.astype(np.uint8))


def check_frames(frames, min_frames: int = 2) -> list[GrayImage]:
    """Validate an ordered frame sequence of uniform size."""
    if isinstance(frames, np.ndarray) and frames.ndim == 3:
        frames = list(frames)
    frames = [check_gray_image(f) for f in frames]
    if len(frames) < min_frames:
        raise UsageError(f"need at least {min_frames} frames, got {len(frames)}")
    shape = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise DimensionMismatch(f"frame {i} is {f.width}x{f.height}, expected {shape[1]}x{shape[0]}")
    return frames


class _ConfigParams:
    # maps estimator parameters onto dotted config keys
    _config_keys: dict = {}

    def _config(self) -> Config:
        return Config().with_overrides({key: getattr(self, name) for name, key in self._config_keys.items()})


_HARRIS_KEYS = {
    "k": "harris.k",
    "window": "harris.window",
    "nms_radius": "harris.nms_radius",
    "alpha": "harris.alpha",
    "target_count": "harris.target_count",
    "cordic_iterations": "cordic.iterations",
    "frac_bits": "cordic.frac_bits",
}


class HarrisCornerDetector(_ConfigParams, TransformerMixin, BaseEstimator):
    """Harris corners with adaptive threshold and capped NMS.

    ``transform`` returns an ``(n, 3)`` float array of ``x, y, response``
    rows sorted by descending response.

    Examples
    --------
    >>> img = np.zeros((32, 32), dtype=np.uint8)
    >>> HarrisCornerDetector().fit_transform(img).shape
    (0, 3)
    """

    _config_keys = _HARRIS_KEYS

    def __init__(self, k=0.04, window=5, nms_radius=3, alpha=0.01, target_count=512,
                 cordic_iterations=16, frac_bits=16):
        self.k = k
        self.window = window
        self.nms_radius = nms_radius
        self.alpha = alpha
        self.target_count = target_count
        self.cordic_iterations = cordic_iterations
        self.frac_bits = frac_bits

    def fit(self, X=None, y=None):
        """Validate the parameters; the detector has nothing to learn."""
        self._config()
        self.is_fitted_ = True
        return self

    def detect(self, X):
        """Corner list for one image."""
        cfg = self._config()
        img = check_gray_image(X)
        grads = compute_gradients(img, cfg.cordic.iterations, cfg.cordic.frac_bits)
        h = cfg.harris
        resp = corner_response(grads, h.window, h.k)
        return detect_corners(resp, h.target_count, h.alpha, h.nms_radius)

    def transform(self, X):
        check_is_fitted(self)
        corners = self.detect(X)
        return np.array([[c.x, c.y, c.response] for c in corners], dtype=np.float64).reshape(-1, 3)


class DescriptorExtractor(_ConfigParams, TransformerMixin, BaseEstimator):
    """Detect corners and describe them with 128-d oriented descriptors.

    ``transform`` returns the ``(n, 128)`` descriptor matrix; ``extract``
    also gives the keypoint positions and main angles.
    """

    _config_keys = _HARRIS_KEYS

    def __init__(self, variant="optimized", k=0.04, window=5, nms_radius=3, alpha=0.01,
                 target_count=512, cordic_iterations=16, frac_bits=16):
        self.variant = variant
        self.k = k
        self.window = window
        self.nms_radius = nms_radius
        self.alpha = alpha
        self.target_count = target_count
        self.cordic_iterations = cordic_iterations
        self.frac_bits = frac_bits

    def _variant(self) -> str:
        if self.variant not in ("optimized", "classic"):
            raise UsageError(f"variant must be 'optimized' or 'classic', got {self.variant!r}")
        return OPTIMIZED if self.variant == "optimized" else CLASSIC

    def fit(self, X=None, y=None):
        self._config()
        self._variant()
        self.is_fitted_ = True
        return self

    def extract(self, X):
        """Return ``(positions (n, 2), angles (n,), descriptors (n, 128))``."""
        feats = extract_features(check_gray_image(X), self._config(), self._variant())
        descs = feats.descriptors
        angles = np.array([d.main_angle_deg for d in descs], dtype=np.float64)
        return descriptor_positions(descs), angles, descriptor_matrix(descs).reshape(-1, DESCRIPTOR_SIZE)

    def transform(self, X):
        check_is_fitted(self)
        return self.extract(X)[2]


class PanoramaStitcher(_ConfigParams, BaseEstimator):
    """Stitch an ordered frame sequence into a panorama.

    After ``fit(frames)``: ``panorama_`` (:class:`Panorama`), ``transforms_``
    (per-pair transform records) and ``origin_offset_``.  ``fit_transform``
    returns the blended canvas as a uint8 array.
    """

    _config_keys = {
        **_HARRIS_KEYS,
        "ratio_max": "matcher.ratio_max",
        "inlier_tol": "matcher.inlier_tol",
        "ransac_iters": "matcher.ransac_iters",
        "seed": "matcher.seed",
        "model": "matcher.model",
        "direction": "stitch.direction",
    }

    def __init__(self, ratio_max=0.7, inlier_tol=2.0, ransac_iters=200, seed=0, model="translation",
                 direction="left-to-right", k=0.04, window=5, nms_radius=3, alpha=0.01,
                 target_count=512, cordic_iterations=16, frac_bits=16, threads=1):
        self.ratio_max = ratio_max
        self.inlier_tol = inlier_tol
        self.ransac_iters = ransac_iters
        self.seed = seed
        self.model = model
        self.direction = direction
        self.k = k
        self.window = window
        self.nms_radius = nms_radius
        self.alpha = alpha
        self.target_count = target_count
        self.cordic_iterations = cordic_iterations
        self.frac_bits = frac_bits
        self.threads = threads

    def fit(self, X, y=None):
        frames = check_frames(X)
        pan, log = stitch_sequence(frames, self._config(), threads=self.threads)
        self.panorama_ = pan
        self.transforms_ = log.pairs
        self.log_ = log
        self.origin_offset_ = pan.origin_offset
        return self

    def transform(self, X=None):
        """Blended canvas of the fitted sequence (``X`` is ignored)."""
        check_is_fitted(self)
        return np.array(self.panorama_.canvas.data)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform()
