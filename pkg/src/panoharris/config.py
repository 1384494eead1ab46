"""Run configuration: nested dataclasses read from a ``key = value`` file.

Keys are dotted (``harris.k = 0.05``); ``#`` starts a comment.  Unknown
keys and out-of-range values raise :class:`ConfigError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class HarrisConfig:
    k: float = 0.04
    window: int = 5
    nms_radius: int = 3
    alpha: float = 0.01
    target_count: int = 512


@dataclass(frozen=True)
class DescriptorConfig:
    orientation_bins_fold: int = 18
    subregions: int = 4
    subregion_size: int = 3


@dataclass(frozen=True)
class MatcherConfig:
    ratio_max: float = 0.7
    inlier_tol: float = 2.0
    ransac_iters: int = 200
    seed: int = 0
    model: str = "translation"
    half_overlap: bool = True
    full_fallback: bool = True


@dataclass(frozen=True)
class StitchConfig:
    direction: str = "left-to-right"
    blend: str = "feather"


@dataclass(frozen=True)
class CordicConfig:
    iterations: int = 16
    frac_bits: int = 16


@dataclass(frozen=True)
class Config:
    harris: HarrisConfig = field(default_factory=HarrisConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    stitch: StitchConfig = field(default_factory=StitchConfig)
    cordic: CordicConfig = field(default_factory=CordicConfig)

    def __post_init__(self):
        validate(self)

    def with_overrides(self, overrides: dict) -> "Config":
        """Return a copy with dotted-key overrides applied (values may be strings)."""
        sections = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in overrides.items():
            section, name = _split_key(key)
            current = sections[section]
            ftypes = {f.name: f.type for f in fields(current)}
            if name not in ftypes:
                raise ConfigError(f"unknown config key {key!r}")
            sections[section] = replace(current, **{name: _coerce(key, value, ftypes[name])})
        return Config(**sections)

    def to_dict(self) -> dict:
        return {f"{s.name}.{f.name}": getattr(getattr(self, s.name), f.name)
                for s in fields(self) for f in fields(getattr(self, s.name))}


_SECTIONS = ("harris", "descriptor", "matcher", "stitch", "cordic")


def _split_key(key: str) -> tuple[str, str]:
    parts = key.strip().split(".")
    if len(parts) != 2 or parts[0] not in _SECTIONS:
        raise ConfigError(f"unknown config key {key!r}")
    return parts[0], parts[1]


def _coerce(key, value, ftype):
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if ftype in ("bool", bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if ftype in ("int", int):
            return int(text)
        if ftype in ("float", float):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return text


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate(cfg: Config) -> None:
    h = cfg.harris
    _require(0.04 <= h.k <= 0.06, f"harris.k must be in [0.04, 0.06], got {h.k}")
    _require(h.window in (3, 5, 7), f"harris.window must be 3, 5 or 7, got {h.window}")
    _require(h.nms_radius >= 1, f"harris.nms_radius must be >= 1, got {h.nms_radius}")
    _require(0.0 < h.alpha < 1.0, f"harris.alpha must be in (0, 1), got {h.alpha}")
    _require(h.target_count >= 1, f"harris.target_count must be >= 1, got {h.target_count}")

    d = cfg.descriptor
    _require(d.orientation_bins_fold == 18, "descriptor.orientation_bins_fold is fixed at 18")
    _require(d.subregions == 4, "descriptor.subregions is fixed at 4")
    _require(d.subregion_size == 3, "descriptor.subregion_size is fixed at 3")

    m = cfg.matcher
    _require(0.0 < m.ratio_max < 1.0, f"matcher.ratio_max must be in (0, 1), got {m.ratio_max}")
    _require(m.inlier_tol > 0, f"matcher.inlier_tol must be > 0, got {m.inlier_tol}")
    _require(m.ransac_iters >= 1, f"matcher.ransac_iters must be >= 1, got {m.ransac_iters}")
    _require(m.seed >= 0, f"matcher.seed must be >= 0, got {m.seed}")
    _require(m.model in ("translation", "similarity"), f"matcher.model must be translation or similarity, got {m.model!r}")
    _require(isinstance(m.half_overlap, bool), "matcher.half_overlap must be a boolean")
    _require(isinstance(m.full_fallback, bool), "matcher.full_fallback must be a boolean")

    s = cfg.stitch
    _require(s.direction in ("left-to-right", "right-to-left"), f"stitch.direction must be left-to-right or right-to-left, got {s.direction!r}")
    _require(s.blend == "feather", f"stitch.blend supports only 'feather', got {s.blend!r}")

    c = cfg.cordic
    _require(1 <= c.iterations <= 30, f"cordic.iterations must be in [1, 30], got {c.iterations}")
    _require(1 <= c.frac_bits <= 24, f"cordic.frac_bits must be in [1, 24], got {c.frac_bits}")


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        _split_key(key)
        out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    cfg = Config()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg = cfg.with_overrides(parse_config_text(text))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
