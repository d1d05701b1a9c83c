"""Pipeline configuration, keyframe policies and adaptation presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from ..errors import ConfigError
from ..vfe.config import VfeConfig

MAX_HORIZON = 20
MAX_AGE = 10
MAX_TRACKS = 4000
MAX_FEATURES = 200


@dataclass(frozen=True)
class KeyframePolicy:
    kind: str = "rate"      # "rate" | "dist"
    value: float = 4        # frames for rate, metres for dist

    @classmethod
    def parse(cls, text: str) -> "KeyframePolicy":
        try:
            kind, raw = str(text).split(":")
            value = float(raw)
        except ValueError:
            raise ConfigError(f"keyframe policy {text!r} is not 'rate:k' or 'dist:m'") from None
        if kind == "rate":
            if value < 1 or value != int(value):
                raise ConfigError("rate policy needs a positive integer frame count")
            return cls("rate", int(value))
        if kind == "dist":
            if value <= 0:
                raise ConfigError("distance policy needs a positive distance")
            return cls("dist", value)
        raise ConfigError(f"unknown keyframe policy kind {kind!r}")

    def __str__(self):
        return f"{self.kind}:{self.value:g}"

    def select(self, frame_index: int, translation_since_kf: float) -> bool:
        """Frame 0 is always a keyframe."""
        if frame_index == 0:
            return True
        if self.kind == "rate":
            return frame_index % int(self.value) == 0
        return translation_since_kf >= self.value - 1e-12


@dataclass(frozen=True)
class PipelineConfig:
    vfe: VfeConfig = field(default_factory=VfeConfig)
    horizon: int = MAX_HORIZON
    feature_age: int = MAX_AGE
    max_tracks: int = MAX_TRACKS
    features: int = MAX_FEATURES
    stereo: bool = True
    kf_policy: KeyframePolicy = field(default_factory=KeyframePolicy)
    compression: bool = True
    frontend: str = "auto"      # auto | images | features
    pixel_sigma: float = 1.0
    damping: float = 1e-6
    bootstrap_seconds: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.horizon <= MAX_HORIZON:
            raise ConfigError(f"horizon must be in 2..{MAX_HORIZON}")
        if not 1 <= self.feature_age <= MAX_AGE:
            raise ConfigError(f"feature age must be in 1..{MAX_AGE}")
        if self.feature_age > self.horizon:
            raise ConfigError("feature age cannot exceed the horizon")
        if not 1 <= self.max_tracks <= MAX_TRACKS:
            raise ConfigError(f"max tracks must be in 1..{MAX_TRACKS}")
        if not 1 <= self.features <= MAX_FEATURES:
            raise ConfigError(f"features per frame must be in 1..{MAX_FEATURES}")
        if self.frontend not in ("auto", "images", "features"):
            raise ConfigError(f"unknown frontend {self.frontend!r}")
        if isinstance(self.kf_policy, str):
            object.__setattr__(self, "kf_policy", KeyframePolicy.parse(self.kf_policy))
        if self.vfe.max_features != self.features:
            object.__setattr__(self, "vfe", replace(self.vfe, max_features=self.features))

    def with_(self, **changes):
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown pipeline keys: {sorted(unknown)}")
        if "vfe" in data:
            vfe = dict(data["vfe"])
            for key in ("template", "search", "grid"):
                if key in vfe:
                    vfe[key] = tuple(vfe[key])
            try:
                data["vfe"] = VfeConfig(**vfe)
            except TypeError as exc:
                raise ConfigError(str(exc)) from None
        if "kf_policy" in data:
            data["kf_policy"] = KeyframePolicy.parse(data["kf_policy"])
        return cls(**data)

    @classmethod
    def from_yaml(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw.get("pipeline", raw))

    def to_dict(self):
        d = asdict(self)
        d["kf_policy"] = str(self.kf_policy)
        d["vfe"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["vfe"].items()}
        return d


# (features per frame, horizon) chosen per EuRoC sequence for a 0.35% error target
ADAPTATION = {
    "MH_01": (35, 10), "MH_02": (35, 10), "MH_03": (35, 10), "MH_04": (150, 10),
    "MH_05": (100, 15), "V1_01": (35, 10), "V1_02": (35, 10), "V1_03": (35, 10),
    "V2_01": (50, 10), "V2_02": (35, 10), "V2_03": (50, 15),
}


def preset(name: str) -> PipelineConfig:
    """``maxima``, ``easy``, or a sequence name from the adaptation table."""
    if name == "maxima":
        return PipelineConfig()
    if name == "easy":
        return PipelineConfig(features=35, horizon=10)
    if name in ADAPTATION:
        feats, horizon = ADAPTATION[name]
        return PipelineConfig(features=feats, horizon=horizon)
    raise ConfigError(f"unknown preset {name!r}; have maxima, easy, {', '.join(ADAPTATION)}")
