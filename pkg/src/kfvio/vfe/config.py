from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError

MAX_PYRAMID_LEVELS = 3
MAX_LK_WINDOW = 15
MAX_LK_ITERATIONS = 30
MAX_TEMPLATE = (51, 5)
MAX_SEARCH = (421, 5)
MAX_FEATURES = 200
CANDIDATE_GRID = (57, 32)  # 1824 cells over 752x480


@dataclass(frozen=True)
class VfeConfig:
    pyramid_levels: int = 3
    lk_window: int = 15
    lk_iterations: int = 30
    lk_epsilon: float = 0.01          # px, update norm at convergence
    lk_min_eigen: float = 1e-3        # per-pixel gradient energy below this is untrackable
    lk_max_error: float = 40.0        # mean absolute patch residual (intensity levels)
    template: tuple = MAX_TEMPLATE    # (width, height)
    search: tuple = MAX_SEARCH
    match_ratio: float = 0.8
    max_features: int = MAX_FEATURES
    grid: tuple = CANDIDATE_GRID
    min_corner_score: float = 25.0    # min eigenvalue, intensity^2 per pixel
    suppression_radius: float = 10.0
    border: int = 8
    ransac_mono_iterations: int = 100
    ransac_stereo_iterations: int = 50
    ransac_mono_threshold_px: float = 1.5
    ransac_stereo_threshold: float = 0.05     # m, added to the stereo noise tolerances
    min_disparity: float = 0.5

    def __post_init__(self):
        if not 1 <= self.pyramid_levels <= MAX_PYRAMID_LEVELS:
            raise ConfigError(f"pyramid_levels must be in 1..{MAX_PYRAMID_LEVELS}")
        if self.lk_window % 2 == 0 or not 3 <= self.lk_window <= MAX_LK_WINDOW:
            raise ConfigError(f"lk_window must be odd and at most {MAX_LK_WINDOW}")
        if not 1 <= self.lk_iterations <= MAX_LK_ITERATIONS:
            raise ConfigError(f"lk_iterations must be in 1..{MAX_LK_ITERATIONS}")
        tw, th = self.template
        sw, sh = self.search
        if tw % 2 == 0 or th % 2 == 0 or tw > MAX_TEMPLATE[0] or th > MAX_TEMPLATE[1]:
            raise ConfigError("template must be odd-sized and within 51x5")
        if sw > MAX_SEARCH[0] or sh != th or sw < tw:
            raise ConfigError("search region must be within 421x5, as tall as the template and wider")
        if not 1 <= self.max_features <= MAX_FEATURES:
            raise ConfigError(f"max_features must be in 1..{MAX_FEATURES}")
        if self.ransac_mono_iterations < 1 or self.ransac_stereo_iterations < 1:
            raise ConfigError("RANSAC iteration counts must be positive")
