"""Vision frontend: tracking, detection, rectification, stereo matching, verification."""

from .config import VfeConfig
from .detector import detect_candidates, detect_features, select_features, shi_tomasi_score
from .frontend import SyntheticFrontend, TrackingData, VisionFrontend
from .pyramid import build_pyramid
from .ransac import RansacResult, mono_ransac_2pt, stereo_ransac_1pt
from .rectify import Rectification, rectify_images, rectify_points, stereo_rectify
from .stereo import stereo_match, triangulate
from .tracker import TrackResult, track_features

__all__ = [
    "Rectification", "RansacResult", "SyntheticFrontend", "TrackResult", "TrackingData",
    "VfeConfig", "VisionFrontend", "build_pyramid", "detect_candidates", "detect_features",
    "mono_ransac_2pt", "rectify_images", "rectify_points", "select_features",
    "shi_tomasi_score", "stereo_match", "stereo_rectify", "stereo_ransac_1pt",
    "track_features", "triangulate",
]
