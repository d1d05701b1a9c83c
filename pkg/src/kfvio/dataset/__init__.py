from .euroc import EurocSequence, euroc_rig, load_euroc, write_euroc
from .synthetic import ScenarioConfig, SyntheticScenario, preset, synth_scenario
from .types import FrameEvent, GroundTruth, ImuSample, check_monotonic

__all__ = [
    "EurocSequence", "FrameEvent", "GroundTruth", "ImuSample", "ScenarioConfig",
    "SyntheticScenario", "check_monotonic", "euroc_rig", "load_euroc", "preset",
    "synth_scenario", "write_euroc",
]
