"""
Memory and compute model
========================

Compares the on-chip storage blocks with and without compression, then the
backend work across the adaptation presets.
"""

from kfvio.pipeline import ADAPTATION, PipelineConfig, backend_macs, format_report, model_report, preset

print(format_report(model_report(PipelineConfig())))
print()

# the two ends of the adaptation range, then the per-sequence settings
for name in ("maxima", "easy", *ADAPTATION):
    macs = backend_macs(preset(name))
    print(f"{name:>8}: {macs['total']:>12,} backend MACs per keyframe")
