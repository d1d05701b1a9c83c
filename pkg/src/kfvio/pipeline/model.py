"""Arithmetic memory and operation-count model.

Sizes are in bits unless a key says otherwise; kB means 1024 bytes, the
convention under which four raw 752x480 frames occupy 1410 kB. The backend
MAC model counts one Gauss-Newton step with a full window: vision-factor
linearization and landmark elimination, IMU-factor linearization,
zero-skipping Cholesky and the two triangular solves.
"""

from __future__ import annotations

from ..backend.hessian import build_pattern
from ..backend.solver import dense_cholesky_macs, symbolic_for
from ..backend.trackstore import flat_table_bits, two_stage_bits
from ..framecodec import BITS_PER_BLOCK, BLOCK, MAX_HEIGHT, MAX_WIDTH
from .config import PipelineConfig

STATE_DIM = 15
KB = 8 * 1024
PUBLISHED = {
    "frame_buffer_ratio": 4.4,
    "track_store_ratio": 5.4,
    "hessian_ratio": 5.2,
    "solver_speedup": 7.2,
    "triangle_density": 0.38,
    "adaptation_energy_gain": 2.5,
    "euroc_normalized_error_pct": 0.28,
}

IMU_FACTOR_MACS = 9 * 30 * 30 + 9 * 9 * 30  # J^T W J for a 9x30 Jacobian block


def frames_in_buffer(stereo: bool) -> int:
    """Current and previous frame per camera."""
    return 4 if stereo else 2


def frame_buffer_bits(stereo=True, compression=True, width=MAX_WIDTH, height=MAX_HEIGHT):
    n = frames_in_buffer(stereo)
    raw = n * width * height * 8
    if not compression:
        return raw, raw
    blocks = -(-width // BLOCK) * -(-height // BLOCK)
    return raw, n * blocks * BITS_PER_BLOCK


def vision_factor_macs(k: int, rows: int = 3) -> int:
    """Normal equations over (6k pose + 3 landmark) unknowns, then the 3x3 Schur step."""
    m = rows * k
    n = 6 * k + 3
    normal = m * n * (n + 1) // 2
    schur = 27 + 6 * k * 9 + (6 * k) * (6 * k + 1) // 2 * 3
    return normal + schur


def backend_macs(config: PipelineConfig) -> dict:
    n = config.horizon
    age = min(config.feature_age, n)
    rows = 3 if config.stereo else 2
    tracks = min(config.features * n // age, config.max_tracks)
    vision = tracks * vision_factor_macs(age, rows)
    imu = (n - 1) * IMU_FACTOR_MACS
    sym = symbolic_for(n, age)
    solve = 2 * (sym.nnz - STATE_DIM * n)
    chol = sym.total_macs
    return {"vision": vision, "imu": imu, "cholesky": chol, "back_substitution": solve,
            "total": vision + imu + chol + solve, "vision_factors": tracks}


def model_report(config: PipelineConfig = PipelineConfig()) -> dict:
    n, age = config.horizon, min(config.feature_age, config.horizon)
    entries = n * config.features * age
    dense = min(config.max_tracks, entries)
    raw_fb, comp_fb = frame_buffer_bits(config.stereo, config.compression)
    flat = flat_table_bits(entries)
    two = two_stage_bits(entries, dense, "packed")
    two_fw = two_stage_bits(entries, dense, "field-widths")
    pattern = build_pattern(n, age)
    dim = STATE_DIM * n
    dense_h = dim * dim * 64
    structured_h = pattern.upper_nnz() * 64
    chol_dense = dense_cholesky_macs(dim)
    sym = symbolic_for(n, age)
    chol_sparse = sym.total_macs
    be = backend_macs(config)
    rows = [
        ("frame buffer", raw_fb, comp_fb),
        ("feature tracks", flat, two),
        ("hessian", dense_h, structured_h),
    ]
    return {
        "config": {"horizon": n, "feature_age": age, "features": config.features,
                   "max_tracks": config.max_tracks, "stereo": config.stereo,
                   "compression": config.compression},
        "memory": [{"block": name, "before_bits": b, "after_bits": a,
                    "before_kB": b / KB, "after_kB": a / KB,
                    "ratio": b / a} for name, b, a in rows],
        "track_store_field_widths_ratio": flat / two_fw,
        "hessian_triangle_density": pattern.triangle_density(),
        "hessian_block_density": pattern.block_triangle_density(),
        "hessian_envelope_ratio": dense_h / (sym.nnz * 64),
        "solver": {"dense_macs": chol_dense, "sparse_macs": chol_sparse,
                   "ratio": chol_dense / chol_sparse},
        "backend_macs": be,
        "published": dict(PUBLISHED),
    }


def format_report(report: dict) -> str:
    lines = [f"{'block':<16}{'before (kB)':>14}{'after (kB)':>14}{'ratio':>9}"]
    for row in report["memory"]:
        lines.append(f"{row['block']:<16}{row['before_kB']:>14.1f}{row['after_kB']:>14.1f}"
                     f"{row['ratio']:>8.2f}x")
    total_b = sum(r["before_bits"] for r in report["memory"])
    total_a = sum(r["after_bits"] for r in report["memory"])
    lines.append(f"{'total':<16}{total_b / KB:>14.1f}{total_a / KB:>14.1f}{total_b / total_a:>8.2f}x")
    s = report["solver"]
    p = report["published"]
    lines += [
        "",
        f"track store, field-width accounting: {report['track_store_field_widths_ratio']:.2f}x",
        f"hessian with fill-in envelope stored: {report['hessian_envelope_ratio']:.2f}x",
        f"hessian upper-triangle density: {100 * report['hessian_triangle_density']:.1f}% "
        f"(published {100 * p['triangle_density']:.0f}%)",
        f"cholesky MACs dense {s['dense_macs']:,} vs zero-skipping {s['sparse_macs']:,}: "
        f"{s['ratio']:.2f}x (published {p['solver_speedup']}x)",
        f"backend MACs per step: {report['backend_macs']['total']:,}",
        f"published ratios: frame buffer {p['frame_buffer_ratio']}x, tracks {p['track_store_ratio']}x, "
        f"hessian {p['hessian_ratio']}x",
    ]
    return "\n".join(lines)
