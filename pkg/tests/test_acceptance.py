"""Exit criteria, one test each, each printing a single PASS/FAIL/SKIP line."""

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from conftest import ACCEPTANCE_LINES, ransac_trials, stereo_model, observe
from kfvio.backend.factors import schur_eliminate_landmark, vision_system
from kfvio.backend.hessian import StructuredHessian, build_pattern
from kfvio.backend.smoother import marginalize
from kfvio.backend.solver import back_substitute, cholesky_sparse, dense_cholesky_macs, symbolic_for
from kfvio.backend.trackstore import flat_table_bits, two_stage_bits
from kfvio.dataset import ImuSample, ScenarioConfig, preset as scenario_preset, synth_scenario
from kfvio.framecodec import BITS_PER_BLOCK, compression_ratio, encode_frame, serialize
from kfvio.geometry import KFState, so3_exp, so3_log
from kfvio.ife import preintegrate
from kfvio.pipeline import PipelineConfig, backend_macs, preset, run_sequence
from kfvio.pipeline.model import PUBLISHED

pytestmark = pytest.mark.acceptance


def report(n, ok, text):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def skip(n, text):
    ACCEPTANCE_LINES.append(f"SKIP criterion {n}: {text}")
    pytest.skip(text)


# ----------------------------------------------------------------- codec

def test_01_codec_bit_cost():
    img = np.random.default_rng(0).integers(0, 256, (480, 752), dtype=np.uint8)
    cf = encode_frame(img)
    blocks = (752 // 4) * (480 // 4)
    ok = (BITS_PER_BLOCK == 26 and cf.size_bits == 26 * blocks and cf.payload_bytes == 73_320
          and len(serialize(cf)) == 4 + 73_320)
    report(1, ok, f"{BITS_PER_BLOCK} bits per 4x4 block, 752x480 payload {cf.payload_bytes} bytes")


def test_02_codec_ratio():
    r = compression_ratio()
    ok = r == 128 / 26
    report(2, ok, f"raw ratio 128/26 = {r:.3f}x (published frame-buffer figure "
                  f"{PUBLISHED['frame_buffer_ratio']}x counts buffer overheads the bit model omits)")


# ------------------------------------------------------------ track store

def test_03_track_store_ratio():
    flat = flat_table_bits(40_000)
    packed = flat / two_stage_bits(40_000, 4000, "packed")
    literal = flat / two_stage_bits(40_000, 4000, "field-widths")
    target = PUBLISHED["track_store_ratio"]
    ok = (flat == 40_000 * 197 and abs(packed / target - 1) <= 0.05
          and literal == pytest.approx(7_880_000 / 1_268_000))
    report(3, ok, f"two-stage store {packed:.2f}x vs {target}x (within 5%: "
                  f"{abs(packed / target - 1):.1%}); literal 40000x12b + 4000x197b "
                  f"accounting gives {literal:.2f}x (see decisions ledger)")


# --------------------------------------------------------------- Hessian

def test_04_structured_hessian_roundtrip():
    H = StructuredHessian.for_window(20, 10)
    p = H.pattern
    shadow = np.zeros((300, 300))
    rng = np.random.default_rng(4)
    upper = np.argwhere(np.triu(p.elements))
    picks = upper[rng.integers(len(upper), size=100_000)]
    vals = rng.normal(size=100_000)
    for (r, c), v in zip(picks, vals):
        H.accumulate_element(int(r), int(c), float(v))
    np.add.at(shadow, (picks[:, 0], picks[:, 1]), vals)
    off = picks[:, 0] != picks[:, 1]
    np.add.at(shadow, (picks[off, 1], picks[off, 0]), vals[off])
    dense = H.to_dense()
    outside = ~p.elements
    probe = np.argwhere(outside)[rng.integers(outside.sum(), size=1000)]
    ok = (np.array_equal(dense, shadow)
          and all(H.element(int(r), int(c)) == 0.0 for r, c in probe)
          and all(H.element(int(c), int(r)) == H.element(int(r), int(c)) for r, c in picks[:1000]))
    report(4, ok, "1e5 in-pattern writes match dense shadow exactly; off-pattern reads 0; "
                  "transpose reads symmetric")


def test_05_sparse_solver_oracle():
    p = build_pattern(20, 10)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        M = np.where(p.elements, rng.normal(size=p.elements.shape), 0.0)
        A = 0.5 * (M + M.T)
        A[np.diag_indices_from(A)] = np.abs(A).sum(axis=1) + 1.0
        b = rng.normal(size=300)
        x, _ = back_substitute(cholesky_sparse(A, pattern=p), b)
        ref = np.linalg.solve(A, b)
        worst = max(worst, np.linalg.norm(A @ x - b) / np.linalg.norm(b),
                    np.linalg.norm(x - ref) / np.linalg.norm(ref))
    report(5, worst < 1e-9, f"100 SPD systems, worst relative residual {worst:.1e}")


def test_06_solver_op_count():
    dense = dense_cholesky_macs(300)
    sparse = symbolic_for(20, 10).total_macs
    ratio = dense / sparse
    report(6, ratio > 2, f"dense {dense:,} vs zero-skipping {sparse:,} MACs: {ratio:.2f}x "
                         f"(published {PUBLISHED['solver_speedup']}x)")


# ------------------------------------------------------------ preintegration

DT_NS = 5_000_000


def _stream(n, gyro, accel):
    return [ImuSample(k * DT_NS, gyro(k), accel(k)) for k in range(n)]


def test_07_preintegration():
    rot = preintegrate(_stream(401, lambda k: [0, 0, 0.5], lambda k: [0, 0, 0]), 0, 400 * DT_NS)
    acc = preintegrate(_stream(201, lambda k: [0, 0, 0], lambda k: [1.0, 0, 0]), 0, 200 * DT_NS)
    closed = max(np.abs(rot.delta_rotation - so3_exp([0, 0, 1.0])).max(),
                 np.abs(acc.delta_velocity - [1, 0, 0]).max(),
                 np.abs(acc.delta_position - [0.5, 0, 0]).max())

    rng = np.random.default_rng(7)
    c = rng.normal(size=(4, 3))
    wavy = _stream(201, lambda k: 0.5 * c[0] * np.sin(0.03 * k) + 0.2 * c[1],
                   lambda k: c[2] * np.cos(0.02 * k) + c[3] + [0, 0, 9.81])
    whole = preintegrate(wavy, 0, 200 * DT_NS)
    a = preintegrate(wavy, 0, 90 * DT_NS)
    b = preintegrate(wavy, 90 * DT_NS, 200 * DT_NS)
    comp = max(np.abs(a.delta_rotation @ b.delta_rotation - whole.delta_rotation).max(),
               np.abs(a.delta_velocity + a.delta_rotation @ b.delta_velocity
                      - whole.delta_velocity).max(),
               np.abs(a.delta_position + a.delta_velocity * b.duration
                      + a.delta_rotation @ b.delta_position - whole.delta_position).max())

    bg0, ba0 = np.array([0.01, -0.02, 0.015]), np.array([0.1, 0.05, -0.08])
    nominal = preintegrate(wavy, 0, 200 * DT_NS, bg0, ba0)
    worst = 0.0
    for which in ("g", "a"):
        for _ in range(3):
            step = rng.normal(size=3)
            step *= 1e-4 / np.linalg.norm(step)
            bg, ba = (bg0 + step, ba0) if which == "g" else (bg0, ba0 + step)
            redone = preintegrate(wavy, 0, 200 * DT_NS, bg, ba)
            R, v, p = nominal.corrected(bg, ba)
            pairs = [(so3_log(nominal.delta_rotation.T @ redone.delta_rotation),
                      so3_log(nominal.delta_rotation.T @ R)),
                     (redone.delta_velocity - nominal.delta_velocity, v - nominal.delta_velocity),
                     (redone.delta_position - nominal.delta_position, p - nominal.delta_position)]
            for true, pred in pairs:
                if np.linalg.norm(true) > 1e-12:
                    worst = max(worst, np.linalg.norm(pred - true) / np.linalg.norm(true))
    ok = closed < 1e-6 and comp < 1e-9 and worst < 1e-3
    report(7, ok, f"closed form {closed:.1e}, composition {comp:.1e}, "
                  f"bias Jacobian relative error {worst:.1e}")


# ---------------------------------------------------------- vision, marginal

def _eliminate(H, b, k=3):
    A = np.hstack([H, b[:, None]]).astype(float)
    n = H.shape[0]
    for p in range(n - 1, n - k - 1, -1):
        for r in range(n):
            if r != p and A[r, p] != 0.0:
                A[r] -= (A[r, p] / A[p, p]) * A[p]
    return A[:n - k, :n - k], A[:n - k, n]


def test_08_vision_schur():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        model = stereo_model(stereo=bool(seed % 2))
        s0 = KFState(so3_exp(rng.normal(size=3) * 0.05), rng.normal(size=3) * 0.1)
        s1 = KFState(so3_exp(rng.normal(size=3) * 0.05), s0.position + [0.3, 0.1, 0.0])
        L = s0.position + s0.rotation @ np.array([4.0, 0.5, -0.3])
        coords = np.array([observe(model, s, L) for s in (s0, s1)])
        coords[:, :2] += rng.normal(size=(2, 2)) * 0.7
        H, eps, _ = vision_system(L + 0.01, [s0, s1], coords, model)
        Hs, es = schur_eliminate_landmark(H, eps)
        Hb, eb = _eliminate(H, eps)
        worst = max(worst, np.abs(Hs - Hb).max() / np.abs(Hb).max(),
                    np.abs(es - eb).max() / max(np.abs(eb).max(), 1.0))
    report(8, worst < 1e-9, f"Schur vs dense elimination on 20 two-KF tracks: {worst:.1e}")


def test_09_marginalization():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        H = np.zeros((45, 45))
        for a, b in ((0, 1), (1, 2)):
            J = rng.normal(size=(20, 30))
            idx = np.r_[15 * a:15 * a + 15, 15 * b:15 * b + 15]
            H[np.ix_(idx, idx)] += J.T @ J
        H += np.eye(45) * 0.1
        eps = rng.normal(size=45)
        Hp, ep = marginalize(H, eps, [0], 3)
        Hb = H[15:, 15:] - H[15:, :15] @ np.linalg.solve(H[:15, :15], H[:15, 15:])
        eb = eps[15:] - H[15:, :15] @ np.linalg.solve(H[:15, :15], eps[:15])
        worst = max(worst, np.abs(Hp - Hb).max() / np.abs(Hb).max(),
                    np.abs(ep - eb).max() / np.abs(eb).max())
    report(9, worst < 1e-10, f"marginal prior vs dense Schur complement on 3-state chains: {worst:.1e}")


# ---------------------------------------------------------------- RANSAC

def test_10_ransac():
    mono = ransac_trials("mono")
    stereo = ransac_trials("stereo")
    ok = all(r >= 0.95 and leak <= 0.02 for r, leak in (mono, stereo))
    report(10, ok, f"100 trials at 30% outliers: mono recall {mono[0]:.3f} leak {mono[1]:.3f}; "
                   f"stereo recall {stereo[0]:.3f} leak {stereo[1]:.3f}")


# ------------------------------------------------------------ end to end

@pytest.mark.slow
def test_11_end_to_end_synthetic():
    cfg = PipelineConfig(kf_policy="rate:4")
    clean = run_sequence(cfg, synth_scenario(scenario_preset("kf20")))
    noisy = run_sequence(cfg, synth_scenario(scenario_preset("kf20-noisy")))
    e0, e1 = clean.error["normalized"], noisy.error["normalized"]
    n_lm = scenario_preset("kf20").n_landmarks
    ok = clean.keyframes == noisy.keyframes == 20 and n_lm == 50 and e0 < 0.01 and e1 < 1.0
    report(11, ok, f"20 KF / 50 landmarks: noiseless {e0:.4f}%, EuRoC-level noise {e1:.3f}% "
                   f"(published EuRoC average {PUBLISHED['euroc_normalized_error_pct']}%)")


@pytest.mark.slow
def test_12_euroc_v1_01():
    path = os.environ.get("KFVIO_EUROC_V1_01")
    if not path:
        skip(12, "set KFVIO_EUROC_V1_01 to an extracted V1_01_easy directory to run")
    rep = run_sequence(PipelineConfig(), path)
    e = rep.error["normalized"]
    report(12, e < 1.0, f"EuRoC V1_01_easy normalized error {e:.3f}%")


def _exclusive_and_deterministic(k, seed):
    sc = lambda: synth_scenario(ScenarioConfig(duration=1.0, rest=0.5, n_landmarks=30,  # noqa: E731
                                               pixel_noise=0.5, seed=seed))
    cfg = PipelineConfig(kf_policy=f"rate:{k}", seed=seed)
    a, b = run_sequence(cfg, sc()), run_sequence(cfg, sc())
    quiet = all(all(ops[s] == 0 for s in ("FD", "UR", "SM", "GV", "BE"))
                for cls, ops in zip(a.frame_classes, a.frame_ops) if cls == "non-KF")
    return quiet and a.to_dict() == b.to_dict()


def test_13_invariants():
    failures = []

    @settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(st.integers(1, 4), st.integers(0, 10_000))
    def prop(k, seed):
        if not _exclusive_and_deterministic(k, seed):
            failures.append((k, seed))
            raise AssertionError((k, seed))

    try:
        prop()
    except AssertionError:
        pass
    report(13, not failures, "mode exclusivity and bit-identical reruns hold over generated "
                             f"policies and seeds{'' if not failures else f' (failed {failures[0]})'}")


def test_14_adaptation():
    maxima, easy = backend_macs(preset("maxima"))["total"], backend_macs(preset("easy"))["total"]
    ratio = maxima / easy
    report(14, ratio >= 4.0, f"backend MACs maxima {maxima:,} vs easy {easy:,}: {ratio:.2f}x "
                             f"(published energy gain {PUBLISHED['adaptation_energy_gain']}x)")
