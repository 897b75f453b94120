"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
report.  Tolerances are pinned here and nowhere else.  The exporter
acceptance (synthetic checkpoint export + agreement) lives in the
frontend package's test suite, driven through the CLI and .fbm contract.
"""

import time

import numpy as np

from fracbnn import bitpack, cli, kernels, modelfile, oracle, verify
from fracbnn.bench import run as bench_run
from fracbnn.bitpack import PackedWeights
from fracbnn.encoding import (
    ThermometerConfig,
    correlation_experiment,
    draw_correlation_kernels,
    make_encoder,
    thermometer_encode_pixel,
)
from fracbnn.errors import FormatError
from fracbnn.images import synthetic_images, write_ppm_file
from fracbnn.kernels import DELTA_ALWAYS_CLOSED, DELTA_ALWAYS_OPEN, FracActivation
from fracbnn.model import build_fracbnn_resnet20, count_ops, forward


def report(ok: bool, name: str, detail: str):
    print(f"\nACCEPTANCE {'PASS' if ok else 'FAIL'} — {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_kernel_equivalence_500_cases():
    start = time.perf_counter()
    checks = [check(seed=11 + i, cases=500) for i, check in enumerate(verify.KERNEL_CHECKS)]
    elapsed = time.perf_counter() - start
    names = {c.name for c in checks}
    assert names == {"binary_conv2d", "frac_conv2d", "quantize2bit", "batchnorm_apply",
                     "bprelu", "avgpool2d", "linear_classifier"}
    all_ok = all(c.ok for c in checks) and elapsed < 60.0
    max_ulp = max(c.max_ulp for c in checks)
    report(all_ok, "kernel equivalence",
           f"7 kernels x 500 seeded cases each, integer exact, max fixed-point "
           f"deviation {max_ulp} ULP, {elapsed:.1f}s (< 60s)")


def test_fractional_gate_degeneracies():
    rng = np.random.default_rng(21)
    ok = True
    for c in (16, 65):
        q = np.array([-3, -1, 1, 3])[rng.integers(0, 4, (c, 6, 6))]
        msb = np.where(q > 0, 1, -1)
        act = FracActivation(msb=bitpack.pack(msb), lsb=bitpack.pack(q - 2 * msb))
        wv = (rng.integers(0, 2, (4, c, 3, 3)) * 2 - 1).astype(np.int64)
        pw = PackedWeights.from_dense(wv)
        closed = kernels.frac_conv2d(
            act, pw, np.full(4, DELTA_ALWAYS_CLOSED, np.int32), stride=1, pad=1)
        base = kernels.binary_conv2d(act.msb, pw, stride=1, pad=1)
        ok &= bool(np.array_equal(closed.output.values, base.values << 1))
        ok &= closed.sparsity == 1.0
        opened = kernels.frac_conv2d(
            act, pw, np.full(4, DELTA_ALWAYS_OPEN, np.int32), stride=1, pad=1)
        ok &= bool(np.array_equal(opened.output.values, oracle.conv2d(q, wv, 1, 1)))
        ok &= opened.sparsity == 0.0
    report(ok, "fractional-gate degeneracies",
           "closed == base<<1 with sparsity 1.0; open == dense 2-bit conv "
           "with sparsity 0.0 (exact)")


def test_thermometer_law_exhaustive():
    ok = True
    for r in (1, 4, 8, 16, 32, 64):
        cfg = ThermometerConfig(r)
        prev = np.zeros(cfg.length, dtype=np.uint8)
        for p in range(256):
            vec = thermometer_encode_pixel(p, cfg)
            ok &= int(vec.sum()) == int(np.floor(p / r + 0.5))
            ok &= bool(np.all(prev <= vec))
            prev = vec
    ok &= ThermometerConfig(8).length == 32
    ok &= thermometer_encode_pixel(109, ThermometerConfig(32)).sum() == 3
    report(ok, "thermometer law",
           "ones-count == round(p/R) and monotone subset for all p in [0,255], "
           "R in {1,4,8,16,32,64}; R=8 gives 32 channels per color; "
           "p=109 @ R=32 encodes 3 ones")


def test_correlation_experiment():
    start = time.perf_counter()
    seed = 0
    imgs = synthetic_images(seed + 100, 30)
    k_th = draw_correlation_kernels(np.random.default_rng(seed), 96, 48, "sign_committed")
    k_rgb = draw_correlation_kernels(np.random.default_rng(seed), 3, 48, "gaussian")
    res_th = correlation_experiment(imgs, k_th, make_encoder("thermometer"),
                                    windows_per_image=40, seed=seed)
    res_rgb = correlation_experiment(imgs, k_rgb, make_encoder("rgb_sign"),
                                     windows_per_image=40, seed=seed)
    elapsed = time.perf_counter() - start
    windows = len(imgs) * 40
    ok = (windows >= 1000 and not res_th.degenerate and not res_rgb.degenerate
          and res_th.r >= 0.8 and res_th.r - res_rgb.r >= 0.1 and elapsed < 30.0)
    report(ok, "correlation experiment",
           f"r(thermometer)={res_th.r:.3f} >= 0.8; r(raw RGB)={res_rgb.r:.3f}; "
           f"margin {res_th.r - res_rgb.r:.3f} >= 0.1 over {windows} windows, "
           f"{elapsed:.1f}s (< 30s)")


def test_accounting_against_reference_scale():
    counts = count_ops(build_fracbnn_resnet20())
    params_m = counts.params_bits / 1e6
    base_m = counts.bmacs_base / 1e6
    total_m = counts.total_bmacs(0.60) / 1e6
    ok = (abs(params_m / 0.27 - 1) <= 0.10
          and abs(base_m / 40.9 - 1) <= 0.10
          and abs(total_m / 71.5 - 1) <= 0.15)
    report(ok, "op/parameter accounting",
           f"binary params {params_m:.3f}M (0.27M +-10%), base BMACs {base_m:.1f}M "
           f"(40.9M +-10%), total at 60% sparsity {total_m:.1f}M (71.5M +-15%)")


def test_end_to_end_oracle_equality():
    mismatches = 0
    runs = 0
    for m_seed in range(20):
        loaded = modelfile.generate_synthetic(5000 + m_seed)
        for img in synthetic_images(6000 + m_seed, 5):
            got = forward(loaded, img)
            want = oracle.forward(loaded, img)
            runs += 1
            if not (np.array_equal(got.logits, want)
                    and got.predicted_class == int(np.argmax(want))):
                mismatches += 1
    report(mismatches == 0, "end-to-end oracle equality",
           f"20 synthetic models x 5 images: bitwise-equal logits and identical "
           f"argmax on {runs} runs ({mismatches} mismatches)")


def test_infer_determinism(tmp_path, capsys):
    loaded = modelfile.generate_synthetic(77)
    model_path = tmp_path / "m.fbm"
    modelfile.save_file(loaded, model_path)
    image_path = tmp_path / "img.ppm"
    write_ppm_file(synthetic_images(78, 1)[0], image_path)
    outputs = set()
    for _ in range(5):
        for threads in ("1", "4"):
            code = cli.main(["infer", "--model", str(model_path),
                             "--image", str(image_path), "--json",
                             "--threads", threads])
            out = capsys.readouterr().out
            outputs.add(out)
            assert code == 0
    with capsys.disabled():
        report(len(outputs) == 1, "inference determinism",
               "cmd_infer json byte-identical across 5 runs x threads {1, 4}")


def test_packed_engine_speedup(resnet_model):
    rep = bench_run(resnet_model, iterations=8, threads=1, image_seed=3,
                    oracle_iterations=2)
    ratio = rep.speedup_vs_oracle
    engine = rep.lanes[0]
    report(ratio >= 8.0, "packed-engine throughput",
           f"{engine.name} {engine.images_per_second:.1f} img/s vs oracle "
           f"{rep.lane('oracle').images_per_second:.2f} img/s at 1 thread: "
           f"{ratio:.1f}x (>= 8x required)")


def test_modelfile_corruption_fuzz(resnet_model):
    blob = modelfile.save(resnet_model)
    rng = np.random.default_rng(13)
    n = len(blob)
    silent = 0
    cases = 0
    for i in range(1000):
        data = bytearray(blob)
        if i % 2 == 0:
            pos = int(rng.integers(0, n))
            data[pos] ^= 1 << int(rng.integers(0, 8))
            mutated = bytes(data)
            if mutated == blob:
                continue
        else:
            mutated = bytes(data[: int(rng.integers(0, n))])
        cases += 1
        try:
            modelfile.load(mutated)
            silent += 1
        except FormatError:
            pass
    report(silent == 0, "model-file robustness",
           f"{cases} corruption cases (bit flips and truncations), "
           f"{silent} silent loads")
