"""Engine-vs-oracle equivalence harness.

Drives every kernel with seeded random instances spanning the supported
channel counts, kernel sizes and strides, comparing against the dense
reference: integer kernels must match exactly, fixed-point kernels within
one ULP of the wide-precision result.  Used by the `verify` CLI command
and by the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bitpack, kernels, model, modelfile, oracle
from .bitpack import PackedWeights
from .fixedpoint import from_float
from .images import synthetic_images
from .kernels import FixedFeatureMap, FracActivation, IntFeatureMap

CHANNEL_GRID = (1, 63, 64, 65, 96, 128)


@dataclass
class CheckResult:
    name: str
    cases: int = 0
    failures: int = 0
    max_ulp: int = 0
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        extra = f" max_ulp={self.max_ulp}" if self.max_ulp else ""
        detail = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.cases} cases, {self.failures} failures{extra}{detail}"


def _bipolar(rng, shape):
    return (rng.integers(0, 2, shape) * 2 - 1).astype(np.int64)


def _conv_geometry(rng, case_index):
    c = CHANNEL_GRID[case_index % len(CHANNEL_GRID)]
    k = 3 if case_index % 2 == 0 else 1
    stride = 1 if (case_index // 2) % 2 == 0 else 2
    pad = 1 if (k == 3 and case_index % 3 != 0) else 0
    h = int(rng.integers(k, k + 5))
    w = int(rng.integers(k, k + 5))
    co = int(rng.integers(1, 7))
    return c, co, k, stride, pad, h, w


def check_binary_conv2d(seed: int, cases: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("binary_conv2d")
    for i in range(cases):
        c, co, k, stride, pad, h, w = _conv_geometry(rng, i)
        x = _bipolar(rng, (c, h, w))
        wt = _bipolar(rng, (co, c, k, k))
        got = kernels.binary_conv2d(bitpack.pack(x), PackedWeights.from_dense(wt),
                                    stride=stride, pad=pad)
        want = oracle.conv2d(x, wt, stride, pad)
        res.cases += 1
        if not np.array_equal(got.values, want):
            res.failures += 1
    return res


def check_frac_conv2d(seed: int, cases: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("frac_conv2d")
    levels = np.array([-3, -1, 1, 3], dtype=np.int64)
    for i in range(cases):
        c, co, k, stride, pad, h, w = _conv_geometry(rng, i)
        q = levels[rng.integers(0, 4, (c, h, w))]
        msb = oracle.sign_dense(q)
        lsb = q - 2 * msb
        wt = _bipolar(rng, (co, c, k, k))
        fan = k * k * c
        mode = i % 5
        if mode == 0:
            delta = np.full(co, kernels.DELTA_ALWAYS_OPEN, dtype=np.int32)
        elif mode == 1:
            delta = np.full(co, kernels.DELTA_ALWAYS_CLOSED, dtype=np.int32)
        else:
            delta = rng.integers(-fan, fan + 1, co).astype(np.int32)
        act = FracActivation(msb=bitpack.pack(msb), lsb=bitpack.pack(lsb))
        got = kernels.frac_conv2d(act, PackedWeights.from_dense(wt), delta,
                                  stride=stride, pad=pad)
        want_out, want_mask, want_sp = oracle.frac_conv(msb, lsb, wt, delta, stride, pad)
        res.cases += 1
        if (not np.array_equal(got.output.values, want_out)
                or not np.array_equal(got.update_mask, want_mask)
                or got.sparsity != want_sp):
            res.failures += 1
    return res


def check_quantize2bit(seed: int, cases: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("quantize2bit")
    for i in range(cases):
        c = CHANNEL_GRID[i % len(CHANNEL_GRID)]
        h, w = rng.integers(2, 7, 2)
        raw = rng.integers(-6 << 16, 6 << 16, (c, int(h), int(w))).astype(np.int32)
        s = rng.integers(int(0.2 * 65536), 2 << 16, c).astype(np.int32)
        act = kernels.quantize2bit(FixedFeatureMap(raw), s)
        got = 2 * bitpack.unpack(act.msb).astype(np.int64) + bitpack.unpack(act.lsb)
        want = oracle.quantize_dense(raw, s)
        res.cases += 1
        if not np.array_equal(got, want):
            res.failures += 1
    return res


def _ulp_compare(res: CheckResult, got: np.ndarray, want: np.ndarray, tol: int = 1):
    diff = int(np.max(np.abs(got.astype(np.int64) - want.astype(np.int64))))
    res.cases += 1
    res.max_ulp = max(res.max_ulp, diff)
    if diff > tol:
        res.failures += 1


def check_batchnorm(seed: int, cases: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("batchnorm_apply")
    for i in range(cases):
        c = CHANNEL_GRID[i % len(CHANNEL_GRID)]
        h, w = (int(v) for v in rng.integers(2, 7, 2))
        scale = from_float(rng.uniform(-2, 2, c))
        bias = from_float(rng.uniform(-1, 1, c))
        if i % 2 == 0:
            x = rng.integers(-2000, 2000, (c, h, w)).astype(np.int32)
            got = kernels.batchnorm_apply(IntFeatureMap(x), scale, bias)
            want = oracle.batchnorm_int(x, scale, bias)
        else:
            x = rng.integers(-8 << 16, 8 << 16, (c, h, w)).astype(np.int32)
            got = kernels.batchnorm_apply(FixedFeatureMap(x), scale, bias)
            want = oracle.batchnorm_fixed(x, scale, bias)
        _ulp_compare(res, got.raw, want)
    return res


def check_bprelu(seed: int, cases: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("bprelu")
    for i in range(cases):
        c = CHANNEL_GRID[i % len(CHANNEL_GRID)]
        h, w = (int(v) for v in rng.integers(2, 7, 2))
        x = rng.integers(-8 << 16, 8 << 16, (c, h, w)).astype(np.int32)
        alpha = from_float(rng.uniform(-1, 1, c))
        beta = from_float(rng.uniform(0, 1.5, c))
        gamma = from_float(rng.uniform(-1, 1, c))
        got = kernels.bprelu(FixedFeatureMap(x), alpha, beta, gamma)
        want = oracle.bprelu_fixed(x, alpha, beta, gamma)
        _ulp_compare(res, got.raw, want)
    return res


def check_avgpool(seed: int, cases: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("avgpool2d")
    for i in range(cases):
        c = CHANNEL_GRID[i % len(CHANNEL_GRID)]
        h, w = (2 * int(v) for v in rng.integers(1, 5, 2))
        x = rng.integers(-8 << 16, 8 << 16, (c, h, w)).astype(np.int32)
        got = kernels.avgpool2d(FixedFeatureMap(x))
        want = oracle.avgpool_fixed(x)
        _ulp_compare(res, got.raw, want)
    return res


def check_classifier(seed: int, cases: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("linear_classifier")
    for i in range(cases):
        c = CHANNEL_GRID[i % len(CHANNEL_GRID)]
        ncls = int(rng.integers(2, 12))
        f = rng.integers(-4 << 16, 4 << 16, c).astype(np.int32)
        wt = rng.integers(-127, 128, (ncls, c)).astype(np.int8)
        bias = rng.integers(-1 << 20, 1 << 20, ncls).astype(np.int32)
        got = kernels.linear_classifier(f, wt, bias)
        want = oracle.linear_classifier_dense(f, wt, bias)
        res.cases += 1
        if not np.array_equal(got, want.astype(np.int32)):
            res.failures += 1
    return res


def check_end_to_end(seed: int, n_models: int = 3, n_images: int = 2) -> CheckResult:
    res = CheckResult("end_to_end_forward")
    for m in range(n_models):
        loaded = modelfile.generate_synthetic(seed + m)
        imgs = synthetic_images(seed + 1000 + m, n_images)
        for img in imgs:
            got = model.forward(loaded, img)
            want = oracle.forward(loaded, img)
            res.cases += 1
            if not np.array_equal(got.logits, want):
                res.failures += 1
    return res


KERNEL_CHECKS = (
    check_binary_conv2d,
    check_frac_conv2d,
    check_quantize2bit,
    check_batchnorm,
    check_bprelu,
    check_avgpool,
    check_classifier,
)


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def lines(self):
        return [c.line() for c in self.checks]


def run_all(seed: int = 0, cases: int = 100, end_to_end: bool = True) -> VerifyReport:
    report = VerifyReport()
    if cases == 0:
        report.checks.append(CheckResult("kernel_equivalence", cases=0,
                                         detail="no cases requested, trivially passing"))
        return report
    for i, check in enumerate(KERNEL_CHECKS):
        report.checks.append(check(seed + i, cases))
    if end_to_end:
        report.checks.append(check_end_to_end(seed + 100))
    return report
