"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a PASS/FAIL line; conftest prints them together at the end
of the run. Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest

from oracles import central_difference, dirichlet_map, scaled_error
from wassmark import io
from wassmark.cli import main as cli_main
from wassmark.fit import LossKind, SpuriousSetup, fit, offset_blob_problem, spurious_activation_study
from wassmark.heatmap import Amplitude, TargetSpec, decode_get_bc, decode_get_max, make_gaussian_target
from wassmark.metrics import EvalPairing, ImagePair, LandmarkSet, NormalizationRule, evaluate
from wassmark.ot import (
    SinkhornConfig,
    exact_w1,
    js_divergence_loss,
    l2_heatmap_loss,
    l2_softmax_loss,
    sinkhorn_w1,
    soft_argmax_loss,
    softmax_normalize,
    wasserstein_loss,
)
from wassmark.ot.pairs import random_pair
from wassmark.perturb import BlurKernel, Ellipse, PerturbSpec, apply_blur, blur_kernel_for, motion_blur_sequence, occlude
from wassmark.synthetic import face68

pytestmark = pytest.mark.slow

RESULTS: list[tuple[str, bool, str]] = []


def record(name: str, ok: bool, detail: str) -> None:
    RESULTS.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


# --- OT oracle equivalence --------------------------------------------------

ORACLE_GRIDS = [(1, 4), (3, 3), (8, 8), (16, 16)]
ORACLE_EPS = (0.1, 0.05, 0.02, 0.01)
# slack for the monotone check: differences below it are oracle round-off
MONOTONE_SLACK = 1e-9
# near-permutation kernels (1x4 at eps=0.01) need far more than the default
# 1000 iterations before the plan is feasible to 1e-9
ORACLE_CFG = dict(max_iterations=500_000, marginal_tolerance=1e-9)


def test_ot_oracle_equivalence():
    t0 = time.perf_counter()
    worst_gap, worst_where, non_monotone, unconverged = 0.0, "", [], 0
    per_grid = {}
    for shape in ORACLE_GRIDS:
        grid_worst = 0.0
        for k in range(50):
            u, v = random_pair(shape, np.random.default_rng([0, k]))
            exact, _ = exact_w1(u, v)
            runs = [sinkhorn_w1(u, v, SinkhornConfig(eps, **ORACLE_CFG), gradient=False) for eps in ORACLE_EPS]
            unconverged += sum(not r.converged for r in runs)
            values = [r.value for r in runs]
            gap = abs(values[-1] - exact) / exact
            grid_worst = max(grid_worst, gap)
            if gap > worst_gap:
                worst_gap, worst_where = gap, f"{shape[0]}x{shape[1]} pair {k} (W1={exact:.3f})"
            chain = values + [exact]
            if any(b > a + MONOTONE_SLACK for a, b in zip(chain, chain[1:])):
                non_monotone.append(f"{shape[0]}x{shape[1]}#{k}")
        per_grid[f"{shape[0]}x{shape[1]}"] = grid_worst
    elapsed = time.perf_counter() - t0
    grids = ", ".join(f"{g} {100 * w:.2f}%" for g, w in per_grid.items())
    detail = (
        f"200 pairs, worst gap at eps=0.01 {100 * worst_gap:.2f}% at {worst_where} [{grids}], "
        f"non-monotone {len(non_monotone)}, unconverged solves {unconverged}, {elapsed:.1f}s"
    )
    record("OT oracle equivalence (2%, monotone, <60s)", worst_gap <= 0.02 and not non_monotone and elapsed < 60, detail)


# --- gradient checks --------------------------------------------------------

GRAD_CFG = SinkhornConfig(0.01, 50000, 1e-12)


class _Wasserstein:
    """W loss whose finite-difference probes warm-start from the last full solve."""

    def __init__(self):
        self.init = None

    def __call__(self, z, t, p):
        r = wasserstein_loss(z, t, GRAD_CFG)
        self.init = r.potentials
        return r.value, r.gradient

    def probe(self, z, t, p):
        return sinkhorn_w1(softmax_normalize(z), t, GRAD_CFG, init=self.init, gradient=False).value, None


def _grad_cases():
    return {
        "wasserstein": _Wasserstein(),
        "l2": lambda z, t, p: l2_heatmap_loss(z, t),
        "l2-softmax": lambda z, t, p: l2_softmax_loss(z, t),
        "js": lambda z, t, p: js_divergence_loss(z, t),
        "soft-argmax": lambda z, t, p: soft_argmax_loss(z, p),
    }


def test_gradient_checks():
    t0 = time.perf_counter()
    worst = {}
    for name, f in _grad_cases().items():
        errs = []
        for k in range(100):
            rng = np.random.default_rng([1, k])
            z = rng.normal(size=(6, 6))
            t = dirichlet_map((6, 6), rng)
            p = tuple(rng.uniform(0, 5, size=2))
            _, g = f(z, t, p)
            probe = getattr(f, "probe", f)
            fd = central_difference(lambda x: probe(x, t, p)[0], z)
            errs.append(scaled_error(g, fd))
        worst[name] = max(errs)
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s"
    record("Gradient checks (1e-4 relative, 100 instances per loss, <120s)", max(worst.values()) <= 1e-4 and elapsed < 120, detail)


# --- saturation -------------------------------------------------------------


def test_saturation_property():
    """sigma = 1 blobs 16 px apart on 32x32; derivative of each loss along a
    1-px translation of the source towards the target, per normalized unit."""
    n, sigma = 32, 1.0
    spec = TargetSpec(sigma, n, n)
    target = make_gaussian_target((23.5, 15.5), spec)

    def source(x):
        return make_gaussian_target((x, 15.5), spec, warn=False)

    def w(p):
        return sinkhorn_w1(p, target, SinkhornConfig(max_iterations=5000), gradient=False).value

    def l2(p):
        return l2_softmax_loss(np.log(np.maximum(p, 1e-300)), target)[0]

    unit = n - 1  # px per normalized unit
    dl = (l2(source(8.5)) - l2(source(6.5))) / 2 * unit
    dw = (w(source(8.5)) - w(source(6.5))) / 2 * unit
    ok = abs(dl) <= 1e-6 and abs(dw) >= 0.1
    record("Saturation: L2 directional <= 1e-6, W >= 0.1", ok, f"L2 {abs(dl):.2e}, W {abs(dw):.4f} per normalized unit")


# --- decoders ---------------------------------------------------------------


def test_decoder_round_trips():
    rng = np.random.default_rng(2)
    bc_err, max_err = 0.0, 0.0
    for sigma in (1.0, 1.5, 3.0):
        lo, hi = 3 * sigma, 63 - 3 * sigma
        for _ in range(50):
            cx, cy = rng.uniform(lo, hi, size=2)
            p = decode_get_bc(make_gaussian_target((cx, cy), TargetSpec(sigma)))
            bc_err = max(bc_err, abs(p.x - cx), abs(p.y - cy))
            ix, iy = rng.integers(math.ceil(lo), math.floor(hi) + 1, size=2)
            q = decode_get_max(make_gaussian_target((ix, iy), TargetSpec(sigma, amplitude=Amplitude.PEAK_ONE)))
            max_err = max(max_err, abs(q.x - ix), abs(q.y - iy))
    ok = bc_err <= 0.1 and max_err <= 0.25
    record("Decoder round trips (BC 0.1 px, MAX 0.25 px)", ok, f"GET_BC worst {bc_err:.2e} px, GET_MAX worst {max_err:.2f} px over 150 each")


# --- spurious activation ----------------------------------------------------


def test_spurious_activation_mechanism():
    setup = SpuriousSetup()
    rows = spurious_activation_study(np.linspace(0.0, 0.45, 46), setup)
    worst = max(abs(r.bc_displacement - r.analytic_displacement) for r in rows)
    m_star = setup.dominance_mass()
    below, above = spurious_activation_study([m_star - 1e-3, m_star + 1e-3], setup)
    jump = below.max_displacement <= 0.25 and abs(above.max_displacement - setup.distance) <= 0.25
    ok = worst <= 0.05 and jump
    detail = (
        f"BC vs analytic worst {worst:.1e} px; GET_MAX {below.max_displacement:.2f} px at m={m_star - 1e-3:.4f}, "
        f"{above.max_displacement:.2f} px at m={m_star + 1e-3:.4f}"
    )
    record("Spurious activation (0.05 px, GET_MAX crossover)", ok, detail)


# --- metrics ----------------------------------------------------------------


def _pairing(offsets, d=1.0):
    images = []
    for i, off in enumerate(np.asarray(offsets, dtype=np.float64)):
        gt = np.zeros_like(off)
        images.append(ImagePair(LandmarkSet(gt + off), LandmarkSet(gt), NormalizationRule.explicit(d), f"im{i}"))
    return EvalPairing(tuple(images))


def test_metrics_golden():
    golden = evaluate(_pairing([[[0.05, 0], [0.25, 0]], [[0, 0.05], [0.05, 0]]]), thresholds=[0.1])
    g_ok = golden.fr_image[0.1] == 0.5 and golden.fr_landmark[0.1] == 0.25

    off = np.zeros((3, 68, 2))
    off[:, :, 0] = 0.001
    off[:, 7, 0] = 0.5
    outlier = evaluate(_pairing(off), thresholds=[0.1])
    o_ok = outlier.fr_image[0.1] == 0 and outlier.fr_landmark[0.1] > 0

    rng = np.random.default_rng(3)
    images = []
    for i in range(5):
        gt = rng.uniform(0, 200, size=(68, 2))
        images.append(ImagePair(LandmarkSet(gt + rng.normal(scale=3, size=gt.shape)), LandmarkSet(gt), NormalizationRule.explicit(70.0), f"i{i}"))
    base = evaluate(EvalPairing(tuple(images)), thresholds=[0.02, 0.05])
    s_ok = True
    for f in (0.5, 4.0, 1024.0):
        scaled = EvalPairing(tuple(ImagePair(p.pred.scaled(f), p.gt.scaled(f), p.norm.scaled(f), p.image_id) for p in images))
        rep = evaluate(scaled, thresholds=[0.02, 0.05])
        s_ok &= np.array_equal(rep.nme_per_landmark, base.nme_per_landmark) and rep.fr_image == base.fr_image
        s_ok &= rep.fr_landmark == base.fr_landmark and np.array_equal(rep.ced, base.ced) and rep.auc == base.auc
    detail = (
        f"golden FR_I={golden.fr_image[0.1]} FR_L={golden.fr_landmark[0.1]}; outlier FR_I={outlier.fr_image[0.1]} "
        f"FR_L={outlier.fr_landmark[0.1]:.4f}; bit-exact scale invariance {s_ok}"
    )
    record("Metrics golden fixtures", g_ok and o_ok and s_ok, detail)


# --- fit harness ------------------------------------------------------------


def test_fit_harness():
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        w = fit(offset_blob_problem(LossKind.WASSERSTEIN, iterations=1000))
    l2 = fit(offset_blob_problem(LossKind.L2, iterations=101))
    elapsed = time.perf_counter() - t0
    bc_err = math.hypot(w.final_bc[0] - 32, w.final_bc[1] - 32)
    w_dec, l2_dec = w.relative_decrease(100), l2.relative_decrease(100)
    ok = bc_err <= 0.5 and w_dec >= 0.2 and l2_dec <= 0.01 and elapsed < 300
    detail = (
        f"W GET_BC error {bc_err:.3f} px, W first-100 decrease {100 * w_dec:.1f}%, "
        f"L2 first-100 decrease {100 * l2_dec:.2f}% (bound 1%), {elapsed:.0f}s"
    )
    record("Fit harness (W BC 0.5 px, W >= 20%, L2 <= 1%, <5min)", ok, detail)


# --- perturbation -----------------------------------------------------------


def _principal_angle(img):
    ys, xs = np.mgrid[0 : img.shape[0], 0 : img.shape[1]]
    m = img.sum()
    cx, cy = (img * xs).sum() / m, (img * ys).sum() / m
    mxx, myy = (img * (xs - cx) ** 2).sum() / m, (img * (ys - cy) ** 2).sum() / m
    mxy = (img * (xs - cx) * (ys - cy)).sum() / m
    return math.degrees(0.5 * math.atan2(2 * mxy, mxx - myy)) % 180.0


def test_perturbation_audits():
    rng = np.random.default_rng(4)
    img = rng.uniform(size=(96, 96, 3))
    frames = [rng.uniform(size=(48, 48)) for _ in range(5)]
    track = np.cumsum(rng.normal(scale=5, size=(5, 2)), axis=0)
    spec_o, spec_b = PerturbSpec("occlusion", "large", seed=9), PerturbSpec("motion-blur", "large", seed=9)
    repro = all(np.array_equal(occlude(img, spec_o, k)[0], occlude(img, spec_o, k)[0]) for k in range(10))
    a, b = motion_blur_sequence(frames, track, spec_b)[0], motion_blur_sequence(frames, track, spec_b)[0]
    repro &= all(x.tobytes() == y.tobytes() for x, y in zip(a, b))

    white = np.ones((96, 96))
    area_err = 0.0
    for k in range(50):
        out, ell = occlude(white, spec_o, k)
        area = ell.clipped_area(white.shape)
        if area > 50:
            area_err = max(area_err, abs(np.count_nonzero(out == 0) - area) / area)
    for e in (Ellipse(48, 48, 20, 8, 0.3), Ellipse(48, 48, 30, 12, 1.2)):
        area_err = max(area_err, abs(e.mask((96, 96)).sum() - e.area) / e.area)

    angle_err = 0.0
    for d in [(3, 4), (5, 0), (0, 5), (-4, 3), (6, -2)]:
        point = np.zeros((81, 81))
        point[40, 40] = 1.0
        k = blur_kernel_for(d, PerturbSpec("motion-blur", "large", blur_multiplier=3.0))
        err = abs(_principal_angle(apply_blur(point, k)) - math.degrees(math.atan2(d[1], d[0])) % 180)
        angle_err = max(angle_err, min(err, 180 - err))

    energy_err = 0.0
    tex = np.zeros((96, 96))
    tex[24:72, 24:72] = rng.uniform(size=(48, 48))
    for angle in np.linspace(0, math.pi, 9):
        energy_err = max(energy_err, abs(apply_blur(tex, BlurKernel(21, angle, 0, 0)).sum() / tex.sum() - 1))
    ok = repro and area_err <= 0.05 and angle_err <= 5 and energy_err <= 0.01
    detail = f"reproducible {repro}, area error {100 * area_err:.2f}%, orientation error {angle_err:.2f} deg, energy error {100 * energy_err:.3f}%"
    record("Perturbation determinism and audits", ok, detail)


# --- CLI round trip ---------------------------------------------------------


def test_cli_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    recs = [io.LandmarkRecord(f"face{k}", LandmarkSet(face68(rng=rng, jitter=2.0)), normalization=NormalizationRule.explicit(1.0)) for k in range(8)]
    io.write_landmarks(tmp_path / "gt.json", io.LandmarkFile(recs))
    out = tmp_path / "out"
    codes = [
        cli_main(["--output-dir", str(out), "gen-targets", str(tmp_path / "gt.json"), "--scale", "4", "--sigma", "1.5"]),
        cli_main(["--output-dir", str(out), "decode", str(out / "targets.hmf"), "--scale", "4"]),
        cli_main(["--output-dir", str(out), "eval", str(out / "decoded.json"), str(tmp_path / "gt.json")]),
    ]
    rep = json.loads((out / "report.json").read_text())
    auc = rep["auc"]["0.1"]
    ok = codes == [0, 0, 0] and rep["nme"] <= 0.4 and auc >= 0.999
    record("CLI round trip (nme <= 0.4 px, AUC >= 0.999)", ok, f"exit codes {codes}, nme {rep['nme']:.2e} px, AUC {auc:.4f}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
