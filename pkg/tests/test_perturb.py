import math

import numpy as np
import pytest

from wassmark.perturb import (
    PROTOCOLS,
    BlurKernel,
    Ellipse,
    PerturbSpec,
    apply_blur,
    blur_directions,
    blur_kernel_for,
    line_kernel,
    motion_blur_sequence,
    occlude,
)
from wassmark.synthetic import SpotDetector, face68, render_spots

OCC = PerturbSpec("occlusion", "medium", seed=7)
BLUR = PerturbSpec("motion-blur", "large", seed=7)


def principal_angle(img: np.ndarray) -> float:
    """Orientation of the dominant second-moment axis, degrees in [0, 180)."""
    ys, xs = np.mgrid[0 : img.shape[0], 0 : img.shape[1]]
    m = img.sum()
    cx, cy = (img * xs).sum() / m, (img * ys).sum() / m
    mxx = (img * (xs - cx) ** 2).sum() / m
    myy = (img * (ys - cy) ** 2).sum() / m
    mxy = (img * (xs - cx) * (ys - cy)).sum() / m
    return math.degrees(0.5 * math.atan2(2 * mxy, mxx - myy)) % 180.0


def test_protocol_defaults_and_validation():
    assert OCC.semi_axis_range == PROTOCOLS[OCC.protocol][0]
    assert BLUR.blur_multiplier == 1.0 and BLUR.blur_cap == 31
    with pytest.raises(ValueError):
        PerturbSpec(semi_axis_range=(0.0, 0.2))
    with pytest.raises(ValueError):
        PerturbSpec(semi_axis_range=(0.2, 0.6))
    with pytest.raises(ValueError):
        PerturbSpec(blur_multiplier=0)
    with pytest.raises(ValueError):
        PerturbSpec(seed=-1)
    with pytest.raises(ValueError):
        PerturbSpec(seed=2**64)


def test_zero_area_override_is_identity():
    img = np.random.default_rng(0).uniform(size=(40, 50, 3))
    out, ell = occlude(img, PerturbSpec(semi_axis_range=(0.0, 0.0)))
    assert np.array_equal(out, img)
    assert ell.area == 0


def test_occlusion_is_deterministic_and_only_zeroes():
    img = np.random.default_rng(1).uniform(size=(64, 64))
    a, ea = occlude(img, OCC, 3)
    b, eb = occlude(img, OCC, 3)
    assert np.array_equal(a, b) and ea == eb
    assert np.all(a <= img)
    changed = a != img
    assert np.all(a[changed] == 0)
    c, ec = occlude(img, OCC, 4)
    assert ec != ea


def test_occlusion_area_audit():
    white = np.ones((64, 64))
    lo, hi = OCC.semi_axis_range
    worst = 0.0
    for k in range(50):
        out, ell = occlude(white, OCC, k)
        zeroed = int(np.count_nonzero(out == 0))
        frac = zeroed / white.size
        assert frac <= math.pi * hi**2 * 4
        if ell.inside(white.shape):
            assert frac >= math.pi * lo**2 * 0.25
            worst = max(worst, abs(zeroed - ell.area) / ell.area)
        else:
            area = ell.clipped_area(white.shape)
            if area > 50:
                worst = max(worst, abs(zeroed - area) / area)
    assert worst <= 0.05


def test_ellipse_mask_rotation():
    e = Ellipse(10, 10, 6, 2, 0.0)
    r = Ellipse(10, 10, 6, 2, math.pi / 2)
    assert np.array_equal(e.mask((21, 21)), r.mask((21, 21)).T)


def test_line_kernel_horizontal_length_5():
    k = line_kernel(5, 0.0)
    nz = k[k > 0]
    assert len(nz) == 5 and np.allclose(nz, 0.2)
    assert k.sum() == pytest.approx(1.0)
    assert np.array_equal(k, k[::-1, ::-1])


def test_single_pixel_smear():
    img = np.zeros((21, 21))
    img[10, 10] = 1.0
    out = apply_blur(img, BlurKernel(5, 0.0, 5.0, 0.0))
    assert np.allclose(out[10, 8:13], 0.2)
    assert out.sum() == pytest.approx(1.0)
    assert np.count_nonzero(out) == 5


def test_blur_orientation_audit():
    img = np.zeros((61, 61))
    img[30, 30] = 1.0
    k = blur_kernel_for((3, 4), PerturbSpec("motion-blur", "large", blur_multiplier=3.0))
    assert k.angle == math.atan2(4, 3)
    out = apply_blur(img, k)
    assert abs(principal_angle(out) - math.degrees(math.atan2(4, 3))) <= 5.0


@pytest.mark.parametrize("angle_deg", [0, 17, 45, 90, 120, 163])
def test_blur_orientation_any_direction(angle_deg):
    img = np.zeros((61, 61))
    img[30, 30] = 1.0
    out = apply_blur(img, BlurKernel(15, math.radians(angle_deg), 0, 0))
    err = abs(principal_angle(out) - angle_deg % 180)
    assert min(err, 180 - err) <= 5.0


def test_blur_preserves_energy():
    rng = np.random.default_rng(2)
    img = np.zeros((80, 80))
    img[20:60, 20:60] = rng.uniform(size=(40, 40))
    for angle in np.linspace(0, math.pi, 7):
        out = apply_blur(img, BlurKernel(15, angle, 0, 0))
        assert out.sum() == pytest.approx(img.sum(), rel=0.01)


def test_static_track_leaves_frames_unchanged():
    frames = [np.random.default_rng(k).uniform(size=(16, 16)) for k in range(4)]
    out, kernels = motion_blur_sequence(frames, [(5.0, 5.0)] * 4, BLUR)
    assert all(np.array_equal(a, b) for a, b in zip(out, frames))
    assert all(k.length == 0 for k in kernels)


def test_blur_directions_central_and_one_sided():
    track = np.array([[0, 0], [1, 0], [3, 1], [6, 3]], dtype=float)
    d = blur_directions(track)
    assert np.array_equal(d, [[1, 0], [3, 1], [5, 3], [3, 2]])


def test_kernel_length_rule_and_cap():
    medium = PerturbSpec("motion-blur", "medium")
    assert blur_kernel_for((10, 0), medium).length == 5
    assert blur_kernel_for((100, 0), medium).length == 15
    assert blur_kernel_for((100, 0), BLUR).length == 31


def test_motion_blur_validation():
    frames = [np.zeros((8, 8))] * 3
    with pytest.raises(ValueError, match="track points"):
        motion_blur_sequence(frames, [(1, 1)] * 4, BLUR)
    with pytest.raises(ValueError, match="at least 3"):
        motion_blur_sequence(frames[:2], [(1, 1)] * 2, BLUR)
    with pytest.raises(ValueError, match="motion-blur"):
        motion_blur_sequence(frames, [(1, 1)] * 3, OCC)


def test_motion_blur_deterministic_rgb():
    rng = np.random.default_rng(3)
    frames = [rng.uniform(size=(24, 24, 3)) for _ in range(5)]
    track = np.cumsum(rng.normal(scale=4, size=(5, 2)), axis=0)
    a, ka = motion_blur_sequence(frames, track, BLUR)
    b, kb = motion_blur_sequence(frames, track, BLUR)
    assert ka == kb
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x.shape == (24, 24, 3) and x.min() >= 0 and x.max() <= 1 for x in a)


def test_perturbation_degrades_a_fixed_pipeline():
    """Mean detector error over a seeded batch grows under occlusion and blur."""
    det, prior = SpotDetector(), face68()
    rng = np.random.default_rng(4)
    clean_err, occ_err, blur_err = [], [], []
    spec = PerturbSpec("occlusion", "large", seed=11)

    def error(img, pts):
        return np.linalg.norm(det(img, prior) - pts, axis=1).mean()

    for k in range(16):
        pts = face68(rng=rng, jitter=1.5)
        img = render_spots(pts, (256, 256))
        clean_err.append(error(img, pts))
        occ_err.append(error(occlude(img, spec, k)[0], pts))
        blur_err.append(error(apply_blur(img, BlurKernel(9, rng.uniform(0, math.pi), 0, 0)), pts))
    assert np.mean(occ_err) >= np.mean(clean_err)
    assert np.mean(blur_err) >= np.mean(clean_err)
