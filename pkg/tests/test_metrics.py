from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from pulsechain import metrics
from pulsechain.errors import EmptyInput, NoSamples, SizeMismatch, TooSmall
from pulsechain.figure import to_pgm
from pulsechain.metrics import GrayImage


def ssim_oracle(x: np.ndarray, y: np.ndarray) -> float:
    """Per-window SSIM written out with plain loops, 8x8 non-overlapping windows."""
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    scores = []
    for r in range(0, x.shape[0] - 7, 8):
        for c in range(0, x.shape[1] - 7, 8):
            a = [float(v) for v in x[r:r + 8, c:c + 8].ravel()]
            b = [float(v) for v in y[r:r + 8, c:c + 8].ravel()]
            n = len(a)
            ma, mb = sum(a) / n, sum(b) / n
            va = sum((v - ma) ** 2 for v in a) / n
            vb = sum((v - mb) ** 2 for v in b) / n
            cov = sum((p - ma) * (q - mb) for p, q in zip(a, b)) / n
            scores.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return sum(scores) / len(scores)


# -- METEOR ---------------------------------------------------------------

@pytest.mark.parametrize("cand,ref,expected", [
    ("the cat sat", "the cat sat down", Fraction(265, 351)),
    ("the cats sat", "the cat sat", Fraction(53, 54)),
    ("sat the cat", "the cat sat", Fraction(23, 27)),
    ("the cat sat", "the cat sat", Fraction(53, 54)),
    ("dog", "the cat sat", Fraction(0)),
])
def test_meteor_oracles(cand, ref, expected):
    assert metrics.meteor_score(cand, ref) == pytest.approx(float(expected), abs=1e-12)


def test_meteor_chunks_and_alignment():
    m = metrics.align(["sat", "the", "cat"], ["the", "cat", "sat"])
    assert m == {0: 2, 1: 0, 2: 1}
    assert metrics.count_chunks(m) == 2


def test_meteor_prefers_chunk_extension():
    # the second "the" should pair with the reference position that extends a chunk
    m = metrics.align(["a", "the"], ["the", "x", "a", "the"])
    assert m == {0: 2, 1: 3}


def test_stemmer():
    assert metrics.stem("cats") == "cat"
    assert metrics.stem("is") == "is"


def test_meteor_empty():
    with pytest.raises(EmptyInput):
        metrics.meteor_score("", "x")
    with pytest.raises(EmptyInput):
        metrics.meteor_score("...", "x")


# -- pass@1 ---------------------------------------------------------------

def test_pass_at_1():
    assert metrics.pass_at_1([True, False, True, True]) == 0.75
    assert metrics.pass_at_1([{"success": True}, {"success": False}]) == 0.5
    with pytest.raises(NoSamples):
        metrics.pass_at_1([])


# -- images ---------------------------------------------------------------

def test_psnr_inverse_image():
    x = GrayImage.from_array(np.full((16, 16), 0.25))
    inv = GrayImage.from_array(1 - x.pixels)
    # mse = 0.5^2 = 0.25
    assert metrics.psnr(x, inv) == pytest.approx(10 * math.log10(4), abs=1e-12)
    assert metrics.psnr(x, x) == metrics.PSNR_CAP


def test_ssim_constant_images():
    a = GrayImage.from_array(np.full((8, 8), 0.5))
    b = GrayImage.from_array(np.full((8, 8), 0.6))
    c1 = 1e-4
    assert metrics.ssim(a, b) == pytest.approx((0.6 + c1) / (0.61 + c1), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_ssim_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    x = rng.random((27, 35))
    y = np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1)
    got = metrics.ssim(GrayImage.from_array(x), GrayImage.from_array(y))
    assert got == pytest.approx(ssim_oracle(x, y), abs=1e-12)


def test_ssim_identity_and_symmetry():
    rng = np.random.default_rng(1)
    x, y = GrayImage.from_array(rng.random((32, 32))), GrayImage.from_array(rng.random((32, 32)))
    assert metrics.ssim(x, x) == pytest.approx(1.0)
    assert metrics.ssim(x, y) == pytest.approx(metrics.ssim(y, x), abs=1e-15)
    assert metrics.ssim(x, y, mode="multiscale") == pytest.approx(metrics.ssim(y, x, mode="multiscale"))
    assert metrics.ssim(x, x, mode="multiscale") == pytest.approx(1.0)


def test_ms_ssim_levels():
    rng = np.random.default_rng(2)
    x = rng.random((32, 32))
    y = np.clip(x + 0.05, 0, 1)
    levels = []
    a, b = x, y
    for level in range(3):
        if level:
            a = (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]) / 4
            b = (b[0::2, 0::2] + b[1::2, 0::2] + b[0::2, 1::2] + b[1::2, 1::2]) / 4
        levels.append(max(0.0, ssim_oracle(a, b)))
    expected = (levels[0] * levels[1] * levels[2]) ** (1 / 3)
    got = metrics.ssim(GrayImage.from_array(x), GrayImage.from_array(y), mode="multiscale")
    assert got == pytest.approx(expected, abs=1e-12)


def test_image_errors():
    small = GrayImage.from_array(np.zeros((16, 16)))
    with pytest.raises(TooSmall):
        metrics.ssim(small, small, mode="multiscale")
    with pytest.raises(TooSmall):
        metrics.ssim(GrayImage.from_array(np.zeros((4, 4))), GrayImage.from_array(np.zeros((4, 4))))
    with pytest.raises(SizeMismatch):
        metrics.psnr(small, GrayImage.from_array(np.zeros((16, 17))))
    with pytest.raises(ValueError):
        metrics.ssim(small, small, mode="bogus")
    with pytest.raises(ValueError):
        GrayImage.from_array(np.full((2, 2), 1.5))


def test_pgm_roundtrip():
    from PIL import Image
    img = Image.fromarray(np.arange(64, dtype=np.uint8).reshape(8, 8) * 4, mode="L")
    g = GrayImage.from_pgm(to_pgm(img))
    assert (g.width, g.height) == (8, 8)
    assert g.pixels[7, 7] == pytest.approx(252 / 255)
    with pytest.raises(ValueError):
        GrayImage.from_pgm(b"P2 1 1 255\n0")


def test_evaluate_dirs(tmp_path):
    from PIL import Image
    golden, actual = tmp_path / "g", tmp_path / "a"
    for root in (golden, actual):
        (root / "c" / "method_tracking").mkdir(parents=True)
        (root / "c" / "experimental_analysis").mkdir(parents=True)
    img = Image.fromarray((np.random.default_rng(0).random((40, 40)) * 255).astype(np.uint8), mode="L")
    for root in (golden, actual):
        (root / "c" / "method_tracking" / "figure.pgm").write_bytes(to_pgm(img))
        (root / "c" / "method_tracking" / "chain.md").write_text("the cat sat\n")
    (golden / "c" / "experimental_analysis" / "figure.pgm").write_bytes(to_pgm(img))
    (actual / "c" / "experimental_analysis" / "report.json").write_text(
        json.dumps({"intent": "experimental_analysis", "render_ok": False}))
    result = metrics.evaluate_dirs(golden, actual)
    by_path = {p["path"]: p for p in result["pairs"]}
    assert by_path["c/experimental_analysis/figure.pgm"]["missing"] is True
    mt = by_path["c/method_tracking/figure.pgm"]
    assert mt["psnr"] == metrics.PSNR_CAP and mt["ssim"] == pytest.approx(1.0)
    assert mt["fid"] == "unavailable"
    assert by_path["c/method_tracking/chain.md"]["meteor"] == pytest.approx(53 / 54)
    assert result["pass_at_1"] == 0.0 and result["chart_runs"] == 1
