"""Evaluation metrics: METEOR (exact + stem), pass@1, PSNR and SSIM/MS-SSIM.

Scores are on a 0-1 scale; multiply by 100 to compare with tables that
report percentages. Metrics that need pretrained networks (BERTScore,
FID, LPIPS, ...) are not computed and are reported as unavailable.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import EmptyInput, NoSamples, SizeMismatch, TooSmall

UNAVAILABLE_METRICS = ("bertscore", "gpt_score", "is", "fid", "kid", "clip_fid", "lpips", "cmmd")

PSNR_CAP = 99.0
SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
MS_LEVELS = 3
MS_MIN_SIDE = 32


# -- METEOR ---------------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@lru_cache(maxsize=1)
def _stem_rules() -> tuple[tuple[str, str], ...]:
    text = resources.files("pulsechain").joinpath("data/stem_rules.txt").read_text(encoding="utf-8")
    rules = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            parts = line.split()
            rules.append((parts[0], parts[1] if len(parts) > 1 else ""))
    return tuple(rules)


def stem(token: str) -> str:
    for suffix, repl in _stem_rules():
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: len(token) - len(suffix)] + repl
    return token


def _match_stage(cand: list[str], ref: list[str], matches: dict[int, int]) -> None:
    used = set(matches.values())
    for i, tok in enumerate(cand):
        if i in matches:
            continue
        options = [j for j, r in enumerate(ref) if r == tok and j not in used]
        if not options:
            continue
        prev = matches.get(i - 1)
        j = prev + 1 if prev is not None and prev + 1 in options else options[0]
        matches[i] = j
        used.add(j)


def align(candidate: list[str], reference: list[str]) -> dict[int, int]:
    """Greedy unigram alignment: exact forms first, then stems.

    Within a stage, a candidate token prefers the reference position that
    extends the previous chunk, otherwise the earliest free one.
    """
    matches: dict[int, int] = {}
    _match_stage(candidate, reference, matches)
    _match_stage([stem(t) for t in candidate], [stem(t) for t in reference], matches)
    return matches


def count_chunks(matches: dict[int, int]) -> int:
    chunks = 0
    prev = None
    for i in sorted(matches):
        j = matches[i]
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_score(candidate: str, reference: str) -> float:
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        raise EmptyInput("meteor_score needs non-empty candidate and reference")
    matches = align(cand, ref)
    m = len(matches)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (count_chunks(matches) / m) ** 3
    return f_mean * (1 - penalty)


# -- pass@1 ---------------------------------------------------------------

def _success(outcome) -> bool:
    if isinstance(outcome, bool):
        return outcome
    if isinstance(outcome, dict):
        return bool(outcome["success"])
    return bool(outcome.success)


def pass_at_1(outcomes: Iterable) -> float:
    """Fraction of chart generations that rendered without error."""
    flags = [_success(o) for o in outcomes]
    if not flags:
        raise NoSamples("pass_at_1 needs at least one outcome")
    return sum(flags) / len(flags)


# -- images ---------------------------------------------------------------

@dataclass
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray  # shape (height, width), values in [0, 1]

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64).reshape(self.height, self.width)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not np.all((self.pixels >= 0) & (self.pixels <= 1)):
            raise ValueError("pixel intensities must lie in [0, 1]")

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape[1], arr.shape[0], arr)

    @classmethod
    def from_pgm(cls, data: bytes | str | Path) -> "GrayImage":
        if not isinstance(data, bytes):
            data = Path(data).read_bytes()
        header = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
        if not header:
            raise ValueError("not a binary P5 PGM")
        w, h, maxval = (int(g) for g in header.groups())
        if maxval > 255:
            raise ValueError("16-bit PGM not supported")
        raw = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=header.end())
        return cls(w, h, raw.reshape(h, w) / maxval)


def _check_pair(a: GrayImage, b: GrayImage) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise SizeMismatch(f"{a.width}x{a.height} vs {b.width}x{b.height}")


def psnr(a: GrayImage, b: GrayImage) -> float:
    _check_pair(a, b)
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10 * math.log10(1.0 / mse))


def _ssim_single(x: np.ndarray, y: np.ndarray) -> float:
    h, w = x.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")
    hh, ww = h - h % SSIM_WINDOW, w - w % SSIM_WINDOW
    # (rows, cols, 8, 8) blocks of non-overlapping windows
    xb = x[:hh, :ww].reshape(hh // SSIM_WINDOW, SSIM_WINDOW, ww // SSIM_WINDOW, SSIM_WINDOW).swapaxes(1, 2)
    yb = y[:hh, :ww].reshape(hh // SSIM_WINDOW, SSIM_WINDOW, ww // SSIM_WINDOW, SSIM_WINDOW).swapaxes(1, 2)
    mx, my = xb.mean(axis=(2, 3)), yb.mean(axis=(2, 3))
    vx = ((xb - mx[..., None, None]) ** 2).mean(axis=(2, 3))
    vy = ((yb - my[..., None, None]) ** 2).mean(axis=(2, 3))
    cov = ((xb - mx[..., None, None]) * (yb - my[..., None, None])).mean(axis=(2, 3))
    num = (2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mx**2 + my**2 + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(np.mean(num / den))


def _pool2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    x = x[: h - h % 2, : w - w % 2]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ssim(a: GrayImage, b: GrayImage, mode: str = "single") -> float:
    """Mean SSIM over non-overlapping 8x8 windows.

    ``mode="multiscale"`` averages three dyadic levels (2x2 mean pooling)
    geometrically; negative level scores are clamped to 0 first so the
    geometric mean is defined.
    """
    _check_pair(a, b)
    if mode == "single":
        return _ssim_single(a.pixels, b.pixels)
    if mode != "multiscale":
        raise ValueError(f"unknown SSIM mode {mode!r}")
    if min(a.width, a.height) < MS_MIN_SIDE:
        raise TooSmall(f"multiscale SSIM needs sides >= {MS_MIN_SIDE}")
    x, y = a.pixels, b.pixels
    scores = []
    for level in range(MS_LEVELS):
        if level:
            x, y = _pool2(x), _pool2(y)
        scores.append(max(0.0, _ssim_single(x, y)))
    return float(np.prod(scores) ** (1.0 / MS_LEVELS))


# -- directory comparison -------------------------------------------------

def evaluate_dirs(golden: str | Path, actual: str | Path) -> dict:
    """Score every ``.pgm`` and ``.md`` in ``golden`` against its twin in ``actual``.

    Charts' ``report.json`` files under ``actual`` feed pass@1 (a run
    counts as a success when its figure rendered).
    """
    golden, actual = Path(golden), Path(actual)
    pairs = []
    for g in sorted(golden.rglob("*")):
        if g.suffix not in (".pgm", ".md") or not g.is_file():
            continue
        rel = g.relative_to(golden).as_posix()
        a = actual / rel
        entry: dict = {"path": rel}
        if not a.is_file():
            entry["missing"] = True
        elif g.suffix == ".md":
            try:
                entry["meteor"] = meteor_score(a.read_text(encoding="utf-8"), g.read_text(encoding="utf-8"))
            except EmptyInput as exc:
                entry["error"] = str(exc)
        else:
            gi, ai = GrayImage.from_pgm(g), GrayImage.from_pgm(a)
            try:
                entry["psnr"] = psnr(ai, gi)
                entry["ssim"] = ssim(ai, gi)
                entry["ms_ssim"] = ssim(ai, gi, mode="multiscale")
            except (SizeMismatch, TooSmall) as exc:
                entry["error"] = f"{type(exc).__name__}: {exc}"
        entry.update({name: "unavailable" for name in UNAVAILABLE_METRICS})
        pairs.append(entry)

    outcomes = []
    for rep in sorted(actual.rglob("report.json")):
        data = json.loads(rep.read_text(encoding="utf-8"))
        if data.get("intent") == "experimental_analysis":
            outcomes.append(bool(data.get("render_ok")))
    return {
        "pairs": pairs,
        "pass_at_1": pass_at_1(outcomes) if outcomes else None,
        "chart_runs": len(outcomes),
    }
