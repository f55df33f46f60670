"""Drawing primitives shared by the mind-map and line-chart renderers.

A :class:`Scene` is a flat list of shapes in user units. It serializes to
SVG with fixed number formatting (identical scenes give identical bytes)
and rasterizes to an 8-bit grayscale image via Pillow for image metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from xml.sax.saxutils import escape, quoteattr

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import InvalidValue

FONT_FAMILY = "DejaVu Sans Mono, monospace"
# advance width of the monospace face as a fraction of font size
CHAR_WIDTH = 0.6

DEFAULT_RASTER = (1024, 768)


def fmt(x: float) -> str:
    if not math.isfinite(x):
        raise InvalidValue(f"non-finite coordinate {x!r}")
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def text_width(text: str, size: float) -> float:
    return len(text) * size * CHAR_WIDTH


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float
    fill: str = "#ffffff"
    stroke: str = "#000000"
    stroke_width: float = 1.0
    rx: float = 0.0


@dataclass(frozen=True)
class Line:
    x1: float
    y1: float
    x2: float
    y2: float
    stroke: str = "#000000"
    stroke_width: float = 1.0
    dash: str | None = None


@dataclass(frozen=True)
class Polyline:
    points: tuple[tuple[float, float], ...]
    stroke: str = "#000000"
    stroke_width: float = 1.5
    dash: str | None = None


@dataclass(frozen=True)
class Marker:
    x: float
    y: float
    shape: str = "circle"  # circle | square | triangle | diamond
    size: float = 4.0
    fill: str = "#000000"


@dataclass(frozen=True)
class Text:
    x: float
    y: float
    text: str
    size: float = 12.0
    anchor: str = "start"  # start | middle | end
    fill: str = "#000000"
    weight: str = "normal"


@dataclass
class Scene:
    width: float
    height: float
    title: str = ""
    shapes: list = field(default_factory=list)
    background: str = "#ffffff"

    def add(self, *shapes) -> None:
        self.shapes.extend(shapes)

    # -- SVG -------------------------------------------------------------

    def to_svg(self) -> str:
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{fmt(self.width)}" '
            f'height="{fmt(self.height)}" viewBox="0 0 {fmt(self.width)} {fmt(self.height)}">',
        ]
        if self.title:
            out.append(f"<title>{escape(self.title)}</title>")
        out.append(
            f'<rect x="0" y="0" width="{fmt(self.width)}" height="{fmt(self.height)}" '
            f'fill="{self.background}"/>'
        )
        for s in self.shapes:
            out.append(_svg_shape(s))
        out.append("</svg>")
        return "\n".join(out) + "\n"

    # -- raster ----------------------------------------------------------

    def to_raster(self, size: tuple[int, int] = DEFAULT_RASTER) -> Image.Image:
        """Grayscale image of ``size`` with the scene scaled to fit, centred."""
        width, height = size
        scale = min(width / self.width, height / self.height)
        ox = (width - self.width * scale) / 2
        oy = (height - self.height * scale) / 2

        def p(x: float, y: float) -> tuple[float, float]:
            return (ox + x * scale, oy + y * scale)

        img = Image.new("L", (width, height), color=_gray(self.background))
        draw = ImageDraw.Draw(img)
        for s in self.shapes:
            if isinstance(s, Rect):
                draw.rectangle(
                    [p(s.x, s.y), p(s.x + s.w, s.y + s.h)],
                    fill=_gray(s.fill),
                    outline=_gray(s.stroke),
                    width=max(1, round(s.stroke_width * scale)),
                )
            elif isinstance(s, Line):
                draw.line([p(s.x1, s.y1), p(s.x2, s.y2)], fill=_gray(s.stroke),
                          width=max(1, round(s.stroke_width * scale)))
            elif isinstance(s, Polyline):
                draw.line([p(*pt) for pt in s.points], fill=_gray(s.stroke),
                          width=max(1, round(s.stroke_width * scale)))
            elif isinstance(s, Marker):
                cx, cy = p(s.x, s.y)
                r = max(1.0, s.size * scale)
                draw.polygon(_marker_points(s.shape, cx, cy, r), fill=_gray(s.fill))
            elif isinstance(s, Text):
                font = _font(max(6, round(s.size * scale)))
                anchor = {"start": "ls", "middle": "ms", "end": "rs"}[s.anchor]
                _draw_text(draw, p(s.x, s.y), s.text, font, _gray(s.fill), anchor)
        return img


ARROWS = {"↑": 1, "↓": -1}


def _draw_text(draw: ImageDraw.ImageDraw, xy, text: str, font, fill: int, anchor: str) -> None:
    """Draw text; direction arrows become small triangles since the bundled face lacks them."""
    if not any(a in text for a in ARROWS):
        draw.text(xy, text, fill=fill, font=font, anchor=anchor)
        return
    gap = "   "
    plain = "".join(gap if ch in ARROWS else ch for ch in text)
    draw.text(xy, plain, fill=fill, font=font, anchor=anchor)
    left = draw.textbbox(xy, plain, font=font, anchor=anchor)[0]
    baseline = xy[1]
    cap = -draw.textbbox((0, 0), "H", font=font, anchor="ls")[1]
    slot = draw.textlength(gap, font=font)
    offset = 0
    for ch in text:
        if ch in ARROWS:
            x0 = left + draw.textlength(plain[:offset], font=font)
            cx, half = x0 + slot / 2, min(slot * 0.4, cap * 0.4)
            tip, base = (baseline - cap, baseline) if ARROWS[ch] > 0 else (baseline, baseline - cap)
            draw.polygon([(cx, tip), (cx - half, base), (cx + half, base)], fill=fill)
            offset += len(gap)
        else:
            offset += 1


def _dash(d: str | None) -> str:
    return f' stroke-dasharray="{d}"' if d else ""


def _svg_shape(s) -> str:
    if isinstance(s, Rect):
        rx = f' rx="{fmt(s.rx)}"' if s.rx else ""
        return (
            f'<rect x="{fmt(s.x)}" y="{fmt(s.y)}" width="{fmt(s.w)}" height="{fmt(s.h)}"{rx} '
            f'fill="{s.fill}" stroke="{s.stroke}" stroke-width="{fmt(s.stroke_width)}"/>'
        )
    if isinstance(s, Line):
        return (
            f'<line x1="{fmt(s.x1)}" y1="{fmt(s.y1)}" x2="{fmt(s.x2)}" y2="{fmt(s.y2)}" '
            f'stroke="{s.stroke}" stroke-width="{fmt(s.stroke_width)}"{_dash(s.dash)}/>'
        )
    if isinstance(s, Polyline):
        pts = " ".join(f"{fmt(x)},{fmt(y)}" for x, y in s.points)
        return (
            f'<polyline points="{pts}" fill="none" stroke="{s.stroke}" '
            f'stroke-width="{fmt(s.stroke_width)}"{_dash(s.dash)}/>'
        )
    if isinstance(s, Marker):
        if s.shape == "circle":
            return f'<circle cx="{fmt(s.x)}" cy="{fmt(s.y)}" r="{fmt(s.size)}" fill="{s.fill}"/>'
        pts = " ".join(f"{fmt(x)},{fmt(y)}" for x, y in _marker_points(s.shape, s.x, s.y, s.size))
        return f'<polygon points="{pts}" fill="{s.fill}"/>'
    if isinstance(s, Text):
        weight = f' font-weight="{s.weight}"' if s.weight != "normal" else ""
        return (
            f'<text x="{fmt(s.x)}" y="{fmt(s.y)}" font-family={quoteattr(FONT_FAMILY)} '
            f'font-size="{fmt(s.size)}" text-anchor="{s.anchor}" fill="{s.fill}"{weight}>'
            f"{escape(s.text)}</text>"
        )
    raise TypeError(f"unknown shape {type(s).__name__}")


def _marker_points(shape: str, cx: float, cy: float, r: float) -> list[tuple[float, float]]:
    if shape == "square":
        return [(cx - r, cy - r), (cx + r, cy - r), (cx + r, cy + r), (cx - r, cy + r)]
    if shape == "triangle":
        return [(cx, cy - r), (cx + r, cy + r), (cx - r, cy + r)]
    if shape == "diamond":
        return [(cx, cy - r), (cx + r, cy), (cx, cy + r), (cx - r, cy)]
    # circle approximated by a 16-gon for rasterization
    return [(cx + r * math.cos(2 * math.pi * i / 16), cy + r * math.sin(2 * math.pi * i / 16)) for i in range(16)]


def _gray(color: str) -> int:
    c = color.lstrip("#")
    if len(c) == 3:
        c = "".join(ch * 2 for ch in c)
    r, g, b = int(c[0:2], 16), int(c[2:4], 16), int(c[4:6], 16)
    return round(0.299 * r + 0.587 * g + 0.114 * b)


@lru_cache(maxsize=32)
def _font(size: int):
    return ImageFont.load_default(size=size)


def to_pgm(img: Image.Image) -> bytes:
    """Binary P5 encoding of a grayscale image."""
    arr = np.asarray(img.convert("L"), dtype=np.uint8)
    h, w = arr.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes()


@dataclass
class Figure:
    svg: str
    raster: Image.Image

    def pgm(self) -> bytes:
        return to_pgm(self.raster)


def render_scene(scene: Scene, raster_size: tuple[int, int] = DEFAULT_RASTER) -> Figure:
    return Figure(svg=scene.to_svg(), raster=scene.to_raster(raster_size))

