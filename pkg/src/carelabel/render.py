"""Care-label renderers: canonical JSON, aligned plain text, and SVG.

JSON output is canonical (sorted keys, two-space indent, trailing newline)
so that identical labels always serialize to identical bytes and round-trip
losslessly.  The SVG approximates the two-segment card layout: hexagonal
rating chips on the theory segment, checkmarks and measurement chips on the
implementation segment.
"""
from __future__ import annotations

import json
import math

from .knowledge import CATEGORIES
from .label import CareLabel

RATING_COLORS = {
    "A": "#2e9e44",
    "B": "#97c11f",
    "C": "#f39200",
    "D": "#e53212",
    "neutral": "#9e9e9e",
}
CHECK_GLYPHS = {"pass": ("✓", "#2e9e44"), "fail": ("✗", "#e53212")}
MEASUREMENT_UNITS = {"runtime_s": "s", "memory_mb": "MB", "energy_ws": "Ws"}


def render_json(label: CareLabel) -> str:
    """Canonical JSON: sorted keys, fixed layout, one trailing newline."""
    return json.dumps(label.to_dict(), sort_keys=True, indent=2,
                      ensure_ascii=True, allow_nan=False) + "\n"


def parse_json(text: str) -> CareLabel:
    return CareLabel.from_dict(json.loads(text))


def _fmt_value(value: float) -> str:
    if value < 0:
        return "n/a"
    return f"{value:.6g}"


def render_text(label: CareLabel) -> str:
    doc = label.to_dict()
    theory = doc["theory_segment"]
    impl = doc["implementation_segment"]
    width = 62
    bar = "=" * width
    thin = "-" * width
    lines = [bar, f"CARE LABEL  {theory['method_name']}", bar]
    if theory.get("description"):
        lines.append(theory["description"])
    lines.append(thin)
    lines.append("THEORY")
    for cat in CATEGORIES:
        rating = theory["ratings"][cat]
        shown = rating if rating != "neutral" else "-"
        lines.append(f"  {cat:<14} {shown}")
    badge_text = ", ".join(theory["badges"]) if theory["badges"] else "(none)"
    lines.append(f"  {'badges':<14} {badge_text}")
    lines.append(thin)
    env = impl["environment"]
    lines.append(f"IMPLEMENTATION  {impl['implementation']} {impl['version']}")
    lines.append(f"  cpu: {env['cpu']}")
    lines.append(f"  os: {env['os']}")
    lines.append(f"  meter: {env['meter']}")
    lines.append(f"  reference dataset: {impl['reference_dataset']}")
    lines.append("  verified bounds:")
    for mark in ("reliability", "runtime", "memory"):
        glyph = CHECK_GLYPHS[impl["checkmarks"][mark]][0]
        lines.append(f"    {mark:<12} {glyph} {impl['checkmarks'][mark]}")
    lines.append("  measurements:")
    for key in ("runtime_s", "memory_mb", "energy_ws"):
        m = impl["measurements"][key]
        unit = MEASUREMENT_UNITS[key]
        lines.append(f"    {key:<12} {_fmt_value(m['value']):>12} {unit:<3} "
                     f"[{m['badge']}]")
    lines.append(bar)
    return "\n".join(lines) + "\n"


def _hexagon(cx: float, cy: float, r: float) -> str:
    pts = []
    for i in range(6):
        ang = math.pi / 180.0 * (60 * i - 30)
        pts.append(f"{cx + r * math.cos(ang):.2f},{cy + r * math.sin(ang):.2f}")
    return " ".join(pts)


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def render_svg(label: CareLabel) -> str:
    """Two-segment card: rating hexagons, badge slots, checkmarks, and
    measurement chips.  Deterministic for identical labels."""
    doc = label.to_dict()
    theory = doc["theory_segment"]
    impl = doc["implementation_segment"]
    w, h = 680, 500
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}" font-family="Helvetica, Arial, sans-serif">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
        # theory segment
        '<rect x="12" y="12" width="656" height="260" rx="10" fill="#f7f7f2" '
        'stroke="#333333" stroke-width="2"/>',
        f'<text x="28" y="44" font-size="20" font-weight="bold">'
        f'{_esc(theory["method_name"])}</text>',
        f'<text x="28" y="66" font-size="11" fill="#444444">'
        f'{_esc(theory["description"][:96])}</text>',
        '<text x="28" y="92" font-size="12" font-weight="bold" '
        'fill="#666666">BADGES</text>',
    ]
    # badge slots on the left of the theory segment
    bx, by = 52, 126
    for i, badge in enumerate(theory["badges"]):
        cy = by + i * 58
        parts.append(f'<polygon points="{_hexagon(bx, cy, 24)}" fill="#ffffff" '
                     'stroke="#888888" stroke-width="1.5"/>')
        parts.append(f'<text x="{bx + 36}" y="{cy + 4}" font-size="11">'
                     f'{_esc(badge)}</text>')
    if not theory["badges"]:
        parts.append(f'<text x="{bx - 16}" y="{by}" font-size="11" '
                     'fill="#888888">(none)</text>')
    # rating hexagons on the right
    rx = 470
    parts.append('<text x="380" y="92" font-size="12" font-weight="bold" '
                 'fill="#666666">RATINGS</text>')
    for i, cat in enumerate(CATEGORIES):
        cy = 118 + i * 30
        rating = theory["ratings"][cat]
        color = RATING_COLORS[rating]
        shown = rating if rating != "neutral" else "–"
        parts.append(f'<text x="{rx - 90}" y="{cy + 4}" font-size="12" '
                     f'text-anchor="end">{_esc(cat)}</text>')
        parts.append(f'<polygon points="{_hexagon(rx, cy, 13)}" fill="{color}" '
                     f'data-rating="{rating}"/>')
        parts.append(f'<text x="{rx}" y="{cy + 4}" font-size="11" '
                     f'text-anchor="middle" fill="#ffffff" font-weight="bold">'
                     f'{shown}</text>')
    # implementation segment
    parts.extend([
        '<rect x="12" y="284" width="656" height="204" rx="10" fill="#eef3f7" '
        'stroke="#333333" stroke-width="2"/>',
        f'<text x="28" y="314" font-size="16" font-weight="bold">'
        f'{_esc(impl["implementation"])} {_esc(impl["version"])}</text>',
        f'<text x="28" y="332" font-size="10" fill="#444444">'
        f'cpu: {_esc(impl["environment"]["cpu"][:60])}</text>',
        f'<text x="28" y="346" font-size="10" fill="#444444">'
        f'os: {_esc(impl["environment"]["os"][:60])}</text>',
        f'<text x="28" y="360" font-size="10" fill="#444444">'
        f'meter: {_esc(impl["environment"]["meter"])} | reference: '
        f'{_esc(impl["reference_dataset"])}</text>',
    ])
    # checkmarks on the right: verified theoretical bounds
    parts.append('<text x="470" y="314" font-size="12" font-weight="bold" '
                 'fill="#666666">VERIFIED BOUNDS</text>')
    for i, mark in enumerate(("reliability", "runtime", "memory")):
        cy = 336 + i * 26
        glyph, color = CHECK_GLYPHS[impl["checkmarks"][mark]]
        parts.append(f'<rect x="462" y="{cy - 13}" width="18" height="18" rx="3" '
                     'fill="#ffffff" stroke="#888888"/>')
        parts.append(f'<text x="471" y="{cy + 1}" font-size="14" '
                     f'text-anchor="middle" fill="{color}" font-weight="bold">'
                     f'{glyph}</text>')
        parts.append(f'<text x="490" y="{cy}" font-size="12">{mark}</text>')
    # measurement chips along the bottom
    for i, key in enumerate(("runtime_s", "memory_mb", "energy_ws")):
        m = impl["measurements"][key]
        cx = 110 + i * 150
        cy = 430
        color = RATING_COLORS[m["badge"]]
        parts.append(f'<polygon points="{_hexagon(cx, cy, 30)}" fill="#ffffff" '
                     f'stroke="{color}" stroke-width="3.5"/>')
        parts.append(f'<text x="{cx}" y="{cy - 2}" font-size="11" '
                     f'text-anchor="middle" fill="{color}" font-weight="bold">'
                     f'{m["badge"]}</text>')
        parts.append(f'<text x="{cx}" y="{cy + 12}" font-size="9" '
                     f'text-anchor="middle">{_fmt_value(m["value"])}'
                     f' {MEASUREMENT_UNITS[key]}</text>')
        parts.append(f'<text x="{cx}" y="{cy + 48}" font-size="10" '
                     f'text-anchor="middle" fill="#555555">{key}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
