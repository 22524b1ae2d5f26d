"""Hand-rolled SVG 1.1 output; no plotting dependency.

Emits grouped bar charts of accuracy versus training size with two
horizontal reference lines (solid and dashed), matching the layout used
in the result figures.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

SVG_PREAMBLE = (
    '<?xml version="1.0" encoding="UTF-8"?>\n'
    '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN"'
    ' "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
)

PALETTE = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"]


def grouped_bar_chart(title: str,
                      group_labels: list[str],
                      series: list[tuple[str, list[float]]],
                      reference_lines: list[tuple[str, float, bool]],
                      y_label: str = "accuracy (%)",
                      y_max: float = 100.0,
                      width: int = 720,
                      height: int = 440) -> str:
    """Grouped bars per (series, group) plus horizontal reference lines.

    reference_lines: (label, value, dashed) triples; each is emitted with
    class="refline" so consumers can count them.
    """
    ml, mr, mt, mb = 64, 160, 48, 56
    pw, ph = width - ml - mr, height - mt - mb

    def sx(group: int, slot: float) -> float:
        gw = pw / max(len(group_labels), 1)
        return ml + group * gw + slot * gw

    def sy(v: float) -> float:
        return mt + ph * (1.0 - v / y_max)

    out = [SVG_PREAMBLE,
           f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" '
           f'width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml}" y="{mt - 20}" font-size="15" font-family="sans-serif" '
           f'font-weight="bold">{escape(title)}</text>']

    for tick in range(0, int(y_max) + 1, 20):
        y = sy(tick)
        out.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{ml + pw}" y2="{y:.1f}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" font-size="11" '
                   f'font-family="sans-serif" text-anchor="end">{tick}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" font-size="12" '
               f'font-family="sans-serif" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})" '
               f'text-anchor="middle">{escape(y_label)}</text>')

    n_series = max(len(series), 1)
    bar_frac = 0.8 / n_series
    for si, (name, values) in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        for gi, v in enumerate(values):
            x = sx(gi, 0.1 + si * bar_frac)
            w = bar_frac * pw / len(group_labels) * 0.92
            y = sy(v)
            out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{w:.1f}" '
                       f'height="{mt + ph - y:.1f}" fill="{color}">'
                       f'<title>{escape(name)} @ {escape(group_labels[gi])}: '
                       f'{v:.2f}</title></rect>')

    for gi, label in enumerate(group_labels):
        out.append(f'<text x="{sx(gi, 0.5):.1f}" y="{mt + ph + 18}" '
                   f'font-size="12" font-family="sans-serif" '
                   f'text-anchor="middle">{escape(label)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 14}" font-size="12" '
               f'font-family="sans-serif" text-anchor="middle">training size</text>')

    for label, value, dashed in reference_lines:
        y = sy(value)
        dash = ' stroke-dasharray="7,5"' if dashed else ""
        out.append(f'<line class="refline" x1="{ml}" y1="{y:.1f}" '
                   f'x2="{ml + pw}" y2="{y:.1f}" stroke="#333333" '
                   f'stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{ml + pw + 6}" y="{y + 4:.1f}" font-size="11" '
                   f'font-family="sans-serif">{escape(label)} ({value:.1f})</text>')

    ly = mt + 8
    for si, (name, _) in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        out.append(f'<rect x="{ml + pw + 6}" y="{ly - 9}" width="12" height="12" '
                   f'fill="{color}"/>')
        out.append(f'<text x="{ml + pw + 22}" y="{ly + 1}" font-size="11" '
                   f'font-family="sans-serif">{escape(name)}</text>')
        ly += 18

    out.append("</svg>")
    return "\n".join(out) + "\n"
