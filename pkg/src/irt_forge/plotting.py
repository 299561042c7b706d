"""Item characteristic curves as CSV tables or standalone SVG."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from . import registry
from .errors import ContractError, RegistryError
from .models import ModelKind

THETA_RANGE = (-4.0, 4.0)
_DASHES = ("", "6,4", "2,3", "8,3,2,3")


def _registration_for(doc):
    try:
        return registry.lookup(doc.model)
    except RegistryError:
        # fall back to the schema implied by which arrays are present
        if doc.guess is not None:
            kind = ModelKind.THREE_PARAM
        elif doc.lam is not None:
            kind = ModelKind.FOUR_PARAM
        elif doc.disc is not None:
            kind = ModelKind.TWO_PARAM
        else:
            kind = ModelKind.ONE_PARAM
        return registry.ModelRegistration(doc.model, kind)


def icc_table(doc, item_ids, n_points=81):
    """``{item_id: (theta_grid, probabilities)}`` for the requested items."""
    if n_points < 2:
        raise ContractError("need at least 2 grid points")
    reg = _registration_for(doc)
    position = {item: k for k, item in enumerate(doc.item_ids)}
    theta = np.linspace(*THETA_RANGE, n_points)
    out = {}
    for item in item_ids:
        if item not in position:
            raise RegistryError(f"unknown item id {item!r}")
        k = position[item]
        p = reg.evaluate(
            theta,
            doc.diff[k],
            a=doc.disc[k] if doc.disc is not None else 1.0,
            c=doc.guess[k] if doc.guess is not None else 0.0,
            lam=doc.lam[k] if doc.lam is not None else 1.0,
        )
        out[item] = (theta, np.asarray(p, float))
    return out


def table_csv(table) -> str:
    lines = ["item_id,theta,probability"]
    for item, (theta, p) in table.items():
        lines.extend(f"{item},{t!r},{q!r}" for t, q in zip(theta.tolist(), p.tolist()))
    return "\n".join(lines) + "\n"


def render_svg(table, difficulties=None, width=480, height=320) -> str:
    """Draw each curve with a distinct dash pattern and a marker line at its difficulty."""
    left, right, top, bottom = 50, 20, 20, 45
    pw, ph = width - left - right, height - top - bottom
    lo, hi = THETA_RANGE

    def sx(t):
        return left + (t - lo) / (hi - lo) * pw

    def sy(p):
        return top + (1.0 - p) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in range(int(lo), int(hi) + 1):
        x = sx(t)
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{t}</text>')
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(p)
        parts.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 7}" y="{y + 4:.2f}" text-anchor="end">{p:g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">ability</text>')
    parts.append(
        f'<text x="14" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {top + ph / 2})">'
        "p(correct)</text>"
    )
    for k, (item, (theta, prob)) in enumerate(table.items()):
        dash = _DASHES[k % len(_DASHES)]
        style = f' stroke-dasharray="{dash}"' if dash else ""
        pts = " ".join(f"{sx(t):.2f},{sy(q):.2f}" for t, q in zip(theta, prob))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"{style}/>')
        if difficulties is not None and lo <= difficulties[item] <= hi:
            x = sx(difficulties[item])
            parts.append(
                f'<line x1="{x:.2f}" y1="{sy(0.3):.2f}" x2="{x:.2f}" y2="{sy(0.7):.2f}" stroke="black"{style}/>'
            )
        ly = top + 14 + 14 * k
        parts.append(f'<line x1="{left + 8}" y1="{ly - 4}" x2="{left + 30}" y2="{ly - 4}" stroke="black"{style}/>')
        parts.append(f'<text x="{left + 34}" y="{ly}">{escape(str(item))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
