"""Label-conditioned drawing synthesis: which body locations typify a
diagnosis.

Feeding a single diagnostic label through local inference (word view
absent) yields a shared topic mixture; mixing the expected location topics
under it gives a distribution over location words.  The top words, weighted
by relative probability, form the synthetic drawing, rendered as circles of
decreasing opacity on the body contour.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import DEFAULT_LABEL_SCALE
from .model import DocPosterior, DocTokens, TrainedModel, e_step_document


class UnknownLabelError(KeyError):
    def __init__(self, label: str):
        super().__init__(label)
        self.label = label

    def __str__(self):
        return f"label not in vocabulary: {self.label!r}"


@dataclass(frozen=True)
class SyntheticDrawing:
    """Most probable body locations for a label, weights descending."""

    locations: tuple[tuple[str, float, float, float], ...]
    source_label: str


def infer_from_label(label: str, model: TrainedModel,
                     scale: int = DEFAULT_LABEL_SCALE) -> DocPosterior:
    """Local inference given only a diagnostic label (word view absent).

    The label token is repeated ``scale`` times, matching the modality
    balancing applied at training time.
    """
    if model.label_vocab is None or label not in model.label_vocab:
        raise UnknownLabelError(label)
    doc = DocTokens(
        word_ids=np.zeros(0, dtype=np.int64),
        word_counts=np.zeros(0),
        label_ids=np.array([model.label_vocab[label]], dtype=np.int64),
        label_counts=np.array([float(scale)]),
    )
    return e_step_document(doc, model.topics, model.config.hyper)


def location_distribution(posterior: DocPosterior, model: TrainedModel,
                          ) -> np.ndarray:
    """Distribution over location words under the shared topic mixture.

    Only the shared path contributes: private topics hold modality noise
    and are excluded from synthesis.
    """
    return posterior.theta_mean() @ model.topics.beta_mean()


def top_locations(posterior: DocPosterior, model: TrainedModel,
                  n_top: int = 10, source_label: str = "") -> SyntheticDrawing:
    """Pick the n_top most probable locations, weighted relative to the
    mode, and map them back to (view, x, y) body coordinates."""
    if model.location_vocab is None:
        raise ValueError("model has no location vocabulary attached")
    p = location_distribution(posterior, model)
    order = np.argsort(-p, kind="stable")[:n_top]
    peak = p[order[0]] if order.size else 1.0
    locations = []
    for w in order:
        view, x, y = model.location_vocab.unembed(int(w))
        locations.append((view, x, y, float(p[w] / peak)))
    return SyntheticDrawing(locations=tuple(locations), source_label=source_label)


def generate_drawing(label: str, model: TrainedModel, n_top: int = 10,
                     scale: int = DEFAULT_LABEL_SCALE) -> SyntheticDrawing:
    posterior = infer_from_label(label, model, scale)
    return top_locations(posterior, model, n_top, source_label=label)


# ---------------------------------------------------------------------------
# SVG rendering over the two-panel body contour asset.
# ---------------------------------------------------------------------------

PANEL_W = 200.0
PANEL_H = 400.0
PANEL_GAP = 20.0
CIRCLE_RADIUS = 10.0


def load_contour(path: str | Path | None = None) -> dict:
    """Contour polygons in normalized coordinates, one per view."""
    if path is None:
        text = (resources.files("ibtm.data") / "body_contour.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    contour = json.loads(text)
    for view in ("front", "back"):
        if view not in contour:
            raise ValueError(f"contour asset is missing the {view!r} outline")
    return contour


def _polygon_points(outline, x_off: float) -> str:
    return " ".join(f"{x_off + x * PANEL_W:.2f},{y * PANEL_H:.2f}"
                    for x, y in outline)


def render_heatmap(drawing: SyntheticDrawing,
                   contour: dict | None = None) -> bytes:
    """Render a synthetic drawing as a deterministic SVG document.

    One filled circle per location, fixed radius, opacity equal to the
    location weight so less probable areas fade out.
    """
    if contour is None:
        contour = load_contour()
    width = 2 * PANEL_W + PANEL_GAP
    offsets = {"front": 0.0, "back": PANEL_W + PANEL_GAP}
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{PANEL_H:.0f}" viewBox="0 0 {width:.0f} {PANEL_H:.0f}">',
        f'<title>{_escape(drawing.source_label)}</title>',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for view in ("front", "back"):
        parts.append(
            f'<polygon points="{_polygon_points(contour[view], offsets[view])}" '
            'fill="none" stroke="#444444" stroke-width="1.5"/>')
        label_y = PANEL_H - 6.0
        parts.append(
            f'<text x="{offsets[view] + PANEL_W / 2:.2f}" y="{label_y:.2f}" '
            'font-family="sans-serif" font-size="12" text-anchor="middle" '
            f'fill="#444444">{view}</text>')
    for view, x, y, weight in drawing.locations:
        cx = offsets[view] + x * PANEL_W
        cy = y * PANEL_H
        parts.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{CIRCLE_RADIUS:.1f}" '
            f'fill="#cc2222" fill-opacity="{weight:.6f}"/>')
    parts.append("</svg>")
    return "\n".join(parts).encode("utf-8")


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))
