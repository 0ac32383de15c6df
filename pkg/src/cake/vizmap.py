"""Dense emotion-boundary maps and the arousal-valence scatter.

A grid over the embedding space (a planar mesh for 2-d representations, a
(theta, phi) mesh over the unit sphere for the 3-d normalized variant) is
classified cell by cell with one domain head; the result renders as a binary
P6 pixmap (one pixel per cell) or as a flat-rectangle vector image with the
per-class F1 printed at each class region's centroid.

Palette (class -> RGB), chosen distinct so rasters invert exactly:
    0 neutral   (31, 119, 180)    4 fear      (148, 103, 189)
    1 happiness (255, 127, 14)    5 disgust   (140, 86, 75)
    2 sad       (44, 160, 44)     6 anger     (227, 119, 194)
    3 surprise  (214, 39, 40)

Vector output uses a minimal scalable-vector-graphics subset: rect, circle,
text. Spherical convention: theta polar from +z in [0, pi], phi azimuth in
(-pi, pi]; at the poles phi is defined as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .data import CLASS_NAMES, DatasetBundle, bundle_arrays
from .metrics import confusion, per_class_f1
from .model import ModelConfig, ModelParams, predict_batch, predict_from_embedding

PALETTE = (
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
)

PLANE_MARGIN = 0.05  # per-side widening: 10% of the observed span in total


@dataclass
class GridSpec:
    mode: str  # "plane" or "sphere"
    # plane: x spans [x_min, x_max] with res_x cells, y likewise
    x_min: float = -1.0
    x_max: float = 1.0
    y_min: float = -1.0
    y_max: float = 1.0
    res_x: int = 2
    res_y: int = 2
    # sphere: res_theta samples over [0, pi], res_phi over (-pi, pi]
    res_theta: int = 2
    res_phi: int = 2
    # which embedding coordinate the x and y axes show (plane only)
    axis_order: tuple = (0, 1)

    def __post_init__(self) -> None:
        if self.mode not in ("plane", "sphere"):
            raise ValueError(f"grid: unknown mode {self.mode!r}")
        if self.mode == "plane":
            if self.res_x < 2 or self.res_y < 2:
                raise ValueError("grid: plane resolutions must be >= 2")
            if not (self.x_min < self.x_max and self.y_min < self.y_max):
                raise ValueError("grid: need min < max on both plane axes")
            if sorted(self.axis_order) != [0, 1]:
                raise ValueError(f"grid: axis_order must permute (0, 1), got {self.axis_order}")
        else:
            if self.res_theta < 2 or self.res_phi < 2:
                raise ValueError("grid: sphere resolutions must be >= 2")

    @property
    def shape(self) -> tuple:
        """(rows, cols) of the cell grid."""
        if self.mode == "plane":
            return (self.res_y, self.res_x)
        return (self.res_theta, self.res_phi)


def plan_grid(
    cfg: ModelConfig,
    embeddings: Optional[np.ndarray] = None,
    resolution: int = 200,
    phi_resolution: Optional[int] = None,
) -> GridSpec:
    """Choose the grid for a model: plane for 2-d embeddings, sphere for the
    3-d normalized variant.

    Plane ranges cover the observed embeddings widened by a 10% margin (5% of
    the span on each side; [-2, 2] becomes [-2.2, 2.2]), or default to [-1, 1]
    per axis when none are supplied. For arousal-valence models the x axis
    shows valence and the y axis arousal.
    """
    if cfg.variant == "cake_norm" and cfg.k == 3:
        return GridSpec(
            mode="sphere",
            res_theta=resolution,
            res_phi=2 * resolution if phi_resolution is None else phi_resolution,
        )
    if cfg.embed_dim != 2:
        raise ValueError(
            f"vizmap: no visualization for variant {cfg.variant!r} with "
            f"embedding dim {cfg.embed_dim}; supported are 2-d embeddings "
            "(plane) and the 3-d unit-sphere variant"
        )
    axis_order = (1, 0) if cfg.variant == "av" else (0, 1)
    if embeddings is None:
        lo = np.array([-1.0, -1.0])
        hi = np.array([1.0, 1.0])
    else:
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.ndim != 2 or embeddings.shape[1] != 2:
            raise ValueError(f"vizmap: expected (n, 2) embeddings, got {embeddings.shape}")
        lo = embeddings.min(axis=0)
        hi = embeddings.max(axis=0)
        span = hi - lo
        span[span == 0] = 1.0  # degenerate axis still gets a visible range
        lo = lo - PLANE_MARGIN * span
        hi = hi + PLANE_MARGIN * span
    xi, yi = axis_order
    return GridSpec(
        mode="plane",
        x_min=float(lo[xi]),
        x_max=float(hi[xi]),
        y_min=float(lo[yi]),
        y_max=float(hi[yi]),
        res_x=resolution,
        res_y=resolution,
        axis_order=axis_order,
    )


def grid_embeddings(grid: GridSpec) -> np.ndarray:
    """Embedding coordinate of every cell, row-major, shape (rows*cols, d).

    Plane: cell centers; row 0 is the top of the image (largest y), columns
    run left to right (ascending x). Sphere: row r fixes theta on the
    inclusive [0, pi] lattice, columns sweep phi over (-pi, pi]; the returned
    vectors (sin t cos p, sin t sin p, cos t) are unit length.
    """
    rows, cols = grid.shape
    if grid.mode == "plane":
        xs = grid.x_min + (np.arange(cols) + 0.5) * (grid.x_max - grid.x_min) / cols
        ys = grid.y_max - (np.arange(rows) + 0.5) * (grid.y_max - grid.y_min) / rows
        out = np.zeros((rows * cols, 2))
        xi, yi = grid.axis_order
        out[:, xi] = np.tile(xs, rows)
        out[:, yi] = np.repeat(ys, cols)
        return out
    theta = np.linspace(0.0, np.pi, rows)
    phi = -np.pi + (np.arange(cols) + 1) * 2.0 * np.pi / cols
    t = np.repeat(theta, cols)
    p = np.tile(phi, rows)
    p = np.where((t == 0.0) | (t == np.pi), 0.0, p)  # poles: phi defined as 0
    return np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=1)


@dataclass(eq=False)
class EmotionMap:
    grid: GridSpec
    classes: np.ndarray  # (rows, cols) int64 in 0..6
    f1: Optional[np.ndarray]  # (n_classes,) overlay values, None when not scored
    palette: tuple = PALETTE


def render_emotion_map(
    params: ModelParams,
    cfg: ModelConfig,
    grid: GridSpec,
    domain_id: int,
    test_bundle: Optional[DatasetBundle] = None,
) -> EmotionMap:
    """Classify every grid cell with the chosen domain head.

    Each cell's class is predict_from_embedding at the cell's coordinate, so
    map and prediction agree exactly, tie-break included. When a test bundle
    is given, its domain_id records score the per-class F1 overlay.
    """
    if grid.mode == "sphere" and not (cfg.variant == "cake_norm" and cfg.k == 3):
        raise ValueError(f"vizmap: sphere grid needs the 3-d normalized variant, not {cfg.variant!r}")
    if grid.mode == "plane" and cfg.embed_dim != 2:
        raise ValueError(f"vizmap: plane grid needs a 2-d embedding, model has {cfg.embed_dim}")
    rows, cols = grid.shape
    coords = grid_embeddings(grid)
    flat = np.empty(rows * cols, dtype=np.int64)
    for i in range(len(coords)):
        flat[i] = predict_from_embedding(params, coords[i], domain_id)
    f1 = None
    if test_bundle is not None:
        arrays = bundle_arrays(test_bundle)
        idx = np.flatnonzero(arrays.dom == domain_id)
        if idx.size == 0:
            raise ValueError(f"vizmap: test bundle has no domain {domain_id} records")
        av = None if arrays.av is None else arrays.av[idx]
        preds = predict_batch(params, cfg, arrays.x[idx], av, domain_id)
        f1 = per_class_f1(confusion(preds, arrays.y[idx], cfg.n_classes))
    return EmotionMap(grid=grid, classes=flat.reshape(rows, cols), f1=f1)


# ---------------------------------------------------------------------------
# Image emission
# ---------------------------------------------------------------------------


def _svg_color(c: tuple) -> str:
    return f"#{c[0]:02x}{c[1]:02x}{c[2]:02x}"


def emit_map_image(emap: EmotionMap, path: str, format: str = "raster") -> None:
    """Write the map: 'raster' = P6 pixmap one pixel per cell, 'vector' =
    per-cell rectangles plus the F1 overlay text. Byte-deterministic."""
    if format == "raster":
        with open(path, "wb") as fh:
            fh.write(map_ppm_bytes(emap))
    elif format == "vector":
        with open(path, "wb") as fh:
            fh.write(map_svg_text(emap).encode("utf-8"))
    else:
        raise ValueError(f"vizmap: unknown image format {format!r}")


def map_ppm_bytes(emap: EmotionMap) -> bytes:
    rows, cols = emap.classes.shape
    lut = np.asarray(emap.palette, dtype=np.uint8)
    pixels = lut[emap.classes]
    return f"P6\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes()


def read_ppm_classes(path: str, palette=PALETTE) -> np.ndarray:
    """Invert a palette raster back to its class grid (exact round trip)."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6" or len(parts) < 4:
        raise ValueError("vizmap: not a binary P6 pixmap")
    cols, rows = (int(v) for v in parts[1].split())
    if parts[2] != b"255":
        raise ValueError("vizmap: expected 8-bit channels")
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != rows * cols * 3:
        raise ValueError(f"vizmap: pixmap payload is {pixels.size} bytes, "
                         f"expected {rows * cols * 3}")
    pixels = pixels.reshape(rows, cols, 3)
    classes = np.full((rows, cols), -1, dtype=np.int64)
    for c, rgb in enumerate(palette):
        classes[np.all(pixels == np.asarray(rgb, dtype=np.uint8), axis=2)] = c
    if np.any(classes < 0):
        raise ValueError("vizmap: pixel color not in the palette")
    return classes


def _class_label_anchor(classes: np.ndarray, c: int) -> Optional[tuple]:
    """(row, col) anchor for class c's text: mean cell of the class region, or
    the largest connected component's mean when the region is disconnected
    and its overall mean lands outside the class."""
    mask = classes == c
    if not mask.any():
        return None
    rr, cc = np.nonzero(mask)
    r, col = float(rr.mean()), float(cc.mean())
    ri = min(max(int(round(r)), 0), classes.shape[0] - 1)
    ci = min(max(int(round(col)), 0), classes.shape[1] - 1)
    if classes[ri, ci] == c:
        return r, col
    labeled, n = ndimage.label(mask)
    if n == 0:
        return None
    sizes = ndimage.sum_labels(mask, labeled, index=np.arange(1, n + 1))
    big = int(np.argmax(sizes)) + 1
    rr, cc = np.nonzero(labeled == big)
    return float(rr.mean()), float(cc.mean())


def map_svg_text(emap: EmotionMap) -> str:
    rows, cols = emap.classes.shape
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {cols} {rows}" '
        f'width="{cols}" height="{rows}">'
    ]
    for r in range(rows):
        # run-length merge along the row keeps the file small
        c = 0
        while c < cols:
            c2 = c
            cls = emap.classes[r, c]
            while c2 + 1 < cols and emap.classes[r, c2 + 1] == cls:
                c2 += 1
            lines.append(
                f'<rect x="{c}" y="{r}" width="{c2 - c + 1}" height="1" '
                f'fill="{_svg_color(emap.palette[cls])}"/>'
            )
            c = c2 + 1
    if emap.f1 is not None:
        size = max(6.0, 0.05 * max(rows, cols))
        for c in range(len(emap.f1)):
            anchor = _class_label_anchor(emap.classes, c)
            if anchor is None:
                continue
            r, col = anchor
            name = CLASS_NAMES[c] if c < len(CLASS_NAMES) else f"class{c}"
            lines.append(
                f'<text x="{col + 0.5:.2f}" y="{r + 0.5:.2f}" font-size="{size:.1f}" '
                f'text-anchor="middle" fill="black">{name} {emap.f1[c]:.2f}</text>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def scatter_av(bundle: DatasetBundle, path: str) -> None:
    """Vector scatter of the corpus in the arousal-valence plane.

    One circle per record at (x=valence, y=arousal), colored by label; both
    axes span [-1, 1]. Records without AV values are an error.
    """
    missing = sum(1 for rec in bundle.records if rec.av is None)
    if missing:
        raise ValueError(
            f"scatter: {missing} of {len(bundle.records)} records lack arousal-valence values"
        )
    side, margin = 400.0, 20.0
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {side + 2 * margin:.0f} '
        f'{side + 2 * margin:.0f}" width="{side + 2 * margin:.0f}" height="{side + 2 * margin:.0f}">',
        f'<rect x="{margin:.0f}" y="{margin:.0f}" width="{side:.0f}" height="{side:.0f}" '
        'fill="white" stroke="black" stroke-width="1"/>',
        # zero axes as hairline rectangles (minimal element subset: no <line>)
        f'<rect x="{margin:.0f}" y="{margin + side / 2 - 0.5:.1f}" width="{side:.0f}" '
        'height="1" fill="black"/>',
        f'<rect x="{margin + side / 2 - 0.5:.1f}" y="{margin:.0f}" width="1" '
        f'height="{side:.0f}" fill="black"/>',
        f'<text x="{margin + side - 4:.0f}" y="{margin + side / 2 - 6:.1f}" font-size="12" '
        'text-anchor="end" fill="black">valence</text>',
        f'<text x="{margin + side / 2 + 6:.1f}" y="{margin + 12:.0f}" font-size="12" '
        'text-anchor="start" fill="black">arousal</text>',
    ]
    for rec in bundle.records:
        a, v = rec.av
        x = margin + (v + 1.0) / 2.0 * side
        y = margin + (1.0 - (a + 1.0) / 2.0) * side
        lines.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" '
            f'fill="{_svg_color(PALETTE[rec.label])}"/>'
        )
    lines.append("</svg>")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
