"""Video-suited chart templates rendered to planar RGBA canvases.

Five template kinds (bar, line, area, text, data) with style defaults that
follow how embedded charts are styled in production footage: a
semi-transparent background panel, horizontal gridlines, axes and title on,
and no legend (legend is permanently off). Records reveal progressively by
timestamp; entrance/exit behavior is a per-segment opacity/unveil ramp.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field as dataclass_field
from datetime import datetime, timezone

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import DuplicateColumn, EmptyData, MappingError, UnparseableCell

PIXELS_PER_METER = 512
MAX_CANVAS_SIDE = 2048

PALETTES = {
    "default": {
        "panel": (22, 28, 38),
        "mark": (66, 135, 245),
        "mark2": (245, 158, 66),
        "grid": (110, 118, 130),
        "axis": (215, 220, 228),
        "text": (240, 243, 248),
    },
    "warm": {
        "panel": (40, 26, 18),
        "mark": (240, 120, 48),
        "mark2": (250, 200, 90),
        "grid": (140, 110, 92),
        "axis": (235, 220, 205),
        "text": (250, 242, 232),
    },
    "mono": {
        "panel": (24, 24, 24),
        "mark": (220, 220, 220),
        "mark2": (150, 150, 150),
        "grid": (96, 96, 96),
        "axis": (200, 200, 200),
        "text": (245, 245, 245),
    },
}

CHART_KINDS = ("bar", "line", "area", "text", "data")


@dataclass
class DataTable:
    names: list[str]
    types: dict[str, str]  # number | text | timestamp
    rows: list[dict]

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]


def _parse_timestamp(text: str) -> float | None:
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def parse_dataset(source: str, delimiter: str = ",") -> DataTable:
    """Typed table from delimited text with a header row.

    Column types are inferred: all-numeric -> number, all ISO-8601 ->
    timestamp, anything else -> text. Integer frame indices stay numeric and
    are accepted directly in a timestamp channel.
    """
    reader = csv.reader(io.StringIO(source), delimiter=delimiter)
    header = next(reader, None)
    if not header:
        raise EmptyData("dataset has no header row")
    names = [h.strip() for h in header]
    seen = set()
    for name in names:
        if name in seen:
            raise DuplicateColumn(f"duplicate column name {name!r}")
        seen.add(name)
    raw_rows = [row for row in reader if row]
    if not raw_rows:
        raise EmptyData("dataset has a header but no rows")
    for r, row in enumerate(raw_rows):
        if len(row) != len(names):
            col = names[min(len(row), len(names) - 1)]
            raise UnparseableCell(r, col, f"row {r} has {len(row)} cells, expected {len(names)}")

    types: dict[str, str] = {}
    columns: dict[str, list] = {}
    for c, name in enumerate(names):
        cells = [row[c].strip() for row in raw_rows]
        numeric = []
        is_number = True
        for cell in cells:
            try:
                numeric.append(float(cell))
            except ValueError:
                is_number = False
                break
        if is_number:
            types[name] = "number"
            columns[name] = numeric
            continue
        stamps = [_parse_timestamp(cell) for cell in cells]
        if all(s is not None for s in stamps):
            types[name] = "timestamp"
            columns[name] = stamps
            continue
        types[name] = "text"
        columns[name] = cells
    for name in names:
        if types[name] == "timestamp":
            vals = columns[name]
            if any(b < a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"timestamp column {name!r} must be monotone non-decreasing")
    rows = [{name: columns[name][r] for name in names} for r in range(len(raw_rows))]
    return DataTable(names=names, types=types, rows=rows)


def load_dataset(path) -> DataTable:
    from pathlib import Path

    return parse_dataset(Path(path).read_text(encoding="utf-8"))


@dataclass
class StyleSpec:
    """Production-footage style defaults; the legend is permanently off."""

    panel: str = "semi-transparent"  # none | solid | semi-transparent
    panel_opacity: float = 0.7
    grid_horizontal: bool = True
    grid_vertical: bool = False
    axes: bool = True
    title: bool = True
    palette: str = "default"
    line_thickness: int = 2
    pointer: str = "none"  # none | triangle | line | bounding-box

    def __post_init__(self):
        if self.panel not in ("none", "solid", "semi-transparent"):
            raise ValueError(f"unknown panel style {self.panel!r}")
        if not 0.0 <= self.panel_opacity <= 1.0:
            raise ValueError("panel opacity must be in [0, 1]")
        if self.palette not in PALETTES:
            raise ValueError(f"unknown palette {self.palette!r}")
        if self.pointer not in ("none", "triangle", "line", "bounding-box"):
            raise ValueError(f"unknown pointer style {self.pointer!r}")

    @property
    def legend(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {
            "panel": self.panel,
            "panel_opacity": self.panel_opacity,
            "grid_horizontal": self.grid_horizontal,
            "grid_vertical": self.grid_vertical,
            "axes": self.axes,
            "title": self.title,
            "palette": self.palette,
            "line_thickness": self.line_thickness,
            "pointer": self.pointer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StyleSpec":
        d = dict(d)
        d.pop("legend", None)  # fixed off regardless of input
        allowed = {
            "panel", "panel_opacity", "grid_horizontal", "grid_vertical",
            "axes", "title", "palette", "line_thickness", "pointer",
        }
        return cls(**{k: v for k, v in d.items() if k in allowed})


@dataclass
class TemporalBehavior:
    enter: str = "fade"  # fade | unveil | none
    exit: str = "fade"  # fade | none
    enter_frames: int = 0
    exit_frames: int = 0

    def __post_init__(self):
        if self.enter not in ("fade", "unveil", "none"):
            raise ValueError(f"unknown entrance behavior {self.enter!r}")
        if self.exit not in ("fade", "none"):
            raise ValueError(f"unknown exit behavior {self.exit!r}")
        if self.enter_frames < 0 or self.exit_frames < 0:
            raise ValueError("ramp lengths must be >= 0")

    def to_dict(self) -> dict:
        return {
            "enter": self.enter,
            "exit": self.exit,
            "enter_frames": self.enter_frames,
            "exit_frames": self.exit_frames,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TemporalBehavior":
        return cls(
            enter=d.get("enter", "fade"),
            exit=d.get("exit", "fade"),
            enter_frames=int(d.get("enter_frames", 0)),
            exit_frames=int(d.get("exit_frames", 0)),
        )


@dataclass
class ChartSpec:
    kind: str
    mapping: dict[str, str]  # channel -> column name (x, y, timestamp, title, value)
    style: StyleSpec = dataclass_field(default_factory=StyleSpec)
    size: tuple[float, float] = (1.0, 0.75)  # meters

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise ValueError(f"unknown chart kind {self.kind!r}")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError("chart size must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mapping": dict(self.mapping),
            "style": self.style.to_dict(),
            "size": [self.size[0], self.size[1]],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChartSpec":
        return cls(
            kind=d["kind"],
            mapping=dict(d.get("mapping", {})),
            style=StyleSpec.from_dict(d.get("style", {})),
            size=tuple(d.get("size", (1.0, 0.75))),
        )


@dataclass
class ChartCanvas:
    raster: np.ndarray  # (H, W, 4) uint8, premultiplied alpha
    origin: tuple[float, float] = (0.5, 0.5)  # anchor point in canvas units
    extent: tuple[float, float] = (1.0, 0.75)  # meters

    def __post_init__(self):
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ValueError("canvas extent must be positive")


def validate_mapping(spec: ChartSpec, table: DataTable) -> None:
    for channel, column in spec.mapping.items():
        if column not in table.names:
            raise MappingError(f"channel {channel!r} maps to unknown column {column!r}")
    need = {
        "bar": ("x", "y"), "line": ("x", "y"), "area": ("x", "y"),
        "text": ("title",), "data": ("value",),
    }[spec.kind]
    for channel in need:
        if channel not in spec.mapping:
            raise MappingError(f"{spec.kind} chart requires the {channel!r} channel")
    for channel in ("y", "value"):
        col = spec.mapping.get(channel)
        if col is not None and table.types[col] != "number":
            raise MappingError(f"channel {channel!r} requires a numeric column, got {col!r}")


def visible_rows(spec: ChartSpec, table: DataTable, t: float | None) -> list[dict]:
    """Rows revealed at data time t (all rows when no timestamp is mapped)."""
    ts_col = spec.mapping.get("timestamp")
    if ts_col is None or t is None:
        return list(table.rows)
    return [row for row in table.rows if float(row[ts_col]) <= t]


def temporal_opacity(behavior: TemporalBehavior, segment: tuple[int, int], frame: int):
    """(opacity, unveil_fraction) for a frame against an inclusive segment."""
    start, end = segment
    if frame < start or frame > end:
        return 0.0, 0.0
    opacity = 1.0
    progress = 1.0
    if behavior.enter in ("fade", "unveil") and behavior.enter_frames > 0:
        progress = min((frame - start) / behavior.enter_frames, 1.0)
        if behavior.enter == "fade":
            opacity = min(opacity, progress)
    if behavior.exit == "fade" and behavior.exit_frames > 0:
        opacity = min(opacity, min((end - frame) / behavior.exit_frames, 1.0))
    unveil = progress if behavior.enter == "unveil" else 1.0
    return float(np.clip(opacity, 0.0, 1.0)), float(np.clip(unveil, 0.0, 1.0))


def _font(size: int):
    try:
        return ImageFont.load_default(size=size)
    except TypeError:  # older Pillow without sized default font
        return ImageFont.load_default()


def _canvas_pixels(size_m: tuple[float, float]) -> tuple[int, int]:
    w = min(int(round(size_m[0] * PIXELS_PER_METER)), MAX_CANVAS_SIDE)
    h = min(int(round(size_m[1] * PIXELS_PER_METER)), MAX_CANVAS_SIDE)
    return max(w, 16), max(h, 16)


def _title_text(spec: ChartSpec, rows: list[dict], table: DataTable) -> str:
    col = spec.mapping.get("title")
    if col is not None:
        source = rows if rows else table.rows
        return str(source[-1][col]) if source else ""
    y_col = spec.mapping.get("y") or spec.mapping.get("value")
    return y_col or ""


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return f"{value:.4g}"


def build_chart(spec: ChartSpec, table: DataTable, t: float | None = None) -> ChartCanvas:
    """Deterministic premultiplied-RGBA raster of the chart at data time t."""
    if table.row_count == 0:
        raise EmptyData("cannot build a chart from an empty table")
    validate_mapping(spec, table)
    palette = PALETTES[spec.style.palette]
    w, h = _canvas_pixels(spec.size)
    img = Image.new("RGBA", (w, h), (0, 0, 0, 0))
    draw = ImageDraw.Draw(img)
    style = spec.style

    if style.panel != "none":
        alpha = 255 if style.panel == "solid" else int(round(style.panel_opacity * 255))
        draw.rectangle([0, 0, w - 1, h - 1], fill=(*palette["panel"], alpha))

    rows = visible_rows(spec, table, t)
    title = _title_text(spec, rows, table) if style.title else ""

    margin = max(6, w // 40)
    title_h = max(18, h // 8) if title else margin
    plot = (margin + (max(10, w // 16) if style.axes else 0), title_h,
            w - margin, h - margin - (max(10, h // 14) if style.axes else 0))
    px0, py0, px1, py1 = plot

    if title:
        draw.text((margin, max(2, (title_h - 14) // 2)), title,
                  font=_font(max(12, h // 12)), fill=(*palette["text"], 255))

    if spec.kind == "text":
        return _finish(img, spec)

    if spec.kind == "data":
        col = spec.mapping["value"]
        source = rows if rows else []
        text = _format_number(float(source[-1][col])) if source else ""
        if text:
            draw.text((px0, py0 + (py1 - py0) // 4), text,
                      font=_font(max(16, h // 4)), fill=(*palette["mark"], 255))
        return _finish(img, spec)

    if style.grid_horizontal:
        for i in range(1, 4):
            y = py0 + (py1 - py0) * i // 4
            draw.line([px0, y, px1, y], fill=(*palette["grid"], 255), width=1)
    if style.grid_vertical:
        for i in range(1, 4):
            x = px0 + (px1 - px0) * i // 4
            draw.line([x, py0, x, py1], fill=(*palette["grid"], 255), width=1)
    if style.axes:
        draw.line([px0, py0, px0, py1], fill=(*palette["axis"], 255), width=1)
        draw.line([px0, py1, px1, py1], fill=(*palette["axis"], 255), width=1)

    if rows:
        y_col = spec.mapping["y"]
        x_col = spec.mapping["x"]
        values = [float(row[y_col]) for row in rows]
        vmax = max(max(values), 0.0)
        plot_h = py1 - py0
        if spec.kind == "bar":
            n = len(values)
            slot = (px1 - px0) / n
            bar_w = max(1, int(round(slot * 0.7)))
            for i, value in enumerate(values):
                if vmax <= 0:
                    continue
                bar_h = int(round(max(value, 0.0) / vmax * plot_h))
                if bar_h <= 0:
                    continue
                x_left = int(round(px0 + slot * i + (slot - bar_w) / 2))
                draw.rectangle(
                    [x_left, py1 - bar_h, x_left + bar_w - 1, py1 - 1],
                    fill=(*palette["mark"], 255),
                )
        else:  # line | area
            if table.types[x_col] == "text":
                xs = np.arange(len(rows), dtype=np.float64)
            else:
                xs = np.array([float(row[x_col]) for row in rows])
            span = xs.max() - xs.min()
            xs_px = px0 + (xs - xs.min()) / (span if span > 0 else 1.0) * (px1 - 1 - px0)
            vmin = min(min(values), 0.0)
            vspan = vmax - vmin if vmax > vmin else 1.0
            ys_px = py1 - 1 - (np.array(values) - vmin) / vspan * (plot_h - 1)
            pts = list(zip(xs_px.tolist(), ys_px.tolist()))
            if spec.kind == "area" and len(pts) >= 2:
                poly = pts + [(pts[-1][0], py1 - 1), (pts[0][0], py1 - 1)]
                draw.polygon(poly, fill=(*palette["mark"], 140))
            if len(pts) >= 2:
                draw.line(pts, fill=(*palette["mark"], 255), width=style.line_thickness)
            elif pts:
                draw.ellipse(
                    [pts[0][0] - 2, pts[0][1] - 2, pts[0][0] + 2, pts[0][1] + 2],
                    fill=(*palette["mark"], 255),
                )
    return _finish(img, spec)


def _finish(img: Image.Image, spec: ChartSpec) -> ChartCanvas:
    style = spec.style
    w, h = img.size
    draw = ImageDraw.Draw(img)
    palette = PALETTES[style.palette]
    if style.pointer == "triangle":
        cx = w // 2
        draw.polygon(
            [(cx - w // 24, h - h // 10), (cx + w // 24, h - h // 10), (cx, h - 1)],
            fill=(*palette["axis"], 255),
        )
    elif style.pointer == "line":
        draw.line([w // 2, h - h // 8, w // 2, h - 1], fill=(*palette["axis"], 255), width=2)
    elif style.pointer == "bounding-box":
        draw.rectangle([0, 0, w - 1, h - 1], outline=(*palette["axis"], 255), width=2)
    rgba = np.asarray(img, dtype=np.uint8).copy()
    alpha = rgba[..., 3:4].astype(np.uint16)
    rgba[..., :3] = ((rgba[..., :3].astype(np.uint16) * alpha + 127) // 255).astype(np.uint8)
    return ChartCanvas(raster=rgba, origin=(0.5, 0.5), extent=spec.size)
