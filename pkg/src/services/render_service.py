"""
Render Service
Draws stick-figure frames of sign sequences as SVG files and PDF strips
"""

from pathlib import Path

import numpy as np
from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Circle, Drawing, Group, Line, Rect, String
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import landscape, letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer

from src.config import Config
from src.exceptions import ContractError
from src.models.corpus import Normalizer
from src.models.sequence import SignSequence
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

BONE_COLOR = colors.HexColor("#374151")
JOINT_COLOR = colors.HexColor("#2563eb")
JOINT_RADIUS = 3


class RenderService:
    """Stick-figure rendering with a configurable joint connectivity"""

    def __init__(
        self,
        edges: list[tuple[int, int]],
        width: int = 320,
        height: int = 320,
        scale: float = 40.0,
        normalizer: Normalizer | None = None,
    ):
        self.edges = edges
        self.width = width
        self.height = height
        self.scale = scale
        self.normalizer = normalizer

    @classmethod
    def from_config(cls, config: Config, normalizer: Normalizer | None = None) -> "RenderService":
        return cls(
            config.edges,
            width=config.render_width,
            height=config.render_height,
            scale=config.render_scale,
            normalizer=normalizer,
        )

    def pixel_coordinates(self, sequence: SignSequence) -> np.ndarray:
        """
        De-normalized joint positions in drawing units, (T, J, 2)

        x = width/2 + x * scale and y = height/2 + y * scale; sequences with a single
        coordinate are drawn on the horizontal centre line.
        """
        frames = np.asarray(sequence.frames, dtype=np.float64)
        if self.normalizer is not None:
            frames = self.normalizer.invert(frames)
        for a, b in self.edges:
            if max(a, b) >= frames.shape[1]:
                raise ContractError(f"edge {a}-{b} references a joint outside the sequence's {frames.shape[1]} joints")
        xy = np.zeros((*frames.shape[:2], 2))
        xy[..., 0] = self.width / 2 + frames[..., 0] * self.scale
        if frames.shape[2] > 1:
            xy[..., 1] = self.height / 2 + frames[..., 1] * self.scale
        else:
            xy[..., 1] = self.height / 2
        return xy

    def _figure(self, points: np.ndarray, label: str | None = None) -> Group:
        group = Group()
        group.add(Rect(0, 0, self.width, self.height, fillColor=colors.white, strokeColor=colors.lightgrey))
        for a, b in self.edges:
            (x1, y1), (x2, y2) = points[a], points[b]
            group.add(Line(x1, y1, x2, y2, strokeColor=BONE_COLOR, strokeWidth=2))
        for x, y in points:
            group.add(Circle(x, y, JOINT_RADIUS, fillColor=JOINT_COLOR, strokeColor=None))
        if label:
            group.add(String(6, self.height - 14, label, fontSize=9, fillColor=BONE_COLOR))
        return group

    def frame_drawing(self, points: np.ndarray, label: str | None = None) -> Drawing:
        drawing = Drawing(self.width, self.height)
        drawing.add(self._figure(points, label))
        return drawing

    def render_svg_frames(self, sequence: SignSequence, out_dir: str | Path) -> list[Path]:
        """
        Write one SVG per frame, named frame_0000.svg, frame_0001.svg, ...

        Returns:
            Paths of the written files in frame order
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        points = self.pixel_coordinates(sequence)
        paths = []
        for index, frame in enumerate(points):
            path = out_dir / f"frame_{index:04d}.svg"
            renderSVG.drawToFile(self.frame_drawing(frame), str(path))
            paths.append(path)
        logger.info(f"Rendered {len(paths)} SVG frames to {out_dir}")
        return paths

    def render_pdf_strip(
        self, sequence: SignSequence, path: str | Path, panels: int = 8, title: str | None = None
    ) -> Path:
        """
        One-page PDF with evenly spaced frames of the sequence side by side

        Args:
            sequence: Sequence to draw
            path: Output PDF file
            panels: Number of frames shown (capped at the sequence length)
            title: Optional heading
        """
        if panels < 1:
            raise ContractError(f"a strip needs at least one panel, got {panels}")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        points = self.pixel_coordinates(sequence)
        count = min(panels, points.shape[0])
        picks = np.linspace(0, points.shape[0] - 1, count).round().astype(int)

        page_width = landscape(letter)[0] - 1.0 * inch
        shrink = min(1.0, page_width / (count * self.width))
        strip = Drawing(count * self.width * shrink, self.height * shrink)
        for slot, frame_index in enumerate(picks):
            panel = self._figure(points[frame_index], label=f"frame {frame_index}")
            panel.transform = (shrink, 0, 0, shrink, slot * self.width * shrink, 0)
            strip.add(panel)

        doc = SimpleDocTemplate(
            str(path),
            pagesize=landscape(letter),
            rightMargin=0.5 * inch,
            leftMargin=0.5 * inch,
            topMargin=0.5 * inch,
            bottomMargin=0.5 * inch,
        )
        styles = getSampleStyleSheet()
        title_style = ParagraphStyle(
            "StripTitle",
            parent=styles["Heading1"],
            fontSize=16,
            textColor=colors.HexColor("#1f2937"),
            spaceAfter=8,
            alignment=TA_CENTER,
        )
        caption_style = ParagraphStyle(
            "StripCaption", parent=styles["Normal"], fontSize=9, textColor=colors.HexColor("#4b5563")
        )
        elements = [
            Paragraph(title or "Sign sequence", title_style),
            Spacer(1, 0.1 * inch),
            strip,
            Spacer(1, 0.1 * inch),
            Paragraph(
                f"{sequence.num_frames} frames at {sequence.frame_rate:g} fps, {sequence.num_joints} joints", caption_style
            ),
        ]
        doc.build(elements)
        logger.info(f"Rendered {count}-panel strip to {path}")
        return path
