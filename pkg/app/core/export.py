# export.py

"""
Exportación de las estadísticas del corpus a Markdown y PDF.
"""

import io
import logging

from reportlab.lib import colors
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import ParagraphStyle
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from app.core.stats import DatasetStats

logger = logging.getLogger(__name__)

REPORT_TITLE = "Estadísticas del corpus: completo frente a podado"


def _stats_rows(stats: DatasetStats) -> list[tuple[str, str, str]]:
    """Filas (métrica, completo, podado) comunes a ambos formatos."""
    rows = [
        ("Muestras", str(stats.samples), str(stats.samples)),
        ("Nodos (media)", f"{stats.avg_nodes_full:.2f}", f"{stats.avg_nodes_pruned:.2f}"),
        (
            "Nodos review (media)",
            f"{stats.avg_review_full:.2f}",
            f"{stats.avg_review_pruned:.2f}",
        ),
        (
            "Tokens (media)",
            f"{stats.avg_tokens_full:.1f}",
            f"{stats.avg_tokens_pruned:.1f}",
        ),
        (
            "Proporción en camino principal",
            f"{stats.main_path_fraction_full:.2%}",
            f"{stats.main_path_fraction_pruned:.2%}",
        ),
    ]
    for keyword, full in stats.keywords_full.items():
        pruned = stats.keywords_pruned.get(keyword, 0.0)
        rows.append((f'"{keyword}" por respuesta', f"{full:.2f}", f"{pruned:.2f}"))
    return rows


def _summary_lines(stats: DatasetStats) -> list[str]:
    lines = [
        f"Nodos review eliminados: {stats.review_nodes_removed} "
        f"({stats.review_removed_fraction:.2%} del total)"
    ]
    if stats.total_cost is not None:
        label = " (estimado)" if stats.cost_is_estimated else ""
        lines.append(f"Coste total de síntesis{label}: {stats.total_cost:.4f}")
    return lines


def stats_to_markdown(stats: DatasetStats) -> str:
    """Tabla Markdown Completo/Podado más un pequeño resumen."""
    md = f"# {REPORT_TITLE}\n\n"
    md += "| Métrica | Completo | Podado |\n|---|---:|---:|\n"
    for metric, full, pruned in _stats_rows(stats):
        md += f"| {metric} | {full} | {pruned} |\n"
    md += "\n"
    for line in _summary_lines(stats):
        md += f"- {line}\n"
    return md


def export_stats_md(stats: DatasetStats) -> bytes:
    """
    Exporta las estadísticas a Markdown.

    Returns:
        bytes: Contenido Markdown codificado en UTF-8
    """
    return stats_to_markdown(stats).encode("utf-8")


def create_pdf_styles() -> dict[str, ParagraphStyle]:
    """Crea y devuelve los estilos de párrafo para el PDF."""
    return {
        "Title": ParagraphStyle(
            "Title", fontName="Helvetica-Bold", fontSize=18, leading=22,
            spaceAfter=16, alignment=1,
        ),
        "Content": ParagraphStyle("Body", fontName="Helvetica", fontSize=10, leading=14),
    }


def export_stats_pdf(stats: DatasetStats) -> bytes:
    """Exporta las estadísticas a PDF con una tabla Completo/Podado."""
    buffer = io.BytesIO()
    try:
        doc = SimpleDocTemplate(
            buffer, pagesize=letter, topMargin=inch, bottomMargin=inch,
            leftMargin=inch, rightMargin=inch,
        )
        styles = create_pdf_styles()
        data = [["Métrica", "Completo", "Podado"], *map(list, _stats_rows(stats))]
        table = Table(
            data,
            colWidths=["50%", "25%", "25%"],
            style=TableStyle([
                ("BACKGROUND", (0, 0), (-1, 0), colors.HexColor("#F0F2F6")),
                ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
                ("ALIGN", (1, 0), (-1, -1), "RIGHT"),
                ("PADDING", (0, 0), (-1, -1), 6),
                ("BOX", (0, 0), (-1, -1), 0.25, colors.grey),
                ("INNERGRID", (0, 0), (-1, -1), 0.25, colors.lightgrey),
            ]),
            hAlign="LEFT",
        )
        story = [Paragraph(REPORT_TITLE, styles["Title"]), table, Spacer(1, 0.2 * inch)]
        story.extend(Paragraph(line, styles["Content"]) for line in _summary_lines(stats))

        doc.build(story)
        pdf_content = buffer.getvalue()
        logger.info(f"PDF de estadísticas exportado ({stats.samples} muestras)")
        return pdf_content
    finally:
        buffer.close()
