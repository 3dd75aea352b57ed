"""One-page PDF summaries of a sweep (``cavityfield sweep --pdf``)."""

import os
from datetime import datetime
from typing import List, Optional, Sequence

from fpdf import FPDF

# fill colour, text colour, tag
_STATUS = {
    "success": ((220, 255, 220), (0, 120, 0), "[OK]"),
    "error": ((255, 220, 220), (160, 0, 0), "[X]"),
}


def _latin1(text: str) -> str:
    """Core PDF fonts only cover latin-1; anything else becomes '?'."""
    return str(text).encode("latin-1", "replace").decode("latin-1")


class SummaryPDF(FPDF):
    """Sweep report: titled header, timestamped footer and a results table."""

    def __init__(self, title: str = "Sweep Summary", *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.report_title = title
        self.generated = datetime.now().strftime("%Y-%m-%d %H:%M")

    def header(self):
        self.set_font("Arial", "B", 15)
        self.set_text_color(67, 97, 238)
        self.cell(0, 10, _latin1(self.report_title), ln=True, align="C")
        self.set_draw_color(200, 200, 200)
        self.line(10, 20, 200, 20)
        self.ln(5)

    def footer(self):
        self.set_y(-15)
        self.set_font("Arial", "I", 8)
        self.set_text_color(128, 128, 128)
        self.cell(0, 10, f"Generated: {self.generated}", align="L")
        self.set_x(10)
        self.cell(0, 10, f"Page {self.page_no()}", align="R")

    def section(self, title: str, lines: Sequence[str] = ()):
        self.set_font("Arial", "B", 13)
        self.set_fill_color(240, 240, 255)
        self.set_text_color(40, 40, 100)
        self.cell(0, 9, _latin1(title), ln=True, fill=True)
        self.ln(2)
        self.set_font("Arial", "", 10)
        self.set_text_color(40, 40, 40)
        for line in lines:
            self.multi_cell(0, 5, _latin1(line))
        if lines:
            self.ln(2)

    def status_line(self, text: str, status: str):
        background, foreground, tag = _STATUS[status]
        self.set_fill_color(*background)
        self.set_text_color(*foreground)
        self.set_font("Arial", "B", 10)
        self.multi_cell(0, 6, _latin1(f"{tag} {text}"), fill=True, border=1)
        self.ln(1)

    def results_table(self, headers: Sequence[str], rows: Sequence[Sequence]):
        """Equal-width columns, shaded every other row."""
        width = (self.w - 20) / len(headers)
        self.set_font("Arial", "B", 9)
        self.set_fill_color(200, 220, 255)
        self.set_text_color(40, 40, 40)
        for name in headers:
            self.cell(width, 7, _latin1(name), border=1, fill=True, align="C")
        self.ln()

        self.set_font("Arial", "", 9)
        self.set_fill_color(240, 240, 240)
        for k, row in enumerate(rows):
            for item in row:
                self.cell(width, 6, _latin1(item), border=1, fill=k % 2 == 1, align="C")
            self.ln()
        self.ln(3)


def save_pdf(
    headers: Sequence[str],
    rows: Sequence[Sequence],
    filename: str = "summary.pdf",
    title: str = "Sweep Summary",
    notes: Optional[List[str]] = None,
    failures: Optional[List[str]] = None,
    output_dir: str = "results",
) -> str:
    """
    Write a one-table PDF summary.

    Args:
        headers (Sequence[str]): Column titles.
        rows (Sequence[Sequence]): Table rows; items are formatted with str().
        filename (str): Desired name of the PDF file.
        title (str): Title printed in every page header.
        notes (list): Lines printed above the table (configuration, version).
        failures (list): One status line per failed entry, below the table.
        output_dir (str): Directory to save the PDF file.

    Returns:
        str: Path to the generated PDF.
    """
    if any(len(row) != len(headers) for row in rows):
        raise ValueError("every row must have one item per header")

    os.makedirs(output_dir, exist_ok=True)
    file_path = os.path.join(output_dir, filename)

    pdf = SummaryPDF(title=title)
    pdf.add_page()
    pdf.set_auto_page_break(auto=True, margin=25)
    if notes:
        pdf.section("Run", notes)
    pdf.section("Results")
    pdf.results_table(headers, rows)
    for message in failures or []:
        pdf.status_line(message, "error")
    if not failures:
        pdf.status_line("All entries completed.", "success")

    pdf.output(file_path)
    return file_path
