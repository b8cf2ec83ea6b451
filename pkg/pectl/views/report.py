#!/usr/bin/env python3
"""
pectl - Report View Module
-----------
Renders gain reports and sweep results as flat text, CSV rows and rich
tables.
"""
from typing import Iterable, List, Optional, Sequence

from rich.console import Console
from rich.table import Table
from rich.text import Text

from ..core.analysis import DecayFit, GainReport
from ..utils.utils import format_value

REPORT_COLUMNS = (
    "c1", "M", "M_printed", "M_lip", "Nc1", "eta", "K1", "K1_proof_form", "K3", "K4",
    "L1", "L2", "L3", "spectral_margin", "spectrum_certified", "resolvent_norm",
    "open_loop_pass", "closed_loop_pass", "observer_pass",
)

# Name, field, condition flag shown next to it.
_CONDITIONS = (
    ("open loop", "M", "open_loop_pass"),
    ("state feedback", "K1", "closed_loop_pass"),
    ("observer", "K3", "observer_pass"),
)


def report_text(report: GainReport, fit: Optional[DecayFit] = None) -> str:
    """``key = value`` lines, one per constant."""
    values = report.as_dict()
    lines = [f"{key} = {format_value(values[key])}" for key in REPORT_COLUMNS]
    if fit is not None:
        lines += [
            f"fitted_rate = {format_value(fit.rate)}",
            f"fit_r_squared = {format_value(fit.r_squared)}",
            f"fit_window = {format_value(fit.window[0])}:{format_value(fit.window[1])}",
        ]
    return "\n".join(lines) + "\n"


def report_csv_row(report: GainReport) -> List[object]:
    values = report.as_dict()
    return [values[key] for key in REPORT_COLUMNS]


def _flag(passed: bool) -> Text:
    return Text("pass", style="green") if passed else Text("FAIL", style="bold red")


def gain_table(report: GainReport, fit: Optional[DecayFit] = None) -> Table:
    table = Table(title=f"Gain report (c1 = {format_value(report.c1)})", title_justify="left")
    table.add_column("Condition")
    table.add_column("Rate", justify="right")
    table.add_column("Status")
    for name, field, flag in _CONDITIONS:
        table.add_row(name, format_value(getattr(report, field)), _flag(getattr(report, flag)))

    table.add_section()
    for key in ("M_lip", "Nc1", "eta", "K4", "K1_proof_form", "M_printed", "spectral_margin", "resolvent_norm"):
        table.add_row(key, format_value(getattr(report, key)), "")
    table.add_row("spectrum tail", "", _flag(report.spectrum_certified))
    if fit is not None:
        table.add_section()
        table.add_row("fitted rate", format_value(fit.rate), f"r2 {fit.r_squared:.4f}")
    return table


def sweep_table(key: str, rows: Sequence) -> Table:
    """Table over SweepRow objects."""
    table = Table(title=f"Sweep over {key}", title_justify="left")
    for name in (key, "K1", "K3", "guaranteed", "fitted", "status"):
        table.add_column(name, justify="right")
    for row in rows:
        res = row.result
        if res is None:
            table.add_row(format_value(row.value), "", "", "", "", Text("diverged" if row.status == 3 else "invalid", style="bold red"))
            continue
        fitted = format_value(res.fit.rate) if res.fit is not None else "-"
        table.add_row(
            format_value(row.value),
            format_value(res.report.K1),
            format_value(res.report.K3),
            format_value(res.guaranteed_rate),
            fitted,
            _flag(row.status == 0),
        )
    return table


def render(tables: Iterable[Table], console: Optional[Console] = None) -> None:
    console = console or Console()
    for table in tables:
        console.print(table)
