"""Smart card (AFC) records: CSV format and aggregation to observed flows.

CSV columns: ``card_id,origin_station,tap_in_time,destination_station,tap_out_time``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .domain import ChoiceIndex, TimeGrid, format_clock, parse_clock

log = logging.getLogger(__name__)

COLUMNS = ("card_id", "origin_station", "tap_in_time", "destination_station", "tap_out_time")


@dataclass(frozen=True)
class AfcRecord:
    card_id: str
    origin: str
    tap_in: int
    destination: str
    tap_out: int


@dataclass
class IngestionReport:
    accepted: int = 0
    rejected: list[str] = field(default_factory=list)
    outside_period: int = 0
    unknown_od: int = 0
    late_exits: int = 0

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": len(self.rejected),
            "rejected_reasons": self.rejected[:20],
            "outside_period": self.outside_period,
            "unknown_od": self.unknown_od,
            "late_exits": self.late_exits,
        }


def read_afc(path, report: IngestionReport | None = None) -> list[AfcRecord]:
    """Parse an AFC CSV; malformed rows are skipped and listed in ``report``."""
    report = report if report is not None else IngestionReport()
    records = []
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = AfcRecord(
                    str(row["card_id"]),
                    str(row["origin_station"]).strip(),
                    parse_clock(row["tap_in_time"]),
                    str(row["destination_station"]).strip(),
                    parse_clock(row["tap_out_time"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                report.rejected.append(f"line {lineno}: {exc}")
                continue
            records.append(rec)
    return records


def write_afc(records: Iterable[AfcRecord], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([r.card_id, r.origin, format_clock(r.tap_in), r.destination, format_clock(r.tap_out)])


def observed_flows_from_afc(
    records: Iterable[AfcRecord],
    grid: TimeGrid,
    index: ChoiceIndex,
    report: IngestionReport | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """OD entry flows ``(n_groups,)`` and entry-exit flows ``(n_groups, n_exit)``."""
    report = report if report is not None else IngestionReport()
    q_entry = np.zeros(index.n_groups)
    q_exit = np.zeros((index.n_groups, grid.n_exit))
    horizon = grid.start + grid.n_exit * grid.tau
    for rec in records:
        if rec.tap_out < rec.tap_in:
            report.rejected.append(f"card {rec.card_id}: tap-out before tap-in")
            continue
        m = grid.entry_interval(rec.tap_in)
        if m is None:
            report.outside_period += 1
            continue
        try:
            g = index.group(rec.origin, m, rec.destination)
        except KeyError:
            report.unknown_od += 1
            continue
        if rec.tap_out >= horizon:
            report.late_exits += 1
        n = int(grid.exit_interval(rec.tap_out))
        q_entry[g] += 1
        q_exit[g, n] += 1
        report.accepted += 1
    if report.late_exits:
        log.warning("%d tap-outs after the horizon binned to the last interval", report.late_exits)
    return q_entry, q_exit


def tapins_from_afc(records: Iterable[AfcRecord], grid: TimeGrid, index: ChoiceIndex) -> dict[int, list[int]]:
    """Observed tap-in seconds per group, for loading runs that replay them."""
    out: dict[int, list[int]] = {}
    for rec in records:
        if rec.tap_out < rec.tap_in:
            continue
        m = grid.entry_interval(rec.tap_in)
        if m is None:
            continue
        try:
            g = index.group(rec.origin, m, rec.destination)
        except KeyError:
            continue
        out.setdefault(g, []).append(rec.tap_in)
    return {g: sorted(v) for g, v in out.items()}
