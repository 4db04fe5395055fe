"""Reductions from an event log to the evaluation artifacts.

Channel-busy-percent time series, packet-error-rate histogram over
transmitter-to-host distance, received-signal-strength curve, and the
per-run summary table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import channel as chan
from .channel import PathLossModel, RadioConfig
from .errors import ValidationError
from .mac import Outcome, RunStats, TxEvent
from .scenario import Scenario, generation_schedule, position_at

DEFAULT_CBP_WINDOW_S = 0.1
DEFAULT_PER_BIN_M = 25.0
DEFAULT_PER_MAX_DISTANCE_M = 400.0


@dataclass
class CbpSeries:
    window_s: float
    samples: list[tuple[float, float]]  # (window start, busy fraction)
    average: float


@dataclass
class PerBin:
    d_lo_m: float
    d_hi_m: float
    sent: int
    errors: int

    @property
    def per(self) -> Optional[float]:
        return self.errors / self.sent if self.sent > 0 else None


@dataclass
class PerHistogram:
    bin_width_m: float
    max_distance_m: float
    bins: list[PerBin]
    average: Optional[float]  # error-weighted over all counted packets

    @property
    def total_sent(self) -> int:
        return sum(b.sent for b in self.bins)

    @property
    def total_errors(self) -> int:
        return sum(b.errors for b in self.bins)


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if not intervals:
        return []
    intervals.sort()
    merged = [intervals[0]]
    for lo, hi in intervals[1:]:
        mlo, mhi = merged[-1]
        if lo <= mhi:
            if hi > mhi:
                merged[-1] = (mlo, hi)
        else:
            merged.append((lo, hi))
    return merged


def compute_cbp(events: Sequence[TxEvent], scenario: Scenario,
                model: PathLossModel, radio: RadioConfig,
                window_s: float = DEFAULT_CBP_WINDOW_S) -> CbpSeries:
    """Fraction of each window during which the HV senses the channel busy.

    An event counts while its transmitter's signal at the HV reaches the
    carrier-sense threshold (the HV's own transmissions trivially do).
    Overlapping occupancies are unioned, not summed.
    """
    if window_s <= 0:
        raise ValidationError("window_s must be positive")
    duration = scenario.duration_s
    busy = []
    for ev in events:
        if chan.rss_dbm(radio, model, ev.hv_distance_m) < radio.cs_threshold_dbm:
            continue
        lo = ev.start_s
        hi = min(ev.end_s, duration)
        if hi > lo:
            busy.append((lo, hi))
    busy = _merge_intervals(busy)

    n_windows = int(math.ceil(duration / window_s - 1e-12))
    samples = []
    total_busy = 0.0
    i = 0
    for k in range(n_windows):
        w_lo = k * window_s
        w_hi = min((k + 1) * window_s, duration)
        occupied = 0.0
        while i < len(busy) and busy[i][1] <= w_lo:
            i += 1
        j = i
        while j < len(busy) and busy[j][0] < w_hi:
            occupied += min(busy[j][1], w_hi) - max(busy[j][0], w_lo)
            j += 1
        width = w_hi - w_lo
        samples.append((w_lo, occupied / width if width > 0 else 0.0))
        total_busy += occupied
    return CbpSeries(window_s=window_s, samples=samples,
                     average=total_busy / duration)


def compute_per(events: Sequence[TxEvent], scenario: Scenario, hv_id: int,
                bin_width_m: float = DEFAULT_PER_BIN_M,
                max_distance_m: float = DEFAULT_PER_MAX_DISTANCE_M) -> PerHistogram:
    """Error rate of RV packets binned by transmitter-HV distance at generation.

    Every scheduled RV packet closer than ``max_distance_m`` counts as sent;
    it counts as an error unless some event decoded it as the capture
    winner. Packets that expired or never reached the air are errors in
    their distance bin.
    """
    if bin_width_m <= 0:
        raise ValidationError("bin_width_m must be positive")
    hv_trace = scenario.traces_by_id[hv_id]
    decoded = {ev.winner.key for ev in events
               if ev.outcome is Outcome.DECODED and ev.winner is not None}

    n_bins = int(math.ceil(max_distance_m / bin_width_m - 1e-12))
    bins = [PerBin(k * bin_width_m, min((k + 1) * bin_width_m, max_distance_m), 0, 0)
            for k in range(n_bins)]
    for trace in scenario.all_traces():
        if trace.vehicle_id == hv_id:
            continue
        for seq, gen in enumerate(generation_schedule(trace, scenario.duration_s)):
            d = chan.distance_m(position_at(trace, gen), position_at(hv_trace, gen))
            if d >= max_distance_m:
                continue
            idx = min(int(d / bin_width_m), n_bins - 1)
            bins[idx].sent += 1
            if (trace.vehicle_id, seq) not in decoded:
                bins[idx].errors += 1
    total_sent = sum(b.sent for b in bins)
    total_err = sum(b.errors for b in bins)
    average = total_err / total_sent if total_sent > 0 else None
    return PerHistogram(bin_width_m=bin_width_m, max_distance_m=max_distance_m,
                        bins=bins, average=average)


def rss_curve(radio: RadioConfig, model: PathLossModel, d_min_m: float,
              d_max_m: float, step_m: float) -> list[tuple[float, float]]:
    """Tabulated received signal strength over [d_min, d_max]."""
    if not 0 <= d_min_m < d_max_m:
        raise ValidationError("need 0 <= d_min < d_max")
    if step_m <= 0:
        raise ValidationError("step_m must be positive")
    n = int(math.floor((d_max_m - d_min_m) / step_m + 1e-9)) + 1
    return [(d_min_m + k * step_m,
             chan.rss_dbm(radio, model, d_min_m + k * step_m)) for k in range(n)]


@dataclass
class SummaryRow:
    label: str
    topology: str
    vehicles: int
    channel: str
    seed: int
    duration_s: float
    avg_cbp: Optional[float]      # fraction in [0, 1]
    avg_per: Optional[float]
    stats: RunStats
    note: str = ""


@dataclass
class SimReport:
    rows: list[SummaryRow] = field(default_factory=list)

    @classmethod
    def single(cls, label: str, topology: str, vehicles: int, channel: str,
               seed: int, duration_s: float, cbp: CbpSeries,
               per: PerHistogram, stats: RunStats) -> "SimReport":
        note = "" if stats.events > 0 else "no traffic"
        row = SummaryRow(label, topology, vehicles, channel, seed, duration_s,
                         cbp.average if stats.events > 0 else 0.0,
                         per.average, stats, note)
        return cls(rows=[row])

    @classmethod
    def merge(cls, reports: Sequence["SimReport"]) -> "SimReport":
        rows = [row for rep in reports for row in rep.rows]
        rows.sort(key=lambda r: (r.channel, r.topology, r.vehicles, r.label))
        return cls(rows=rows)

    def to_text(self) -> str:
        header = (f"{'label':<18} {'topology':<12} {'veh':>5} {'channel':<18} "
                  f"{'CBP%':>7} {'PER%':>7} {'events':>8} {'wall_s':>8} "
                  f"{'speedup':>8}  note")
        lines = [header, "-" * len(header)]
        for r in self.rows:
            cbp = f"{100.0 * r.avg_cbp:.2f}" if r.avg_cbp is not None else "-"
            per = f"{100.0 * r.avg_per:.2f}" if r.avg_per is not None else "-"
            speed = r.stats.speedup
            flag = " (real-time capable)" if speed > 1.0 else ""
            lines.append(
                f"{r.label:<18} {r.topology:<12} {r.vehicles:>5} {r.channel:<18} "
                f"{cbp:>7} {per:>7} {r.stats.events:>8} "
                f"{r.stats.wall_time_s:>8.3f} {speed:>8.2f}  {r.note}{flag}")
        return "\n".join(lines)

    # deterministic columns only: wall-clock figures live in stats.json
    CSV_HEADER = ("label,topology,vehicles,channel,seed,duration_s,avg_cbp,"
                  "avg_per,packets_generated,decoded,collided,below_sensitivity,"
                  "expired,queued_at_end,events,note")

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            cbp = "" if r.avg_cbp is None else repr(r.avg_cbp)
            per = "" if r.avg_per is None else repr(r.avg_per)
            s = r.stats
            lines.append(
                f"{r.label},{r.topology},{r.vehicles},{r.channel},{r.seed},"
                f"{r.duration_s!r},{cbp},{per},{s.packets_generated},"
                f"{s.packets_decoded},{s.packets_collided},"
                f"{s.packets_below_sensitivity},{s.packets_expired},"
                f"{s.packets_queued_at_end},{s.events},{r.note}")
        return "\n".join(lines) + "\n"


def summarize(events: Sequence[TxEvent], cbp: CbpSeries, per: PerHistogram,
              stats: RunStats, *, label: str = "run", topology: str = "custom",
              vehicles: int = 0, channel: str = "custom", seed: int = 0,
              duration_s: Optional[float] = None) -> SimReport:
    """One-row report for a finished run; merge reports for batch tables."""
    return SimReport.single(label, topology, vehicles, channel, seed,
                            duration_s if duration_s is not None
                            else stats.sim_duration_s, cbp, per, stats)


def write_cbp_csv(cbp: CbpSeries, path) -> None:
    lines = ["t_start_s,busy_fraction"]
    lines.extend(f"{t!r},{b!r}" for t, b in cbp.samples)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_per_csv(per: PerHistogram, path) -> None:
    lines = ["d_lo_m,d_hi_m,sent,errors,per"]
    for b in per.bins:
        value = "" if b.per is None else repr(b.per)
        lines.append(f"{b.d_lo_m!r},{b.d_hi_m!r},{b.sent},{b.errors},{value}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_rss_csv(points: list[tuple[float, float]], path) -> None:
    lines = ["d_m,rss_dbm"]
    lines.extend(f"{d!r},{r!r}" for d, r in points)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_plot_data(path, cbp: Optional[CbpSeries] = None,
                    per: Optional[PerHistogram] = None,
                    rss: Optional[list[tuple[float, float]]] = None) -> None:
    """Long-format series CSV (series,x,y) for external plotting tools."""
    lines = ["series,x,y"]
    if cbp is not None:
        lines.extend(f"cbp,{t!r},{b!r}" for t, b in cbp.samples)
    if per is not None:
        lines.extend(f"per,{(b.d_lo_m + b.d_hi_m) / 2.0!r},{b.per!r}"
                     for b in per.bins if b.per is not None)
    if rss is not None:
        lines.extend(f"rss,{d!r},{r!r}" for d, r in rss)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
