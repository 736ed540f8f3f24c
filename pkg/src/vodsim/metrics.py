"""Run accumulators, the final report and CSV/summary output."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

from vodsim.routing import IN_LPSG, DecisionKind

CSV_COLUMNS = [
    "sweep_key", "seed", "R", "Q", "N_rej", "R_rej", "S_eff", "VHR", "wan_minutes",
    "wan_fraction", "server_load_reduction", "y_wait_ms", "join_chain", "new_local",
    "peer_ps", "neighbor", "mms", "reject",
]

BREAKDOWN_COLUMNS = {
    DecisionKind.JOIN_CHAIN: "join_chain",
    DecisionKind.NEW_STREAM_LOCAL: "new_local",
    DecisionKind.STREAM_PEER_PS: "peer_ps",
    DecisionKind.STREAM_NEIGHBOR_LPSG: "neighbor",
    DecisionKind.FETCH_MMS: "mms",
    DecisionKind.REJECT: "reject",
}


@dataclass
class Accumulators:
    R: int = 0
    Q: int = 0
    N_rej: int = 0
    waits_ms: list[float] = field(default_factory=list)
    wan_minutes: float = 0.0
    demanded_minutes: float = 0.0
    kinds: Counter = field(default_factory=Counter)
    early_departs: int = 0
    failures: int = 0
    recoveries: int = 0
    splices: int = 0
    restreams: int = 0
    midstream_drops: int = 0

    def arrival(self, duration_min: float):
        self.R += 1
        self.demanded_minutes += duration_min

    def served(self, kind: DecisionKind, wait_ms: float, mms_minutes: float):
        self.Q += 1
        self.kinds[kind] += 1
        self.waits_ms.append(wait_ms)
        self.wan_minutes += mms_minutes

    def rejected(self):
        self.N_rej += 1
        self.kinds[DecisionKind.REJECT] += 1


@dataclass(frozen=True)
class MetricsReport:
    R: int
    Q: int
    N_rej: int
    R_rej: float
    S_eff: float
    VHR: float
    wan_minutes: float
    wan_fraction: float
    server_load_reduction: float | None
    y_wait_ms: float
    source_breakdown: dict[str, int]
    demanded_minutes: float = 0.0
    extra: dict[str, int] = field(default_factory=dict)

    @property
    def served_from_lpsg(self) -> int:
        return sum(self.source_breakdown.get(BREAKDOWN_COLUMNS[k], 0) for k in IN_LPSG)

    @property
    def lpsg_fraction(self) -> float:
        """Share of all arrivals served from the client's own group."""
        return self.served_from_lpsg / self.R if self.R else 0.0

    def check(self):
        if self.Q + self.N_rej != self.R:
            raise AssertionError(f"Q + N_rej != R ({self.Q} + {self.N_rej} != {self.R})")
        # Q/R + N/R rounds to exactly 1.0 in binary64 for every R checked up to 3000
        if self.R and self.S_eff + self.R_rej != 1.0:
            raise AssertionError(f"S_eff + R_rej = {self.S_eff + self.R_rej}")
        if sum(self.source_breakdown.values()) != self.R:
            raise AssertionError("source breakdown does not sum to R")
        for name in ("R_rej", "S_eff", "VHR", "wan_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise AssertionError(f"{name} = {v} outside [0, 1]")

    def with_baseline(self, baseline: "MetricsReport") -> "MetricsReport":
        """Attach the server-load reduction against a paired no-proxy run."""
        red = 1.0 - self.wan_minutes / baseline.wan_minutes if baseline.wan_minutes else 0.0
        return _replace(self, server_load_reduction=red)


def _replace(report, **kw):
    vals = {f.name: getattr(report, f.name) for f in fields(report)}
    vals.update(kw)
    return MetricsReport(**vals)


def finalize(acc: Accumulators, baseline_wan: float | None = None) -> MetricsReport:
    R, Q, N = acc.R, acc.Q, acc.N_rej
    if R:
        R_rej = N / R
        S_eff = Q / R
    else:
        R_rej = S_eff = 0.0
    in_lpsg = sum(acc.kinds[k] for k in IN_LPSG)
    vhr = in_lpsg / Q if Q else 0.0
    wan_fraction = acc.wan_minutes / acc.demanded_minutes if acc.demanded_minutes else 0.0
    red = None
    if baseline_wan is not None:
        red = 1.0 - acc.wan_minutes / baseline_wan if baseline_wan else 0.0
    y = sum(acc.waits_ms) / Q if Q else 0.0
    breakdown = {col: acc.kinds[k] for k, col in BREAKDOWN_COLUMNS.items()}
    extra = {
        "early_departs": acc.early_departs, "failures": acc.failures,
        "recoveries": acc.recoveries, "splices": acc.splices,
        "restreams": acc.restreams, "midstream_drops": acc.midstream_drops,
    }
    report = MetricsReport(R, Q, N, R_rej, S_eff, vhr, acc.wan_minutes, wan_fraction, red, y,
                           breakdown, acc.demanded_minutes, extra)
    report.check()
    return report


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return f"{v:.6g}"


def csv_row(report: MetricsReport, sweep_key: str = "", seed: int = 0) -> list[str]:
    r = report
    vals = [sweep_key, seed, r.R, r.Q, r.N_rej, r.R_rej, r.S_eff, r.VHR, r.wan_minutes,
            r.wan_fraction, r.server_load_reduction, r.y_wait_ms]
    vals += [r.source_breakdown.get(BREAKDOWN_COLUMNS[k], 0) for k in BREAKDOWN_COLUMNS]
    return [v if isinstance(v, str) else _fmt(v) for v in vals]


def emit_csv(rows: Iterable[tuple[str, int, MetricsReport]]) -> str:
    """CSV text: header plus one row per (sweep_key, seed, report)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for key, seed, rep in rows:
        w.writerow(csv_row(rep, key, seed))
    return buf.getvalue()


def parse_csv(text: str) -> list[tuple[str, int, MetricsReport]]:
    """Inverse of emit_csv (up to the 6-significant-digit rounding)."""
    out = []
    rd = csv.DictReader(io.StringIO(text))
    if rd.fieldnames != CSV_COLUMNS:
        raise ValueError(f"unexpected columns {rd.fieldnames}")
    for row in rd:
        breakdown = {col: int(row[col]) for col in BREAKDOWN_COLUMNS.values()}
        red = row["server_load_reduction"]
        rep = MetricsReport(
            R=int(row["R"]), Q=int(row["Q"]), N_rej=int(row["N_rej"]),
            R_rej=float(row["R_rej"]), S_eff=float(row["S_eff"]), VHR=float(row["VHR"]),
            wan_minutes=float(row["wan_minutes"]), wan_fraction=float(row["wan_fraction"]),
            server_load_reduction=float(red) if red else None,
            y_wait_ms=float(row["y_wait_ms"]), source_breakdown=breakdown)
        out.append((row["sweep_key"], int(row["seed"]), rep))
    return out


def summary_table(pairs: Sequence[tuple[str, MetricsReport]]) -> str:
    """Text block shaped like the usual results table: one column per labelled run set."""
    labels = [lab for lab, _ in pairs]
    width = max([12] + [len(lab) for lab in labels]) + 2
    lines = ["System parameter".ljust(34) + "".join(lab.rjust(width) for lab in labels)]

    def line(name, fn):
        lines.append(name.ljust(34) + "".join(fn(r).rjust(width) for _, r in pairs))

    line("Total requests (R)", lambda r: str(r.R))
    line("Served (Q)", lambda r: str(r.Q))
    line("Served from own LPSG", lambda r: f"{r.served_from_lpsg}({100 * r.lpsg_fraction:.0f}%)")
    line("Rejection ratio R_rej", lambda r: f"{r.R_rej:.3f}")
    line("Video hit ratio VHR", lambda r: f"{100 * r.VHR:.0f}%")
    line("MMS->TR bandwidth (of demand)", lambda r: f"{100 * r.wan_fraction:.0f}%")
    line("Mean waiting time y", lambda r: f"{r.y_wait_ms / 1000:.2f}s")
    line("MMS load reduction", lambda r: "-" if r.server_load_reduction is None
         else f"{100 * r.server_load_reduction:.0f}%")
    return "\n".join(lines) + "\n"


def mean_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Field-wise mean across seeds (counts rounded), for summary tables."""
    n = len(reports)
    if not n:
        raise ValueError("no reports")

    def avg(name):
        vals = [getattr(r, name) for r in reports]
        if any(v is None for v in vals):
            return None
        return sum(vals) / n

    breakdown = {k: round(sum(r.source_breakdown[k] for r in reports) / n)
                 for k in reports[0].source_breakdown}
    R = round(avg("R"))
    N = round(avg("N_rej"))
    return MetricsReport(R, R - N, N, avg("R_rej"), avg("S_eff"), avg("VHR"), avg("wan_minutes"),
                         avg("wan_fraction"), avg("server_load_reduction"), avg("y_wait_ms"),
                         breakdown, avg("demanded_minutes"))
