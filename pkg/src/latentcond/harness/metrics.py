"""Per-run metrics and the frozen v1 CSV layout.

Each (method, condition, seed) run contributes one row.  Aggregate rows use
``seed="median"``: per condition they hold the median over seeds; the
``condition="ALL"`` row holds the median over seeds of each seed's summary
across conditions (mean for avg_prob, final_energy, diversity and wall_ms;
median for steps_to_threshold, which may be infinite).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from latentcond.errors import ShapeError
from latentcond.sampler import steps_to_threshold

CSV_VERSION_LINE = "# metrics v1"
COLUMNS = ("method", "condition", "seed", "avg_prob", "final_energy", "steps_to_threshold", "diversity", "wall_ms")
METRICS = COLUMNS[3:]


@dataclass(frozen=True, eq=False)
class RunRecord:
    """Raw outcome of one sampling run: decoded samples (n, d_x) and chain energies (steps+1, n)."""

    method: str
    condition: int
    seed: int
    samples: np.ndarray
    energies: np.ndarray
    wall_ms: float | None = None


@dataclass(frozen=True)
class MetricsRow:
    method: str
    condition: int | str
    seed: int | str
    avg_prob: float
    final_energy: float
    steps_to_threshold: float
    diversity: float
    wall_ms: float | None = None

    def cells(self) -> list[str]:
        vals = [self.avg_prob, self.final_energy, self.steps_to_threshold, self.diversity]
        wall = "" if self.wall_ms is None else fmt(self.wall_ms)
        return [self.method, str(self.condition), str(self.seed)] + [fmt(v) for v in vals] + [wall]


def fmt(v: float) -> str:
    """Shortest round-tripping text for a float (``inf`` for infinity)."""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def mean_pairwise_distance(x) -> float:
    """Mean Euclidean distance over unordered pairs; 0 for fewer than two points."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected (n, d) samples, got {x.shape}")
    n = len(x)
    if n < 2:
        return 0.0
    sq = (x * x).sum(1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0.0)
    iu = np.triu_indices(n, 1)
    return float(np.sqrt(d2[iu]).mean())


def intended_class_prob(classifier, samples, labels) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.broadcast_to(np.asarray(labels), (len(samples),))
    p = classifier(samples)
    return p[np.arange(len(samples)), labels]


def run_metrics(rec: RunRecord, classifier, tau: float) -> MetricsRow:
    e = np.asarray(rec.energies, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] != len(rec.samples):
        raise ShapeError(f"energies {e.shape} do not align with {len(rec.samples)} samples")
    return MetricsRow(
        rec.method, rec.condition, rec.seed,
        avg_prob=float(intended_class_prob(classifier, rec.samples, rec.condition).mean()),
        final_energy=float(e[-1].mean()),
        steps_to_threshold=float(np.median(steps_to_threshold(e, tau))),
        diversity=mean_pairwise_distance(rec.samples),
        wall_ms=rec.wall_ms,
    )


def _median(vals):
    return float(np.median(vals))


def aggregate(rows: list[MetricsRow]) -> list[MetricsRow]:
    """Aggregate rows for each method, in first-seen method order."""
    out = []
    methods = list(dict.fromkeys(r.method for r in rows))
    for m in methods:
        mine = [r for r in rows if r.method == m]
        conds = sorted({r.condition for r in mine})
        seeds = sorted({r.seed for r in mine})
        walls = all(r.wall_ms is not None for r in mine)
        for c in conds:
            sel = [r for r in mine if r.condition == c]
            vals = {k: _median([getattr(r, k) for r in sel]) for k in METRICS[:-1]}
            wall = _median([r.wall_ms for r in sel]) if walls else None
            out.append(MetricsRow(m, c, "median", **vals, wall_ms=wall))
        per_seed = []
        for s in seeds:
            sel = [r for r in mine if r.seed == s]
            summary = {k: float(np.mean([getattr(r, k) for r in sel])) for k in ("avg_prob", "final_energy", "diversity")}
            summary["steps_to_threshold"] = _median([r.steps_to_threshold for r in sel])
            summary["wall_ms"] = float(np.mean([r.wall_ms for r in sel])) if walls else None
            per_seed.append(summary)
        vals = {k: _median([p[k] for p in per_seed]) for k in METRICS[:-1]}
        wall = _median([p["wall_ms"] for p in per_seed]) if walls else None
        out.append(MetricsRow(m, "ALL", "median", **vals, wall_ms=wall))
    return out


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple
    tau: float

    @property
    def aggregates(self) -> list[MetricsRow]:
        return aggregate(list(self.rows))

    def summary(self, method: str, condition="ALL") -> MetricsRow:
        for r in self.aggregates:
            if r.method == method and r.condition == condition:
                return r
        raise KeyError((method, condition))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_VERSION_LINE + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in list(self.rows) + self.aggregates:
            w.writerow(r.cells())
        return buf.getvalue()


def compute_metrics(records, classifier, tau: float = 0.35) -> MetricsReport:
    """One row per run record, sorted by (method order, condition, seed)."""
    records = list(records)
    order = {m: i for i, m in enumerate(dict.fromkeys(r.method for r in records))}
    records.sort(key=lambda r: (order[r.method], r.condition, r.seed))
    return MetricsReport(tuple(run_metrics(r, classifier, tau) for r in records), tau)


def _parse(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


def read_metrics(text: str) -> list[dict]:
    """Parse metrics.csv text into dicts (numbers converted, blanks as None)."""
    lines = text.splitlines()
    if not lines or lines[0] != CSV_VERSION_LINE:
        raise ValueError("missing metrics v1 header line")
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    return [{k: (v if k == "method" else _parse(v)) for k, v in row.items()} for row in reader]
