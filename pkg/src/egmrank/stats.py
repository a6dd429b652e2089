"""Per-beat sigma_2 tables, rank-sum tests and box-plot summaries."""

from __future__ import annotations

import csv
import math
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sps

from .svdcore import SingularProfile

RHYTHMS = ("SR", "AF")
TABLE_FIELDS = ("recording", "location", "rhythm", "beat", "sigma2", "profile")
EXACT_MAX_N = 20


@dataclass(frozen=True)
class BeatFeature:
    recording: str
    location: str
    rhythm: str
    beat: int
    sigma2: float
    profile: tuple[float, ...] = ()

    def __post_init__(self):
        if self.rhythm not in RHYTHMS:
            raise ValueError(f"rhythm must be one of {RHYTHMS}, got {self.rhythm!r}")
        if not self.recording or not self.location:
            raise ValueError("recording and location labels are required")
        if not 0.0 <= self.sigma2 <= 1.0:
            raise ValueError(f"sigma2 must lie in [0, 1], got {self.sigma2}")


@dataclass
class BeatFeatureTable:
    rows: list[BeatFeature] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def groups(self, keys: Sequence[str] = ("location", "rhythm")) -> dict[tuple, list[float]]:
        for k in keys:
            if k not in ("recording", "location", "rhythm"):
                raise ValueError(f"cannot group by {k!r}")
        out: dict[tuple, list[float]] = defaultdict(list)
        for r in self.rows:
            out[tuple(getattr(r, k) for k in keys)].append(r.sigma2)
        return dict(sorted(out.items()))

    def group_means(self, keys: Sequence[str] = ("location", "rhythm")) -> dict[tuple, float]:
        return {k: float(np.mean(v)) for k, v in self.groups(keys).items()}


def aggregate(profiles: Iterable) -> BeatFeatureTable:
    """One table row per labelled profile.

    Each item is ``(labels, profile)`` where ``labels`` maps ``recording``,
    ``location``, ``rhythm`` and optionally ``beat``; the beat index defaults
    to the item's position within its recording.
    """
    table = BeatFeatureTable()
    seen: dict[str, int] = defaultdict(int)
    for labels, prof in profiles:
        missing = {"recording", "location", "rhythm"} - set(labels)
        if missing:
            raise ValueError(f"profile labels missing {sorted(missing)}")
        rec = str(labels["recording"])
        beat = int(labels.get("beat", seen[rec]))
        seen[rec] += 1
        if isinstance(prof, SingularProfile):
            norm = tuple(float(v) for v in prof.normalized)
            s2 = prof.sigma2
        else:
            norm = tuple(float(v) for v in prof)
            s2 = norm[1] if len(norm) > 1 else 0.0
        table.rows.append(BeatFeature(rec, str(labels["location"]), str(labels["rhythm"]),
                                      beat, float(s2), norm))
    return table


def write_table(table: BeatFeatureTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_FIELDS)
        for r in table.rows:
            w.writerow([r.recording, r.location, r.rhythm, r.beat, repr(r.sigma2),
                        ";".join(repr(v) for v in r.profile)])


def read_table(path) -> BeatFeatureTable:
    table = BeatFeatureTable()
    with open(path, newline="") as fh:
        rdr = csv.reader(fh)
        header = next(rdr, None)
        if header is None or tuple(header[:5]) != TABLE_FIELDS[:5]:
            raise ValueError(f"{path}:1: expected header {','.join(TABLE_FIELDS)}")
        for lineno, rec in enumerate(rdr, start=2):
            if not rec or rec[0].startswith("#"):
                continue
            try:
                prof = tuple(float(v) for v in rec[5].split(";") if v) if len(rec) > 5 else ()
                table.rows.append(BeatFeature(rec[0], rec[1], rec[2], int(rec[3]),
                                              float(rec[4]), prof))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return table


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankSumResult:
    u: float
    p: float
    method: str


def _u_statistic(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    ranks = sps.rankdata(np.concatenate([a, b]))
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return float(u), ranks


def _exact_p(ranks: np.ndarray, n_a: int, u: float) -> float:
    """Two-sided permutation p from the exact distribution of the rank sum.

    Midranks are doubled to integers and the number of size-``n_a`` subsets
    with each rank sum is counted by dynamic programming.
    """
    doubled = np.rint(2 * ranks).astype(int)
    total = int(doubled.sum())
    counts = [[0] * (total + 1) for _ in range(n_a + 1)]
    counts[0][0] = 1
    for r in doubled:
        for k in range(n_a, 0, -1):
            prev, cur = counts[k - 1], counts[k]
            for s in range(total - r, -1, -1):
                if prev[s]:
                    cur[s + r] += prev[s]
    dist = counts[n_a]
    n_b = ranks.size - n_a
    mean = n_a * n_b / 2.0
    obs = abs(u - mean)
    hits = 0
    for s, c in enumerate(dist):
        if c and abs(s / 2.0 - n_a * (n_a + 1) / 2.0 - mean) >= obs - 1e-9:
            hits += c
    return hits / math.comb(ranks.size, n_a)


def rank_sum_test(group_a, group_b, method: str = "auto") -> RankSumResult:
    """Mann-Whitney U of ``group_a`` against ``group_b`` with a two-sided p-value.

    ``U`` counts pairs with ``a > b`` (ties count one half). The p-value is
    the probability, under random relabelling, of ``|U - nA nB / 2|`` at
    least as large as observed: exact for combined size <= 20, otherwise a
    normal approximation with tie and continuity corrections.
    """
    a = np.asarray(group_a, dtype=float).ravel()
    b = np.asarray(group_b, dtype=float).ravel()
    if a.size < 3 or b.size < 3:
        raise ValueError(f"each group needs >= 3 values, got {a.size} and {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("values must be finite")
    u, ranks = _u_statistic(a, b)
    if method == "auto":
        method = "exact" if a.size + b.size <= EXACT_MAX_N else "normal"
    allv = np.concatenate([a, b])
    if np.all(allv == allv[0]):
        return RankSumResult(u, 1.0, method)
    if method == "exact":
        return RankSumResult(u, min(1.0, _exact_p(ranks, a.size, u)), method)
    if method != "normal":
        raise ValueError(f"unknown method {method!r}")
    n_a, n_b = a.size, b.size
    n = n_a + n_b
    _, ties = np.unique(allv, return_counts=True)
    var = n_a * n_b / 12.0 * ((n + 1) - float(np.sum(ties ** 3 - ties)) / (n * (n - 1)))
    if var <= 0:
        return RankSumResult(u, 1.0, method)
    z = max(abs(u - n_a * n_b / 2.0) - 0.5, 0.0) / math.sqrt(var)
    p = math.erfc(z / math.sqrt(2.0))
    return RankSumResult(u, min(1.0, max(p, sys.float_info.min)), method)


# ---------------------------------------------------------------------------
# box plots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxSummary:
    min: float
    q25: float
    median: float
    q75: float
    max: float
    outliers: tuple[float, ...]
    whisker_lo: float
    whisker_hi: float
    n: int

    def as_tuple(self):
        return self.min, self.q25, self.median, self.q75, self.max, list(self.outliers)


def quartiles(values) -> tuple[float, float, float]:
    """Exclusive-method quartiles: order statistic at ``p (n + 1)``, linearly interpolated."""
    x = np.asarray(values, dtype=float)
    q = np.quantile(x, [0.25, 0.5, 0.75], method="weibull")
    return float(q[0]), float(q[1]), float(q[2])


def boxplot_summary(values) -> BoxSummary:
    """Five-number summary with 1.5 IQR Tukey whiskers."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("box plot needs at least one value")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    q25, med, q75 = quartiles(x)
    iqr = q75 - q25
    lo_fence, hi_fence = q25 - 1.5 * iqr, q75 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = tuple(float(v) for v in x[(x < lo_fence) | (x > hi_fence)])
    return BoxSummary(float(x[0]), q25, med, q75, float(x[-1]), outliers,
                      float(inside[0]), float(inside[-1]), int(x.size))


def suggested_thresholds(table: BeatFeatureTable) -> dict[str, float]:
    """Per location, the midpoint of the SR and AF mean sigma_2 (locations with both rhythms)."""
    means = table.group_means(("location", "rhythm"))
    out = {}
    for loc in sorted({k[0] for k in means}):
        if (loc, "SR") in means and (loc, "AF") in means:
            out[loc] = 0.5 * (means[(loc, "SR")] + means[(loc, "AF")])
    return out
