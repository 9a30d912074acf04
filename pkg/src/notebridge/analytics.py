"""Usage summaries and nonparametric paired statistics.

``summarize_usage`` folds the server's usage event log into per-pair
counts (notes written, note-taking emojis, chit-chat emojis). The
statistics half provides medians, interquartile ranges with linear
interpolation at positions p(n-1)+1, and a two-sided Wilcoxon
signed-rank test: zero differences dropped, midranks for ties, exact
tail probabilities for small samples and a tie-corrected,
continuity-corrected normal approximation above that.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import EmptySample, NoNonzeroDifferences, UnmappedUser
from .storage import UsageEvent, UsageKind

EXACT_LIMIT = 25  # largest effective n for which the exact tail is computed


@dataclass(frozen=True)
class PairUsageSummary:
    pair_id: str
    notes_written: int
    emojis_total: int
    nt_used: int
    cc_used: int


def summarize_usage(events: Iterable[UsageEvent],
                    pair_map: Mapping[str, str]) -> list[PairUsageSummary]:
    """Per-pair usage counts, rows sorted by pair id.

    Resolution events record follow-up on an existing emoji, not a new
    use, so they are excluded from every count.
    """
    notes: dict[str, int] = {}
    nt: dict[str, int] = {}
    cc: dict[str, int] = {}
    pairs: set[str] = set()
    for ev in events:
        pair = pair_map.get(ev.user_id)
        if pair is None:
            raise UnmappedUser(f"user {ev.user_id!r} is not assigned to a pair")
        pairs.add(pair)
        if ev.kind is UsageKind.NOTE_CREATED:
            notes[pair] = notes.get(pair, 0) + 1
        elif ev.kind is UsageKind.NT_EMOJI_INSERTED:
            nt[pair] = nt.get(pair, 0) + 1
        elif ev.kind is UsageKind.CC_EMOJI_SENT:
            cc[pair] = cc.get(pair, 0) + 1
    return [
        PairUsageSummary(pair, notes.get(pair, 0),
                         nt.get(pair, 0) + cc.get(pair, 0),
                         nt.get(pair, 0), cc.get(pair, 0))
        for pair in sorted(pairs)
    ]


def median(values: Sequence[float]) -> float:
    if not values:
        raise EmptySample("median of an empty sample")
    s = sorted(values)
    n = len(s)
    mid = n // 2
    if n % 2:
        return float(s[mid])
    return (s[mid - 1] + s[mid]) / 2


def _quartile(sorted_values: Sequence[float], p: float) -> float:
    # 1-based position h = p(n-1)+1, linear interpolation between floors
    n = len(sorted_values)
    h = p * (n - 1) + 1
    lo = math.floor(h)
    frac = h - lo
    if lo >= n:
        return float(sorted_values[-1])
    base = sorted_values[lo - 1]
    return base + frac * (sorted_values[lo] - base) if frac else float(base)


def iqr(values: Sequence[float]) -> float:
    if not values:
        raise EmptySample("iqr of an empty sample")
    s = sorted(values)
    return _quartile(s, 0.75) - _quartile(s, 0.25)


@dataclass(frozen=True)
class PairedSample:
    pre: tuple[float, ...]
    post: tuple[float, ...]

    def __post_init__(self):
        if len(self.pre) != len(self.post):
            raise EmptySample("pre and post must have equal length")


class WilcoxonMethod(Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal_approx"


@dataclass(frozen=True)
class WilcoxonResult:
    n_effective: int
    w_plus: float
    p_two_sided: float
    method: WilcoxonMethod


def _midranks(abs_diffs: Sequence[float]) -> list[float]:
    order = sorted(range(len(abs_diffs)), key=lambda i: abs_diffs[i])
    ranks = [0.0] * len(abs_diffs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and abs_diffs[order[j + 1]] == abs_diffs[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def _exact_two_sided(ranks: Sequence[float], w_plus: float) -> float:
    """Two-sided tail of W+ over all 2^n equally likely sign assignments
    of the observed rank multiset: 2 * min(P(W+ <= w), P(W+ >= w)).

    Computed by convolving the per-rank {0, rank} contributions, which
    counts exactly the same assignments as direct enumeration. Ranks are
    doubled first so midranks stay integral.
    """
    doubled = [round(2 * r) for r in ranks]
    total = sum(doubled)
    counts = [0] * (total + 1)
    counts[0] = 1
    for d in doubled:
        for v in range(total, d - 1, -1):
            if counts[v - d]:
                counts[v] += counts[v - d]
    denom = 2 ** len(ranks)
    w2 = round(2 * w_plus)
    p_le = sum(counts[: w2 + 1]) / denom
    p_ge = sum(counts[w2:]) / denom
    return min(1.0, 2 * min(p_le, p_ge))


def _normal_two_sided(ranks: Sequence[float], w_plus: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4
    var = n * (n + 1) * (2 * n + 1) / 24
    # tie correction: subtract sum(t^3 - t)/48 over groups of tied ranks
    groups: dict[float, int] = {}
    for r in ranks:
        groups[r] = groups.get(r, 0) + 1
    var -= sum(t**3 - t for t in groups.values()) / 48
    if var <= 0:
        return 1.0
    d = w_plus - mean
    cc = 0.5 if d > 0 else -0.5 if d < 0 else 0.0
    z = (d - cc) / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2)))


def wilcoxon_signed_rank(sample: PairedSample) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test of post vs pre."""
    diffs = [post - pre for pre, post in zip(sample.pre, sample.post)]
    nonzero = [d for d in diffs if d != 0]
    if not nonzero:
        raise NoNonzeroDifferences("all paired differences are zero")
    ranks = _midranks([abs(d) for d in nonzero])
    w_plus = sum(r for d, r in zip(nonzero, ranks) if d > 0)
    n = len(nonzero)
    if n <= EXACT_LIMIT:
        p = _exact_two_sided(ranks, w_plus)
        method = WilcoxonMethod.EXACT
    else:
        p = _normal_two_sided(ranks, w_plus)
        method = WilcoxonMethod.NORMAL_APPROX
    return WilcoxonResult(n, w_plus, p, method)


# -- file-level entry points used by the CLI --


@dataclass(frozen=True)
class PairedItemStats:
    item: str
    n: int
    pre_median: float
    pre_iqr: float
    post_median: float
    post_iqr: float
    p_two_sided: float | None  # None when all differences are zero


def read_paired_csv(path) -> dict[str, PairedSample]:
    """Read a paired-responses CSV with header ``item,pre,post`` into one
    PairedSample per item, preserving row order within items."""
    pre: dict[str, list[float]] = {}
    post: dict[str, list[float]] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            item = row["item"]
            if item not in pre:
                pre[item] = []
                post[item] = []
                order.append(item)
            pre[item].append(float(row["pre"]))
            post[item].append(float(row["post"]))
    return {item: PairedSample(tuple(pre[item]), tuple(post[item]))
            for item in order}


def paired_item_stats(samples: Mapping[str, PairedSample]) -> list[PairedItemStats]:
    out = []
    for item, sample in samples.items():
        try:
            p = wilcoxon_signed_rank(sample).p_two_sided
        except NoNonzeroDifferences:
            p = None
        out.append(PairedItemStats(
            item, len(sample.pre),
            median(sample.pre), iqr(sample.pre),
            median(sample.post), iqr(sample.post), p))
    return out
