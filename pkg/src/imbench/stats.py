"""Cross-dataset method comparison: ranks, Friedman, Wilcoxon, Holm, CD diagram.

All tests are nonparametric and operate on a datasets x methods table of
mean scores. The chi-square tail behind the Friedman test is computed from
scratch via the regularized incomplete gamma function; Wilcoxon p-values are
exact (full sign-assignment enumeration via counting) for small samples and
normally approximated with tie-adjusted variance above the crossover.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

HOLM_ALPHA = 0.05
WILCOXON_EXACT_MAX_N = 20


@dataclass
class ScoreTable:
    """Datasets x methods grid of mean scores (one row per dataset)."""

    methods: list[str]
    datasets: list[str]
    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.shape != (len(self.datasets), len(self.methods)):
            raise ValueError("scores must be shaped (datasets, methods)")
        if np.any(~np.isfinite(self.scores)):
            raise ValueError("score table has missing or non-finite cells")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate method names")


@dataclass
class RankMatrix:
    """Per-dataset ranks (1 = best, average on ties) and per-method means."""

    methods: list[str]
    datasets: list[str]
    ranks: np.ndarray
    mean_ranks: np.ndarray = field(init=False)

    def __post_init__(self):
        self.ranks = np.asarray(self.ranks, dtype=float)
        k = len(self.methods)
        expected = k * (k + 1) / 2
        for i, row in enumerate(self.ranks):
            if abs(row.sum() - expected) > 1e-9:
                raise ValueError(f"rank row {i} sums to {row.sum()}, expected {expected}")
        self.mean_ranks = self.ranks.mean(axis=0)


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    p_value: float
    k: int
    n: int


@dataclass(frozen=True)
class WilcoxonResult:
    w_statistic: float
    w_plus: float
    w_minus: float
    p_value: float
    n: int
    exact: bool
    degenerate: bool = False


@dataclass(frozen=True)
class PairwiseResult:
    method_a: str
    method_b: str
    p_value: float
    significant: bool
    w_statistic: float = 0.0
    degenerate: bool = False


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ascending ranks starting at 1; tied values share the average rank."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    svals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and svals[j + 1] == svals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def mean_ranks(table: ScoreTable, higher_is_better: bool = True) -> RankMatrix:
    """Rank methods within each dataset (1 = best) and average over datasets."""
    ranks = np.empty_like(table.scores)
    for i, row in enumerate(table.scores):
        ranks[i] = _average_ranks(-row if higher_is_better else row)
    return RankMatrix(methods=list(table.methods), datasets=list(table.datasets), ranks=ranks)


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    n = 0
    while True:
        n += 1
        term *= x / (a + n)
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
        if n > 10000:
            raise RuntimeError("incomplete gamma series failed to converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, 10001):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise RuntimeError("incomplete gamma continued fraction failed to converge")


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise ValueError("shape parameter must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Chi-square upper-tail probability with df degrees of freedom."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    return regularized_gamma_q(df / 2.0, x / 2.0)


def friedman_test(ranks: RankMatrix) -> FriedmanResult:
    """Friedman chi-square over the rank matrix; null = all methods alike.

    chi2_F = [12N / (k(k+1))] * [sum_j Rbar_j^2 - k(k+1)^2 / 4], upper tail
    with k-1 degrees of freedom.
    """
    n, k = ranks.ranks.shape
    if n < 2 or k < 2:
        raise ValueError("friedman test needs >= 2 datasets and >= 2 methods")
    rbar = ranks.mean_ranks
    stat = (12.0 * n / (k * (k + 1))) * (float(np.sum(rbar**2)) - k * (k + 1) ** 2 / 4.0)
    stat = max(stat, 0.0)
    return FriedmanResult(statistic=stat, p_value=chi2_sf(stat, k - 1), k=k, n=n)


def _exact_signed_rank_p(doubled_ranks: np.ndarray, w_min_doubled: int) -> float:
    """Two-sided exact p over all 2^n sign assignments, by count convolution.

    Ranks arrive doubled so tie-averaged half ranks become integers. The
    distribution of W+ is symmetric, so the two-sided p is 2 * P(W+ <= w).
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    cdf = float(counts[: w_min_doubled + 1].sum())
    return min(1.0, 2.0 * cdf / 2.0 ** len(doubled_ranks))


def wilcoxon_signed_rank(x, y) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; |differences| get average ranks on ties;
    W = min(W+, W-). Exact enumeration p for n <= 20, else a normal
    approximation with continuity correction and tie-adjusted variance.
    All-zero differences are degenerate: p = 1.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    diffs = x - y
    diffs = diffs[diffs != 0]
    n = len(diffs)
    if n == 0:
        return WilcoxonResult(
            w_statistic=0.0, w_plus=0.0, w_minus=0.0, p_value=1.0, n=0, exact=True,
            degenerate=True,
        )
    ranks = _average_ranks(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w = min(w_plus, w_minus)
    if n <= WILCOXON_EXACT_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(int)
        p = _exact_signed_rank_p(doubled, int(round(2.0 * w)))
        return WilcoxonResult(w_statistic=w, w_plus=w_plus, w_minus=w_minus,
                              p_value=p, n=n, exact=True)
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_sizes = np.unique(np.abs(diffs), return_counts=True)
    var -= float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    sigma = math.sqrt(var)
    z = (w - mu + 0.5) / sigma
    p = min(1.0, math.erfc(-z / math.sqrt(2.0)))
    return WilcoxonResult(w_statistic=w, w_plus=w_plus, w_minus=w_minus,
                          p_value=p, n=n, exact=False)


def holm_correction(p_values, alpha: float = HOLM_ALPHA) -> np.ndarray:
    """Step-down Holm procedure; True = rejected (significant) at level alpha.

    Sorted ascending, hypothesis i (1-based) is rejected while
    p_(i) <= alpha / (m - i + 1); the first failure stops the sequence.
    """
    p_values = np.asarray(p_values, dtype=float)
    if p_values.ndim != 1:
        raise ValueError("p_values must be a vector")
    if np.any((p_values < 0) | (p_values > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p_values)
    flags = np.zeros(m, dtype=bool)
    order = np.argsort(p_values, kind="stable")
    for i, idx in enumerate(order):
        if p_values[idx] <= alpha / (m - i):
            flags[idx] = True
        else:
            break
    return flags


def pairwise_wilcoxon_holm(table: ScoreTable, alpha: float = HOLM_ALPHA) -> list[PairwiseResult]:
    """All method pairs tested on per-dataset score vectors, Holm-corrected."""
    k = len(table.methods)
    pairs = [(a, b) for a in range(k) for b in range(a + 1, k)]
    raw = [
        wilcoxon_signed_rank(table.scores[:, a], table.scores[:, b])
        for a, b in pairs
    ]
    flags = holm_correction([r.p_value for r in raw], alpha=alpha)
    return [
        PairwiseResult(
            method_a=table.methods[a],
            method_b=table.methods[b],
            p_value=res.p_value,
            significant=bool(flag),
            w_statistic=res.w_statistic,
            degenerate=res.degenerate,
        )
        for (a, b), res, flag in zip(pairs, raw, flags)
    ]


def _maximal_cliques(ordered_methods: list[str], pairwise: list[PairwiseResult]):
    """Maximal contiguous runs (in rank order) with no significant pair inside."""
    significant = {
        frozenset((p.method_a, p.method_b)) for p in pairwise if p.significant
    }
    k = len(ordered_methods)
    cliques = []
    last_end = 0
    for i in range(k):
        j = i
        while j + 1 < k and not any(
            frozenset((ordered_methods[a], ordered_methods[j + 1])) in significant
            for a in range(i, j + 1)
        ):
            j += 1
        if j > i and j + 1 > last_end:
            cliques.append((i, j))
            last_end = j + 1
    return cliques


def cd_diagram_svg(ranks: RankMatrix, pairwise: list[PairwiseResult]) -> str:
    """Critical-difference diagram as a self-contained SVG 1.1 document.

    A number line spans mean-rank positions 1..k; each method sits at its
    mean rank with its label anchored at that abscissa, alternating above and
    below the axis; thick bars connect maximal groups of methods with no
    Holm-significant pairwise difference. Output is deterministic.
    """
    k = len(ranks.methods)
    pair_methods = {m for p in pairwise for m in (p.method_a, p.method_b)}
    if not pair_methods.issubset(set(ranks.methods)):
        raise ValueError("pairwise results name methods absent from the rank matrix")
    width = 640.0
    margin = 70.0
    axis_y = 70.0
    span = width - 2 * margin

    def x_of(rank: float) -> float:
        if k == 1:
            return width / 2.0
        return margin + (rank - 1.0) / (k - 1.0) * span

    order = sorted(range(k), key=lambda j: (ranks.mean_ranks[j], ranks.methods[j]))
    ordered_methods = [ranks.methods[j] for j in order]
    cliques = _maximal_cliques(ordered_methods, pairwise)

    bar_y0 = axis_y + 10.0
    bar_step = 9.0
    height = max(150.0, bar_y0 + bar_step * max(len(cliques), 1) + 60.0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
        "<style>"
        "text { font-family: sans-serif; font-size: 12px; fill: #222; }"
        ".tick-label { font-size: 10px; }"
        ".axis, .tick, .connector { stroke: #222; stroke-width: 1; }"
        ".clique-bar { stroke: #222; stroke-width: 5; stroke-linecap: round; }"
        "</style>",
        f'<line class="axis" x1="{x_of(1):.4f}" y1="{axis_y:g}" '
        f'x2="{x_of(k):.4f}" y2="{axis_y:g}" />',
    ]
    for tick in range(1, k + 1):
        tx = x_of(tick)
        parts.append(
            f'<line class="tick" x1="{tx:.4f}" y1="{axis_y - 4:g}" '
            f'x2="{tx:.4f}" y2="{axis_y + 4:g}" />'
        )
        parts.append(
            f'<text class="tick-label" x="{tx:.4f}" y="{axis_y - 8:g}" '
            f'text-anchor="middle">{tick}</text>'
        )

    above_tiers = (44.0, 28.0)
    below_tiers = (104.0, 120.0)
    n_above = 0
    n_below = 0
    for pos, j in enumerate(order):
        mx = x_of(float(ranks.mean_ranks[j]))
        if pos % 2 == 0:
            label_y = above_tiers[n_above % len(above_tiers)]
            n_above += 1
            line_y2 = label_y + 4.0
        else:
            label_y = below_tiers[n_below % len(below_tiers)] + bar_step * max(
                len(cliques) - 1, 0
            )
            n_below += 1
            line_y2 = label_y - 12.0
        parts.append(
            f'<line class="connector" x1="{mx:.4f}" y1="{axis_y:g}" '
            f'x2="{mx:.4f}" y2="{line_y2:.4f}" />'
        )
        parts.append(
            f'<text class="method-label" x="{mx:.4f}" y="{label_y:.4f}" '
            f'text-anchor="middle">{escape(ranks.methods[j])} '
            f'({ranks.mean_ranks[j]:.3f})</text>'
        )

    rank_of = dict(zip(ranks.methods, ranks.mean_ranks))
    for b, (i, j) in enumerate(cliques):
        y = bar_y0 + b * bar_step
        x1 = x_of(float(rank_of[ordered_methods[i]]))
        x2 = x_of(float(rank_of[ordered_methods[j]]))
        parts.append(
            f'<line class="clique-bar" x1="{x1:.4f}" y1="{y:.4f}" '
            f'x2="{x2:.4f}" y2="{y:.4f}" />'
        )
    parts.append("</svg>")
    return "\n".join(parts)
