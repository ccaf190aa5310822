"""Joint-distribution analysis of two grade variables plus the nonparametric
test pipeline used to compare labelling strategies.

Covers: contingency tables and their normalised joint distributions, the
Kullback-Leibler divergence (natural log) of a predicted joint distribution
from the true one, residual matrices P - Q, the cell-wise MAE between two
tables, Kruskal-Wallis with tie correction, the Wilcoxon signed-rank test
(exact by sign-pattern counting up to n = 25, normal approximation with tie
correction beyond), Holm-corrected pairwise Wilcoxon comparisons, and a
balanced two-way ANOVA with F-test p-values.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .specfun import chi2_cdf, f_cdf, normal_cdf

DEFAULT_KLD_EPSILON = 1e-6
EXACT_WILCOXON_LIMIT = 25


@dataclass(frozen=True)
class ContingencyTable:
    """Joint counts of two grade variables (row variable x column variable)."""

    counts: np.ndarray
    row_axis: str = "A"
    col_axis: str = "B"

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=int)
        if counts.ndim != 2 or counts.shape[0] < 2 or counts.shape[1] < 2:
            raise ValueError("contingency table must be at least 2 x 2")
        if (counts < 0).any():
            raise ValueError("contingency table entries must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path: str) -> None:
        """Header cell is 'row_axis\\col_axis'; column grades name the columns."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"{self.row_axis}\\{self.col_axis}"] + list(range(self.shape[1])))
            for i, row in enumerate(self.counts):
                writer.writerow([i] + [int(v) for v in row])

    @classmethod
    def from_csv(cls, path: str) -> "ContingencyTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or "\\" not in header[0]:
                raise ValueError(f"{path}: expected a 'row\\col' header cell")
            row_axis, col_axis = header[0].split("\\", 1)
            rows = [[int(v) for v in row[1:]] for row in reader if row]
        return cls(np.asarray(rows, dtype=int), row_axis=row_axis, col_axis=col_axis)


@dataclass(frozen=True)
class JointDistribution:
    """A normalised contingency table: non-negative cells summing to 1."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ValueError("joint distribution must be a matrix")
        if (probs < -1e-12).any():
            raise ValueError("joint distribution entries must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("joint distribution must sum to 1 within 1e-9")
        object.__setattr__(self, "probs", probs)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape


@dataclass(frozen=True)
class ResidualMatrix:
    """Cell-wise difference P - Q between two joint distributions."""

    residuals: np.ndarray

    def __post_init__(self) -> None:
        residuals = np.asarray(self.residuals, dtype=float)
        if abs(residuals.sum()) > 1e-9:
            raise ValueError("residuals of two distributions must sum to 0 within 1e-9")
        object.__setattr__(self, "residuals", residuals)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str  # kruskal_wallis | wilcoxon_exact | wilcoxon_normal | anova_f
    n: tuple
    degenerate: bool = False

    __test__ = False  # keep pytest from collecting this as a test class

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "n": list(self.n),
            "degenerate": self.degenerate,
        }


def normalise(table: ContingencyTable) -> JointDistribution:
    """Counts divided by the grand total."""
    total = table.total
    if total == 0:
        raise ValueError("cannot normalise an empty contingency table")
    return JointDistribution(table.counts / total)


def _check_shapes(p: JointDistribution, q: JointDistribution) -> None:
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")


def kld(p: JointDistribution, q: JointDistribution, epsilon: float = DEFAULT_KLD_EPSILON) -> float:
    """KL divergence D(P || Q) in nats, with additive smoothing on Q.

    Q is replaced by (Q + epsilon) / (1 + epsilon * n_cells) so that zero
    predicted cells cannot blow up the sum; with epsilon = 0 a zero Q cell
    under positive P mass yields +inf rather than an exception. Cells with
    P = 0 contribute nothing.
    """
    _check_shapes(p, q)
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    pp = p.probs
    qq = q.probs
    if epsilon > 0:
        qq = (qq + epsilon) / (1.0 + epsilon * qq.size)
    mask = pp > 0
    if (qq[mask] == 0).any():
        return math.inf
    return float((pp[mask] * np.log(pp[mask] / qq[mask])).sum())


def residuals(p: JointDistribution, q: JointDistribution) -> ResidualMatrix:
    """R = P - Q; positive cells mark mass the predictions under-cover."""
    _check_shapes(p, q)
    return ResidualMatrix(p.probs - q.probs)


def table_mae(p: JointDistribution, q: JointDistribution) -> float:
    """Mean absolute cell-wise difference between two joint distributions."""
    _check_shapes(p, q)
    return float(np.abs(p.probs - q.probs).mean())


def table_mae_counts(a: ContingencyTable, b: ContingencyTable) -> float:
    """Count-based variant of table_mae, for tables with comparable totals."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a.counts - b.counts).mean())


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values sharing the average of their rank range."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.shape[0], dtype=float)
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_counts(values: np.ndarray) -> np.ndarray:
    _, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    return counts


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    """Kruskal-Wallis H test with tie correction; p from the chi-squared CDF."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ValueError("kruskal_wallis needs at least 2 groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("kruskal_wallis groups must be non-empty")
    sizes = tuple(int(g.size) for g in groups)
    pooled = np.concatenate(groups)
    n = pooled.size
    ranks = _midranks(pooled)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + g.size]
        h += r.sum() ** 2 / g.size
        start += g.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    ties = _tie_counts(pooled)
    correction = 1.0 - float(((ties**3 - ties).sum()) / (n**3 - n))
    if correction <= 0:  # every observation identical
        return TestResult(0.0, 1.0, "kruskal_wallis", sizes, degenerate=True)
    h /= correction
    p = 1.0 - chi2_cdf(h, len(groups) - 1)
    return TestResult(float(h), float(min(max(p, 0.0), 1.0)), "kruskal_wallis", sizes)


def _signed_rank_statistic(diffs: np.ndarray) -> tuple[float, np.ndarray]:
    ranks = _midranks(np.abs(diffs))
    w_pos = float(ranks[diffs > 0].sum())
    return w_pos, ranks


def _exact_signed_rank_p(w_pos: float, ranks: np.ndarray) -> float:
    """Two-sided p by counting sign assignments; midranks doubled to integers."""
    doubled = np.rint(2.0 * ranks).astype(int)
    total = int(doubled.sum())
    # counts[s] = number of sign patterns with doubled positive-rank sum s
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    w2 = int(round(2.0 * w_pos))
    n_patterns = 2.0 ** len(ranks)
    p_le = counts[: w2 + 1].sum() / n_patterns
    p_ge = counts[w2:].sum() / n_patterns
    return min(1.0, 2.0 * min(p_le, p_ge))


def _normal_signed_rank_p(w_pos: float, ranks: np.ndarray, diffs: np.ndarray) -> float:
    n = len(ranks)
    mu = n * (n + 1) / 4.0
    ties = _tie_counts(np.abs(diffs))
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float((ties**3 - ties).sum()) / 48.0
    if var <= 0:
        return 1.0
    z = (w_pos - mu) / math.sqrt(var)
    return min(1.0, 2.0 * (1.0 - normal_cdf(abs(z))))


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Two-sided paired Wilcoxon signed-rank test.

    Zero differences are dropped. With at most 25 effective pairs the p-value
    is exact over all sign assignments (enough for 20-seed comparisons);
    larger samples use the tie-corrected normal approximation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("wilcoxon_signed_rank requires paired vectors of equal length")
    diffs = x - y
    diffs = diffs[diffs != 0]
    n = diffs.size
    if n == 0:
        warnings.warn("all paired differences are zero; Wilcoxon test is degenerate")
        return TestResult(0.0, 1.0, "wilcoxon_exact", (0,), degenerate=True)
    if n < 5:
        raise ValueError(f"need at least 5 non-zero paired differences, got {n}")
    w_pos, ranks = _signed_rank_statistic(diffs)
    if n <= EXACT_WILCOXON_LIMIT:
        p = _exact_signed_rank_p(w_pos, ranks)
        method = "wilcoxon_exact"
    else:
        p = _normal_signed_rank_p(w_pos, ranks, diffs)
        method = "wilcoxon_normal"
    return TestResult(w_pos, float(p), method, (int(n),))


def pairwise_wilcoxon_holm(samples: dict[str, Sequence[float]]) -> list[dict]:
    """All pairwise Wilcoxon tests with Holm-adjusted p-values.

    Substitution note: this replaces Tukey HSD grouping as the post-hoc
    multiple-comparison step; the adjusted p-values are Holm step-down.
    """
    names = list(samples)
    if len(names) < 2:
        raise ValueError("need at least 2 named samples for pairwise comparisons")
    results = []
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            test = wilcoxon_signed_rank(samples[a], samples[b])
            results.append({"pair": (a, b), "test": test})
    order = sorted(range(len(results)), key=lambda i: results[i]["test"].p_value)
    m = len(results)
    running = 0.0
    for rank, idx in enumerate(order):
        adjusted = (m - rank) * results[idx]["test"].p_value
        running = max(running, min(1.0, adjusted))
        results[idx]["p_holm"] = running
    return results


@dataclass(frozen=True)
class AnovaResult:
    """Balanced two-way ANOVA decomposition with F tests per factor."""

    ss: dict
    df: dict
    f: dict
    p: dict
    tests: dict = field(default_factory=dict)
    zero_variance: bool = False

    def to_dict(self) -> dict:
        return {
            "ss": self.ss,
            "df": self.df,
            "f": self.f,
            "p": self.p,
            "zero_variance": self.zero_variance,
        }


def two_way_anova(
    values: Sequence[float], factor_a: Sequence, factor_b: Sequence
) -> AnovaResult:
    """Two-way ANOVA with interaction for a balanced design.

    Factor A is the model/strategy factor, factor B the task factor. The
    design must be balanced (equal replicates per cell, at least 2). When all
    values are identical the F statistics are undefined and flagged instead
    of being reported as numbers.
    """
    values = np.asarray(values, dtype=float)
    factor_a = np.asarray(factor_a)
    factor_b = np.asarray(factor_b)
    if not (values.shape == factor_a.shape == factor_b.shape) or values.ndim != 1:
        raise ValueError("values and factor labels must be equal-length vectors")
    levels_a = np.unique(factor_a)
    levels_b = np.unique(factor_b)
    a, b = len(levels_a), len(levels_b)
    if a < 2 or b < 2:
        raise ValueError("each factor needs at least 2 levels")
    cells = {}
    for la in levels_a:
        for lb in levels_b:
            cell = values[(factor_a == la) & (factor_b == lb)]
            cells[(la, lb)] = cell
    sizes = {key: len(v) for key, v in cells.items()}
    r = next(iter(sizes.values()))
    if any(s != r for s in sizes.values()):
        raise ValueError(f"unbalanced design: cell sizes {sorted(set(sizes.values()))}")
    if r < 2:
        raise ValueError("balanced two-way ANOVA needs at least 2 replicates per cell")

    grand = values.mean()
    mean_a = {la: values[factor_a == la].mean() for la in levels_a}
    mean_b = {lb: values[factor_b == lb].mean() for lb in levels_b}
    mean_ab = {key: cell.mean() for key, cell in cells.items()}

    ss_a = r * b * sum((mean_a[la] - grand) ** 2 for la in levels_a)
    ss_b = r * a * sum((mean_b[lb] - grand) ** 2 for lb in levels_b)
    ss_ab = r * sum(
        (mean_ab[(la, lb)] - mean_a[la] - mean_b[lb] + grand) ** 2
        for la in levels_a
        for lb in levels_b
    )
    ss_res = sum(
        float(((cells[(la, lb)] - mean_ab[(la, lb)]) ** 2).sum())
        for la in levels_a
        for lb in levels_b
    )
    df = {
        "model": a - 1,
        "task": b - 1,
        "interaction": (a - 1) * (b - 1),
        "residual": a * b * (r - 1),
    }
    ss = {"model": float(ss_a), "task": float(ss_b), "interaction": float(ss_ab), "residual": float(ss_res)}

    ms_res = ss_res / df["residual"]
    if ms_res == 0:
        return AnovaResult(ss, df, {}, {}, {}, zero_variance=True)

    f_stats, p_vals, tests = {}, {}, {}
    for factor in ("model", "task", "interaction"):
        f_val = (ss[factor] / df[factor]) / ms_res
        p_val = 1.0 - f_cdf(f_val, df[factor], df["residual"])
        f_stats[factor] = float(f_val)
        p_vals[factor] = float(min(max(p_val, 0.0), 1.0))
        tests[factor] = TestResult(
            float(f_val), p_vals[factor], "anova_f", (int(values.size),)
        )
    return AnovaResult(ss, df, f_stats, p_vals, tests)
