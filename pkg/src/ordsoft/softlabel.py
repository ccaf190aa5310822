"""Unimodal soft-target construction.

Each strategy produces, for true grade k, a probability vector peaked at k
that decays with ordinal distance; the final supervision row blends it with
the one-hot label:

    row_k[j] = (1 - eta) * 1{j == k} + eta * soft_k[j]

Strategies: ``triangular`` (fixed adjacent-class mass), ``binomial``
(Binomial(J-1, k/(J-1)) pmf), ``exponential`` (softmax of -|j-k|^p), ``beta``
(cdf differences of a Beta density over the J equal segments of [0, 1], mode
at the class-segment midpoint), plus the ``nominal`` one-hot baseline and a
``nominal_smoothed`` uniform-blend ablation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import LabelSpace, ROW_SUM_TOL
from .specfun import binom_coef, reg_inc_beta

ORDINAL_STRATEGIES = ("triangular", "binomial", "beta", "exponential")
STRATEGIES = ("nominal", "nominal_smoothed") + ORDINAL_STRATEGIES

_UNIMODAL_TOL = 1e-12


@dataclass(frozen=True)
class SmoothingParams:
    """Per-strategy smoothing parameters; fields unused by a strategy stay None.

    ``eta`` is the blend weight between the one-hot label and the unimodal
    mass (the nominal_smoothed ablation reuses it as its uniform weight).
    """

    eta: float = 1.0
    alpha: Optional[float] = None  # triangular adjacent-class probability
    p: Optional[float] = None  # exponential decay exponent
    concentration: Optional[float] = None  # beta concentration

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.alpha is not None and not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if self.p is not None and self.p <= 0:
            raise ValueError(f"p must be positive, got {self.p}")
        if self.concentration is not None and self.concentration <= 0:
            raise ValueError(f"concentration must be positive, got {self.concentration}")

    def to_dict(self) -> dict:
        out = {"eta": self.eta}
        for name in ("alpha", "p", "concentration"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


def _check_grade(n_classes: int, k: int) -> None:
    if n_classes < 2:
        raise ValueError(f"need at least 2 grades, got {n_classes}")
    if not 0 <= k < n_classes:
        raise ValueError(f"grade {k} out of range for {n_classes} classes")


def triangular_row(n_classes: int, k: int, alpha: float) -> np.ndarray:
    """Mass 1-2*alpha at k and alpha at each neighbour (1-alpha / alpha at the ends)."""
    _check_grade(n_classes, k)
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha}")
    row = np.zeros(n_classes)
    neighbours = [j for j in (k - 1, k + 1) if 0 <= j < n_classes]
    for j in neighbours:
        row[j] = alpha
    row[k] = 1.0 - alpha * len(neighbours)
    return row


def binomial_row(n_classes: int, k: int) -> np.ndarray:
    """Binomial(J-1, k/(J-1)) pmf; degenerate t in {0, 1} gives a one-hot row."""
    _check_grade(n_classes, k)
    n = n_classes - 1
    t = k / n
    row = np.zeros(n_classes)
    if t == 0.0 or t == 1.0:
        row[k] = 1.0
        return row
    for j in range(n_classes):
        row[j] = binom_coef(n, j) * t**j * (1.0 - t) ** (n - j)
    return row


def exponential_row(n_classes: int, k: int, p: float) -> np.ndarray:
    """Softmax of -|j - k|^p over the grades."""
    _check_grade(n_classes, k)
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    dist = np.abs(np.arange(n_classes) - k).astype(float)
    weights = np.exp(-(dist**p))
    return weights / weights.sum()


def beta_row(n_classes: int, k: int, concentration: float) -> np.ndarray:
    """Beta-density mass over the J equal segments of the unit interval.

    The density for grade k is Beta(1 + s*m_k, 1 + s*(1 - m_k)) with
    m_k = (2k+1)/(2J), placing the mode at the midpoint of segment k; entry j
    is the cdf difference over [j/J, (j+1)/J].
    """
    _check_grade(n_classes, k)
    if concentration <= 0:
        raise ValueError(f"concentration must be positive, got {concentration}")
    m = (2 * k + 1) / (2 * n_classes)
    a = 1.0 + concentration * m
    b = 1.0 + concentration * (1.0 - m)
    cdf = [reg_inc_beta(j / n_classes, a, b) for j in range(n_classes + 1)]
    return np.diff(np.asarray(cdf))


def nominal_smooth_row(n_classes: int, k: int, lam: float) -> np.ndarray:
    """Uniform label smoothing: (1-lambda) one-hot plus lambda/J everywhere."""
    _check_grade(n_classes, k)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    row = np.full(n_classes, lam / n_classes)
    row[k] += 1.0 - lam
    return row


def blend_ordinal_row(k: int, soft: np.ndarray, eta: float) -> np.ndarray:
    """(1-eta) * one-hot(k) + eta * soft, validating that soft is a distribution."""
    soft = np.asarray(soft, dtype=float)
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if not 0 <= k < soft.shape[0]:
        raise ValueError(f"grade {k} out of range for {soft.shape[0]} classes")
    if (soft < -1e-12).any() or abs(soft.sum() - 1.0) > 1e-6:
        raise ValueError("soft must be a probability vector (sum 1 within 1e-6)")
    row = eta * soft
    row[k] += 1.0 - eta
    return row


def is_unimodal(row: np.ndarray, k: int, tol: float = _UNIMODAL_TOL) -> bool:
    """True when mass weakly decreases moving away from k on both sides."""
    row = np.asarray(row, dtype=float)
    right = all(row[j + 1] <= row[j] + tol for j in range(k, row.shape[0] - 1))
    left = all(row[j - 1] <= row[j] + tol for j in range(k, 0, -1))
    return right and left


@dataclass(frozen=True)
class SoftTargetMatrix:
    """J x J row-stochastic supervision matrix; row k targets true grade k."""

    rows: np.ndarray
    strategy: str
    params: SmoothingParams

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=float)
        j = rows.shape[0]
        if rows.ndim != 2 or rows.shape[1] != j:
            raise ValueError("target matrix must be square")
        if (rows < -1e-12).any():
            raise ValueError("target matrix entries must be non-negative")
        if np.abs(rows.sum(axis=1) - 1.0).max() > ROW_SUM_TOL:
            raise ValueError("target matrix rows must sum to 1 within 1e-9")
        for k in range(j):
            if rows[k, k] < rows[k].max() - 1e-9:
                raise ValueError(f"row {k} does not peak at its own grade")
            if not is_unimodal(rows[k], k, tol=1e-9):
                raise ValueError(f"row {k} is not unimodal around grade {k}")
        object.__setattr__(self, "rows", rows)

    @property
    def n_classes(self) -> int:
        return self.rows.shape[0]

    def row(self, k: int) -> np.ndarray:
        return self.rows[k]

    def for_labels(self, labels: np.ndarray) -> np.ndarray:
        """Per-sample target matrix: row i is the target of label i."""
        return self.rows[np.asarray(labels, dtype=int)]


def strategy_row(strategy: str, n_classes: int, k: int, params: SmoothingParams) -> np.ndarray:
    """The unblended unimodal vector for one grade under one strategy."""
    if strategy == "triangular":
        if params.alpha is None:
            raise ValueError("triangular strategy requires alpha")
        return triangular_row(n_classes, k, params.alpha)
    if strategy == "binomial":
        return binomial_row(n_classes, k)
    if strategy == "exponential":
        if params.p is None:
            raise ValueError("exponential strategy requires p")
        return exponential_row(n_classes, k, params.p)
    if strategy == "beta":
        if params.concentration is None:
            raise ValueError("beta strategy requires concentration")
        return beta_row(n_classes, k, params.concentration)
    raise ValueError(f"unknown ordinal strategy {strategy!r}")


def build_target_matrix(
    space: LabelSpace, strategy: str, params: SmoothingParams | None = None
) -> SoftTargetMatrix:
    """Assemble the J x J supervision matrix for one labelling strategy."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    params = params or SmoothingParams()
    j = space.n_classes
    if strategy == "nominal":
        rows = np.eye(j)
    elif strategy == "nominal_smoothed":
        rows = np.stack([nominal_smooth_row(j, k, params.eta) for k in range(j)])
    else:
        rows = np.stack(
            [blend_ordinal_row(k, strategy_row(strategy, j, k, params), params.eta) for k in range(j)]
        )
    return SoftTargetMatrix(rows, strategy, params)
