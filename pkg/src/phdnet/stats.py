"""Predictor panels, OLS with diagnostics, Pearson validation, trend smoothing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betainc

from phdnet.errors import (
    CollinearityError,
    ConfigurationError,
    DataError,
    DimensionError,
    DomainError,
    UnknownGradeError,
)
from phdnet.graph import ExchangeNetwork
from phdnet.ingest import OVERSEAS, HireRecord, InstitutionRegistry

PREDICTORS = ("self_ratio", "overseas_ratio", "new_ratio", "n", "tspek_ratio")
TSPEK_TAGS = ("tsinghua", "peking")
RECENT_YEARS = 5
CONDITION_LIMIT = 1e12


# --------------------------------------------------------------------------
# distribution tails


@dataclass(frozen=True)
class StudentT:
    df: float

    def __post_init__(self):
        if not self.df > 0:
            raise DomainError(f"Student t needs df > 0, got {self.df}")


@dataclass(frozen=True)
class FDist:
    d1: float
    d2: float

    def __post_init__(self):
        if not (self.d1 > 0 and self.d2 > 0):
            raise DomainError(f"F needs positive dof, got ({self.d1}, {self.d2})")


def tail_probability(statistic: float, distribution: StudentT | FDist) -> float:
    """Upper-tail probability P(X > statistic) via the regularized incomplete beta.

    Two-sided t p-values are ``2 * tail_probability(abs(t), StudentT(df))``.
    """
    x = float(statistic)
    if math.isnan(x):
        return math.nan
    if isinstance(distribution, StudentT):
        df = distribution.df
        if math.isinf(x):
            return 0.0 if x > 0 else 1.0
        half = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + x * x)))
        return half if x >= 0 else 1.0 - half
    if isinstance(distribution, FDist):
        d1, d2 = distribution.d1, distribution.d2
        if x <= 0:
            return 1.0
        if math.isinf(x):
            return 0.0
        return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x)))
    raise TypeError(f"unsupported distribution {distribution!r}")


def _two_sided_t(t: float, df: float) -> float:
    if math.isnan(t):
        return math.nan
    return min(1.0, 2.0 * tail_probability(abs(t), StudentT(df)))


# --------------------------------------------------------------------------
# predictor panel


@dataclass(frozen=True)
class PredictorPanel:
    nodes: tuple[str, ...]
    self_ratio: np.ndarray
    overseas_ratio: np.ndarray
    new_ratio: np.ndarray
    n: np.ndarray
    tspek_ratio: np.ndarray

    def matrix(self, columns: Sequence[str] = PREDICTORS) -> np.ndarray:
        return np.column_stack([np.asarray(getattr(self, c), dtype=float) for c in columns])

    def row(self, node: str) -> dict[str, float]:
        i = self.nodes.index(node)
        return {c: float(getattr(self, c)[i]) for c in PREDICTORS}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node", *PREDICTORS])
        for i, node in enumerate(self.nodes):
            writer.writerow([node] + [repr(float(getattr(self, c)[i])) if c != "n"
                                      else int(self.n[i]) for c in PREDICTORS])
        return buf.getvalue()


def compute_predictors(
    records: Iterable[HireRecord],
    network: ExchangeNetwork,
    node_subset: Sequence[str],
    reference_year: int = 2021,
    registry: InstitutionRegistry | None = None,
    tspek_nodes: Sequence[str] | None = None,
) -> PredictorPanel:
    """Hiring-profile ratios for each employer in ``node_subset``.

    Every ratio is a share of the employer's total hires ``T(u)`` in
    ``network``: own graduates, overseas graduates, hires made in the five
    years up to ``reference_year``, and graduates of the institutions tagged
    ``tsinghua``/``peking`` in the registry (or given as ``tspek_nodes``).
    An employer that hired nobody gets zeros throughout.
    """
    node_subset = list(node_subset)
    if not node_subset:
        raise DimensionError("node subset is empty")
    if tspek_nodes is None:
        if registry is None:
            raise ConfigurationError("tspek_ratio needs a registry with tsinghua/peking tags")
        tspek_nodes = []
        for tag in TSPEK_TAGS:
            hits = registry.tagged(tag)
            if not hits:
                raise ConfigurationError(f"tspek_ratio: no registry entry tagged {tag!r}")
            tspek_nodes.extend(hits)
    tspek_nodes = sorted(set(tspek_nodes))

    lo = reference_year - RECENT_YEARS
    recent: dict[str, int] = {}
    for r in records:
        if lo < r.employment_year <= reference_year and network.window.contains(r.employment_year):
            recent[r.employer_unit] = recent.get(r.employer_unit, 0) + 1

    cols = {c: [] for c in PREDICTORS}
    for u in node_subset:
        total = network.total_hires(u)
        cols["n"].append(total)
        if total == 0:
            for c in ("self_ratio", "overseas_ratio", "new_ratio", "tspek_ratio"):
                cols[c].append(0.0)
            continue
        cols["self_ratio"].append(network.weight(u, u) / total)
        cols["overseas_ratio"].append(network.weight(u, OVERSEAS) / total)
        cols["new_ratio"].append(recent.get(u, 0) / total)
        cols["tspek_ratio"].append(sum(network.weight(u, t) for t in tspek_nodes) / total)
    return PredictorPanel(
        nodes=tuple(node_subset),
        n=np.asarray(cols["n"], dtype=np.int64),
        **{c: np.asarray(cols[c], dtype=float) for c in PREDICTORS if c != "n"},
    )


# --------------------------------------------------------------------------
# regression


@dataclass(frozen=True)
class CoefficientRow:
    label: str
    B: float
    std_error: float
    Beta: float | None
    t: float
    p: float
    VIF: float | None


@dataclass(frozen=True)
class RegressionReport:
    intercept: CoefficientRow
    coefficients: tuple[CoefficientRow, ...]
    r_squared: float
    adj_r_squared: float
    f_statistic: float
    f_pvalue: float
    df_model: int
    df_resid: int
    durbin_watson: float
    n: int
    residuals: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.coefficients]

    def coefficient(self, label: str) -> CoefficientRow:
        for c in self.coefficients:
            if c.label == label:
                return c
        raise KeyError(label)

    def to_dict(self) -> dict:
        def row(c):
            return {"B": c.B, "SE": c.std_error, "Beta": c.Beta, "t": c.t, "p": c.p, "VIF": c.VIF}

        return {
            "n": self.n,
            "intercept": row(self.intercept),
            "coefficients": {c.label: row(c) for c in self.coefficients},
            "R2": self.r_squared,
            "adj_R2": self.adj_r_squared,
            "F": self.f_statistic,
            "F_dof": [self.df_model, self.df_resid],
            "F_p": self.f_pvalue,
            "DW": self.durbin_watson,
        }


def ols_fit(
    X: np.ndarray | Sequence[Sequence[float]],
    y: np.ndarray | Sequence[float],
    labels: Sequence[str] | None = None,
) -> RegressionReport:
    """Ordinary least squares with an intercept and the full diagnostic panel.

    Solved through a QR factorization of the design matrix. Raises
    :class:`CollinearityError` when the column-scaled design has condition
    ratio above 1e12, naming the columns involved.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    if y.shape[0] != n:
        raise DimensionError(f"X has {n} rows but y has {y.shape[0]} entries")
    labels = list(labels) if labels is not None else [f"x{j + 1}" for j in range(k)]
    if len(labels) != k:
        raise DimensionError("one label per predictor column required")
    if n <= k + 1:
        raise DimensionError(f"need more than {k + 1} observations for {k} predictors, got {n}")
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        raise DataError("dependent variable has zero variance")

    design = np.column_stack([np.ones(n), X])
    _check_collinearity(design, ["intercept", *labels])

    q, r = np.linalg.qr(design)
    coef = solve_triangular(r, q.T @ y)
    r_inv = solve_triangular(r, np.eye(k + 1))
    unscaled_cov = r_inv @ r_inv.T

    fitted = design @ coef
    resid = y - fitted
    sse = float(resid @ resid)
    df_resid = n - k - 1
    r2 = min(1.0, max(0.0, 1.0 - sse / sst))
    adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid
    sigma2 = sse / df_resid
    se = np.sqrt(sigma2 * np.diag(unscaled_cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
        f_stat = ((sst - sse) / k) / sigma2 if sse > 0 else math.inf
    f_p = tail_probability(f_stat, FDist(k, df_resid))

    sd_y = y.std(ddof=1)
    sd_x = X.std(axis=0, ddof=1)
    vif = variance_inflation(X)

    def p_of(tv):
        return _two_sided_t(float(tv), df_resid)

    intercept = CoefficientRow("intercept", float(coef[0]), float(se[0]), None,
                               float(t[0]), p_of(t[0]), None)
    rows = tuple(
        CoefficientRow(
            label=labels[j],
            B=float(coef[j + 1]),
            std_error=float(se[j + 1]),
            Beta=float(coef[j + 1] * sd_x[j] / sd_y),
            t=float(t[j + 1]),
            p=p_of(t[j + 1]),
            VIF=float(vif[j]),
        )
        for j in range(k)
    )
    dw = durbin_watson(resid) if np.any(resid != 0) else math.nan
    return RegressionReport(
        intercept=intercept,
        coefficients=rows,
        r_squared=r2,
        adj_r_squared=adj,
        f_statistic=float(f_stat),
        f_pvalue=f_p,
        df_model=k,
        df_resid=df_resid,
        durbin_watson=dw,
        n=n,
        residuals=resid,
        fitted=fitted,
    )


def _check_collinearity(design: np.ndarray, names: list[str]) -> None:
    norms = np.linalg.norm(design, axis=0)
    zero = [names[j] for j in range(len(names)) if norms[j] == 0]
    if zero:
        raise CollinearityError(f"all-zero predictor columns: {', '.join(zero)}", zero)
    _, s, vt = np.linalg.svd(design / norms, full_matrices=False)
    if s[-1] == 0 or s[0] / s[-1] > CONDITION_LIMIT:
        null = np.abs(vt[-1])
        involved = [names[j] for j in range(len(names)) if null[j] > 1e-6 * null.max()]
        raise CollinearityError(
            f"design matrix is singular (collinear columns: {', '.join(involved)})", involved
        )


def variance_inflation(X: np.ndarray) -> np.ndarray:
    """VIF of each column: 1 / (1 - R^2) regressing it on the others plus a constant."""
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    out = np.ones(k)
    if k == 1:
        return out
    for j in range(k):
        target = X[:, j]
        others = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        beta, *_ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ beta
        sst = ((target - target.mean()) ** 2).sum()
        r2 = 1.0 - (resid @ resid) / sst
        out[j] = math.inf if r2 >= 1.0 else 1.0 / (1.0 - r2)
    return out


def durbin_watson(residuals: Sequence[float]) -> float:
    e = np.asarray(residuals, dtype=float)
    if e.size < 2:
        raise DimensionError("Durbin-Watson needs at least two residuals")
    denom = float(e @ e)
    if denom == 0.0:
        raise DataError("Durbin-Watson undefined for all-zero residuals")
    d = np.diff(e)
    return float(d @ d) / denom


# --------------------------------------------------------------------------
# correlation


@dataclass(frozen=True)
class CorrelationReport:
    r: float
    n: int
    t: float
    p: float

    def to_dict(self) -> dict:
        return {"r": self.r, "n": self.n, "t": self.t, "p": self.p}


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationReport:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError("pearson needs two vectors of equal length")
    n = x.size
    if n < 3:
        raise DimensionError(f"pearson needs at least 3 observations, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DataError("correlation undefined: zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    # within rounding of a perfect linear relation
    if abs(r) > 1.0 - 64 * np.finfo(float).eps:
        r = math.copysign(1.0, r)
    if abs(r) == 1.0:
        t = math.copysign(math.inf, r)
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return CorrelationReport(r=r, n=n, t=t, p=_two_sided_t(t, n - 2))


# --------------------------------------------------------------------------
# discipline-evaluation grades


@dataclass(frozen=True)
class GradeScale:
    grades: tuple[str, ...] = ("C-", "C", "C+", "B-", "B", "B+", "A-", "A", "A+")

    def rank(self, token: str | None) -> int:
        return grade_to_rank(token, self)


DEFAULT_SCALE = GradeScale()
_MINUS_SIGNS = str.maketrans({"−": "-", "–": "-", "—": "-", "－": "-", "＋": "+"})


def grade_to_rank(token: str | None, scale: GradeScale = DEFAULT_SCALE) -> int:
    """Ordinal rank of a letter grade; blank means non-participation (0)."""
    if token is None:
        return 0
    norm = token.strip().translate(_MINUS_SIGNS).upper()
    if not norm:
        return 0
    try:
        return scale.grades.index(norm) + 1
    except ValueError:
        raise UnknownGradeError(token) from None


# --------------------------------------------------------------------------
# smoothing and trend


def moving_average(series: Sequence[float], window: int) -> np.ndarray:
    s = np.asarray(series, dtype=float)
    if window < 1:
        raise DimensionError("moving-average window must be at least 1")
    if window > s.size:
        raise DimensionError(f"window {window} longer than series of length {s.size}")
    c = np.cumsum(np.concatenate([[0.0], s]))
    out = (c[window:] - c[:-window]) / window
    if window == 1:
        return s.copy()
    return out


def _slope(values: np.ndarray) -> float:
    if values.size < 2:
        raise DimensionError("trend needs at least two smoothed points")
    if np.ptp(values) == 0:
        return 0.0
    t = np.arange(values.size, dtype=float)
    dt = t - t.mean()
    return float(dt @ (values - values.mean()) / (dt @ dt))


def trend_statistic(
    ec_by_slice: Mapping[str, Sequence[float]] | np.ndarray,
    window: int = 2,
) -> dict[str, float] | np.ndarray:
    """Least-squares slope of each node's smoothed per-slice centrality.

    Accepts a mapping node → sequence (returns a dict) or a 2-D array with
    one row per node (returns an array).
    """
    if isinstance(ec_by_slice, Mapping):
        return {
            node: _slope(moving_average(seq, window)) for node, seq in ec_by_slice.items()
        }
    arr = np.asarray(ec_by_slice, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] < 2:
        raise DimensionError("trend needs at least two slices")
    return np.array([_slope(moving_average(row, window)) for row in arr])
