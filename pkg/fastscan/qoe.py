"""Scoring of decisions and sessions, and summaries over many sessions."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pandas as pd

from fastscan.model import InvalidParameterError, StructuralError, exact


@dataclass(frozen=True)
class QoEParams:
    """Weights of the objective: level ratio beta and stall weight lambda."""

    beta: float = 0.1
    lam: float = 10

    def __post_init__(self):
        """Check the ranges."""
        if not 0 < self.beta < 1:
            raise InvalidParameterError(f"beta must lie in (0, 1), got {self.beta}.")
        if self.lam <= 0:
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}.")


def score(decisions, params: QoEParams | None = None, exact_result: bool = False):
    """Weighted level counts minus weighted stall.

    Parameters
    ----------
    decisions : DecisionSet or SessionLog
        Anything with per-chunk ``levels`` and a ``total_stall`` in seconds;
        for a session that is the sum of its chunk stalls.
    params : QoEParams, optional
        Weights, beta 0.1 and lambda 10 by default.
    exact_result : bool
        Return a Fraction computed without rounding.

    Returns
    -------
    float or Fraction
        ``sum_n beta**n * (chunks at level >= n) - lambda * stall``.
    """
    if params is None:
        params = QoEParams()
    if exact_result:
        beta, lam = exact(params.beta), exact(params.lam)
        zero = Fraction(0)
    else:
        beta, lam = params.beta, params.lam
        zero = 0.0
    levels = decisions.levels
    top = max(levels, default=-1)
    quality = zero
    for n in range(top + 1):
        quality += beta**n * sum(1 for level in levels if level >= n)
    return quality - lam * decisions.total_stall


@dataclass(frozen=True)
class Summary:
    """Statistics over a set of session logs.

    Attributes
    ----------
    rows : pandas.DataFrame
        One row per session: trace, label, qoe, normalized_qoe, total_stall_s,
        level0_pct, mean_level, switches.
    pmf : pandas.DataFrame
        Share of chunks at each level (columns) per label (rows).
    reference : str
        Label the QoE is normalized by.
    """

    rows: pd.DataFrame
    pmf: pd.DataFrame
    reference: str

    @property
    def aggregates(self) -> pd.DataFrame:
        """Per-label means and totals."""
        grouped = self.rows.groupby("label")
        return pd.DataFrame(
            {
                "mean_qoe": grouped["qoe"].mean(),
                "mean_normalized_qoe": grouped["normalized_qoe"].mean(),
                "total_stall_s": grouped["total_stall_s"].sum(),
                "level0_pct": grouped["level0_pct"].mean(),
                "mean_level": grouped["mean_level"].mean(),
                "switches": grouped["switches"].sum(),
            }
        )

    def cdf(self, label: str) -> pd.Series:
        """Empirical CDF of a label's normalized QoE.

        Returns
        -------
        pandas.Series
            Cumulative share (values) at each sorted normalized QoE (index).
        """
        values = self.rows.loc[self.rows["label"] == label, "normalized_qoe"]
        values = np.sort(values.dropna().to_numpy())
        return pd.Series(
            np.arange(1, len(values) + 1) / max(len(values), 1),
            index=pd.Index(values, name="normalized_qoe"),
            name=label,
        )

    def to_dict(self) -> dict:
        """JSON-ready form."""
        rows = self.rows.astype(object).where(self.rows.notna(), None)
        aggregates = self.aggregates.astype(object).where(self.aggregates.notna(), None)
        return {
            "reference": self.reference,
            "rows": rows.to_dict(orient="records"),
            "aggregates": aggregates.to_dict(orient="index"),
            "pmf": self.pmf.to_dict(orient="index"),
        }


def summarize(logs, params: QoEParams | None = None, reference: str = "fastscan"):
    """Summarize session logs that share one manifest.

    Parameters
    ----------
    logs : sequence of SessionLog
        Sessions to summarize; each is identified by its trace and label.
    params : QoEParams, optional
        Scoring weights.
    reference : str
        Label whose QoE on the same trace normalizes every session.

    Returns
    -------
    Summary
        Per-session rows, the level PMF per label and the CDF accessor.

    Raises
    ------
    StructuralError
        If the logs come from different manifests.
    """
    logs = list(logs)
    if not logs:
        raise InvalidParameterError("No session logs to summarize.")
    manifest = logs[0].manifest
    if any(log.manifest != manifest for log in logs[1:]):
        raise StructuralError("Session logs come from different manifests.")

    rows = pd.DataFrame(
        {
            "trace": [log.trace_name for log in logs],
            "label": [log.label or log.algorithm for log in logs],
            "qoe": [float(score(log, params)) for log in logs],
            "total_stall_s": [log.total_stall for log in logs],
            "level0_pct": [
                100.0 * log.level_counts[0] / len(log.levels) for log in logs
            ],
            "mean_level": [log.mean_level for log in logs],
            "switches": [log.switches for log in logs],
        }
    )
    reference_qoe = (
        rows[rows["label"] == reference].groupby("trace")["qoe"].first()
    )
    denominator = rows["trace"].map(reference_qoe).replace(0, np.nan)
    rows.insert(3, "normalized_qoe", rows["qoe"] / denominator)

    counts = {}
    for log in logs:
        label = log.label or log.algorithm
        counts[label] = counts.get(label, np.zeros(manifest.num_levels)) + np.array(
            log.level_counts
        )
    pmf = pd.DataFrame(
        {label: total / total.sum() for label, total in counts.items()}
    ).T
    pmf.columns = list(range(manifest.num_levels))
    pmf.index.name = "label"
    return Summary(rows, pmf, reference)
