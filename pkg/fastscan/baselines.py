"""Rule-based quality selection used for comparison: RB, BBA and Festive."""

import math
from dataclasses import dataclass

from fastscan.model import InvalidParameterError
from fastscan.predictors import predict_harmonic


@dataclass(frozen=True)
class BaselineParams:
    """Tuning of the rule-based algorithms.

    Parameters
    ----------
    bba_reservoir_s : float
        Buffer level at or below which BBA picks the lowest level.
    bba_cushion_s : float
        Buffer level at or above which BBA picks the highest level.
    festive_alpha : float
        Weight of the efficiency score against the stability score.
    festive_history : int
        Number of recent decisions counted for the stability score.
    """

    bba_reservoir_s: float = 10
    bba_cushion_s: float = 30
    festive_alpha: float = 12
    festive_history: int = 5

    def __post_init__(self):
        """Check the parameter ranges."""
        if self.bba_reservoir_s < 0:
            raise InvalidParameterError(
                f"BBA reservoir must be non-negative, got {self.bba_reservoir_s}."
            )
        if self.bba_cushion_s <= self.bba_reservoir_s:
            raise InvalidParameterError(
                f"BBA cushion {self.bba_cushion_s}s must exceed the reservoir "
                f"{self.bba_reservoir_s}s."
            )
        if self.festive_alpha <= 0:
            raise InvalidParameterError(
                f"Festive alpha must be positive, got {self.festive_alpha}."
            )
        if self.festive_history < 1:
            raise InvalidParameterError(
                f"Festive history must be at least 1, got {self.festive_history}."
            )


def rb_decide(prediction: float, level_rates) -> int:
    """Highest level whose rate is below the throughput prediction.

    Parameters
    ----------
    prediction : float
        Predicted throughput.
    level_rates : sequence of float
        Strictly increasing bitrate per level, in the unit of ``prediction``.

    Returns
    -------
    int
        Largest n with ``level_rates[n] < prediction``, or 0.
    """
    level = 0
    for n, rate in enumerate(level_rates):
        if rate < prediction:
            level = n
    return level


def bba_decide(buffer_s: float, params: BaselineParams, num_levels: int) -> int:
    """Map the buffer level linearly between reservoir and cushion.

    Parameters
    ----------
    buffer_s : float
        Seconds of video in the buffer.
    params : BaselineParams
        Supplies the reservoir and cushion.
    num_levels : int
        Number of quality levels (N + 1).

    Returns
    -------
    int
        0 at or below the reservoir, N at or above the cushion, and
        ``floor(N * (b - r) / (c - r))`` in between.
    """
    if buffer_s < 0:
        raise InvalidParameterError(
            f"Buffer level must be non-negative, got {buffer_s}."
        )
    top = num_levels - 1
    reservoir, cushion = params.bba_reservoir_s, params.bba_cushion_s
    if buffer_s <= reservoir:
        return 0
    if buffer_s >= cushion:
        return top
    return min(top, math.floor(top * (buffer_s - reservoir) / (cushion - reservoir)))


def _switches(levels) -> int:
    return sum(1 for a, b in zip(levels, levels[1:]) if a != b)


def festive_decide(
    history, current_level: int, level_rates, params: BaselineParams, recent_levels=()
) -> int:
    """Trade stability against efficiency around the current level.

    The efficiency score of level n is ``|rate(n) / min(p, ref) - 1|`` where p
    is the harmonic-mean prediction and ref the highest rate not above p (the
    lowest rate if none is). The stability score counts the switches among the
    last ``festive_history`` decisions, plus one if n differs from the
    current level.

    Parameters
    ----------
    history : ThroughputHistory or sequence of float
        Throughput samples feeding the prediction.
    current_level : int
        Level of the previous chunk.
    level_rates : sequence of float
        Bitrate per level, in the unit of the history.
    params : BaselineParams
        Supplies alpha and the stability window.
    recent_levels : sequence of int, optional
        Previous decisions, oldest first.

    Returns
    -------
    int
        The candidate in ``current - 1 .. current + 1`` with the lowest score,
        the lower level on ties.
    """
    prediction = predict_harmonic(history)
    top = len(level_rates) - 1
    below = [rate for rate in level_rates if rate <= prediction]
    reference = below[-1] if below else level_rates[0]
    scale = min(prediction, reference)
    recent = tuple(recent_levels)[-params.festive_history :]
    switches = _switches(recent)

    best, best_score = None, None
    for n in range(max(0, current_level - 1), min(top, current_level + 1) + 1):
        efficiency = abs(level_rates[n] / scale - 1)
        stability = switches + (1 if n != current_level else 0)
        score = stability + params.festive_alpha * efficiency
        if best_score is None or score < best_score:
            best, best_score = n, score
    return best


def decide(
    name: str,
    *,
    prediction: float,
    buffer_s: float,
    history,
    current_level: int,
    recent_levels,
    level_rates,
    params: BaselineParams,
) -> int:
    """Dispatch to the rule registered under ``name``."""
    if name == "rb":
        return rb_decide(prediction, level_rates)
    if name == "bba":
        return bba_decide(buffer_s, params, len(level_rates))
    if name == "festive":
        return festive_decide(
            history, current_level, level_rates, params, recent_levels
        )
    raise InvalidParameterError(
        f"Unknown baseline '{name}'. Available baselines are {list(BASELINES)}."
    )


BASELINES = ("rb", "bba", "festive")
ALGORITHMS = ("fastscan", *BASELINES)
