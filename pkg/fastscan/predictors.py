"""Bandwidth prediction from per-chunk download throughput."""

import warnings
from collections import deque

import numpy as np
import pandas as pd

from fastscan.model import InvalidParameterError, NoPredictionError


class ThroughputHistory:
    """The last ``eta`` per-chunk throughputs, in bytes per second.

    Parameters
    ----------
    eta : int
        Number of chunks remembered.
    floor : float
        Smallest throughput recorded; lower samples are raised to it.
    """

    def __init__(self, eta: int = 5, floor: float = 1.0):
        """Initialize an empty history."""
        if eta < 1:
            raise InvalidParameterError(f"eta must be at least 1, got {eta}.")
        if floor <= 0:
            raise InvalidParameterError(
                f"Throughput floor must be positive, got {floor}."
            )
        self.eta = eta
        self.floor = floor
        self._samples = deque(maxlen=eta)

    def __repr__(self):
        """History representation."""
        return f"ThroughputHistory(eta={self.eta}, samples={list(self._samples)})"

    def __len__(self):
        """Number of stored samples."""
        return len(self._samples)

    @property
    def samples(self) -> tuple:
        """Stored throughputs, oldest first."""
        return tuple(self._samples)

    def push(self, throughput: float):
        """Record one chunk's throughput."""
        if throughput < self.floor:
            warnings.warn(
                f"Throughput {throughput} raised to the floor {self.floor}.",
                stacklevel=2,
            )
            throughput = self.floor
        self._samples.append(float(throughput))

    def push_download(self, size_bytes: float, seconds: float):
        """Record a chunk download of ``size_bytes`` taking ``seconds``."""
        if seconds <= 0:
            raise InvalidParameterError(
                f"Download time must be positive, got {seconds}."
            )
        self.push(size_bytes / seconds)


def _values(history) -> np.ndarray:
    samples = history.samples if isinstance(history, ThroughputHistory) else history
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise NoPredictionError("Cannot predict bandwidth from an empty history.")
    return values


def predict_harmonic(history) -> float:
    """Harmonic mean of the stored throughputs.

    Parameters
    ----------
    history : ThroughputHistory or sequence of float
        Positive throughput samples.

    Returns
    -------
    float
        ``k / sum(1 / x)`` over the k samples.

    Raises
    ------
    NoPredictionError
        If the history is empty.
    """
    values = _values(history)
    return float(len(values) / np.sum(1.0 / values))


def predict_ewma(history, weight: float = 0.5) -> float:
    """Exponentially weighted mean, newest sample weighted ``weight``.

    Parameters
    ----------
    history : ThroughputHistory or sequence of float
        Throughput samples, oldest first.
    weight : float
        Smoothing weight in (0, 1).

    Returns
    -------
    float
        The last value of the recursive average.
    """
    if not 0 < weight < 1:
        raise InvalidParameterError(f"EWMA weight must lie in (0, 1), got {weight}.")
    values = _values(history)
    return float(pd.Series(values).ewm(alpha=weight, adjust=False).mean().iloc[-1])


PREDICTORS = {
    "harmonic": predict_harmonic,
    "ewma": predict_ewma,
}
