"""Trace-driven playback sessions."""

import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd
from annalist.annalist import Annalist
from annalist.decorators import ClassLogger

from fastscan import baselines, qoe
from fastscan.baselines import ALGORITHMS, BaselineParams
from fastscan.model import (
    BandwidthTimeline,
    BetaConditionError,
    DecisionSet,
    FetchRecord,
    FetchSchedule,
    InsufficientTraceError,
    InvalidParameterError,
    ProgressTimeoutError,
    TraceError,
    WindowContext,
    validate_beta,
)
from fastscan.predictors import PREDICTORS, ThroughputHistory, predict_ewma
from fastscan.scanner import fastscan_window

annalizer = Annalist()

DEFAULTS = {
    "window": 5,
    "eta": 5,
    "beta": 0.1,
    "lam": 10,
    "buffer_cap_s": 60,
    "startup_delay_s": None,
    "low_buffer_threshold_s": 5,
    "algorithm": "fastscan",
    "predictor": "harmonic",
    "ewma_weight": 0.5,
    "bootstrap_rate": None,
    "throughput_floor": 1.0,
    "progress_timeout_slots": 3600,
    "prediction_scale": 1.0,
}

PREDICTOR_CHOICES = (*PREDICTORS, "oracle")

MIN_DOWNLOAD_S = 1e-6
HORIZON_MARGIN = 16


@dataclass(frozen=True)
class SessionConfig:
    """Settings of one playback session.

    ``startup_delay_s=None`` takes the manifest's startup delay and
    ``bootstrap_rate=None`` predicts the lowest level's rate until the first
    chunk has been measured. The ``"oracle"`` predictor reads the actual
    trace, scaled by ``prediction_scale``.
    """

    window: int = DEFAULTS["window"]
    eta: int = DEFAULTS["eta"]
    beta: float = DEFAULTS["beta"]
    lam: float = DEFAULTS["lam"]
    buffer_cap_s: float = DEFAULTS["buffer_cap_s"]
    startup_delay_s: int | None = DEFAULTS["startup_delay_s"]
    low_buffer_threshold_s: float = DEFAULTS["low_buffer_threshold_s"]
    algorithm: str = DEFAULTS["algorithm"]
    predictor: str = DEFAULTS["predictor"]
    ewma_weight: float = DEFAULTS["ewma_weight"]
    bootstrap_rate: float | None = DEFAULTS["bootstrap_rate"]
    throughput_floor: float = DEFAULTS["throughput_floor"]
    progress_timeout_slots: int = DEFAULTS["progress_timeout_slots"]
    prediction_scale: float = DEFAULTS["prediction_scale"]
    baseline_params: BaselineParams = field(default_factory=BaselineParams)

    def __post_init__(self):
        """Check the settings that do not depend on the manifest."""
        if self.window < 1:
            raise InvalidParameterError(
                f"window must be at least 1, got {self.window}."
            )
        if self.eta < 1:
            raise InvalidParameterError(f"eta must be at least 1, got {self.eta}.")
        if self.lam <= 0:
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}.")
        if not 0 < self.beta < 1:
            raise InvalidParameterError(f"beta must lie in (0, 1), got {self.beta}.")
        if self.low_buffer_threshold_s < 0:
            raise InvalidParameterError(
                f"Low-buffer threshold must be non-negative, got "
                f"{self.low_buffer_threshold_s}."
            )
        if self.algorithm not in ALGORITHMS:
            raise InvalidParameterError(
                f"Unknown algorithm '{self.algorithm}'. Available algorithms are "
                f"{list(ALGORITHMS)}."
            )
        if self.predictor not in PREDICTOR_CHOICES:
            raise InvalidParameterError(
                f"Unknown predictor '{self.predictor}'. Available predictors are "
                f"{list(PREDICTOR_CHOICES)}."
            )
        if self.prediction_scale <= 0:
            raise InvalidParameterError(
                f"Prediction scale must be positive, got {self.prediction_scale}."
            )
        if self.progress_timeout_slots < 1:
            raise InvalidParameterError(
                f"Progress bound must be at least 1 slot, got "
                f"{self.progress_timeout_slots}."
            )
        if (
            self.algorithm == "bba"
            and self.baseline_params.bba_cushion_s > self.buffer_cap_s
        ):
            raise InvalidParameterError(
                f"BBA cushion {self.baseline_params.bba_cushion_s}s exceeds the "
                f"buffer cap {self.buffer_cap_s}s."
            )

    @classmethod
    def from_dict(cls, values: dict):
        """Build a config from a partial mapping, filling the rest from DEFAULTS."""
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InvalidParameterError(f"Unknown session settings {sorted(unknown)}.")
        settings = dict(DEFAULTS)
        settings.update(values)
        params = settings.get("baseline_params")
        if isinstance(params, dict):
            settings["baseline_params"] = BaselineParams(**params)
        return cls(**settings)

    def to_dict(self) -> dict:
        """Plain mapping of the settings."""
        return asdict(self)


@dataclass(frozen=True)
class ChunkRecord:
    """What happened to one chunk in a session.

    ``start`` and ``end`` are download times in seconds; ``deadline`` is the
    slot after which the chunk plays; ``reason`` is ``"fallback"`` when the
    low-buffer rule lowered the decided level.
    """

    index: int
    level: int
    bytes: float
    start: float
    end: float
    first_slot: int | None
    finish_slot: int
    deadline: int
    stall_s: int
    decided_level: int
    prediction: float
    reason: str = ""


@dataclass(frozen=True)
class SessionLog:
    """Outcome of a playback session."""

    manifest: object
    chunks: tuple
    schedule: FetchSchedule
    config: SessionConfig
    startup_delay_s: int
    trace_name: str = ""
    label: str = ""
    trace_extended: bool = False

    @property
    def algorithm(self) -> str:
        """Decision algorithm of the session."""
        return self.config.algorithm

    @property
    def levels(self) -> tuple:
        """Played level per chunk."""
        return tuple(rec.level for rec in self.chunks)

    @property
    def total_stall(self) -> int:
        """Sum of the per-chunk stalls."""
        return sum(rec.stall_s for rec in self.chunks)

    @property
    def level_counts(self) -> tuple:
        """Number of chunks played at each level."""
        counts = np.bincount(self.levels, minlength=self.manifest.num_levels)
        return tuple(int(c) for c in counts)

    @property
    def switches(self) -> int:
        """Number of level changes between consecutive chunks."""
        levels = self.levels
        return sum(1 for a, b in zip(levels, levels[1:]) if a != b)

    @property
    def mean_level(self) -> float:
        """Average played level."""
        return float(np.mean(self.levels))

    def qoe(self, params=None) -> float:
        """Session score with the config's weights unless ``params`` is given."""
        if params is None:
            params = qoe.QoEParams(self.config.beta, self.config.lam)
        return qoe.score(self, params)

    def decisions(self) -> DecisionSet:
        """The whole session as one decision set, for feasibility checks."""
        stalls = np.cumsum([rec.stall_s for rec in self.chunks]).tolist()
        return DecisionSet.from_levels(
            self.manifest,
            1,
            self.levels,
            stalls,
            [rec.deadline for rec in self.chunks],
            prior_stall_s=self.startup_delay_s,
        )

    def buffer_series(self) -> pd.Series:
        """Seconds buffered at the end of every slot of the session."""
        deadlines = {rec.index: rec.deadline for rec in self.chunks}
        return self.schedule.buffer_occupancy(deadlines)

    def to_frame(self) -> pd.DataFrame:
        """Per-chunk rows."""
        return pd.DataFrame(
            {
                "index": [rec.index for rec in self.chunks],
                "level": [rec.level for rec in self.chunks],
                "bytes": [rec.bytes for rec in self.chunks],
                "start": [round(rec.start, 6) for rec in self.chunks],
                "end": [round(rec.end, 6) for rec in self.chunks],
                "deadline": [rec.deadline for rec in self.chunks],
                "stall_s": [rec.stall_s for rec in self.chunks],
                "reason": [rec.reason for rec in self.chunks],
            }
        )

    def to_dict(self) -> dict:
        """JSON-ready summary of the session."""
        config = self.config.to_dict()
        return {
            "trace": self.trace_name,
            "label": self.label or self.algorithm,
            "algorithm": self.algorithm,
            "config": config,
            "num_chunks": self.manifest.num_chunks,
            "num_levels": self.manifest.num_levels,
            "chunk_duration_s": self.manifest.chunk_duration_s,
            "startup_delay_s": self.startup_delay_s,
            "total_stall_s": self.total_stall,
            "qoe": round(self.qoe(), 6),
            "level_counts": list(self.level_counts),
            "switches": self.switches,
            "mean_level": round(self.mean_level, 6),
            "trace_extended": self.trace_extended,
            "buffer_s": [float(v) for v in self.buffer_series()],
            "chunks": [
                {
                    "index": rec.index,
                    "level": rec.level,
                    "decided_level": rec.decided_level,
                    "bytes": rec.bytes,
                    "start": round(rec.start, 6),
                    "end": round(rec.end, 6),
                    "deadline": rec.deadline,
                    "stall_s": rec.stall_s,
                    "prediction": round(rec.prediction, 6),
                    "reason": rec.reason,
                }
                for rec in self.chunks
            ],
        }


def level_pieces(manifest, chunk: int, level: int, offset, amount):
    """Split bytes ``offset .. offset + amount`` of a chunk into its levels.

    The composite file of ``level`` is accounted as level 0 bytes first, then
    each increment in turn.
    """
    pieces = []
    low = 0
    for n in range(level + 1):
        high = low + manifest.increment(chunk, n)
        start, stop = max(low, offset), min(high, offset + amount)
        if stop > start:
            pieces.append((n, stop - start))
        low = high
    return pieces


def replay_decisions(
    manifest,
    timeline,
    decisions: DecisionSet,
    buffer_cap_s,
    start_slot: int = 1,
    buffered_deadlines=(),
) -> FetchSchedule:
    """Fetch decided sizes in order, as early as bandwidth and buffer allow.

    Parameters
    ----------
    manifest : VideoManifest
        Chunk sizes.
    timeline : BandwidthTimeline
        Bandwidth to fetch with.
    decisions : DecisionSet
        Levels and deadlines of the window.
    buffer_cap_s : float
        Buffer cap B_m.
    start_slot : int
        First slot bytes may be fetched in.
    buffered_deadlines : sequence of int
        Deadlines of chunks already in the buffer.

    Returns
    -------
    FetchSchedule
        The per-slot, per-level fetched amounts.

    Raises
    ------
    InsufficientTraceError
        If the timeline ends before every chunk is fetched.
    """
    ctx = WindowContext(
        decisions.first_chunk,
        decisions.last_chunk,
        start_slot,
        decisions.prior_stall_s,
        buffer_cap_s,
        timeline,
        buffered_deadlines,
    )
    places = ctx.buffer_places(manifest)
    records = []
    slot = start_slot
    left = timeline.at(slot)
    for q, chunk in enumerate(decisions.chunks):
        release = ctx.release_slot(q, decisions.deadline, places)
        if release > slot:
            slot = release
            left = timeline.at(slot)
        level = decisions.levels[q]
        size = decisions.target_size[q]
        done = 0
        while done < size:
            if slot > timeline.horizon:
                raise InsufficientTraceError(chunk, slot)
            take = min(left, size - done)
            for n, amount in level_pieces(manifest, chunk, level, done, take):
                records.append(FetchRecord(chunk, n, slot, amount))
            done += take
            left -= take
            if done < size:
                slot += 1
                left = timeline.at(slot)
    return FetchSchedule(
        records,
        manifest.chunk_duration_s,
        buffer_cap_s,
        start_slot,
        ctx.live_buffered(),
    )


class Session:
    """One playback of a manifest over an actual bandwidth trace."""

    @ClassLogger  # type: ignore
    def __init__(
        self,
        manifest,
        actual_trace: BandwidthTimeline,
        config: SessionConfig | None = None,
        trace_name: str = "",
        label: str = "",
    ):
        """Initialize a Session instance."""
        if config is None:
            config = SessionConfig()
        if actual_trace.horizon == 0:
            raise TraceError("The actual bandwidth trace has no samples.")
        if config.buffer_cap_s < manifest.chunk_duration_s:
            raise InvalidParameterError(
                f"Buffer cap {config.buffer_cap_s}s holds no "
                f"{manifest.chunk_duration_s}s chunk."
            )
        window = min(config.window, manifest.num_chunks)
        if config.algorithm == "fastscan" and not validate_beta(
            config.beta, window, manifest.top_level
        ):
            raise BetaConditionError(
                f"beta={config.beta} does not satisfy the level condition for a "
                f"window of {window} chunks and {manifest.num_levels} levels."
            )
        self._manifest = manifest
        self._actual = actual_trace
        self._config = config
        self._algorithm = config.algorithm
        self._predictor = config.predictor
        self._window = config.window
        self.trace_name = trace_name
        self.label = label or config.algorithm
        self._extended = False
        self._clip_warned = False

    def __repr__(self):
        """Session representation."""
        return repr(f"Session '{self.label}' on trace '{self.trace_name}'")

    @property
    def manifest(self):  # type: ignore
        """Manifest property."""
        return self._manifest

    @property
    def config(self):  # type: ignore
        """Config property."""
        return self._config

    @property
    def algorithm(self):  # type: ignore
        """Algorithm property."""
        return self._algorithm

    @ClassLogger  # type: ignore
    @algorithm.setter
    def algorithm(self, value):
        self._config = SessionConfig.from_dict(
            {**self._config.to_dict(), "algorithm": value}
        )
        self._algorithm = value

    @property
    def predictor(self):  # type: ignore
        """Predictor property."""
        return self._predictor

    @ClassLogger  # type: ignore
    @predictor.setter
    def predictor(self, value):
        self._config = SessionConfig.from_dict(
            {**self._config.to_dict(), "predictor": value}
        )
        self._predictor = value

    @property
    def window(self):  # type: ignore
        """Window property."""
        return self._window

    @ClassLogger  # type: ignore
    @window.setter
    def window(self, value):
        self._config = SessionConfig.from_dict(
            {**self._config.to_dict(), "window": value}
        )
        self._window = value

    def _actual_at(self, slot: int):
        if slot <= self._actual.horizon:
            return self._actual.at(slot)
        if not self._extended:
            self._extended = True
            warnings.warn(
                f"Trace '{self.trace_name}' ends at slot {self._actual.horizon}; "
                f"holding its last sample.",
                stacklevel=3,
            )
        return self._actual.samples[-1]

    def _peek(self, slot: int):
        if slot <= self._actual.horizon:
            return self._actual.at(slot)
        return self._actual.samples[-1]

    def _scalar_prediction(self, history, slot):
        config = self._config
        if config.predictor == "oracle":
            span = max(1, config.window * self._manifest.chunk_duration_s)
            values = [self._peek(j) for j in range(slot, slot + span)]
            return float(np.mean(values)) * config.prediction_scale
        if len(history) == 0:
            if config.bootstrap_rate is not None:
                return float(config.bootstrap_rate)
            return float(self._manifest.level_rates[0])
        if config.predictor == "ewma":
            return predict_ewma(history, config.ewma_weight)
        return PREDICTORS[config.predictor](history)

    def _predicted_timeline(self, slot, left, fresh, horizon, prediction):
        config = self._config
        samples = [0] * (slot - 1)
        if config.predictor == "oracle":
            scale = config.prediction_scale
            if scale == 1:
                samples.append(left)
                samples.extend(self._peek(j) for j in range(slot + 1, horizon + 1))
            else:
                samples.append(int(left * scale))
                samples.extend(
                    int(self._peek(j) * scale) for j in range(slot + 1, horizon + 1)
                )
            return BandwidthTimeline(samples)
        rate = max(1, int(prediction))
        actual = self._peek(slot)
        if fresh or actual <= 0:
            samples.append(rate)
        else:
            samples.append(int(rate * left / actual))
        samples.extend([rate] * (horizon - slot))
        return BandwidthTimeline(samples)

    def _plan(self, chunk, slot, left, fresh, prior_stall, deadlines, prediction):
        manifest, config = self._manifest, self._config
        length = manifest.chunk_duration_s
        last = min(chunk + config.window - 1, manifest.num_chunks)
        if last < chunk + config.window - 1 and not self._clip_warned:
            self._clip_warned = True
            warnings.warn(
                f"Window clipped at the end of the video from chunk {chunk}.",
                stacklevel=3,
            )
        width = last - chunk + 1
        base_last = prior_stall + (last - 1) * length
        horizon = max(slot, base_last) + width * length + HORIZON_MARGIN
        while True:
            ctx = WindowContext(
                chunk,
                last,
                slot,
                prior_stall,
                config.buffer_cap_s,
                self._predicted_timeline(slot, left, fresh, horizon, prediction),
                deadlines,
            )
            try:
                return fastscan_window(ctx, manifest, config.beta, config.lam)
            except InsufficientTraceError:
                if horizon > slot + config.progress_timeout_slots:
                    warnings.warn(
                        f"Predicted bandwidth cannot carry chunks {chunk}..{last} "
                        f"within {config.progress_timeout_slots} slots; fetching "
                        f"chunk {chunk} at level 0.",
                        stacklevel=3,
                    )
                    return None
                horizon *= 2

    @staticmethod
    def _buffer_level(deadlines, length, now):
        return float(sum(min(max(t + length - now, 0), length) for t in deadlines))

    @ClassLogger  # type: ignore
    def run(self) -> SessionLog:
        """Play the whole manifest and return the session log.

        Raises
        ------
        ProgressTimeoutError
            If a download makes no progress within the configured slot bound.
        """
        manifest, config = self._manifest, self._config
        length = manifest.chunk_duration_s
        startup = (
            manifest.startup_delay_s
            if config.startup_delay_s is None
            else config.startup_delay_s
        )
        places = int(config.buffer_cap_s // length)
        history = ThroughputHistory(config.eta, config.throughput_floor)
        records = []
        fetches = []
        deadlines = []
        recent = []
        stall_total = 0
        current = 0

        slot = 1
        left = self._actual_at(slot)
        for chunk in range(1, manifest.num_chunks + 1):
            capacity = self._actual_at(slot)
            fresh = left == capacity
            now = (slot - 1) + ((capacity - left) / capacity if capacity > 0 else 0)
            prior_stall = startup + stall_total
            prediction = self._scalar_prediction(history, slot)

            reason = ""
            if config.algorithm == "fastscan":
                plan = self._plan(
                    chunk, slot, left, fresh, prior_stall, deadlines, prediction
                )
                decided = plan.levels[0] if plan is not None else 0
                if plan is None:
                    reason = "no-plan"
                level = decided
                buffered = self._buffer_level(deadlines, length, now)
                if buffered < config.low_buffer_threshold_s and level > 0:
                    level -= 1
                    reason = "fallback"
            else:
                samples = history.samples or (prediction,)
                decided = baselines.decide(
                    config.algorithm,
                    prediction=prediction,
                    buffer_s=self._buffer_level(deadlines, length, now),
                    history=samples,
                    current_level=current,
                    recent_levels=recent,
                    level_rates=manifest.level_rates,
                    params=config.baseline_params,
                )
                level = decided

            index = len(deadlines) - places
            release = deadlines[index] if index >= 0 else 1
            if release > slot:
                slot = release
                left = self._actual_at(slot)
                now = slot - 1
            start = now
            size = manifest.size(chunk, level)
            done = 0
            first_slot = None
            decision_slot = slot
            while done < size:
                if slot - decision_slot > config.progress_timeout_slots:
                    raise ProgressTimeoutError(
                        f"Chunk {chunk} made no progress for "
                        f"{config.progress_timeout_slots} slots after slot "
                        f"{decision_slot}."
                    )
                take = min(left, size - done)
                if take > 0:
                    if first_slot is None:
                        first_slot = slot
                    for n, amount in level_pieces(manifest, chunk, level, done, take):
                        fetches.append(FetchRecord(chunk, n, slot, amount))
                done += take
                left -= take
                if done < size:
                    slot += 1
                    left = self._actual_at(slot)
            capacity = self._actual_at(slot)
            end = (
                (slot - 1) + (capacity - left) / capacity
                if size > 0 and capacity > 0
                else start
            )

            base = prior_stall + (chunk - 1) * length
            stall = max(0, slot - base) if size > 0 else 0
            stall_total += stall
            deadline = base + stall
            deadlines.append(deadline)
            if size > 0:
                history.push_download(size, max(end - start, MIN_DOWNLOAD_S))
            records.append(
                ChunkRecord(
                    chunk,
                    level,
                    size,
                    start,
                    end,
                    first_slot,
                    slot,
                    deadline,
                    stall,
                    decided,
                    prediction,
                    reason,
                )
            )
            recent.append(level)
            current = level
            if left <= 0:
                slot += 1
                left = self._actual_at(slot)

        schedule = FetchSchedule(fetches, length, config.buffer_cap_s, 1)
        return SessionLog(
            manifest,
            tuple(records),
            schedule,
            config,
            startup,
            trace_name=self.trace_name,
            label=self.label,
            trace_extended=self._extended,
        )


def run_session(
    manifest, actual_trace, config: SessionConfig | None = None, trace_name="", label=""
) -> SessionLog:
    """Play ``manifest`` over ``actual_trace`` with ``config``.

    Parameters
    ----------
    manifest : VideoManifest
        The video.
    actual_trace : BandwidthTimeline
        Bandwidth actually available per slot.
    config : SessionConfig, optional
        Session settings, DEFAULTS if omitted.
    trace_name, label : str, optional
        Names carried into the log.

    Returns
    -------
    SessionLog
        Per-chunk outcome, fetch schedule and statistics.
    """
    return Session(manifest, actual_trace, config, trace_name, label).run()


@dataclass(frozen=True)
class ComparisonReport:
    """Logs of every (trace, config) pair that ran, and errors of those that failed."""

    logs: dict
    errors: dict
    summary: object = None

    @property
    def empty(self) -> bool:
        """Whether nothing ran."""
        return not self.logs and not self.errors


def run_comparison(
    manifest, traces: dict, configs: dict, params=None, reference: str = "fastscan"
) -> ComparisonReport:
    """Run every config on every trace and summarize.

    Parameters
    ----------
    manifest : VideoManifest
        The video.
    traces : dict
        Trace name to BandwidthTimeline.
    configs : dict
        Label to SessionConfig.
    params : QoEParams, optional
        Scoring weights, defaults to beta 0.1 and lambda 10.
    reference : str
        Label whose QoE normalizes the others on each trace.

    Returns
    -------
    ComparisonReport
        Logs and errors keyed by (trace, label) in sorted order.
    """
    logs = {}
    errors = {}
    for trace_name in sorted(traces):
        for label in sorted(configs):
            key = (trace_name, label)
            try:
                logs[key] = run_session(
                    manifest, traces[trace_name], configs[label], trace_name, label
                )
            except (ValueError, RuntimeError) as error:
                errors[key] = f"{type(error).__name__}: {error}"
    summary = None
    if logs:
        summary = qoe.summarize(list(logs.values()), params, reference)
    return ComparisonReport(logs, errors, summary)
