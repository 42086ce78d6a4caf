"""Domain types shared by the engine, simulator, baselines and oracle."""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import accumulate

import pandas as pd

BYTES_PER_MBPS = 125000


class InvalidParameterError(ValueError):
    """A tuning parameter lies outside its legal range."""


class BetaConditionError(InvalidParameterError):
    """The level weight does not make quality levels lexicographic."""


class ManifestError(ValueError):
    """A video manifest breaks one of its invariants."""


class TraceError(ValueError):
    """A bandwidth trace holds an unusable sample."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class StructuralError(ValueError):
    """Inputs that should describe the same window or manifest disagree."""


class InsufficientTraceError(RuntimeError):
    """The bandwidth timeline ran out before the window was fetched."""

    def __init__(self, chunk, slot):
        super().__init__(
            f"Bandwidth timeline exhausted at slot {slot} while fetching chunk {chunk}."
        )
        self.chunk = chunk
        self.slot = slot


class InvariantViolation(RuntimeError):
    """A scan reached a state that the level-0 scans rule out."""


class FormulationError(RuntimeError):
    """The level-0 backward scan could not place a chunk within its bound."""


class NoPredictionError(RuntimeError):
    """A predictor was asked for a value without any history."""


class ProgressTimeoutError(RuntimeError):
    """A session stopped making progress within the slot bound."""


class SizeGuardError(ValueError):
    """An instance is too large for exhaustive search."""

    def __init__(self, message, bound):
        super().__init__(message)
        self.bound = bound


def validate_beta(beta, window: int, levels: int) -> bool:
    """Check that beta makes every quality level dominate all higher ones.

    Parameters
    ----------
    beta : float
        Weight ratio between consecutive quality levels, in (0, 1).
    window : int
        Number of chunks decided together (W).
    levels : int
        Highest level index (N).

    Returns
    -------
    bool
        True iff ``W * sum(beta**k for k in n+1..N) < beta**n`` for every n.

    Raises
    ------
    InvalidParameterError
        If beta is outside (0, 1), the window is empty or levels is negative.
    """
    if not 0 < beta < 1:
        raise InvalidParameterError(f"beta must lie in (0, 1), got {beta}.")
    if window < 1:
        raise InvalidParameterError(f"window must be at least 1, got {window}.")
    if levels < 0:
        raise InvalidParameterError(f"levels must be non-negative, got {levels}.")
    b = exact(beta)
    for n in range(levels + 1):
        tail = sum(b**k for k in range(n + 1, levels + 1))
        if window * tail >= b**n:
            return False
    return True


def exact(value):
    """Convert a float, int or Fraction to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(repr(float(value)))


@dataclass(frozen=True)
class VideoManifest:
    """Per-chunk, per-level sizes of one video.

    Parameters
    ----------
    chunk_duration_s : int
        Playback duration of every chunk (L).
    startup_delay_s : int
        Seconds before playback of the first chunk begins (S).
    sizes : tuple of tuple
        ``sizes[i - 1][n]`` is the size in bytes of chunk i at level n.
    level_names : tuple of str, optional
        Display names of the levels.
    nominal_mbps : tuple of float, optional
        Advertised bitrate of each level.
    """

    chunk_duration_s: int
    startup_delay_s: int
    sizes: tuple
    level_names: tuple = ()
    nominal_mbps: tuple = ()

    def __post_init__(self):
        """Freeze the size matrix and check the manifest invariants."""
        object.__setattr__(self, "sizes", tuple(tuple(row) for row in self.sizes))
        object.__setattr__(self, "level_names", tuple(self.level_names))
        object.__setattr__(self, "nominal_mbps", tuple(self.nominal_mbps))
        if self.chunk_duration_s <= 0:
            raise ManifestError(
                f"Chunk duration must be positive, got {self.chunk_duration_s}."
            )
        if self.startup_delay_s < 0:
            raise ManifestError(
                f"Startup delay must be non-negative, got {self.startup_delay_s}."
            )
        if not self.sizes:
            raise ManifestError("A manifest needs at least one chunk.")
        width = len(self.sizes[0])
        if width == 0:
            raise ManifestError("A manifest needs at least one quality level.")
        for i, row in enumerate(self.sizes, start=1):
            if len(row) != width:
                raise ManifestError(
                    f"Chunk {i} has {len(row)} levels, expected {width}."
                )
            if row[0] < 0:
                raise ManifestError(f"Chunk {i} has a negative level-0 size.")
            for n in range(1, width):
                if row[n] <= row[n - 1]:
                    raise ManifestError(
                        f"Chunk {i} sizes must strictly increase with level, "
                        f"level {n} is {row[n]} after {row[n - 1]}."
                    )
        if self.level_names and len(self.level_names) != width:
            raise ManifestError(
                f"{len(self.level_names)} level names given for {width} levels."
            )
        if self.nominal_mbps and len(self.nominal_mbps) != width:
            raise ManifestError(
                f"{len(self.nominal_mbps)} nominal rates given for {width} levels."
            )

    @property
    def num_chunks(self) -> int:
        """Number of chunks (V)."""
        return len(self.sizes)

    @property
    def num_levels(self) -> int:
        """Number of quality levels (N + 1)."""
        return len(self.sizes[0])

    @property
    def top_level(self) -> int:
        """Highest level index (N)."""
        return self.num_levels - 1

    def size(self, chunk: int, level: int):
        """Size X_{n,i} of a chunk (1-based) at a level."""
        return self.sizes[chunk - 1][level]

    def increment(self, chunk: int, level: int):
        """Incremental size Y_{n,i} over the level below."""
        row = self.sizes[chunk - 1]
        return row[0] if level == 0 else row[level] - row[level - 1]

    @cached_property
    def is_cbr(self) -> bool:
        """Whether every level has one size across all chunks."""
        return all(row == self.sizes[0] for row in self.sizes)

    @cached_property
    def level_rates(self) -> tuple:
        """Bitrate of each level in bytes per second.

        Nominal rates when the manifest carries them, otherwise the mean size
        of the level divided by the chunk duration.
        """
        if self.nominal_mbps:
            return tuple(rate * BYTES_PER_MBPS for rate in self.nominal_mbps)
        frame = pd.DataFrame(self.sizes)
        return tuple(float(v) for v in frame.mean() / self.chunk_duration_s)

    def level_of(self, chunk: int, size) -> int | None:
        """Level whose size matches, or None."""
        try:
            return self.sizes[chunk - 1].index(size)
        except ValueError:
            return None


@dataclass(frozen=True)
class BandwidthTimeline:
    """Available bandwidth per 1-second slot, starting at slot 1."""

    samples: tuple

    def __post_init__(self):
        """Check every sample."""
        object.__setattr__(self, "samples", tuple(self.samples))
        for j, value in enumerate(self.samples, start=1):
            if isinstance(value, float) and not math.isfinite(value):
                raise TraceError(f"Slot {j} bandwidth is not finite.")
            if value < 0:
                raise TraceError(f"Slot {j} bandwidth {value} is negative.")

    @property
    def horizon(self) -> int:
        """Last slot with a sample."""
        return len(self.samples)

    def at(self, slot: int):
        """B(j), zero outside the timeline."""
        if 1 <= slot <= len(self.samples):
            return self.samples[slot - 1]
        return 0

    @cached_property
    def cumulative(self) -> tuple:
        """Prefix sums with ``cumulative[j] = c(j)`` and ``c(0) = 0``."""
        return (0, *accumulate(self.samples))

    def upto(self, slot: int):
        """c(j), clamped to the timeline."""
        return self.cumulative[min(max(slot, 0), len(self.samples))]

    def extended(self, length: int):
        """Timeline of at least ``length`` slots, holding the last sample."""
        if length <= len(self.samples) or not self.samples:
            return self
        tail = (self.samples[-1],) * (length - len(self.samples))
        return BandwidthTimeline(self.samples + tail)

    def to_series(self) -> pd.Series:
        """Samples as a pandas Series indexed by slot."""
        return pd.Series(
            self.samples,
            index=pd.RangeIndex(1, len(self.samples) + 1, name="Slot"),
            name="Bandwidth",
            dtype=float,
        )


@dataclass(frozen=True)
class WindowContext:
    """The chunks decided together and the state they are decided in.

    ``prior_stall_s`` is s = S plus every stall before the window, so chunk i
    has base deadline ``s + (i - 1) * L``. ``buffered_deadlines`` lists the
    deadlines of chunks already downloaded but not yet played.
    """

    first_chunk: int
    last_chunk: int
    current_slot: int
    prior_stall_s: int
    buffer_cap_s: float
    predicted_bandwidth: BandwidthTimeline
    buffered_deadlines: tuple = ()

    def __post_init__(self):
        """Check the window bounds."""
        object.__setattr__(
            self, "buffered_deadlines", tuple(sorted(self.buffered_deadlines))
        )
        if self.first_chunk < 1 or self.last_chunk < self.first_chunk:
            raise StructuralError(
                f"Window {self.first_chunk}..{self.last_chunk} is empty."
            )
        if self.current_slot < 1:
            raise StructuralError(
                f"Current slot must be at least 1, got {self.current_slot}."
            )

    @property
    def size(self) -> int:
        """Number of chunks in the window (W after clipping)."""
        return self.last_chunk - self.first_chunk + 1

    @property
    def chunks(self) -> range:
        """Chunk indices of the window."""
        return range(self.first_chunk, self.last_chunk + 1)

    def check_against(self, manifest: VideoManifest):
        """Raise if the window does not fit the manifest."""
        if self.last_chunk > manifest.num_chunks:
            raise StructuralError(
                f"Window ends at chunk {self.last_chunk} but the manifest has "
                f"{manifest.num_chunks} chunks."
            )
        if self.buffer_cap_s < manifest.chunk_duration_s:
            raise StructuralError(
                f"Buffer cap {self.buffer_cap_s}s holds no "
                f"{manifest.chunk_duration_s}s chunk."
            )

    def base_deadline(self, chunk: int, manifest: VideoManifest) -> int:
        """Deadline of a chunk before any stall inside the window."""
        return self.prior_stall_s + (chunk - 1) * manifest.chunk_duration_s

    def buffer_places(self, manifest: VideoManifest) -> int:
        """How many chunks fit in the buffer at once (K)."""
        return int(self.buffer_cap_s // manifest.chunk_duration_s)

    def live_buffered(self) -> tuple:
        """Buffered deadlines that still occupy the buffer at the current slot."""
        return tuple(t for t in self.buffered_deadlines if t > self.current_slot)

    def release_slot(self, position: int, deadlines, places: int) -> int:
        """First slot the window chunk at ``position`` may receive bytes in.

        In-order fetching with ``places`` buffer places lets a chunk start only
        once the chunk ``places`` ahead of it has reached its deadline.
        """
        buffered = self.live_buffered()
        index = len(buffered) + position - places
        if index < 0:
            return self.current_slot
        if index < len(buffered):
            prior = buffered[index]
        else:
            prior = deadlines[index - len(buffered)]
        return max(self.current_slot, prior)


@dataclass(frozen=True)
class SkipRecord:
    """A chunk left below a level, with the reason."""

    chunk: int
    level: int
    reason: str


@dataclass(frozen=True)
class DecisionSet:
    """Level indicators, sizes, stalls and deadlines of one window.

    ``indicators[n][k]`` is I_{n,i} for chunk ``i = first_chunk + k``;
    ``stall_before`` holds d(i) relative to ``prior_stall_s``.
    """

    first_chunk: int
    indicators: tuple
    target_size: tuple
    stall_before: tuple
    deadline: tuple
    prior_stall_s: int = 0
    skipped: tuple = ()
    iterations: int = 0

    def __post_init__(self):
        """Freeze the nested sequences."""
        object.__setattr__(
            self, "indicators", tuple(tuple(row) for row in self.indicators)
        )
        for name in ("target_size", "stall_before", "deadline", "skipped"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @classmethod
    def from_levels(
        cls, manifest, first_chunk, levels, stall_before, deadline, **kwargs
    ):
        """Build a decision set from one chosen level per chunk."""
        width = manifest.num_levels
        indicators = tuple(
            tuple(1 if level >= n else 0 for level in levels) for n in range(width)
        )
        sizes = tuple(
            manifest.size(first_chunk + k, level) for k, level in enumerate(levels)
        )
        return cls(
            first_chunk, indicators, sizes, stall_before, deadline, **kwargs
        )

    @property
    def num_chunks(self) -> int:
        """Number of chunks decided."""
        return len(self.target_size)

    @property
    def last_chunk(self) -> int:
        """Index C of the last chunk decided."""
        return self.first_chunk + self.num_chunks - 1

    @property
    def chunks(self) -> range:
        """Chunk indices of the window."""
        return range(self.first_chunk, self.last_chunk + 1)

    @property
    def levels(self) -> tuple:
        """Highest level n with I_{0..n} all set, per chunk."""
        result = []
        for k in range(self.num_chunks):
            level = -1
            for row in self.indicators:
                if not row[k]:
                    break
                level += 1
            result.append(level)
        return tuple(result)

    @property
    def total_stall(self) -> int:
        """d(C), the stall the window adds."""
        return self.stall_before[-1] if self.stall_before else 0

    def level_counts(self) -> tuple:
        """Number of chunks at level >= n, for every n."""
        return tuple(sum(row) for row in self.indicators)


@dataclass(frozen=True)
class FetchRecord:
    """Bytes of one level of one chunk fetched in one slot (z_n(i, j))."""

    chunk: int
    level: int
    slot: int
    amount: float


@dataclass(frozen=True)
class FetchSchedule:
    """Per-slot fetched amounts of a window, the witness of its feasibility.

    ``buffer_cap_s``, ``start_slot`` and ``prior_deadlines`` record the
    conditions the schedule was built under.
    """

    records: tuple
    chunk_duration_s: int
    buffer_cap_s: float
    start_slot: int = 1
    prior_deadlines: tuple = field(default=())

    def __post_init__(self):
        """Freeze the records."""
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "prior_deadlines", tuple(self.prior_deadlines))

    def per_chunk(self) -> dict:
        """Aggregate x(i, j) keyed by (chunk, slot)."""
        totals = {}
        for rec in self.records:
            key = (rec.chunk, rec.slot)
            totals[key] = totals.get(key, 0) + rec.amount
        return totals

    def per_slot(self) -> dict:
        """Total fetched per slot."""
        totals = {}
        for rec in self.records:
            totals[rec.slot] = totals.get(rec.slot, 0) + rec.amount
        return totals

    def first_slots(self) -> dict:
        """First slot any byte of each chunk was fetched in."""
        first = {}
        for rec in self.records:
            if rec.amount > 0 and rec.slot < first.get(rec.chunk, rec.slot + 1):
                first[rec.chunk] = rec.slot
        return first

    def buffer_occupancy(self, deadlines: dict, last_slot=None) -> pd.Series:
        """Buffer occupancy bf(j) in seconds.

        Parameters
        ----------
        deadlines : dict
            Deadline slot of every chunk in the schedule.
        last_slot : int, optional
            Last slot to report, defaults to the last deadline.

        Returns
        -------
        pandas.Series
            Seconds of started, unplayed video held at the end of each slot.
        """
        first = self.first_slots()
        if last_slot is None:
            last_slot = max([*deadlines.values(), *first.values(), self.start_slot])
        slots = range(self.start_slot, last_slot + 1)
        occupancy = []
        for t in slots:
            count = sum(1 for d in self.prior_deadlines if d > t)
            count += sum(
                1 for chunk, s in first.items() if s <= t < deadlines.get(chunk, 0)
            )
            occupancy.append(count * self.chunk_duration_s)
        return pd.Series(
            occupancy,
            index=pd.Index(list(slots), name="Slot"),
            name="Buffer",
            dtype=float,
        )
