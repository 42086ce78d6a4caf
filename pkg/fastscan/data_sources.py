"""Reading and writing manifests, traces and results; synthetic generators."""

import csv
import json
import math
from pathlib import Path

import numpy as np

from fastscan.model import (
    BYTES_PER_MBPS,
    BandwidthTimeline,
    InvalidParameterError,
    ManifestError,
    TraceError,
    VideoManifest,
)

TRACE_MODELS = ("constant", "markov-2state", "ou")
MARKOV_SWITCH_PROBABILITY = 0.1
OU_REVERSION = 0.1
MAX_JITTER_PCT = 25


def get_default_ladder():
    """Return the default bitrate ladder.

    Returns
    -------
    list of (str, float)
        Level name and nominal rate in Mbps, lowest level first.
    """
    script_dir = Path(__file__).parent
    template_path = (script_dir / "config/default_ladder.csv").resolve()
    ladder = []
    with open(template_path) as csv_file:
        reader = csv.DictReader(csv_file)
        for row in reader:
            ladder.append((row["name"], float(row["nominal_mbps"])))
    return ladder


def manifest_from_dict(data: dict) -> VideoManifest:
    """Build a manifest from its JSON mapping.

    Parameters
    ----------
    data : dict
        ``{chunk_duration_s, startup_delay_s, levels: [{name, nominal_mbps}],
        chunks: [{sizes_bytes: [...]}]}``.

    Returns
    -------
    VideoManifest
        The validated manifest.

    Raises
    ------
    ManifestError
        If a field is missing or malformed, or a manifest invariant fails.
    """
    try:
        levels = data["levels"]
        chunks = data["chunks"]
        sizes = [chunk["sizes_bytes"] for chunk in chunks]
        duration = data["chunk_duration_s"]
        startup = data.get("startup_delay_s", duration)
    except (KeyError, TypeError) as error:
        raise ManifestError(f"Manifest is missing field {error}.") from error
    for i, row in enumerate(sizes, start=1):
        if len(row) != len(levels):
            raise ManifestError(
                f"Chunk {i} lists {len(row)} sizes for {len(levels)} levels."
            )
    return VideoManifest(
        duration,
        startup,
        sizes,
        level_names=[level.get("name", f"level{n}") for n, level in enumerate(levels)],
        nominal_mbps=[level["nominal_mbps"] for level in levels]
        if all("nominal_mbps" in level for level in levels)
        else (),
    )


def manifest_to_dict(manifest: VideoManifest) -> dict:
    """JSON mapping of a manifest."""
    names = manifest.level_names or tuple(
        f"level{n}" for n in range(manifest.num_levels)
    )
    levels = []
    for n, name in enumerate(names):
        level = {"name": name}
        if manifest.nominal_mbps:
            level["nominal_mbps"] = manifest.nominal_mbps[n]
        levels.append(level)
    return {
        "chunk_duration_s": manifest.chunk_duration_s,
        "startup_delay_s": manifest.startup_delay_s,
        "levels": levels,
        "chunks": [{"sizes_bytes": list(row)} for row in manifest.sizes],
    }


def read_manifest(path) -> VideoManifest:
    """Load a manifest JSON file."""
    try:
        with open(path) as json_file:
            data = json.load(json_file)
    except json.JSONDecodeError as error:
        raise ManifestError(
            f"{path}: line {error.lineno}: invalid JSON ({error.msg})."
        ) from error
    return manifest_from_dict(data)


def write_manifest(manifest: VideoManifest, path):
    """Save a manifest as JSON."""
    with open(path, "w") as json_file:
        json.dump(manifest_to_dict(manifest), json_file, indent=2, sort_keys=True)
        json_file.write("\n")


def parse_trace(text: str) -> BandwidthTimeline:
    """Parse a trace: one Mbps value per line for consecutive 1-second slots.

    Blank lines and lines starting with ``#`` are skipped.

    Raises
    ------
    TraceError
        Naming the line of a value that is not a finite, non-negative number,
        or if there are no samples.
    """
    samples = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            value = float(stripped)
        except ValueError as error:
            raise TraceError(
                f"line {number}: '{stripped}' is not a number.", line=number
            ) from error
        if not math.isfinite(value):
            raise TraceError(f"line {number}: value is not finite.", line=number)
        if value < 0:
            raise TraceError(
                f"line {number}: bandwidth {value} is negative.", line=number
            )
        samples.append(value * BYTES_PER_MBPS)
    if not samples:
        raise TraceError("Trace holds no samples.")
    return BandwidthTimeline(samples)


def read_trace(path) -> BandwidthTimeline:
    """Load a trace file."""
    with open(path) as trace_file:
        return parse_trace(trace_file.read())


def format_trace(values_mbps) -> str:
    """Trace text, one value per line."""
    return "".join(f"{round(float(v), 6)!r}\n" for v in values_mbps)


def write_trace(values_mbps, path):
    """Save Mbps values as a trace file."""
    with open(path, "w") as trace_file:
        trace_file.write(format_trace(values_mbps))


def generate_trace(
    length: int, mean: float, stddev: float = 0.0, seed: int = 0, model="constant"
) -> np.ndarray:
    """Synthetic bandwidth in Mbps for ``length`` slots.

    Parameters
    ----------
    length : int
        Number of 1-second slots.
    mean : float
        Mean bandwidth in Mbps.
    stddev : float
        Spread: the half distance between the two Markov states, or the
        stationary standard deviation of the Ornstein-Uhlenbeck process.
    seed : int
        Seed of the random generator.
    model : str
        One of ``constant``, ``markov-2state`` and ``ou``.

    Returns
    -------
    numpy.ndarray
        Non-negative samples.
    """
    if length < 1:
        raise InvalidParameterError(f"Trace length must be at least 1, got {length}.")
    if mean < 0 or stddev < 0:
        raise InvalidParameterError(
            f"Mean and stddev must be non-negative, got {mean} and {stddev}."
        )
    if model not in TRACE_MODELS:
        raise InvalidParameterError(
            f"Unknown trace model '{model}'. Available models are {list(TRACE_MODELS)}."
        )
    rng = np.random.default_rng(seed)
    if model == "constant":
        return np.full(length, float(mean))
    if model == "markov-2state":
        levels = np.array([max(0.0, mean - stddev), mean + stddev])
        switches = rng.random(length) < MARKOV_SWITCH_PROBABILITY
        state = int(rng.integers(2))
        states = np.empty(length, dtype=int)
        for j in range(length):
            if switches[j]:
                state = 1 - state
            states[j] = state
        return levels[states]
    noise = rng.standard_normal(length)
    spread = stddev * math.sqrt(2 * OU_REVERSION - OU_REVERSION**2)
    values = np.empty(length)
    value = float(mean)
    for j in range(length):
        value += OU_REVERSION * (mean - value) + spread * noise[j]
        values[j] = value
    return np.clip(values, 0.0, None)


def generate_manifest(
    num_chunks: int,
    num_levels: int = 5,
    chunk_duration_s: int = 4,
    startup_delay_s: int | None = None,
    jitter_pct: float = 0.0,
    seed: int = 0,
    nominal_mbps=None,
) -> VideoManifest:
    """Synthetic manifest sized from a bitrate ladder.

    Each size is ``rate * duration`` in bytes, scaled by a uniform factor in
    ``1 +- jitter_pct / 100`` (no jitter gives a constant-bitrate manifest).

    Parameters
    ----------
    num_chunks : int
        Number of chunks.
    num_levels : int
        Number of levels, taken from the bottom of the ladder.
    chunk_duration_s : int
        Chunk duration.
    startup_delay_s : int, optional
        Startup delay, one chunk duration by default.
    jitter_pct : float
        Size variation in percent, below 25.
    seed : int
        Seed of the random generator.
    nominal_mbps : sequence of float, optional
        Ladder to use instead of the default one.

    Returns
    -------
    VideoManifest
        The manifest.
    """
    if nominal_mbps is None:
        ladder = get_default_ladder()
        if num_levels > len(ladder):
            raise InvalidParameterError(
                f"The default ladder has {len(ladder)} levels, {num_levels} requested."
            )
        names = [name for name, _ in ladder[:num_levels]]
        rates = [rate for _, rate in ladder[:num_levels]]
    else:
        rates = list(nominal_mbps)[:num_levels]
        if len(rates) < num_levels:
            raise InvalidParameterError(
                f"{len(rates)} nominal rates given for {num_levels} levels."
            )
        names = [f"level{n}" for n in range(num_levels)]
    if num_chunks < 1:
        raise InvalidParameterError(f"num_chunks must be at least 1, got {num_chunks}.")
    if not 0 <= jitter_pct < MAX_JITTER_PCT:
        raise InvalidParameterError(
            f"Jitter must lie in [0, {MAX_JITTER_PCT}) percent, got {jitter_pct}."
        )
    rng = np.random.default_rng(seed)
    nominal = np.array(rates) * BYTES_PER_MBPS * chunk_duration_s
    factors = 1 + rng.uniform(-jitter_pct, jitter_pct, (num_chunks, num_levels)) / 100
    if jitter_pct == 0:
        factors = np.ones((num_chunks, num_levels))
    sizes = np.rint(nominal * factors).astype(int)
    return VideoManifest(
        chunk_duration_s,
        chunk_duration_s if startup_delay_s is None else startup_delay_s,
        sizes.tolist(),
        level_names=names,
        nominal_mbps=rates,
    )


def json_default(value):
    """Convert numpy scalars for ``json.dump``."""
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable.")


def session_export(log, out_prefix):
    """Write a session log to ``<out_prefix>.json`` and ``<out_prefix>.csv``."""
    out_prefix = str(out_prefix)
    with open(out_prefix + ".json", "w") as json_file:
        json.dump(
            log.to_dict(), json_file, indent=2, sort_keys=True, default=json_default
        )
        json_file.write("\n")
    log.to_frame().to_csv(out_prefix + ".csv", index=False)


def comparison_export(report, out_prefix):
    """Write a comparison report to ``<out_prefix>.json`` and ``<out_prefix>.csv``."""
    out_prefix = str(out_prefix)
    summary = report.summary.to_dict() if report.summary is not None else None
    data = {
        "summary": summary,
        "errors": [
            {"trace": trace, "label": label, "error": error}
            for (trace, label), error in sorted(report.errors.items())
        ],
    }
    with open(out_prefix + ".json", "w") as json_file:
        json.dump(data, json_file, indent=2, sort_keys=True, default=json_default)
        json_file.write("\n")
    if report.summary is not None:
        report.summary.rows.to_csv(out_prefix + ".csv", index=False)
