"""Conditioning of raw webcam gaze traces.

Raw traces come in unevenly sampled and noisy. The conditioning pipeline is
moving-average denoising followed by uniform resampling with linear
interpolation, in that order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import TraceError

#: Default sliding-window length (samples) for the moving average.
DEFAULT_SMOOTH_WINDOW = 50
#: Default uniform resampling rate in Hz.
DEFAULT_RESAMPLE_HZ = 20.0

_RATE_TOL_MS = 1e-6


@dataclass(frozen=True)
class GazeSample:
    """One gaze estimate: time in ms since session start, screen pixels."""

    t: float
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.t) and self.t >= 0):
            raise TraceError(f"sample time must be finite and >= 0, got {self.t}")
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise TraceError(f"sample coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class GazeTrace:
    """A time-ordered gaze trace for one session.

    ``rate_hz`` is set only when the trace is known to be uniformly sampled;
    conditioning operations clear or set it accordingly.
    """

    session_id: str
    samples: tuple[GazeSample, ...]
    rate_hz: float | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        times = [s.t for s in self.samples]
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                raise TraceError(
                    f"timestamps must be strictly increasing; sample {i} has "
                    f"t={times[i]} after t={times[i - 1]}"
                )
        if self.rate_hz is not None:
            if self.rate_hz <= 0:
                raise TraceError(f"rate_hz must be positive, got {self.rate_hz}")
            step = 1000.0 / self.rate_hz
            for i in range(1, len(times)):
                if abs((times[i] - times[i - 1]) - step) > _RATE_TOL_MS:
                    raise TraceError(
                        f"declared rate {self.rate_hz} Hz but gap at sample {i} "
                        f"is {times[i] - times[i - 1]} ms"
                    )

    def __len__(self):
        return len(self.samples)

    @property
    def t_start(self) -> float:
        return self.samples[0].t

    @property
    def t_end(self) -> float:
        return self.samples[-1].t

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples], dtype=np.float64)

    def xy(self) -> np.ndarray:
        """Coordinates as an (n, 2) array."""
        return np.array([[s.x, s.y] for s in self.samples], dtype=np.float64).reshape(-1, 2)

    @staticmethod
    def from_arrays(session_id: str, t, xy, rate_hz: float | None = None) -> "GazeTrace":
        samples = tuple(GazeSample(float(ti), float(p[0]), float(p[1])) for ti, p in zip(t, xy))
        return GazeTrace(session_id, samples, rate_hz)


def smooth(trace: GazeTrace, window: int = DEFAULT_SMOOTH_WINDOW) -> GazeTrace:
    """Moving-average denoising with a trailing window.

    Sample ``i`` becomes the mean of samples ``max(0, i - window + 1) .. i``,
    so the window is causal and truncated at the start of the trace.
    Timestamps are preserved; any declared uniform rate is cleared because
    smoothing says nothing about sampling uniformity downstream.
    """
    if window < 1:
        raise TraceError(f"window must be >= 1, got {window}")
    if len(trace) == 0:
        raise TraceError("cannot smooth an empty trace")

    xy = trace.xy()
    csum = np.cumsum(xy, axis=0)
    n = len(trace)
    out = np.empty_like(xy)
    for i in range(n):
        lo = max(0, i - window + 1)
        total = csum[i] - (csum[lo - 1] if lo > 0 else 0.0)
        out[i] = total / (i - lo + 1)
    return GazeTrace.from_arrays(trace.session_id, trace.times(), out, rate_hz=None)


def resample(trace: GazeTrace, rate_hz: float = DEFAULT_RESAMPLE_HZ) -> GazeTrace:
    """Resample onto a uniform grid with linear interpolation.

    The grid is ``t_first, t_first + step, ...`` with ``step = 1000 / rate_hz``;
    grid points past the last raw sample are not emitted (no extrapolation).
    """
    if rate_hz <= 0:
        raise TraceError(f"rate_hz must be positive, got {rate_hz}")
    if len(trace) < 2:
        raise TraceError(f"resampling needs at least 2 samples, got {len(trace)}")

    step = 1000.0 / rate_hz
    t = trace.times()
    xy = trace.xy()
    span = t[-1] - t[0]
    # Tolerate float error so an exact multiple of the step emits the endpoint.
    n_grid = int(np.floor(span / step + 1e-9)) + 1
    grid = t[0] + step * np.arange(n_grid)
    out_x = np.interp(grid, t, xy[:, 0])
    out_y = np.interp(grid, t, xy[:, 1])
    return GazeTrace.from_arrays(
        trace.session_id, grid, np.stack([out_x, out_y], axis=1), rate_hz=rate_hz
    )


def condition(
    trace: GazeTrace,
    window: int = DEFAULT_SMOOTH_WINDOW,
    rate_hz: float = DEFAULT_RESAMPLE_HZ,
) -> GazeTrace:
    """Full conditioning pipeline: denoise first, then resample."""
    return resample(smooth(trace, window), rate_hz)


def write_trace(path, trace: GazeTrace) -> None:
    """Write a trace as JSON Lines: a header line, then one sample per line."""
    with open(path, "w", encoding="utf-8") as f:
        header = {"session_id": trace.session_id}
        if trace.rate_hz is not None:
            header["rate_hz"] = trace.rate_hz
        f.write(json.dumps(header) + "\n")
        for s in trace.samples:
            f.write(json.dumps({"t": s.t, "x": s.x, "y": s.y}) + "\n")


def read_trace(path) -> GazeTrace:
    """Read a trace written by :func:`write_trace`."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in (line.strip() for line in f) if ln]
    if not lines:
        raise TraceError(f"{path}: empty trace file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise TraceError(f"{path}: invalid JSON: {exc}") from exc
    if "session_id" not in header:
        raise TraceError(f"{path}: header line must carry session_id")
    samples = tuple(GazeSample(float(r["t"]), float(r["x"]), float(r["y"])) for r in records)
    return GazeTrace(str(header["session_id"]), samples, header.get("rate_hz"))
