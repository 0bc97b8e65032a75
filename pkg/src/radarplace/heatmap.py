"""Range-azimuth heatmap generation.

The IF cube is reduced to a real power matrix by an FFT over fast time
(range), an FFT over the antenna axis (angle), a coherent sum over chirps
and a final magnitude.  The angle axis is FFT-shifted and calibrated
through the arcsine phase-to-angle map so columns run over monotonically
increasing azimuth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AngleAmbiguityError, ConfigError, DimensionError
from .radar import IFCube, RadarConfig


def range_from_frequency(f_if: float, cfg: RadarConfig) -> float:
    """Reflector range for a beat frequency: d = f_IF * c / (2 * slope)."""
    if f_if < 0:
        raise ConfigError(f"beat frequency must be >= 0, got {f_if}")
    return f_if * cfg.c / (2.0 * cfg.slope)


def angle_from_phase(omega: float, cfg: RadarConfig) -> float:
    """Azimuth for a per-antenna phase step: arcsin(lambda*omega / (2*pi*l))."""
    arg = cfg.wavelength * omega / (2.0 * math.pi * cfg.antenna_spacing)
    if abs(arg) > 1.0:
        raise AngleAmbiguityError(
            f"phase step {omega:.4f} rad maps outside the arcsine domain "
            f"(argument {arg:.4f})"
        )
    return math.asin(arg)


def resize_cube(cube: IFCube, target_rows: int, target_cols: int) -> IFCube:
    """Crop fast time and zero-pad the antenna axis of an IF cube.

    The fast-time axis is truncated to its first ``target_rows`` samples;
    the antenna axis keeps the physical channels first and appends zeros up
    to ``target_cols``.  Chirps are untouched.  Zero padding interpolates
    the angle spectrum without moving its peaks.
    """
    n_s, n_c, n_r = cube.dims
    if target_rows > n_s:
        raise DimensionError(
            f"cannot extend fast-time axis: {target_rows} > {n_s} samples"
        )
    if target_rows < 1 or target_cols < 1:
        raise DimensionError("target dims must be >= 1")
    if target_cols < n_r:
        raise DimensionError(
            f"cannot drop antennas: target_cols {target_cols} < {n_r}"
        )
    out = np.zeros((target_rows, n_c, target_cols), dtype=np.complex128)
    out[:, :, :n_r] = cube.data[:target_rows, :, :]
    return IFCube(out)


@dataclass
class Heatmap:
    """Real range-azimuth power matrix with axis calibration."""

    values: np.ndarray      # (rows, cols), linear magnitude, >= 0
    range_bin_m: float      # metres per range row
    angle_axis: np.ndarray  # per-column azimuth, rad, strictly increasing

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.angle_axis = np.asarray(self.angle_axis, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"heatmap must be 2-D, got {self.values.shape}")
        if self.angle_axis.shape != (self.values.shape[1],):
            raise DimensionError("angle_axis length must equal column count")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ConfigError("heatmap values must be finite and >= 0")
        if self.angle_axis.size > 1 and not np.all(np.diff(self.angle_axis) > 0):
            raise ConfigError("angle_axis must be strictly increasing")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def _shifted_phase_bins(n_cols: int) -> np.ndarray:
    """Wrapped per-column phase steps omega in [-pi, pi), ascending."""
    return 2.0 * math.pi * (np.arange(n_cols) - n_cols // 2) / n_cols


def angle_axis_for(cfg: RadarConfig, n_cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth per angle column plus the mask of resolvable columns.

    Columns whose wrapped phase maps outside the arcsine domain (spacing
    wider than half a wavelength) are masked out.
    """
    omega = _shifted_phase_bins(n_cols)
    arg = cfg.wavelength * omega / (2.0 * math.pi * cfg.antenna_spacing)
    valid = np.abs(arg) <= 1.0
    axis = np.arcsin(np.clip(arg, -1.0, 1.0))
    return axis, valid


def angle_to_col(azimuth_rad: float, cfg: RadarConfig, n_cols: int) -> int:
    """Nearest angle column for a target azimuth."""
    axis, valid = angle_axis_for(cfg, n_cols)
    idx = np.flatnonzero(valid)
    return int(idx[np.argmin(np.abs(axis[idx] - azimuth_rad))])


def range_to_row(range_m: float, cfg: RadarConfig, n_rows: int) -> int:
    """Nearest range row for a target range (beat-frequency bin)."""
    f_if = cfg.beat_frequency(range_m)
    return int(round(f_if * n_rows / cfg.sample_rate)) % n_rows


def generate_heatmap(
    cube: IFCube, cfg: RadarConfig, max_range_m: float | None = None, window: str = "rect"
) -> Heatmap:
    """FFT cascade from IF cube to range-azimuth heatmap.

    FFT over fast time, FFT over antennas, coherent chirp sum, magnitude.
    ``window`` may be "rect" (default) or "hann" applied over fast time.
    Rows beyond ``max_range_m`` are discarded when given.
    """
    data = cube.data
    if not np.all(np.isfinite(data)):
        raise ConfigError("IF cube contains non-finite values")
    if window == "hann":
        data = data * np.hanning(data.shape[0])[:, None, None]
    elif window != "rect":
        raise ConfigError(f"unknown window {window!r}")

    spec = np.fft.fft(data, axis=0)          # fast time -> range
    spec = np.fft.fft(spec, axis=2)          # antennas -> angle
    spec = np.fft.fftshift(spec, axes=2)     # ascending wrapped phase
    summed = spec.sum(axis=1)                # coherent chirp integration
    values = np.abs(summed)

    n_rows, n_cols = values.shape
    axis, valid = angle_axis_for(cfg, n_cols)
    values = values[:, valid]
    axis = axis[valid]

    # FFT bin spacing in range uses the cube's fast-time length, which may
    # have been cropped before the transform.
    range_bin_m = cfg.sample_rate / n_rows * cfg.c / (2.0 * cfg.slope)
    if max_range_m is not None:
        keep = int(math.floor(max_range_m / range_bin_m)) + 1
        keep = max(1, min(keep, n_rows))
        values = values[:keep, :]
    return Heatmap(values, range_bin_m, axis)
