"""FMCW radar forward model.

Point-scatterer scenes are turned into complex IF sample cubes with known
ground truth, so every downstream stage can be checked against arithmetic
on the scene instead of recorded data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RangeAliasingError

SPEED_OF_LIGHT = 299792458.0


@dataclass(frozen=True)
class RadarConfig:
    """Chirp and antenna-array parameters of the sensor.

    Defaults are engineering choices for a desk-scale 77 GHz-class device;
    the exact production part's chirp profile is not public.
    """

    slope: float = 30.0e12            # chirp slope, Hz/s
    wavelength: float = 3.9e-3        # carrier wavelength, m
    antenna_spacing: float = 1.95e-3  # receive element spacing, m
    sample_rate: float = 1.0e7        # ADC rate, Hz
    n_samples: int = 256              # fast-time samples per chirp
    n_chirps: int = 64
    n_antennas: int = 8               # virtual receive channels
    fov_deg: float = 120.0            # usable azimuth field of view
    gain_taper_exp: float = 1.0       # cosine-power antenna taper; 0 disables
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.slope <= 0 or self.wavelength <= 0 or self.antenna_spacing <= 0:
            raise ConfigError("slope, wavelength and antenna_spacing must be positive")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if min(self.n_samples, self.n_chirps, self.n_antennas) < 1:
            raise ConfigError("n_samples, n_chirps, n_antennas must be >= 1")
        if not (0 < self.fov_deg <= 180.0):
            raise ConfigError("fov_deg must be in (0, 180]")
        if self.gain_taper_exp < 0:
            raise ConfigError("gain_taper_exp must be >= 0")
        if self.antenna_spacing > self.wavelength / 2 + 1e-15:
            warnings.warn(
                "antenna_spacing > wavelength/2: angle estimates are ambiguous",
                stacklevel=2,
            )

    @property
    def max_range(self) -> float:
        """Unambiguous range: beat frequencies above sample_rate alias."""
        return self.sample_rate * self.c / (2.0 * self.slope)

    def beat_frequency(self, range_m: float) -> float:
        """Beat (IF) frequency of a reflector at the given range."""
        return 2.0 * range_m * self.slope / self.c

    def phase_step(self, azimuth_rad: float) -> float:
        """Per-antenna phase progression of a reflector at the given azimuth."""
        return 2.0 * math.pi * self.antenna_spacing * math.sin(azimuth_rad) / self.wavelength


@dataclass(frozen=True)
class Scatterer:
    """One ideal point reflector, polar coordinates about the sensor."""

    range: float          # m
    azimuth: float        # rad; world azimuth may exceed the sensor FOV
    amplitude: float = 1.0

    def __post_init__(self):
        if self.range < 0:
            raise ConfigError(f"scatterer range must be >= 0, got {self.range}")
        if self.amplitude <= 0:
            raise ConfigError(f"scatterer amplitude must be > 0, got {self.amplitude}")


@dataclass
class IFCube:
    """Complex ADC samples, indexed (sample i, chirp j, antenna k)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 3:
            raise ConfigError(f"IF cube must be 3-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("IF cube contains non-finite values")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def matches(self, cfg: RadarConfig) -> bool:
        return self.dims == (cfg.n_samples, cfg.n_chirps, cfg.n_antennas)


@dataclass(frozen=True)
class PlatformConfig:
    """Rotating-platform sweep parameters."""

    angular_speed: float = 150.0  # deg/s
    frame_rate: float = 10.0      # Hz
    sweep_extent: float = 180.0   # deg, swept back and forth
    jitter_std: float = 0.0       # deg, per-frame step perturbation

    def __post_init__(self):
        if self.angular_speed <= 0:
            raise ConfigError("angular_speed must be > 0")
        if self.frame_rate <= 0:
            raise ConfigError("frame_rate must be > 0")
        if self.sweep_extent <= 0:
            raise ConfigError("sweep_extent must be > 0")
        if self.jitter_std < 0:
            raise ConfigError("jitter_std must be >= 0")

    @property
    def nominal_step(self) -> float:
        """Nominal heading increment per frame, deg."""
        return self.angular_speed / self.frame_rate


def simulate_if_cube(
    scene: list[Scatterer],
    cfg: RadarConfig,
    noise_std: float = 0.0,
    seed: int = 0,
) -> IFCube:
    """Forward-simulate the IF cube of a static point-scatterer scene.

    Each scatterer contributes a fast-time tone at its beat frequency and a
    linear phase progression across antennas; chirps are identical (static
    scene, zero Doppler).  The antenna taper attenuates off-boresight
    reflectors by cos(azimuth)**gain_taper_exp.  Noise is circularly
    symmetric complex Gaussian with total standard deviation ``noise_std``
    per element.
    """
    if noise_std < 0:
        raise ConfigError("noise_std must be >= 0")
    n_s, n_c, n_r = cfg.n_samples, cfg.n_chirps, cfg.n_antennas
    cube = np.zeros((n_s, n_c, n_r), dtype=np.complex128)

    i = np.arange(n_s)
    k = np.arange(n_r)
    for sc in scene:
        if sc.range >= cfg.max_range:
            raise RangeAliasingError(
                f"scatterer at {sc.range:.2f} m aliases: unambiguous range is "
                f"{cfg.max_range:.2f} m"
            )
        if abs(sc.azimuth) >= math.pi / 2:
            raise ConfigError(
                f"scatterer azimuth {sc.azimuth:.3f} rad outside sensor half-space"
            )
        amp = sc.amplitude
        if cfg.gain_taper_exp > 0:
            amp *= max(math.cos(sc.azimuth), 0.0) ** cfg.gain_taper_exp
        f_if = cfg.beat_frequency(sc.range)
        omega = cfg.phase_step(sc.azimuth)
        tone = np.exp(2j * math.pi * f_if * i / cfg.sample_rate)
        steer = np.exp(1j * omega * k)
        cube += amp * tone[:, None, None] * steer[None, None, :]

    if noise_std > 0:
        rng = np.random.default_rng(seed)
        scale = noise_std / math.sqrt(2.0)
        cube += scale * (
            rng.standard_normal(cube.shape) + 1j * rng.standard_normal(cube.shape)
        )
    return IFCube(cube)


def sweep_headings(pcfg: PlatformConfig, n_frames: int, seed: int = 0) -> np.ndarray:
    """Triangle-wave heading trajectory over [0, sweep_extent], deg.

    Frame 0 is at heading 0; each subsequent frame advances by the nominal
    step plus Gaussian jitter (clamped to a non-negative step), reflecting
    at the sweep limits.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    rng = np.random.default_rng(seed)
    headings = np.empty(n_frames)
    pos, direction = 0.0, 1.0
    for f in range(n_frames):
        headings[f] = pos
        step = pcfg.nominal_step
        if pcfg.jitter_std > 0:
            step = max(0.0, step + rng.normal(0.0, pcfg.jitter_std))
        new = pos + direction * step
        if new > pcfg.sweep_extent:
            new = 2 * pcfg.sweep_extent - new
            direction = -1.0
        elif new < 0.0:
            new = -new
            direction = 1.0
        pos = new
    return headings


def scene_at_heading(
    scene: list[Scatterer], heading_deg: float, fov_deg: float
) -> list[Scatterer]:
    """Re-express world-frame scatterers in the rotated sensor frame.

    Scatterers outside the field of view at this heading are dropped.
    """
    out = []
    half_fov = math.radians(fov_deg) / 2.0
    h = math.radians(heading_deg)
    for sc in scene:
        az = (sc.azimuth - h + math.pi) % (2 * math.pi) - math.pi
        if abs(az) < half_fov:
            out.append(Scatterer(sc.range, az, sc.amplitude))
    return out


def simulate_platform_sweep(
    scene: list[Scatterer],
    cfg: RadarConfig,
    pcfg: PlatformConfig,
    n_frames: int,
    noise_std: float = 0.0,
    seed: int = 0,
) -> list[tuple[IFCube, float]]:
    """Simulate a rotating-platform capture; returns (cube, true heading) pairs.

    Scene azimuths are world-frame; each frame sees the scene rotated by its
    heading, clipped to the sensor FOV.  All randomness (jitter and noise)
    derives from ``seed``.
    """
    ss = np.random.SeedSequence(seed)
    jitter_seed, noise_seq = ss.spawn(2)
    headings = sweep_headings(pcfg, n_frames, seed=jitter_seed.entropy % (2**32))
    noise_seeds = [s.entropy % (2**32) for s in noise_seq.spawn(n_frames)]

    frames = []
    for f in range(n_frames):
        local = scene_at_heading(scene, headings[f], cfg.fov_deg)
        cube = simulate_if_cube(local, cfg, noise_std=noise_std, seed=noise_seeds[f])
        frames.append((cube, float(headings[f])))
    return frames
