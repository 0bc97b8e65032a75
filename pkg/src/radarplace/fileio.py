"""On-disk formats: IF cubes, heatmaps, encoder weights, databases, text inputs.

All binary formats are little-endian with a four-byte magic; text formats
are line-oriented with ``#`` comments.
"""

from __future__ import annotations

import csv
import struct
import zlib
from pathlib import Path

import numpy as np

from .concat import PoseOffset
from .encoder import EncoderArch, EncoderWeights
from .errors import ConfigError, FormatError
from .heatmap import Heatmap
from .placedb import PlaceDB, PlaceRecord
from .radar import IFCube, PlatformConfig, RadarConfig, Scatterer

IFC_MAGIC = b"IFC1"
RAH_MAGIC = b"RAH1"
MMW_MAGIC = b"MMW1"
MPDB_MAGIC = b"MPDB"


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


# -- IF cubes -----------------------------------------------------------------

def save_cube(path, cube: IFCube) -> None:
    n_s, n_c, n_r = cube.dims
    inter = np.empty((n_s, n_c, n_r, 2), dtype="<f4")
    inter[..., 0] = cube.data.real
    inter[..., 1] = cube.data.imag
    with open(path, "wb") as fh:
        fh.write(IFC_MAGIC)
        fh.write(struct.pack("<III", n_s, n_c, n_r))
        fh.write(inter.tobytes())


def load_cube(path) -> IFCube:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != IFC_MAGIC:
            raise FormatError(f"{path}: not an IF cube file")
        n_s, n_c, n_r = struct.unpack("<III", _read_exact(fh, 12, "dims"))
        count = n_s * n_c * n_r * 2
        raw = np.frombuffer(_read_exact(fh, count * 4, "samples"), dtype="<f4")
    inter = raw.reshape(n_s, n_c, n_r, 2).astype(np.float64)
    return IFCube(inter[..., 0] + 1j * inter[..., 1])


# -- heatmaps -----------------------------------------------------------------

def save_heatmap(path, h: Heatmap) -> None:
    with open(path, "wb") as fh:
        fh.write(RAH_MAGIC)
        fh.write(struct.pack("<II", h.n_rows, h.n_cols))
        fh.write(struct.pack("<d", h.range_bin_m))
        fh.write(h.angle_axis.astype("<f8").tobytes())
        fh.write(h.values.astype("<f4").tobytes())


def load_heatmap(path) -> Heatmap:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != RAH_MAGIC:
            raise FormatError(f"{path}: not a heatmap file")
        rows, cols = struct.unpack("<II", _read_exact(fh, 8, "dims"))
        (range_bin_m,) = struct.unpack("<d", _read_exact(fh, 8, "range_bin_m"))
        axis = np.frombuffer(_read_exact(fh, cols * 8, "angle_axis"), dtype="<f8")
        vals = np.frombuffer(_read_exact(fh, rows * cols * 4, "values"), dtype="<f4")
    return Heatmap(vals.astype(np.float64).reshape(rows, cols), range_bin_m, axis.copy())


# -- encoder weights ----------------------------------------------------------

def save_weights(path, w: EncoderWeights) -> None:
    arch = w.arch
    payload = bytearray()
    payload += struct.pack("<II", *arch.input_shape)
    payload += struct.pack("<I", len(arch.channels))
    payload += struct.pack(f"<{len(arch.channels)}I", *arch.channels)
    for pool in arch.pools:
        ph, pw = pool if pool is not None else (0, 0)
        payload += struct.pack("<II", ph, pw)
    payload += struct.pack("<Q", w.seed)
    for k, b in zip(w.kernels, w.biases):
        payload += k.astype("<f4").tobytes()
        payload += b.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(MMW_MAGIC)
        fh.write(bytes(payload))
        fh.write(struct.pack("<I", zlib.crc32(bytes(payload))))


def load_weights(path) -> EncoderWeights:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MMW_MAGIC:
            raise FormatError(f"{path}: not a weights file")
        payload = fh.read()
    if len(payload) < 4:
        raise FormatError(f"{path}: missing checksum trailer")
    payload, (crc,) = payload[:-4], struct.unpack("<I", payload[-4:])
    if zlib.crc32(payload) != crc:
        raise FormatError(f"{path}: checksum mismatch")
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, payload, off)
        off += size
        return vals

    rows, cols = take("<II")
    (n_ch,) = take("<I")
    channels = take(f"<{n_ch}I")
    pools = []
    for _ in range(n_ch - 1):
        ph, pw = take("<II")
        pools.append((ph, pw) if ph else None)
    (seed,) = take("<Q")
    arch = EncoderArch((rows, cols), tuple(channels), tuple(pools))
    kernels, biases = [], []
    for l in range(arch.n_layers):
        c_in, c_out = channels[l], channels[l + 1]
        n_k = c_out * c_in * 9
        kernels.append(
            np.frombuffer(payload, dtype="<f4", count=n_k, offset=off)
            .astype(np.float64)
            .reshape(c_out, c_in, 3, 3)
        )
        off += n_k * 4
        biases.append(
            np.frombuffer(payload, dtype="<f4", count=c_out, offset=off).astype(np.float64)
        )
        off += c_out * 4
    if off != len(payload):
        raise FormatError(f"{path}: trailing bytes in weights payload")
    return EncoderWeights(arch, kernels, biases, seed)


# -- place databases ----------------------------------------------------------

def save_db(path, db: PlaceDB) -> None:
    with open(path, "wb") as fh:
        fh.write(MPDB_MAGIC)
        dim = db.dim or 0
        fh.write(struct.pack("<II", len(db), dim))
        for r in db.records:
            fh.write(struct.pack("<Q", r.id))
            fh.write(struct.pack("<dd", *r.position))
            heading = float("nan") if r.heading is None else r.heading
            fh.write(struct.pack("<d", heading))
            fh.write(r.descriptor.astype("<f4").tobytes())


def load_db(path) -> PlaceDB:
    db = PlaceDB()
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MPDB_MAGIC:
            raise FormatError(f"{path}: not a place database file")
        count, dim = struct.unpack("<II", _read_exact(fh, 8, "header"))
        for _ in range(count):
            (rid,) = struct.unpack("<Q", _read_exact(fh, 8, "record id"))
            x, y, heading = struct.unpack("<ddd", _read_exact(fh, 24, "pose"))
            desc = np.frombuffer(_read_exact(fh, dim * 4, "descriptor"), dtype="<f4")
            db.add(
                PlaceRecord(
                    rid,
                    desc.copy(),
                    (x, y),
                    None if np.isnan(heading) else heading,
                )
            )
    return db


# -- text inputs --------------------------------------------------------------

def load_scene(path) -> list[Scatterer]:
    """Plain text scene: one ``range_m azimuth_deg amplitude`` per line."""
    scene = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                rng, az_deg, amp = (float(p) for p in parts)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            scene.append(Scatterer(rng, np.radians(az_deg), amp))
    return scene


def save_scene(path, scene: list[Scatterer]) -> None:
    with open(path, "w") as fh:
        fh.write("# range_m azimuth_deg amplitude\n")
        for sc in scene:
            fh.write(f"{sc.range:.6f} {np.degrees(sc.azimuth):.6f} {sc.amplitude:.6f}\n")


def load_keyvals(path) -> dict[str, float]:
    """Key-value config file: ``key = value`` lines, ``#`` comments."""
    out: dict[str, float] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, val = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise FormatError(f"{path}:{lineno}: expected 'key value'")
                key, val = parts
            try:
                out[key.strip()] = float(val.strip())
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value {val.strip()!r}")
    return out


_RADAR_KEYS = {
    "slope", "wavelength", "antenna_spacing", "sample_rate",
    "n_samples", "n_chirps", "n_antennas", "fov_deg", "gain_taper_exp",
}
_PLATFORM_KEYS = {"angular_speed", "frame_rate", "sweep_extent", "jitter_std"}
_INT_KEYS = {"n_samples", "n_chirps", "n_antennas"}


def radar_config_from(keyvals: dict[str, float]) -> RadarConfig:
    kwargs = {}
    for key in _RADAR_KEYS & keyvals.keys():
        val = keyvals[key]
        kwargs[key] = int(val) if key in _INT_KEYS else val
    return RadarConfig(**kwargs)


def platform_config_from(keyvals: dict[str, float]) -> PlatformConfig:
    kwargs = {key: keyvals[key] for key in _PLATFORM_KEYS & keyvals.keys()}
    return PlatformConfig(**kwargs)


def save_offsets_csv(path, offsets: list[PoseOffset]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_idx", "r_offset", "a_offset", "score"])
        for i, o in enumerate(offsets):
            writer.writerow([i, o.r_offset, o.a_offset, f"{o.score:.9f}"])


def load_offsets_csv(path) -> list[PoseOffset]:
    offsets = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            offsets.append(
                PoseOffset(int(row["r_offset"]), int(row["a_offset"]), float(row["score"]))
            )
    return offsets


def load_poses_csv(path) -> list[dict]:
    """Poses: ``frame_idx,x_m,y_m,heading_deg`` rows."""
    poses = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"frame_idx", "x_m", "y_m", "heading_deg"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise FormatError(f"{path}: poses CSV needs columns {sorted(required)}")
        for row in reader:
            poses.append(
                {
                    "frame_idx": int(row["frame_idx"]),
                    "x_m": float(row["x_m"]),
                    "y_m": float(row["y_m"]),
                    "heading_deg": float(row["heading_deg"]),
                }
            )
    return poses


def save_poses_csv(path, poses: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_idx", "x_m", "y_m", "heading_deg"])
        for p in poses:
            writer.writerow(
                [p["frame_idx"], f"{p['x_m']:.6f}", f"{p['y_m']:.6f}", f"{p['heading_deg']:.6f}"]
            )


# -- rendering ----------------------------------------------------------------

def render_pgm(path, h: Heatmap, log_scale: bool = False) -> None:
    """8-bit grayscale PGM, min-max normalized; optional log compression."""
    vals = h.values
    if log_scale:
        vals = np.log1p(vals)
    lo, hi = vals.min(), vals.max()
    if hi > lo:
        img = np.round((vals - lo) / (hi - lo) * 255).astype(np.uint8)
    else:
        img = np.zeros_like(vals, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{h.n_cols} {h.n_rows}\n255\n".encode())
        fh.write(img.tobytes())
