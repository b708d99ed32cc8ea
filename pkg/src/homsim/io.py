"""Configuration and file formats: run configs (JSON), time-tag files
(CSV or binary), histogram/curve CSVs, metrics and fit JSON.

All writes are atomic (temp file in the target directory, then rename).
Units are fixed by field-name suffixes in the JSON config (…_ps, …_ghz).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import CorrelationHistogram, InterferenceMetrics
from .correlation import CorrelationCurve
from .fitting import FitResult
from .montecarlo import TimeTagStream
from .params import DarkState, DetectorParams, EmitterParams, SetupParams

TAG_MAGIC = b"HOMSIMTT"
TAG_VERSION = 1
_CHANNEL_IDS = {"D3": 0, "D4": 1}
_CHANNEL_NAMES = {v: k for k, v in _CHANNEL_IDS.items()}


class ConfigError(ValueError):
    """Invalid or missing configuration fields."""


class FileFormatError(ValueError):
    """Malformed data file contents."""


@dataclass(frozen=True)
class SimulationSettings:
    n_pulses: int = 1_000_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_pulses < 1:
            raise ConfigError(f"simulation.n_pulses must be >= 1, got {self.n_pulses}")


@dataclass(frozen=True)
class AnalysisSettings:
    bin_width: float = 256.0  # ps
    window: float = 0.0  # ps; 0 means one full repetition period
    post_window: float = 0.0  # ps; 0 means one histogram bin
    n_side_peaks: int = 3

    def __post_init__(self) -> None:
        if self.bin_width <= 0:
            raise ConfigError(f"analysis.bin_width_ps must be > 0, got {self.bin_width}")
        if self.n_side_peaks < 1:
            raise ConfigError("analysis.n_side_peaks must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    emitters: tuple  # (EmitterParams, EmitterParams)
    setup: SetupParams = SetupParams()
    detector: DetectorParams = DetectorParams()
    simulation: SimulationSettings = SimulationSettings()
    analysis: AnalysisSettings = AnalysisSettings()
    output_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if len(self.emitters) != 2:
            raise ConfigError("config requires exactly two emitters")

    def effective_window(self) -> float:
        return self.analysis.window or self.setup.rep_period

    def effective_post_window(self) -> float:
        return self.analysis.post_window or self.analysis.bin_width

    def max_tau(self) -> float:
        return (self.analysis.n_side_peaks + 0.5) * self.setup.rep_period


def _emitter_to_dict(e: EmitterParams) -> dict:
    out = {
        "t1_ps": e.t1,
        "t2_ps": e.t2,
        "detuning_rad_per_ps": e.detuning,
        "efficiency": e.efficiency,
        "multiphoton_residual": e.multiphoton_residual,
    }
    if e.dark_state is not None:
        out["dark_state"] = {
            "slow_lifetime_ps": e.dark_state.slow_lifetime,
            "slow_fraction": e.dark_state.slow_fraction,
        }
    return out


def _emitter_from_dict(d: dict, where: str) -> EmitterParams:
    try:
        dark = None
        if d.get("dark_state") is not None:
            ds = d["dark_state"]
            dark = DarkState(
                slow_lifetime=float(ds["slow_lifetime_ps"]),
                slow_fraction=float(ds["slow_fraction"]),
            )
        return EmitterParams(
            t1=float(d["t1_ps"]),
            t2=float(d["t2_ps"]),
            detuning=float(d.get("detuning_rad_per_ps", 0.0)),
            efficiency=float(d.get("efficiency", 1.0)),
            multiphoton_residual=float(d.get("multiphoton_residual", 0.0)),
            dark_state=dark,
        )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "emitters": [_emitter_to_dict(e) for e in cfg.emitters],
        "setup": {
            "mode_overlap": cfg.setup.mode_overlap,
            "polarization": cfg.setup.polarization,
            "rep_period_ps": cfg.setup.rep_period,
            "background_rate": cfg.setup.background_rate,
        },
        "detector": {
            "irf_fwhm_ps": cfg.detector.irf_fwhm,
            "irf_shape": cfg.detector.irf_shape,
            "dark_rate_per_ps": cfg.detector.dark_rate,
        },
        "simulation": {
            "n_pulses": cfg.simulation.n_pulses,
            "seed": cfg.simulation.seed,
        },
        "analysis": {
            "bin_width_ps": cfg.analysis.bin_width,
            "window_ps": cfg.analysis.window,
            "post_window_ps": cfg.analysis.post_window,
            "n_side_peaks": cfg.analysis.n_side_peaks,
        },
        "output": {"dir": cfg.output_dir},
    }


def config_from_dict(d: dict) -> RunConfig:
    try:
        emitters = d["emitters"]
        if not isinstance(emitters, list) or len(emitters) != 2:
            raise ConfigError("emitters must be a list of exactly two entries")
        e1 = _emitter_from_dict(emitters[0], "emitters[0]")
        e2 = _emitter_from_dict(emitters[1], "emitters[1]")
        s = d.get("setup", {})
        setup = SetupParams(
            mode_overlap=float(s.get("mode_overlap", 1.0)),
            polarization=s.get("polarization", "parallel"),
            rep_period=float(s.get("rep_period_ps", 13140.0)),
            background_rate=float(s.get("background_rate", 0.0)),
        )
        det = d.get("detector", {})
        detector = DetectorParams(
            irf_fwhm=float(det.get("irf_fwhm_ps", 0.0)),
            irf_shape=det.get("irf_shape", "delta"),
            dark_rate=float(det.get("dark_rate_per_ps", 0.0)),
        )
        sim = d.get("simulation", {})
        simulation = SimulationSettings(
            n_pulses=int(sim.get("n_pulses", 1_000_000)),
            seed=int(sim.get("seed", 0)),
        )
        ana = d.get("analysis", {})
        analysis = AnalysisSettings(
            bin_width=float(ana.get("bin_width_ps", 256.0)),
            window=float(ana.get("window_ps", 0.0)),
            post_window=float(ana.get("post_window_ps", 0.0)),
            n_side_peaks=int(ana.get("n_side_peaks", 3)),
        )
        out = d.get("output", {}).get("dir")
        return RunConfig(
            emitters=(e1, e2),
            setup=setup,
            detector=detector,
            simulation=simulation,
            analysis=analysis,
            output_dir=out,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_config(cfg: RunConfig, path) -> None:
    write_json(path, config_to_dict(cfg))


def write_tags_csv(stream: TimeTagStream, path) -> None:
    lines = ["channel,timestamp_ps"]
    lines.extend(f"{stream.channel},{t}" for t in stream.tags)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_tags_csv(path, duration: Optional[float] = None) -> TimeTagStream:
    tags = []
    channel = None
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "channel,timestamp_ps":
            raise FileFormatError(f"{path}:1: expected header 'channel,timestamp_ps'")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2 or parts[0] not in _CHANNEL_IDS:
                raise FileFormatError(f"{path}:{lineno}: malformed row {line!r}")
            if channel is None:
                channel = parts[0]
            elif parts[0] != channel:
                raise FileFormatError(
                    f"{path}:{lineno}: mixed channels in one file"
                )
            try:
                t = int(parts[1])
            except ValueError as exc:
                raise FileFormatError(
                    f"{path}:{lineno}: timestamp is not an integer: {parts[1]!r}"
                ) from exc
            if t < 0:
                raise FileFormatError(f"{path}:{lineno}: negative timestamp")
            tags.append(t)
    arr = np.array(tags, dtype=np.int64)
    if duration is None:
        duration = float(arr[-1]) if arr.size else 0.0
    return TimeTagStream(channel=channel or "D3", tags=arr, duration=duration)


def write_tags_binary(stream: TimeTagStream, path) -> None:
    header = TAG_MAGIC + struct.pack(
        "<II", TAG_VERSION, _CHANNEL_IDS[stream.channel]
    )
    body = np.asarray(stream.tags, dtype="<u8").tobytes()
    atomic_write_bytes(path, header + body)


def read_tags_binary(path, duration: Optional[float] = None) -> TimeTagStream:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16 or header[:8] != TAG_MAGIC:
            raise FileFormatError(f"{path}: not a homsim time-tag file")
        version, channel_id = struct.unpack("<II", header[8:16])
        if version != TAG_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        if channel_id not in _CHANNEL_NAMES:
            raise FileFormatError(f"{path}: unknown channel id {channel_id}")
        body = fh.read()
    if len(body) % 8 != 0:
        raise FileFormatError(f"{path}: truncated timestamp data")
    tags = np.frombuffer(body, dtype="<u8").astype(np.int64)
    if duration is None:
        duration = float(tags[-1]) if tags.size else 0.0
    return TimeTagStream(
        channel=_CHANNEL_NAMES[channel_id], tags=tags, duration=duration
    )


def read_tags(path, fmt: Optional[str] = None) -> TimeTagStream:
    if fmt is None:
        fmt = "bin" if str(path).endswith(".bin") else "csv"
    if fmt == "bin":
        return read_tags_binary(path)
    return read_tags_csv(path)


def write_tags(stream: TimeTagStream, path, fmt: str = "csv") -> None:
    if fmt == "bin":
        write_tags_binary(stream, path)
    elif fmt == "csv":
        write_tags_csv(stream, path)
    else:
        raise ValueError(f"unknown tag format {fmt!r}")


def write_histogram_csv(h: CorrelationHistogram, path) -> None:
    lines = ["tau_ps,counts"]
    lines.extend(
        f"{int(c)},{int(n)}" for c, n in zip(h.bin_centers, h.counts)
    )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_curve_csv(
    perp: CorrelationCurve,
    par: CorrelationCurve,
    perp_conv: CorrelationCurve,
    par_conv: CorrelationCurve,
    path,
) -> None:
    lines = ["tau_ps,perp,par,perp_conv,par_conv"]
    for i, tau in enumerate(perp.tau):
        lines.append(
            f"{tau:.6g},{perp.density[i]:.9e},{par.density[i]:.9e},"
            f"{perp_conv.density[i]:.9e},{par_conv.density[i]:.9e}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_sampled_curve_csv(path):
    """Two- or three-column CSV (x, y[, y_err]) with an arbitrary header."""
    from .fitting import SampledCurve

    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if lineno == 1:
                try:
                    [float(p) for p in parts]
                except ValueError:
                    continue  # header row
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: malformed row {line!r}") from exc
            if len(vals) not in (2, 3):
                raise FileFormatError(
                    f"{path}:{lineno}: expected 2 or 3 columns, got {len(vals)}"
                )
            rows.append(vals)
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    n_cols = len(rows[0])
    if any(len(r) != n_cols for r in rows):
        raise FileFormatError(f"{path}: inconsistent column counts")
    arr = np.array(rows)
    err = arr[:, 2] if n_cols == 3 else None
    return SampledCurve(x=arr[:, 0], y=arr[:, 1], y_err=err)


def metrics_to_dict(m: InterferenceMetrics) -> dict:
    return {
        "pc": {"value": m.pc.value, "sigma": m.pc.sigma},
        "pc_post": {"value": m.pc_post.value, "sigma": m.pc_post.sigma},
        "ratio_par_b": {"value": m.ratio_par_b.value, "sigma": m.ratio_par_b.sigma},
        "window_ps": m.window,
        "post_window_ps": m.post_window,
    }


def fit_result_to_dict(fr: FitResult) -> dict:
    return {
        "model": fr.model,
        "params": fr.params,
        "uncertainties": fr.uncertainties,
        "reduced_chi_square": fr.goodness,
        "converged": fr.converged,
        "degenerate": fr.degenerate,
        "n_points": fr.n_points,
    }


def stream_summary(streams, cfg: RunConfig) -> dict:
    return {
        "n_pulses": cfg.simulation.n_pulses,
        "seed": streams[0].seed,
        "duration_ps": streams[0].duration,
        "tag_counts": {s.channel: int(s.tags.size) for s in streams},
        "config": config_to_dict(cfg),
    }
