"""Experiment configuration, commands and result files.

Config files are ``key = value`` lines with ``#`` comments.  Every key has
a default (the tuned values used throughout the package), so an empty file
is a complete configuration: 16-QAM, single user, SISO, strong turbulence.

Commands write their outputs atomically (temporary file, then rename) and
finish by writing ``manifest.json``; a directory without a manifest holds
an incomplete run.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import stats

from fsomimo import __version__
from fsomimo import neuralnet as nn
from fsomimo import pipelines as pl
from fsomimo.link import Combiner
from fsomimo.streams import derive_rng
from fsomimo.turbulence import (
    REGIMES,
    gamma_gamma_cdf,
    sample_gamma_gamma,
    scintillation_index,
)

__all__ = [
    "ConfigError",
    "SchemaError",
    "ExperimentConfig",
    "DEFAULTS",
    "parse_config",
    "load_config",
    "format_ser_csv",
    "write_ser_csv",
    "read_ser_csv",
    "render_svg",
    "channel_statistics",
    "cmd_train",
    "cmd_sweep",
    "cmd_validate_channel",
    "cmd_plot",
    "CSV_HEADER",
]

CSV_HEADER = "es_n0_db,trials,errors,ser,ci_low,ci_high"


class ConfigError(ValueError):
    """Malformed line or invalid value in an experiment config."""


class SchemaError(ValueError):
    """A result CSV does not follow the SER schema."""


def _choice(*allowed: str):
    def conv(v: str) -> str:
        v = v.strip().lower()
        if v not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return v

    return conv


def _grid(v: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in v.split(",") if t.strip())
    if not vals:
        raise ValueError("empty grid")
    return vals


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _path_or_none(v: str) -> str | None:
    v = v.strip()
    return v or None


# key -> (default text, converter)
_SCHEMA: dict[str, tuple[str, object]] = {
    "user_mode": ("single_user", _choice(*(m.value for m in pl.UserMode))),
    "n_users": ("1", int),
    "combiner": ("egc", _choice("egc", "sc")),
    "n_tx": ("1", int),
    "n_rx": ("1", int),
    "regime": ("strong", _choice("strong", "moderate", "weak", "none")),
    "modulation_order": ("16", int),
    "detector": ("qam_ml_perfect", _choice(*(d.value for d in pl.Detector))),
    "conversion_gain": ("1.0", float),
    "blind_block": ("1000", int),
    "hidden_layers": ("4", int),
    "hidden_width": ("40", int),
    "activation": ("relu", _choice("relu")),
    "loss": ("softmax_cross_entropy", _choice("softmax_cross_entropy")),
    "optimizer": ("adam", _choice("adam")),
    "batch_size": ("64", int),
    "samples_per_batch_ratio": ("4", int),
    "iterations": ("1000", int),
    "learning_rate": ("0.005", float),
    "train_es_n0_db": ("15", float),
    "seed": ("0", int),
    "out_dir": ("results", str),
    "trials": ("100000", int),
    "grid": ("0,5,10,15,20,25,30", _grid),
    "workers": ("1", int),
    "rx_model": ("", _path_or_none),
    "tx_model": ("", _path_or_none),
    "svg": ("true", _bool),
    "validate_samples": ("1000000", int),
}

DEFAULTS: dict[str, str] = {k: v[0] for k, v in _SCHEMA.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: pl.ScenarioSpec
    train: pl.TrainConfig
    grid: tuple[float, ...]
    trials: int
    seed: int
    out_dir: Path
    workers: int = 1
    rx_model: str | None = None
    tx_model: str | None = None
    svg: bool = True
    validate_samples: int = 1_000_000
    values: Mapping[str, str] = field(default_factory=dict)

    def snapshot(self) -> dict[str, str]:
        """Every key with its effective textual value."""
        return dict(sorted(self.values.items()))


def _convert(key: str, text: str, where: str):
    if key not in _SCHEMA:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        return _SCHEMA[key][1](text)
    except ValueError as exc:
        raise ConfigError(f"{where}: invalid value for {key!r}: {exc}") from None


def parse_config(text: str, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Parse ``key = value`` config text, then apply ``overrides``.

    Raises
    ------
    ConfigError
        On a malformed line (message names the line number), an unknown key,
        or an invalid value (message names the key).
    """
    values = dict(DEFAULTS)
    parsed: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        parsed[key] = _convert(key, val, f"line {lineno}")
        values[key] = val
    for key, val in (overrides or {}).items():
        parsed[key] = _convert(key, str(val), "override")
        values[key] = str(val)
    conv = {k: parsed[k] if k in parsed else _SCHEMA[k][1](v) for k, v in DEFAULTS.items()}
    return _build(conv, values)


def _build(c: dict, values: dict[str, str]) -> ExperimentConfig:
    def check(key: str, ok: bool, msg: str) -> None:
        if not ok:
            raise ConfigError(f"invalid value for {key!r}: {msg}")

    m = c["modulation_order"]
    side = math.isqrt(m) if m > 0 else 0
    check("modulation_order", m >= 4 and side * side == m and side & (side - 1) == 0,
          f"{m} is not a supported square QAM order")
    for key in ("n_users", "n_tx", "n_rx", "batch_size", "samples_per_batch_ratio", "iterations",
                "hidden_width", "trials", "workers", "validate_samples"):
        check(key, c[key] >= 1, "must be >= 1")
    check("hidden_layers", c["hidden_layers"] >= 0, "must be >= 0")
    check("blind_block", c["blind_block"] >= 2, "must be >= 2")
    check("seed", 0 <= c["seed"] < 2**64, "must be an unsigned 64-bit integer")
    check("learning_rate", c["learning_rate"] > 0, "must be positive")
    check("conversion_gain", c["conversion_gain"] > 0, "must be positive")
    if c["user_mode"] == "single_user":
        check("n_users", c["n_users"] == 1, "single_user requires n_users = 1")
    else:
        check("n_users", c["n_users"] >= 2, f"{c['user_mode']} requires n_users >= 2")

    scenario = pl.ScenarioSpec(
        user_mode=pl.UserMode(c["user_mode"]),
        n_users=c["n_users"],
        combiner=Combiner(c["combiner"]),
        n_tx=c["n_tx"],
        n_rx=c["n_rx"],
        regime=None if c["regime"] == "none" else REGIMES[c["regime"]],
        modulation_order=m,
        detector=pl.Detector(c["detector"]),
        conversion_gain=c["conversion_gain"],
        blind_block=c["blind_block"],
    )
    train = pl.TrainConfig(
        batch_size=c["batch_size"],
        samples_per_batch_ratio=c["samples_per_batch_ratio"],
        iterations=c["iterations"],
        learning_rate=c["learning_rate"],
        train_es_n0_db=c["train_es_n0_db"],
        seed=c["seed"],
        hidden_layers=c["hidden_layers"],
        hidden_width=c["hidden_width"],
    )
    return ExperimentConfig(
        scenario=scenario,
        train=train,
        grid=c["grid"],
        trials=c["trials"],
        seed=c["seed"],
        out_dir=Path(c["out_dir"]),
        workers=c["workers"],
        rx_model=c["rx_model"],
        tx_model=c["tx_model"],
        svg=c["svg"],
        validate_samples=c["validate_samples"],
        values=values,
    )


def load_config(path: str | os.PathLike | None, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    text = Path(path).read_text() if path is not None else ""
    return parse_config(text, overrides)


# -- result files -----------------------------------------------------------


def _fmt(x: float) -> str:
    return np.format_float_positional(float(x), precision=6, unique=False, fractional=False, trim="-")


def format_ser_csv(curve: pl.SerCurve) -> str:
    lines = [CSV_HEADER]
    for p in curve.points:
        lines.append(
            f"{_fmt(p.es_n0_db)},{p.trials},{p.errors},{_fmt(p.ser)},{_fmt(p.ci_low)},{_fmt(p.ci_high)}"
        )
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data)
    os.replace(tmp, path)


def write_ser_csv(curve: pl.SerCurve, path: str | os.PathLike) -> Path:
    path = Path(path)
    _atomic_write(path, format_ser_csv(curve))
    return path


def read_ser_csv(path: str | os.PathLike) -> pl.SerCurve:
    """Load a SER CSV, checking the header and every row.

    Raises
    ------
    SchemaError
        Wrong header, wrong column count or non-numeric fields.
    """
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise SchemaError(f"{path}: header must be {CSV_HEADER!r}")
    points = []
    for n, line in enumerate(lines[1:], start=2):
        cols = line.split(",")
        if len(cols) != 6:
            raise SchemaError(f"{path}:{n}: expected 6 columns, found {len(cols)}")
        try:
            db, ser, lo, hi = (float(cols[i]) for i in (0, 3, 4, 5))
            trials, errors = int(cols[1]), int(cols[2])
        except ValueError:
            raise SchemaError(f"{path}:{n}: non-numeric field") from None
        if trials <= 0 or not 0 <= errors <= trials or not 0 <= ser <= 1:
            raise SchemaError(f"{path}:{n}: inconsistent trial/error counts")
        points.append(pl.SerPoint(db, trials, errors, ser, lo, hi))
    if not points:
        raise SchemaError(f"{path}: no data rows")
    return pl.SerCurve(points, label=path.stem)


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def render_svg(curves: Iterable[pl.SerCurve], title: str = "") -> str:
    """Static SVG chart of SER against Es/N0 with a log-scale SER axis.

    Zero-error points cannot be drawn on a log axis and are skipped.
    """
    curves = list(curves)
    width, height = 640, 440
    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([c.es_n0_db for c in curves]) if curves else np.array([0.0, 1.0])
    pos = np.concatenate([c.ser[c.ser > 0] for c in curves]) if curves else np.array([])
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    d0 = math.floor(math.log10(pos.min())) if pos.size else -6
    d1 = 0

    def px(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * pw

    def py(s: float) -> float:
        return top + (d1 - math.log10(s)) / (d1 - d0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for d in range(d0, d1 + 1):
        y = py(10.0**d)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">1e{d}</text>')
    for x in np.unique(xs):
        out.append(f'<text x="{px(x):.2f}" y="{top + ph + 18}" text-anchor="middle">{_fmt(x)}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">Es/N0 (dB)</text>')
    out.append(
        f'<text x="18" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {top + ph / 2})">SER</text>'
    )
    if title:
        out.append(f'<text x="{left + pw / 2}" y="{top - 14}" text-anchor="middle">{_escape(title)}</text>')
    for k, c in enumerate(curves):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(s):.2f}" for x, s in zip(c.es_n0_db, c.ser) if s > 0)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = top + 16 + 18 * k
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly}">{_escape(c.label or f"curve {k}")}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, cfg: ExperimentConfig | None, files: list[Path], t0: float) -> Path:
    manifest = {
        "command": command,
        "toolkit_version": __version__,
        "seed": cfg.seed if cfg is not None else None,
        "config": cfg.snapshot() if cfg is not None else None,
        "chunk_size": pl.CHUNK_SIZE,
        "files": {p.name: _sha256(p) for p in files},
        "duration_s": round(time.perf_counter() - t0, 3),
    }
    path = out_dir / "manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- commands ----------------------------------------------------------------


def _train_models(cfg: ExperimentConfig) -> tuple[pl.TrainedModels, pl.LossReport, "pl.Constellation | None"]:
    spec = cfg.scenario
    if spec.detector is pl.Detector.QAM_DNN:
        rx, report = pl.train_receiver_dnn(spec, cfg.train)
        return pl.TrainedModels(rx), report, None
    if spec.detector is pl.Detector.END_TO_END_DNN:
        tx, rx, report, const = pl.train_end_to_end(spec, cfg.train)
        return pl.TrainedModels(rx, tx), report, const
    raise ConfigError(f"invalid value for 'detector': {spec.detector.value} has nothing to train")


def cmd_train(cfg: ExperimentConfig) -> dict[str, Path]:
    """Train the configured DNN detector and write models, loss CSV and manifest."""
    t0 = time.perf_counter()
    models, report, const = _train_models(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    files["rx_model"] = out / "rx.fsomlp"
    nn.save_params(models.rx, files["rx_model"])
    if models.tx is not None:
        files["tx_model"] = out / "tx.fsomlp"
        nn.save_params(models.tx, files["tx_model"])
        rows = ["index,re,im"] + [f"{k},{p.real:.17g},{p.imag:.17g}" for k, p in enumerate(const.points)]
        files["constellation"] = out / "constellation.csv"
        _atomic_write(files["constellation"], "\n".join(rows) + "\n")
    rows = ["iteration,loss"] + [f"{k},{v:.17g}" for k, v in enumerate(report.losses)]
    files["loss"] = out / "loss.csv"
    _atomic_write(files["loss"], "\n".join(rows) + "\n")
    files["manifest"] = _write_manifest(out, "train", cfg, list(files.values()), t0)
    return files


def _models_for_sweep(cfg: ExperimentConfig) -> pl.TrainedModels | None:
    det = cfg.scenario.detector
    if det in (pl.Detector.QAM_ML_PERFECT, pl.Detector.QAM_ML_BLIND):
        return None
    if cfg.rx_model is None:
        models, _, _ = _train_models(cfg)
        return models
    rx = nn.load_params(cfg.rx_model)
    tx = None
    if det is pl.Detector.END_TO_END_DNN:
        if cfg.tx_model is None:
            raise pl.ModelMismatchError("end_to_end_dnn with rx_model also needs tx_model")
        tx = nn.load_params(cfg.tx_model)
    return pl.TrainedModels(rx, tx)


def cmd_sweep(cfg: ExperimentConfig) -> dict[str, Path]:
    """Evaluate SER over the configured grid; write CSV, optional SVG and manifest.

    DNN detectors use the models named by ``rx_model``/``tx_model`` or, if
    none are given, models trained in-process from the same config.
    """
    t0 = time.perf_counter()
    models = _models_for_sweep(cfg)
    curve = pl.evaluate_ser(cfg.scenario, models, cfg.grid, cfg.trials, cfg.seed, workers=cfg.workers)
    out = cfg.out_dir
    files = {"csv": write_ser_csv(curve, out / "ser.csv")}
    if cfg.svg:
        files["svg"] = out / "ser.svg"
        _atomic_write(files["svg"], render_svg([curve], title=_describe(cfg.scenario)))
    files["manifest"] = _write_manifest(out, "sweep", cfg, list(files.values()), t0)
    return files


def _describe(spec: pl.ScenarioSpec) -> str:
    regime = spec.regime.name if spec.regime is not None else "no turbulence"
    return (
        f"{spec.modulation_order}-ary {spec.detector.value}, {spec.user_mode.value}, "
        f"{spec.combiner.value.upper()} {spec.n_tx}x{spec.n_rx}, {regime}"
    )


def channel_statistics(regime, n_samples: int, seed: int) -> dict[str, float]:
    """Moments and Kolmogorov-Smirnov check of the intensity sampler."""
    rng = derive_rng(seed, 0)
    x = sample_gamma_gamma(regime, rng, n_samples)
    mean = float(x.mean())
    si = float(np.mean(x**2) / mean**2 - 1.0)
    ks = stats.kstest(x, lambda v: gamma_gamma_cdf(regime, v))
    return {
        "alpha": regime.alpha,
        "beta": regime.beta,
        "samples": n_samples,
        "mean": mean,
        "scintillation_index": si,
        "scintillation_index_expected": scintillation_index(regime),
        "ks_statistic": float(ks.statistic),
        "ks_critical_1pct": float(stats.kstwo.ppf(0.99, n_samples)),
    }


def cmd_validate_channel(cfg: ExperimentConfig) -> dict[str, Path]:
    """Write ``channel_report.json`` for the configured turbulence regime."""
    t0 = time.perf_counter()
    regime = cfg.scenario.regime
    if regime is None:
        raise ConfigError("invalid value for 'regime': validate-channel needs a turbulence regime")
    report = {"regime": regime.name, **channel_statistics(regime, cfg.validate_samples, cfg.seed)}
    path = cfg.out_dir / "channel_report.json"
    _atomic_write(path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return {"report": path, "manifest": _write_manifest(cfg.out_dir, "validate-channel", cfg, [path], t0)}


def cmd_plot(csv_paths: Iterable[str | os.PathLike], destination: str | os.PathLike, title: str = "") -> Path:
    curves = [read_ser_csv(p) for p in csv_paths]
    if not curves:
        raise SchemaError("plot needs at least one CSV")
    dest = Path(destination)
    _atomic_write(dest, render_svg(curves, title))
    return dest
