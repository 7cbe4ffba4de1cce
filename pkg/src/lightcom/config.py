"""Run configuration: TOML surface, validation, round-trip serialization.

Config files group knobs into tables: [source], [phy], [power],
[reconstruction], [qoe], [run], and optionally [sweep] for coverage
sweeps. All validation errors carry the table.field path that caused
them. SNR, power and gain fields carry dB values; noise_var is a linear
variance (the channel convention is unit noise variance).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .phy import CodecSpec
from .source_codec import rate_to_block


@dataclass
class RunConfig:
    image: str = ""
    block: tuple[int, int] = (1, 1)
    pad: bool = False
    codec: str = "uncoded"
    modulation: int = 4
    noise_var: float = 1.0
    gains_db: list[float] | None = None     # per-plane |h_k|^2 in dB; None = flat 0 dB
    power_db: float | None = None
    ebno_db: float | None = None
    allocator: str = "wf"
    coded_alpha: float | None = None
    coded_beta: float | None = None
    reconstructor: str = "bilinear"
    remote_endpoint: str = ""
    prompt: str | None = None
    embedding: str = "builtin"
    embed_endpoint: str = ""
    pristine_model: str | None = None
    d_niqe_threshold: float = 5.0
    d_clip_threshold: float = 0.1
    n_trials: int = 1
    base_seed: int = 0
    workers: int = 0                         # 0 = all available CPUs
    out_dir: str = "out"


@dataclass
class SweepConfig:
    base: RunConfig
    snr_db: list[float] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)
    criterion: str = "qoe"
    imse_threshold: float | None = None


def _get(table: dict, table_name: str, key: str, types, default=None,
         required: bool = False):
    if key not in table:
        if required:
            raise ConfigError(f"{table_name}.{key}: required field missing")
        return default
    val = table[key]
    tt = types if isinstance(types, tuple) else (types,)
    if (isinstance(val, bool) and bool not in tt) or not isinstance(val, tt):
        names = "/".join(t.__name__ for t in tt)
        raise ConfigError(f"{table_name}.{key}: expected {names}, got {type(val).__name__}")
    return val


def _num(table: dict, table_name: str, key: str, default=None, required=False):
    v = _get(table, table_name, key, (int, float), default, required)
    return None if v is None else float(v)


def parse_run_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    """Build and validate a RunConfig from parsed TOML tables."""
    cfg = RunConfig()
    src = doc.get("source", {})
    cfg.image = _get(src, "source", "image", str, required=True)
    if "block" in src and "rate" in src:
        raise ConfigError("source.block: give either block or rate, not both")
    if "block" in src:
        blk = src["block"]
        if (not isinstance(blk, list) or len(blk) != 2
                or not all(isinstance(v, int) and v >= 1 for v in blk)):
            raise ConfigError("source.block: expected [b1, b2] positive integers")
        cfg.block = (blk[0], blk[1])
    elif "rate" in src:
        try:
            cfg.block = rate_to_block(_num(src, "source", "rate"))
        except ValueError as exc:
            raise ConfigError(f"source.rate: {exc}") from None
    cfg.pad = _get(src, "source", "pad", bool, cfg.pad)

    phy_t = doc.get("phy", {})
    cfg.codec = _get(phy_t, "phy", "codec", str, cfg.codec)
    try:
        CodecSpec.parse(cfg.codec)
    except Exception as exc:
        raise ConfigError(f"phy.codec: {exc}") from None
    cfg.modulation = _get(phy_t, "phy", "modulation", int, cfg.modulation)
    if cfg.modulation not in (4, 16, 64, 256):
        raise ConfigError(f"phy.modulation: unsupported order {cfg.modulation}")
    cfg.noise_var = _num(phy_t, "phy", "noise_var", cfg.noise_var)
    if cfg.noise_var <= 0:
        raise ConfigError("phy.noise_var: must be > 0")
    if "gains_db" in phy_t:
        g = phy_t["gains_db"]
        if not isinstance(g, list) or not all(isinstance(v, (int, float)) for v in g):
            raise ConfigError("phy.gains_db: expected a list of numbers")
        cfg.gains_db = [float(v) for v in g]

    pw = doc.get("power", {})
    cfg.power_db = _num(pw, "power", "total_db")
    cfg.ebno_db = _num(pw, "power", "ebno_db")
    cfg.allocator = _get(pw, "power", "allocator", str, cfg.allocator)
    if cfg.allocator not in ("ep", "wf"):
        raise ConfigError(f"power.allocator: must be 'ep' or 'wf', got {cfg.allocator!r}")
    cfg.coded_alpha = _num(pw, "power", "coded_alpha")
    cfg.coded_beta = _num(pw, "power", "coded_beta")
    if (cfg.coded_alpha is None) != (cfg.coded_beta is None):
        raise ConfigError("power.coded_alpha: coded_alpha and coded_beta come together")
    if cfg.coded_beta is not None and cfg.coded_beta >= 0:
        raise ConfigError("power.coded_beta: must be < 0")

    rec = doc.get("reconstruction", {})
    cfg.reconstructor = _get(rec, "reconstruction", "kind", str, cfg.reconstructor)
    if cfg.reconstructor not in ("nearest", "bilinear", "bicubic", "remote"):
        raise ConfigError(f"reconstruction.kind: unknown kind {cfg.reconstructor!r}")
    cfg.remote_endpoint = _get(rec, "reconstruction", "endpoint", str,
                               cfg.remote_endpoint)
    prompt = _get(rec, "reconstruction", "prompt", str, None)
    cfg.prompt = prompt if prompt else None
    if cfg.reconstructor == "remote" and not cfg.remote_endpoint:
        raise ConfigError("reconstruction.endpoint: required for remote kind")

    qo = doc.get("qoe", {})
    pm = _get(qo, "qoe", "pristine_model", str, None)
    cfg.pristine_model = pm if pm else None
    cfg.embedding = _get(qo, "qoe", "embedding", str, cfg.embedding)
    if cfg.embedding not in ("builtin", "remote"):
        raise ConfigError(f"qoe.embedding: must be 'builtin' or 'remote'")
    cfg.embed_endpoint = _get(qo, "qoe", "embed_endpoint", str, cfg.embed_endpoint)
    if cfg.embedding == "remote" and not cfg.embed_endpoint:
        raise ConfigError("qoe.embed_endpoint: required for remote embedding")
    cfg.d_niqe_threshold = _num(qo, "qoe", "d_niqe_threshold", cfg.d_niqe_threshold)
    cfg.d_clip_threshold = _num(qo, "qoe", "d_clip_threshold", cfg.d_clip_threshold)
    if cfg.d_niqe_threshold <= 0 or cfg.d_clip_threshold <= 0:
        raise ConfigError("qoe.d_niqe_threshold: thresholds must be positive")

    run = doc.get("run", {})
    cfg.n_trials = _get(run, "run", "n_trials", int, cfg.n_trials)
    if cfg.n_trials < 1:
        raise ConfigError("run.n_trials: must be >= 1")
    cfg.base_seed = _get(run, "run", "base_seed", int, cfg.base_seed)
    cfg.workers = _get(run, "run", "workers", int, cfg.workers)
    if cfg.workers < 0:
        raise ConfigError("run.workers: must be >= 0 (0 = all CPUs)")
    cfg.out_dir = _get(run, "run", "out_dir", str, cfg.out_dir)

    if base_dir is not None:
        for attr in ("image", "pristine_model"):
            val = getattr(cfg, attr)
            if val and not Path(val).is_absolute():
                setattr(cfg, attr, str((base_dir / val).resolve()))
    return cfg


def validate_files(cfg: RunConfig) -> None:
    if not Path(cfg.image).is_file():
        raise ConfigError(f"source.image: file not found: {cfg.image}")
    if cfg.pristine_model and not Path(cfg.pristine_model).is_file():
        raise ConfigError(f"qoe.pristine_model: file not found: {cfg.pristine_model}")


def require_power(cfg: RunConfig) -> None:
    if (cfg.power_db is None) == (cfg.ebno_db is None):
        raise ConfigError("power.total_db: set exactly one of total_db or ebno_db")


def parse_sweep_config(doc: dict, base_dir: Path | None = None) -> SweepConfig:
    base = parse_run_config(doc, base_dir)
    sw = doc.get("sweep")
    if not isinstance(sw, dict):
        raise ConfigError("sweep: missing [sweep] table")
    snr = sw.get("snr_db")
    if (not isinstance(snr, list) or not snr
            or not all(isinstance(v, (int, float)) for v in snr)):
        raise ConfigError("sweep.snr_db: expected a nonempty list of numbers")
    rates = sw.get("rates")
    if (not isinstance(rates, list) or not rates
            or not all(isinstance(v, (int, float)) for v in rates)):
        raise ConfigError("sweep.rates: expected a nonempty list of numbers")
    for r in rates:
        try:
            rate_to_block(float(r))
        except ValueError as exc:
            raise ConfigError(f"sweep.rates: {exc}") from None
    criterion = sw.get("criterion", "qoe")
    if criterion not in ("qoe", "imse_pred"):
        raise ConfigError(f"sweep.criterion: unknown criterion {criterion!r}")
    thr = sw.get("imse_threshold")
    if thr is not None and not isinstance(thr, (int, float)):
        raise ConfigError("sweep.imse_threshold: expected a number")
    if criterion == "imse_pred" and thr is None:
        raise ConfigError("sweep.imse_threshold: required for imse_pred criterion")
    return SweepConfig(base=base, snr_db=[float(v) for v in snr],
                       rates=[float(v) for v in rates], criterion=criterion,
                       imse_threshold=None if thr is None else float(thr))


def load_run_config(path: str | Path) -> RunConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return parse_run_config(doc, base_dir=Path(path).resolve().parent)


def load_sweep_config(path: str | Path) -> SweepConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return parse_sweep_config(doc, base_dir=Path(path).resolve().parent)


# -------------------------------------------------------------- serialization

def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        if isinstance(v, float) and v == int(v) and abs(v) < 1e15:
            return f"{v:.1f}"   # keep floats typed as floats
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v).__name__} as TOML")


def _emit_table(name: str, pairs: list[tuple[str, object]]) -> list[str]:
    body = [f"{k} = {_toml_value(v)}" for k, v in pairs if v is not None]
    return [f"[{name}]"] + body + [""] if body else []


def serialize_run_config(cfg: RunConfig) -> str:
    out: list[str] = []
    out += _emit_table("source", [("image", cfg.image), ("block", list(cfg.block)),
                                  ("pad", cfg.pad)])
    out += _emit_table("phy", [("codec", cfg.codec), ("modulation", cfg.modulation),
                               ("noise_var", cfg.noise_var),
                               ("gains_db", cfg.gains_db)])
    out += _emit_table("power", [("total_db", cfg.power_db), ("ebno_db", cfg.ebno_db),
                                 ("allocator", cfg.allocator),
                                 ("coded_alpha", cfg.coded_alpha),
                                 ("coded_beta", cfg.coded_beta)])
    out += _emit_table("reconstruction", [("kind", cfg.reconstructor),
                                          ("endpoint", cfg.remote_endpoint or None),
                                          ("prompt", cfg.prompt)])
    out += _emit_table("qoe", [("pristine_model", cfg.pristine_model),
                               ("embedding", cfg.embedding),
                               ("embed_endpoint", cfg.embed_endpoint or None),
                               ("d_niqe_threshold", cfg.d_niqe_threshold),
                               ("d_clip_threshold", cfg.d_clip_threshold)])
    out += _emit_table("run", [("n_trials", cfg.n_trials), ("base_seed", cfg.base_seed),
                               ("workers", cfg.workers), ("out_dir", cfg.out_dir)])
    return "\n".join(out)


def serialize_sweep_config(cfg: SweepConfig) -> str:
    out = serialize_run_config(cfg.base)
    out += "\n" + "\n".join(_emit_table("sweep", [
        ("snr_db", cfg.snr_db), ("rates", cfg.rates),
        ("criterion", cfg.criterion), ("imse_threshold", cfg.imse_threshold)]))
    return out


def configs_equal(a: RunConfig, b: RunConfig) -> bool:
    return all(getattr(a, f.name) == getattr(b, f.name) for f in fields(RunConfig))
