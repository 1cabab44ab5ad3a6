"""Run configuration, canonical serialization and the on-disk spectrum cache."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import CacheError, ValidationError
from .spectra import SpectrumSlice, format_float, slice_from_csv, slice_to_csv

SCHEMA_VERSION = 1
CACHE_ENV = "LADDERLAB_CACHE"

log = logging.getLogger("ladderlab")


# --------------------------------------------------------------------------
# canonical bytes


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        # NaN and infinities have no JSON literal; they mark undefined diagnostics
        if not math.isfinite(obj):
            return "null"
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=True)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(json.dumps(k) + ":" + _encode(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    if hasattr(obj, "tolist"):
        return _encode(obj.tolist())
    raise ValidationError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, floats with 17 significant digits, non-finite floats as null."""
    return _encode(obj)


def pretty_json(obj) -> str:
    """Human-readable JSON that is still byte-deterministic (floats at 17 digits)."""
    # round-trip through the canonical form so every float carries the fixed format
    return _indent(json.loads(canonical_json(obj), parse_float=_Raw)) + "\n"


class _Raw(str):
    pass


def _indent(obj, level: int = 0) -> str:
    pad = "  " * (level + 1)
    end = "  " * level
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{pad}{json.dumps(k)}: {_indent(v, level + 1)}" for k, v in sorted(obj.items()))
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_indent(v, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _indent(v, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, _Raw):
        return str(obj)
    return _encode(obj)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary file in the same directory followed by a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# run configuration


def parse_mass_range(text: str) -> list[int]:
    """``"A:B:STEP"`` (inclusive of B), ``"A:B"`` (step 1) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ValidationError(f"bad mass range {text!r}; use A:B:STEP")
        try:
            a, b = int(parts[0]), int(parts[1])
            step = int(parts[2]) if len(parts) == 3 else 1
        except ValueError:
            raise ValidationError(f"bad mass range {text!r}; integers expected") from None
        if step <= 0 or b < a:
            raise ValidationError(f"bad mass range {text!r}; need A <= B and STEP > 0")
        out = list(range(a, b + 1, step))
    else:
        try:
            out = [int(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise ValidationError(f"bad mass list {text!r}") from None
    if not out:
        raise ValidationError("mass range is empty")
    if min(out) < 0:
        raise ValidationError("masses must be nonnegative")
    return out


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"bad number list {text!r}") from None


DEFAULT_TOLERANCES = {
    "fit": 0.05,
    "cluster_cv": 0.1,
    "orbit": 1e-8,
    "real": 1e-8,
    "cluster": 1e-7,
    "admissible_level": 1e-9,
}


@dataclass
class RunConfig:
    metric: dict
    nu: list = field(default_factory=lambda: [math.sqrt(2)])
    backend: str = "auto"
    window: float | None = 0.5
    psi: dict = field(default_factory=lambda: {"hat_support_radius": 0.5, "profile": "bump"})
    masses: list = field(default_factory=lambda: list(range(50, 201, 10)))
    s_points: int = 4096
    eps_sweep: list = field(default_factory=lambda: [0.1, 0.05, 0.02])
    seed: int = 0
    samples: int = 10**6
    cutoff: float | None = None
    include_negative_branch: bool = False
    include_zero_modes: bool = False
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    flow: dict = field(default_factory=dict)
    cache_dir: str | None = None
    out_dir: str | None = None
    format: str = "csv"

    def __post_init__(self):
        self.validate()

    def validate(self) -> "RunConfig":
        if not isinstance(self.metric, dict):
            raise ValidationError("metric must be an inline specification or a path to one")
        if self.backend not in ("auto", "product", "constant-shift", "pencil"):
            raise ValidationError(f"unknown backend {self.backend!r}")
        self.nu = [float(v) for v in self.nu]
        if not self.nu or any(not v > 0 for v in self.nu):
            raise ValidationError("nu values must be positive")
        if self.window is not None and not self.window > 0:
            raise ValidationError("window C must be positive")
        self.masses = [int(m) for m in self.masses]
        if any(b <= a for a, b in zip(self.masses, self.masses[1:])):
            raise ValidationError("the m-grid must be strictly increasing")
        if any(m < 0 for m in self.masses):
            raise ValidationError("masses must be nonnegative")
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances)
        if any(not float(v) > 0 for v in tol.values()):
            raise ValidationError("all tolerances must be positive")
        self.tolerances = {k: float(v) for k, v in tol.items()}
        self.eps_sweep = [float(e) for e in self.eps_sweep]
        if any(not e > 0 for e in self.eps_sweep):
            raise ValidationError("eps values must be positive")
        if self.s_points < 8:
            raise ValidationError("need at least 8 s-grid points")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)
        if self.format not in ("csv", "json"):
            raise ValidationError("format must be csv or json")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ValidationError("cutoff must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported config schema version {version} (expected {SCHEMA_VERSION})")
        if "metric" not in d:
            raise ValidationError("config needs a metric")
        d["metric"] = load_metric_spec(d["metric"], base_dir)
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def canonical_bytes(self) -> bytes:
        """Canonical form of everything except the cache and output locations."""
        d = self.to_dict()
        d.pop("cache_dir")
        d.pop("out_dir")
        return canonical_json(d).encode("utf-8")

    def digest(self) -> str:
        return sha256_hex(self.canonical_bytes())

    def resolved_cache_dir(self) -> Path:
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        if self.cache_dir:
            return Path(self.cache_dir)
        return Path(".ladderlab-cache")


def load_metric_spec(spec, base_dir: Path | None = None) -> dict:
    if isinstance(spec, dict):
        return spec
    if isinstance(spec, str):
        p = Path(spec)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        try:
            return json.loads(p.read_text())
        except FileNotFoundError:
            raise ValidationError(f"metric file {p} not found") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"metric file {p} is not valid JSON: {exc}") from None
    raise ValidationError("metric must be a JSON object or a file path")


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        d = json.loads(p.read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file {p} not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {p} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(d, p.parent)


# --------------------------------------------------------------------------
# spectrum cache


class SpectrumCache:
    """One CSV per mass under ``<root>/spectra/<key>/`` plus a JSON manifest.

    The manifest records each file's SHA-256 and completeness interval; a
    hash mismatch raises :class:`CacheError`.
    """

    def __init__(self, root, key_material: dict):
        self.root = Path(root)
        self.key_material = key_material
        self.key = sha256_hex(canonical_json(key_material))
        self.dir = self.root / "spectra" / self.key
        self.hits = 0
        self.misses = 0

    @property
    def manifest_path(self) -> Path:
        return self.dir / "manifest.json"

    def _read_manifest(self) -> dict:
        if not self.manifest_path.exists():
            return {"key": self.key, "material": self.key_material, "slices": {}}
        try:
            man = json.loads(self.manifest_path.read_text())
        except json.JSONDecodeError:
            raise CacheError(f"cache manifest {self.manifest_path} is corrupt; delete {self.dir} and rerun") from None
        if man.get("key") != self.key:
            raise CacheError(f"cache manifest {self.manifest_path} has the wrong key; delete {self.dir} and rerun")
        return man

    @staticmethod
    def _mkey(m) -> str:
        return str(m) if isinstance(m, int) else format_float(m)

    def get(self, m) -> SpectrumSlice | None:
        man = self._read_manifest()
        ent = man["slices"].get(self._mkey(m))
        if ent is None:
            return None
        path = self.dir / ent["file"]
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise CacheError(f"cached file {path} is missing; delete {self.dir} and rerun") from None
        if sha256_hex(data) != ent["sha256"]:
            raise CacheError(f"cached file {path} fails its hash check; delete {self.dir} and rerun")
        self.hits += 1
        log.info("cache hit m=%s (%s)", self._mkey(m), path.name)
        return slice_from_csv(
            data.decode("utf-8"),
            float(ent["complete_lo"]),
            float(ent["complete_hi"]),
            True,
            m,
            float(ent.get("max_imag", 0.0)),
        )

    def put(self, sl: SpectrumSlice) -> Path:
        man = self._read_manifest()
        mk = self._mkey(sl.m)
        text = slice_to_csv(sl)
        name = f"m_{mk}.csv"
        atomic_write(self.dir / name, text)
        man["slices"][mk] = {
            "file": name,
            "sha256": sha256_hex(text),
            "complete_lo": sl.complete_lo,
            "complete_hi": sl.complete_hi,
            "entries": int(sl.lam.size),
            "zero_modes": int(sl.zero_modes),
            "max_imag": float(sl.max_imag),
        }
        atomic_write(self.manifest_path, pretty_json(man))
        self.misses += 1
        log.info("computed m=%s -> %s", mk, name)
        return self.dir / name


__all__ = [
    "CACHE_ENV",
    "RunConfig",
    "SCHEMA_VERSION",
    "SpectrumCache",
    "atomic_write",
    "canonical_json",
    "load_config",
    "load_metric_spec",
    "parse_float_list",
    "parse_mass_range",
    "pretty_json",
    "sha256_hex",
]
