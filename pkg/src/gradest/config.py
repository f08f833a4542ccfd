"""Flat ``key = value`` run configuration with a typed schema.

Lines are ``key = value``; ``#`` starts a comment; list values are comma
separated. Unknown keys, malformed values and out-of-range parameters raise
:class:`ConfigError` naming the line and field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

SUBCOMMANDS = ("poisson", "heat", "identities", "convergence")


class ConfigError(ValueError):
    pass


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _strs(s: str) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


def _opt_int(s: str) -> int | None:
    return None if s.strip().lower() in ("", "none") else int(s)


@dataclass
class RunConfig:
    subcommand: str | None = None
    manifold: str = "torus"
    dimension: int = 2
    lengths: list[float] | None = None
    resolution: list[int] = field(default_factory=lambda: [64])
    subdivision: int = 3
    scenario: list[str] | None = None
    b: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0])
    delta: list[float] = field(default_factory=lambda: [1.0])
    K: float = 0.0
    a: float = 2.0
    T: float = 1.0
    dt: float = 1e-3
    stride: int = 10
    check: str = "bochner"
    levels: list[int] = field(default_factory=lambda: [16, 32, 64])
    dt_levels: list[float] = field(default_factory=lambda: [4e-3, 2e-3, 1e-3])
    cg_maxiter: int | None = None
    ref_tol: float = 1e-6
    noise_samples: int = 2

    PARSERS = {
        "subcommand": str.strip, "manifold": str.strip, "dimension": int, "lengths": _floats,
        "resolution": _ints, "subdivision": int, "scenario": _strs, "b": _floats,
        "delta": _floats, "K": float, "a": float, "T": float, "dt": float, "stride": int,
        "check": str.strip, "levels": _ints, "dt_levels": _floats, "cg_maxiter": _opt_int,
        "ref_tol": float, "noise_samples": int,
    }

    @property
    def torus_lengths(self) -> list[float]:
        return self.lengths if self.lengths is not None else [2 * math.pi] * self.dimension

    @property
    def torus_resolutions(self) -> list[int]:
        if len(self.resolution) == 1:
            return self.resolution * self.dimension
        return self.resolution

    def validate(self) -> "RunConfig":
        def bad(key, msg):
            raise ConfigError(f"field {key!r}: {msg}")

        if self.subcommand is not None and self.subcommand not in SUBCOMMANDS:
            bad("subcommand", f"must be one of {SUBCOMMANDS}, got {self.subcommand!r}")
        if self.manifold not in ("torus", "sphere"):
            bad("manifold", f"must be 'torus' or 'sphere', got {self.manifold!r}")
        if not 1 <= self.dimension <= 3:
            bad("dimension", f"must be 1, 2 or 3, got {self.dimension}")
        if self.manifold == "torus":
            if len(self.torus_lengths) != self.dimension:
                bad("lengths", f"need {self.dimension} values")
            if any(not L > 0 for L in self.torus_lengths):
                bad("lengths", "side lengths must be > 0")
            if len(self.torus_resolutions) != self.dimension:
                bad("resolution", f"need 1 or {self.dimension} values")
        if any(N < 8 or N % 2 for N in self.resolution):
            bad("resolution", f"resolutions must be even and >= 8, got {self.resolution}")
        if self.subdivision < 2:
            bad("subdivision", f"must be >= 2, got {self.subdivision}")
        if not self.b or any(not v > 0 for v in self.b):
            bad("b", f"Young parameters must be > 0, got {self.b}")
        if not self.delta or any(not v > 0 for v in self.delta):
            bad("delta", f"positivity shifts must be > 0, got {self.delta}")
        if not self.K >= 0:
            bad("K", f"must be >= 0, got {self.K}")
        if not self.a > 1:
            bad("a", f"Harnack parameter must be > 1, got {self.a}")
        if not self.dt > 0:
            bad("dt", f"must be > 0, got {self.dt}")
        if not self.T >= self.dt:
            bad("T", f"must be >= dt, got {self.T}")
        if self.stride < 1:
            bad("stride", f"must be >= 1, got {self.stride}")
        if any(N < 8 or N % 2 for N in self.levels):
            bad("levels", f"resolutions must be even and >= 8, got {self.levels}")
        if any(not v > 0 for v in self.dt_levels):
            bad("dt_levels", "time steps must be > 0")
        if self.cg_maxiter is not None and self.cg_maxiter < 1:
            bad("cg_maxiter", f"must be >= 1, got {self.cg_maxiter}")
        if self.noise_samples < 0:
            bad("noise_samples", "must be >= 0")
        return self


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    names = {f.name for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in names:
            raise ConfigError(f"{source}:{lineno}: unknown field {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: field {key!r} given twice")
        try:
            values[key] = RunConfig.PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: field {key!r}: cannot parse {value!r} ({exc})") from None
    try:
        return RunConfig(**values).validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
