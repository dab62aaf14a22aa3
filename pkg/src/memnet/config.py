"""Device and run configuration.

Device files are sectioned ``key = value`` text with ``#`` comments::

    [domain]
    length_x = 1.0
    length_y = 1.0
    nx = 32
    ny = 32
    left = D1            # or segments like 0:0.5:D1,0.5:1:N
    right = D2
    top = N
    bottom = N

    [doping]
    lambda2 = 1.0
    n_i = 1.0
    background = 0.0
    rect = 0.0 0.0 0.5 1.0 0.25   # x0 y0 x1 y1 value, repeatable

    [boundary]
    n_bar = 1.0          # or n_bar_d1 / n_bar_d2 per terminal
    p_bar = 1.0

    [initial]
    n0 = 1.0
    rect_n0 = 0.25 0.25 0.75 0.75 0.5   # additive bump, repeatable
    p0 = 1.0
    D0 = 1.0

    [solver]
    gummel_tol = 1e-8
    gummel_max_iter = 50
    k_trunc = off
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import DomainSpec

SECTIONS = ("domain", "doping", "boundary", "initial", "solver")


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float
    value: float


@dataclass(frozen=True)
class PiecewiseField:
    """Background constant plus additive axis-aligned rectangles."""

    background: float = 0.0
    rects: tuple[Rect, ...] = ()

    def eval(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.full(np.broadcast(x, y).shape, self.background)
        for r in self.rects:
            inside = (x >= r.x0) & (x <= r.x1) & (y >= r.y0) & (y <= r.y1)
            out = np.where(inside, out + r.value, out)
        return out

    @property
    def sup(self) -> float:
        """Upper bound of |value| (rectangle overlaps counted additively)."""
        return abs(self.background) + sum(abs(r.value) for r in self.rects)


def _parse_rect(value: str, line: int) -> Rect:
    parts = value.split()
    if len(parts) != 5:
        raise ConfigError("rect takes: x0 y0 x1 y1 value", line)
    try:
        x0, y0, x1, y1, v = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad rect number: {exc}", line) from exc
    if x1 <= x0 or y1 <= y0:
        raise ConfigError("rect must have positive extent", line)
    return Rect(x0, y0, x1, y1, v)


def _parse_layout(value: str, line: int):
    """Edge entry: a bare label or comma-separated start:end:label runs."""
    value = value.strip()
    if ":" not in value:
        return value
    segments = []
    for chunk in value.split(","):
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad layout segment {chunk!r}", line)
        try:
            segments.append((float(parts[0]), float(parts[1]), parts[2].strip()))
        except ValueError as exc:
            raise ConfigError(f"bad layout fraction: {exc}", line) from exc
    return segments


def _read_sections(text: str) -> dict[str, list[tuple[int, str, str]]]:
    sections: dict[str, list[tuple[int, str, str]]] = {s: [] for s in SECTIONS}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip().lower()
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", lineno)
            current = name
            continue
        if current is None:
            raise ConfigError("key outside any section", lineno)
        if "=" not in stripped:
            raise ConfigError("expected key = value", lineno)
        key, _, value = stripped.partition("=")
        sections[current].append((lineno, key.strip().lower(), value.strip()))
    return sections


class _Section:
    def __init__(self, entries):
        self.entries = entries
        self.seen = set()

    def get(self, key, default=None, cast=float):
        hits = [(ln, v) for ln, k, v in self.entries if k == key]
        self.seen.add(key)
        if not hits:
            return default
        if len(hits) > 1:
            raise ConfigError(f"duplicate key {key!r}", hits[1][0])
        ln, value = hits[0]
        if cast is None:
            return value
        try:
            return cast(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", ln) from exc

    def get_all(self, key, parse):
        self.seen.add(key)
        return tuple(parse(v, ln) for ln, k, v in self.entries if k == key)

    def check_unknown(self, name):
        for ln, k, _ in self.entries:
            if k not in self.seen:
                raise ConfigError(f"unknown key {k!r} in [{name}]", ln)


@dataclass(frozen=True)
class DeviceConfig:
    """Parsed device description; see the module docstring for the format."""

    domain: DomainSpec
    nx: int
    ny: int
    lambda2: float
    n_i: float
    doping: PiecewiseField
    n_bar: tuple[float, float]
    p_bar: tuple[float, float]
    n0: PiecewiseField
    p0: PiecewiseField
    D0: PiecewiseField
    k_trunc: float | None = None
    gummel_tol: float = 1e-8
    gummel_max_iter: int = 50


def parse_device_config(text: str) -> DeviceConfig:
    sections = _read_sections(text)

    dom = _Section(sections["domain"])
    length_x = dom.get("length_x", 1.0)
    length_y = dom.get("length_y", 1.0)
    nx = dom.get("nx", cast=int)
    ny = dom.get("ny", cast=int)
    if nx is None or ny is None:
        raise ConfigError("[domain] must set nx and ny")
    layout = {}
    for edge in ("left", "right", "top", "bottom"):
        raw = dom.get(edge, cast=None)
        if raw is not None:
            layout[edge] = _parse_layout(raw, 0)
    dom.check_unknown("domain")

    dop = _Section(sections["doping"])
    lambda2 = dop.get("lambda2", 1.0)
    n_i = dop.get("n_i", 1.0)
    doping = PiecewiseField(
        background=dop.get("background", 0.0),
        rects=dop.get_all("rect", _parse_rect),
    )
    dop.check_unknown("doping")
    if lambda2 <= 0:
        raise ConfigError("lambda2 must be positive")
    if n_i <= 0:
        raise ConfigError("n_i must be positive")

    bnd = _Section(sections["boundary"])

    def per_terminal(base):
        both = bnd.get(base)
        d1 = bnd.get(f"{base}_d1")
        d2 = bnd.get(f"{base}_d2")
        if both is not None and (d1 is not None or d2 is not None):
            raise ConfigError(f"give {base} or per-terminal values, not both")
        if both is not None:
            return (both, both)
        if d1 is None or d2 is None:
            raise ConfigError(f"missing boundary density {base}")
        return (d1, d2)

    n_bar = per_terminal("n_bar")
    p_bar = per_terminal("p_bar")
    bnd.check_unknown("boundary")
    if min(n_bar) <= 0 or min(p_bar) <= 0:
        raise ConfigError("boundary densities must be strictly positive")

    ini = _Section(sections["initial"])

    def initial_field(key):
        return PiecewiseField(
            background=ini.get(key, 0.0),
            rects=ini.get_all(f"rect_{key.lower()}", _parse_rect),
        )

    n0 = initial_field("n0")
    p0 = initial_field("p0")
    d0 = initial_field("d0")
    ini.check_unknown("initial")

    sol = _Section(sections["solver"])
    k_raw = sol.get("k_trunc", "off", cast=None)
    if k_raw in (None, "off", "none", ""):
        k_trunc = None
    else:
        try:
            k_trunc = float(k_raw)
        except ValueError as exc:
            raise ConfigError(f"bad k_trunc {k_raw!r}") from exc
        if k_trunc <= 0:
            raise ConfigError("k_trunc must be positive or off")
    gummel_tol = sol.get("gummel_tol", 1e-8)
    gummel_max_iter = sol.get("gummel_max_iter", 50, cast=int)
    sol.check_unknown("solver")

    return DeviceConfig(
        domain=DomainSpec(length_x=length_x, length_y=length_y,
                          boundary_layout=layout or None),
        nx=nx, ny=ny,
        lambda2=lambda2, n_i=n_i, doping=doping,
        n_bar=n_bar, p_bar=p_bar,
        n0=n0, p0=p0, D0=d0,
        k_trunc=k_trunc,
        gummel_tol=gummel_tol,
        gummel_max_iter=gummel_max_iter,
    )


@dataclass(frozen=True)
class RunConfig:
    """Transient run controls (CLI flags or service request fields)."""

    dt: float
    t_end: float
    mode: str = "coupled"
    drive: str | None = None
    fields_every: int = 0
    repair_consistency: bool = False
    k_trunc: float | None = None
    gummel_tol: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.t_end < self.dt:
            raise ConfigError("t_end must be at least dt")
        if self.mode not in ("coupled", "drive"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "drive" and not self.drive:
            raise ConfigError("drive mode needs a drive waveform")
