"""Line-based netlist format: elements, source waveforms, parser, printer.

Grammar (whitespace-separated, ``#`` starts a comment, node 0 is ground)::

    R name n+ n- resistance
    C name n+ n- capacitance
    L name n+ n- inductance
    V name n+ n- DC value | SIN amplitude frequency [phase]
    I name n+ n- DC value | SIN amplitude frequency [phase]
    M name n+ n- device=<path>

At most one memristor element is allowed; its two terminals must be
distinct non-ground nodes so the terminal selection matrix has one entry
per column. Parse errors carry the line and column of the offending
token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from math import pi, sin, cos

from .errors import NetlistError

ELEMENT_KINDS = ("R", "C", "L", "V", "I", "M")

_TOKEN = re.compile(r"\S+")


@dataclass(frozen=True)
class Waveform:
    """DC or sinusoidal source value as a function of time."""

    kind: str
    value: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        if self.kind == "DC":
            return self.value
        return self.amplitude * sin(2.0 * pi * self.frequency * t + self.phase)

    def derivative(self, t: float) -> float:
        if self.kind == "DC":
            return 0.0
        w = 2.0 * pi * self.frequency
        return self.amplitude * w * cos(w * t + self.phase)

    def tokens(self) -> list[str]:
        if self.kind == "DC":
            return ["DC", repr(self.value)]
        out = ["SIN", repr(self.amplitude), repr(self.frequency)]
        if self.phase:
            out.append(repr(self.phase))
        return out


class _Tokens:
    """Tokens of one netlist line with their source columns (1-based)."""

    def __init__(self, text: str, line: int):
        self.line = line
        self.items = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(text)]
        self.end_col = len(text.rstrip()) + 1

    def __len__(self):
        return len(self.items)

    def value(self, idx: int) -> str:
        return self.items[idx][0]

    def col(self, idx: int) -> int:
        if idx < len(self.items):
            return self.items[idx][1]
        return self.end_col

    def error(self, idx: int, message: str) -> NetlistError:
        return NetlistError(message, self.line, self.col(idx))

    def number(self, idx: int, what: str) -> float:
        try:
            return float(self.value(idx))
        except ValueError:
            raise self.error(idx, f"bad {what} {self.value(idx)!r}") from None


def _parse_waveform(tok: _Tokens, start: int) -> Waveform:
    if start >= len(tok):
        raise tok.error(start, "missing source waveform")
    kind = tok.value(start).upper()
    n_args = len(tok) - start - 1
    if kind == "DC":
        if n_args != 1:
            raise tok.error(start, "DC takes one value")
        return Waveform(kind="DC", value=tok.number(start + 1, "DC value"))
    if kind == "SIN":
        if n_args not in (2, 3):
            raise tok.error(start,
                            "SIN takes amplitude, frequency, optional phase")
        phase = tok.number(start + 3, "phase") if n_args == 3 else 0.0
        return Waveform(kind="SIN",
                        amplitude=tok.number(start + 1, "amplitude"),
                        frequency=tok.number(start + 2, "frequency"),
                        phase=phase)
    raise tok.error(start, f"unknown waveform kind {tok.value(start)!r}")


@dataclass(frozen=True)
class Element:
    kind: str
    name: str
    nodes: tuple[int, int]
    value: float | None = None
    waveform: Waveform | None = None
    device: str | None = None


@dataclass(frozen=True)
class Netlist:
    elements: tuple[Element, ...]

    @property
    def memristor(self) -> Element | None:
        for el in self.elements:
            if el.kind == "M":
                return el
        return None

    def of_kind(self, kind: str) -> list[Element]:
        return [el for el in self.elements if el.kind == kind]

    @property
    def node_count(self) -> int:
        """Number of non-ground nodes."""
        return max(max(el.nodes) for el in self.elements)


def _parse_node(tok: _Tokens, idx: int) -> int:
    try:
        node = int(tok.value(idx))
    except ValueError:
        raise tok.error(idx, f"bad node index {tok.value(idx)!r}") from None
    if node < 0:
        raise tok.error(idx, f"negative node index {node}")
    return node


def parse_netlist(text: str) -> Netlist:
    """Parse netlist text; errors carry the offending line and column."""
    elements: list[Element] = []
    names: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0]
        if not stripped.strip():
            continue
        tok = _Tokens(stripped, lineno)
        kind = tok.value(0).upper()
        if kind not in ELEMENT_KINDS:
            raise tok.error(0, f"unknown element kind {tok.value(0)!r}")
        if len(tok) < 4:
            raise tok.error(len(tok),
                            f"{kind} element needs a name and two nodes")
        name = tok.value(1)
        if name in names:
            raise tok.error(1, f"duplicate element name {name!r}")
        names.add(name)
        n_plus = _parse_node(tok, 2)
        n_minus = _parse_node(tok, 3)
        if n_plus == n_minus:
            raise tok.error(3,
                            f"element {name!r} connects node {n_plus} "
                            "to itself")
        if kind in ("R", "C", "L"):
            if len(tok) != 5:
                raise tok.error(4, f"{kind} takes exactly one value")
            value = tok.number(4, "value")
            if value <= 0:
                raise tok.error(4,
                                f"{kind} value must be positive, got {value}")
            elements.append(Element(kind, name, (n_plus, n_minus),
                                    value=value))
        elif kind in ("V", "I"):
            elements.append(Element(
                kind, name, (n_plus, n_minus),
                waveform=_parse_waveform(tok, 4),
            ))
        else:  # memristor
            device = None
            if len(tok) > 5:
                raise tok.error(5, "memristor takes an optional device=<path>")
            if len(tok) == 5:
                if not tok.value(4).startswith("device="):
                    raise tok.error(
                        4, "memristor takes an optional device=<path>")
                device = tok.value(4)[len("device="):]
            if any(el.kind == "M" for el in elements):
                raise tok.error(0, "more than one memristor element")
            if 0 in (n_plus, n_minus):
                raise tok.error(2,
                                "memristor terminals must be non-ground nodes")
            elements.append(Element(
                kind, name, (n_plus, n_minus), device=device,
            ))
    if not elements:
        raise NetlistError("netlist contains no elements")

    used = set()
    for el in elements:
        used.update(el.nodes)
    if 0 not in used:
        raise NetlistError("netlist must reference the ground node 0")
    missing = set(range(1, max(used) + 1)) - used
    if missing:
        raise NetlistError(
            f"dangling node indices (no element touches): {sorted(missing)}"
        )
    return Netlist(elements=tuple(elements))


def format_netlist(netlist: Netlist) -> str:
    """Text form accepted back by ``parse_netlist`` (round trip)."""
    lines = []
    for el in netlist.elements:
        parts = [el.kind, el.name, str(el.nodes[0]), str(el.nodes[1])]
        if el.kind in ("R", "C", "L"):
            parts.append(repr(el.value))
        elif el.kind in ("V", "I"):
            parts.extend(el.waveform.tokens())
        elif el.device is not None:
            parts.append(f"device={el.device}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"
