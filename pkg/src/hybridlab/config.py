"""Run configuration files.

INI-style text with the sections below.  Polynomials are quoted strings;
lists are comma separated; complex amplitudes use Python literals
(``0.6``, ``0.8j``, ``0.5+0.5j``).  Every key is optional except
``[hamiltonian] v`` and ``[state] amplitudes``::

    [hamiltonian]
    h = 0, 0
    v = 1, -1
    H_cm = "0"
    V_cm = "q"

    [state]
    amplitudes = 0.7071067811865476, 0.7071067811865476
    pointer = 0, 0

    [grid]
    bounds = -4, 4, -4, 4        # q_min, q_max, p_min, p_max
    n_q = 64
    n_p = 64
    boundary = periodic          # or clamped

    [run]
    t_final = 1
    n_samples = 11
    mode = collapse              # linear | collapse | trial
    dt = 0.001

    [numerics]
    scheme = auto                # auto | spectral | central
    hbar = 1
    residual_threshold = 0.1
    positivity_tolerance = 1e-8  # in units of 1/(dq*dp)
    probability_tolerance = 1e-10
    smoothing_width = auto

    [output]
    plotdata = true
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, replace

from .errors import ConfigError, HybridLabError
from .phasespace import PhaseSpaceGrid
from .polynomial import PolynomialObservable
from .scenario import MODES, ScenarioConfig, build_measurement_hamiltonian

SCHEMA = {
    "hamiltonian": ("h", "v", "H_cm", "V_cm"),
    "state": ("amplitudes", "pointer"),
    "grid": ("bounds", "n_q", "n_p", "boundary"),
    "run": ("t_final", "n_samples", "mode", "dt"),
    "numerics": ("scheme", "hbar", "residual_threshold", "positivity_tolerance",
                 "probability_tolerance", "smoothing_width"),
    "output": ("plotdata",),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated textual configuration plus the scenario it describes."""

    h: tuple
    v: tuple
    H_cm: PolynomialObservable
    V_cm: PolynomialObservable
    amplitudes: tuple
    pointer: tuple = (0.0, 0.0)
    bounds: tuple = (-4.0, 4.0, -4.0, 4.0)
    n_q: int = 64
    n_p: int = 64
    boundary: str = "periodic"
    t_final: float = 1.0
    n_samples: int = 11
    mode: str = "collapse"
    dt: float = 1e-3
    scheme: str = "auto"
    hbar: float = 1.0
    residual_threshold: float = 0.1
    positivity_tolerance: float = 1e-8
    probability_tolerance: float = 1e-10
    smoothing_width: float | None = None
    plotdata: bool = True

    def grid(self):
        return PhaseSpaceGrid(*self.bounds, self.n_q, self.n_p, self.boundary)

    def scenario(self):
        spec = build_measurement_hamiltonian(self.h, self.v, self.H_cm, self.V_cm, self.hbar)
        return ScenarioConfig(
            spec, self.amplitudes, self.pointer, self.grid(), self.t_final, self.n_samples,
            self.mode, self.dt, None if self.scheme == "auto" else self.scheme,
            self.residual_threshold, self.positivity_tolerance, self.probability_tolerance,
            self.smoothing_width)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return _validated(replace(self, **kw), {}) if kw else self


def _fmt(x):
    return repr(float(x))


def _fmt_complex(z):
    z = complex(z)
    if z.imag == 0:
        return _fmt(z.real)
    return repr(z).strip("()")


def to_text(cfg):
    """Canonical text of a `RunConfig`; parsing it gives back an equal config."""
    lines = [
        "[hamiltonian]",
        "h = " + ", ".join(map(_fmt, cfg.h)),
        "v = " + ", ".join(map(_fmt, cfg.v)),
        f'H_cm = "{cfg.H_cm}"',
        f'V_cm = "{cfg.V_cm}"',
        "",
        "[state]",
        "amplitudes = " + ", ".join(map(_fmt_complex, cfg.amplitudes)),
        "pointer = " + ", ".join(map(_fmt, cfg.pointer)),
        "",
        "[grid]",
        "bounds = " + ", ".join(map(_fmt, cfg.bounds)),
        f"n_q = {cfg.n_q}",
        f"n_p = {cfg.n_p}",
        f"boundary = {cfg.boundary}",
        "",
        "[run]",
        f"t_final = {_fmt(cfg.t_final)}",
        f"n_samples = {cfg.n_samples}",
        f"mode = {cfg.mode}",
        f"dt = {_fmt(cfg.dt)}",
        "",
        "[numerics]",
        f"scheme = {cfg.scheme}",
        f"hbar = {_fmt(cfg.hbar)}",
        f"residual_threshold = {_fmt(cfg.residual_threshold)}",
        f"positivity_tolerance = {_fmt(cfg.positivity_tolerance)}",
        f"probability_tolerance = {_fmt(cfg.probability_tolerance)}",
        "smoothing_width = " + ("auto" if cfg.smoothing_width is None else _fmt(cfg.smoothing_width)),
        "",
        "[output]",
        f"plotdata = {'true' if cfg.plotdata else 'false'}",
        "",
    ]
    return "\n".join(lines)


def _line_of(text, section, key):
    """1-based line of ``key`` inside ``[section]``, or of the section header."""
    current = None
    header_line = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if current == section:
                header_line = n
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return n
    return header_line


def _unquote(value):
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _floats(value, field, count=None):
    try:
        out = tuple(float(x) for x in value.split(","))
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {value!r}", field) from exc
    if count is not None and len(out) != count:
        raise ConfigError(f"expected {count} numbers, got {len(out)}", field)
    return out


def _complexes(value, field):
    try:
        return tuple(complex(x.strip().replace(" ", "")) for x in value.split(","))
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated complex numbers, got {value!r}", field) from exc


def _number(conv, value, field):
    try:
        return conv(value)
    except ValueError as exc:
        raise ConfigError(f"invalid value {value!r}", field) from exc


def _bool(value, field):
    v = value.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected true or false, got {value!r}", field)


def parse_config(text):
    """Parse and fully validate configuration text.

    Raises
    ------
    ConfigError
        With the offending ``section.key`` and line where known.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("text before the first [section] header", line=exc.lineno) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", f"{exc.section}.{exc.option}", exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, exc.lineno) from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc.message.splitlines()[0]}",
                          line=getattr(exc, "lineno", None)) from exc

    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section, _line_of(text, section, None))
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", f"{section}.{key}", _line_of(text, section, key))

    values = {}
    where = {}

    def get(section, key):
        if parser.has_option(section, key):
            where[key] = (section, _line_of(text, section, key))
            return parser.get(section, key)
        return None

    def located(fn, section, key, *args):
        raw = get(section, key)
        if raw is None:
            return
        try:
            values[key] = fn(raw, *args)
        except ConfigError as exc:
            raise ConfigError(exc.message, f"{section}.{key}", where[key][1]) from exc

    located(lambda s: _floats(s, "h"), "hamiltonian", "h")
    located(lambda s: _floats(s, "v"), "hamiltonian", "v")
    for key in ("H_cm", "V_cm"):
        located(_polynomial, "hamiltonian", key)
    located(lambda s: _complexes(s, "amplitudes"), "state", "amplitudes")
    located(lambda s: _floats(s, "pointer", 2), "state", "pointer")
    located(lambda s: _floats(s, "bounds", 4), "grid", "bounds")
    for key in ("n_q", "n_p"):
        located(lambda s, k=key: _number(int, s, k), "grid", key)
    located(lambda s: s.strip(), "grid", "boundary")
    located(lambda s: _number(float, s, "t_final"), "run", "t_final")
    located(lambda s: _number(int, s, "n_samples"), "run", "n_samples")
    located(lambda s: s.strip(), "run", "mode")
    located(lambda s: _number(float, s, "dt"), "run", "dt")
    located(lambda s: s.strip(), "numerics", "scheme")
    for key in ("hbar", "residual_threshold", "positivity_tolerance", "probability_tolerance"):
        located(lambda s, k=key: _number(float, s, k), "numerics", key)
    located(lambda s: None if s.strip() == "auto" else _number(float, s, "smoothing_width"),
            "numerics", "smoothing_width")
    located(lambda s: _bool(s, "plotdata"), "output", "plotdata")

    for section, key in (("hamiltonian", "v"), ("state", "amplitudes")):
        if key not in values:
            raise ConfigError("required key is missing", f"{section}.{key}", _line_of(text, section, None))
    values.setdefault("h", (0.0,) * len(values["v"]))
    values.setdefault("H_cm", PolynomialObservable())
    values.setdefault("V_cm", PolynomialObservable.parse("q"))
    return _validated(RunConfig(**values), where)


def _polynomial(raw):
    try:
        return PolynomialObservable.parse(_unquote(raw))
    except HybridLabError as exc:
        raise ConfigError(str(exc)) from exc


def _validated(cfg, where):
    """Semantic checks that need several fields; names the field at fault."""

    def fail(key, msg):
        section, line = where.get(key, (_section_of(key), None))
        raise ConfigError(msg, f"{section}.{key}", line)

    if len(cfg.h) != len(cfg.v):
        fail("h", f"h has {len(cfg.h)} entries but v has {len(cfg.v)}")
    if len(cfg.amplitudes) != len(cfg.v):
        fail("amplitudes", f"{len(cfg.amplitudes)} amplitudes for {len(cfg.v)} levels")
    norm = sum(abs(c) ** 2 for c in cfg.amplitudes)
    if abs(norm - 1.0) > 1e-10:
        fail("amplitudes", f"amplitudes are not normalized (sum |c|^2 = {norm:.12g})")
    q0, q1, p0, p1 = cfg.bounds
    if not (q1 > q0 and p1 > p0):
        fail("bounds", "bounds must satisfy q_max > q_min and p_max > p_min")
    for key in ("n_q", "n_p"):
        if getattr(cfg, key) < 2:
            fail(key, "needs at least 2 nodes")
    if cfg.boundary not in ("periodic", "clamped"):
        fail("boundary", f"boundary must be periodic or clamped, got {cfg.boundary!r}")
    if not (q0 <= cfg.pointer[0] <= q1 and p0 <= cfg.pointer[1] <= p1):
        fail("pointer", f"pointer {cfg.pointer} lies outside the grid bounds")
    if cfg.t_final < 0:
        fail("t_final", "t_final must be nonnegative")
    if cfg.n_samples < 1:
        fail("n_samples", "n_samples must be >= 1")
    if cfg.mode not in MODES:
        fail("mode", f"mode must be one of {', '.join(MODES)}, got {cfg.mode!r}")
    if not cfg.dt > 0:
        fail("dt", "dt must be positive")
    if cfg.scheme not in ("auto", "spectral", "central"):
        fail("scheme", f"scheme must be auto, spectral or central, got {cfg.scheme!r}")
    if cfg.scheme == "spectral" and cfg.boundary != "periodic":
        fail("scheme", "spectral derivatives need a periodic grid")
    for key in ("hbar", "residual_threshold", "positivity_tolerance", "probability_tolerance"):
        if not getattr(cfg, key) > 0:
            fail(key, f"{key} must be positive")
    if cfg.smoothing_width is not None and not cfg.smoothing_width > 0:
        fail("smoothing_width", "smoothing_width must be positive or auto")
    return cfg


def _section_of(key):
    for section, keys in SCHEMA.items():
        if key in keys:
            return section
    return "?"


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config(text)
