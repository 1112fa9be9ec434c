"""Line-based configuration grammar.

::

    # comment
    [simulation]
    nu = 0.1
    cutoff = 16
    [flux]
    d = 1
    A1 = "1/2 u^2"
    [noise]
    modes = [(1,), (-1,)]
    amplitude = sqrt(2)/2

One ``key = value`` per line, sections in brackets. Values are numbers,
exact scalars (``3/2``, ``sqrt(2)``, ``1/2*sqrt(3)``, sums with ``+``),
wavevectors ``(1, -1)``, bracketed lists, ``{k: v}`` maps, quoted strings
and bare words. Flux components are quoted polynomials in ``u`` whose
coefficients are exact scalars or names defined elsewhere in ``[flux]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields
from fractions import Fraction

from ..dynamics import Scheme, SimConfig
from ..errors import GridTooSmall, ParseError, ValidationError
from ..field import SpectralField
from ..lattice import DEFAULT_CAP, DEFAULT_RADIUS, ExactScalar, FluxPoly, NoiseSet

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9.]*)
  | (?P<str>"[^"]*")
  | (?P<op>[()\[\]{},:+\-*/^])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    col: int


def _lex(text: str, line: int, col0: int) -> list[_Tok]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(line, col0 + pos, f"unexpected character {text[pos]!r}")
        if m.lastgroup != "ws":
            out.append(_Tok(m.lastgroup, m.group(), col0 + pos))
        pos = m.end()
    out.append(_Tok("end", "", col0 + len(text)))
    return out


@dataclass(frozen=True)
class Number:
    """Exact value of a numeric literal; ``decimal`` marks float-style spelling."""

    value: ExactScalar
    decimal: bool = False


class _Parser:
    def __init__(self, text: str, line: int, col0: int, names: dict | None = None):
        self.toks = _lex(text, line, col0)
        self.i = 0
        self.line = line
        self.names = names or {}

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(self.line, tok.col, msg)

    def take(self, text=None, kind=None) -> _Tok:
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = text if text is not None else kind
            raise self.error(f"expected {want!r}, found {t.text or 'end of value'!r}")
        self.i += 1
        return t

    def at(self, text) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def done(self):
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")

    # values
    def value(self):
        t = self.tok
        if self.at("["):
            self.take("[")
            items = []
            while not self.at("]"):
                items.append(self.value())
                if not self.at("]"):
                    self.take(",")
            self.take("]")
            return items
        if self.at("{"):
            self.take("{")
            out = {}
            while not self.at("}"):
                kt = self.tok
                key = self.value()
                self.take(":")
                if key in out:
                    raise self.error(f"duplicate map key {key!r}", kt)
                out[_hashable(key, self, kt)] = self.value()
                if not self.at("}"):
                    self.take(",")
            self.take("}")
            return out
        if t.kind == "str":
            self.take()
            return t.text[1:-1]
        if t.kind == "ident" and t.text != "sqrt" and t.text not in self.names:
            nxt = self.toks[self.i + 1]
            if nxt.kind in ("end",) or nxt.text in (",", "]", "}", ":"):
                self.take()
                return t.text
        return self.expr(allow_tuple=True)

    def expr(self, allow_tuple=False):
        if allow_tuple and self.at("("):
            save = self.i
            self.take("(")
            first = self.expr()
            if self.at(","):
                items = [first]
                while self.at(","):
                    self.take(",")
                    if self.at(")"):
                        break
                    items.append(self.expr())
                self.take(")")
                return tuple(items)
            self.i = save
        acc = self.term()
        while self.at("+") or self.at("-"):
            op = self.take().text
            rhs = self.term()
            acc = Number(acc.value + rhs.value if op == "+" else acc.value - rhs.value,
                         acc.decimal or rhs.decimal)
        return acc

    def term(self):
        acc = self.unary()
        while self.at("*") or self.at("/"):
            opt = self.take()
            rhs = self.unary()
            acc = self._combine(acc, rhs, opt)
        return acc

    def _combine(self, a: Number, b: Number, opt: _Tok) -> Number:
        try:
            if opt.text == "*":
                v = a.value * b.value
            else:
                q = _rational(b.value)
                if q is None:
                    raise self.error("division by an irrational value is not supported", opt)
                if q == 0:
                    raise self.error("division by zero", opt)
                v = a.value * (1 / q)
        except TypeError:
            raise self.error("product of two irrational values is not supported", opt) from None
        return Number(v, a.decimal or b.decimal)

    def unary(self):
        if self.at("-"):
            self.take("-")
            n = self.unary()
            return Number(-n.value, n.decimal)
        if self.at("+"):
            self.take("+")
            return self.unary()
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            dec = not t.text.isdigit()
            return Number(ExactScalar.rational(Fraction(t.text)), dec)
        if t.kind == "ident" and t.text == "sqrt":
            self.take()
            self.take("(")
            arg = self.take(kind="num")
            if not arg.text.isdigit():
                raise self.error("sqrt takes a non-negative integer", arg)
            self.take(")")
            return Number(ExactScalar.sqrt(int(arg.text)))
        if t.kind == "ident":
            if t.text in self.names:
                self.take()
                return Number(self.names[t.text])
            raise self.error(f"unknown name {t.text!r}; coefficients must be rationals or square roots")
        if self.at("("):
            self.take("(")
            n = self.expr()
            self.take(")")
            return n
        raise self.error(f"expected a number, found {t.text or 'end of value'!r}")

    # flux polynomials
    def polynomial(self) -> dict[int, ExactScalar]:
        terms: dict[int, ExactScalar] = {}
        sign = self._signs(1)
        while True:
            coef, power = self.poly_term()
            terms[power] = terms.get(power, ExactScalar()) + coef * sign
            if self.at("+") or self.at("-"):
                sign = self._signs(1)
                continue
            self.done()
            return terms

    def _signs(self, sign):
        """Fold a run of leading ``+``/``-`` into one sign."""
        while self.at("+") or self.at("-"):
            if self.take().text == "-":
                sign = -sign
        return sign

    def poly_term(self):
        coef = None
        start = self.tok
        while True:
            t = self.tok
            if t.kind == "ident" and t.text == "u":
                break
            if t.kind in ("num", "ident") or self.at("("):
                f = self.atom()
                coef = f if coef is None else self._combine(coef, f, _Tok("op", "*", t.col))
                if self.at("*"):
                    self.take("*")
                elif self.at("/"):
                    opt = self.take("/")
                    coef = self._combine(coef, self.atom(), opt)
                continue
            break
        power = 0
        if self.tok.kind == "ident" and self.tok.text == "u":
            self.take()
            power = 1
            if self.at("^"):
                self.take("^")
                p = self.take(kind="num")
                if not p.text.isdigit():
                    raise self.error("exponent must be a non-negative integer", p)
                power = int(p.text)
        elif coef is None:
            raise self.error(f"expected a term, found {start.text or 'end of value'!r}", start)
        return (coef.value if coef is not None else ExactScalar.rational(1)), power


def _rational(x: ExactScalar):
    if x.is_zero():
        return Fraction(0)
    if len(x.terms) == 1 and x.terms[0][0] == 1:
        return x.terms[0][1]
    return None


def _hashable(key, parser, tok):
    if isinstance(key, list):
        raise parser.error("lists cannot be map keys", tok)
    return key


def parse_value(text: str, line: int = 1, col0: int = 1, names: dict | None = None):
    p = _Parser(text, line, col0, names)
    v = p.value()
    p.done()
    return v


def parse_polynomial(text: str, line: int = 1, col0: int = 1, names: dict | None = None) -> dict:
    return _Parser(text, line, col0, names).polynomial()


# -- typed configuration ----------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    # simulation
    nu: float = 0.1
    cutoff: int = 8
    dt: float = 1e-3
    t_end: float = 1.0
    seed: int = 0
    stream_id: int = 0
    scheme: str = "exp_euler"
    grid_size: int | None = None
    blowup_threshold: float = 1e6
    # flux and noise
    dim: int = 1
    flux_rows: tuple = ()
    noise: tuple = ()
    u0: tuple = ()
    # lattice
    radius: int = DEFAULT_RADIUS
    margin: int | None = None
    cap: int = DEFAULT_CAP
    # experiment
    experiment: str | None = None
    ensemble_size: int = 1
    burn_in: float | None = None
    observables: tuple = ()
    params: dict = field(default_factory=dict)
    # tangent validation
    tangent_t: float | None = None
    tangent_direction: tuple | None = None
    tangent_eps: tuple = (1e-3, 1e-4, 1e-5)
    # Malliavin
    malliavin_s: float = 0.0
    malliavin_t: float | None = None
    track_radius: float | None = None
    alpha: float = 0.5
    n_low: float = 2.0
    # output
    out: str | None = None
    series_dir: str | None = None
    write_every: int = 1

    def flux(self) -> FluxPoly:
        if not self.flux_rows:
            return FluxPoly.zero(self.dim)
        return FluxPoly(self.dim, self.flux_rows)

    def noise_set(self) -> NoiseSet:
        return NoiseSet(self.dim, self.noise)

    def initial(self) -> SpectralField | None:
        if not self.u0:
            return None
        return SpectralField.from_modes(self.dim, self.cutoff, dict(self.u0))

    def sim_config(self) -> SimConfig:
        return SimConfig(nu=self.nu, flux=self.flux(), noise=self.noise_set(), cutoff=self.cutoff,
                         dt=self.dt, t_end=self.t_end, grid_size=self.grid_size, scheme=Scheme(self.scheme.upper()),
                         seed=self.seed, stream_id=self.stream_id, blowup_threshold=self.blowup_threshold,
                         u0=self.initial())

    def with_(self, **kw) -> "RunConfig":
        from dataclasses import replace

        return replace(self, **kw)


# key -> (section, attribute, converter)
_SIM_KEYS = {
    "nu": "float", "cutoff": "int", "dt": "float", "t_end": "float", "seed": "int", "stream_id": "int",
    "scheme": "word", "grid_size": "int", "blowup_threshold": "float",
}
_SECTIONS = {
    "simulation": {k: (k, v) for k, v in _SIM_KEYS.items()},
    "noise": {"modes": ("modes", "vectors"), "amplitude": ("amplitude", "exact"),
              "amplitudes": ("amplitudes", "exact_list")},
    "initial": {"u0": ("u0", "field")},
    "lattice": {"radius": ("radius", "int"), "margin": ("margin", "int"), "cap": ("cap", "int")},
    "experiment": {"name": ("experiment", "word"), "ensemble_size": ("ensemble_size", "int"),
                   "burn_in": ("burn_in", "float"), "observables": ("observables", "strings")},
    "tangent": {"t": ("tangent_t", "float"), "direction": ("tangent_direction", "vector"),
                "eps": ("tangent_eps", "floats")},
    "malliavin": {"s": ("malliavin_s", "float"), "t": ("malliavin_t", "float"),
                  "track_radius": ("track_radius", "float"), "alpha": ("alpha", "float"),
                  "n_low": ("n_low", "float")},
    "output": {"out": ("out", "string"), "series_dir": ("series_dir", "string"),
               "write_every": ("write_every", "int")},
    "flux": {},
    "params": {},
}
_COMPONENT = re.compile(r"A([1-9][0-9]*)$")
_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*$")
_RESERVED = {"u", "sqrt", "d"}


class _Errors:
    def __init__(self):
        self.items: list[str] = []

    def add(self, line, msg):
        self.items.append(f"line {line}: {msg}")


def _as_exact(v, what):
    if isinstance(v, Number):
        return v.value
    raise ValueError(f"{what} must be a number")


def _as_float(v, what):
    return float(_as_exact(v, what))


def _as_int(v, what):
    q = _rational(_as_exact(v, what))
    if q is None or q.denominator != 1 or (isinstance(v, Number) and v.decimal):
        raise ValueError(f"{what} must be an integer")
    return int(q)


def _as_vector(v, what):
    if isinstance(v, Number):
        return (_as_int(v, what),)
    if isinstance(v, tuple):
        return tuple(_as_int(x, what) for x in v)
    raise ValueError(f"{what} must be a wavevector like (1, -1)")


def _plain(v):
    """Convert parsed literals into plain Python values for experiment parameters."""
    if isinstance(v, Number):
        q = _rational(v.value)
        if q is not None and q.denominator == 1 and not v.decimal:
            return int(q)
        return float(v.value)
    if isinstance(v, tuple):
        return tuple(_plain(x) for x in v)
    if isinstance(v, list):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {(_plain(k) if isinstance(k, tuple) else (_plain(k),)): _plain(x) for k, x in v.items()}
    return v


def _convert(kind, v, what):
    if kind == "float":
        return _as_float(v, what)
    if kind == "int":
        return _as_int(v, what)
    if kind == "exact":
        return _as_exact(v, what)
    if kind == "word":
        if not isinstance(v, str):
            raise ValueError(f"{what} must be a word")
        return v
    if kind == "string":
        if not isinstance(v, str):
            raise ValueError(f"{what} must be a quoted string")
        return v
    if kind == "strings":
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            raise ValueError(f"{what} must be a list of strings")
        return tuple(v)
    if kind == "floats":
        if not isinstance(v, list):
            raise ValueError(f"{what} must be a list")
        return tuple(_as_float(x, what) for x in v)
    if kind == "exact_list":
        if not isinstance(v, list):
            raise ValueError(f"{what} must be a list")
        return tuple(_as_exact(x, what) for x in v)
    if kind == "vector":
        return _as_vector(v, what)
    if kind == "vectors":
        if not isinstance(v, list):
            raise ValueError(f"{what} must be a list of wavevectors")
        return tuple(_as_vector(x, what) for x in v)
    if kind == "field":
        if not isinstance(v, dict):
            raise ValueError(f"{what} must be a map {{(k1, k2): value}}")
        return tuple(sorted((_as_vector(k, what), _as_float(x, what)) for k, x in v.items()))
    raise AssertionError(kind)


_LINE = re.compile(r"^\s*(?P<key>[^=\s]+)\s*=\s*(?P<val>.*?)\s*$")


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        if ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration.

    Syntax problems raise :class:`ParseError` at the first offending
    position; semantic problems are collected and raised together as a
    :class:`ValidationError` whose messages carry line numbers.
    """
    errors = _Errors()
    section = None
    seen: dict[tuple, int] = {}
    raw: dict[str, dict[str, tuple]] = {s: {} for s in _SECTIONS}
    for lineno, full in enumerate(text.splitlines(), start=1):
        line = _strip_comment(full)
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ParseError(lineno, len(line.rstrip()) + 1, "section header must end with ']'")
            section = stripped[1:-1].strip()
            if section not in _SECTIONS:
                errors.add(lineno, f"unknown section [{section}]")
                section = "?"
            continue
        m = _LINE.match(line)
        if m is None:
            raise ParseError(lineno, len(line) - len(line.lstrip()) + 1, "expected 'key = value'")
        key = m.group("key")
        if section is None:
            raise ParseError(lineno, m.start("key") + 1, "key outside of any [section]")
        if section == "?":
            continue
        if (section, key) in seen:
            errors.add(lineno, f"duplicate key {key!r} (first set on line {seen[(section, key)]})")
            continue
        seen[(section, key)] = lineno
        raw[section][key] = (m.group("val"), lineno, m.start("val") + 1)
    kw = {}
    # flux first: its names feed polynomial parsing
    flux = raw["flux"]
    names: dict[str, ExactScalar] = {}
    comps: dict[int, tuple] = {}
    dim = None
    for key, (val, ln, col) in flux.items():
        if key == "d":
            try:
                dim = _as_int(parse_value(val, ln, col), "d")
                if dim < 1:
                    raise ValueError("d must be >= 1")
            except ValueError as exc:
                errors.add(ln, str(exc))
        elif _COMPONENT.match(key):
            comps[int(_COMPONENT.match(key).group(1))] = (val, ln, col)
        elif _NAME.match(key) and key not in _RESERVED:
            try:
                names[key] = _as_exact(parse_value(val, ln, col), key)
            except ValueError as exc:
                errors.add(ln, str(exc))
        else:
            errors.add(ln, f"unknown key {key!r} in [flux]")
    if dim is None:
        dim = max(comps, default=1)
    kw["dim"] = dim
    rows = []
    for i in range(1, dim + 1):
        if i not in comps:
            rows.append(())
            continue
        val, ln, col = comps.pop(i)
        if not (val.startswith('"') and val.endswith('"') and len(val) >= 2):
            raise ParseError(ln, col, "flux components are quoted polynomials, e.g. \"1/2 u^2\"")
        terms = parse_polynomial(val[1:-1], ln, col + 1, names)
        width = max(terms, default=0) + 1
        rows.append(tuple(terms.get(j, ExactScalar()) for j in range(width)))
    for i, (_, ln, _) in comps.items():
        errors.add(ln, f"component A{i} exceeds dimension d={dim}")
    if any(rows):
        width = max(2, max(len(r) for r in rows))
        rows = [tuple(r) + (ExactScalar(),) * (width - len(r)) for r in rows]
        while width > 2 and all(r[width - 1].is_zero() for r in rows):
            width -= 1
        kw["flux_rows"] = tuple(tuple(r[:width]) for r in rows)
    # plain sections
    noise_raw = {}
    for section, table in _SECTIONS.items():
        if section in ("flux", "params"):
            continue
        for key, (val, ln, col) in raw[section].items():
            if key not in table:
                errors.add(ln, f"unknown key {key!r} in [{section}]")
                continue
            attr, kind = table[key]
            try:
                conv = _convert(kind, parse_value(val, ln, col), key)
            except ValueError as exc:
                errors.add(ln, str(exc))
                continue
            if attr == "scheme":
                conv = conv.lower()
            if section == "noise":
                noise_raw[attr] = (conv, ln)
            else:
                kw[attr] = conv
    kw["params"] = {key: _plain(parse_value(val, ln, col)) for key, (val, ln, col) in raw["params"].items()}
    # noise
    if "modes" in noise_raw:
        modes, ln = noise_raw["modes"]
        if "amplitudes" in noise_raw and "amplitude" in noise_raw:
            errors.add(ln, "give either amplitude or amplitudes, not both")
        if "amplitudes" in noise_raw:
            amps, aln = noise_raw["amplitudes"]
            if len(amps) != len(modes):
                errors.add(aln, "amplitudes must match modes in length")
                amps = (ExactScalar.rational(1),) * len(modes)
        else:
            amp = noise_raw.get("amplitude", (ExactScalar.rational(1), ln))[0]
            amps = (amp,) * len(modes)
        try:
            kw["noise"] = NoiseSet(dim, tuple((k, float(a)) for k, a in zip(modes, amps))).amplitudes
        except ValueError as exc:
            errors.add(ln, str(exc))
    elif noise_raw:
        errors.add(next(iter(noise_raw.values()))[1], "[noise] needs a modes list")
    cfg = RunConfig(**kw)
    _validate(cfg, seen, errors)
    return cfg


def _validate(cfg: RunConfig, seen: dict, errors: _Errors):
    """Check the assembled config against the constructors of the target modules.

    Adds to the errors already collected and raises them all, ordered by line.
    """
    def line_of(section, key):
        return seen.get((section, key), 0)

    schemes = {s.value.lower() for s in Scheme}
    if cfg.scheme not in schemes:
        errors.add(line_of("simulation", "scheme"), f"scheme must be one of {', '.join(sorted(schemes))}")
    if cfg.radius < 1:
        errors.add(line_of("lattice", "radius"), "radius must be >= 1")
    if cfg.margin is not None and cfg.margin < 0:
        errors.add(line_of("lattice", "margin"), "margin must be >= 0")
    if cfg.ensemble_size < 1:
        errors.add(line_of("experiment", "ensemble_size"), "ensemble_size must be >= 1")
    if cfg.write_every < 1:
        errors.add(line_of("output", "write_every"), "write_every must be >= 1")
    if not 0 < cfg.alpha <= 1:
        errors.add(line_of("malliavin", "alpha"), "alpha must lie in (0, 1]")
    if cfg.experiment is not None:
        from ..ergolab import REGISTRY

        if cfg.experiment not in REGISTRY:
            errors.add(line_of("experiment", "name"), f"unknown experiment {cfg.experiment!r}")
    bad_u0 = False
    for k, _ in cfg.u0:
        if len(k) != cfg.dim or max(abs(x) for x in k) > cfg.cutoff or not any(k):
            errors.add(line_of("initial", "u0"), f"initial mode {k} is not a tracked mode")
            bad_u0 = True
    if cfg.scheme in schemes and not bad_u0:
        try:
            cfg.sim_config()
        except ValidationError as exc:
            def locate(msg):
                key = msg.split()[0]
                return line_of("simulation", key) or line_of("noise", "modes") or line_of("flux", "d")

            for e in exc.errors:
                errors.add(locate(e), e)
        except (GridTooSmall, ValueError) as exc:
            errors.add(line_of("simulation", "grid_size"), str(exc))
    if errors.items:
        raise ValidationError(sorted(errors.items, key=lambda e: int(e.split()[1].rstrip(":"))))


# -- canonical emission -----------------------------------------------------


def emit_exact(x: ExactScalar) -> str:
    if x.is_zero():
        return "0"
    parts = []
    for m, q in x.terms:
        if m == 1:
            parts.append(str(q))
        elif q == 1:
            parts.append(f"sqrt({m})")
        elif q == -1:
            parts.append(f"-sqrt({m})")
        else:
            parts.append(f"{q}*sqrt({m})")
    return " + ".join(parts)


def _emit_number(x) -> str:
    if isinstance(x, bool):
        raise TypeError("booleans are not part of the grammar")
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("non-finite numbers cannot be written")
        return repr(x)
    if isinstance(x, ExactScalar):
        return emit_exact(x)
    raise TypeError(f"cannot emit {type(x).__name__}")


def _emit_vector(k) -> str:
    return "(" + ", ".join(str(x) for x in k) + ("," if len(k) == 1 else "") + ")"


def emit_value(v) -> str:
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, tuple):
        return "(" + ", ".join(emit_value(x) for x in v) + ("," if len(v) == 1 else "") + ")"
    if isinstance(v, list):
        return "[" + ", ".join(emit_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{emit_value(k)}: {emit_value(x)}" for k, x in v.items()) + "}"
    return _emit_number(v)


def emit_polynomial(row) -> str:
    terms = []
    for j, c in enumerate(row):
        if c.is_zero():
            continue
        coef = emit_exact(c)
        if len(c.terms) > 1:
            coef = f"({coef})"
        terms.append(coef if j == 0 else f"{coef} u" if j == 1 else f"{coef} u^{j}")
    return " + ".join(terms) if terms else "0"


def emit_config(cfg: RunConfig) -> str:
    """Canonical text for ``cfg``; ``parse_config(emit_config(c)) == c``."""
    d = RunConfig()
    lines = ["[simulation]"]
    for key in _SIM_KEYS:
        v = getattr(cfg, key)
        if v is None:
            continue
        lines.append(f"{key} = {v}" if key == "scheme" else f"{key} = {_emit_number(v)}")
    lines += ["", "[flux]", f"d = {cfg.dim}"]
    for i, row in enumerate(cfg.flux_rows, start=1):
        lines.append(f'A{i} = "{emit_polynomial(row)}"')
    if cfg.noise:
        lines += ["", "[noise]", "modes = [" + ", ".join(_emit_vector(k) for k, _ in cfg.noise) + "]",
                  "amplitudes = [" + ", ".join(repr(float(b)) for _, b in cfg.noise) + "]"]
    if cfg.u0:
        lines += ["", "[initial]", "u0 = {" + ", ".join(f"{_emit_vector(k)}: {v!r}" for k, v in cfg.u0) + "}"]
    lines += ["", "[lattice]", f"radius = {cfg.radius}", f"cap = {cfg.cap}"]
    if cfg.margin is not None:
        lines.append(f"margin = {cfg.margin}")
    if cfg.experiment is not None or cfg.observables or cfg.burn_in is not None or cfg.ensemble_size != 1:
        lines += ["", "[experiment]"]
        if cfg.experiment is not None:
            lines.append(f"name = {cfg.experiment}")
        lines.append(f"ensemble_size = {cfg.ensemble_size}")
        if cfg.burn_in is not None:
            lines.append(f"burn_in = {cfg.burn_in!r}")
        if cfg.observables:
            lines.append("observables = " + emit_value(list(cfg.observables)))
    if cfg.params:
        lines += ["", "[params]"] + [f"{k} = {emit_value(v)}" for k, v in cfg.params.items()]
    tang = []
    if cfg.tangent_t is not None:
        tang.append(f"t = {cfg.tangent_t!r}")
    if cfg.tangent_direction is not None:
        tang.append(f"direction = {_emit_vector(cfg.tangent_direction)}")
    if cfg.tangent_eps != d.tangent_eps:
        tang.append("eps = [" + ", ".join(repr(e) for e in cfg.tangent_eps) + "]")
    if tang:
        lines += ["", "[tangent]"] + tang
    mall = [f"s = {cfg.malliavin_s!r}", f"alpha = {cfg.alpha!r}", f"n_low = {cfg.n_low!r}"]
    if cfg.malliavin_t is not None:
        mall.append(f"t = {cfg.malliavin_t!r}")
    if cfg.track_radius is not None:
        mall.append(f"track_radius = {cfg.track_radius!r}")
    lines += ["", "[malliavin]"] + mall
    outp = [f"write_every = {cfg.write_every}"]
    if cfg.out is not None:
        outp.append(f'out = "{cfg.out}"')
    if cfg.series_dir is not None:
        outp.append(f'series_dir = "{cfg.series_dir}"')
    lines += ["", "[output]"] + outp
    return "\n".join(lines) + "\n"


CONFIG_FIELDS = tuple(f.name for f in fields(RunConfig))
