"""Plain-text run configuration: INI-style sections with key = value lines.

Sections are [mesh], [model], [time], [output]; '#' starts a comment.  An
empty document yields the baseline run (avoidance-balanced Galerkin on the
level-5 grid over [-6, 6]^2 to t = 1000).  Unknown sections or keys are
errors, as are out-of-range values; syntax errors carry line numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .mesh import Rectangle
from .model import InitialCondition, ModelParams, RateFunction, RateKind
from .stepper import Scheme, TimeConfig


class ConfigError(ValueError):
    pass


@dataclass
class OutputToggles:
    fields: bool = True
    diagonal: bool = True
    classification: bool = True
    lyapunov: bool = False
    summary: bool = True


@dataclass
class RunConfig:
    domain: Rectangle = field(default_factory=Rectangle)
    refinement: int = 5
    params: ModelParams = field(default_factory=ModelParams)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial: str = "offset_gaussians"
    const_u: float = 0.0
    const_v: float = 0.0
    output_dir: str = "turfsim-out"
    sample_times: tuple = ()
    detect_interval: float = 25.0
    outputs: OutputToggles = field(default_factory=OutputToggles)

    def initial_condition(self) -> InitialCondition:
        if self.initial == "offset_gaussians":
            return InitialCondition.offset_gaussians()
        if self.initial == "pure_gaussians":
            return InitialCondition.pure_gaussians()
        if self.initial == "constant":
            return InitialCondition.constant(self.const_u, self.const_v)
        raise ConfigError(f"initial condition kind {self.initial!r} is not configurable")


_RATES = {"saturating": RateKind.SATURATING, "identity": RateKind.IDENTITY}
_SCHEMES = {s.value: s for s in Scheme}
_INITIALS = ("offset_gaussians", "pure_gaussians", "constant")
_TRUE = {"true", "on", "yes", "1"}
_FALSE = {"false", "off", "no", "0"}

_KNOWN_KEYS = {
    "mesh": {"x_min", "x_max", "y_min", "y_max", "refinement"},
    "model": {"d_u", "d_v", "chi_u", "chi_v", "rate_f", "rate_g", "initial", "const_u", "const_v"},
    "time": {"t_end", "dt", "theta", "scheme", "fp_tolerance", "fp_max_iter", "prelimiting"},
    "output": {
        "directory",
        "sample_times",
        "detect_interval",
        "fields",
        "diagonal",
        "classification",
        "lyapunov",
        "summary",
    },
}


def _scan(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    """Raw section -> {key: (value, line)} mapping with location checks."""
    out: dict[str, dict[str, tuple[str, int]]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}, column {len(raw.rstrip())}: unterminated section header")
            section = line[1:-1].strip().lower()
            if section not in _KNOWN_KEYS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            out.setdefault(section, {})
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            raise ConfigError(f"line {lineno}, column {col}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in section [{section}]")
        if key in out[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in section [{section}]")
        out[section][key] = (value, lineno)
    return out


def _take(raw, section, key, conv, default):
    if section not in raw or key not in raw[section]:
        return default
    value, lineno = raw[section][key]
    try:
        return conv(value)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: key {key!r}: {exc}") from exc


def _as_bool(value: str) -> bool:
    v = value.lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _as_times(value: str) -> tuple:
    parts = value.replace(",", " ").split()
    return tuple(float(p) for p in parts)


def _choice(table, what):
    def conv(value: str):
        v = value.lower()
        if v not in table:
            raise ValueError(f"expected one of {sorted(table)}, got {value!r}")
        return table[v] if isinstance(table, dict) else v

    conv.__name__ = what
    return conv


def parse_config(text: str) -> RunConfig:
    raw = _scan(text)
    base = RunConfig()

    domain_kwargs = {
        k: _take(raw, "mesh", k, float, getattr(base.domain, k))
        for k in ("x_min", "x_max", "y_min", "y_max")
    }
    refinement = _take(raw, "mesh", "refinement", int, base.refinement)

    rate_f = RateFunction(_take(raw, "model", "rate_f", _choice(_RATES, "rate"), ModelParams().rate_f.kind))
    rate_g = RateFunction(_take(raw, "model", "rate_g", _choice(_RATES, "rate"), ModelParams().rate_g.kind))
    initial = _take(raw, "model", "initial", _choice(_INITIALS, "initial"), base.initial)

    try:
        time_cfg = TimeConfig(
            t_end=_take(raw, "time", "t_end", float, base.time.t_end),
            dt=_take(raw, "time", "dt", float, base.time.dt),
            theta=_take(raw, "time", "theta", float, base.time.theta),
            scheme=_take(raw, "time", "scheme", _choice(_SCHEMES, "scheme"), base.time.scheme),
            fp_tolerance=_take(raw, "time", "fp_tolerance", float, base.time.fp_tolerance),
            fp_max_iter=_take(raw, "time", "fp_max_iter", int, base.time.fp_max_iter),
            prelimiting=_take(raw, "time", "prelimiting", _as_bool, base.time.prelimiting),
        )
        cfg = RunConfig(
            domain=Rectangle(**domain_kwargs),
            refinement=refinement,
            params=ModelParams(
                d_u=_take(raw, "model", "d_u", float, base.params.d_u),
                d_v=_take(raw, "model", "d_v", float, base.params.d_v),
                chi_u=_take(raw, "model", "chi_u", float, base.params.chi_u),
                chi_v=_take(raw, "model", "chi_v", float, base.params.chi_v),
                rate_f=rate_f,
                rate_g=rate_g,
            ),
            time=time_cfg,
            initial=initial,
            const_u=_take(raw, "model", "const_u", float, base.const_u),
            const_v=_take(raw, "model", "const_v", float, base.const_v),
            output_dir=_take(raw, "output", "directory", str, base.output_dir),
            sample_times=_take(raw, "output", "sample_times", _as_times, base.sample_times),
            detect_interval=_take(raw, "output", "detect_interval", float, base.detect_interval),
            outputs=OutputToggles(
                fields=_take(raw, "output", "fields", _as_bool, True),
                diagonal=_take(raw, "output", "diagonal", _as_bool, True),
                classification=_take(raw, "output", "classification", _as_bool, True),
                lyapunov=_take(raw, "output", "lyapunov", _as_bool, False),
                summary=_take(raw, "output", "summary", _as_bool, True),
            ),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if not 0 <= cfg.refinement <= 12:
        raise ConfigError("key 'refinement': must lie in [0, 12]")
    if cfg.detect_interval <= 0.0:
        raise ConfigError("key 'detect_interval': must be positive")
    if cfg.initial != "constant" and (cfg.const_u or cfg.const_v):
        raise ConfigError("keys 'const_u'/'const_v' apply only when initial = constant")
    return cfg


def render_config(cfg: RunConfig) -> str:
    """Canonical text form; parse_config inverts it exactly."""
    lines = [
        "[mesh]",
        f"x_min = {cfg.domain.x_min!r}",
        f"x_max = {cfg.domain.x_max!r}",
        f"y_min = {cfg.domain.y_min!r}",
        f"y_max = {cfg.domain.y_max!r}",
        f"refinement = {cfg.refinement}",
        "",
        "[model]",
        f"d_u = {cfg.params.d_u!r}",
        f"d_v = {cfg.params.d_v!r}",
        f"chi_u = {cfg.params.chi_u!r}",
        f"chi_v = {cfg.params.chi_v!r}",
        f"rate_f = {cfg.params.rate_f.kind.value}",
        f"rate_g = {cfg.params.rate_g.kind.value}",
        f"initial = {cfg.initial}",
    ]
    if cfg.initial == "constant":
        lines += [f"const_u = {cfg.const_u!r}", f"const_v = {cfg.const_v!r}"]
    lines += [
        "",
        "[time]",
        f"t_end = {cfg.time.t_end!r}",
        f"dt = {cfg.time.dt!r}",
        f"theta = {cfg.time.theta!r}",
        f"scheme = {cfg.time.scheme.value}",
        f"fp_tolerance = {cfg.time.fp_tolerance!r}",
        f"fp_max_iter = {cfg.time.fp_max_iter}",
        f"prelimiting = {'on' if cfg.time.prelimiting else 'off'}",
        "",
        "[output]",
        f"directory = {cfg.output_dir}",
    ]
    if cfg.sample_times:
        lines.append("sample_times = " + " ".join(repr(t) for t in cfg.sample_times))
    lines += [
        f"detect_interval = {cfg.detect_interval!r}",
        f"fields = {'on' if cfg.outputs.fields else 'off'}",
        f"diagonal = {'on' if cfg.outputs.diagonal else 'off'}",
        f"classification = {'on' if cfg.outputs.classification else 'off'}",
        f"lyapunov = {'on' if cfg.outputs.lyapunov else 'off'}",
        f"summary = {'on' if cfg.outputs.summary else 'off'}",
        "",
    ]
    return "\n".join(lines)


def apply_override(cfg: RunConfig, spec: str) -> RunConfig:
    """Apply one 'section.key=value' override string to a config."""
    if "=" not in spec or "." not in spec.split("=", 1)[0]:
        raise ConfigError(f"override {spec!r} must look like section.key=value")
    dotted, value = spec.split("=", 1)
    section, key = (part.strip().lower() for part in dotted.split(".", 1))
    if section not in _KNOWN_KEYS or key not in _KNOWN_KEYS[section]:
        raise ConfigError(f"override names unknown key {dotted.strip()!r}")
    text = render_config(cfg)
    out_lines = []
    replaced = False
    current = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("["):
            if current == section and not replaced:
                out_lines.append(f"{key} = {value}")
                replaced = True
            current = stripped[1:-1]
        elif current == section and stripped.split("=", 1)[0].strip() == key:
            out_lines.append(f"{key} = {value}")
            replaced = True
            continue
        out_lines.append(line)
    if not replaced:
        out_lines.append(f"[{section}]")
        out_lines.append(f"{key} = {value}")
    return parse_config("\n".join(out_lines))
