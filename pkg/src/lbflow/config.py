"""Run configuration files: line-oriented `key = value` grammar.

Grammar (documented here, parsed nowhere else):

  file     := line*
  line     := blank | comment | section | pair
  comment  := '#' .*                     (also allowed trailing a pair)
  section  := '[' name (' ' name)? ']'   e.g. [lattice], [component red]
  pair     := key '=' value
  value    := int | float | true | false | bare string | space-sep list

Sections and their keys:

  [lattice]          nx ny nz max_steps workers psi_form
  [component NAME]   tau colour_charge amphiphile d0 tau_d beta density
  [couplings]        A:B = g   (one line per pair, e.g. red:blue = 0.08)
  [boundaries]       x z shear_u shear_mode shear_period invader
  [forcing]          g_accn axis
  [geometry]         path threshold invert
  [init]             mode seed velocity (three numbers)
  [output]           run_id directory period fields dtype checkpoint_period
  [steering]         enabled host port http_port console_dir registry heartbeat

Unknown sections, unknown keys, duplicate keys and malformed literals are
reported with their line number.
"""

from __future__ import annotations

from pathlib import Path

from .model import (BoundaryConfig, ComponentSpec, ConfigError,
                    CouplingMatrix, ForcingConfig, GeometryConfig,
                    InitConfig, OutputConfig, SimConfig, SteeringConfig)

_INT = {"nx", "ny", "nz", "max_steps", "workers", "seed", "period",
        "checkpoint_period", "port", "http_port", "shear_period"}
_FLOAT = {"tau", "colour_charge", "d0", "tau_d", "beta", "density",
          "shear_u", "g_accn", "threshold", "heartbeat"}
_BOOL = {"amphiphile", "invert", "enabled"}

_SECTION_KEYS = {
    "lattice": {"nx", "ny", "nz", "max_steps", "workers", "psi_form"},
    "component": {"tau", "colour_charge", "amphiphile", "d0", "tau_d",
                  "beta", "density"},
    "couplings": None,   # free-form A:B keys
    "boundaries": {"x", "z", "shear_u", "shear_mode", "shear_period",
                   "invader"},
    "forcing": {"g_accn", "axis"},
    "geometry": {"path", "threshold", "invert"},
    "init": {"mode", "seed", "velocity"},
    "output": {"run_id", "directory", "period", "fields", "dtype",
               "checkpoint_period"},
    "steering": {"enabled", "host", "port", "http_port", "console_dir",
                 "registry", "heartbeat"},
}


def _literal(key: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
        if key in _BOOL:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
    except ValueError as e:
        raise ConfigError(f"{where}: bad value for {key!r}: {e}") from None
    return raw


def parse_sections(text: str, source: str = "<config>"):
    """Text -> {section header: {key: (value, line_no)}}. Section headers
    are tuples like ('lattice',) or ('component', 'red')."""
    sections = {}
    current = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        where = f"{source}:{lineno}"
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: unterminated section header")
            parts = line[1:-1].split()
            if not parts:
                raise ConfigError(f"{where}: empty section header")
            kind = parts[0]
            if kind not in _SECTION_KEYS:
                raise ConfigError(f"{where}: unknown section [{kind}]")
            if kind == "component":
                if len(parts) != 2:
                    raise ConfigError(
                        f"{where}: [component] needs a name, e.g. "
                        "[component red]")
                current = ("component", parts[1])
            elif len(parts) != 1:
                raise ConfigError(f"{where}: [{kind}] takes no name")
            else:
                current = (kind,)
            if current in sections:
                raise ConfigError(f"{where}: duplicate section {line}")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got "
                              f"{line!r}")
        if current is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        allowed = _SECTION_KEYS[current[0]]
        if allowed is not None and key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r} in "
                              f"[{' '.join(current)}]")
        if key in sections[current]:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        sections[current][key] = (val, lineno)
    return sections


def _take(sec: dict, key: str, default=None):
    if key not in sec:
        return default
    val, _ = sec.pop(key)
    return val


def load_config_text(text: str, source: str = "<config>") -> SimConfig:
    sections = parse_sections(text, source)

    lat = {k: v for k, (v, _) in sections.pop(("lattice",), {}).items()}
    if not lat:
        raise ConfigError(f"{source}: missing [lattice] section")
    for need in ("nx", "ny", "nz"):
        if need not in lat:
            raise ConfigError(f"{source}: [lattice] missing {need!r}")

    components = []
    densities = {}
    for head in [h for h in sections if h[0] == "component"]:
        name = head[1]
        sec = {k: v for k, (v, _) in sections.pop(head).items()}
        dens = sec.pop("density", None)
        kw = {k: _literal(k, v, source) for k, v in sec.items()}
        components.append(ComponentSpec(name, **kw))
        if dens is not None:
            densities[name] = _literal("density", dens, source)
    if not components:
        raise ConfigError(f"{source}: no [component NAME] sections")

    couplings = CouplingMatrix()
    for key, (val, lineno) in sections.pop(("couplings",), {}).items():
        if ":" not in key:
            raise ConfigError(f"{source}:{lineno}: coupling keys look like "
                              f"'A:B', got {key!r}")
        a, _, b = key.partition(":")
        try:
            couplings.set_g(a.strip(), b.strip(), float(val))
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad coupling value "
                              f"{val!r}") from None

    def section_kw(kind, int_or_float_keys=()):
        sec = sections.pop((kind,), {})
        return {k: _literal(k, v, f"{source}:{ln}") for k, (v, ln) in
                sec.items()}

    bkw = section_kw("boundaries")
    fkw = section_kw("forcing")
    if "axis" in fkw:
        fkw["axis"] = {"x": 0, "y": 1, "z": 2}.get(fkw["axis"], fkw["axis"])
        if not isinstance(fkw["axis"], int):
            raise ConfigError(f"{source}: forcing axis must be x, y or z")
    gkw = section_kw("geometry")
    ikw = section_kw("init")
    if "velocity" in ikw:
        parts = str(ikw["velocity"]).split()
        if len(parts) != 3:
            raise ConfigError(f"{source}: init velocity needs 3 numbers")
        try:
            ikw["velocity"] = tuple(float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"{source}: bad init velocity") from None
    okw = section_kw("output")
    if "fields" in okw:
        okw["fields"] = tuple(str(okw["fields"]).split())
    skw = section_kw("steering")

    if sections:
        leftover = " ".join("[" + " ".join(h) + "]" for h in sections)
        raise ConfigError(f"{source}: unhandled sections: {leftover}")

    ikw["densities"] = densities
    return SimConfig(
        nx=_literal("nx", lat["nx"], source),
        ny=_literal("ny", lat["ny"], source),
        nz=_literal("nz", lat["nz"], source),
        components=components,
        couplings=couplings,
        boundaries=BoundaryConfig(**bkw),
        forcing=ForcingConfig(**fkw),
        geometry=GeometryConfig(**gkw) if gkw else None,
        init=InitConfig(**ikw),
        output=OutputConfig(**okw),
        steering=SteeringConfig(**skw),
        psi_form=lat.get("psi_form", "exp"),
        max_steps=_literal("max_steps", lat.get("max_steps", "0"), source),
        workers=_literal("workers", lat.get("workers", "1"), source),
    )


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return load_config_text(text, str(path))
