"""
INI configuration with four flat sections.

Grammar: ``[model]``, ``[grid]``, ``[sampler]``, ``[fock]``; ``key = value``
lines; lists are comma separated; probe pairs are written ``s:t``. Unknown
sections or keys are errors. Every key has an explicit default below.
"""

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .model import ValidationError, harmonic_potential, make_form_factor, make_ir_profile, quartic_potential


class ConfigError(ValidationError):
    pass


@dataclass
class ModelSection:
    e: float = 0.3
    uv_width: float = 1.0
    ir: str = "zero"
    kappa: float = 1.0
    potential: str = "quartic"
    C: float = 1.0
    omega: float = 1.0
    R_max: float = 6.0
    n_grid: int = 6000


@dataclass
class GridSection:
    k_min: float = 1e-4
    k_max: float = 8.6
    n_shells: int = 48
    n_dirs: int = 12
    T: float = 4.0
    dt: float = 0.25
    T_list: list = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0, 64.0])
    x_max: float = 10.0
    n_x: int = 101


@dataclass
class SamplerSection:
    n_sweeps: int = 1000
    n_burn: int = 100
    block_len: int = 4
    n_chains: int = 2
    seed: int = 20240917
    thin: int = 1
    k_probes: list = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4])
    st_pairs: list = field(default_factory=lambda: [(0.0, 1.0)])
    ir_variants: list = field(default_factory=lambda: ["zero", "unit"])
    n_samples: int = 10000


@dataclass
class FockSection:
    n_max: int = 3
    particle: str = "static"
    q: list = field(default_factory=lambda: [0.0, 0.0, 0.5])
    n_sites: int = 16
    spacing: float = 0.25
    n_r: int = 16
    R_max: float = 4.0
    k_min: float = 0.1
    k_max: float = 8.6
    k_mins: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    panel_nodes: int = 2
    n_dirs: int = 2
    tol: float = 1e-10
    method: str = "auto"


SECTIONS = {"model": ModelSection, "grid": GridSection, "sampler": SamplerSection, "fock": FockSection}


def _parse_list(text, kind):
    items = [x.strip() for x in text.split(",") if x.strip()]
    if kind == "pairs":
        out = []
        for it in items:
            s, sep, t = it.partition(":")
            if not sep:
                raise ConfigError(f"probe pair {it!r} must be written s:t")
            out.append((float(s), float(t)))
        return out
    if kind == "str":
        return items
    return [float(x) for x in items]


def _list_kind(section, key):
    if key == "st_pairs":
        return "pairs"
    if key == "ir_variants":
        return "str"
    return "float"


def _coerce(section, key, default, raw):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return _parse_list(raw, _list_kind(section, key))
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


@dataclass
class Config:
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    fock: FockSection = field(default_factory=FockSection)

    @classmethod
    def from_parser(cls, parser):
        cfg = cls()
        for name in parser.sections():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]")
            sec = getattr(cfg, name)
            known = {f.name for f in fields(sec)}
            for key, raw in parser.items(name):
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                setattr(sec, key, _coerce(name, key, getattr(sec, key), raw))
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text):
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_parser(parser)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_dict(cls, d):
        cfg = cls()
        for name, values in d.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]")
            sec = getattr(cfg, name)
            for key, value in values.items():
                if not hasattr(sec, key):
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                if key == "st_pairs":
                    value = [tuple(map(float, v)) for v in value]
                setattr(sec, key, value)
        cfg.validate()
        return cfg

    def to_dict(self):
        d = asdict(self)
        d["sampler"]["st_pairs"] = [list(p) for p in d["sampler"]["st_pairs"]]
        return d

    def to_ini(self):
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for f in fields(getattr(self, name)):
                v = getattr(getattr(self, name), f.name)
                if f.name == "st_pairs":
                    text = ", ".join(f"{s!r}:{t!r}" for s, t in v)
                elif isinstance(v, list):
                    text = ", ".join(str(x) if isinstance(x, str) else repr(float(x)) for x in v)
                else:
                    text = repr(v) if isinstance(v, float) else str(v)
                lines.append(f"{f.name} = {text}")
            lines.append("")
        return "\n".join(lines)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate(self):
        m, g, s, f = self.model, self.grid, self.sampler, self.fock
        if m.potential not in ("quartic", "harmonic"):
            raise ConfigError("potential must be 'quartic' or 'harmonic'")
        if f.particle not in ("static", "grid1d", "radial"):
            raise ConfigError("fock particle must be static, grid1d or radial")
        if len(f.q) != 3:
            raise ConfigError("fock q must have three components")
        try:
            self.form_factor()
            for v in [m.ir, *s.ir_variants]:
                make_ir_profile(v, m.kappa)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 < g.k_min < g.k_max:
            raise ConfigError("need 0 < k_min < k_max")
        return self

    # factories -------------------------------------------------------------

    def form_factor(self):
        return make_form_factor(self.model.e, self.model.uv_width)

    def ir_profile(self, variant=None):
        return make_ir_profile(variant or self.model.ir, self.model.kappa)

    def potential(self):
        if self.model.potential == "harmonic":
            return harmonic_potential(self.model.omega)
        return quartic_potential(self.model.C)

    def gibbs_config(self, ir=None, T=None, e=None):
        from .gibbs import GibbsConfig

        s = self.sampler
        return GibbsConfig(
            e=self.model.e if e is None else e,
            T=self.grid.T if T is None else T,
            dt=self.grid.dt,
            ir=ir or self.model.ir,
            kappa=self.model.kappa,
            uv_width=self.model.uv_width,
            n_sweeps=s.n_sweeps,
            n_burn=s.n_burn,
            block_len=s.block_len,
            n_chains=s.n_chains,
            seed=s.seed,
            thin=s.thin,
            k_probes=tuple(s.k_probes),
            st_pairs=tuple(tuple(p) for p in s.st_pairs),
        )


def load_config(path=None):
    return Config() if path is None else Config.from_file(path)


__all__ = ["Config", "ConfigError", "load_config"]
