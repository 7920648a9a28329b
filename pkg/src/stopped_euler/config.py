"""Experiment configuration files.

Grammar: a TOML document with the tables below.  Every key is validated
before any computation; unknown keys are errors.

.. code-block:: toml

    output_dir = "out"              # optional, --output overrides

    [model]                         # required
    eps = 1.0                       # required, > 0
    kappa = 1.0                     # required, >= 0 (reaction rate)
    rho = 1.0                       # required, > 0
    sigma = 0.25                    # required, >= 0
    T = 1.0                         # required, > 0
    q = 2.0                         # r_k = c_q * k^-q, q > 1
    c_q = 1.0
    xi_scale = 8.0                  # xi(x) = xi_scale * x (1 - x)
    xi = [0.1, 0.0]                 # optional explicit sine coefficients

    [scheme]                        # required by simulate, moments, compare
    theta = 0.25                    # in (0, 1/4]
    N = [8, 16]                     # int or list; resolutions are the
    n = 16                          # cartesian product of N, n, m
    m = 16

    [analysis]
    M_samples = 256                 # required
    seeds = [20240601]              # required unless --seed is given
    p = 2.0                         # >= 2
    eta = 0.3                       # in [0, 1/2)
    iota = 0.01
    kappa_growth = 2.0              # > 2/p
    reference = [1024, 128, 128]    # (N_ref, n_ref, m_ref)
    separation = 8
    bootstrap = 1000
    chunk = 32

    [converge]                      # required by converge
    axis = "temporal"               # temporal | spatial | noise
    values = [8, 16, 32, 64, 128]   # at least three
    fixed = { n = 128, m = 128 }    # the other two of N, n, m

    [simulate]
    per_sample = true               # one CSV per (resolution, sample)
    scheme = "stopped"              # stopped | untamed
"""
from __future__ import annotations

import itertools
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analysis import AnalysisConfig
from .errors import ConfigurationError
from .experiments import AXES
from .model import ModelSpec
from .spectral import SpectralField

_SCHEMA = {
    None: {"output_dir"},
    "model": {"eps", "kappa", "rho", "sigma", "T", "q", "c_q", "xi_scale", "xi"},
    "scheme": {"theta", "N", "n", "m"},
    "analysis": {"M_samples", "seeds", "p", "eta", "iota", "kappa_growth", "reference",
                 "separation", "bootstrap", "chunk"},
    "converge": {"axis", "values", "fixed"},
    "simulate": {"per_sample", "scheme"},
}
_REQUIRED = {
    "model": ("eps", "kappa", "rho", "sigma", "T"),
    "analysis": ("M_samples",),
}


@dataclass
class ExperimentConfig:
    model: ModelSpec
    analysis: AnalysisConfig
    theta: float = 0.25
    N: list = field(default_factory=list)
    n: list = field(default_factory=list)
    m: list = field(default_factory=list)
    axis: str | None = None
    values: list = field(default_factory=list)
    fixed: dict = field(default_factory=dict)
    per_sample: bool = True
    scheme: str = "stopped"
    output_dir: str | None = None
    source: str | None = None

    def resolutions(self) -> list[tuple[int, int, int]]:
        if not (self.N and self.n and self.m):
            raise ConfigurationError("[scheme] needs N, n and m", field="scheme")
        return [tuple(r) for r in itertools.product(self.N, self.n, self.m)]


class _Locator:
    """Maps (table, key) to the line where the key is defined."""

    def __init__(self, text: str):
        self.lines = {}
        table = None
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            mt = re.match(r"^\[\s*([A-Za-z_][\w.]*)\s*\]$", line)
            if mt:
                table = mt.group(1)
                self.lines.setdefault((table, None), no)
                continue
            mk = re.match(r"^([A-Za-z_]\w*)\s*=", line)
            if mk:
                self.lines.setdefault((table, mk.group(1)), no)

    def __call__(self, table, key=None):
        return self.lines.get((table, key))


def _err(loc, table, key, msg):
    name = key if table is None else (f"{table}.{key}" if key else table)
    return ConfigurationError(msg, field=name, line=loc(table, key))


def _int_list(loc, table, key, value, minimum=1):
    vals = value if isinstance(value, list) else [value]
    if not vals or not all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
        raise _err(loc, table, key, "expected an integer or a list of integers")
    if min(vals) < minimum:
        raise _err(loc, table, key, f"values must be at least {minimum}")
    return [int(v) for v in vals]


def _number(loc, table, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _err(loc, table, key, "expected a number")
    return float(value)


def parse_config(text: str, source: str | None = None, seed_override: int | None = None) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigurationError(f"malformed config: {exc}", line=int(m.group(1)) if m else None) from exc
    loc = _Locator(text)

    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in _SCHEMA or key is None:
                raise _err(loc, key, None, f"unknown table [{key}]")
            for sub in value:
                if sub not in _SCHEMA[key]:
                    raise _err(loc, key, sub, f"unknown key '{sub}' in [{key}]")
        elif key not in _SCHEMA[None]:
            raise _err(loc, None, key, f"unknown top-level key '{key}'")

    for table, keys in _REQUIRED.items():
        if table not in doc:
            raise ConfigurationError(f"missing required table [{table}]", field=table)
        for key in keys:
            if key not in doc[table]:
                raise ConfigurationError(f"missing required field '{table}.{key}'",
                                         field=f"{table}.{key}", line=loc(table))

    # model
    mt = doc["model"]
    kw = {}
    for key in ("eps", "kappa", "rho", "sigma", "T", "q", "c_q", "xi_scale"):
        if key in mt:
            kw[key] = _number(loc, "model", key, mt[key])
    if "xi" in mt:
        xi = mt["xi"]
        if not isinstance(xi, list) or not xi or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in xi
        ):
            raise _err(loc, "model", "xi", "expected a non-empty list of sine coefficients")
        kw["xi"] = SpectralField([float(v) for v in xi])
    try:
        model = ModelSpec(**kw)
    except ConfigurationError as exc:
        raise _err(loc, "model", exc.field, str(exc).split("] ", 1)[-1]) from exc

    # analysis
    at = doc["analysis"]
    akw = {}
    for key in ("p", "eta", "iota", "kappa_growth"):
        if key in at:
            akw[key] = _number(loc, "analysis", key, at[key])
    for key in ("M_samples", "separation", "bootstrap", "chunk"):
        if key in at:
            akw[key] = _int_list(loc, "analysis", key, at[key])[0]
            if isinstance(at[key], list):
                raise _err(loc, "analysis", key, "expected a single integer")
    if "reference" in at:
        ref = _int_list(loc, "analysis", "reference", at["reference"])
        if len(ref) != 3:
            raise _err(loc, "analysis", "reference", "expected [N_ref, n_ref, m_ref]")
        akw["reference"] = tuple(ref)
    if seed_override is not None:
        akw["seeds"] = (int(seed_override),)
    elif "seeds" in at:
        seeds = at["seeds"] if isinstance(at["seeds"], list) else [at["seeds"]]
        if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) and 0 <= s < 2**64 for s in seeds):
            raise _err(loc, "analysis", "seeds", "expected unsigned 64-bit integers")
        akw["seeds"] = tuple(seeds)
    else:
        raise ConfigurationError("missing required field 'analysis.seeds' (or pass --seed)",
                                 field="analysis.seeds", line=loc("analysis"))
    try:
        analysis = AnalysisConfig(**akw)
    except ConfigurationError as exc:
        raise _err(loc, "analysis", exc.field, str(exc).split("] ", 1)[-1]) from exc

    cfg = ExperimentConfig(model=model, analysis=analysis, source=source)
    if "output_dir" in doc:
        if not isinstance(doc["output_dir"], str):
            raise _err(loc, None, "output_dir", "expected a string")
        cfg.output_dir = doc["output_dir"]

    st = doc.get("scheme", {})
    if "theta" in st:
        cfg.theta = _number(loc, "scheme", "theta", st["theta"])
    if not 0 < cfg.theta <= 0.25:
        raise _err(loc, "scheme", "theta", "theta must lie in (0, 1/4]")
    for key in ("N", "n", "m"):
        if key in st:
            setattr(cfg, key, _int_list(loc, "scheme", key, st[key]))

    ct = doc.get("converge")
    if ct is not None:
        axis = ct.get("axis")
        if axis not in AXES:
            raise _err(loc, "converge", "axis", f"axis must be one of {', '.join(AXES)}")
        cfg.axis = axis
        if "values" not in ct:
            raise _err(loc, "converge", None, "missing required field 'converge.values'")
        cfg.values = _int_list(loc, "converge", "values", ct["values"])
        fixed = ct.get("fixed", {})
        if not isinstance(fixed, dict) or not set(fixed) <= {"N", "n", "m"}:
            raise _err(loc, "converge", "fixed", "fixed must be a table with keys among N, n, m")
        cfg.fixed = {k: _int_list(loc, "converge", "fixed", v)[0] for k, v in fixed.items()}
        axis_key = {"temporal": "N", "spatial": "n", "noise": "m"}[axis]
        ref = dict(zip("Nnm", analysis.reference))
        for k in "Nnm":
            if k != axis_key:
                cfg.fixed.setdefault(k, ref[k])
        Ns = cfg.values if axis == "temporal" else [cfg.fixed["N"]]
        ns = cfg.values if axis == "spatial" else [cfg.fixed["n"]]
        ms = cfg.values if axis == "noise" else [cfg.fixed["m"]]
        try:
            analysis.check_reference(Ns, ns, ms)
        except ConfigurationError as exc:
            raise _err(loc, "analysis", "reference", str(exc).split("] ", 1)[-1]) from exc

    sim = doc.get("simulate", {})
    if "per_sample" in sim:
        if not isinstance(sim["per_sample"], bool):
            raise _err(loc, "simulate", "per_sample", "expected true or false")
        cfg.per_sample = sim["per_sample"]
    if "scheme" in sim:
        if sim["scheme"] not in ("stopped", "untamed"):
            raise _err(loc, "simulate", "scheme", "scheme must be 'stopped' or 'untamed'")
        cfg.scheme = sim["scheme"]
    return cfg


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}", field="--config") from exc
    return parse_config(text, source=str(path), seed_override=seed_override)
