"""Flat sectioned configuration files and atomic output.

Example::

    [lattice]
    n = 1
    L = 9
    root_side = 1.0

    [measures]
    sigma = power 0.25
    omega = lebesgue

    [kernel]
    kernel = hilbert
    delta = auto
    R = 2.0
    smooth = yes

    [samplers]
    seed = 0
    samples = 2
    poly_samples = 4

    [constants]
    list = N, A2, testing

    [ceilings]
    t1 = 100
    lemma = 10
    budget = 4000000

    [output]
    dir = reports

Every section is optional.  Keys under ``[params]`` are passed to the
suites verbatim.
"""

from __future__ import annotations

import configparser
import os
import tempfile
from dataclasses import dataclass, field

from .lattice import GoodnessParams
from .verify import ExperimentSpec

__all__ = ["Config", "ConfigError", "load_config", "parse_config", "atomic_write", "CONSTANT_NAMES"]

CONSTANT_NAMES = (
    "N",
    "A2",
    "A2_tail",
    "pivotal",
    "testing",
    "full_testing",
    "indicator",
    "bict",
    "weak",
    "wbp",
    "cancellation",
)

_SECTIONS = {
    "lattice": {"n", "l", "root_side"},
    "measures": {"sigma", "omega"},
    "kernel": {"kernel", "delta", "r", "smooth", "alpha"},
    "samplers": {"seed", "samples", "poly_samples"},
    "goodness": {"r", "epsilon", "tau", "rho"},
    "tolerances": {"exact", "parseval", "split"},
    "ceilings": {"t1", "lemma", "budget"},
    "constants": {"list", "kappa"},
    "output": {"dir", "id"},
    "params": None,
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class Config:
    spec: ExperimentSpec
    goodness: GoodnessParams = field(default_factory=GoodnessParams)
    constants: tuple = CONSTANT_NAMES
    out_dir: str = "."


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def parse_config(text: str) -> Config:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        allowed = _SECTIONS[sec]
        if allowed is not None:
            extra = set(cp[sec]) - allowed
            if extra:
                raise ConfigError(f"unknown keys in [{sec}]: {', '.join(sorted(extra))}")

    def get(sec, key, default, conv=str):
        if cp.has_option(sec, key):
            try:
                return conv(cp.get(sec, key))
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from exc
        return default

    delta = get("kernel", "delta", "auto")
    alpha = get("kernel", "alpha", "auto")
    kw = dict(
        id=get("output", "id", "exp"),
        sigma=get("measures", "sigma", "lebesgue"),
        omega=get("measures", "omega", "lebesgue"),
        kernel=get("kernel", "kernel", "hilbert"),
        delta=None if delta.strip().lower() == "auto" else float(delta),
        R=get("kernel", "r", 2.0, float),
        smooth=get("kernel", "smooth", True, _bool),
        n=get("lattice", "n", 1, int),
        L=get("lattice", "l", 9, int),
        side=get("lattice", "root_side", 1.0, float),
        alpha=None if alpha.strip().lower() == "auto" else float(alpha),
        kappa=get("constants", "kappa", 1, int),
        seed=get("samplers", "seed", 0, int),
        samples=get("samplers", "samples", 2, int),
        poly_samples=get("samplers", "poly_samples", 4, int),
        ceiling_t1=get("ceilings", "t1", 100.0, float),
        ceiling_lemma=get("ceilings", "lemma", 10.0, float),
        budget=get("ceilings", "budget", 4_000_000, int),
        tol_exact=get("tolerances", "exact", 1e-10, float),
        tol_parseval=get("tolerances", "parseval", 1e-9, float),
        tol_split=get("tolerances", "split", 1e-9, float),
        params=dict(cp["params"]) if cp.has_section("params") else {},
    )
    if kw["n"] < 1 or kw["L"] < 1:
        raise ConfigError("need n >= 1 and L >= 1")
    try:
        good = GoodnessParams(
            get("goodness", "r", 4, int),
            get("goodness", "epsilon", 0.25, float),
            get("goodness", "tau", 3, int),
            get("goodness", "rho", 8, int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    names = tuple(t.strip() for t in get("constants", "list", ",".join(CONSTANT_NAMES)).split(",") if t.strip())
    bad = [t for t in names if t not in CONSTANT_NAMES]
    if bad:
        raise ConfigError(f"unknown constants: {', '.join(bad)}")
    spec = ExperimentSpec(**kw)
    try:
        spec.measures()
        spec.kernel_spec()
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    return Config(spec, good, names, get("output", "dir", "."))


def load_config(path: str) -> Config:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(str(exc)) from exc


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to a temporary sibling, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
