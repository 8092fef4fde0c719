"""Flat `key = value` config grammar for reproducible experiment runs.

Sections in square brackets, comma-separated lists, no nesting. The
[experiment] and [params] sections are strictly validated (unknown keys
are config errors naming the key); generator sections ([E], [F], [A])
carry kind-specific keys; [extra] is free-form and passed through with
int/float coercion.
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path

from .core import ConfigError, ExponentParams
from .experiments import EXPERIMENTS, ExperimentConfig
from .generators import GeneratorSpec

_EXPERIMENT_KEYS = {"name", "out", "J", "seeds"}
_PARAM_KEYS = {f.name for f in dataclasses.fields(ExponentParams)}
_GENERATOR_SECTIONS = ("E", "F", "A", "gen")
_GENERATOR_KEYS = {"kind", "n", "s", "seed", "mask0", "mask1", "mask2", "mask3", "plane_axes", "inner_kind", "inner_mask0", "inner_mask1"}


def _coerce(value: str):
    value = value.strip()
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


def _int_list(value: str, key: str):
    try:
        return [int(v.strip()) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"key '{key}' must be a comma-separated integer list: {e}") from None


def parse_generator_section(section, n_default: int = 2, J_default: int = 8) -> GeneratorSpec:
    keys = set(section.keys())
    unknown = keys - _GENERATOR_KEYS
    if unknown:
        raise ConfigError(f"unknown generator key '{sorted(unknown)[0]}'")
    kind = section.get("kind", "lattice")
    n = int(section.get("n", n_default))
    params: dict = {}
    if kind == "cantor_digits":
        masks = []
        for ax in range(n):
            mask = section.get(f"mask{ax}")
            if mask is None:
                raise ConfigError(f"cantor_digits needs key 'mask{ax}'")
            masks.append(mask.strip())
        params["masks"] = masks
    elif kind == "random_delta_s":
        if "s" not in section:
            raise ConfigError("random_delta_s needs key 's'")
        params["s"] = float(section["s"])
        params["seed"] = int(section.get("seed", 0))
    elif kind == "plane_subset":
        axes = _int_list(section.get("plane_axes", "0"), "plane_axes")
        inner_kind = section.get("inner_kind", "lattice")
        inner_params: dict = {}
        if inner_kind == "cantor_digits":
            inner_params["masks"] = [section.get(f"inner_mask{i}", "*").strip() for i in range(len(axes))]
        params["plane_axes"] = axes
        params["inner"] = GeneratorSpec(inner_kind, len(axes), J_default, inner_params)
    elif kind not in ("lattice",):
        raise ConfigError(f"generator kind {kind!r} is not supported in config files")
    return GeneratorSpec(kind, n, J_default, params)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except configparser.Error as e:
        raise ConfigError(f"config parse error: {e}") from None

    if "experiment" not in cp:
        raise ConfigError("missing [experiment] section")
    exp = cp["experiment"]
    unknown = set(exp.keys()) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}' in [experiment]")
    for needed in ("name", "out"):
        if needed not in exp:
            raise ConfigError(f"missing key '{needed}' in [experiment]")
    name = exp["name"].strip()
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{name}'; known: {', '.join(sorted(EXPERIMENTS))}")
    J_sweep = _int_list(exp.get("J", "8"), "J")
    seeds = _int_list(exp.get("seeds", "0"), "seeds")

    params = ExponentParams()
    if "params" in cp:
        vals = {}
        for key, value in cp["params"].items():
            if key not in _PARAM_KEYS:
                raise ConfigError(f"unknown key '{key}' in [params]")
            vals[key] = int(value) if key in ("k", "m") else float(value)
        params = ExponentParams(**{**dataclasses.asdict(params), **vals})

    generators = {}
    for sec in _GENERATOR_SECTIONS:
        if sec in cp:
            generators[sec] = parse_generator_section(cp[sec], J_default=max(J_sweep))

    extra = {}
    if "extra" in cp:
        for key, value in cp["extra"].items():
            if "," in value:
                extra[key] = [_coerce(v) for v in value.split(",") if v.strip()]
            else:
                extra[key] = _coerce(value)

    return ExperimentConfig(
        experiment=name,
        out_dir=Path(exp["out"]),
        J_sweep=J_sweep,
        seeds=seeds,
        params=params,
        generators=generators,
        extra=extra,
        source_text=path.read_text(),
    )
