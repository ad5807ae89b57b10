"""
Flat `key = value` run configuration.

Every key missing from the file falls back to PROTOTYPICAL_PARAMS, and the
fingerprint is taken over the resolved mapping, so two files describing the
same model hash identically.
"""

import re
import math
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

from backend.model_params import LatticeCoupling, ModelParams, MomentumProfile
from config.constants import HARD_CORE, PROFILE_FORMS, PROTOTYPICAL_PARAMS, U_VARIANTS
from utils.helpers import content_hash
from utils.validators import ConfigError

logger = logging.getLogger(__name__)

SCALAR_KEYS = ('epsilon_eV', 'h_b', 'U_eV', 'lattice_spacing_nm', 'u_nn_eV',
               'upsilon_peak_eV', 'upsilon_alpha')
COUPLING_KEYS = ('p1', 'p2', 'u', 'upsilon')
CHOICE_KEYS = ('u_variant', 'upsilon_profile')
KEY_ALIASES = {'U': 'U_eV'}
KNOWN_KEYS = frozenset(SCALAR_KEYS + COUPLING_KEYS + CHOICE_KEYS)

_LINE = re.compile(r'^(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<value>.*)$')


@dataclass(frozen=True)
class LoadedConfig:
    params: ModelParams
    raw: Dict[str, str]
    fingerprint: str
    source: Optional[str] = None


def parse_config_text(text: str) -> Dict[str, str]:
    """
    Parse `key = value` lines; `#` starts a comment

    Args:
        text: Configuration text

    Returns:
        Mapping of canonical key to whitespace-normalized value
    """
    mapping: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        match = _LINE.match(line)
        if match is None:
            raise ConfigError(f"line {number}: expected `key = value`, got {line!r}")
        key = KEY_ALIASES.get(match.group('key'), match.group('key'))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {number}: unknown key {match.group('key')!r}")
        if key in mapping:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        value = ' '.join(match.group('value').split())
        if not value:
            raise ConfigError(f"line {number}: empty value for {key!r}")
        mapping[key] = value
    return mapping


def _number(key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key} = {text!r} is not a number")
    if not math.isfinite(value):
        raise ConfigError(f"{key} = {text!r} is not finite")
    return value


def parse_repulsion(text: str) -> float:
    """A number in eV, or `hardcore` / `inf` for the U -> infinity limit"""
    if text.strip().lower() in ('hardcore', 'hard_core', 'inf', 'infinity'):
        return HARD_CORE
    return _number('U_eV', text)


def parse_coupling(key: str, text: str) -> LatticeCoupling:
    """
    Parse a coupling table: a preset or `x y value` triples separated by `;`

    Presets: `zero`, `delta v`, `one_range v`, `one_range_even v`, `shells r0 r1 r2`
    """
    words = text.split()
    preset = words[0].lower()
    arguments = words[1:]

    def values(count: int):
        if len(arguments) != count:
            raise ConfigError(f"{key}: preset {preset!r} takes {count} value(s), got {len(arguments)}")
        return [_number(key, word) for word in arguments]

    if preset == 'zero':
        values(0)
        return LatticeCoupling.zero()
    if preset == 'delta':
        return LatticeCoupling.delta(*values(1))
    if preset == 'one_range':
        return LatticeCoupling.one_range(*values(1), spacing=1)
    if preset == 'one_range_even':
        return LatticeCoupling.one_range(*values(1), spacing=2)
    if preset == 'shells':
        r0, r1, r2 = values(3)
        return LatticeCoupling.from_shells({(0, 0): r0, (1, 0): r1, (1, 1): r2})

    entries = {}
    for chunk in text.split(';'):
        parts = chunk.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ConfigError(f"{key}: expected `x y value` triples, got {chunk.strip()!r}")
        try:
            vector = (int(parts[0]), int(parts[1]))
        except ValueError:
            raise ConfigError(f"{key}: lattice vector {parts[0]} {parts[1]} is not integer")
        if vector in entries:
            raise ConfigError(f"{key}: lattice vector {vector} listed twice")
        entries[vector] = _number(key, parts[2])
    return LatticeCoupling(entries)


def resolve_mapping(user: Dict[str, str]) -> Dict[str, str]:
    """Fill defaults from PROTOTYPICAL_PARAMS and drop keys the choices make irrelevant"""
    resolved = {key: str(value) for key, value in PROTOTYPICAL_PARAMS.items()}
    if 'upsilon' in user:
        for key in ('upsilon_profile', 'upsilon_peak_eV', 'upsilon_alpha'):
            if key in user:
                raise ConfigError(f"`upsilon` table and `{key}` are mutually exclusive")
            resolved.pop(key, None)
    if 'u' in user:
        for key in ('u_variant', 'u_nn_eV'):
            if key in user:
                raise ConfigError(f"`u` table and `{key}` are mutually exclusive")
        resolved.pop('u_variant', None)
    resolved.update(user)

    variant = resolved.get('u_variant')
    if variant is not None and variant not in U_VARIANTS:
        raise ConfigError(f"u_variant must be one of {sorted(U_VARIANTS)}, got {variant!r}")
    if variant == 'nearest_neighbor':
        resolved.setdefault('u_nn_eV', str(U_VARIANTS['nearest_neighbor']['default_u_nn_eV']))
    elif 'u_nn_eV' in resolved:
        raise ConfigError("u_nn_eV requires u_variant = nearest_neighbor")
    if 'upsilon_profile' in resolved and resolved['upsilon_profile'] not in PROFILE_FORMS:
        raise ConfigError(f"upsilon_profile must be one of {sorted(PROFILE_FORMS)}")
    return dict(sorted(resolved.items()))


def build_params(resolved: Dict[str, str]) -> ModelParams:
    """ModelParams from a resolved mapping"""
    if 'u' in resolved:
        u = parse_coupling('u', resolved['u'])
        u_label = f"u = custom table ({resolved['u']})"
    elif resolved.get('u_variant') == 'nearest_neighbor':
        u_nn = _number('u_nn_eV', resolved['u_nn_eV'])
        u = LatticeCoupling.nearest_neighbor(u_nn)
        u_label = f"{U_VARIANTS['nearest_neighbor']['label']} ({u_nn:g} eV)"
    else:
        u = LatticeCoupling.zero()
        u_label = U_VARIANTS['none']['label']

    if 'upsilon' in resolved:
        upsilon = parse_coupling('upsilon', resolved['upsilon'])
    else:
        upsilon = MomentumProfile(
            peak=_number('upsilon_peak_eV', resolved['upsilon_peak_eV']),
            alpha=_number('upsilon_alpha', resolved['upsilon_alpha']),
            form=resolved['upsilon_profile'],
        )

    return ModelParams(
        epsilon=_number('epsilon_eV', resolved['epsilon_eV']),
        h_b=_number('h_b', resolved['h_b']),
        U=parse_repulsion(resolved['U_eV']),
        u=u,
        p1=parse_coupling('p1', resolved['p1']),
        p2=parse_coupling('p2', resolved['p2']),
        upsilon=upsilon,
        lattice_spacing_nm=_number('lattice_spacing_nm', resolved['lattice_spacing_nm']),
        u_label=u_label,
    )


def load_config_text(text: str, source: Optional[str] = None) -> LoadedConfig:
    resolved = resolve_mapping(parse_config_text(text))
    params = build_params(resolved)
    fingerprint = content_hash(resolved)
    logger.info(f"config source={source or '<defaults>'} fingerprint={fingerprint[:12]} u_label={params.u_label!r}")
    return LoadedConfig(params=params, raw=resolved, fingerprint=fingerprint, source=source)


def load_config(path: Optional[Union[str, Path]] = None) -> LoadedConfig:
    """
    Read a configuration file (prototypical defaults when path is None)

    Args:
        path: Path of the `key = value` file

    Returns:
        LoadedConfig with params, resolved mapping and fingerprint
    """
    if path is None:
        return load_config_text('')
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        logger.error(f"Cannot read config {path}: {str(e)}")
        raise ConfigError(f"cannot read {path}: {e.strerror}")
    return load_config_text(text, source=str(path))
