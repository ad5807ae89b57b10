import re
import json
import math
import hashlib
import logging
from typing import Any, Dict, Tuple, Union
from datetime import datetime, timezone

import numpy as np

from config.constants import PHYSICAL_CONSTANTS

# Configure logging
logger = logging.getLogger(__name__)

_PI_TERM = re.compile(
    r'^\s*(?P<sign>[+-]?)\s*(?P<coef>\d*\.?\d*(?:[eE][+-]?\d+)?)?\s*\*?\s*pi\s*'
    r'(?:/\s*(?P<den>\d+(?:\.\d*)?))?\s*$'
)


def wrap_torus(q: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Wrap angles into the left-closed interval [-pi, pi)"""
    wrapped = np.mod(np.asarray(q, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def rotate_point(k: Tuple[float, float]) -> Tuple[float, float]:
    """Quarter turn R(k1, k2) = (k2, -k1), wrapped onto the torus"""
    return (wrap_torus(k[1]), wrap_torus(-k[0]))


def parse_angle(token: str) -> float:
    """
    Parse one angle such as "0", "-pi", "pi/2", "0.5*pi" or "1.25"

    Args:
        token: Angle expression

    Returns:
        Angle in radians
    """
    text = token.strip().lower()
    if 'pi' not in text:
        return float(text)

    match = _PI_TERM.match(text)
    if match is None:
        raise ValueError(f"Cannot parse angle {token!r}")

    coef = match.group('coef')
    value = float(coef) if coef else 1.0
    if match.group('den'):
        value /= float(match.group('den'))
    if match.group('sign') == '-':
        value = -value
    return value * math.pi


def parse_torus_point(text: str) -> Tuple[float, float]:
    """Parse a torus point written as "k1,k2" (e.g. "-pi,0")"""
    parts = [part for part in text.split(',')]
    if len(parts) != 2:
        raise ValueError(f"Torus point must have two components, got {text!r}")
    return (parse_angle(parts[0]), parse_angle(parts[1]))


def format_energy(energy_eV: float, include_kelvin: bool = True) -> str:
    """
    Format an energy in eV, optionally with its temperature equivalent

    Args:
        energy_eV: Energy in eV
        include_kelvin: Append the value in kelvin

    Returns:
        Formatted energy string
    """
    if not math.isfinite(energy_eV):
        return str(energy_eV)
    text = f"{energy_eV:.6g} eV"
    if include_kelvin:
        text += f" ({energy_eV / PHYSICAL_CONSTANTS['kB_eV_per_K']:.1f} K)"
    return text


def format_repulsion(U: float) -> str:
    """Human readable on-site repulsion"""
    return 'hardcore' if U == math.inf else f"{U:.17g}"


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values"""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    return value


def canonical_json(payload: Dict) -> str:
    """Deterministic JSON text (sorted keys, round-trip floats)"""
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n"


def content_hash(*parts: Any) -> str:
    """SHA-256 over the canonical JSON of the given parts"""
    text = json.dumps(to_jsonable(list(parts)), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def generate_timestamp() -> str:
    """UTC timestamp in ISO 8601 format"""
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def relative_error(value: np.ndarray, reference: np.ndarray, floor: float = 0.0) -> float:
    """Norm-wise relative error max(|value - reference|) / max(|reference|, floor)"""
    value = np.asarray(value)
    reference = np.asarray(reference)
    scale = max(float(np.max(np.abs(reference))) if reference.size else 0.0, floor)
    diff = float(np.max(np.abs(value - reference))) if reference.size else 0.0
    if scale == 0.0:
        return diff
    return diff / scale
