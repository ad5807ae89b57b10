"""
Run manifests, the content-addressed fiber cache and result writers
"""

import io
import os
import json
import logging
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from backend.spectral_solver import PairState
from backend.torus_grid import LatticeMap
from config.constants import FILE_FORMATS, TOOL_VERSION
from utils.helpers import canonical_json, content_hash, format_repulsion, generate_timestamp
from utils.validators import ParameterValidationError

logger = logging.getLogger(__name__)


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over the target"""
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix='.tmp')
    try:
        with os.fdopen(handle, 'wb') as stream:
            stream.write(payload)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise


def write_json(path: Union[str, Path], payload: Dict) -> Path:
    path = Path(path)
    _atomic_write_bytes(path, canonical_json(payload).encode('utf-8'))
    return path


def write_frame(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    path = Path(path)
    text = frame.to_csv(index=False, float_format=FILE_FORMATS['float_format'])
    _atomic_write_bytes(path, text.encode('utf-8'))
    return path


def write_density_csv(path: Union[str, Path], density: LatticeMap) -> Path:
    """`x y density` columns"""
    frame = density.to_frame('density')[FILE_FORMATS['density_columns']]
    return write_frame(path, frame)


@dataclass
class RunManifest:
    """One manifest per output set; every output path is listed here"""

    command: str
    config_hash: str
    grid_N: int
    U: float
    u_label: str
    tool_version: str = TOOL_VERSION
    started_at: str = field(default_factory=generate_timestamp)
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    extra: Dict = field(default_factory=dict)

    def add_output(self, path: Union[str, Path]) -> None:
        self.outputs.append(str(path))

    def to_dict(self) -> Dict:
        return {
            'command': self.command,
            'config_hash': self.config_hash,
            'tool_version': self.tool_version,
            'grid_N': self.grid_N,
            'U_eV': format_repulsion(self.U),
            'u_label': self.u_label,
            'started_at': self.started_at,
            'finished_at': self.finished_at,
            'outputs': sorted(self.outputs),
            'extra': self.extra,
        }

    def write(self, out_dir: Union[str, Path]) -> Path:
        self.finished_at = generate_timestamp()
        return write_json(Path(out_dir) / FILE_FORMATS['manifest_name'], self.to_dict())


class FiberCache:
    """Content-addressed store of PairStates keyed by (config hash, k, U, N)"""

    def __init__(self, root: Union[str, Path], config_hash: str, N: int):
        self.logger = logging.getLogger(__name__)
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.N = N
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()
        self._index_path = self.root / FILE_FORMATS['cache_index']
        self._index: Dict[str, Dict] = {}
        if self._index_path.exists():
            try:
                self._index = json.loads(self._index_path.read_text())
            except json.JSONDecodeError as e:
                self.logger.error(f"Cache index unreadable, starting empty: {str(e)}")

    def key(self, k, U: float) -> str:
        return content_hash(self.config_hash, [float(k[0]), float(k[1])], format_repulsion(U), self.N)

    def load_state(self, k, U: float) -> Optional[PairState]:
        key = self.key(k, U)
        path = self.root / f"{key}.npz"
        with self._lock:
            known = key in self._index
        if not known or not path.exists():
            with self._lock:
                self.misses += 1
            self.logger.debug(f"cache miss k={k} U={format_repulsion(U)}")
            return None
        with np.load(path, allow_pickle=False) as data:
            if str(data['format']) != FILE_FORMATS['pair_state_format']:
                raise ParameterValidationError(f"{path} is not a pair-state container")
            scalars = data['scalars']
            state = PairState(
                k=(float(data['k'][0]), float(data['k'][1])),
                U=float(data['U']),
                E=float(scalars[0]), gap=float(scalars[1]), pair_fraction_rho=float(scalars[2]),
                z_k=float(scalars[3]), b_k=float(scalars[4]), upsilon_hat_k=float(scalars[5]),
                phi_residual=float(scalars[6]), iterations=int(data['iterations']),
                psi_hat=np.array(data['psi_hat']),
            )
        with self._lock:
            self.hits += 1
        self.logger.debug(f"cache hit k={k} U={format_repulsion(U)}")
        return state

    def store_state(self, state: PairState) -> Path:
        key = self.key(state.k, state.U)
        path = self.root / f"{key}.npz"
        buffer = io.BytesIO()
        np.savez(
            buffer,
            format=np.array(FILE_FORMATS['pair_state_format']),
            format_version=np.array(FILE_FORMATS['format_version']),
            k=np.array(state.k, dtype=float),
            U=np.array(state.U, dtype=float),
            scalars=np.array([state.E, state.gap, state.pair_fraction_rho, state.z_k,
                              state.b_k, state.upsilon_hat_k, state.phi_residual], dtype=float),
            iterations=np.array(state.iterations),
            psi_hat=state.psi_hat,
        )
        _atomic_write_bytes(path, buffer.getvalue())
        with self._lock:
            self._index[key] = {'k': list(state.k), 'U': format_repulsion(state.U), 'N': self.N,
                                'config_hash': self.config_hash}
            _atomic_write_bytes(self._index_path, canonical_json(self._index).encode('utf-8'))
        return path

    def stats(self) -> Dict[str, float]:
        total = self.hits + self.misses
        return {
            'hits': self.hits,
            'misses': self.misses,
            'hit_rate_percent': 100.0 * self.hits / total if total else 0.0,
        }


def write_propagators(path: Union[str, Path], records: List) -> Path:
    """One `.npz` container holding V for every method of a scatter run"""
    path = Path(path)
    buffer = io.BytesIO()
    arrays = {
        'format': np.array(FILE_FORMATS['propagator_format']),
        'format_version': np.array(FILE_FORMATS['format_version']),
        'methods': np.array([record.method for record in records]),
    }
    for index, record in enumerate(records):
        arrays[f'V_{index}'] = record.V
    if records:
        arrays['k'] = np.array(records[0].k, dtype=float)
        arrays['times'] = np.array([records[0].s, records[0].t], dtype=float)
    np.savez(buffer, **arrays)
    _atomic_write_bytes(path, buffer.getvalue())
    return path
