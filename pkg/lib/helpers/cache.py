"""Binary eigenbasis cache.

Layout (little-endian):
    16s   format tag  b"SPECLAB-EIGBASIS"
    uint32 version
    32s   sha256 of the grid
    32s   sha256 of the potential
    float64 cutoff (lambda_max, or the mode count)
    uint8 request kind (0 = lambda_max, 1 = count)
    uint64 n_points
    uint64 n_modes
    float64[n_modes] eigenvalues
    float64[n_modes] residuals
    float64[n_points, n_modes] eigenvectors, C order
"""
import os
import struct
import tempfile
import threading
from pathlib import Path
from typing import Optional

import numpy as np

from lib.helpers.constants import CACHE_FORMAT, CACHE_VERSION
from lib.helpers.exceptions import CacheError
from lib.helpers.logs import LOGGER

HEADER = struct.Struct("<16sI32s32sdBQQ")
REQUEST_KINDS = {'lambda_max': 0, 'count': 1}


class EigenCache(object):
    """Directory of eigenbasis files keyed by grid hash, potential hash and request."""

    _write_lock = threading.Lock()

    def __init__(self, directory):
        self.directory = Path(directory)
        self.hits = 0
        self.misses = 0

    def path_for(self, grid_digest: str, potential_digest: str, kind: str, cutoff: float) -> Path:
        return self.directory / f"{grid_digest[:16]}-{potential_digest[:16]}-{kind}-{float(cutoff)!r}.eig"

    def store(self, grid_digest: str, potential_digest: str, kind: str, cutoff: float,
              eigenvalues: np.ndarray, residuals: np.ndarray, eigenvectors: np.ndarray) -> Path:
        """Atomically write one eigenbasis (temp file in the same directory, then os.replace).

        Returns:
            Path: The cache file.

        """

        eigenvectors = np.ascontiguousarray(eigenvectors, dtype='<f8')
        n_points, n_modes = eigenvectors.shape
        header = HEADER.pack(CACHE_FORMAT, CACHE_VERSION, bytes.fromhex(grid_digest), bytes.fromhex(potential_digest),
                             float(cutoff), REQUEST_KINDS[kind], n_points, n_modes)
        path = self.path_for(grid_digest, potential_digest, kind, cutoff)

        with self._write_lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            handle, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(handle, 'wb') as stream:
                    stream.write(header)
                    stream.write(np.ascontiguousarray(eigenvalues, dtype='<f8').tobytes())
                    stream.write(np.ascontiguousarray(residuals, dtype='<f8').tobytes())
                    stream.write(eigenvectors.tobytes())
                os.replace(tmp, path)
            except OSError:
                if os.path.exists(tmp):
                    os.remove(tmp)
                raise

        LOGGER.debug(f"eigenbasis cached at {path} ({n_modes} modes)")
        return path

    def load(self, grid_digest: str, potential_digest: str, kind: str, cutoff: float) -> Optional[tuple]:
        """Return (eigenvalues, residuals, eigenvectors) or None when no file exists.

        Raises:
            CacheError: The file exists but its header does not match the request.

        """

        path = self.path_for(grid_digest, potential_digest, kind, cutoff)
        if not path.is_file():
            self.misses += 1
            return None

        raw = path.read_bytes()
        if len(raw) < HEADER.size:
            raise CacheError(f"cache file {path} is truncated")
        tag, version, grid_hash, potential_hash, stored_cutoff, stored_kind, n_points, n_modes = \
            HEADER.unpack_from(raw)

        if tag != CACHE_FORMAT or version != CACHE_VERSION:
            raise CacheError(f"cache file {path} has format {tag!r} version {version}")
        if grid_hash.hex() != grid_digest or potential_hash.hex() != potential_digest:
            raise CacheError(f"cache file {path} was written for a different grid or potential")
        if stored_cutoff != float(cutoff) or stored_kind != REQUEST_KINDS[kind]:
            raise CacheError(f"cache file {path} holds cutoff {stored_cutoff}, requested {cutoff}")

        expected = HEADER.size + 8 * (2 * n_modes + n_points * n_modes)
        if len(raw) != expected:
            raise CacheError(f"cache file {path} has {len(raw)} bytes, expected {expected}")

        offset = HEADER.size
        eigenvalues = np.frombuffer(raw, dtype='<f8', count=n_modes, offset=offset).astype(float)
        offset += 8 * n_modes
        residuals = np.frombuffer(raw, dtype='<f8', count=n_modes, offset=offset).astype(float)
        offset += 8 * n_modes
        eigenvectors = np.frombuffer(raw, dtype='<f8', count=n_points * n_modes, offset=offset)
        eigenvectors = eigenvectors.astype(float).reshape(n_points, n_modes)

        self.hits += 1
        LOGGER.debug(f"eigenbasis loaded from {path} ({n_modes} modes)")
        return eigenvalues, residuals, eigenvectors
