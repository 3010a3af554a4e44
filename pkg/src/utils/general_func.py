"""
General helper functions shared by the pipeline stages.

Functions
---------
sha256_file(path)
    Hex SHA-256 digest of a file.
sha256_text(text)
    Hex SHA-256 digest of a string.
write_json(path, data)
    Write JSON deterministically (fixed indent, trailing newline).
read_json(path)
    Read a JSON artifact, raising ArtifactError with the path on failure.
ensure_dir(path)
    Create a directory (and parents) if needed.
resolve_threads(requested=None)
    Worker count from the flag, EFSHAP_THREADS or the configured default.
chunk_bounds(n, n_chunks)
    Contiguous index ranges covering 0..n-1.
parallel_map(func, items, threads)
    Ordered map over items with a joblib thread pool.
"""

import hashlib
import json
import os
from typing import Any, Callable, List, Optional, Sequence, Tuple

import psutil
from dotenv import load_dotenv
from joblib import Parallel, delayed

from src.utils.config import Config
from src.utils.errors import ArtifactError, ConfigError


def sha256_file(path: str) -> str:
    """
    Compute the SHA-256 digest of a file.

    Parameters
    ----------
    path : str
        File to hash.

    Returns
    -------
    str
        Lower-case hex digest.
    """
    digest = hashlib.sha256()
    try:
        with open(path, 'rb') as f:
            for block in iter(lambda: f.read(1 << 20), b''):
                digest.update(block)
    except OSError as e:
        raise ArtifactError(f"{path}: cannot read for checksum ({e.strerror or e})") from e
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    """Hex SHA-256 digest of a UTF-8 string."""
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def write_json(path: str, data: Any) -> str:
    """
    Write an object as JSON with a stable layout.

    Parameters
    ----------
    path : str
        Destination file.
    data : Any
        JSON-serialisable object.

    Returns
    -------
    str
        The path written.
    """
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(data, f, indent=2, allow_nan=False)
            f.write('\n')
    except OSError as e:
        raise ArtifactError(f"{path}: cannot write ({e.strerror or e})") from e
    return path


def read_json(path: str) -> Any:
    """Read a JSON artifact."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise ArtifactError(f"{path}: cannot read ({e.strerror or e})") from e
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path}: invalid JSON at line {e.lineno}") from e


def ensure_dir(path: str) -> str:
    """Create a directory if it does not exist and return it."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise ArtifactError(f"{path}: cannot create directory ({e.strerror or e})") from e
    return path


def resolve_threads(requested: Optional[int] = None) -> int:
    """
    Decide how many worker threads a stage may use.

    The explicit request wins, then the ``EFSHAP_THREADS`` environment variable
    (a ``.env`` file is loaded first), then ``runtime.threads`` from the defaults.
    Zero means every logical CPU.

    Parameters
    ----------
    requested : int, optional
        Value of the ``--threads`` flag.

    Returns
    -------
    int
        A positive thread count.
    """
    if requested is None:
        load_dotenv()
        env_value = os.environ.get('EFSHAP_THREADS')
        if env_value not in (None, ''):
            try:
                requested = int(env_value)
            except ValueError:
                raise ConfigError(f"EFSHAP_THREADS: expected an integer, got {env_value!r}")
        else:
            requested = Config().get_default_threads()
    if requested < 0:
        raise ConfigError(f"threads: must be >= 0, got {requested}")
    if requested == 0:
        requested = psutil.cpu_count(logical=True) or 1
    return requested


def chunk_bounds(n: int, n_chunks: int) -> List[Tuple[int, int]]:
    """
    Split ``range(n)`` into at most ``n_chunks`` contiguous, non-empty ranges.

    Returns
    -------
    list of (start, stop)
    """
    n_chunks = max(1, min(n_chunks, n))
    if n == 0:
        return []
    edges = [n * k // n_chunks for k in range(n_chunks + 1)]
    return [(edges[k], edges[k + 1]) for k in range(n_chunks) if edges[k + 1] > edges[k]]


def parallel_map(func: Callable[[Any], Any], items: Sequence[Any], threads: int = 1) -> List[Any]:
    """
    Apply ``func`` to every item, preserving input order.

    Parameters
    ----------
    func : callable
        Pure function of one item.
    items : sequence
        Work items.
    threads : int
        Worker threads; 1 runs inline.

    Returns
    -------
    list
        ``[func(item) for item in items]``.
    """
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=threads, prefer="threads")(delayed(func)(item) for item in items)
