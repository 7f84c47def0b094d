"""
File-based cache of computed ground states.

Entries are keyed by an md5 hash of the problem (N, s, p, L, M, tol, dealias) and
stored as a binary field plus its sidecar, so a cached state is an ordinary
artifact that can be inspected or copied into a run directory.
"""

import hashlib
from pathlib import Path
from typing import Any, Dict, Optional, Union

from core.ground_state import GroundStateOptions, load_ground_state, save_ground_state
from core.models import GridSpec, GroundState
from utils.config import settings
from utils.exceptions import ArtifactIOError
from utils.logging import get_logger

logger = get_logger(__name__)


def ground_state_key(grid: GridSpec, s: float, p: float, tol: float, dealias: int = 1) -> str:
    """Canonical text of a ground-state problem.

    Args:
        grid: Grid of the solve
        s: Fractional order
        p: Exponent of the nonlinearity
        tol: Residual target
        dealias: Zero-padding factor of the pth power

    Returns:
        Key text; equal problems give equal text
    """
    return (f"N={grid.dimension};s={float(s)!r};p={float(p)!r};L={grid.half_width!r};"
            f"M={grid.points_per_axis};tol={float(tol)!r};dealias={int(dealias)}")


class CacheManager:
    """Directory of ground-state entries."""

    def __init__(self, cache_dir: Union[str, Path] = ".fracbump_cache"):
        """Initialize cache manager.

        Args:
            cache_dir: Directory holding the cached fields
        """
        self.cache_dir = Path(cache_dir)

    def _generate_cache_key(self, key: str) -> str:
        """Generate a cache key hash for consistent storage."""
        return hashlib.md5(key.encode()).hexdigest()

    def entry_path(self, key: str) -> Path:
        """Field path of the entry for ``key``, present or not."""
        return self._paths(self._generate_cache_key(key))[0]

    def _paths(self, cache_key: str):
        return self.cache_dir / f"{cache_key}.fld", self.cache_dir / f"{cache_key}.meta"

    def get(self, key: str, opts: Optional[GroundStateOptions] = None) -> Optional[GroundState]:
        """Cached ground state for ``key``, or None when absent or unreadable."""
        field_path, meta_path = self._paths(self._generate_cache_key(key))
        if not field_path.exists() or not meta_path.exists():
            return None
        try:
            return load_ground_state(field_path, meta_path, opts)
        except ArtifactIOError as exc:
            logger.warning("dropping unreadable cache entry", path=str(field_path), error=str(exc))
            self._remove(self._generate_cache_key(key))
            return None

    def set(self, key: str, state: GroundState) -> Path:
        """Store a ground state under ``key``; returns the field path."""
        field_path, _ = save_ground_state(state, self.cache_dir, self._generate_cache_key(key))
        return field_path

    def _remove(self, cache_key: str) -> None:
        """Remove one entry."""
        for path in self._paths(cache_key):
            if path.exists():
                path.unlink()

    def clear(self) -> None:
        """Remove every entry."""
        if not self.cache_dir.exists():
            return
        for path in self.cache_dir.glob("*.fld"):
            self._remove(path.stem)

    def get_cache_stats(self) -> Dict[str, Any]:
        """Get cache statistics."""
        entries = list(self.cache_dir.glob("*.fld")) if self.cache_dir.exists() else []
        complete = [path for path in entries if path.with_suffix(".meta").exists()]
        return {
            "cache_dir": str(self.cache_dir),
            "total_items": len(entries),
            "complete_items": len(complete),
            "total_bytes": sum(path.stat().st_size for path in entries),
        }


# Global cache manager instance
_cache_manager = None


def get_cache_manager(cache_dir: Union[str, Path, None] = None) -> CacheManager:
    """Get the cache manager, rebuilding it when a different directory is asked for."""
    global _cache_manager
    if cache_dir is not None and (_cache_manager is None or _cache_manager.cache_dir != Path(cache_dir)):
        _cache_manager = CacheManager(cache_dir)
    elif _cache_manager is None:
        _cache_manager = CacheManager(settings.cache_dir)
    return _cache_manager


def cache_ground_state(state: GroundState, tol: float, cache_dir: Union[str, Path, None] = None,
                       dealias: int = 1) -> Path:
    """Cache a computed ground state under its problem key; returns the field path."""
    key = ground_state_key(state.grid, state.s.value, state.p, tol, dealias)
    return get_cache_manager(cache_dir).set(key, state)


def get_cached_ground_state(grid: GridSpec, s: float, p: float, tol: float,
                            cache_dir: Union[str, Path, None] = None,
                            opts: Optional[GroundStateOptions] = None) -> Optional[GroundState]:
    """Retrieve a cached ground state, or None.

    The dealias factor of ``opts`` is part of the key.
    """
    dealias = opts.dealias if opts is not None else 1
    return get_cache_manager(cache_dir).get(ground_state_key(grid, s, p, tol, dealias), opts)


def cached_ground_state_path(grid: GridSpec, s: float, p: float, tol: float,
                             cache_dir: Union[str, Path, None] = None, dealias: int = 1) -> Path:
    """Field path of the cache entry of a problem."""
    return get_cache_manager(cache_dir).entry_path(ground_state_key(grid, s, p, tol, dealias))


def clear_cache(cache_dir: Union[str, Path, None] = None) -> None:
    """Clear all cached ground states."""
    get_cache_manager(cache_dir).clear()


def get_cache_info(cache_dir: Union[str, Path, None] = None) -> Dict[str, Any]:
    """Get cache information and statistics."""
    return get_cache_manager(cache_dir).get_cache_stats()
