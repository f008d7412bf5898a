"""
Eigendata Cache
Skip repeated diagonalizations by keying results on a content hash of the matrix
"""

import json
import hashlib
import logging
from pathlib import Path
from typing import Dict, Optional
from datetime import datetime

import numpy as np
from scipy import sparse

from config import Config

logger = logging.getLogger(__name__)


class EigenCache:
    """Binary cache of eigenpairs keyed by matrix content"""

    def __init__(self, cache_dir: Optional[str] = None):
        self.cache_dir = Path(cache_dir or Config.CACHE_DIR)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

        # Load cache index
        self.index_file = self.cache_dir / "cache_index.json"
        self.index = self._load_index()

        self.stats = {"cache_hits": 0, "cache_misses": 0, "entries_cached": 0}

        logger.info(f"💾 Eigen cache initialized ({self.cache_dir}, {len(self.index)} entries)")

    def _load_index(self) -> Dict:
        """Load cache index from disk"""
        if self.index_file.exists():
            try:
                with open(self.index_file, "r", encoding="utf-8") as f:
                    return json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                logger.warning(f"⚠️  Unreadable cache index, starting fresh: {e}")
        return {}

    def _save_index(self):
        try:
            with open(self.index_file, "w", encoding="utf-8") as f:
                json.dump(self.index, f, indent=2)
        except OSError as e:
            logger.warning(f"⚠️  Failed to save cache index: {e}")

    @staticmethod
    def matrix_key(matrix, k: int, mode: str) -> str:
        """sha256 over the matrix content and the request"""
        h = hashlib.sha256()
        h.update(f"{matrix.shape}|{k}|{mode}|".encode())
        if sparse.issparse(matrix):
            m = matrix.tocsr()
            m.sort_indices()
            for arr in (m.indptr, m.indices, m.data):
                h.update(np.ascontiguousarray(arr).tobytes())
        else:
            h.update(np.ascontiguousarray(matrix).tobytes())
        return h.hexdigest()

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.npz"

    def get(self, key: str):
        """(values, vectors) if cached, else None"""
        path = self._cache_path(key)
        if key in self.index and path.exists():
            try:
                with np.load(path) as data:
                    values, vectors = data["values"], data["vectors"]
                self.stats["cache_hits"] += 1
                logger.debug(f"   ✓ Cache HIT: {key[:12]}")
                return values, vectors
            except (OSError, KeyError, ValueError) as e:
                logger.warning(f"   ⚠️  Cache read error: {e}")
        self.stats["cache_misses"] += 1
        return None

    def set(self, key: str, values: np.ndarray, vectors: np.ndarray, metadata: Optional[Dict] = None):
        path = self._cache_path(key)
        try:
            np.savez(path, values=values, vectors=vectors)
            self.index[key] = {
                "cached_at": datetime.now().isoformat(),
                "cache_file": path.name,
                "n_values": int(len(values)),
                "dimension": int(vectors.shape[0]),
                "metadata": metadata or {},
            }
            self._save_index()
            self.stats["entries_cached"] += 1
            logger.debug(f"   💾 Cached eigendata {key[:12]}")
        except OSError as e:
            logger.warning(f"   ⚠️  Failed to cache eigendata: {e}")

    def invalidate(self, key: str) -> bool:
        if key not in self.index:
            return False
        path = self._cache_path(key)
        if path.exists():
            path.unlink()
        del self.index[key]
        self._save_index()
        logger.info(f"   🗑️  Cache invalidated: {key[:12]}")
        return True

    def clear_all(self) -> int:
        count = 0
        for cache_file in self.cache_dir.glob("*.npz"):
            cache_file.unlink()
            count += 1
        self.index = {}
        self._save_index()
        logger.info(f"   🗑️  Cleared {count} cached entries")
        return count

    def get_stats(self) -> Dict:
        cache_size = sum(f.stat().st_size for f in self.cache_dir.glob("*.npz")) / (1024 * 1024)
        lookups = self.stats["cache_hits"] + self.stats["cache_misses"]
        hit_rate = self.stats["cache_hits"] / lookups * 100 if lookups else 0
        return {
            **self.stats,
            "cache_size_mb": round(cache_size, 2),
            "hit_rate": round(hit_rate, 1),
            "total_entries": len(self.index),
        }

    def print_stats(self):
        stats = self.get_stats()

        print(f"\n📊 Eigen Cache Statistics:")
        print(f"   Cache hits: {stats['cache_hits']}")
        print(f"   Cache misses: {stats['cache_misses']}")
        print(f"   Hit rate: {stats['hit_rate']}%")
        print(f"   Total entries: {stats['total_entries']}")
        print(f"   Cache size: {stats['cache_size_mb']} MB")
