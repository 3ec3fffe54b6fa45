import hashlib
import json
import os
from typing import Any, Dict, Optional

from filelock import FileLock, Timeout
from loguru import logger

from src.config import LOCK_TIMEOUT, config
from src.graph import ChainGraph, build_chain_graph
from src.models import IntegratorConfig, SystemSpec
from src.space import Grid


class GraphCache:
    """On-disk store of serialized ChainGraphs, addressed by a hash of their build inputs."""

    def __init__(self, cache_dir: Optional[str] = None, enabled: Optional[bool] = None):
        self.cache_dir = cache_dir or config.SCR_CACHE_DIR
        self.enabled = config.SCR_CACHE_ENABLED if enabled is None else enabled
        self.lock = FileLock(os.path.join(self.cache_dir, "graphs.lock"), timeout=LOCK_TIMEOUT)

    def calculate_key(self, sys: SystemSpec, n: int, T: float, c_max: float, cfg: IntegratorConfig) -> str:
        """
        SHA-256 of the canonical JSON of the build inputs.
        Scope: system, n, T, c_max, integrator.
        """
        payload: Dict[str, Any] = {
            "system": sys.model_dump(mode="json"),
            "n": n,
            "T": T,
            "c_max": c_max,
            "integrator": cfg.model_dump(mode="json"),
        }
        json_str = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(json_str.encode("utf-8")).hexdigest()

    def path_for(self, key: str) -> str:
        return os.path.join(self.cache_dir, f"{key}.json")

    def load(self, key: str) -> Optional[ChainGraph]:
        path = self.path_for(key)
        try:
            with self.lock:
                if not os.path.exists(path):
                    return None
                try:
                    with open(path, "r", encoding="utf-8") as f:
                        return ChainGraph.from_json(f.read())
                except (json.JSONDecodeError, KeyError, ValueError) as e:
                    logger.error(f"Discarding unreadable cache entry {path}: {e}")
                    os.remove(path)
                    return None
        except Timeout:
            logger.error(f"Timeout acquiring lock for {self.cache_dir}")
            raise RuntimeError("Graph cache busy (lock timeout)")

    def store(self, key: str, G: ChainGraph):
        path = self.path_for(key)
        tmp = f"{path}.tmp"
        try:
            with self.lock:
                with open(tmp, "w", encoding="utf-8") as f:
                    f.write(G.to_json())
                os.replace(tmp, path)
                logger.debug(f"Stored graph {key[:12]} in {self.cache_dir}")
        except Timeout:
            logger.error(f"Timeout acquiring lock for {self.cache_dir}")
            raise RuntimeError("Graph cache busy (lock timeout)")
        except IOError as e:
            logger.error(f"Failed to write cache entry {path}: {e}")
            raise RuntimeError(f"Graph cache error: {e}")

    def get_or_build(self, grid: Grid, sys: SystemSpec, T: float, c_max: Optional[float] = None,
                     cfg: Optional[IntegratorConfig] = None) -> ChainGraph:
        cfg = cfg or IntegratorConfig()
        c_max = 3 * grid.h if c_max is None else c_max
        if not self.enabled:
            return build_chain_graph(grid, sys, T, c_max, cfg)
        os.makedirs(self.cache_dir, exist_ok=True)
        key = self.calculate_key(sys, grid.n, T, c_max, cfg)
        G = self.load(key)
        if G is not None:
            logger.info(f"Graph cache hit {key[:12]} for {sys.system_id} n={grid.n} T={T}")
            # keep the caller's grid object so cell sets stay comparable
            G.grid = grid
            return G
        G = build_chain_graph(grid, sys, T, c_max, cfg)
        self.store(key, G)
        return G
