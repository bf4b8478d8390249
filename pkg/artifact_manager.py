"""
Centralized artifact manager for holoweld runs
Handles output naming, file writing, in-process caching and ordered worker pools
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional

import pandas as pd

from field_io import write_field, write_field_csv, write_heatmap_pgm, write_raster_pgm
from fields import Field, RasterSet
from solver_config import PARALLELISM
from utils import RNG_NAME, run_timestamp, to_builtin

logger = logging.getLogger(__name__)


def map_ordered(fn: Callable, items: Iterable, max_workers: Optional[int] = None,
                label: str = 'task') -> List[Any]:
    """
    Apply fn to every item on a thread pool, returning results in input order

    Args:
        fn: Function of one item
        items: Work items
        max_workers: Worker cap (HOLOWELD_THREADS by default)
        label: Name used in error logs

    Returns:
        List of results, ordered like items
    """
    items = list(items)
    workers = min(max_workers or PARALLELISM['max_workers'], len(items))
    if workers <= 1:
        return [fn(item) for item in items]

    results = []
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(fn, item) for item in items]
        for index, future in enumerate(futures):
            try:
                results.append(future.result())
            except Exception as e:
                logger.error(f"Error in {label} {index}: {e}")
                raise
    return results


class ArtifactManager:
    """
    Output side of one CLI run
    - Names every file <command>-<seed>-<timestamp>[-suffix].<ext>
    - Writes JSON with sorted keys so reruns are byte-identical
    - Caches intermediate results by key
    - Runs per-item work on an ordered thread pool
    """

    def __init__(self, out_dir: Path, command: str, seed: int,
                 timestamp: Optional[str] = None, max_workers: Optional[int] = None):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.seed = seed
        self.timestamp = run_timestamp(timestamp)
        self.max_workers = max_workers or PARALLELISM['max_workers']
        self._cache: Dict[str, Any] = {}
        self.written: List[Path] = []

    @property
    def stem(self) -> str:
        return f"{self.command}-{self.seed}-{self.timestamp}"

    def path_for(self, ext: str, suffix: Optional[str] = None) -> Path:
        name = self.stem if not suffix else f"{self.stem}-{suffix}"
        return self.out_dir / f"{name}.{ext}"

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def run_header(self) -> Dict[str, Any]:
        """Provenance block embedded in every JSON report"""
        return {'command': self.command, 'seed': self.seed, 'rng': RNG_NAME}

    def write_json(self, data: Dict[str, Any], suffix: Optional[str] = None) -> Path:
        path = self.path_for('json', suffix)
        text = json.dumps(to_builtin(data), sort_keys=True, indent=2)
        path.write_text(text + '\n', encoding='utf-8')
        return self._record(path)

    def write_csv(self, df: pd.DataFrame, suffix: Optional[str] = None) -> Path:
        path = self.path_for('csv', suffix)
        df.to_csv(path, index=False)
        return self._record(path)

    def write_field(self, f: Field, suffix: Optional[str] = None, csv: bool = False) -> Path:
        path = self._record(write_field(self.path_for('bin', suffix), f))
        if csv:
            self._record(write_field_csv(self.path_for('csv', suffix), f))
        return path

    def write_raster(self, s: RasterSet, suffix: Optional[str] = None) -> Path:
        return self._record(write_raster_pgm(self.path_for('pgm', suffix), s))

    def write_heatmap(self, f: Field, suffix: Optional[str] = None) -> Path:
        return self._record(write_heatmap_pgm(self.path_for('pgm', suffix), f))

    def write_figure(self, fig, suffix: Optional[str] = None) -> Path:
        path = self.path_for('html', suffix)
        fig.write_html(str(path), include_plotlyjs='cdn')
        return self._record(path)

    def get_or_compute(self, key: str, compute_fn: Callable[[], Any], force: bool = False) -> Any:
        """
        Get a result from the cache or compute it

        Args:
            key: Unique key for this result
            compute_fn: Function producing the result
            force: Recompute even if cached

        Returns:
            Cached or freshly computed result
        """
        if not force and key in self._cache:
            logger.debug(f"Cache hit for {key}")
            return self._cache[key]

        logger.info(f"Computing {key}")
        result = compute_fn()
        self._cache[key] = result
        return result

    def map_ordered(self, fn: Callable, items: Iterable, label: str = 'task') -> List[Any]:
        return map_ordered(fn, items, self.max_workers, label)
