import asyncio
import hashlib
import logging
import queue
import threading
import time
from typing import Any, AsyncGenerator, AsyncIterable, Dict, Generator, List, Optional, Sequence, Tuple

import jsonlines
import numpy as np
from tqdm.auto import tqdm

from .analysis import ShortcutStats, death_edge_lengths, longest_cycle_edge_lengths, shortcut_stats
from .complex import build_filtration
from .features import CORR_NAMES, FEATURE_NAMES, FeatureVector, corr_baseline_features, topo_features
from .netlab import perturb_pixelwise
from .persistence import compute_diagrams, extract_cycles
from .schema import ModelEntry, NetworkSpec, PerturbConfig
from .trace import Kernel, correlation_matrix, dissimilarity, record_activations

logger = logging.getLogger(__name__)


def record_features(record: Dict[str, Any], baseline: bool = False) -> FeatureVector:
    if baseline:
        return FeatureVector(values=record["baseline"], names=CORR_NAMES, model_label=record.get("label"))
    return FeatureVector(values=record["features"], names=FEATURE_NAMES, model_label=record.get("label"))


def model_perturb_config(pcfg: PerturbConfig, index: int) -> PerturbConfig:
    """Model ``index`` of a zoo draws its perturbations from seed ``pcfg.seed + index``."""
    return pcfg.with_seed(pcfg.seed + index)


def scan_settings(clean_samples: np.ndarray, pcfg: PerturbConfig, kernel: Kernel, cutoff: float) -> Dict[str, Any]:
    """Everything besides the network and the per-model seed that a scan record depends on."""
    samples = np.ascontiguousarray(clean_samples, dtype=np.float64)
    return {
        "kernel": Kernel(kernel).value,
        "cutoff": float(cutoff),
        "trials": pcfg.trials_per_image,
        "patch_size": pcfg.patch_size,
        "ranges": [[lo.tolist(), hi.tolist()] for lo, hi in pcfg.ranges],
        "samples": hashlib.sha256(repr(samples.shape).encode() + samples.tobytes()).hexdigest(),
    }


def shortcut_lengths(net: NetworkSpec, X: np.ndarray, kernel: Kernel, cutoff: float, top_k: int) -> Tuple[List[int], List[int]]:
    """(death edge lengths, longest cycle edge lengths) of one network probed with inputs ``X``."""
    M = correlation_matrix(record_activations(net, X), kernel)
    F = build_filtration(dissimilarity(M), cutoff)
    dg0, _ = compute_diagrams(F)
    return death_edge_lengths(F, dg0, top_k), longest_cycle_edge_lengths(extract_cycles(F, top_k=top_k), top_k)


def population_shortcuts(
    models: Sequence[ModelEntry],
    clean_samples,
    pcfg: PerturbConfig,
    kernel: Kernel = Kernel.PEARSON,
    cutoff: float = 2.0,
    top_k: int = 500,
    enable_progress: bool = True,
) -> Dict[int, ShortcutStats]:
    """Pooled edge lengths per label, each model perturbed as in ModelScanner."""
    clean = np.atleast_2d(np.asarray(clean_samples, dtype=np.float64))
    deaths: Dict[int, List[List[int]]] = {}
    longest: Dict[int, List[List[int]]] = {}
    for index, entry in enumerate(tqdm(models, desc="Shortcuts", unit="model", disable=not enable_progress)):
        if entry.label is None:
            continue
        X = perturb_pixelwise(clean, model_perturb_config(pcfg, index))
        d, c = shortcut_lengths(entry.network, X, kernel, cutoff, top_k)
        deaths.setdefault(entry.label, []).append(d)
        longest.setdefault(entry.label, []).append(c)
    return {label: shortcut_stats(deaths[label], longest[label]) for label in sorted(deaths)}


class ModelScanner:
    """Runs perturb -> trace -> correlation -> filtration -> diagrams -> features per model.

    Every model yields a record dict with ``success`` and ``errors``; a failing stage
    never raises out of a worker. Records are appended to ``output_file`` as they
    complete. A rerun reuses a stored record only when it was scanned with the same
    settings and perturbation seed and holds every field this scanner produces.
    """

    def __init__(
        self,
        clean_samples,
        perturb_config: PerturbConfig,
        kernel: Kernel = Kernel.PEARSON,
        cutoff: float = 2.0,
        max_parallel_models: int = 1,
        output_file: Optional[str] = None,
        overwrite: bool = False,
        enable_file_output: bool = True,
        enable_progress: bool = True,
        include_baseline: bool = False,
        include_diagrams: bool = False,
    ):
        self.clean_samples = np.atleast_2d(np.asarray(clean_samples, dtype=np.float64))
        self.perturb_config = perturb_config
        self.kernel = Kernel(kernel)
        self.cutoff = cutoff
        self.max_parallel_models = max(1, int(max_parallel_models))
        self.semaphore = asyncio.Semaphore(self.max_parallel_models)
        self.output_file = output_file
        self.enable_file_output = enable_file_output
        self.enable_progress = enable_progress
        self.include_baseline = include_baseline
        self.include_diagrams = include_diagrams
        self.settings = scan_settings(self.clean_samples, perturb_config, self.kernel, cutoff)
        self.completed: Dict[str, Dict[str, Any]] = {}

        if self.output_file and self.enable_file_output:
            if overwrite:
                with open(self.output_file, "w"):
                    pass
            else:
                self._load_completed()

    def _load_completed(self) -> None:
        stale = 0
        try:
            with jsonlines.open(self.output_file) as reader:
                for obj in reader:
                    if not (obj.get("success") and "id" in obj):
                        continue
                    if obj.get("settings") == self.settings:
                        self.completed[obj["id"]] = obj
                    else:
                        stale += 1
        except FileNotFoundError:
            pass
        if stale:
            logger.info("ignoring %d records in %s scanned with other settings", stale, self.output_file)
        if self.completed:
            logger.info("resuming: %d models already scanned in %s", len(self.completed), self.output_file)

    def reusable_record(self, index: int, entry: ModelEntry) -> Optional[Dict[str, Any]]:
        record = self.completed.get(entry.model_id)
        if record is None:
            return None
        if record.get("perturb_seed") != model_perturb_config(self.perturb_config, index).seed:
            return None
        required = ["features"]
        if self.include_baseline:
            required.append("baseline")
        if self.include_diagrams:
            required.append("diagrams")
        if any(key not in record for key in required):
            return None
        return {**record, "index": index, "label": entry.label}

    def scan_model_sync(self, index: int, entry: ModelEntry) -> Dict[str, Any]:
        start = time.perf_counter()
        errors: List[str] = []
        pcfg = model_perturb_config(self.perturb_config, index)
        output: Dict[str, Any] = {
            "id": entry.model_id,
            "index": index,
            "label": entry.label,
            "settings": self.settings,
            "perturb_seed": pcfg.seed,
        }
        stage = "perturb"
        try:
            X = perturb_pixelwise(self.clean_samples, pcfg)
            stage = "trace"
            trace = record_activations(entry.network, X)
            stage = "correlation"
            M = correlation_matrix(trace, self.kernel)
            stage = "filtration"
            F = build_filtration(dissimilarity(M), self.cutoff)
            stage = "diagrams"
            dg0, dg1 = compute_diagrams(F)
            stage = "features"
            output["features"] = topo_features(dg0, dg1).values.tolist()
            if self.include_baseline:
                stage = "baseline"
                output["baseline"] = corr_baseline_features(M).values.tolist()
            if self.include_diagrams:
                output["diagrams"] = [[d.dim, d.birth, d.death] for d in (dg0 + dg1).finite()]
            output["neurons"] = int(M.size)
        except Exception as exc:
            errors.append(f"{stage}: {type(exc).__name__}: {exc}")
            logger.warning("model %d (%s) failed at %s: %s", index, entry.model_id, stage, exc)

        output["errors"] = errors
        output["success"] = not errors
        output["latency"] = time.perf_counter() - start
        return output

    async def scan_model(self, index: int, entry: ModelEntry) -> Dict[str, Any]:
        async with self.semaphore:
            output = await asyncio.to_thread(self.scan_model_sync, index, entry)
            if self.output_file and self.enable_file_output:
                with jsonlines.open(self.output_file, mode="a") as writer:
                    writer.write(output)
            return output

    async def scan_batch(
        self,
        entries: AsyncIterable[Tuple[int, ModelEntry]],
        total: Optional[int] = None,
    ) -> AsyncGenerator[Dict[str, Any], None]:
        """Yield records in completion order; previously completed ids come straight from the file."""
        window = 2 * self.max_parallel_models
        in_flight = set()
        pbar = tqdm(total=total, desc="Scanning models", unit="model", disable=not self.enable_progress)
        try:
            async for index, entry in entries:
                cached = self.reusable_record(index, entry)
                if cached is not None:
                    pbar.update(1)
                    yield cached
                    continue
                in_flight.add(asyncio.create_task(self.scan_model(index, entry)))
                while len(in_flight) >= window:
                    finished, in_flight = await asyncio.wait(in_flight, return_when=asyncio.FIRST_COMPLETED)
                    for task in finished:
                        pbar.update(1)
                        yield task.result()
            for next_done in asyncio.as_completed(in_flight):
                record = await next_done
                pbar.update(1)
                yield record
        finally:
            pbar.close()

    def scan_batch_sync(self, entries: Sequence[ModelEntry]) -> Generator[Dict[str, Any], None, None]:
        """Synchronous wrapper for scan_batch, usable where an event loop is already running."""
        entries = list(entries)
        outbox: "queue.Queue[Tuple[str, Any]]" = queue.Queue()

        async def numbered() -> AsyncGenerator[Tuple[int, ModelEntry], None]:
            for item in enumerate(entries):
                yield item

        async def pump() -> None:
            # the semaphore must belong to the loop of this thread
            self.semaphore = asyncio.Semaphore(self.max_parallel_models)
            try:
                async for record in self.scan_batch(numbered(), total=len(entries)):
                    outbox.put(("record", record))
            except Exception as exc:
                outbox.put(("error", exc))
            finally:
                outbox.put(("done", None))

        worker = threading.Thread(target=asyncio.run, args=(pump(),), daemon=True)
        worker.start()
        while True:
            kind, payload = outbox.get()
            if kind == "done":
                break
            if kind == "error":
                raise payload
            yield payload
        worker.join()

    def scan_all(self, entries: Sequence[ModelEntry]) -> List[Dict[str, Any]]:
        """Scan every entry and return the records ordered by model index."""
        records = list(self.scan_batch_sync(entries))
        records.sort(key=lambda r: r["index"])
        return records
