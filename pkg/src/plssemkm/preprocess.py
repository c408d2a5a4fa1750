"""CSV ingestion, item rescaling and mean imputation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model_spec import PathModelSpec

logger = logging.getLogger(__name__)

MISSING_TOKENS = ("", "NA")


@dataclass
class Dataset:
    values: np.ndarray  # n x J, NaN marks a missing cell
    column_names: tuple[str, ...]
    source: str = ""
    log: list[str] = field(default_factory=list)

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.column_names)
            for row in self.values:
                w.writerow(["NA" if math.isnan(v) else format(float(v), ".17g") for v in row])


def ingest_csv(path, spec: PathModelSpec | None = None, missing=MISSING_TOKENS) -> Dataset:
    """Parse a comma-separated file with a header row.

    With a spec, columns are projected onto its MV names in spec order; extra
    columns are dropped with a warning and absent ones are an error.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        seen = set()
        for h in header:
            if h in seen:
                raise ValueError(f"{path}: duplicate column {h!r}")
            seen.add(h)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            parsed = []
            for name, cell in zip(header, row):
                cell = cell.strip()
                if cell in missing:
                    parsed.append(math.nan)
                    continue
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {name!r}") from None
            rows.append(parsed)
    values = np.array(rows, dtype=float).reshape(len(rows), len(header))
    names = tuple(header)
    log = []
    if spec is not None:
        absent = [m for m in spec.mv_names if m not in seen]
        if absent:
            raise ValueError(f"{path}: missing column(s) {', '.join(absent)}")
        extra = [h for h in header if h not in set(spec.mv_names)]
        if extra:
            logger.warning("ignoring unused column(s): %s", ", ".join(extra))
            log.append(f"dropped unused columns: {', '.join(extra)}")
        idx = [header.index(m) for m in spec.mv_names]
        values, names = values[:, idx], tuple(spec.mv_names)
    missing_count = int(np.isnan(values).sum())
    if missing_count:
        log.append(f"{missing_count} missing cell(s)")
    return Dataset(values, names, str(path), log)


def rescale_ecsi(v):
    """Map a 1..10 rating onto 0..100 via ``100/9 (v - 1)``; NaN passes through."""
    arr = np.asarray(v, dtype=float)
    observed = arr[~np.isnan(arr)]
    if observed.size and (observed.min() < 1 or observed.max() > 10):
        raise ValueError("ratings must lie in [1, 10]")
    out = 100.0 / 9.0 * (arr - 1.0)
    return float(out) if out.ndim == 0 else out


def rescale_dataset(data: Dataset) -> Dataset:
    out = Dataset(rescale_ecsi(data.values), data.column_names, data.source, list(data.log))
    out.log.append("rescaled 1..10 ratings to 0..100")
    return out


def impute_mean(data: Dataset) -> Dataset:
    """Replace missing cells by the mean of the observed cells in their column."""
    values = data.values.copy()
    log = list(data.log)
    for j, name in enumerate(data.column_names):
        miss = np.isnan(values[:, j])
        if not miss.any():
            continue
        if miss.all():
            raise ValueError(f"column {name!r} has no observed values")
        values[miss, j] = values[~miss, j].mean()
        log.append(f"imputed {int(miss.sum())} cell(s) in {name}")
    return Dataset(values, data.column_names, data.source, log)
