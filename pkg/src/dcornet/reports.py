"""CSV and JSON artifacts written by the experiments and the command line."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np
import pandas as pd

from dcornet import __version__
from dcornet.models import HeatmapResult

logger = logging.getLogger(__name__)

# six significant digits, trailing zeros kept
HEATMAP_FLOAT_FORMAT = "%#.6g"


def provenance(seed: Optional[int], n: Optional[int], m: Optional[int] = None) -> Dict:
    return {"seed": seed, "n": n, "m": m, "version": __version__}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def _dump_json(path, payload: Dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def export_heatmap(hm: HeatmapResult, path, prov: Optional[Dict] = None) -> Dict[str, Path]:
    """Write `<path>.csv` (6 significant digits) and `<path>.json` (full precision)."""
    base = str(path)
    csv_path, json_path = Path(base + ".csv"), Path(base + ".json")
    frame = pd.DataFrame(hm.values, index=hm.row_labels, columns=hm.col_labels)
    frame.to_csv(csv_path, float_format=HEATMAP_FLOAT_FORMAT, index_label="layer")
    _dump_json(json_path, {
        "row_labels": list(hm.row_labels),
        "col_labels": list(hm.col_labels),
        "n_samples": hm.n_samples,
        "values": hm.values,
        "provenance": prov or provenance(None, hm.n_samples),
    })
    logger.info("heatmap %dx%d written to %s.{csv,json}", *hm.values.shape, base)
    return {"csv": csv_path, "json": json_path}


def write_metrics(path, metrics: Dict, prov: Dict) -> None:
    _dump_json(path, {"metrics": metrics, "provenance": prov})


def write_accuracy_table(path, rows: Iterable[Dict], prov: Dict) -> pd.DataFrame:
    frame = pd.DataFrame([dict(row, **prov) for row in rows])
    frame.to_csv(path, index=False, float_format="%.6f")
    return frame
