"""
Dataset directories: hi.grd, lo.grd, seasons.csv and spec.json.
"""

import json
import os
from typing import Any, Dict

import numpy as np
import pandas as pd
import structlog
from pydantic import ValidationError

from ..core.enums import Season
from ..core.exceptions import FormatError
from ..services.synthdata import FieldSpec, PairedDataset
from .grd import read_grd, write_grd

logger = structlog.get_logger(__name__)

HI_FILE = "hi.grd"
LO_FILE = "lo.grd"
SEASONS_FILE = "seasons.csv"
SPEC_FILE = "spec.json"


def save_dataset(directory: str, dataset: PairedDataset, seed: int) -> None:
    os.makedirs(directory, exist_ok=True)
    write_grd(os.path.join(directory, HI_FILE), dataset.hi)
    write_grd(os.path.join(directory, LO_FILE), dataset.lo)
    pd.DataFrame({
        "sample": np.arange(dataset.samples),
        "season": [s.value for s in dataset.seasons],
    }).to_csv(os.path.join(directory, SEASONS_FILE), index=False)

    document: Dict[str, Any] = {
        "field": dataset.spec.model_dump(mode="json"),
        "factor": dataset.factor,
        "samples": dataset.samples,
        "seed": seed,
    }
    with open(os.path.join(directory, SPEC_FILE), "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("dataset_saved", directory=directory, samples=dataset.samples)


def load_spec(directory: str) -> Dict[str, Any]:
    """spec.json with the field spec parsed into a FieldSpec."""
    path = os.path.join(directory, SPEC_FILE)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
        document["field"] = FieldSpec.model_validate(document["field"])
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e.strerror}") from e
    except (json.JSONDecodeError, KeyError, ValidationError) as e:
        raise FormatError(f"{path} is not a valid dataset spec: {e}") from e
    return document


def load_dataset(directory: str) -> PairedDataset:
    document = load_spec(directory)
    hi = read_grd(os.path.join(directory, HI_FILE), expected_rank=3).astype(np.float64)
    lo = read_grd(os.path.join(directory, LO_FILE), expected_rank=3).astype(np.float64)
    seasons_path = os.path.join(directory, SEASONS_FILE)
    try:
        frame = pd.read_csv(seasons_path)
        seasons = tuple(Season(value) for value in frame["season"])
    except (OSError, KeyError, ValueError) as e:
        raise FormatError(f"cannot read season labels from {seasons_path}: {e}") from e
    if not (hi.shape[0] == lo.shape[0] == len(seasons)):
        raise FormatError(f"{directory}: hi, lo and seasons disagree on the sample count")
    return PairedDataset(hi=hi, lo=lo, seasons=seasons, factor=int(document["factor"]), spec=document["field"])
