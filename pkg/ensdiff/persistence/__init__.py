"""
Persistence: binary grid and checkpoint formats, dataset directories, reports.

The checkpoint codec imports TensorFlow and is imported from
``ensdiff.persistence.checkpoint`` directly.
"""

from .grd import encode_grd, decode_grd, read_grd, write_grd
from .dataset_store import save_dataset, load_dataset, load_spec

__all__ = [
    "encode_grd",
    "decode_grd",
    "read_grd",
    "write_grd",
    "save_dataset",
    "load_dataset",
    "load_spec",
]
