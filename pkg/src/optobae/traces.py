"""Spectrum traces and the delimited text format they travel in.

CSV dialect (all files written by this package):

* ``#``-prefixed header lines carry metadata as ``# key: value``; values
  that are not plain scalars are JSON encoded.
* One header row naming the columns, then comma-separated rows.
* Numbers use ``.`` as decimal separator and are written with
  ``repr(float)``, which round-trips bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .params import TWO_PI

TRACE_COLUMNS = ("offset_hz", "psd_vac_units")


@dataclass
class SpectrumTrace:
    """PSD on a grid of angular offsets from the LO reference, vacuum level = 1."""

    freq_offsets: np.ndarray
    psd: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freq_offsets = np.asarray(self.freq_offsets, dtype=float)
        self.psd = np.asarray(self.psd, dtype=float)
        if self.freq_offsets.ndim != 1 or self.freq_offsets.shape != self.psd.shape:
            raise ValueError("freq_offsets and psd must be 1-D and of equal length")
        if self.freq_offsets.size > 1 and not np.all(np.diff(self.freq_offsets) > 0):
            raise ValueError("freq_offsets must be strictly increasing")
        if np.any(self.psd < 0):
            raise ValueError("psd values must be >= 0")

    def __len__(self):
        return self.freq_offsets.size

    @property
    def freq_hz(self) -> np.ndarray:
        return self.freq_offsets / TWO_PI

    def to_csv(self, path=None, extra_meta=None) -> str:
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        cols = np.column_stack([self.freq_hz, self.psd])
        return write_columns(path, TRACE_COLUMNS, cols, meta)

    @classmethod
    def from_csv(cls, path) -> "SpectrumTrace":
        meta, header, data = read_columns(path)
        if data.shape[1] < 2:
            raise ParseError("trace needs two columns", path=path)
        return cls(TWO_PI * data[:, 0], data[:, 1], meta)


def provenance(generator: str, params=None, **extra) -> dict:
    """Metadata block recorded with every generated trace."""
    from .params import RunConfig, SystemParams, config_mapping

    # no wall-clock entries: seeded runs must reproduce files byte for byte
    meta: dict = {"generator": generator}
    if isinstance(params, SystemParams):
        meta["params"] = config_mapping(RunConfig(params))
    elif isinstance(params, RunConfig):
        meta["params"] = config_mapping(params)
    elif params is not None:
        meta["params"] = params
    meta.update(extra)
    return meta


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _encode(value) -> str:
    if isinstance(value, str) and "\n" not in value:
        return value
    if dataclasses.is_dataclass(value):
        value = dataclasses.asdict(value)
    return json.dumps(value, default=_json_default, sort_keys=True)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _decode(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def write_columns(path, columns, data, meta=None) -> str:
    data = np.asarray(data, dtype=float)
    lines = [f"# {k}: {_encode(v)}" for k, v in (meta or {}).items()]
    lines.append(",".join(columns))
    for row in data:
        lines.append(",".join(_fmt(x) for x in row))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_columns(path):
    """Return (meta, column names, float array) from a commented CSV file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(str(exc), path=path) from exc
    meta: dict = {}
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = _decode(v.strip())
            continue
        fields = [s.strip() for s in line.split(",")]
        if header is None:
            try:
                [float(s) for s in fields]
            except ValueError:
                header = fields
                continue
            header = [f"col{i}" for i in range(len(fields))]
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}",
                             path=path, line=lineno)
        try:
            rows.append([float(s) for s in fields])
        except ValueError:
            raise ParseError(f"non-numeric value in {line!r}", path=path, line=lineno)
    if not rows:
        raise ParseError("no data rows", path=path)
    return meta, header, np.array(rows)
