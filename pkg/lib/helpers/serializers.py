import json
import os
from pathlib import Path
from typing import Iterable, Union

import numpy as np
import pandas as pd
from tabulate import tabulate

from lib.helpers.constants import RLE_FORMAT, RLE_VERSION
from lib.helpers.logs import LOGGER

FLOAT_DIGITS = 17


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    raise TypeError(f"object of type {type(value).__name__} is not JSON serializable")


def to_json(record) -> str:
    """Render a dataclass_json record (or a plain dict) with sorted keys."""

    payload = record.to_dict() if hasattr(record, 'to_dict') else record
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_record(record, path: Union[str, Path]) -> Path:
    """Write a JSON record to path, creating parent directories."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(to_json(record))
    LOGGER.debug(f"record written to {path}")
    return path


def read_record(path: Union[str, Path]) -> dict:
    with open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def write_table(rows: Union[pd.DataFrame, Iterable[dict]], path: Union[str, Path], columns: list = None,
                digits: int = FLOAT_DIGITS) -> Path:
    """Write a CSV table; the default 17 significant digits read back losslessly.

    Args:
        rows (DataFrame | Iterable[dict]): Table rows.
        path (str | Path): Destination file.
        columns (list): Column order; inferred from the rows when omitted.
        digits (int): Significant digits of float columns.

    Returns:
        Path: The written file.

    """

    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    if columns is not None:
        frame = frame[columns]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=f"%.{digits}g", lineterminator="\n")
    LOGGER.debug(f"{len(frame)} rows written to {path}")
    return path


def read_table(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip')


def render_table(rows: list, headers: list) -> str:
    """Console rendering of a summary table."""

    return tabulate(rows, headers=headers, tablefmt="github", floatfmt=".6g")


def encode_rle(mask: np.ndarray) -> list:
    """Run-length encode a boolean array in C order as (value, count) pairs."""

    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    return [(int(flat[s]), int(e - s)) for s, e in zip(starts, ends)]


def decode_rle(runs: list, shape: tuple) -> np.ndarray:
    values = np.concatenate([np.full(count, bool(value)) for value, count in runs]) if runs else np.zeros(0, bool)
    if values.size != int(np.prod(shape)):
        raise ValueError(f"run lengths cover {values.size} cells, expected {int(np.prod(shape))}")
    return values.reshape(shape)


def write_rle(path: Union[str, Path], mask: np.ndarray, header: dict) -> Path:
    """Write a mask as '# key=value' header lines followed by 'value count' runs."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# format={RLE_FORMAT}", f"# version={RLE_VERSION}",
             f"# shape={','.join(str(s) for s in np.shape(mask))}"]
    lines += [f"# {key}={'' if value is None else value}" for key, value in sorted(header.items())]
    lines += [f"{value} {count}" for value, count in encode_rle(mask)]
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path


def read_rle(path: Union[str, Path]) -> tuple:
    """Read a mask written by write_rle.

    Returns:
        tuple: (mask, header) with header values left as strings.

    """

    header, runs = {}, []
    with open(path, 'r', encoding='utf-8') as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            if line.startswith('#'):
                key, _, value = line[1:].strip().partition('=')
                header[key.strip()] = value.strip()
            else:
                value, count = line.split()
                runs.append((int(value), int(count)))

    if header.get('format') != RLE_FORMAT:
        raise ValueError(f"{path} is not a {RLE_FORMAT} file")
    shape = tuple(int(s) for s in header['shape'].split(',') if s)
    return decode_rle(runs, shape), header
