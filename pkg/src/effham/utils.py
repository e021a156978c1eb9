import hashlib
import inspect
import json
import os
import subprocess
from datetime import datetime, timezone
from typing import Any, Sequence, Tuple

import numpy as np

from effham.common import INFO
from effham.errors import UsageError

FLOAT_FORMAT = '%.12e'


def get_path(dir: str) -> str:
    """
    Takes a directory name as a string and returns its full path.
    If the directory does not exist, it creates it.
    """
    full_path = os.path.abspath(dir)
    if not os.path.exists(full_path):
        os.makedirs(full_path)
    return full_path


def fmt_float(x: float) -> str:
    # adding 0.0 folds -0.0 into 0.0 so equal values print identically
    return FLOAT_FORMAT % (float(x) + 0.0)


def canonical_json(obj: Any, compact: bool = False) -> str:
    if compact:
        return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=False)
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def sha256_of(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj, compact=True).encode('utf-8')).hexdigest()


def write_to_file(output, file: str) -> str:
    """
    Write ``output`` to ``file``, format chosen by extension:

        .json  any JSON-serializable object, sorted keys
        .csv   a (header, rows) pair, rows a 2-D real array
        .txt   an iterable of lines
    """
    _, extension = os.path.splitext(file)
    parent = os.path.dirname(os.path.abspath(file))
    get_path(parent)

    if extension == '.json':
        with open(file, 'w', encoding='utf-8', newline='\n') as f:
            f.write(canonical_json(output))

    elif extension == '.csv':
        header, rows = output
        rows = np.atleast_2d(np.asarray(rows, dtype=float)) + 0.0
        with open(file, 'w', encoding='utf-8', newline='\n') as f:
            np.savetxt(f, rows, fmt=FLOAT_FORMAT, delimiter=',', header=','.join(header), comments='')

    elif extension == '.txt':
        with open(file, 'w', encoding='utf-8', newline='\n') as f:
            for line in output:
                f.write(f'{line}\n')

    else:
        raise NotImplementedError(f'No writer for "{extension}" files')

    INFO(f'Wrote {file}')
    return file


def load_json_config(conf: str):
    # resolve relative to the calling module, so package data is found wherever it is installed
    caller_frame = inspect.stack()[1]
    caller_directory = os.path.dirname(os.path.abspath(caller_frame.filename))

    full_path = os.path.join(caller_directory, conf)
    full_path = os.path.abspath(os.path.expanduser(os.path.expandvars(full_path)))

    with open(full_path, 'r', encoding='utf-8') as file:
        json_data = json.load(file)

    return json_data


def code_version() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(['git', 'describe', '--tags', '--always', '--dirty'], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass

    try:
        from importlib.metadata import PackageNotFoundError, version
        return version('effham')
    except (ImportError, PackageNotFoundError):
        return '0+unknown'


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def parse_window(text: str) -> Tuple[float, float]:
    parts = text.split(':')
    if len(parts) != 2:
        raise UsageError(f'Window must look like "t0:t1", got "{text}"')
    try:
        t0, t1 = float(parts[0]), float(parts[1])
    except ValueError:
        raise UsageError(f'Window bounds must be numbers, got "{text}"')
    if not t1 > t0 >= 0:
        raise UsageError(f'Window needs 0 <= t0 < t1, got "{text}"')
    return t0, t1


def triplet_rows(triplets: Sequence[Tuple[int, int, complex]]) -> list:
    return [[int(r), int(c), fmt_float(v.real), fmt_float(v.imag)] for r, c, v in triplets]
