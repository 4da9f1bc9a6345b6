import hashlib
import json
import numpy as np
from typing import Any, Iterable


def convert_numpy_to_json(obj: Any) -> Any:
    """
    Recursively convert numpy scalars/arrays, tuples and sets to plain
    Python values so the result can be handed to json.dumps
    """
    if isinstance(obj, dict):
        return {k: convert_numpy_to_json(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy_to_json(item) for item in obj]
    elif isinstance(obj, (set, frozenset)):
        return sorted(convert_numpy_to_json(item) for item in obj)
    elif isinstance(obj, np.ndarray):
        return obj.tolist()
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.bool_):
        return bool(obj)
    else:
        return obj


def dumps(obj: Any, indent: int = None) -> str:
    return json.dumps(convert_numpy_to_json(obj), indent=indent, ensure_ascii=False)


def derive_seed(base_seed: int, *labels: Any) -> int:
    """Stable 32-bit seed for a labelled work item (independent of PYTHONHASHSEED)"""
    digest = hashlib.sha256(
        "|".join([str(base_seed)] + [str(label) for label in labels]).encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:4], "big")


def write_jsonl(path: str, records: Iterable[Any]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps(record))
            fh.write("\n")
            count += 1
    return count


def read_jsonl(path: str) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
