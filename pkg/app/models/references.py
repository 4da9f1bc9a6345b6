import os
from typing import List, Optional
import logging

from app.models.code import CodeAst, Dialect
from app.models.dsl import parse_code
from app.models.task import TaskSpec, load_task

logger = logging.getLogger(__name__)

REFERENCES_DIR = os.path.normpath(os.path.join(os.path.dirname(__file__), "..", "..", "data", "references"))


def reference_names(directory: str = REFERENCES_DIR) -> List[str]:
    """H1..H6 then K7..K10"""
    names = [f[:-len(".code")] for f in os.listdir(directory) if f.endswith(".code")]
    return sorted(names, key=lambda name: (name[0], int(name[1:])))


def reference_dialect(name: str) -> Dialect:
    return Dialect.KAREL if name.upper().startswith("K") else Dialect.HOC


def load_reference_code(name: str, directory: str = REFERENCES_DIR) -> CodeAst:
    with open(os.path.join(directory, f"{name}.code"), "r", encoding="utf-8") as fh:
        return parse_code(fh.read(), reference_dialect(name))


def load_reference_task(name: str, directory: str = REFERENCES_DIR) -> Optional[TaskSpec]:
    path = os.path.join(directory, f"{name}.task.json")
    if not os.path.exists(path):
        return None
    with open(path, "rb") as fh:
        return load_task(fh.read())
