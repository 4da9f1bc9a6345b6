from pydantic import BaseModel, Field, validator
from typing import Any, List, Optional

DIRECTION_NAMES = ("north", "east", "south", "west")


class PoseDocument(BaseModel):
    row: int
    col: int
    dir: str

    @validator("dir")
    def validate_dir(cls, v):
        if v not in DIRECTION_NAMES:
            raise ValueError(f"direction must be one of {', '.join(DIRECTION_NAMES)}")
        return v


class TaskDocument(BaseModel):
    """On-disk task file; cells not listed in walls are free"""
    dialect: str
    n: int = Field(..., ge=1)
    start: PoseDocument
    # Kept loose so a list of several cells is reported as "multiple goals"
    goal: Optional[Any] = None
    walls: List[List[int]] = []
    premarkers: Optional[List[List[int]]] = None
    postmarkers: Optional[List[List[int]]] = None
    postwalls: Optional[List[List[int]]] = None
    store: List[str]
    maxBlocks: int = Field(..., ge=0)

    @validator("dialect")
    def validate_dialect(cls, v):
        if v not in ("hoc", "karel"):
            raise ValueError("dialect must be 'hoc' or 'karel'")
        return v

    @validator("walls", "premarkers", "postmarkers", "postwalls")
    def validate_cells(cls, v):
        if v is None:
            return v
        for cell in v:
            if len(cell) != 2:
                raise ValueError(f"cell {cell} is not a [row, col] pair")
        return v
