from pydantic import BaseModel, validator
from typing import List, Optional


class CodeNode(BaseModel):
    type: str
    iter: Optional[int] = None
    cond: Optional[str] = None
    body: Optional[List["CodeNode"]] = None
    elseBody: Optional[List["CodeNode"]] = None

    @validator("iter")
    def validate_iter(cls, v):
        if v is not None and v < 0:
            raise ValueError("iteration count must be non-negative")
        return v


class CodeDocument(BaseModel):
    """JSON AST dump of a program"""
    dialect: str = "hoc"
    body: List[CodeNode] = []

    @validator("dialect")
    def validate_dialect(cls, v):
        if v not in ("hoc", "karel"):
            raise ValueError("dialect must be 'hoc' or 'karel'")
        return v


CodeNode.model_rebuild()
