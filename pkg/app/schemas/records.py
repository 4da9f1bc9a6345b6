from pydantic import BaseModel
from typing import Any, Dict, List, Optional

from app.schemas.scoring import ScoreBreakdown


class TaskRecord(BaseModel):
    """One line of tasks.jsonl"""
    codeId: str
    code: str
    task: Dict[str, Any]
    scores: ScoreBreakdown
    decisions: List[int]
    seed: int


class PerTaskEntry(BaseModel):
    codeId: str
    taskFile: str
    scores: ScoreBreakdown
    seed: int
    decisions: List[int]


class PrunedCode(BaseModel):
    codeId: str
    code: str
    reason: str  # all-crash | filter


class StageCountsDocument(BaseModel):
    countD0: int
    countD01: int
    countAll: int
    elapsed: float


class PipelineReport(BaseModel):
    reference: Dict[str, Any]
    perStageCounts: Dict[str, int]
    mutationCounts: Optional[StageCountsDocument] = None
    perTask: List[PerTaskEntry] = []
    pruned: List[PrunedCode] = []
    timing: Dict[str, float] = {}


class ObjectiveResult(BaseModel):
    status: str  # proven | refuted | indeterminate
    detail: str = ""
    explored: int = 0
    counterexample: Optional[str] = None


class DiagnosticsReport(BaseModel):
    taskSize: int
    deltaMini: int
    minimality: ObjectiveResult
    structure: ObjectiveResult
    conceptuallySimilar: Optional[bool] = None
