from pydantic import BaseModel, Field
from typing import Dict, List, Optional


class ScoreBreakdown(BaseModel):
    fCov: int
    fQual: float = Field(..., ge=0, le=1)
    fDiss: float = Field(..., ge=0, le=1)
    fNocrash: int
    fNocut: int
    fDiversity: Optional[float] = None
    fScore: float = Field(..., ge=0, le=1)
    featureCounts: Dict[str, int] = {}

    @property
    def indicator(self) -> bool:
        return self.fScore > 0


class TimelinePoint(BaseModel):
    iteration: int
    fScore: float


class RunStats(BaseModel):
    iterations: int
    uniqueTraces: int
    bestScoreTimeline: List[TimelinePoint] = []
    elapsed: float
    statusCounts: Dict[str, int] = {}
