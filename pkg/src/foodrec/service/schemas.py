"""Pydantic request/response models for the HTTP surface.

The classify response carries exactly the seven documented fields with
these frozen spellings: food_result, food_results_by_category, non_food,
qid, status_code, status_msg, time_cost.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict


class ScoredName(BaseModel):
    name: str
    score: float


class ClassifyResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    food_result: list[ScoredName]
    food_results_by_category: list[ScoredName]
    non_food: bool
    qid: str
    status_code: int
    status_msg: str
    time_cost: float


class ClassifyBody(BaseModel):
    image: str | None = None        # base64 PNG or PPM bytes
    image_url: str | None = None


class ErrorResponse(BaseModel):
    status_code: int
    status_msg: str


class FeedbackAck(BaseModel):
    status_code: int
    status_msg: str
    qid: str


class HealthResponse(BaseModel):
    status: str
    checkpoint_digest: str
    num_classes: int
    dataset_version: int | None = None


# --- FAMS -------------------------------------------------------------------


class TaskCreateRequest(BaseModel):
    keywords: list[str]
    count_per_keyword: int
    label: str


class AssignRequest(BaseModel):
    assignee: str


class SelectionsRequest(BaseModel):
    selections: dict[str, bool]
    expected_version: int


class SubmitRequest(BaseModel):
    expected_version: int | None = None


class CandidateView(BaseModel):
    candidate_id: str
    source_keyword: str
    full_ref: str
    thumbnail_b64: str
    selected: bool


class TaskView(BaseModel):
    id: str
    status: str
    label: str
    keywords: list[str]
    requested_count: int
    assignee: str | None
    version: int
    candidate_count: int
    selected_count: int
    shortfall: bool
    dataset_version: int | None
    error_note: str | None


class ConfirmResponse(BaseModel):
    task: TaskView
    dataset_version: int
    ingested_count: int


class RoleResponse(BaseModel):
    role: str
