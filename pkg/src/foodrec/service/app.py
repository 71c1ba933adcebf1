"""HTTP service: classify (GET and POST), feedback (GET only), health,
and the /fams annotation endpoints.

Every JSON error body carries status_code and status_msg mirroring the
HTTP status; successful classify responses carry exactly the seven
documented fields.
"""

from __future__ import annotations

import logging

from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..config import AppConfig
from ..fams import (
    FamsConflictError,
    FamsError,
    FamsNotFoundError,
    FamsPermissionError,
    FamsStateError,
)
from ..taxonomy import TaxonomyError
from .schemas import (
    AssignRequest,
    CandidateView,
    ClassifyBody,
    ClassifyResponse,
    ConfirmResponse,
    ErrorResponse,
    FeedbackAck,
    HealthResponse,
    RoleResponse,
    ScoredName,
    SelectionsRequest,
    SubmitRequest,
    TaskCreateRequest,
    TaskView,
)
from .state import ServiceError, ServiceState

logger = logging.getLogger("foodrec.service")

CHALLENGE_TAGS = tuple("ABCDEFGH")


def _error(status_code: int, status_msg: str) -> JSONResponse:
    body = ErrorResponse(status_code=status_code, status_msg=status_msg)
    return JSONResponse(status_code=status_code, content=body.model_dump())


def _task_view(task) -> TaskView:
    return TaskView(
        id=task.id,
        status=task.status,
        label=task.label,
        keywords=list(task.keywords),
        requested_count=task.requested_count,
        assignee=task.assignee,
        version=task.version,
        candidate_count=len(task.candidates),
        selected_count=task.selected_count(),
        shortfall=task.shortfall,
        dataset_version=task.dataset_version,
        error_note=task.error_note,
    )


def create_app(config: AppConfig, state: ServiceState | None = None) -> FastAPI:
    app = FastAPI(title="foodrec", docs_url=None, redoc_url=None)
    app.state.service = state if state is not None else ServiceState(config)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if config.ui_dist and Path(config.ui_dist).is_dir():
        app.mount("/ui", StaticFiles(directory=config.ui_dist, html=True), name="ui")

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return _error(exc.status_code, exc.status_msg)

    @app.exception_handler(Exception)
    async def unexpected_error_handler(request: Request, exc: Exception):
        logger.exception("internal error on %s", request.url.path)
        return _error(500, f"internal error: {exc}")

    def svc() -> ServiceState:
        return app.state.service

    # -- health ----------------------------------------------------------------

    @app.get("/health", response_model=HealthResponse)
    def health():
        s = svc()
        versions = s.corpus_store.versions()
        return HealthResponse(
            status="ok",
            checkpoint_digest=s.checkpoint.digest,
            num_classes=s.checkpoint.config.num_classes,
            dataset_version=versions[-1] if versions else None,
        )

    # -- classify ----------------------------------------------------------------

    def _classify(api_key: str | None, image_url: str | None, body: ClassifyBody | None):
        s = svc()
        key = s.require_approved_key(api_key)

        body_image = body.image if body is not None else None
        body_url = body.image_url if body is not None else None
        if image_url and body_url and image_url != body_url:
            raise ServiceError(400, "conflicting image_url in query and body")
        url = image_url or body_url
        if (url is None) == (body_image is None):
            raise ServiceError(
                400, "provide exactly one of image_url or the image body field"
            )

        raw = s.fetch_image_url(url) if url is not None else s.decode_base64_field(body_image)
        pixels = s.decode_image(raw)

        outcome = s.classify_pixels(pixels)
        qid = s.next_qid()
        response = ClassifyResponse(
            food_result=[ScoredName(**e) for e in outcome.food_result],
            food_results_by_category=[
                ScoredName(**e) for e in outcome.food_results_by_category
            ],
            non_food=outcome.non_food,
            qid=qid,
            status_code=200,
            status_msg="ok",
            time_cost=outcome.time_cost,
        )
        s.persist_query(qid, key, pixels, response.model_dump())
        if s.crash_after_persist is not None:
            s.crash_after_persist()
        return response

    @app.get("/classify", response_model=ClassifyResponse)
    def classify_get(
        api_key: str | None = Query(default=None),
        image_url: str | None = Query(default=None),
    ):
        return _classify(api_key, image_url, None)

    @app.post("/classify", response_model=ClassifyResponse)
    def classify_post(
        body: ClassifyBody | None = None,
        api_key: str | None = Query(default=None),
        image_url: str | None = Query(default=None),
    ):
        return _classify(api_key, image_url, body)

    # -- feedback (GET only, mirroring the production contract) -----------------

    @app.get("/feedback", response_model=FeedbackAck)
    def feedback(
        api_key: str | None = Query(default=None),
        qid: str | None = Query(default=None),
        label: str | None = Query(default=None),
        tag: str | None = Query(default=None),
    ):
        s = svc()
        s.require_approved_key(api_key)
        if not qid:
            raise ServiceError(400, "missing qid")
        if not s.qid_exists(qid):
            raise ServiceError(404, f"unknown qid {qid!r}")
        if not label or not label.strip():
            raise ServiceError(400, "missing or empty label")
        if tag is not None and tag not in CHALLENGE_TAGS:
            raise ServiceError(400, f"challenge tag must be one of {CHALLENGE_TAGS}")
        s.persist_feedback(qid, label.strip(), tag)
        return FeedbackAck(status_code=200, status_msg="feedback recorded", qid=qid)

    # -- FAMS ----------------------------------------------------------------------

    def _fams_call(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FamsNotFoundError as e:
            raise ServiceError(404, str(e)) from e
        except FamsPermissionError as e:
            raise ServiceError(403, str(e)) from e
        except FamsConflictError as e:
            raise ServiceError(409, str(e)) from e
        except (FamsStateError, FamsError, TaxonomyError) as e:
            raise ServiceError(400, str(e)) from e

    @app.get("/fams/role", response_model=RoleResponse)
    def fams_role(api_key: str | None = Query(default=None)):
        return RoleResponse(role=svc().fams_role(api_key))

    @app.post("/fams/tasks", response_model=TaskView)
    def fams_create_task(
        body: TaskCreateRequest, api_key: str | None = Query(default=None)
    ):
        s = svc()
        role = s.fams_role(api_key)
        task = _fams_call(
            s.fams.create_task, api_key, role, body.keywords, body.count_per_keyword, body.label
        )
        return _task_view(task)

    @app.get("/fams/tasks", response_model=list[TaskView])
    def fams_list_tasks(
        api_key: str | None = Query(default=None),
        assignee: str | None = Query(default=None),
    ):
        s = svc()
        s.fams_role(api_key)
        return [_task_view(t) for t in s.fams.list_tasks(assignee=assignee)]

    @app.get("/fams/tasks/{task_id}", response_model=TaskView)
    def fams_get_task(task_id: str, api_key: str | None = Query(default=None)):
        s = svc()
        s.fams_role(api_key)
        return _task_view(_fams_call(s.fams._task, task_id))

    @app.post("/fams/tasks/{task_id}/assign", response_model=TaskView)
    def fams_assign(
        task_id: str, body: AssignRequest, api_key: str | None = Query(default=None)
    ):
        s = svc()
        role = s.fams_role(api_key)
        task = _fams_call(s.fams.assign, api_key, role, task_id, body.assignee)
        # Populate candidates at assignment so the annotator has a grid to review.
        if not task.candidates:
            task = _fams_call(
                s.fams.fetch_candidates, api_key, role, task_id, s.fams_source
            )
        return _task_view(task)

    @app.get("/fams/tasks/{task_id}/candidates", response_model=list[CandidateView])
    def fams_candidates(task_id: str, api_key: str | None = Query(default=None)):
        s = svc()
        s.fams_role(api_key)
        task = _fams_call(s.fams._task, task_id)
        return [
            CandidateView(
                candidate_id=c.candidate_id,
                source_keyword=c.source_keyword,
                full_ref=c.full_ref,
                thumbnail_b64=c.thumbnail_b64,
                selected=c.selected,
            )
            for c in task.candidates
        ]

    @app.post("/fams/tasks/{task_id}/selections", response_model=TaskView)
    def fams_selections(
        task_id: str, body: SelectionsRequest, api_key: str | None = Query(default=None)
    ):
        s = svc()
        role = s.fams_role(api_key)
        task = _fams_call(
            s.fams.annotate, api_key, role, task_id, body.selections, body.expected_version
        )
        return _task_view(task)

    @app.post("/fams/tasks/{task_id}/submit", response_model=TaskView)
    def fams_submit(
        task_id: str,
        body: SubmitRequest | None = None,
        api_key: str | None = Query(default=None),
    ):
        s = svc()
        role = s.fams_role(api_key)
        expected = body.expected_version if body is not None else None
        task = _fams_call(s.fams.submit, api_key, role, task_id, expected)
        return _task_view(task)

    @app.post("/fams/tasks/{task_id}/confirm", response_model=ConfirmResponse)
    def fams_confirm(task_id: str, api_key: str | None = Query(default=None)):
        s = svc()
        role = s.fams_role(api_key)
        task, version = _fams_call(s.fams.confirm, api_key, role, task_id)
        return ConfirmResponse(
            task=_task_view(task),
            dataset_version=version,
            ingested_count=task.selected_count(),
        )

    return app
