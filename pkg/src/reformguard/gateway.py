"""HTTP defense gateway: intercepts classification traffic, reformulates each
request through the enabled tasks, and returns the ensemble verdict.

Endpoints:
    POST /classify  {"text": ...} ->
        {"label": int, "tie": bool, "verdicts": [{"task", "label", "text"}]}
    GET  /health    -> {"status": "ok"}

All shared state (config, clients) is read-only after startup, so concurrent
requests behave exactly like sequential ones when the backends are
deterministic.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .attacksim import ClassifierError, ClassifierOracle
from .backends import backend_from_url, classifier_from_url
from .config import DefenseConfig
from .corpus import Sample
from .ensemble import defend_classify
from .reformulate import LlmBackend, ReformulationEngine, ReformulationError, sanitize


class ClassifyRequest(BaseModel):
    text: str


def startup_probe(oracle: ClassifierOracle) -> None:
    """Fail fast if the downstream classifier cannot answer a trivial request."""
    oracle.classify(["health probe"])


def create_app(
    config: DefenseConfig,
    redact: bool = False,
    backend: LlmBackend | None = None,
    oracle: ClassifierOracle | None = None,
    engine: ReformulationEngine | None = None,
) -> FastAPI:
    """Build the gateway application; clients default to the config URLs."""
    backend = backend if backend is not None else backend_from_url(config.backend.base_url)
    oracle = oracle if oracle is not None else classifier_from_url(config.classifier.base_url)
    engine = engine if engine is not None else ReformulationEngine(batch_cap=config.batch_cap)

    app = FastAPI(title="reformguard gateway")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/classify")
    def classify(request: ClassifyRequest):
        sample = Sample(id="request", text=sanitize(request.text))
        try:
            result = defend_classify(sample, engine, backend, oracle, config)
        except ClassifierError as exc:
            return JSONResponse(status_code=502, content={
                "error": {"type": "classifier_unreachable", "detail": str(exc)},
            })
        except ReformulationError as exc:
            return JSONResponse(status_code=503, content={
                "error": {"type": "reformulation_failed", "detail": str(exc)},
            })
        return {
            "label": result.final_label,
            "tie": result.tie,
            "verdicts": [
                {
                    "task": v.task.value,
                    "label": v.label,
                    "text": None if redact else v.reformulated_text,
                }
                for v in result.verdicts
            ],
        }

    return app


def serve(config: DefenseConfig, redact: bool = False) -> None:
    """Probe the classifier, then run the gateway until interrupted."""
    import uvicorn

    oracle = classifier_from_url(config.classifier.base_url)
    startup_probe(oracle)
    app = create_app(config, redact=redact, oracle=oracle)
    uvicorn.run(app, host=config.host, port=config.port)
