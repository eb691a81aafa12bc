"""FastAPI service wrapping the experiment runner.

Each experiment is a synchronous POST endpoint taking its config model and
returning the summary, verdicts, and manifest; CSV artifacts are returned
inline on request or written server-side when the config carries an output
directory.  Runs are CPU-bound and sized for desk scale; clients needing
long runs should set modest sample counts or run through the CLI.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import ConfigError, ConvergenceError, DomainError, EstimateRefusedError, StabilityError
from ..potentials import by_name
from ..runner import run
from ..runner.config import CONFIG_TYPES
from . import schemas

_REQUEST_TYPES = {
    "sample": schemas.SampleRequest,
    "dgff": schemas.DgffRequest,
    "hs": schemas.HsRequest,
    "gibbs": schemas.GibbsRequest,
    "clt": schemas.CltRequest,
    "coupling": schemas.CouplingRequest,
    "mean-harm": schemas.MeanHarmRequest,
    "entropy": schemas.EntropyRequest,
    "bl": schemas.BlRequest,
    "beurling": schemas.BeurlingRequest,
}

_USER_ERRORS = (ConfigError, DomainError, StabilityError, EstimateRefusedError, ConvergenceError)


def create_app() -> FastAPI:
    app = FastAPI(
        title="gl-lab",
        version=__version__,
        description="Stochastic lattice laboratory for gradient interface models",
    )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/potentials", response_model=list[schemas.PotentialInfo])
    def potentials():
        out = []
        for name in ("quadratic", "cosine"):
            p = by_name(name)
            out.append(
                schemas.PotentialInfo(
                    name=p.name, a_lower=p.a_lower, a_upper=p.a_upper,
                    lipschitz=p.lipschitz, max_stable_dt=p.max_stable_dt,
                )
            )
        return out

    @app.get("/experiments", response_model=list[schemas.ExperimentInfo])
    def experiments():
        return [
            schemas.ExperimentInfo(name=name, config_schema=cfg.model_json_schema())
            for name, cfg in CONFIG_TYPES.items()
        ]

    def _execute(name: str, request) -> schemas.RunResponse:
        try:
            result = run(name, request.config)
        except _USER_ERRORS as e:
            raise HTTPException(status_code=400, detail={"error": type(e).__name__, "message": str(e)})
        return schemas.RunResponse(
            subcommand=result.subcommand,
            passed=result.passed,
            verdicts=result.verdicts,
            summary=result.summary,
            manifest=result.manifest(),
            artifacts=dict(result.tables) if request.include_artifacts else None,
        )

    def _register(name: str, request_type):
        path = f"/run/{name}"

        def endpoint(request):
            return _execute(name, request)

        endpoint.__name__ = f"run_{name.replace('-', '_')}"
        # bind the concrete model so FastAPI sees it despite deferred annotations
        endpoint.__annotations__ = {"request": request_type}
        app.post(path, response_model=schemas.RunResponse)(endpoint)

    for name, request_type in _REQUEST_TYPES.items():
        _register(name, request_type)

    return app


app = create_app()
