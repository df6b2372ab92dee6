import logging
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import RedirectResponse

from config import settings
from routers import planning

logger = logging.getLogger(__name__)


# ── App lifespan ──────────────────────────────────────────────────────────────

@asynccontextmanager
async def lifespan(app: FastAPI):
    Path(settings.output_dir).mkdir(parents=True, exist_ok=True)
    logger.info("%s ready, writing artefacts to %s", settings.service_title, settings.output_dir)
    yield


# ── App setup ─────────────────────────────────────────────────────────────────

app = FastAPI(
    title=settings.service_title,
    description="Reachability-based corridor planner on lanelet networks",
    version="1.0.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(planning.router, prefix="/api", tags=["Planning"])


@app.get("/", include_in_schema=False)
async def root():
    return RedirectResponse("/docs")
