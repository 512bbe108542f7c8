from fastapi import FastAPI, Request, HTTPException
from fastapi import UploadFile, File
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Literal
import logging
import os
import re
from pathlib import Path
from slowapi import Limiter, _rate_limit_exceeded_handler
from slowapi.util import get_remote_address
from slowapi.errors import RateLimitExceeded

from eegforward import (
    Dipole,
    ForwardModelError,
    MeshValidationError,
    ParseError,
    SourceMethod,
    configure_logging,
    element_error_rows,
    forward_solve,
    load_mesh,
    load_settings,
    parse_mesh,
    save_mesh,
)

# Logging to console and LOG_DIR/eegforward.log (uvicorn loggers included)
settings = load_settings()
configure_logging(settings)
logger = logging.getLogger(__name__)

app = FastAPI(title="eegforward")

# Rate limiting configuration
limiter = Limiter(key_func=get_remote_address)
app.state.limiter = limiter
app.add_exception_handler(RateLimitExceeded, _rate_limit_exceeded_handler)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

MESH_SUFFIX = ".mesh"
MESH_ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")
MAX_RATIOS = 64


class SolveRequest(BaseModel):
    dipole: list[float] = Field(..., min_length=6, max_length=6, description="x, y, z, qx, qy, qz")
    method: Literal["as", "fs"] = "as"
    order: Literal[2, 4, 6] | None = None
    tol: float = Field(1e-10, gt=0, lt=1)

    @model_validator(mode="after")
    def _order_for_fs(self):
        if self.method == "fs" and self.order is None:
            raise ValueError("method 'fs' needs an order (2, 4 or 6)")
        return self


class ElementErrorRequest(BaseModel):
    shape: Literal["tri", "tet"] = "tri"
    ratios: list[float] = Field(..., min_length=1, max_length=MAX_RATIOS)
    orders: list[Literal[2, 4, 6]] = Field(default=[2, 4, 6], min_length=1)
    side: float = Field(1.0, gt=0)

    @field_validator("ratios")
    @classmethod
    def _positive(cls, values: list[float]) -> list[float]:
        if any(v <= 0 for v in values):
            raise ValueError("ratios must be positive")
        return values


def mesh_path(mesh_id: str) -> Path:
    """Path of a stored mesh; ids are file stems inside MESH_DIR."""
    if not MESH_ID_PATTERN.match(mesh_id):
        raise HTTPException(status_code=404, detail=f"Mesh '{mesh_id}' not found")
    return Path(settings.mesh_dir) / f"{mesh_id}{MESH_SUFFIX}"


@app.get("/health")
def health():
    return {"status": "ok"}


@app.get("/meshes")
@limiter.limit("100/minute")
def list_meshes(request: Request):
    """
    List stored meshes with their sizes.

    Files that no longer parse are skipped with a warning.
    """
    mesh_dir = Path(settings.mesh_dir)
    if not mesh_dir.is_dir():
        return []

    meshes = []
    for path in sorted(mesh_dir.glob(f"*{MESH_SUFFIX}")):
        try:
            mesh = load_mesh(path)
        except (ForwardModelError, OSError) as e:
            logger.warning(f"Skipping mesh {path.name}: {e}")
            continue
        meshes.append({
            "id": path.stem,
            "nodes": mesh.n_nodes,
            "tets": mesh.n_tets,
            "electrodes": len(mesh.electrodes),
        })
    return meshes


@app.post("/meshes/upload")
@limiter.limit("10/minute")
async def upload_mesh(request: Request, file: UploadFile = File(...)):
    """
    Upload a mesh file in the eegforward text format.

    The mesh id is the file name without the .mesh suffix
    (e.g. 'sphere-4layer.mesh' -> 'sphere-4layer').
    """
    filename = os.path.basename(file.filename or "")
    if not filename.endswith(MESH_SUFFIX):
        raise HTTPException(status_code=400, detail="Only .mesh files are accepted")
    mesh_id = filename[:-len(MESH_SUFFIX)]
    location = mesh_path(mesh_id)
    if location.exists():
        raise HTTPException(status_code=400, detail=f"Mesh '{mesh_id}' already exists")

    content = await file.read()
    if len(content) > settings.upload_max_bytes:
        raise HTTPException(status_code=413, detail=f"Upload exceeds {settings.upload_max_bytes} bytes")
    try:
        mesh = parse_mesh(content.decode("utf-8"))
    except UnicodeDecodeError:
        raise HTTPException(status_code=400, detail="Mesh file must be UTF-8 text")
    except (ParseError, MeshValidationError) as e:
        raise HTTPException(status_code=400, detail=f"Invalid mesh: {e}")

    save_mesh(mesh, location)
    logger.info(f"Uploaded mesh '{mesh_id}': {mesh.summary()}")
    return {
        "detail": "Mesh uploaded",
        "mesh_id": mesh_id,
        "nodes": mesh.n_nodes,
        "tets": mesh.n_tets,
        "electrodes": len(mesh.electrodes),
    }


@app.post("/meshes/{mesh_id}/solve")
@limiter.limit("10/minute")
def solve(request: Request, mesh_id: str, solve_request: SolveRequest):
    """Forward solve for one dipole; potentials are zero-mean referenced."""
    logger.info(f"Solve request - Mesh: {mesh_id}, Method: {solve_request.method}, Order: {solve_request.order}")
    path = mesh_path(mesh_id)
    if not path.is_file():
        raise HTTPException(status_code=404, detail=f"Mesh '{mesh_id}' not found")

    try:
        mesh = load_mesh(path)
        dipole = Dipole(solve_request.dipole[:3], solve_request.dipole[3:])
        solution = forward_solve(
            mesh,
            dipole,
            SourceMethod(solve_request.method),
            solve_request.order,
            rel_tol=solve_request.tol,
        )
    except ForwardModelError as e:
        logger.warning(f"Solve failed for mesh '{mesh_id}': {e}")
        raise HTTPException(status_code=400, detail=str(e))
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.exception(f"Unexpected error during solve: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Internal server error: {str(e)}")

    logger.info(f"Solved mesh '{mesh_id}' in {solution.iterations} iterations")
    return {
        "mesh_id": mesh_id,
        "electrodes": solution.points.tolist(),
        "potentials": solution.potentials.tolist(),
        "iterations": solution.iterations,
        "residual": solution.residual,
    }


@app.post("/element-error")
@limiter.limit("10/minute")
def element_error(request: Request, error_request: ElementErrorRequest):
    """Rows of the element-error study for the requested d/a ratios and orders."""
    try:
        rows = element_error_rows(
            error_request.shape,
            error_request.ratios,
            list(error_request.orders),
            side=error_request.side,
        )
    except (ForwardModelError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.exception(f"Unexpected error in element-error study: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Internal server error: {str(e)}")
    return {"rows": rows}
