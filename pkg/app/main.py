from contextlib import asynccontextmanager
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.middleware.gzip import GZipMiddleware
from fastapi.responses import JSONResponse
import sys
import traceback

# Wrap startup in a global try-except to catch invisible crashes
try:
    from app.config import get_settings
    from app.errors import InputError, LabError
    from app.routers import system, verify
except Exception as e:
    print(f"CRITICAL STARTUP ERROR: {e}", file=sys.stderr)
    traceback.print_exc(file=sys.stderr)
    try:
        with open("data/startup_error.log", "a") as f:
            f.write(f"\n--- {e} ---\n")
            traceback.print_exc(file=f)
    except (OSError, IOError, PermissionError) as log_err:
        print(f"WARNING: Could not write to startup_error.log: {log_err}", file=sys.stderr)
    sys.exit(1)
import os
import logging

# Configure logging
LOG_FILE = "data/app.log"
os.makedirs("data", exist_ok=True)

# Ensure log file is writable
try:
    with open(LOG_FILE, "a") as f:
        pass
except Exception as e:
    print(f"CRITICAL: Cannot write to log file {LOG_FILE}: {e}")
    LOG_FILE = os.path.join(os.path.expanduser("~"), "spectral-shift-lab.log")
    print(f"Falling back to log file: {LOG_FILE}")

os.environ["SSLAB_LOG_FILE"] = LOG_FILE

logging.basicConfig(
    level=getattr(logging, get_settings().log_level.upper(), logging.INFO),
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    handlers=[
        logging.FileHandler(LOG_FILE),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger("sslab")
logger.info("Spectral shift lab starting up...")

# Run check and store results for status endpoint
ENV_CHECK_RESULTS = system.check_environment()


@asynccontextmanager
async def lifespan(app):
    settings = get_settings()
    if ENV_CHECK_RESULTS["status"] != "ok":
        logger.warning(f"Environment check reported problems: {ENV_CHECK_RESULTS['checks']}")
    logger.info(f"Quadrature orders: krein={settings.quad_krein} koplienko={settings.quad_koplienko} "
                f"dissipative={settings.quad_dissipative}")
    yield
    logger.info("Spectral shift lab shutting down")


app = FastAPI(title="Spectral Shift Lab", lifespan=lifespan)


# Global Exception Handlers
@app.exception_handler(LabError)
async def lab_error_handler(request: Request, exc: LabError):
    status_code = 400 if isinstance(exc, InputError) else 422
    logger.warning(f"{request.url.path}: [{exc.code}] {exc.message}")
    return JSONResponse(status_code=status_code, content={"detail": exc.as_dict()})


@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.error(f"Unhandled exception: {exc}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={"detail": "Internal server error. Check logs for details."}
    )


@app.exception_handler(404)
async def not_found_handler(request: Request, exc: Exception):
    return JSONResponse(
        status_code=404,
        content={"detail": "Resource not found"}
    )

# CORS - Restrict origins for security
ALLOWED_ORIGINS = os.getenv('ALLOWED_ORIGINS', '').split(',') if os.getenv('ALLOWED_ORIGINS') else ['*']
ALLOW_CREDENTIALS = ALLOWED_ORIGINS != ['*']

app.add_middleware(
    CORSMiddleware,
    allow_origins=ALLOWED_ORIGINS,
    allow_credentials=ALLOW_CREDENTIALS,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)

# Reports of large instances carry long measure tables
app.add_middleware(GZipMiddleware, minimum_size=1000)

# Routers
app.include_router(system.public_router, prefix="/api/system", tags=["system"])
app.include_router(verify.router, prefix="/api", tags=["verify"])


@app.middleware("http")
async def no_store(request: Request, call_next):
    response = await call_next(request)
    if request.url.path.startswith("/api/"):
        response.headers.setdefault("Cache-Control", "no-store")
    response.headers.setdefault("X-Content-Type-Options", "nosniff")
    return response


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=os.getenv("SSLAB_HOST", "127.0.0.1"), port=int(os.getenv("SSLAB_PORT", "8000")))
