from fastapi import APIRouter
import os
import logging
import platform

import numpy
import scipy

from app.config import get_settings

logger = logging.getLogger(__name__)


# Read version from VERSION file
def get_version():
    version_file = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), "VERSION")
    try:
        with open(version_file, 'r') as f:
            return f.read().strip()
    except Exception:
        return "0.1.0"  # Fallback version

VERSION = get_version()

public_router = APIRouter()


def check_environment():
    """Perform basic environment checks on startup"""
    results = {"status": "ok", "checks": []}

    # 1. Output directory writability
    out_dir = get_settings().out_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
        test_file = os.path.join(out_dir, ".write_test")
        with open(test_file, "w") as f:
            f.write("test")
        os.remove(test_file)
        logger.info(f"Environment check: {out_dir} is writable")
        results["checks"].append({"name": "out_dir_writable", "status": "pass"})
    except OSError as e:
        logger.error(f"Environment check FAILED: {out_dir} is NOT writable: {e}")
        results["checks"].append({"name": "out_dir_writable", "status": "fail", "error": str(e)})
        results["status"] = "error"

    # 2. Numerical stack
    results["checks"].append({"name": "numpy", "status": "pass", "version": numpy.__version__})
    results["checks"].append({"name": "scipy", "status": "pass", "version": scipy.__version__})
    try:
        numpy.linalg.eigh(numpy.eye(2))
    except Exception as e:
        logger.error(f"Environment check FAILED: LAPACK unavailable: {e}")
        results["checks"].append({"name": "lapack", "status": "fail", "error": str(e)})
        results["status"] = "error"
    return results


@public_router.get("/status")
def status():
    return {
        "version": VERSION,
        "python": platform.python_version(),
        "settings": get_settings().model_dump(),
        "environment": check_environment(),
    }
