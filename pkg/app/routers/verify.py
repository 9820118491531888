from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field
import logging
from typing import List, Optional

from app.errors import InputError, LabError, UnsupportedClass
from app.services import interchange
from app.services.dissipative import dissipative_koplienko_verify, dissipative_krein_verify, make_dissipative_path
from app.services.functions import RationalSum
from app.services.generators import FunctionSpec, InstanceSpec, gen, gen_function
from app.services.linalg import PerturbationPath, make_path, trace_norm
from app.services.ssm import koplienko_verify, krein_ssm, krein_verify
from app.services.suite import CRITERIA, run_suite

logger = logging.getLogger(__name__)

router = APIRouter()


class VerifyRequest(BaseModel):
    instance: InstanceSpec = Field(default_factory=InstanceSpec)
    function: Optional[FunctionSpec] = None
    path_doc: Optional[dict] = None       # {"base": [...], "direction": [...]}
    function_doc: Optional[dict] = None   # {"class": ..., "arity": ..., "terms": [...]}
    q: Optional[int] = Field(None, ge=2, le=256)


class SuiteRequest(BaseModel):
    seed: int = Field(0, ge=0)
    only: Optional[List[str]] = None


def _http_error(e: LabError) -> HTTPException:
    status_code = 400 if isinstance(e, InputError) else 422
    logger.warning(f"Request rejected: [{e.code}] {e.message}")
    return HTTPException(status_code=status_code, detail=e.as_dict())


def _path(req: VerifyRequest, dissipative: bool = False):
    if req.path_doc is not None:
        base, direction = interchange.path_from_dict(req.path_doc)
        return make_dissipative_path(base, direction, req.q) if dissipative else make_path(base, direction)
    spec = req.instance
    if dissipative and spec.family != "hardy_dissipative":
        spec = spec.model_copy(update={"family": "hardy_dissipative"})
    path = gen(spec)
    if not dissipative and not isinstance(path, PerturbationPath):
        raise InputError("this endpoint needs a Hermitian instance family")
    return path


def _function(req: VerifyRequest, n: int, default_cls: str, lower: bool = False):
    if req.function_doc is not None:
        f = interchange.function_from_dict(req.function_doc)
    else:
        f = gen_function(req.function or FunctionSpec(cls=default_cls, seed=req.instance.seed, lower=lower), n)
    if f.arity != n:
        raise InputError(f"function arity {f.arity} does not match the tuple size {n}")
    return f


def _run(label: str, fn):
    try:
        return interchange.json_safe(fn())
    except LabError as e:
        raise _http_error(e)
    except Exception as e:
        logger.error(f"{label} failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/verify/krein")
def verify_krein(req: VerifyRequest):
    def work():
        path = _path(req)
        return krein_verify(path, _function(req, path.n, "trig"), req.q).as_dict()
    return _run("krein verification", work)


@router.post("/verify/koplienko")
def verify_koplienko(req: VerifyRequest):
    def work():
        path = _path(req)
        return koplienko_verify(path, _function(req, path.n, "rational"), req.q).as_dict()
    return _run("koplienko verification", work)


@router.post("/verify/dissipative")
def verify_dissipative(req: VerifyRequest):
    def work():
        path = _path(req, dissipative=True)
        f = _function(req, path.n, "rational", lower=True)
        if not isinstance(f, RationalSum):
            raise UnsupportedClass("dissipative identities are verified for RationalSum functions")
        reports = [dissipative_krein_verify(path, f, req.q), dissipative_koplienko_verify(path, f, req.q)]
        return {"reports": [r.as_dict() for r in reports], "pass": all(r.passed for r in reports)}
    return _run("dissipative verification", work)


@router.post("/ssm/krein")
def ssm_krein(req: VerifyRequest):
    def work():
        path = _path(req)
        measures = []
        for j, (mu, V) in enumerate(zip(krein_ssm(path, req.q), path.direction)):
            measures.append({
                "coordinate": j,
                "points": mu.points,
                "weights": [[w.real, w.imag] for w in mu.weights],
                "total_variation": mu.total_variation,
                "trace_norm_bound": trace_norm(V),
            })
        return {"n": path.n, "dim": path.dim, "measures": measures}
    return _run("krein measures", work)


@router.post("/suite")
def suite(req: SuiteRequest):
    known = {key for key, _, _ in CRITERIA}
    if req.only is not None and not set(req.only) <= known:
        raise HTTPException(status_code=400, detail=f"unknown criteria: {sorted(set(req.only) - known)}")
    return _run("suite", lambda: run_suite("quick", req.seed, only=req.only))
