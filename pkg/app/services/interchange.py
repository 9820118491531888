"""Text formats for matrices, functions, measures, sequences and reports.

Floats are written with 17 significant digits so every value parses back to
the same double. Key order is insertion order, so identical runs give
byte-identical files.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from app.errors import DimensionMismatch, InputError, UnsupportedClass
from app.services.functions import RationalSum, ScalarFunction, TrigSum
from app.services.ssm import AtomicMeasure, ProductSimplexMeasure

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


# ── Serializer ───────────────────────────────────────────────────────────────

def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.complexfloating, complex)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _scalar(v) -> bool:
    return v is None or isinstance(v, (bool, int, float, str))


def _encode(obj, level: int) -> str:
    pad, inner = "  " * level, "  " * (level + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(_scalar(v) for v in obj):
            return "[" + ", ".join(_encode(v, 0) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _encode(v, level + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{inner}{json.dumps(k)}: {_encode(v, level + 1)}" for k, v in obj.items())
        return "{\n" + body + "\n" + pad + "}"
    raise InputError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return _encode(_plain(obj), 0) + "\n"


def write_json(path: PathLike, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path: PathLike):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not valid JSON ({e})")


# ── Matrices and paths ───────────────────────────────────────────────────────

def matrix_to_dict(A) -> dict:
    A = np.asarray(A, dtype=np.complex128)
    return {"dim": int(A.shape[0]), "re": A.real, "im": A.imag}


def matrix_from_dict(doc: dict) -> np.ndarray:
    try:
        N = int(doc["dim"])
        re = np.asarray(doc["re"], dtype=np.float64)
        im = np.asarray(doc.get("im", np.zeros_like(re)), dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed matrix document: {e}")
    if re.shape != (N, N) or im.shape != (N, N):
        raise DimensionMismatch(f"matrix document declares dim {N} but holds {re.shape}")
    return re + 1j * im


def tuple_to_dict(mats: Sequence) -> dict:
    return {"matrices": [matrix_to_dict(A) for A in mats]}


def tuple_from_dict(doc: dict) -> List[np.ndarray]:
    if "matrices" not in doc:
        raise InputError("tuple document needs a 'matrices' list")
    return [matrix_from_dict(m) for m in doc["matrices"]]


def path_to_dict(path) -> dict:
    return {"base": [matrix_to_dict(A) for A in path.base], "direction": [matrix_to_dict(V) for V in path.direction]}


def path_from_dict(doc: dict) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """(base, direction); the caller builds the Hermitian or dissipative path."""
    try:
        base = [matrix_from_dict(m) for m in doc["base"]]
        direction = [matrix_from_dict(m) for m in doc["direction"]]
    except KeyError as e:
        raise InputError(f"path document is missing {e}")
    return base, direction


# ── Functions ────────────────────────────────────────────────────────────────

def function_to_dict(f: ScalarFunction) -> dict:
    if isinstance(f, TrigSum):
        terms = [{"freq": list(t), "coeff": [c.real, c.imag]} for t, c in f.terms()]
        return {"class": "trig", "arity": f.arity, "terms": terms}
    if isinstance(f, RationalSum):
        terms = [{"pole": [z.real, z.imag], "powers": list(k), "coeff": [c.real, c.imag]} for z, k, c in f.terms()]
        return {"class": "rational", "arity": f.arity, "terms": terms}
    raise UnsupportedClass(f"no interchange form for {type(f).__name__}")


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise InputError(f"complex values are [re, im] pairs, got {v}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def function_from_dict(doc: dict) -> ScalarFunction:
    try:
        cls, n, terms = doc["class"], int(doc["arity"]), doc["terms"]
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed function document: {e}")
    if cls == "trig":
        return TrigSum.from_terms(((t["freq"], _complex(t["coeff"])) for t in terms), n=n)
    if cls == "rational":
        return RationalSum.from_terms(((_complex(t["pole"]), t["powers"], _complex(t["coeff"])) for t in terms), n=n)
    raise UnsupportedClass(f"unknown function class {cls!r}")


# ── Measures ─────────────────────────────────────────────────────────────────

def measure_header(n: int) -> List[str]:
    return [f"lambda_{j + 1}" for j in range(n)] + ["re_weight", "im_weight"]


def write_measure_csv(path: PathLike, mu: AtomicMeasure) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(measure_header(mu.n))
        for p, c in zip(mu.points, mu.weights):
            w.writerow([fmt(x) for x in p] + [fmt(c.real), fmt(c.imag)])
    logger.debug(f"wrote {len(mu)} atoms to {path}")
    return path


def read_measure_csv(path: PathLike) -> AtomicMeasure:
    with open(path, "r", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise InputError(f"{path}: empty measure file")
    header = rows[0]
    n = len(header) - 2
    if n < 1 or header != measure_header(n):
        raise InputError(f"{path}: unexpected header {header}")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=np.float64).reshape(-1, n + 2)
    return AtomicMeasure(n, data[:, :n], data[:, n] + 1j * data[:, n + 1])


def simplex_to_dict(measures: Dict[Tuple[int, int], ProductSimplexMeasure]) -> dict:
    out = {}
    for (i, j) in sorted(measures):
        nu = measures[(i, j)]
        out[f"{i},{j}"] = {
            "n": nu.n, "i": nu.i, "j": nu.j, "mass": nu.mass,
            "total_variation": nu.total_variation,
            "components": nu.components(),
        }
    return {"measures": out}


def simplex_from_dict(doc: dict) -> Dict[Tuple[int, int], ProductSimplexMeasure]:
    out = {}
    for key, m in doc.get("measures", {}).items():
        comps = m["components"]
        n, i, j = int(m["n"]), int(m["i"]), int(m["j"])
        width = 3 if i == j else 4
        out[(i, j)] = ProductSimplexMeasure(
            n, i, j,
            np.array([_complex(c["weight"]) for c in comps], dtype=np.complex128),
            np.array([c["nodes"] for c in comps], dtype=np.float64).reshape(-1, width),
            np.array([c["spectator"] for c in comps], dtype=np.float64).reshape(-1, n),
        )
    return out


# ── Sequences and reports ────────────────────────────────────────────────────

def write_sequence(path: PathLike, values: Sequence[float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(fmt(v) + "\n" for v in values), encoding="utf-8")
    return path


def read_sequence(path: PathLike) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    try:
        return np.array([float(ln) for ln in lines if ln], dtype=np.float64)
    except ValueError as e:
        raise InputError(f"{path}: {e}")


def report_to_dict(report) -> dict:
    return report.as_dict() if hasattr(report, "as_dict") else _plain(report)


def write_report(path: PathLike, reports) -> Path:
    if isinstance(reports, (list, tuple)):
        return write_json(path, {"reports": [report_to_dict(r) for r in reports]})
    return write_json(path, report_to_dict(reports))


def json_safe(obj):
    """Plain Python structure with non-finite floats replaced by None."""
    obj = _plain(obj)
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [json_safe(v) for v in obj]
    return obj
