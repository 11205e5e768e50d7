"""Data persistence service module.

This module contains the ProblemFile class responsible for saving and loading
problem instances to/from JSON files, and the report writers used by the
command line.

Complex numbers are stored as ``[re, im]`` pairs and matrices as row-major
nested arrays. Stored bounds are re-verified when a problem is rebuilt.
"""

import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np

from .errors import ValidationError
from .problem import MatrixODEProblem, TimeDepProblem

logger = logging.getLogger(__name__)

STDOUT = "-"

Problem = Union[MatrixODEProblem, TimeDepProblem]


def encode_complex(value: complex) -> List[float]:
    """Encode one complex number as ``[re, im]``."""
    return [float(value.real), float(value.imag)]


def encode_array(array: np.ndarray) -> Any:
    """Encode a complex vector or matrix as nested ``[re, im]`` lists."""
    pairs = np.stack([array.real, array.imag], axis=-1)
    return pairs.tolist()


def decode_array(value: Any, name: str, ndim: int) -> np.ndarray:
    """Decode nested ``[re, im]`` lists into a complex array of ``ndim`` dimensions."""
    try:
        pairs = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"Field {name} is not a numeric array", field=name) from None
    if pairs.ndim != ndim + 1 or pairs.shape[-1] != 2:
        raise ValidationError(f"Field {name} must be a {ndim}-D array of [re, im] pairs", field=name)
    array = np.empty(pairs.shape[:-1], dtype=np.complex128)
    array.real = pairs[..., 0]
    array.imag = pairs[..., 1]
    return array


def _require(data: Mapping[str, Any], key: str) -> Any:
    if key not in data:
        raise ValidationError(f"Missing field {key}", field=key)
    return data[key]


def _number(data: Mapping[str, Any], key: str) -> float:
    value = _require(data, key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"Field {key} must be a number", field=key)
    return float(value)


def problem_to_dict(problem: Problem) -> Dict[str, Any]:
    """Convert a problem to its JSON-ready dictionary.

    Parameters
    ----------
    problem : MatrixODEProblem or TimeDepProblem
        Problem to encode.

    Returns
    -------
    dict
        Dictionary following the problem file schema.
    """
    data: Dict[str, Any] = {
        "n": problem.n,
        "t": problem.t,
        "eps": problem.eps,
        "D": encode_array(problem.D),
        "phi": encode_array(problem.phi),
        "psi": encode_array(problem.psi),
    }
    bounds: Dict[str, Any] = {"a": problem.a, "b": problem.b, "c": problem.c, "d": problem.d}
    if isinstance(problem, MatrixODEProblem):
        data["kind"] = "static"
        data.update({"A": encode_array(problem.A), "B": encode_array(problem.B), "C": encode_array(problem.C)})
        bounds.update({"xiA": problem.xiA, "xiB": problem.xiB})
    else:
        data["kind"] = "timedep"
        data.update(
            {
                "gridJ": problem.grid_j,
                "Aseq": encode_array(problem.A_seq),
                "Bseq": encode_array(problem.B_seq),
                "Cseq": encode_array(problem.C_seq),
                "derivs": {"A": problem.derivA, "B": problem.derivB, "C": problem.derivC},
            }
        )
        bounds.update({"xiA": problem.xiA_seq.tolist(), "xiB": problem.xiB_seq.tolist()})
    data["bounds"] = bounds
    return data


def _log_norm_bounds(bounds: Mapping[str, Any], key: str, grid_j: int) -> List[float]:
    value = _require(bounds, key)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)] * grid_j
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
        raise ValidationError(f"Field {key} must be a number or a list of numbers", field=key)
    return [float(v) for v in value]


def problem_from_dict(data: Mapping[str, Any]) -> Problem:
    """Rebuild a problem from its dictionary form.

    Raises
    ------
    ValidationError
        If a field is missing, malformed, or a bound is violated.
    """
    if not isinstance(data, Mapping):
        raise ValidationError("Problem file must contain a JSON object")
    kind = _require(data, "kind")
    bounds = _require(data, "bounds")
    if not isinstance(bounds, Mapping):
        raise ValidationError("Field bounds must be an object", field="bounds")
    n = int(_number(data, "n"))
    common: Dict[str, Any] = {
        "D": decode_array(_require(data, "D"), "D", 2),
        "t": _number(data, "t"),
        "phi": decode_array(_require(data, "phi"), "phi", 1),
        "psi": decode_array(_require(data, "psi"), "psi", 1),
        "eps": _number(data, "eps"),
        "a": _number(bounds, "a"),
        "b": _number(bounds, "b"),
        "c": _number(bounds, "c"),
        "d": _number(bounds, "d"),
    }
    if common["D"].shape[0] != n:
        raise ValidationError(f"Matrix D has dimension {common['D'].shape[0]}, expected n = {n}", field="D")
    if kind == "static":
        return MatrixODEProblem(
            A=decode_array(_require(data, "A"), "A", 2),
            B=decode_array(_require(data, "B"), "B", 2),
            C=decode_array(_require(data, "C"), "C", 2),
            xiA=_number(bounds, "xiA"),
            xiB=_number(bounds, "xiB"),
            **common,
        )
    if kind == "timedep":
        grid_j = int(_number(data, "gridJ"))
        derivs = _require(data, "derivs")
        if not isinstance(derivs, Mapping):
            raise ValidationError("Field derivs must be an object", field="derivs")
        return TimeDepProblem(
            A_seq=decode_array(_require(data, "Aseq"), "Aseq", 3),
            B_seq=decode_array(_require(data, "Bseq"), "Bseq", 3),
            C_seq=decode_array(_require(data, "Cseq"), "Cseq", 3),
            xiA_seq=_log_norm_bounds(bounds, "xiA", grid_j),
            xiB_seq=_log_norm_bounds(bounds, "xiB", grid_j),
            derivA=_number(derivs, "A"),
            derivB=_number(derivs, "B"),
            derivC=_number(derivs, "C"),
            **common,
        )
    raise ValidationError(f"Unknown problem kind {kind!r}", field="kind")


class ProblemFile:
    """Manages one problem file on disk.

    This class handles saving and loading problem instances to and from a
    UTF-8 JSON file.
    """

    def __init__(self, path: Path) -> None:
        """Initialize ProblemFile.

        Parameters
        ----------
        path : Path
            Location of the problem file.
        """
        self._path = Path(path)

    @property
    def path(self) -> Path:
        """Location of the problem file."""
        return self._path

    def exists(self) -> bool:
        """Check if the problem file exists."""
        return self._path.exists()

    def save(self, problem: Problem) -> None:
        """Write ``problem`` to the file, creating parent directories.

        Parameters
        ----------
        problem : MatrixODEProblem or TimeDepProblem
            Problem to store.
        """
        self._path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._path, "w", encoding="utf-8") as f:
            json.dump(problem_to_dict(problem), f, indent=2, ensure_ascii=False, sort_keys=True)
        logger.debug("Saved %s problem to %s", type(problem).__name__, self._path)

    def load(self) -> Problem:
        """Read and validate the problem stored in the file.

        Returns
        -------
        MatrixODEProblem or TimeDepProblem
            The rebuilt problem.

        Raises
        ------
        ValidationError
            If the file is missing, unreadable, not valid JSON, or fails validation.
        """
        if not self.exists():
            raise ValidationError(f"Problem file {self._path} does not exist", field="problem")
        try:
            with open(self._path, encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"Problem file {self._path} is not valid JSON: {exc.msg}", field="problem") from exc
        except UnicodeDecodeError as exc:
            raise ValidationError(f"Problem file {self._path} is not UTF-8 text", field="problem") from exc
        except OSError as exc:
            raise ValidationError(f"Problem file {self._path} cannot be read: {exc.strerror}", field="problem") from exc
        return problem_from_dict(data)


def save_problem(problem: Problem, path: Path) -> None:
    """Write ``problem`` to ``path``."""
    ProblemFile(path).save(problem)


def load_problem(path: Path) -> Problem:
    """Load the problem stored at ``path``."""
    return ProblemFile(path).load()


def write_json(data: Mapping[str, Any], path: Union[str, Path] = STDOUT) -> None:
    """Write a report as sorted-key JSON; ``-`` means stdout."""
    text = json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    if str(path) == STDOUT:
        sys.stdout.write(text)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")


def write_csv(rows: Iterable[Mapping[str, Any]], columns: Sequence[str], path: Union[str, Path] = STDOUT) -> None:
    """Write report rows as CSV with a fixed column order; ``-`` means stdout."""
    if str(path) == STDOUT:
        _write_rows(sys.stdout, rows, columns)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="") as f:
        _write_rows(f, rows, columns)


def _write_rows(stream: Any, rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> None:
    writer = csv.DictWriter(stream, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
