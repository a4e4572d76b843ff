"""Scenario data model: loss matrices, portfolio weights and file I/O."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np
from sklearn.utils import check_array

from .config import DEFAULT_TOLERANCES
from .exceptions import ScenarioError

__all__ = [
    "ScenarioMatrix",
    "check_weights",
    "check_alpha",
    "load_scenarios",
    "save_scenarios",
    "portfolio_loss",
]


class ScenarioMatrix:
    """Immutable ``n x d`` matrix of asset losses with scenario probabilities.

    Parameters
    ----------
    losses : array-like of shape (n, d)
        Loss of asset ``i`` in scenario ``k``. A 1-d array is read as a
        single asset.
    probs : array-like of shape (n,), optional
        Scenario probabilities. Uniform when omitted. Values that sum to 1
        within ``prob_sum_load`` are renormalised exactly.
    """

    __slots__ = ("_losses", "_probs", "_uniform")

    def __init__(self, losses, probs=None):
        tol = DEFAULT_TOLERANCES
        arr = np.asarray(losses, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        try:
            arr = check_array(arr, dtype=np.float64, ensure_all_finite=True, copy=True)
        except ValueError as exc:
            raise ScenarioError(f"losses: {exc}") from None
        n = arr.shape[0]
        if probs is None:
            p = np.full(n, 1.0 / n)
            uniform = True
        else:
            p = np.array(probs, dtype=np.float64).reshape(-1)
            if p.shape[0] != n:
                raise ScenarioError(f"probs has length {p.shape[0]}, expected {n}")
            if not np.all(np.isfinite(p)):
                raise ScenarioError("probs contains non-finite entries")
            if np.any(p < 0):
                raise ScenarioError("probs contains a negative probability")
            total = math.fsum(p)
            if abs(total - 1.0) > tol.prob_sum_load:
                raise ScenarioError(f"probability sum is {total!r}, expected 1")
            if total != 1.0:
                p = p / total
            uniform = bool(np.all(p == p[0]))
        arr.setflags(write=False)
        p.setflags(write=False)
        self._losses = arr
        self._probs = p
        self._uniform = uniform

    @property
    def losses(self) -> np.ndarray:
        return self._losses

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def n(self) -> int:
        return self._losses.shape[0]

    @property
    def d(self) -> int:
        return self._losses.shape[1]

    @property
    def is_uniform(self) -> bool:
        return self._uniform

    def __repr__(self) -> str:
        return f"ScenarioMatrix(n={self.n}, d={self.d}, uniform={self._uniform})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioMatrix):
            return NotImplemented
        return (
            self._losses.shape == other._losses.shape
            and np.array_equal(self._losses, other._losses)
            and np.array_equal(self._probs, other._probs)
        )

    __hash__ = None

    def with_column(self, column) -> "ScenarioMatrix":
        """Return a copy with ``column`` appended as an extra asset."""
        col = np.asarray(column, dtype=np.float64).reshape(-1, 1)
        if col.shape[0] != self.n:
            col = np.broadcast_to(col, (self.n, 1))
        return ScenarioMatrix(np.hstack([self._losses, col]), self._probs)

    def mean(self) -> np.ndarray:
        """Probability-weighted column means."""
        return self._probs @ self._losses

    def to_dict(self) -> dict:
        out = {"losses": self._losses.tolist()}
        if not self._uniform:
            out["probs"] = self._probs.tolist()
        return out


def as_scenarios(S) -> ScenarioMatrix:
    """Coerce an array or :class:`ScenarioMatrix` to a :class:`ScenarioMatrix`."""
    if isinstance(S, ScenarioMatrix):
        return S
    return ScenarioMatrix(S)


def check_weights(x, d: int | None = None) -> np.ndarray:
    """Validate portfolio weights and return them as a float array."""
    w = np.asarray(x, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ScenarioError("weights are empty")
    if not np.all(np.isfinite(w)):
        raise ScenarioError("weights contain non-finite entries")
    if not np.any(w != 0.0):
        raise ScenarioError("weights are the zero vector")
    if d is not None and w.shape[0] != d:
        raise ScenarioError(f"weights have length {w.shape[0]} but scenarios have d={d}")
    return w


def check_alpha(alpha) -> float:
    """Validate a confidence level in the open unit interval."""
    a = float(alpha)
    if not (0.0 < a < 1.0):
        raise ScenarioError(f"alpha must lie in (0, 1), got {alpha!r}")
    return a


def portfolio_loss(S, x) -> np.ndarray:
    """Scenario-wise portfolio loss ``L_k(x) = sum_i x_i * losses[k, i]``."""
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    return S.losses @ w


# ---------------------------------------------------------------- file I/O


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_csv(text: str, prob_column: bool | None) -> ScenarioMatrix:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ScenarioError("CSV contains no rows")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip().lower() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ScenarioError("CSV contains a header but no data rows")
    width = len(rows[0])
    data = []
    for lineno, row in enumerate(rows, start=2 if header else 1):
        if len(row) != width:
            raise ScenarioError(f"CSV line {lineno}: expected {width} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise ScenarioError(f"CSV line {lineno}: non-numeric field") from None
    arr = np.array(data, dtype=np.float64)
    if prob_column is None:
        prob_column = header is not None and header[-1] == "prob"
    if prob_column:
        if width < 2:
            raise ScenarioError("CSV with a prob column needs at least one loss column")
        return ScenarioMatrix(arr[:, :-1], arr[:, -1])
    return ScenarioMatrix(arr)


def _parse_json(text: str) -> ScenarioMatrix:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"JSON parse failure: {exc}") from None
    if not isinstance(doc, dict) or "losses" not in doc:
        raise ScenarioError('JSON must be an object with a "losses" array')
    extra = set(doc) - {"losses", "probs"}
    if extra:
        raise ScenarioError(f"unexpected JSON keys: {sorted(extra)}")
    losses = doc["losses"]
    if not isinstance(losses, list) or not losses or not all(isinstance(r, list) for r in losses):
        raise ScenarioError('"losses" must be a non-empty array of arrays')
    widths = {len(r) for r in losses}
    if len(widths) != 1:
        raise ScenarioError('"losses" rows have unequal lengths')
    try:
        arr = np.array(losses, dtype=np.float64)
    except (TypeError, ValueError):
        raise ScenarioError('"losses" contains non-numeric entries') from None
    probs = doc.get("probs")
    return ScenarioMatrix(arr, probs)


def load_scenarios(path, format: str | None = None, prob_column: bool | None = None) -> ScenarioMatrix:
    """Read a scenario file.

    Parameters
    ----------
    path : str or Path
        CSV or JSON file.
    format : {"csv", "json"}, optional
        Inferred from the suffix when omitted (``.json`` is JSON, anything
        else CSV).
    prob_column : bool, optional
        Whether the last CSV column holds probabilities. By default this is
        true only when a header row names the last column ``prob``;
        headerless files need ``prob_column=True``.
    """
    p = Path(path)
    if format is None:
        format = "json" if p.suffix.lower() == ".json" else "csv"
    if format not in ("csv", "json"):
        raise ScenarioError(f"unknown scenario format {format!r}")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {p}: {exc.strerror or exc}") from None
    if format == "json":
        return _parse_json(text)
    return _parse_csv(text, prob_column)


def save_scenarios(S: ScenarioMatrix, path, format: str | None = None) -> None:
    """Write scenarios so that :func:`load_scenarios` returns an equal matrix.

    Floats are written with ``repr`` so the round trip is exact.
    """
    p = Path(path)
    if format is None:
        format = "json" if p.suffix.lower() == ".json" else "csv"
    if format == "json":
        doc = {"losses": S.losses.tolist(), "probs": S.probs.tolist()}
        p.write_text(json.dumps(doc))
        return
    if format != "csv":
        raise ScenarioError(f"unknown scenario format {format!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"a{i}" for i in range(S.d)] + ["prob"])
    for row, pk in zip(S.losses, S.probs):
        writer.writerow([repr(float(v)) for v in row] + [repr(float(pk))])
    p.write_text(buf.getvalue())
