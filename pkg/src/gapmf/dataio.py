"""Dataset and model persistence.

Count matrices use the UCI bag-of-words "docword" text layout: three
header lines (number of documents, vocabulary size, number of stored
entries) followed by one ``docID wordID count`` line per entry with
1-based identifiers. In memory everything is 0-based.

Models round-trip through a small JSON document holding the dimensions,
the hyperparameter vectors, and the dictionary in row-major order.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .model import GapModel, SparseCountMatrix, generate_hierarchical

__all__ = [
    "load_docword",
    "save_docword",
    "preset_w1",
    "preset_w2",
    "SyntheticSpec",
    "generate_dataset",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "gap-model"
MODEL_VERSION = 1


def _open_maybe(source, mode):
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        return open(source, mode), True
    return source, False


def load_docword(source) -> SparseCountMatrix:
    """Parse a docword stream into a count matrix.

    Word identifiers map to rows, document identifiers to columns.
    Malformed content raises :class:`DataFormatError` carrying the
    offending line number.
    """
    handle, own = _open_maybe(source, "r")
    try:
        header = []
        lineno = 0
        for name in ("document count", "vocabulary size", "entry count"):
            line = handle.readline()
            lineno += 1
            if not line:
                raise DataFormatError(f"missing header ({name})", line=lineno)
            try:
                value = int(line.split()[0])
            except (ValueError, IndexError):
                raise DataFormatError(
                    f"expected integer {name}, got {line.strip()!r}", line=lineno
                ) from None
            if value < 0:
                raise DataFormatError(f"{name} must be nonnegative", line=lineno)
            header.append(value)
        n_docs, n_vocab, nnz = header

        docs = np.empty(nnz, dtype=np.int64)
        words = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.int64)
        for i in range(nnz):
            line = handle.readline()
            lineno += 1
            if not line:
                raise DataFormatError(
                    f"expected {nnz} entries, file ended after {i}", line=lineno
                )
            parts = line.split()
            if len(parts) != 3:
                raise DataFormatError(
                    f"expected 'docID wordID count', got {line.strip()!r}", line=lineno
                )
            try:
                d, w, c = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise DataFormatError(
                    f"non-integer field in {line.strip()!r}", line=lineno
                ) from None
            if not 1 <= d <= n_docs:
                raise DataFormatError(
                    f"document id {d} outside 1..{n_docs}", line=lineno
                )
            if not 1 <= w <= n_vocab:
                raise DataFormatError(f"word id {w} outside 1..{n_vocab}", line=lineno)
            if c <= 0:
                raise DataFormatError(f"count must be positive, got {c}", line=lineno)
            docs[i], words[i], vals[i] = d - 1, w - 1, c
        try:
            return SparseCountMatrix(n_vocab, n_docs, words, docs, vals)
        except ValueError as exc:
            raise DataFormatError(str(exc)) from exc
    finally:
        if own:
            handle.close()


def save_docword(counts: SparseCountMatrix, dest):
    """Write a count matrix in docword layout (entries sorted by document
    then word, identifiers 1-based)."""
    handle, own = _open_maybe(dest, "w")
    try:
        handle.write(f"{counts.n_docs}\n{counts.n_rows}\n{counts.nnz}\n")
        for d, w, c in zip(counts.docs, counts.rows, counts.values):
            handle.write(f"{d + 1} {w + 1} {c}\n")
    finally:
        if own:
            handle.close()


def preset_w1() -> np.ndarray:
    """Reference 4 x 2 dictionary used by the bundled synthetic benchmark;
    columns are probability vectors."""
    return np.array(
        [
            [0.638, 0.075],
            [0.009, 0.568],
            [0.044, 0.126],
            [0.309, 0.231],
        ]
    )


def preset_w2() -> np.ndarray:
    """The reference dictionary scaled by 100, for the large-count variant
    of the benchmark."""
    return 100.0 * preset_w1()


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground-truth parameters of a synthetic dataset."""

    w_true: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    n_docs: int
    seed: int


def generate_dataset(spec: SyntheticSpec) -> SparseCountMatrix:
    """Draw a count matrix from the generative model; deterministic in the
    spec's seed."""
    model = GapModel(spec.w_true, spec.alpha, spec.beta)
    rng = np.random.default_rng(np.random.SeedSequence(int(spec.seed)))
    _, _, counts = generate_hierarchical(model, spec.n_docs, rng)
    return counts


def save_model(model: GapModel, dest):
    """Serialize a model as JSON; floats keep full round-trip precision."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_rows": model.n_rows,
        "n_components": model.n_components,
        "alpha": model.alpha.tolist(),
        "beta": model.beta.tolist(),
        "w": model.w.reshape(-1).tolist(),
    }
    handle, own = _open_maybe(dest, "w")
    try:
        json.dump(payload, handle)
        handle.write("\n")
    finally:
        if own:
            handle.close()


def load_model(source) -> GapModel:
    """Load a model written by :func:`save_model`."""
    handle, own = _open_maybe(source, "r")
    try:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"malformed model payload: {exc}") from exc
    finally:
        if own:
            handle.close()
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise DataFormatError("not a model document")
    if payload.get("version") != MODEL_VERSION:
        raise DataFormatError(
            f"unsupported model version {payload.get('version')!r}, "
            f"expected {MODEL_VERSION}"
        )
    try:
        f, k = int(payload["n_rows"]), int(payload["n_components"])
        alpha = np.asarray(payload["alpha"], dtype=np.float64)
        beta = np.asarray(payload["beta"], dtype=np.float64)
        w = np.asarray(payload["w"], dtype=np.float64).reshape(f, k)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed model payload: {exc}") from exc
    return GapModel(w, alpha, beta)
