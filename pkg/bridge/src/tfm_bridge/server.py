"""Stdio model server for the context-evaluator wire protocol.

Newline-delimited JSON over stdin/stdout, one request in flight:

    -> {"type": "hello", "protocol": 1}
    <- {"type": "hello", "protocol": 1, "name": <string>}
    -> {"type": "predict", "id": N, "context_x": [[..]], "context_y": [..],
        "query_x": [[..]], "n_classes": K}
    <- {"type": "proba", "id": N, "proba": [[..]]}
       or {"type": "error", "id": N, "message": <string>}
    -> {"type": "bye"}            (server exits 0)

Context sizes beyond the wrapped model's limits answer with an error
whose message contains "capacity", which clients use to back off. A
malformed line answers with an error carrying id -1 and the loop
continues. ``--mock`` swaps the model for a deterministic majority-class
predictor so the protocol can be exercised without any checkpoint.
"""

from __future__ import annotations

import argparse
import importlib
import json
import sys

import numpy as np


class MajorityModel:
    """Deterministic stand-in: every query gets the context's label
    frequencies as its probability row."""

    def __init__(self):
        self._freq: np.ndarray | None = None

    def fit(self, x, y, n_classes: int):
        counts = np.bincount(np.asarray(y, dtype=np.int64), minlength=n_classes)
        self._freq = counts / counts.sum()

    def predict_proba(self, x) -> np.ndarray:
        return np.tile(self._freq, (len(x), 1))


class FittedModel:
    """Adapter around any classifier exposing fit / predict_proba."""

    def __init__(self, estimator):
        self.estimator = estimator
        self._classes: np.ndarray | None = None
        self._n_classes = 0

    def fit(self, x, y, n_classes: int):
        y = np.asarray(y, dtype=np.int64)
        self._classes = np.unique(y)
        self._n_classes = n_classes
        self.estimator.fit(np.asarray(x, dtype=np.float64), y)

    def predict_proba(self, x) -> np.ndarray:
        raw = np.asarray(self.estimator.predict_proba(np.asarray(x, dtype=np.float64)))
        # widen to the requested class count: absent classes get zero mass
        out = np.zeros((raw.shape[0], self._n_classes))
        out[:, self._classes] = raw
        return out


def load_model(spec: str | None, device: str | None, mock: bool):
    if mock:
        return MajorityModel(), "mock-majority"
    if spec:
        module_name, _, class_name = spec.partition(":")
        if not class_name:
            raise ValueError(f"--model must look like 'module:ClassName', got {spec!r}")
        cls = getattr(importlib.import_module(module_name), class_name)
        try:
            estimator = cls(device=device) if device else cls()
        except TypeError:
            estimator = cls()
        return FittedModel(estimator), spec
    try:
        from tabpfn import TabPFNClassifier
    except ImportError:
        raise ValueError(
            "no model available: pass --mock, or --model module:ClassName, "
            "or install a tabular foundation model package"
        ) from None
    estimator = TabPFNClassifier(device=device or "cpu")
    return FittedModel(estimator), "tabpfn"


def _normalized(proba: np.ndarray) -> list[list[float]]:
    proba = np.clip(np.asarray(proba, dtype=np.float64), 0.0, None)
    sums = proba.sum(axis=1, keepdims=True)
    sums[sums == 0.0] = 1.0
    return (proba / sums).tolist()


def serve(stdin, stdout, model, name: str, max_context: int, max_features: int, batch_rows: int) -> int:
    def emit(message: dict) -> None:
        stdout.write(json.dumps(message) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            emit({"type": "error", "id": -1, "message": "malformed JSON"})
            continue
        kind = message.get("type")
        if kind == "hello":
            emit({"type": "hello", "protocol": 1, "name": name})
        elif kind == "bye":
            return 0
        elif kind == "predict":
            request_id = message.get("id", -1)
            try:
                context_x = message["context_x"]
                context_y = message["context_y"]
                query_x = message["query_x"]
                n_classes = int(message["n_classes"])
                n_rows = len(context_x)
                n_cols = len(context_x[0]) if n_rows else 0
                if n_rows > max_context or n_cols > max_features:
                    emit(
                        {
                            "type": "error",
                            "id": request_id,
                            "message": f"capacity: context {n_rows}x{n_cols} exceeds "
                            f"{max_context}x{max_features}",
                        }
                    )
                    continue
                model.fit(context_x, context_y, n_classes)
                rows: list[list[float]] = []
                for start in range(0, len(query_x), batch_rows):
                    chunk = query_x[start : start + batch_rows]
                    rows.extend(_normalized(model.predict_proba(chunk)))
                emit({"type": "proba", "id": request_id, "proba": rows})
            except MemoryError:
                emit({"type": "error", "id": request_id, "message": "capacity: out of memory"})
            except Exception as exc:  # noqa: BLE001 - keep serving after bad requests
                emit({"type": "error", "id": request_id, "message": str(exc)})
        else:
            emit({"type": "error", "id": message.get("id", -1), "message": f"unknown type {kind!r}"})
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tfm-bridge", description=__doc__)
    parser.add_argument("--model", help="classifier as module:ClassName (fit/predict_proba)")
    parser.add_argument("--device", help="device string handed to the model")
    parser.add_argument("--mock", action="store_true", help="majority-class stand-in model")
    parser.add_argument("--max-context", type=int, default=1000)
    parser.add_argument("--max-features", type=int, default=100)
    parser.add_argument("--batch-rows", type=int, default=2000, help="query rows per forward pass")
    args = parser.parse_args(argv)

    try:
        model, name = load_model(args.model, args.device, args.mock)
    except (ValueError, ImportError, AttributeError) as exc:
        print(f"model load failed: {exc}", file=sys.stderr)
        return 3

    return serve(
        sys.stdin,
        sys.stdout,
        model,
        name,
        max_context=args.max_context,
        max_features=args.max_features,
        batch_rows=args.batch_rows,
    )


if __name__ == "__main__":
    sys.exit(main())
