"""Black-box context scorers: surrogates and the child-process bridge.

An evaluator receives a context (sample subset x feature subset of the
training table) plus a query table and returns class probabilities; the
engine and the baselines only ever talk to this abstraction. Probability
rows are validated at this boundary no matter where they came from.
"""

from __future__ import annotations

import hashlib
import json
import queue
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .metrics import resolve_metric
from .tables import Table

PROTOCOL_VERSION = 1


class EvaluationError(RuntimeError):
    """Evaluator failed to produce a usable score."""


class ContextCapacityError(EvaluationError):
    """Context exceeds what the evaluator can ingest; callers may back off."""


class BridgeProtocolError(EvaluationError):
    """Bridge child process violated the wire protocol."""


@dataclass(frozen=True)
class Budget:
    """Capacity pair of the black-box model: context rows and columns."""

    max_samples: int = 1000
    max_features: int = 100

    def __post_init__(self):
        if self.max_samples < 1 or self.max_features < 1:
            raise ValueError("budget entries must be >= 1")


@dataclass(frozen=True)
class ContextSelection:
    """Unique row/column indices into a training table, kept sorted."""

    sample_indices: np.ndarray
    feature_indices: np.ndarray

    def __post_init__(self):
        for name in ("sample_indices", "feature_indices"):
            idx = np.unique(np.asarray(getattr(self, name), dtype=np.int64))
            if idx.size != np.asarray(getattr(self, name)).size:
                raise ValueError(f"{name} contains duplicates")
            if idx.size < 1:
                raise ValueError(f"{name} is empty")
            if idx.min() < 0:
                raise ValueError(f"{name} contains negative indices")
            idx.flags.writeable = False
            object.__setattr__(self, name, idx)

    @property
    def n_samples(self) -> int:
        return int(self.sample_indices.size)

    @property
    def n_features(self) -> int:
        return int(self.feature_indices.size)

    def check_against(self, table: Table) -> None:
        if self.sample_indices.max() >= table.n_rows:
            raise EvaluationError("context references out-of-range sample indices")
        if self.feature_indices.max() >= table.n_cols:
            raise EvaluationError("context references out-of-range feature indices")


def full_selection(table: Table) -> ContextSelection:
    return ContextSelection(
        sample_indices=np.arange(table.n_rows),
        feature_indices=np.arange(table.n_cols),
    )


def validate_proba(proba, n_rows: int, n_classes: int) -> np.ndarray:
    """Check a probability matrix at the evaluator boundary.

    Rows must be non-negative and sum to 1 within 1e-6; sums off by up to
    1e-3 are renormalized (bridges in other runtimes emit slightly
    unnormalized rows), anything worse is an error.
    """
    p = np.asarray(proba, dtype=np.float64)
    if p.shape != (n_rows, n_classes):
        raise EvaluationError(
            f"probability matrix has shape {p.shape}, expected {(n_rows, n_classes)}"
        )
    if not np.all(np.isfinite(p)):
        raise EvaluationError("probability matrix contains non-finite values")
    if p.min() < -1e-9:
        raise EvaluationError("probability matrix contains negative entries")
    p = np.clip(p, 0.0, None)
    sums = p.sum(axis=1)
    err = np.abs(sums - 1.0)
    if err.max() > 1e-3:
        raise EvaluationError(f"probability row sums off by {err.max():.3g}")
    if err.max() > 1e-6:
        p = p / sums[:, None]
    return p


class Evaluator:
    """Base class: capacity enforcement plus the scoring entry points."""

    capacity: Budget | None = None

    def _check_capacity(self, ctx: ContextSelection) -> None:
        cap = self.capacity
        if cap is None:
            return
        if ctx.n_samples > cap.max_samples or ctx.n_features > cap.max_features:
            raise ContextCapacityError(
                f"context {ctx.n_samples}x{ctx.n_features} exceeds capacity "
                f"{cap.max_samples}x{cap.max_features}"
            )

    def predict(self, train: Table, ctx: ContextSelection, query_x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score(self, train: Table, ctx: ContextSelection, val: Table, metric: str) -> float:
        proba = self.predict(train, ctx, val.x)
        return float(resolve_metric(metric)(proba, val.y))

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class KnnEvaluator(Evaluator):
    """Distance-weighted k-nearest-neighbour vote over the context.

    A cheap context-sensitive stand-in for a real in-context model: it is
    deterministic, honours the feature subset, and reacts to which samples
    are present. Neighbour ties break on the lower training index, which
    makes the vote invariant to context ordering.
    """

    def __init__(
        self, k: int = 5, distance: str = "euclidean", capacity: Budget | None = None
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        if distance not in ("euclidean", "manhattan"):
            raise ValueError(f"unknown distance {distance!r}")
        self.k = k
        self.distance = distance
        self.capacity = capacity
        self._query_cache: dict = {}

    def _restricted_query(self, query_x: np.ndarray, ctx: ContextSelection):
        """Query matrix restricted to the context features, with its row
        norms; cached because subset scoring reuses one query set."""
        key = ctx.feature_indices.tobytes()
        hit = self._query_cache.get(key)
        if hit is not None and hit[0] is query_x:
            return hit[1], hit[2]
        q = np.asarray(query_x, dtype=np.float64)[:, ctx.feature_indices]
        q_norms = (q * q).sum(axis=1)[:, None]
        if len(self._query_cache) > 8:
            self._query_cache.clear()
        self._query_cache[key] = (query_x, q, q_norms)
        return q, q_norms

    def predict(self, train: Table, ctx: ContextSelection, query_x: np.ndarray) -> np.ndarray:
        ctx.check_against(train)
        self._check_capacity(ctx)
        cx = train.x[ctx.sample_indices][:, ctx.feature_indices]
        cy = train.y[ctx.sample_indices]
        q, q_norms = self._restricted_query(query_x, ctx)

        k = min(self.k, cx.shape[0])
        if self.distance == "manhattan":
            d1 = np.abs(q[:, None, :] - cx[None, :, :]).sum(axis=2)
            neighbors = self._k_nearest(d1, k)
            dist = np.take_along_axis(d1, neighbors, axis=1)
        else:
            # squared distances order neighbours exactly like distances
            # do, so the sqrt is deferred to the k selected columns
            d2 = q_norms + (cx * cx).sum(axis=1)[None, :] - 2.0 * (q @ cx.T)
            neighbors = self._k_nearest(d2, k)
            dist = np.sqrt(np.clip(np.take_along_axis(d2, neighbors, axis=1), 0.0, None))

        n_q = q.shape[0]
        proba = np.zeros((n_q, train.class_count))
        w = 1.0 / (dist + 1e-9)
        labels = cy[neighbors]
        for cls in range(train.class_count):
            proba[:, cls] = np.where(labels == cls, w, 0.0).sum(axis=1)
        proba /= proba.sum(axis=1, keepdims=True)
        return validate_proba(proba, n_q, train.class_count)

    @staticmethod
    def _k_nearest(dist: np.ndarray, k: int) -> np.ndarray:
        """Per-row indices of the k smallest distances.

        Context rows are sorted by training index, so distance ties must
        resolve toward the lower position. A partition is used for speed;
        rows where a tie straddles the k-th boundary (rare on continuous
        data) are repaired exactly.
        """
        n_ctx = dist.shape[1]
        if k >= n_ctx:
            return np.broadcast_to(np.arange(n_ctx), dist.shape).copy()
        neighbors = np.argpartition(dist, k - 1, axis=1)[:, :k]
        kth = np.take_along_axis(dist, neighbors, axis=1).max(axis=1)
        ambiguous = np.flatnonzero((dist <= kth[:, None]).sum(axis=1) > k)
        for row in ambiguous:
            inside = np.flatnonzero(dist[row] < kth[row])
            boundary = np.flatnonzero(dist[row] == kth[row])
            neighbors[row] = np.concatenate([inside, boundary])[:k]
        return neighbors


def _membership_rng(seed: int, ctx: ContextSelection) -> np.random.Generator:
    """Generator keyed by (seed, context members): deterministic per subset
    and independent of call order, so concurrent scoring stays reproducible."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.int64(seed).tobytes())
    h.update(ctx.sample_indices.tobytes())
    h.update(b"|")
    h.update(ctx.feature_indices.tobytes())
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


class AdditiveOracle(Evaluator):
    """Ground-truth linear scorer for exercising value recovery.

    The score of a context is clip(base + sum of member weights + noise)
    with one weight per optimizable item, bypassing prediction entirely.
    Weights are given per axis; pass None for an axis that is not being
    optimized (its indices then contribute nothing).
    """

    def __init__(
        self,
        sample_weights: np.ndarray | None = None,
        feature_weights: np.ndarray | None = None,
        base: float = 0.5,
        noise_sd: float = 0.0,
        seed: int = 0,
        capacity: Budget | None = None,
    ):
        if sample_weights is None and feature_weights is None:
            raise ValueError("oracle needs weights for at least one axis")
        self.sample_weights = (
            None if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
        )
        self.feature_weights = (
            None if feature_weights is None else np.asarray(feature_weights, dtype=np.float64)
        )
        self.base = float(base)
        self.noise_sd = float(noise_sd)
        self.seed = seed
        self.capacity = capacity

    def predict(self, train, ctx, query_x):
        raise EvaluationError("the additive oracle scores subsets only")

    def score(self, train: Table, ctx: ContextSelection, val: Table, metric: str) -> float:
        self._check_capacity(ctx)
        total = self.base
        if self.sample_weights is not None:
            total += float(self.sample_weights[ctx.sample_indices].sum())
        if self.feature_weights is not None:
            total += float(self.feature_weights[ctx.feature_indices].sum())
        if self.noise_sd > 0.0:
            total += float(_membership_rng(self.seed, ctx).normal(0.0, self.noise_sd))
        return float(np.clip(total, 0.0, 1.0))


class BridgeEvaluator(Evaluator):
    """Client for a child-process model server speaking newline-delimited
    JSON over stdio. One request is in flight per connection; the engine
    may open several evaluators to score a batch concurrently.
    """

    def __init__(
        self,
        command: list[str],
        timeout: float = 60.0,
        capacity: Budget | None = None,
    ):
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        self.command = list(command)
        self.timeout = timeout
        self.capacity = capacity
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue | None = None
        self._next_id = 0
        self._lock = threading.Lock()
        self.name: str | None = None

    # -- transport ---------------------------------------------------------
    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluationError(f"cannot start bridge {self.command!r}: {exc}") from exc
        self._lines = queue.Queue()

        def _pump(stream, sink):
            for line in stream:
                sink.put(line)
            sink.put(None)

        threading.Thread(
            target=_pump, args=(self._proc.stdout, self._lines), daemon=True
        ).start()
        reply = self._roundtrip({"type": "hello", "protocol": PROTOCOL_VERSION})
        if reply.get("type") != "hello" or reply.get("protocol") != PROTOCOL_VERSION:
            raise BridgeProtocolError(f"bad handshake reply: {reply}")
        self.name = reply.get("name")

    def _send(self, message: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise BridgeProtocolError("bridge process closed its stdin") from exc

    def _recv(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise BridgeProtocolError(
                f"bridge did not answer within {self.timeout}s"
            ) from None
        if line is None:
            raise BridgeProtocolError("bridge closed its stdout")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"bridge sent invalid JSON: {line!r}") from exc

    def _roundtrip(self, message: dict) -> dict:
        self._send(message)
        return self._recv()

    # -- evaluator interface ------------------------------------------------
    def predict(self, train: Table, ctx: ContextSelection, query_x: np.ndarray) -> np.ndarray:
        ctx.check_against(train)
        self._check_capacity(ctx)
        with self._lock:
            self._ensure_started()
            self._next_id += 1
            request_id = self._next_id
            request = {
                "type": "predict",
                "id": request_id,
                "context_x": train.x[ctx.sample_indices][:, ctx.feature_indices].tolist(),
                "context_y": train.y[ctx.sample_indices].tolist(),
                "query_x": np.asarray(query_x, dtype=np.float64)[
                    :, ctx.feature_indices
                ].tolist(),
                "n_classes": train.class_count,
            }
            reply = self._roundtrip(request)
        if reply.get("id") != request_id:
            raise BridgeProtocolError(
                f"response id {reply.get('id')} does not match request {request_id}"
            )
        if reply.get("type") == "error":
            message = str(reply.get("message", ""))
            if "capacity" in message.lower():
                raise ContextCapacityError(f"bridge: {message}")
            raise EvaluationError(f"bridge: {message}")
        if reply.get("type") != "proba":
            raise BridgeProtocolError(f"unexpected response type: {reply.get('type')}")
        return validate_proba(reply.get("proba"), len(request["query_x"]), train.class_count)

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            self._send({"type": "bye"})
            self._proc.wait(timeout=self.timeout)
        except (BridgeProtocolError, subprocess.TimeoutExpired):
            self._proc.kill()
        finally:
            self._proc = None


class BridgePool(Evaluator):
    """Several bridge connections behind one evaluator.

    Each connection keeps one request in flight; concurrent subset
    scorings borrow a free connection, so up to ``connections`` requests
    run in parallel across child processes.
    """

    def __init__(
        self,
        command: list[str],
        connections: int = 2,
        timeout: float = 60.0,
        capacity: Budget | None = None,
    ):
        if connections < 1:
            raise ValueError("connections must be >= 1")
        self.capacity = capacity
        self._bridges = [
            BridgeEvaluator(command, timeout=timeout, capacity=capacity)
            for _ in range(connections)
        ]
        self._idle: queue.Queue = queue.Queue()
        for bridge in self._bridges:
            self._idle.put(bridge)

    def predict(self, train: Table, ctx: ContextSelection, query_x: np.ndarray) -> np.ndarray:
        bridge = self._idle.get()
        try:
            return bridge.predict(train, ctx, query_x)
        finally:
            self._idle.put(bridge)

    def close(self) -> None:
        for bridge in self._bridges:
            bridge.close()


def score_context(
    evaluator: Evaluator, train: Table, ctx: ContextSelection, query: Table
) -> np.ndarray:
    """Class probabilities for every query row given the context."""
    return evaluator.predict(train, ctx, query.x)


def score_subset(
    evaluator: Evaluator,
    train: Table,
    ctx: ContextSelection,
    val: Table,
    metric: str = "balanced_accuracy",
) -> float:
    """Validation performance of one context, in [0, 1]."""
    return evaluator.score(train, ctx, val, metric)
