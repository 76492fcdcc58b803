"""Black-box classifier and outlier-scorer interfaces, reference
implementations, an external model-server bridge, and JSON persistence.

Batch prediction is the primitive: the optimizer evaluates whole
populations, so every model accepts an (n, L, C) array or a list of
instances. The reference models are immutable after fitting and safe to
share across workers; the bridge is single-consumer.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence, Union, runtime_checkable

import numpy as np

from .core import DimensionMismatchError, LabeledDataset, TimeSeriesInstance

MODEL_FORMAT_VERSION = 1

Batch = Union[np.ndarray, Sequence[TimeSeriesInstance]]


class EmptyClassError(ValueError):
    """A class id in range has no training instances."""


class DegenerateDataError(ValueError):
    """Training data carries too little variation to fit the model."""


class BridgeProtocolError(RuntimeError):
    """The child model server violated the line protocol."""


class BridgeTimeoutError(BridgeProtocolError):
    """The child did not answer within the allotted time."""


class UnknownModelTypeError(ValueError):
    pass


class VersionMismatchError(ValueError):
    pass


class CorruptFileError(ValueError):
    pass


@runtime_checkable
class ClassifierModel(Protocol):
    """predict_proba returns one probability vector per instance, each of
    length n_classes, nonnegative, summing to 1 within 1e-6, and
    deterministic for fixed inputs."""

    n_classes: int

    def predict_proba(self, batch: Batch) -> np.ndarray: ...


@runtime_checkable
class OutlierScorer(Protocol):
    """reconstruction_errors returns a nonnegative error per instance;
    e_max is fixed at fit time and strictly positive."""

    e_max: float

    def reconstruction_errors(self, batch: Batch) -> np.ndarray: ...


def batch_values(batch: Batch, length: int, channels: int) -> np.ndarray:
    """Stack a batch into an (n, L, C) float array, checking dimensions."""
    if isinstance(batch, np.ndarray):
        arr = np.asarray(batch, dtype=float)
        if arr.ndim == 2:
            arr = arr[None, :, :]
    else:
        arr = np.stack([inst.values for inst in batch])
    if arr.ndim != 3 or arr.shape[1] != length or arr.shape[2] != channels:
        raise DimensionMismatchError(
            f"batch shape {arr.shape} does not match model ({length}, {channels})"
        )
    return arr


def predict_labels(model: ClassifierModel, batch: Batch) -> np.ndarray:
    """Predicted class per instance; argmax ties break to the lowest id."""
    return np.argmax(model.predict_proba(batch), axis=1)


@dataclass(frozen=True)
class NearestCentroidClassifier:
    """Softmax over negative centroid distances; the desk-scale stand-in for
    a trained deep classifier."""

    centroids: np.ndarray  # (K, L, C)
    temperature: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "centroids", np.asarray(self.centroids, dtype=float))

    @property
    def n_classes(self) -> int:
        return self.centroids.shape[0]

    @property
    def length(self) -> int:
        return self.centroids.shape[1]

    @property
    def channels(self) -> int:
        return self.centroids.shape[2]

    def predict_proba(self, batch: Batch) -> np.ndarray:
        arr = batch_values(batch, self.length, self.channels)
        diffs = arr[:, None, :, :] - self.centroids[None, :, :, :]
        dists = np.sqrt((diffs * diffs).sum(axis=(2, 3)))
        logits = -dists / self.temperature
        logits -= logits.max(axis=1, keepdims=True)
        expd = np.exp(logits)
        return expd / expd.sum(axis=1, keepdims=True)


def fit_nearest_centroid(
    train: LabeledDataset, temperature: float = 1.0
) -> NearestCentroidClassifier:
    """Per-class mean centroids. Every class id below class_count must be
    populated."""
    values = train.values_array()
    labels = train.labels_array()
    centroids = np.empty((train.class_count, train.length, train.channels))
    for k in range(train.class_count):
        members = values[labels == k]
        if members.shape[0] == 0:
            raise EmptyClassError(f"class {k} has no training instances")
        centroids[k] = members.mean(axis=0)
    return NearestCentroidClassifier(centroids, temperature)


@dataclass(frozen=True)
class KnnClassifier:
    """Vote fractions among the k nearest stored instances (flattened l2,
    distance ties to the lower index)."""

    train_values: np.ndarray  # (n, L, C)
    train_labels: np.ndarray  # (n,)
    k: int = 5
    n_classes: int = 0  # 0 means "infer as max label + 1"

    def __post_init__(self):
        values = np.asarray(self.train_values, dtype=float)
        labels = np.asarray(self.train_labels, dtype=int)
        if self.k < 1 or self.k > values.shape[0]:
            raise ValueError(f"k={self.k} outside 1..{values.shape[0]}")
        k_classes = self.n_classes if self.n_classes else int(labels.max()) + 1
        object.__setattr__(self, "train_values", values)
        object.__setattr__(self, "train_labels", labels)
        object.__setattr__(self, "n_classes", k_classes)

    @property
    def length(self) -> int:
        return self.train_values.shape[1]

    @property
    def channels(self) -> int:
        return self.train_values.shape[2]

    def predict_proba(self, batch: Batch) -> np.ndarray:
        arr = batch_values(batch, self.length, self.channels)
        diffs = arr[:, None, :, :] - self.train_values[None, :, :, :]
        dists = np.sqrt((diffs * diffs).sum(axis=(2, 3)))
        # stable sort keeps equidistant neighbors in index order
        order = np.argsort(dists, axis=1, kind="stable")[:, : self.k]
        votes = self.train_labels[order]
        proba = np.zeros((arr.shape[0], self.n_classes))
        for row in range(votes.shape[0]):
            proba[row] = np.bincount(votes[row], minlength=self.n_classes) / self.k
        return proba


def fit_knn(train: LabeledDataset, k: int = 5) -> KnnClassifier:
    return KnnClassifier(train.values_array(), train.labels_array(), k, train.class_count)


@dataclass(frozen=True)
class LinearReconstructionScorer:
    """Reconstruction error against the top-d principal subspace of the
    training data; the desk-scale stand-in for a trained autoencoder."""

    length: int
    channels: int
    mean: np.ndarray  # (L*C,)
    components: np.ndarray  # (d, L*C), orthonormal rows
    e_max: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        comps = np.asarray(self.components, dtype=float)
        if comps.ndim != 2 or comps.shape[1] != mean.shape[0]:
            raise ValueError("components must be (d, L*C) matching the mean vector")
        gram = comps @ comps.T
        if not np.allclose(gram, np.eye(comps.shape[0]), atol=1e-8):
            raise ValueError("component rows must be orthonormal")
        if self.e_max <= 0:
            raise ValueError("e_max must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)

    def reconstruct(self, batch: Batch) -> np.ndarray:
        """Projection of each instance onto the fitted affine subspace."""
        arr = batch_values(batch, self.length, self.channels)
        flat = arr.reshape(arr.shape[0], -1) - self.mean[None, :]
        recon = flat @ self.components.T @ self.components + self.mean[None, :]
        return recon.reshape(arr.shape)

    def reconstruction_errors(self, batch: Batch) -> np.ndarray:
        arr = batch_values(batch, self.length, self.channels)
        resid = arr - self.reconstruct(arr)
        return np.sqrt((resid * resid).sum(axis=(1, 2)))


def fit_linear_scorer(train: LabeledDataset, n_components: int | None = None) -> LinearReconstructionScorer:
    """Top-d principal directions of the flattened, centered training split.

    Component signs follow a fixed convention (first nonzero coordinate
    positive) so refitting permuted data yields the identical state. When
    the data sits exactly on the fitted subspace, e_max degenerates to 0
    and is replaced by 1.
    """
    flat = train.values_array().reshape(len(train), -1)
    dims = flat.shape[1]
    d = n_components if n_components is not None else min(8, dims - 1)
    if not 1 <= d < dims:
        raise ValueError(f"n_components={d} outside 1..{dims - 1}")
    if np.unique(flat, axis=0).shape[0] < 2:
        raise DegenerateDataError("training split has fewer than 2 distinct instances")
    mean = flat.mean(axis=0)
    centered = flat - mean[None, :]
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    if d > vt.shape[0]:
        raise DegenerateDataError(
            f"training split supports only {vt.shape[0]} components, {d} requested"
        )
    comps = vt[:d].copy()
    for row in comps:
        nonzero = np.flatnonzero(np.abs(row) > 1e-12)
        if nonzero.size and row[nonzero[0]] < 0:
            row *= -1.0
    scorer = LinearReconstructionScorer(train.length, train.channels, mean, comps, e_max=1.0)
    errors = scorer.reconstruction_errors(train.values_array())
    e_max = float(errors.max())
    if e_max < 1e-8:
        e_max = 1.0
    return LinearReconstructionScorer(train.length, train.channels, mean, comps, e_max)


def reconstruction_error(scorer: OutlierScorer, x: TimeSeriesInstance) -> float:
    """Flattened l2 distance between one instance and its reconstruction."""
    return float(scorer.reconstruction_errors([x])[0])


class ExternalModelBridge:
    """Classifier served by a child process speaking newline-delimited JSON
    on its standard streams.

    Handshake: {"op": "info"} -> {"classes": K, "length": L, "channels": C}.
    Prediction: {"op": "predict_proba", "instances": [...]} ->
    {"proba": [[...], ...]} where each instance is C channel arrays of L
    reals. One request is in flight at a time; callers must serialize
    access (the CLI forces --jobs 1 for bridge-backed runs).
    """

    def __init__(self, command: str | Sequence[str], timeout: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self.n_classes = 0
        self.length = 0
        self.channels = 0

    def start(self) -> "ExternalModelBridge":
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        threading.Thread(target=self._pump, daemon=True).start()
        info = self._request({"op": "info"})
        try:
            self.n_classes = int(info["classes"])
            self.length = int(info["length"])
            self.channels = int(info["channels"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BridgeProtocolError(f"bad handshake response: {info!r}") from exc
        return self

    def _pump(self):
        assert self._proc is not None and self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # child stdout closed

    def _request(self, payload: dict) -> dict:
        if self._proc is None:
            raise BridgeProtocolError("bridge not started")
        with self._lock:
            if self._proc.poll() is not None:
                raise BridgeProtocolError("child process has exited")
            assert self._proc.stdin is not None
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise BridgeTimeoutError(f"no response within {self.timeout}s") from None
        if line is None:
            raise BridgeProtocolError("child closed its stdout")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"malformed JSON from child: {line!r}") from exc
        if not isinstance(response, dict):
            raise BridgeProtocolError(f"expected a JSON object, got {response!r}")
        return response

    def predict_proba(self, batch: Batch) -> np.ndarray:
        arr = batch_values(batch, self.length, self.channels)
        instances = [inst.T.tolist() for inst in arr]  # C arrays of L reals
        response = self._request({"op": "predict_proba", "instances": instances})
        proba = np.asarray(response.get("proba"), dtype=float)
        if proba.shape != (arr.shape[0], self.n_classes):
            raise BridgeProtocolError(
                f"proba shape {proba.shape} != {(arr.shape[0], self.n_classes)}"
            )
        sums = proba.sum(axis=1)
        if np.any(sums < 0.99) or np.any(sums > 1.01) or np.any(proba < 0):
            raise BridgeProtocolError("probability vectors outside tolerance")
        return proba / sums[:, None]

    def close(self):
        if self._proc is not None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
            self._proc = None

    def __enter__(self) -> "ExternalModelBridge":
        return self.start()

    def __exit__(self, *exc):
        self.close()


def bridge_predict(bridge: ExternalModelBridge, batch: Batch) -> np.ndarray:
    return bridge.predict_proba(batch)


_MODEL_TAGS = {
    NearestCentroidClassifier: "nearest_centroid",
    KnnClassifier: "knn",
    LinearReconstructionScorer: "linear_scorer",
}


def save_model(model, path) -> None:
    """Write a self-describing JSON model file."""
    tag = _MODEL_TAGS.get(type(model))
    if tag is None:
        raise UnknownModelTypeError(f"cannot persist {type(model).__name__}")
    if tag == "nearest_centroid":
        payload = {
            "centroids": model.centroids.tolist(),
            "temperature": model.temperature,
        }
    elif tag == "knn":
        payload = {
            "train_values": model.train_values.tolist(),
            "train_labels": model.train_labels.tolist(),
            "k": model.k,
            "classes": model.n_classes,
        }
    else:
        payload = {
            "length": model.length,
            "channels": model.channels,
            "mean": model.mean.tolist(),
            "components": model.components.tolist(),
            "e_max": model.e_max,
        }
    doc = {"format_version": MODEL_FORMAT_VERSION, "model_type": tag, "payload": payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path):
    """Inverse of save_model; predictions round-trip exactly."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or "model_type" not in doc or "payload" not in doc:
        raise CorruptFileError(f"{path}: missing model fields")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format_version {doc.get('format_version')!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    tag = doc["model_type"]
    payload = doc["payload"]
    try:
        if tag == "nearest_centroid":
            return NearestCentroidClassifier(
                np.asarray(payload["centroids"], dtype=float), payload["temperature"]
            )
        if tag == "knn":
            return KnnClassifier(
                np.asarray(payload["train_values"], dtype=float),
                np.asarray(payload["train_labels"], dtype=int),
                payload["k"],
                payload["classes"],
            )
        if tag == "linear_scorer":
            return LinearReconstructionScorer(
                payload["length"],
                payload["channels"],
                np.asarray(payload["mean"], dtype=float),
                np.asarray(payload["components"], dtype=float),
                payload["e_max"],
            )
    except (KeyError, TypeError) as exc:
        raise CorruptFileError(f"{path}: bad payload for {tag!r}") from exc
    raise UnknownModelTypeError(f"{path}: unknown model_type {tag!r}")
