"""Early-indicator analysis: does early attention predict final performance better than early losses?"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from awml.errors import AnalysisError

FINAL_POINTS = 4       # final performance = mean of the last four validation losses
L2_PENALTY = 1e-3
CLASSES = ("high", "medium", "low")


@dataclass
class IndicatorRun:
    behavior: str
    val_steps: np.ndarray
    val_losses: np.ndarray
    f_anim: np.ndarray      # (steps,) 1 when an animate agent is visible
    f_rand: np.ndarray      # (steps,) 1 when a noise agent is visible
    label: int = -1         # index into CLASSES


@dataclass
class IndicatorDataset:
    runs: list[IndicatorRun] = field(default_factory=list)

    @property
    def behaviors(self) -> list[str]:
        return sorted({r.behavior for r in self.runs})

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.runs])


def tertile_labels(final_losses: Sequence[float]) -> np.ndarray:
    """Three equal-sized classes by final loss: 0 = high performance (lowest loss)."""
    x = np.asarray(final_losses, dtype=np.float64)
    if len(x) < 3:
        raise AnalysisError("need at least 3 runs per behavior for tertiles")
    order = np.argsort(x, kind="stable")
    labels = np.empty(len(x), dtype=np.int64)
    for c, idx in enumerate(np.array_split(order, 3)):
        labels[idx] = c
    return labels


def assign_labels(ds: IndicatorDataset) -> IndicatorDataset:
    for b in ds.behaviors:
        runs = [r for r in ds.runs if r.behavior == b]
        final = [float(np.mean(r.val_losses[-FINAL_POINTS:])) for r in runs]
        for r, lab in zip(runs, tertile_labels(final)):
            r.label = int(lab)
    return ds


def perf_features(run: IndicatorRun, T: int) -> np.ndarray:
    return run.val_losses[run.val_steps <= T]


def attention_features(run: IndicatorRun, T: int, B: int = 10) -> np.ndarray:
    """(f_anim, f_rand) per bucket over steps [0, T), interleaved."""
    if T < B:
        raise AnalysisError("T must cover at least one step per bucket")
    edges = np.linspace(0, T, B + 1).astype(np.int64)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        out.append(run.f_anim[lo:hi].mean())
        out.append(run.f_rand[lo:hi].mean())
    return np.array(out)


def _onehot(ds: IndicatorDataset) -> np.ndarray:
    bs = ds.behaviors
    return np.array([[1.0 if r.behavior == b else 0.0 for b in bs] for r in ds.runs])


def loo_accuracy(X: np.ndarray, y: np.ndarray, penalty: float = L2_PENALTY) -> float:
    """Leave-one-run-out accuracy of an L2-penalized multinomial logistic regression."""
    n = len(y)
    hits = 0
    for i in range(n):
        tr = np.arange(n) != i
        ytr = y[tr]
        if len(np.unique(ytr)) == 1:
            hits += int(ytr[0] == y[i])
            continue
        scaler = StandardScaler().fit(X[tr])
        clf = LogisticRegression(C=1.0 / penalty, max_iter=5000)
        clf.fit(scaler.transform(X[tr]), ytr)
        hits += int(clf.predict(scaler.transform(X[i:i + 1]))[0] == y[i])
    return hits / n


def early_indicator(ds: IndicatorDataset, T: int, B: int = 10) -> dict[str, float]:
    y = ds.labels
    if np.any(y < 0):
        raise AnalysisError("dataset has unlabeled runs; call assign_labels first")
    chi = _onehot(ds)
    P = np.array([perf_features(r, T) for r in ds.runs])
    if P.ndim != 2 or P.shape[1] == 0:
        raise AnalysisError(f"no validation points at or before T={T}")
    A = np.array([attention_features(r, T, B) for r in ds.runs])
    return {"acc_PERF": loo_accuracy(np.hstack([P, chi]), y),
            "acc_ATT": loo_accuracy(np.hstack([A, chi]), y)}
