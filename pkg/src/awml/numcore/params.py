"""Named flat parameter collections and the utilities that act on them."""
from __future__ import annotations

from collections.abc import Iterator, Mapping

import numpy as np

from awml.errors import ConfigError, SchemaError

DTYPE = np.float64


class ParamSet:
    """Ordered mapping name -> ndarray.

    Insertion order is the canonical order: it is used for flattening,
    checkpoints and checksums, so two sets built by the same code agree
    across processes.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[str, np.ndarray] | None = None):
        self._entries: dict[str, np.ndarray] = {}
        if entries is not None:
            for name, value in entries.items():
                self[name] = value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __setitem__(self, name: str, value) -> None:
        arr = np.asarray(value)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DTYPE)
        self._entries[name] = arr

    def __contains__(self, name: object) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}{tuple(v.shape)}" for k, v in self._entries.items())
        return f"ParamSet({inner})"

    def keys(self):
        return self._entries.keys()

    def items(self):
        return self._entries.items()

    def values(self):
        return self._entries.values()

    @property
    def schema(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple((k, tuple(v.shape)) for k, v in self._entries.items())

    @property
    def total_len(self) -> int:
        return int(sum(v.size for v in self._entries.values()))

    def copy(self) -> ParamSet:
        return ParamSet({k: v.copy() for k, v in self._entries.items()})

    def astype(self, dtype) -> ParamSet:
        return ParamSet({k: v.astype(dtype) for k, v in self._entries.items()})

    @property
    def dtype(self):
        for v in self._entries.values():
            return v.dtype
        return np.dtype(DTYPE)

    def zeros_like(self) -> ParamSet:
        return ParamSet({k: np.zeros_like(v) for k, v in self._entries.items()})

    def flat(self) -> np.ndarray:
        if not self._entries:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate([v.ravel() for v in self._entries.values()])

    def load_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec)
        if vec.size != self.total_len:
            raise SchemaError(f"flat vector has {vec.size} values, expected {self.total_len}")
        i = 0
        for v in self._entries.values():
            v[...] = vec[i:i + v.size].reshape(v.shape)
            i += v.size

    def assign(self, other: ParamSet) -> None:
        """Overwrite values in place with those of `other` (same schema)."""
        check_schema(self, other)
        for k, v in self._entries.items():
            v[...] = other[k]

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for k, v in self._entries.items():
            h.update(k.encode())
            h.update(np.ascontiguousarray(v, dtype="<f8").tobytes())
        return h.hexdigest()

    def equal(self, other: ParamSet) -> bool:
        """Bitwise equality including schema."""
        if self.schema != other.schema:
            return False
        return all(np.array_equal(v, other[k]) for k, v in self._entries.items())


def check_schema(a: ParamSet, b: ParamSet) -> None:
    if a.schema != b.schema:
        raise SchemaError(f"schema mismatch: {a.schema} vs {b.schema}")


def ema_blend(old: ParamSet, new: ParamSet, gamma: float) -> ParamSet:
    """gamma * old + (1 - gamma) * new, coordinatewise."""
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    check_schema(old, new)
    return ParamSet({k: gamma * v + (1.0 - gamma) * new[k] for k, v in old.items()})


def ema_blend_(old: ParamSet, new: ParamSet, gamma: float) -> None:
    """In-place variant of `ema_blend` (same arithmetic, no allocation per entry)."""
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    check_schema(old, new)
    for k, v in old.items():
        v *= gamma
        v += (1.0 - gamma) * new[k]


def distance(a: ParamSet, b: ParamSet) -> float:
    """Euclidean distance between two parameter sets viewed as flat vectors."""
    check_schema(a, b)
    return float(np.sqrt(sum(np.sum((v - b[k]) ** 2) for k, v in a.items())))


def snapshot(p: ParamSet) -> ParamSet:
    return p.copy()


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
