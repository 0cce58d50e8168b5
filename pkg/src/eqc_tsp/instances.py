"""Euclidean TSP instances and datasets.

Instances are sampled uniformly in the unit square. Every instance carries its
own 64-bit seed derived from ``(dataset seed, index)`` so any single instance
can be regenerated without replaying the rest of the dataset.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ROLES = ("train", "validation", "test")


class InstanceError(ValueError):
    """Invalid instance size or degenerate geometry."""


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed or failed validation."""


def derive_seed(seed: int, index: int) -> int:
    """Per-instance 64-bit seed from the dataset seed and the instance index."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1))
    # exact symmetry regardless of summation order
    d = np.triu(d, 1)
    return d + d.T


@dataclass(frozen=True, eq=False)
class TspInstance:
    """A symmetric Euclidean instance.

    ``d`` holds Euclidean distances and ``e = arctan(d)`` the scaled edge
    weights fed to the ZZ rotations. ``scale`` is the factor applied to the
    original unit-square coordinates, or ``None`` when unscaled.
    """

    id: str
    coords: np.ndarray
    seed: int = 0
    scale: float | None = None
    d: np.ndarray = field(init=False, repr=False)
    e: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise InstanceError(f"coords must have shape (n, 2), got {coords.shape}")
        if coords.shape[0] < 2:
            raise InstanceError(f"instance needs n >= 2 nodes, got {coords.shape[0]}")
        if not np.all(np.isfinite(coords)):
            raise InstanceError("coords must be finite")
        coords.setflags(write=False)
        d = pairwise_distances(coords)
        e = np.arctan(d)
        d.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "e", e)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def max_edge(self) -> float:
        return float(self.d.max())

    def subgraph(self, m: int) -> "TspInstance":
        """Induced subgraph on the first ``m`` nodes."""
        if not 2 <= m <= self.n:
            raise InstanceError(f"subgraph size must be in [2, {self.n}], got {m}")
        return TspInstance(f"{self.id}[:{m}]", self.coords[:m], self.seed, self.scale)

    def permuted(self, perm: Sequence[int]) -> "TspInstance":
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm)
        return TspInstance(f"{self.id}~perm", self.coords[perm], self.seed, self.scale)

    def __eq__(self, other):
        if not isinstance(other, TspInstance):
            return NotImplemented
        return (
            self.id == other.id
            and self.seed == other.seed
            and self.scale == other.scale
            and np.array_equal(self.coords, other.coords)
        )

    def to_json(self) -> dict:
        out = {"id": self.id, "n": self.n, "seed": self.seed}
        if self.scale is not None:
            out["scale"] = repr(float(self.scale))
        # repr() of a float is the shortest string that round-trips exactly
        out["coords"] = [[repr(float(x)), repr(float(y))] for x, y in self.coords]
        return out


def random_instance(n: int, seed: int, id: str | None = None) -> TspInstance:
    if n < 2:
        raise InstanceError(f"instance needs n >= 2 nodes, got {n}")
    coords = make_rng(seed).random((n, 2))
    return TspInstance(id or f"tsp{n}-{seed:016x}", coords, seed)


def rescale_to_max_edge(inst: TspInstance, target: float = math.sqrt(2.0)) -> TspInstance:
    """Scale coordinates so that the longest edge has length ``target``."""
    if not target > 0:
        raise InstanceError(f"target must be positive, got {target}")
    dmax = inst.max_edge()
    if dmax == 0.0:
        raise InstanceError(f"instance {inst.id} is degenerate: all distances are zero")
    factor = target / dmax
    base = 1.0 if inst.scale is None else inst.scale
    return TspInstance(inst.id, inst.coords * factor, inst.seed, base * factor)


@dataclass(frozen=True)
class Reference:
    """A reference tour for one instance, with the solver that produced it."""

    length: float
    tour: tuple[int, ...]
    solver: str

    @property
    def exact(self) -> bool:
        return self.solver in ("brute", "held-karp")


@dataclass(frozen=True, eq=False)
class Dataset:
    role: str
    seed: int
    instances: tuple[TspInstance, ...]
    optimal: tuple[Reference, ...] | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise DatasetFormatError(f"role must be one of {ROLES}, got {self.role!r}")
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.optimal is not None:
            object.__setattr__(self, "optimal", tuple(self.optimal))
            if len(self.optimal) != len(self.instances):
                raise DatasetFormatError(
                    f"optimal has {len(self.optimal)} entries for {len(self.instances)} instances"
                )

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.role == other.role
            and self.seed == other.seed
            and self.instances == other.instances
            and self.optimal == other.optimal
        )

    @property
    def n(self) -> int:
        return self.instances[0].n

    @property
    def size(self) -> int:
        return len(self.instances)

    def reference_lengths(self) -> np.ndarray:
        if self.optimal is None:
            raise DatasetFormatError(f"{self.role} dataset has no reference lengths")
        return np.array([r.length for r in self.optimal])

    def with_references(self, refs: Sequence[Reference]) -> "Dataset":
        return Dataset(self.role, self.seed, self.instances, tuple(refs))

    def head(self, k: int) -> "Dataset":
        refs = None if self.optimal is None else self.optimal[:k]
        return Dataset(self.role, self.seed, self.instances[:k], refs)

    def to_json(self) -> dict:
        out = {
            "role": self.role,
            "seed": self.seed,
            "n": self.n,
            "instances": [inst.to_json() for inst in self.instances],
        }
        if self.optimal is not None:
            out["optimal"] = [
                {"length": repr(r.length), "tour": list(r.tour), "solver": r.solver}
                for r in self.optimal
            ]
        return out


def default_size(role: str, n: int) -> int:
    """Dataset sizes used by default: 500 train, 1000 test, validation by size band."""
    if role == "train":
        return 500
    if role == "test":
        return 1000
    if n <= 15:
        return 100
    if n <= 30:
        return 50
    return 30


def generate(n: int, count: int, seed: int, role: str = "test") -> Dataset:
    """Generate ``count`` independent TSP-``n`` instances."""
    if n < 2:
        raise InstanceError(f"instance needs n >= 2 nodes, got {n}")
    if count < 1:
        raise InstanceError(f"count must be >= 1, got {count}")
    insts = []
    for i in range(count):
        s = derive_seed(seed, i)
        insts.append(random_instance(n, s, id=f"{role}-{n}-{seed}-{i}"))
    return Dataset(role, int(seed), tuple(insts))


def _parse_float(value, where: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise DatasetFormatError(f"{where}: not a number: {value!r}") from None
    if not math.isfinite(x):
        raise DatasetFormatError(f"{where}: non-finite value {value!r}")
    return x


def _reject_constant(name):
    raise DatasetFormatError(f"non-finite JSON constant {name}")


def instance_from_json(obj: dict, where: str = "instance") -> TspInstance:
    for key in ("id", "n", "coords"):
        if key not in obj:
            raise DatasetFormatError(f"{where}: missing field {key!r}")
    coords = obj["coords"]
    if not isinstance(coords, list):
        raise DatasetFormatError(f"{where}.coords: expected a list")
    n = obj["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise DatasetFormatError(f"{where}.n: expected an integer, got {n!r}")
    if len(coords) != n:
        raise DatasetFormatError(f"{where}: n={n} but {len(coords)} coords given")
    xy = np.empty((n, 2))
    for i, pt in enumerate(coords):
        if not isinstance(pt, list) or len(pt) != 2:
            raise DatasetFormatError(f"{where}.coords[{i}]: expected [x, y]")
        xy[i, 0] = _parse_float(pt[0], f"{where}.coords[{i}][0]")
        xy[i, 1] = _parse_float(pt[1], f"{where}.coords[{i}][1]")
    scale = obj.get("scale")
    if scale is not None:
        scale = _parse_float(scale, f"{where}.scale")
    seed = obj.get("seed", 0)
    try:
        return TspInstance(str(obj["id"]), xy, int(seed), scale)
    except InstanceError as exc:
        raise DatasetFormatError(f"{where}: {exc}") from None


def dataset_from_json(obj: dict) -> Dataset:
    from .solvers import tour_length, validate_tour, TourError

    for key in ("role", "instances"):
        if key not in obj:
            raise DatasetFormatError(f"dataset: missing field {key!r}")
    raw = obj["instances"]
    if not isinstance(raw, list) or not raw:
        raise DatasetFormatError("dataset.instances: expected a non-empty list")
    insts = tuple(instance_from_json(o, f"instances[{i}]") for i, o in enumerate(raw))
    n = obj.get("n")
    if n is not None and any(inst.n != n for inst in insts):
        raise DatasetFormatError(f"dataset.n={n} disagrees with an instance size")
    refs = None
    if obj.get("optimal") is not None:
        refs = []
        for i, (r, inst) in enumerate(zip(obj["optimal"], insts)):
            where = f"optimal[{i}]"
            try:
                tour = tuple(int(v) for v in r["tour"])
                length = _parse_float(r["length"], f"{where}.length")
                solver = str(r["solver"])
            except (KeyError, TypeError) as exc:
                raise DatasetFormatError(f"{where}: malformed reference ({exc})") from None
            try:
                validate_tour(inst.n, tour)
            except TourError as exc:
                raise DatasetFormatError(f"{where}.tour: {exc}") from None
            if abs(tour_length(inst, tour) - length) > 1e-9:
                raise DatasetFormatError(f"{where}.length does not match its tour")
            refs.append(Reference(length, tour, solver))
    try:
        return Dataset(obj["role"], int(obj.get("seed", 0)), insts, refs)
    except DatasetFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"dataset: {exc}") from None


def dumps(ds: Dataset) -> str:
    return json.dumps(ds.to_json(), separators=(",", ":"))


def save(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps(ds), encoding="utf-8")


def loads(text: str) -> Dataset:
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise DatasetFormatError("dataset file must contain a JSON object")
    return dataset_from_json(obj)


def load(path: str | Path) -> Dataset:
    return loads(Path(path).read_text(encoding="utf-8"))
