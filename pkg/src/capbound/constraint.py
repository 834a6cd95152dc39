"""Two-dimensional constraints given by finite forbidden-window rules.

A constraint is an alphabet together with a list of small forbidden
patterns; a configuration is valid when no shifted copy of a forbidden
pattern appears inside it. Built-in families: runlength-limited rll(d, k)
in both axes, the "no isolated bit" constraint, and the free shift.
Declared symmetry flags (reflect / transpose / complement) can be checked
exhaustively on small square windows before they are trusted.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import Configuration, IndexSet, rect

SYMMETRY_FLAGS = ("reflect", "transpose", "complement")


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class ForbiddenWindow:
    """A pattern that must not occur anywhere inside a valid configuration."""

    shape: IndexSet
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.shape) == 0:
            raise ConstraintError("forbidden window must be non-empty")
        if len(self.values) != len(self.shape):
            raise ConstraintError("window values must cover exactly the shape")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    def normalized(self) -> "ForbiddenWindow":
        """Shift so the bounding-box corner sits at the origin."""
        i0 = min(i for i, _ in self.shape)
        j0 = min(j for _, j in self.shape)
        return ForbiddenWindow(self.shape.shift(-i0, -j0), self.values)

    def as_configuration(self) -> Configuration:
        return Configuration(self.shape, self.values)

    def key(self) -> tuple:
        w = self.normalized()
        return (w.shape.cells, w.values)


def _segment(values, horizontal: bool) -> ForbiddenWindow:
    vals = tuple(values)
    if horizontal:
        cells = [(0, j) for j in range(len(vals))]
    else:
        cells = [(i, 0) for i in range(len(vals))]
    return ForbiddenWindow(IndexSet(cells), vals)


@dataclass(frozen=True)
class ConstraintSpec:
    """Alphabet size, forbidden windows, and declared symmetry flags."""

    name: str
    alphabet_size: int
    forbidden: tuple[ForbiddenWindow, ...]
    symmetry: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ConstraintError("alphabet size must be at least 2")
        object.__setattr__(self, "forbidden", tuple(self.forbidden))
        object.__setattr__(self, "symmetry", frozenset(self.symmetry))
        for flag in self.symmetry:
            if flag not in SYMMETRY_FLAGS:
                raise ConstraintError(f"unknown symmetry flag {flag!r}")
        if "complement" in self.symmetry and self.alphabet_size != 2:
            raise ConstraintError("complement symmetry requires a binary alphabet")
        for w in self.forbidden:
            if any(v < 0 or v >= self.alphabet_size for v in w.values):
                raise ConstraintError("window value outside the alphabet")

    def digest(self) -> str:
        """Structural identity: alphabet + windows + flags (name excluded)."""
        payload = {
            "alphabet_size": self.alphabet_size,
            "forbidden": sorted(
                [list(map(list, w.key()[0])), list(w.key()[1])] for w in self.forbidden
            ),
            "symmetry": sorted(self.symmetry),
        }
        blob = json.dumps(payload, separators=(",", ":"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def max_window_height(self) -> int:
        heights = [max(i for i, _ in w.shape) - min(i for i, _ in w.shape) + 1 for w in self.forbidden]
        return max(heights, default=1)

    def max_window_width(self) -> int:
        widths = [max(j for _, j in w.shape) - min(j for _, j in w.shape) + 1 for w in self.forbidden]
        return max(widths, default=1)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "alphabet_size": self.alphabet_size,
            "forbidden": [
                {"cells": [list(c) for c in w.shape.cells], "values": list(w.values)}
                for w in self.forbidden
            ],
            "symmetry": sorted(self.symmetry),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ConstraintSpec":
        windows = tuple(
            ForbiddenWindow(IndexSet(tuple(map(tuple, w["cells"]))), tuple(w["values"]))
            for w in data.get("forbidden", ())
        )
        return cls(
            name=str(data.get("name", "custom")),
            alphabet_size=int(data["alphabet_size"]),
            forbidden=windows,
            symmetry=frozenset(data.get("symmetry", ())),
        )


def rll(d: int, k) -> ConstraintSpec:
    """Runlength-limited constraint in both axes: between consecutive 1s
    (per row and per column) at least d and at most k zeros."""
    inf = k is None or k == math.inf or k == "inf"
    if d < 0 or (not inf and int(k) <= d):
        raise ConstraintError(f"invalid rll parameters d={d}, k={k}")
    windows = []
    for m in range(d):
        seg = (1,) + (0,) * m + (1,)
        windows.append(_segment(seg, horizontal=True))
        windows.append(_segment(seg, horizontal=False))
    if not inf:
        zeros = (0,) * (int(k) + 1)
        windows.append(_segment(zeros, horizontal=True))
        windows.append(_segment(zeros, horizontal=False))
    kname = "inf" if inf else str(int(k))
    return ConstraintSpec(
        name=f"rll-{d}-{kname}",
        alphabet_size=2,
        forbidden=tuple(windows),
        symmetry=frozenset({"reflect", "transpose"}),
    )


def nib() -> ConstraintSpec:
    """No isolated bit: no cell may differ from all four of its neighbours."""
    plus = IndexSet([(0, 1), (1, 0), (1, 1), (1, 2), (2, 1)])
    # values aligned with canonical cell order; (1, 1) is the centre
    isolated_zero = ForbiddenWindow(plus, (1, 1, 0, 1, 1))
    isolated_one = ForbiddenWindow(plus, (0, 0, 1, 0, 0))
    return ConstraintSpec(
        name="nib",
        alphabet_size=2,
        forbidden=(isolated_zero, isolated_one),
        symmetry=frozenset({"reflect", "transpose", "complement"}),
    )


def unconstrained(alphabet_size: int = 2) -> ConstraintSpec:
    return ConstraintSpec(
        name="free",
        alphabet_size=alphabet_size,
        forbidden=(),
        symmetry=frozenset({"reflect", "transpose", "complement"})
        if alphabet_size == 2
        else frozenset({"reflect", "transpose"}),
    )


def make_builtin(name: str) -> ConstraintSpec:
    """Resolve a builtin constraint name: rll-d-k (k may be inf), nib, free."""
    name = name.strip().lower()
    if name in ("free", "unconstrained"):
        return unconstrained()
    if name in ("nib", "n.i.b."):
        return nib()
    if name.startswith("rll-"):
        parts = name.split("-")
        if len(parts) != 3:
            raise ConstraintError(f"bad rll name {name!r}; expected rll-d-k")
        d = int(parts[1])
        k = "inf" if parts[2] == "inf" else int(parts[2])
        return rll(d, k)
    raise ConstraintError(f"unknown builtin constraint {name!r}")


def is_valid(spec: ConstraintSpec, w: Configuration) -> bool:
    """True when no shifted forbidden window fits inside w with equal values."""
    vals = w.mapping()
    for v in vals.values():
        if v < 0 or v >= spec.alphabet_size:
            raise ConstraintError("symbol outside the alphabet")
    for window in spec.forbidden:
        anchor = window.shape.cells[0]
        rest = window.shape.cells
        for cell in vals:
            di, dj = cell[0] - anchor[0], cell[1] - anchor[1]
            hit = True
            for (ci, cj), need in zip(rest, window.values):
                got = vals.get((ci + di, cj + dj))
                if got is None or got != need:
                    hit = False
                    break
            if hit:
                return False
    return True


def _apply_transform(flag_kind: str, arr: np.ndarray, alphabet_size: int) -> np.ndarray:
    if flag_kind == "v":
        return arr[::-1, :]
    if flag_kind == "h":
        return arr[:, ::-1]
    if flag_kind == "transpose":
        return arr.T
    if flag_kind == "complement":
        return (alphabet_size - 1) - arr
    raise ValueError(flag_kind)


@dataclass
class SymmetryCheck:
    flag: str
    ok: bool
    checked: int
    exhaustive: bool
    counterexample: Configuration | None = None


def verify_symmetry(spec: ConstraintSpec, M: int = 3, sample_limit: int = 65536, seed: int = 0):
    """Check each declared symmetry flag on M-by-M configurations.

    Exhaustive when alphabet**(M*M) <= sample_limit, otherwise a seeded
    sample of that many configurations. Returns {flag: SymmetryCheck}.
    """
    q = spec.alphabet_size
    total = q ** (M * M)
    exhaustive = total <= sample_limit
    if exhaustive:
        codes = range(total)
        count = total
    else:
        rng = np.random.default_rng(seed)
        codes = [int(x) for x in rng.integers(0, total, size=sample_limit, dtype=np.uint64)]
        count = sample_limit

    transforms = {
        "reflect": ("v", "h"),
        "transpose": ("transpose",),
        "complement": ("complement",),
    }

    reports = {}
    for flag in sorted(spec.symmetry):
        ok = True
        witness = None
        for code in codes:
            digits = []
            c = code
            for _ in range(M * M):
                digits.append(c % q)
                c //= q
            arr = np.array(digits, dtype=int).reshape(M, M)
            w = Configuration(rect(M, M), arr.reshape(-1))
            base = is_valid(spec, w)
            for kind in transforms[flag]:
                tarr = _apply_transform(kind, arr, q)
                tw = Configuration(rect(M, M), np.ascontiguousarray(tarr).reshape(-1))
                if is_valid(spec, tw) != base:
                    ok = False
                    witness = w
                    break
            if not ok:
                break
        reports[flag] = SymmetryCheck(flag, ok, count, exhaustive, witness)
    return reports


def load_constraint(path) -> ConstraintSpec:
    data = json.loads(Path(path).read_text())
    return ConstraintSpec.from_json(data)


def save_constraint(spec: ConstraintSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_json(), indent=2, sort_keys=True) + "\n")


def resolve_constraint(source: str) -> ConstraintSpec:
    """Accept a builtin name or a path to a constraint file."""
    p = Path(source)
    if p.suffix or p.exists():
        if not p.exists():
            raise ConstraintError(f"constraint file {source!r} not found")
        return load_constraint(p)
    return make_builtin(source)
