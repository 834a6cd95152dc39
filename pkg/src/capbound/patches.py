"""Enumeration of valid r-by-s patches and marginalization maps.

Patches are stored as a dense (count, r*s) uint8 array in row-major symbol
order; ids are assigned in lexicographic order of the flattened symbols,
which is exactly the order a depth-first scan with ascending symbol choice
produces. An optional padding radius delta keeps only patches extendable to
a valid configuration on the delta-enlarged rectangle.

Cache file layout (little endian, stable across runs):

    bytes 0..7    magic b"CAPBPS01"
    bytes 8..39   sha256 digest of the constraint identity (raw 32 bytes)
    bytes 40..55  four u32: r, s, delta, alphabet_size
    bytes 56..63  u64 patch count n
    bytes 64..    n * r * s bytes of patch symbols, id order, row-major
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constraint import ConstraintSpec
from .lattice import IndexSet, rect

_MAGIC = b"CAPBPS01"


@dataclass
class PatchSet:
    """All valid patches for one constraint and one window size."""

    spec_digest: str
    spec_name: str
    alphabet_size: int
    r: int
    s: int
    delta: int
    array: np.ndarray  # (n, r*s) uint8, row-major symbols

    def __post_init__(self):
        self.array = np.ascontiguousarray(self.array, dtype=np.uint8)
        self.index = {row.tobytes(): i for i, row in enumerate(self.array)}

    def __len__(self) -> int:
        return self.array.shape[0]

    def id_of(self, flat_symbols) -> int:
        key = np.ascontiguousarray(flat_symbols, dtype=np.uint8).tobytes()
        return self.index[key]

    def patch(self, pid: int) -> np.ndarray:
        return self.array[pid].reshape(self.r, self.s)


@dataclass
class MarginalMap:
    """Partition of patch ids by their restriction to a subset of cells."""

    subset: IndexSet
    group_of: np.ndarray  # (n,) int32, group id per patch
    group_values: np.ndarray  # (n_groups, |subset|) uint8, sorted contents

    @property
    def n_groups(self) -> int:
        return int(self.group_values.shape[0])

    def groups(self) -> list[np.ndarray]:
        order = np.argsort(self.group_of, kind="stable")
        bounds = np.searchsorted(self.group_of[order], np.arange(self.n_groups + 1))
        return [order[bounds[g] : bounds[g + 1]] for g in range(self.n_groups)]


def _window_placements(spec: ConstraintSpec, cells: list[tuple[int, int]]):
    """All forbidden-window placements fully inside the given cell list,
    grouped by the last (scan-order-wise) cell they touch.

    Returns {last_position: [(positions_tuple, values_tuple), ...]} with
    positions referring to indices into `cells`.
    """
    pos_of = {c: t for t, c in enumerate(cells)}
    by_last: dict[int, list] = {}
    seen = set()
    for window in spec.forbidden:
        w = window.normalized()
        key = (w.shape.cells, w.values)
        if key in seen:
            continue
        seen.add(key)
        for i, j in cells:
            pts = []
            ok = True
            for ci, cj in w.shape.cells:
                t = pos_of.get((ci + i, cj + j))
                if t is None:
                    ok = False
                    break
                pts.append(t)
            if ok:
                last = max(pts)
                by_last.setdefault(last, []).append((tuple(pts), w.values))
    return by_last


def _dfs_fill(n_cells: int, alphabet: int, by_last: dict, prefill=None):
    """Depth-first enumeration over cell assignments with window pruning.

    prefill maps positions to fixed symbols. Yields complete assignments as
    tuples. Assignments are produced in lexicographic order.
    """
    assign = [0] * n_cells
    fixed = prefill or {}
    checks = [by_last.get(t, ()) for t in range(n_cells)]

    def ok_at(t: int) -> bool:
        for pts, vals in checks[t]:
            matched = True
            for p, v in zip(pts, vals):
                if assign[p] != v:
                    matched = False
                    break
            if matched:
                return False
        return True

    t = 0
    symbol = [0] * n_cells
    while t >= 0:
        if t == n_cells:
            yield tuple(assign)
            t -= 1
            continue
        if t in fixed:
            if symbol[t] == 0:
                assign[t] = fixed[t]
                symbol[t] = 1
                if ok_at(t):
                    t += 1
                    if t < n_cells:
                        symbol[t] = 0
                continue
            symbol[t] = 0
            t -= 1
            continue
        advanced = False
        while symbol[t] < alphabet:
            assign[t] = symbol[t]
            symbol[t] += 1
            if ok_at(t):
                t += 1
                if t < n_cells:
                    symbol[t] = 0
                advanced = True
                break
        if not advanced:
            symbol[t] = 0
            t -= 1


def _extensible(spec: ConstraintSpec, r: int, s: int, delta: int, patch_flat) -> bool:
    """Can the patch be completed to a valid configuration on the padded
    rectangle? Checked by backtracking over the padding ring only."""
    padded_cells = [
        (i, j)
        for i in range(-delta, r + delta)
        for j in range(-delta, s + delta)
    ]
    by_last = _window_placements(spec, padded_cells)
    prefill = {}
    for t, (i, j) in enumerate(padded_cells):
        if 0 <= i < r and 0 <= j < s:
            prefill[t] = int(patch_flat[i * s + j])
    for _ in _dfs_fill(len(padded_cells), spec.alphabet_size, by_last, prefill):
        return True
    return False


def enumerate_patches(spec: ConstraintSpec, r: int, s: int, delta: int = 0) -> PatchSet:
    """All r-by-s configurations with no forbidden window inside them; with
    delta > 0, additionally filtered for extensibility to the padded
    rectangle. An empty result is legal."""
    if r < 1 or s < 1 or delta < 0:
        raise ValueError("need r, s >= 1 and delta >= 0")
    cells = rect(r, s).cells
    by_last = _window_placements(spec, list(cells))
    rows = []
    for assign in _dfs_fill(r * s, spec.alphabet_size, by_last):
        if delta > 0 and not _extensible(spec, r, s, delta, assign):
            continue
        rows.append(assign)
    arr = np.array(rows, dtype=np.uint8).reshape(len(rows), r * s)
    return PatchSet(
        spec_digest=spec.digest(),
        spec_name=spec.name,
        alphabet_size=spec.alphabet_size,
        r=r,
        s=s,
        delta=delta,
        array=arr,
    )


def marginal_map(ps: PatchSet, subset: IndexSet) -> MarginalMap:
    """Group patch ids by their restriction to `subset` (cells inside the
    patch rectangle). Groups are ordered by restriction content."""
    window = rect(ps.r, ps.s)
    if not subset.issubset(window):
        raise ValueError("subset outside the patch rectangle")
    cols = np.array([i * ps.s + j for i, j in subset.cells], dtype=np.intp)
    view = ps.array[:, cols] if cols.size else np.zeros((len(ps), 0), dtype=np.uint8)
    values, inverse = np.unique(view, axis=0, return_inverse=True)
    return MarginalMap(
        subset=subset,
        group_of=inverse.astype(np.int32).reshape(-1),
        group_values=values,
    )


def cache_path(cache_dir, spec: ConstraintSpec, r: int, s: int, delta: int) -> Path:
    name = f"{spec.digest()[:16]}_r{r}_s{s}_d{delta}.patches"
    return Path(cache_dir) / name


def save_patchset(ps: PatchSet, path) -> None:
    """Write the documented binary layout atomically (write + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = bytearray()
    header += _MAGIC
    header += bytes.fromhex(ps.spec_digest)
    header += np.array([ps.r, ps.s, ps.delta, ps.alphabet_size], dtype="<u4").tobytes()
    header += np.array([len(ps)], dtype="<u8").tobytes()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(bytes(header))
            fh.write(ps.array.tobytes())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_patchset(path, spec: ConstraintSpec) -> PatchSet:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a patch cache file")
    digest = raw[8:40].hex()
    if digest != spec.digest():
        raise ValueError(f"{path}: cached digest does not match the constraint")
    r, s, delta, alphabet = (int(x) for x in np.frombuffer(raw[40:56], dtype="<u4"))
    (n,) = (int(x) for x in np.frombuffer(raw[56:64], dtype="<u8"))
    body = np.frombuffer(raw[64:], dtype=np.uint8)
    if body.size != n * r * s:
        raise ValueError(f"{path}: truncated patch payload")
    return PatchSet(
        spec_digest=digest,
        spec_name=spec.name,
        alphabet_size=alphabet,
        r=r,
        s=s,
        delta=delta,
        array=body.reshape(n, r * s).copy(),
    )


def cached_enumerate(spec: ConstraintSpec, r: int, s: int, delta: int, cache_dir) -> PatchSet:
    """Enumerate with a byte-stable disk cache keyed by the constraint digest."""
    path = cache_path(cache_dir, spec, r, s, delta)
    if path.exists():
        return load_patchset(path, spec)
    ps = enumerate_patches(spec, r, s, delta)
    save_patchset(ps, path)
    return ps
