"""On-disk cache for puzzle levels and tree aggregates.

Two formats share one header: ``npz`` (fixed little-endian arrays) and
``json`` (portable text; floats are written with ``repr`` so they reload
bit-identically).  A version or key mismatch, or a damaged file, is reported
as a warning and treated as a cache miss.
"""
from __future__ import annotations

import hashlib
import json
import os
import warnings
import zipfile
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import GeoPressureWarning
from .mapcore import MapSpec
from .pullback import DiskEnclosure
from .puzzle import EquipotentialGrid, PuzzleLevel, PuzzlePiece

FORMAT_VERSION = 1
PUZZLE_KIND = "geopressure-puzzle"
TREE_KIND = "geopressure-tree"

_PIECE_SCALARS = {
    "lo": "<i8", "hi": "<i8", "lattice": "<i8", "diam": "<f8", "dist_to_crit": "<f8",
    "fuzzy_upper": "<f8", "disk_upper": "<f8", "disk_radius": "<f8", "parent": "<i8",
}


def puzzle_key(f: MapSpec, eta: float, angles) -> str:
    blob = json.dumps({"map": f.to_dict(), "eta": float(eta),
                       "angles": None if angles is None else [str(Fraction(str(a))) for a in angles]},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def puzzle_path(cache_dir, f: MapSpec, eta: float, angles, depth: int, fmt: str = "npz") -> Path:
    return Path(cache_dir) / f"puzzle-{puzzle_key(f, eta, angles)}-N{depth}.{fmt}"


# ---------------------------------------------------------------------------
# puzzle levels

def _level_arrays(level: PuzzleLevel) -> dict:
    ps = level.pieces
    arr = {
        "lo": [p.lo for p in ps], "hi": [p.hi for p in ps], "lattice": [p.lattice for p in ps],
        "diam": [p.diam for p in ps], "dist_to_crit": [p.dist_to_crit for p in ps],
        "fuzzy_upper": [p.fuzzy_upper for p in ps], "disk_upper": [p.disk_upper for p in ps],
        "disk_radius": [p.disk.radius for p in ps],
        "parent": [-1 if p.parent is None else p.parent for p in ps],
    }
    out = {k: np.asarray(v, dtype=_PIECE_SCALARS[k]) for k, v in arr.items()}
    out["y"] = np.asarray([p.y for p in ps], dtype="<c16")
    out["disk_center"] = np.asarray([p.disk.center for p in ps], dtype="<c16")
    out["samples"] = np.concatenate([p.samples for p in ps]).astype("<c16")
    out["offsets"] = np.cumsum([0] + [p.samples.size for p in ps]).astype("<i8")
    out["transitions"] = np.asarray(level.transitions, dtype="<i8").reshape(-1, 3)
    return out


def _header(levels: list) -> dict:
    top = levels[-1]
    grid = top.grid
    return {
        "kind": PUZZLE_KIND, "version": FORMAT_VERSION, "byteorder": "little",
        "map": top.f.to_dict(), "eta": top.eta, "angles": [str(a) for a in top.angles],
        "depth": top.depth, "piece_counts": [len(lv.pieces) for lv in levels],
        "m0": grid.m0, "grid_levels": len(grid.levels),
        "anchors": {str(k): [v.real, v.imag] for k, v in grid._anchor_cache.items()},
        "itineraries": [[list(p.itinerary) for p in lv.pieces] for lv in levels],
        "branch_tags": [[list(p.branch_tags) for p in lv.pieces] for lv in levels],
        "flags": [list(lv.flags) for lv in levels],
    }


def save_levels(levels: list, path, fmt: Optional[str] = None) -> Path:
    """Write puzzle levels 0..N (sharing one grid) to a single file."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".") or "npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    head = _header(levels)
    grid = levels[-1].grid
    arrays = {}
    for k, lv in enumerate(levels):
        for name, a in _level_arrays(lv).items():
            arrays[f"L{k}_{name}"] = a
    for k, g in enumerate(grid.levels):
        arrays[f"grid_{k}"] = np.asarray(g, dtype="<c16")
    tmp = path.with_name(path.name + ".tmp")
    if fmt == "npz":
        with open(tmp, "wb") as fh:
            np.savez(fh, header=np.asarray(json.dumps(head)), **arrays)
    elif fmt == "json":
        payload = {"header": head, "arrays": {k: _to_json(v) for k, v in arrays.items()}}
        with open(tmp, "w") as fh:
            json.dump(payload, fh)
    else:
        raise ValueError("format must be npz or json")
    os.replace(tmp, path)
    return path


def _to_json(a: np.ndarray) -> dict:
    if np.iscomplexobj(a):
        return {"dtype": "complex", "shape": list(a.shape),
                "re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()}
    return {"dtype": str(a.dtype.name), "shape": list(a.shape), "data": a.ravel().tolist()}


def _from_json(d: dict) -> np.ndarray:
    if d["dtype"] == "complex":
        a = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
    else:
        a = np.asarray(d["data"], dtype=d["dtype"])
    return a.reshape(d["shape"])


def _read(path: Path) -> tuple:
    if path.suffix == ".json":
        with open(path) as fh:
            payload = json.load(fh)
        return payload["header"], {k: _from_json(v) for k, v in payload["arrays"].items()}
    with np.load(path, allow_pickle=False) as z:
        head = json.loads(str(z["header"]))
        return head, {k: z[k] for k in z.files if k != "header"}


def load_levels(path, expect_map: Optional[MapSpec] = None) -> Optional[list]:
    """Reload levels written by :func:`save_levels`; None (with a warning) on
    version mismatch, map mismatch or a damaged file."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        head, arr = _read(path)
        if head.get("kind") != PUZZLE_KIND or head.get("version") != FORMAT_VERSION:
            warnings.warn(f"cache {path.name}: version mismatch, ignored", GeoPressureWarning,
                          stacklevel=2)
            return None
        f = MapSpec.from_dict(head["map"])
        if expect_map is not None and f != expect_map:
            warnings.warn(f"cache {path.name}: map mismatch, ignored", GeoPressureWarning, stacklevel=2)
            return None
        grid = EquipotentialGrid.from_levels(
            f, head["eta"], head["m0"], [arr[f"grid_{k}"] for k in range(head["grid_levels"])],
            {k: complex(*v) for k, v in head["anchors"].items()})
        levels = []
        for k in range(head["depth"] + 1):
            g = lambda name: arr[f"L{k}_{name}"]
            off = g("offsets")
            pieces = []
            for i in range(head["piece_counts"][k]):
                parent = int(g("parent")[i])
                pieces.append(PuzzlePiece(
                    depth=k, lo=int(g("lo")[i]), hi=int(g("hi")[i]), lattice=int(g("lattice")[i]),
                    itinerary=tuple(head["itineraries"][k][i]),
                    branch_tags=tuple(head["branch_tags"][k][i]),
                    y=complex(g("y")[i]), samples=np.array(g("samples")[off[i]:off[i + 1]], dtype=complex),
                    diam=float(g("diam")[i]), dist_to_crit=float(g("dist_to_crit")[i]),
                    disk=DiskEnclosure(complex(g("disk_center")[i]), float(g("disk_radius")[i])),
                    fuzzy_upper=float(g("fuzzy_upper")[i]), disk_upper=float(g("disk_upper")[i]),
                    parent=None if parent < 0 else parent))
            trans = [tuple(int(x) for x in row) for row in g("transitions")]
            levels.append(PuzzleLevel(f, k, head["eta"], tuple(Fraction(a) for a in head["angles"]),
                                      pieces, trans, grid, list(head["flags"][k])))
        return levels
    except (OSError, KeyError, ValueError, TypeError, IndexError, zipfile.BadZipFile, EOFError) as e:
        warnings.warn(f"cache {path.name}: unreadable ({type(e).__name__}), recomputing",
                      GeoPressureWarning, stacklevel=2)
        return None


# ---------------------------------------------------------------------------
# tree aggregates

def save_tree_run(run, path, meta: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {"kind": TREE_KIND, "version": FORMAT_VERSION, "byteorder": "little", "n": run.n,
            "leaves": run.leaves, "pruned": run.pruned, "collapses": run.collapses,
            "saturated_steps": run.saturated_steps, "underflow": run.underflow,
            "flags": list(run.flags), "meta": meta or {}}
    arrays = {"ts": np.asarray(run.ts, dtype="<f8"), "values": np.asarray(run.values, dtype="<f8")}
    if run.records is not None:
        arrays.update({
            "endpoints": np.asarray(run.records["endpoints"], dtype="<c16"),
            "log_plain": np.asarray(run.records["log_plain"], dtype="<f8"),
            "log_weight": np.asarray(run.records["log_weight"], dtype="<f8"),
            "saturated": np.asarray(run.records["saturated"], dtype="<i8"),
        })
    if path.suffix == ".json":
        with open(path, "w") as fh:
            json.dump({"header": head, "arrays": {k: _to_json(v) for k, v in arrays.items()}}, fh)
    else:
        with open(path, "wb") as fh:
            np.savez(fh, header=np.asarray(json.dumps(head)), **arrays)
    return path


def load_tree_run(path):
    from .tree import TreeRun

    path = Path(path)
    try:
        head, arr = _read(path)
        if head.get("kind") != TREE_KIND or head.get("version") != FORMAT_VERSION:
            warnings.warn(f"cache {path.name}: version mismatch, ignored", GeoPressureWarning,
                          stacklevel=2)
            return None
        rec = None
        if "endpoints" in arr:
            rec = {k: np.asarray(arr[k]) for k in ("endpoints", "log_plain", "log_weight", "saturated")}
        return TreeRun(n=head["n"], ts=np.asarray(arr["ts"], dtype=float),
                       values=np.asarray(arr["values"], dtype=float), leaves=head["leaves"],
                       pruned=head["pruned"], collapses=head["collapses"],
                       saturated_steps=head["saturated_steps"], underflow=head["underflow"],
                       records=rec, flags=list(head["flags"]))
    except (OSError, KeyError, ValueError, TypeError, zipfile.BadZipFile, EOFError) as e:
        warnings.warn(f"cache {path.name}: unreadable ({type(e).__name__})", GeoPressureWarning,
                      stacklevel=2)
        return None


# ---------------------------------------------------------------------------
# inspection

def inspect_cache(cache_dir) -> list:
    out = []
    for p in sorted(Path(cache_dir).glob("*")):
        if p.suffix not in (".npz", ".json"):
            continue
        try:
            head, _ = _read(p)
            out.append({"file": p.name, "kind": head.get("kind"), "version": head.get("version"),
                        "depth": head.get("depth", head.get("n")), "map": head.get("map"),
                        "bytes": p.stat().st_size})
        except Exception as e:  # noqa: BLE001 - report anything unreadable
            out.append({"file": p.name, "error": type(e).__name__})
    return out


def clear_cache(cache_dir) -> int:
    n = 0
    for p in Path(cache_dir).glob("*"):
        if p.suffix in (".npz", ".json", ".tmp"):
            p.unlink()
            n += 1
    return n
