"""
Artifact writers and readers for fracbump runs.

Binary fields, key-value sidecars, versioned CSV tables, JSON reports and the
run manifest. Every writer goes through a temporary file in the target
directory followed by a rename, so a reader never sees a partial file.
"""

import hashlib
import json
import os
import struct
import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.models import GridSpec, RealField
from utils.exceptions import ArtifactIOError, FieldFormatError

FIELD_MAGIC = b"FRACBUMP-FLD\0\0\0\0"
_HEADER = struct.Struct("<16sIIdd")
CSV_VERSION = "v1"

PathLike = Union[str, Path]


@contextmanager
def atomic_writer(path: PathLike, mode: str = "wb") -> Iterator[Any]:
    """Open a temporary sibling of ``path`` and rename it into place on success."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handle = tempfile.NamedTemporaryFile(mode=mode, dir=path.parent, prefix=f".{path.name}.",
                                             delete=False)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
    try:
        with handle:
            yield handle
        os.replace(handle.name, path)
    except BaseException:
        if os.path.exists(handle.name):
            os.unlink(handle.name)
        raise


def write_field(path: PathLike, f: RealField, s: float) -> Path:
    """Magic, u32 N, u32 M, f64 L, f64 s, then the samples as little-endian f64."""
    grid = f.grid
    header = _HEADER.pack(FIELD_MAGIC, grid.dimension, grid.points_per_axis,
                          grid.half_width, float(s))
    with atomic_writer(path) as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(f.samples, dtype="<f8").tobytes())
    return Path(path)


def read_field(path: PathLike) -> Tuple[RealField, float]:
    """Inverse of write_field; returns (field, s)."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read field file {path}: {exc}") from exc
    if len(payload) < _HEADER.size:
        raise FieldFormatError(f"{path} is too short for a field header")
    magic, N, M, L, s = _HEADER.unpack_from(payload)
    if magic != FIELD_MAGIC:
        raise FieldFormatError(f"{path} does not start with the field magic")
    try:
        grid = GridSpec(N, L, M)
    except Exception as exc:
        raise FieldFormatError(f"{path} holds an invalid grid header: {exc}") from exc
    expected = _HEADER.size + 8 * grid.size
    if len(payload) != expected:
        raise FieldFormatError(f"{path} has {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size)
    return RealField(grid, samples), float(s)


def _format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_value(text: str) -> Any:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def write_sidecar(path: PathLike, record: Dict[str, Any]) -> Path:
    """One ``key = value`` line per entry, in insertion order."""
    lines = [f"{key} = {_format_value(value)}\n" for key, value in record.items()]
    with atomic_writer(path, "w") as handle:
        handle.writelines(lines)
    return Path(path)


def read_sidecar(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read sidecar {path}: {exc}") from exc
    record = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FieldFormatError(f"malformed sidecar line in {path}: {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        record[key] = _parse_value(value)
    return record


def write_csv(path: PathLike, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> Path:
    """CSV with a frozen column order announced in a versioned header comment."""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    header = f"# fracbump-csv {CSV_VERSION} columns={','.join(columns)}\n"
    with atomic_writer(path, "w") as handle:
        handle.write(header)
        frame.to_csv(handle, index=False, float_format="%.12e", lineterminator="\n")
    return Path(path)


def read_csv(path: PathLike) -> pd.DataFrame:
    try:
        return pd.read_csv(path, comment="#")
    except OSError as exc:
        raise ArtifactIOError(f"cannot read table {path}: {exc}") from exc


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    with atomic_writer(path, "w") as handle:
        handle.write(text + "\n")
    return Path(path)


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ArtifactIOError(f"cannot read JSON {path}: {exc}") from exc


def sha256(path: PathLike, block_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(block_size), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Config echo, tool version, per-stage wall time and checksummed outputs."""

    command: str
    config: Dict[str, Any]
    tool_version: str
    stages: Dict[str, float] = field(default_factory=dict)
    files: List[Dict[str, str]] = field(default_factory=list)
    external: List[Dict[str, str]] = field(default_factory=list)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - start

    def add_file(self, path: PathLike, root: Optional[PathLike] = None) -> None:
        path = Path(path)
        name = str(path.relative_to(root)) if root is not None else str(path)
        self.files = [entry for entry in self.files if entry["path"] != name]
        self.files.append({"path": name, "sha256": sha256(path)})

    def add_external(self, path: PathLike, role: str) -> None:
        """Record a file outside the output directory, such as a cache entry.

        Args:
            path: File the run read or wrote
            role: ``read`` or ``written``
        """
        path = Path(path).resolve()
        self.external = [entry for entry in self.external if entry["path"] != str(path)]
        self.external.append({"path": str(path), "role": role, "sha256": sha256(path)})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "tool_version": self.tool_version,
            "stages": self.stages,
            "files": sorted(self.files, key=lambda entry: entry["path"]),
            "external": sorted(self.external, key=lambda entry: entry["path"]),
        }

    def write(self, out_dir: PathLike) -> Path:
        return write_json(Path(out_dir) / "manifest.json", self.to_dict())


def verify_manifest(out_dir: PathLike) -> bool:
    """True iff every file listed in out_dir/manifest.json exists with its checksum."""
    out_dir = Path(out_dir)
    manifest = read_json(out_dir / "manifest.json")
    for entry in manifest.get("files", []):
        target = out_dir / entry["path"]
        if not target.exists() or sha256(target) != entry["sha256"]:
            return False
    return True
