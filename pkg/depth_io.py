"""
Depth Sequence I/O

Load, validate and persist depth-map sequences, and adapt external dataset
layouts (MSR-Action3D .bin, UTD-MHAD .mat) to the canonical in-memory model.

Canonical file layout (all little-endian):
    magic "DSEQ" (4 bytes), version u16 = 1, reserved u16 = 0,
    frames u32, width u32, height u32,
    subject u16, action u16, trial u16, pad u16       -> 28-byte header
    then frames * height * width u16 depth values, row-major per frame.

MSR-Action3D adapter layout:
    frames i32, width i32, height i32, then frames * height * width i32 depth
    words. Metadata comes from the filename ("a01_s03_e02_sdepth.bin").
"""

import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.io

from errors import (
    BadMagic,
    DeptrailError,
    DimensionMismatch,
    InvalidSequence,
    NonPositiveDims,
    TruncatedStream,
)

logger = logging.getLogger(__name__)

# ============================================================================
# Format Constants
# ============================================================================

CANONICAL_MAGIC = b"DSEQ"
CANONICAL_VERSION = 1
CANONICAL_HEADER = struct.Struct("<4sHHIIIHHHH")
CANONICAL_SUFFIX = ".dseq"

MSR_HEADER = struct.Struct("<iii")
MAX_DEPTH = np.iinfo(np.uint16).max
# subject, action and trial are stored as u16 in the canonical header
MAX_METADATA = np.iinfo(np.uint16).max

# "a01_s03_e02_sdepth.bin" (MSR-Action3D) and "a1_s1_t1_depth.mat" (UTD-MHAD)
SEQUENCE_NAME_PATTERN = re.compile(r"a(\d+)_s(\d+)_[et](\d+)", re.IGNORECASE)


# ============================================================================
# Domain Types
# ============================================================================

@dataclass(frozen=True, eq=False)
class DepthFrame:
    """
    One depth map.

    Attributes:
        depth: (height, width) uint16 grid, 0 = background / no return
    """

    depth: np.ndarray

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    def __eq__(self, other):
        if not isinstance(other, DepthFrame):
            return NotImplemented
        return np.array_equal(self.depth, other.depth)


@dataclass(frozen=True, eq=False)
class DepthSequence:
    """
    An ordered stack of depth frames with subject/action/trial metadata.

    The frames are held as one read-only (T, height, width) uint16 array.
    Build instances through `DepthSequence.from_array`, which validates
    the invariants (T >= 2, shared frame size, depth in [0, 65535]).
    """

    depth: np.ndarray
    subject_id: int = 0
    action_id: int = 0
    trial_id: int = 0

    @classmethod
    def from_array(
        cls,
        depth,
        subject_id: int = 0,
        action_id: int = 0,
        trial_id: int = 0,
        saturate: bool = False,
    ) -> "DepthSequence":
        """
        Validate a (T, height, width) array and wrap it.

        Args:
            depth: array-like of non-negative depth values
            saturate: clip values above 65535 instead of rejecting them

        Raises:
            InvalidSequence: wrong rank, T < 2, empty frames, negative or
                out-of-range depth, metadata outside 0..65535
        """
        for name, value in (("subject_id", subject_id), ("action_id", action_id), ("trial_id", trial_id)):
            if not 0 <= int(value) <= MAX_METADATA:
                raise InvalidSequence(f"{name} must lie in 0..{MAX_METADATA}, got {value}")
        array = np.asarray(depth)
        if array.ndim != 3:
            raise InvalidSequence(f"expected a (T, height, width) array, got shape {array.shape}")
        frames, height, width = array.shape
        if frames < 2:
            raise InvalidSequence(f"a sequence needs at least 2 frames, got {frames}")
        if height < 1 or width < 1:
            raise InvalidSequence(f"frames must be non-empty, got {height}x{width}")
        if array.size and array.min() < 0:
            raise InvalidSequence("depth values must be non-negative")
        if array.size and array.max() > MAX_DEPTH:
            if not saturate:
                raise InvalidSequence(f"depth values above {MAX_DEPTH} cannot be stored")
            array = np.minimum(array, MAX_DEPTH)
        array = np.ascontiguousarray(array, dtype=np.uint16)
        array.setflags(write=False)
        return cls(array, int(subject_id), int(action_id), int(trial_id))

    @classmethod
    def from_frames(cls, frames: List[DepthFrame], **metadata) -> "DepthSequence":
        shapes = {frame.depth.shape for frame in frames}
        if len(shapes) > 1:
            raise DimensionMismatch(f"frames disagree on size: {sorted(shapes)}")
        if len(frames) < 2:
            raise InvalidSequence(f"a sequence needs at least 2 frames, got {len(frames)}")
        return cls.from_array(np.stack([frame.depth for frame in frames]), **metadata)

    @property
    def frames(self) -> List[DepthFrame]:
        return [DepthFrame(frame) for frame in self.depth]

    @property
    def length(self) -> int:
        return int(self.depth.shape[0])

    @property
    def height(self) -> int:
        return int(self.depth.shape[1])

    @property
    def width(self) -> int:
        return int(self.depth.shape[2])

    @property
    def seq_id(self) -> str:
        return sequence_name(self.action_id, self.subject_id, self.trial_id)

    def __eq__(self, other):
        if not isinstance(other, DepthSequence):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.action_id == other.action_id
            and self.trial_id == other.trial_id
            and np.array_equal(self.depth, other.depth)
        )


def sequence_name(action_id: int, subject_id: int, trial_id: int) -> str:
    """Canonical sequence id, e.g. a01_s03_e02."""
    return f"a{action_id:02d}_s{subject_id:02d}_e{trial_id:02d}"


def parse_sequence_name(name: str) -> Tuple[int, int, int]:
    """
    Extract (action, subject, trial) from a dataset filename.

    Example:
        >>> parse_sequence_name("a01_s03_e02_sdepth.bin")
        (1, 3, 2)
    """
    match = SEQUENCE_NAME_PATTERN.search(Path(name).name)
    if match is None:
        raise InvalidSequence(f"filename {name!r} does not match aNN_sNN_eNN")
    action, subject, trial = (int(group) for group in match.groups())
    return action, subject, trial


# ============================================================================
# Canonical Format
# ============================================================================

def write_canonical(seq: DepthSequence) -> bytes:
    """Serialize a sequence to the canonical DSEQ layout (deterministic)."""
    header = CANONICAL_HEADER.pack(
        CANONICAL_MAGIC,
        CANONICAL_VERSION,
        0,
        seq.length,
        seq.width,
        seq.height,
        seq.subject_id,
        seq.action_id,
        seq.trial_id,
        0,
    )
    return header + seq.depth.astype("<u2", copy=False).tobytes(order="C")


def read_canonical(data: bytes) -> DepthSequence:
    """
    Parse a canonical DSEQ byte stream.

    Raises:
        BadMagic: stream does not start with "DSEQ" (or has a wrong version)
        TruncatedStream: payload length differs from the header's declaration
        DimensionMismatch: header declares zero width or height
    """
    if data[:4] != CANONICAL_MAGIC:
        raise BadMagic(f"expected magic {CANONICAL_MAGIC!r}, got {bytes(data[:4])!r}")
    if len(data) < CANONICAL_HEADER.size:
        raise TruncatedStream(f"header needs {CANONICAL_HEADER.size} bytes, got {len(data)}")

    _, version, _, frames, width, height, subject, action, trial, _ = CANONICAL_HEADER.unpack_from(data)
    if version != CANONICAL_VERSION:
        raise BadMagic(f"unsupported DSEQ version {version}")
    if width == 0 or height == 0:
        raise DimensionMismatch(f"declared frame size {width}x{height} is empty")

    expected = CANONICAL_HEADER.size + 2 * frames * width * height
    if len(data) != expected:
        raise TruncatedStream(
            f"header declares {frames} frames of {width}x{height} ({expected} bytes), stream has {len(data)}"
        )

    depth = np.frombuffer(data, dtype="<u2", offset=CANONICAL_HEADER.size)
    depth = depth.reshape(frames, height, width)
    return DepthSequence.from_array(depth, subject_id=subject, action_id=action, trial_id=trial)


def save_sequence(seq: DepthSequence, out_dir: Path) -> Path:
    """Write `<seq_id>.dseq` into out_dir and return its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{seq.seq_id}{CANONICAL_SUFFIX}"
    path.write_bytes(write_canonical(seq))
    return path


def load_sequence(path: Path) -> DepthSequence:
    return read_canonical(Path(path).read_bytes())


def load_dataset(root: Path) -> List[DepthSequence]:
    """
    Load every canonical file under root, sorted by sequence id.

    Raises:
        FileNotFoundError: root does not exist
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    dataset = [load_sequence(path) for path in sorted(root.glob(f"*{CANONICAL_SUFFIX}"))]
    dataset.sort(key=lambda seq: seq.seq_id)
    logger.info("Loaded %d sequences from %s", len(dataset), root)
    return dataset


# ============================================================================
# External Dataset Adapters
# ============================================================================

def read_msr_bin(data: bytes, filename: Optional[str] = None) -> DepthSequence:
    """
    Parse an MSR-Action3D depth .bin stream.

    How it works:
    1. Read the three int32 header words (frames, width, height)
    2. Check the payload length against 12 + 4 * frames * width * height
    3. Saturate depth words above 65535 (logged with a count)
    4. Take action/subject/trial from the companion filename

    Args:
        data: raw file bytes
        filename: e.g. "a01_s03_e02_sdepth.bin"; metadata defaults to 0 without it

    Raises:
        TruncatedStream: stream length does not match the header
        NonPositiveDims: a header word is zero or negative
    """
    if len(data) < MSR_HEADER.size:
        raise TruncatedStream(f"MSR header needs {MSR_HEADER.size} bytes, got {len(data)}")
    frames, width, height = MSR_HEADER.unpack_from(data)
    if frames <= 0 or width <= 0 or height <= 0:
        raise NonPositiveDims(f"MSR header declares frames={frames}, width={width}, height={height}")

    expected = MSR_HEADER.size + 4 * frames * width * height
    if len(data) != expected:
        raise TruncatedStream(f"MSR header declares {expected} bytes, stream has {len(data)}")

    words = np.frombuffer(data, dtype="<i4", offset=MSR_HEADER.size).reshape(frames, height, width)
    if words.min() < 0:
        raise InvalidSequence("MSR stream holds negative depth words")
    saturated = int(np.count_nonzero(words > MAX_DEPTH))
    if saturated:
        logger.warning("Saturated %d depth words above %d in %s", saturated, MAX_DEPTH, filename or "<stream>")

    action, subject, trial = parse_sequence_name(filename) if filename else (0, 0, 0)
    return DepthSequence.from_array(
        words, subject_id=subject, action_id=action, trial_id=trial, saturate=True
    )


def read_utd_mat(path: Path, parse_name: bool = True) -> DepthSequence:
    """
    Load a UTD-MHAD depth file ("a1_s1_t1_depth.mat", variable d_depth, H x W x T).

    With parse_name=False the metadata is left at 0 for a manifest to fill in.
    """
    path = Path(path)
    contents = scipy.io.loadmat(str(path))
    if "d_depth" not in contents:
        raise InvalidSequence(f"{path.name} has no d_depth variable")
    depth = np.moveaxis(np.asarray(contents["d_depth"]), -1, 0)
    action, subject, trial = parse_sequence_name(path.name) if parse_name else (0, 0, 0)
    return DepthSequence.from_array(
        np.clip(depth, 0, None), subject_id=subject, action_id=action, trial_id=trial, saturate=True
    )


# ============================================================================
# Directory Ingestion
# ============================================================================

INGEST_GLOBS = {"msr_bin": "*.bin", "canonical": f"*{CANONICAL_SUFFIX}", "utd_mat": "*.mat"}


def load_manifest(path: Path) -> Dict[str, Tuple[int, int, int]]:
    """
    Read metadata overrides from a CSV with columns file, subject, action, trial.

    Returns:
        dict: file name -> (action, subject, trial)
    """
    table = pd.read_csv(path)
    missing = {"file", "subject", "action", "trial"} - set(table.columns)
    if missing:
        raise InvalidSequence(f"manifest {path} lacks columns {sorted(missing)}")
    return {
        str(row.file): (int(row.action), int(row.subject), int(row.trial))
        for row in table.itertuples(index=False)
    }


def iter_source_files(src_dir: Path, fmt: str, extra_names=()) -> Iterator[Path]:
    """Dataset files of src_dir: names matching aNN_sNN_eNN, or listed in extra_names."""
    if fmt not in INGEST_GLOBS:
        raise DeptrailError(f"unknown ingest format {fmt!r}; expected one of {sorted(INGEST_GLOBS)}")
    for path in sorted(Path(src_dir).glob(INGEST_GLOBS[fmt])):
        if fmt == "canonical" or SEQUENCE_NAME_PATTERN.search(path.name) or path.name in extra_names:
            yield path


def read_source_file(path: Path, fmt: str) -> DepthSequence:
    if fmt == "msr_bin":
        return read_msr_bin(path.read_bytes(), filename=path.name)
    if fmt == "utd_mat":
        return read_utd_mat(path)
    return load_sequence(path)


def ingest_directory(
    src_dir: Path,
    fmt: str,
    out_dir: Path,
    manifest: Optional[Dict[str, Tuple[int, int, int]]] = None,
) -> Tuple[int, List[str]]:
    """
    Convert (or validate) every dataset file of src_dir into canonical files.

    Per-file failures are logged and collected, the remaining files are
    still converted.

    Returns:
        tuple: (number of files written, names of files that failed)
    """
    src_dir = Path(src_dir)
    if not src_dir.is_dir():
        raise FileNotFoundError(f"source directory {src_dir} does not exist")
    manifest = manifest or {}

    written, failures = 0, []
    seen: Dict[str, str] = {}
    for path in iter_source_files(src_dir, fmt, extra_names=manifest):
        try:
            if path.name in manifest and fmt == "msr_bin":
                seq = read_msr_bin(path.read_bytes())
            elif path.name in manifest and fmt == "utd_mat":
                seq = read_utd_mat(path, parse_name=False)
            else:
                seq = read_source_file(path, fmt)
            if path.name in manifest:
                action, subject, trial = manifest[path.name]
                seq = DepthSequence.from_array(seq.depth, subject_id=subject, action_id=action, trial_id=trial)
            if seq.seq_id in seen:
                raise InvalidSequence(f"{seq.seq_id} was already ingested from {seen[seq.seq_id]}")
            save_sequence(seq, out_dir)
            seen[seq.seq_id] = path.name
            written += 1
        except (DeptrailError, OSError, ValueError) as exc:
            logger.error("Failed to ingest %s: %s", path.name, exc)
            failures.append(path.name)
    logger.info("Ingested %d %s files from %s into %s", written, fmt, src_dir, out_dir)
    return written, failures
