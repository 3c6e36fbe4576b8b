"""
Synthetic Depth-Action Generator

Renders small depth sequences of a blob-shaped "performer" running one of a
few motion programs. Used for tests and demos when no real dataset is around.

Key Concepts:
- Program: a motion class (translate_right, oscillate, ...); its action id
  is its 1-based position in SynthSpec.classes
- Subject: changes body size, depth and speed a little
- Trial: changes the travel distance / amplitude a little
- Every sequence is a pure function of (spec, class, subject, trial)

Depth values are integer plateaus (0 = background), so the side/top views
are exact occupancy grids.
"""

import logging
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from depth_io import DepthSequence, save_sequence
from schemas import SynthSpec

logger = logging.getLogger(__name__)

BODY_DEPTH = 2000
LIMB_OFFSET = 150


# ============================================================================
# Drawing Helpers
# ============================================================================

def _ellipse(height: int, width: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _round(value: float) -> int:
    return int(np.floor(value + 0.5))


class _Performer:
    """Per-(subject, trial) body parameters."""

    def __init__(self, spec: SynthSpec, subject: int, trial: int):
        self.height = spec.height
        self.width = spec.width
        self.frames = spec.frames
        self.ry = spec.height * 0.25 + (subject - 1) % 3
        self.rx = spec.width * 0.12 + (subject - 1) % 2
        self.depth = BODY_DEPTH + 40 * (subject - 1)
        self.speed = 1.0 - 0.06 * ((subject - 1) % 3)
        self.reach = 0.6 + 0.4 * ((trial - 1) % 5) / 4.0

    def progress(self, t: int) -> float:
        return t / (self.frames - 1)

    def body(self, cy: float, cx: float, scale: float = 1.0) -> np.ndarray:
        return _ellipse(self.height, self.width, cy, cx, self.ry * scale, self.rx * scale)


# ============================================================================
# Motion Programs
# ============================================================================

def _translate_right(p: _Performer) -> np.ndarray:
    video = np.zeros((p.frames, p.height, p.width), dtype=np.int64)
    start = p.rx + 1
    travel = (p.width - 2 * p.rx - 3) * p.reach * p.speed
    cy = p.height / 2.0
    for t in range(p.frames):
        cx = _round(start + travel * p.progress(t))
        video[t][p.body(cy, cx)] = p.depth
    return video


def _translate_left(p: _Performer) -> np.ndarray:
    return _translate_right(p)[:, :, ::-1].copy()


def _oscillate(p: _Performer) -> np.ndarray:
    video = np.zeros((p.frames, p.height, p.width), dtype=np.int64)
    amplitude = p.height * 0.15 * p.reach
    cx = p.width / 2.0
    for t in range(p.frames):
        cy = _round(p.height / 2.0 + amplitude * p.speed * np.sin(2.0 * np.pi * p.progress(t)))
        video[t][p.body(cy, cx)] = p.depth
    return video


def _grow(p: _Performer) -> np.ndarray:
    """Approach the sensor: the body gets larger and closer."""
    video = np.zeros((p.frames, p.height, p.width), dtype=np.int64)
    for t in range(p.frames):
        scale = 0.55 + 0.45 * p.reach * p.progress(t)
        depth = p.depth + 400 - _round(400 * p.speed * p.progress(t))
        video[t][p.body(p.height / 2.0, p.width / 2.0, scale)] = depth
    return video


def _arm_raise(p: _Performer) -> np.ndarray:
    """Static torso with an arm (closer to the sensor) rising at its side."""
    video = np.zeros((p.frames, p.height, p.width), dtype=np.int64)
    cy, cx = p.height / 2.0 + 2, p.width / 2.0
    torso = p.body(cy, cx, 0.8)
    shoulder = _round(cy - p.ry * 0.3)
    arm_col = min(p.width - 2, _round(cx + p.rx * 0.8 + 1))
    for t in range(p.frames):
        frame = video[t]
        frame[torso] = p.depth
        top = max(0, shoulder - _round(p.height * 0.35 * p.reach * p.speed * p.progress(t)))
        frame[top : shoulder + 2, arm_col : arm_col + 2] = p.depth - LIMB_OFFSET
    return video


def _static(p: _Performer) -> np.ndarray:
    frame = np.zeros((p.height, p.width), dtype=np.int64)
    frame[p.body(p.height / 2.0, p.width / 2.0)] = p.depth
    return np.repeat(frame[None], p.frames, axis=0)


PROGRAMS: Dict[str, Callable[[_Performer], np.ndarray]] = {
    "translate_right": _translate_right,
    "translate_left": _translate_left,
    "oscillate": _oscillate,
    "grow": _grow,
    "arm_raise": _arm_raise,
    "static": _static,
}


# ============================================================================
# Dataset Generation
# ============================================================================

def render_sequence(spec: SynthSpec, program: str, action_id: int, subject: int, trial: int) -> DepthSequence:
    """
    Render one sequence.

    With spec.noise > 0, seeded uniform integer noise in [-noise, noise] is
    added to foreground pixels (which stay >= 1).
    """
    video = PROGRAMS[program](_Performer(spec, subject, trial))
    if spec.noise > 0:
        rng = np.random.default_rng([spec.seed, action_id, subject, trial])
        noise = rng.integers(-spec.noise, spec.noise + 1, size=video.shape)
        foreground = video > 0
        video = np.where(foreground, np.maximum(video + noise, 1), 0)
    return DepthSequence.from_array(video, subject_id=subject, action_id=action_id, trial_id=trial)


def generate(spec: SynthSpec) -> List[DepthSequence]:
    """
    Build the whole dataset: classes x subjects x trials sequences.

    Example:
        >>> len(generate(SynthSpec(subjects=2, trials=3)))
        18
    """
    dataset = [
        render_sequence(spec, program, action_id, subject, trial)
        for action_id, program in enumerate(spec.classes, start=1)
        for subject in range(1, spec.subjects + 1)
        for trial in range(1, spec.trials + 1)
    ]
    logger.info(
        "Generated %d synthetic sequences (%d classes, %d subjects, %d trials, %dx%dx%d)",
        len(dataset),
        len(spec.classes),
        spec.subjects,
        spec.trials,
        spec.width,
        spec.height,
        spec.frames,
    )
    return dataset


def write_dataset(dataset: List[DepthSequence], out_dir: Path) -> List[Path]:
    """Save every sequence as a canonical file under out_dir."""
    return [save_sequence(seq, out_dir) for seq in dataset]
