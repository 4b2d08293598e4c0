"""
Fixed, observation-independent caching schedules and their text format

Text format::

    K L name
    0 0 1 ... (3L digits)
    ... K rows, in execution order (first row = first denoising step run)
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import ScheduleError
from ..pruner.mask import BASELINE, LEARNED, PruneMask

MANUAL = "manual"


@dataclass
class Schedule:
    name: str
    mask: PruneMask
    provenance: str = MANUAL

    def __post_init__(self):
        if self.mask.n_blocks % 3 != 0:
            raise ScheduleError(f"schedule '{self.name}': {self.mask.n_blocks} columns is not a multiple of 3")

    @property
    def K(self) -> int:
        return self.mask.K

    @property
    def L(self) -> int:
        return self.mask.n_blocks // 3

    @property
    def rate(self) -> float:
        return self.mask.realized_rate


def uniform_schedule(K: int, L: int, interval: int) -> Schedule:
    """Every block computes on every ``interval``-th executed step and reuses otherwise"""
    if interval < 1:
        raise ScheduleError(f"uniform schedule interval must be >= 1, got {interval}")
    hard = np.ones((K, 3 * L), dtype=np.int8)
    for row in range(K):
        # row r runs denoising step k = K - r, so (K - k) mod interval == r mod interval
        if row % interval == 0:
            hard[row] = 0
    return Schedule(f"uniform_{interval}", PruneMask.from_hard(hard), f"uniform-interval({interval})")


def random_schedule(K: int, L: int, rate: float, seed: int) -> Schedule:
    """Bernoulli(rate) mask with the first executed step forced dense"""
    if not 0.0 <= rate <= 1.0:
        raise ScheduleError(f"random schedule rate must be in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    hard = (rng.random((K, 3 * L)) < rate).astype(np.int8)
    hard[0] = 0
    return Schedule(f"random_{seed}", PruneMask.from_hard(hard), f"random({seed}, {rate})")


def dense_schedule(K: int, L: int) -> Schedule:
    return Schedule("dense", PruneMask.dense(K, 3 * L), MANUAL)


def manual_schedule(hard: np.ndarray, name: str = MANUAL) -> Schedule:
    return Schedule(name, PruneMask.from_hard(hard), MANUAL)


def learned_schedule(mask: PruneMask, name: str = "learned") -> Schedule:
    return Schedule(name, mask.with_source(LEARNED), LEARNED)


def format_schedule(schedule: Schedule) -> str:
    name = schedule.name.replace(" ", "_") or MANUAL
    lines = [f"{schedule.K} {schedule.L} {name}"]
    lines += [" ".join(str(int(v)) for v in row) for row in schedule.mask.hard]
    return "\n".join(lines) + "\n"


def parse_schedule(text: str, source: str = "<text>") -> Schedule:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise ScheduleError(f"{source}: empty schedule file")
    header = lines[0].split()
    if len(header) != 3:
        raise ScheduleError(f"{source}: header must be 'K L name', got '{lines[0]}'")
    try:
        K, L = int(header[0]), int(header[1])
    except ValueError:
        raise ScheduleError(f"{source}: K and L must be integers, got '{lines[0]}'") from None
    rows = lines[1:]
    if len(rows) != K:
        raise ScheduleError(f"{source}: expected {K} rows, found {len(rows)}")
    hard = np.zeros((K, 3 * L), dtype=np.int8)
    for r, line in enumerate(rows):
        digits = line.split()
        if len(digits) != 3 * L or any(d not in ("0", "1") for d in digits):
            raise ScheduleError(f"{source}: row {r + 1} must hold {3 * L} digits in {{0, 1}}")
        hard[r] = [int(d) for d in digits]
    return Schedule(header[2], PruneMask.from_hard(hard, BASELINE), MANUAL)


def save_schedule(schedule: Schedule, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_schedule(schedule), encoding="utf-8")
    return path


def load_schedule(path: Union[str, Path]) -> Schedule:
    path = Path(path)
    if not path.exists():
        raise ScheduleError(f"schedule file not found: {path}")
    return parse_schedule(path.read_text(encoding="utf-8"), source=str(path))
