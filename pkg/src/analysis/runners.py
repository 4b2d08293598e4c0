"""
Rollout policies: dense, learned-mask (pruner in the loop) and fixed-schedule

Each is callable as ``policy(obs, mask_override=None, rng_seed=0)`` and
returns ``(ActionChunk, FlopReport, PruneMask)``, the shape
``env.rollout_episode`` drives.
"""

import threading
from typing import Optional, Tuple

from ..caching import ONE_FOR_ALL, Schedule
from ..errors import ShapeError
from ..policy.dit import ObsLike, PolicyModel, generate_action
from ..policy.flops import FlopReport
from ..policy.types import ActionChunk
from ..pruner.mask import PruneMask
from ..pruner.model import PrunerModel

PolicyOutput = Tuple[ActionChunk, FlopReport, PruneMask]


class DensePolicy:
    def __init__(self, model: PolicyModel, reuse: str = ONE_FOR_ALL):
        self.model = model
        self.reuse = reuse

    def __call__(self, obs: ObsLike, mask_override: Optional[PruneMask] = None, rng_seed: int = 0) -> PolicyOutput:
        c = self.model.config
        mask = mask_override if mask_override is not None else PruneMask.dense(c.K, c.n_blocks)
        chunk, _, report = generate_action(obs, mask, self.model, rng_seed, reuse=self.reuse)
        return chunk, report, mask


class PrunedPolicy:
    """Asks the pruner for a fresh mask at every rollout iteration.

    An override mask replaces the pruner for that iteration and the pruner is
    not called (nor charged in the FLOP report).
    """

    def __init__(self, model: PolicyModel, pruner: PrunerModel, reuse: str = ONE_FOR_ALL):
        if (pruner.config.K, pruner.config.L) != (model.config.K, model.config.L):
            raise ShapeError(
                f"pruner grid [K={pruner.config.K}, L={pruner.config.L}] does not match the policy "
                f"[K={model.config.K}, L={model.config.L}]"
            )
        self.model = model
        self.pruner = pruner
        self.reuse = reuse
        self.pruner_calls = 0
        self._lock = threading.Lock()

    def __call__(self, obs: ObsLike, mask_override: Optional[PruneMask] = None, rng_seed: int = 0) -> PolicyOutput:
        if mask_override is not None:
            mask, pruner_config = mask_override, None
        else:
            with self._lock:
                self.pruner_calls += 1
            mask, pruner_config = self.pruner.predict_mask(obs), self.pruner.config
        chunk, _, report = generate_action(obs, mask, self.model, rng_seed, reuse=self.reuse,
                                           pruner_config=pruner_config)
        return chunk, report, mask


class SchedulePolicy:
    """The same fixed mask at every iteration"""

    def __init__(self, model: PolicyModel, schedule: Schedule, reuse: str = ONE_FOR_ALL):
        schedule.mask.check_shape(model.config.K, model.config.n_blocks)
        self.model = model
        self.schedule = schedule
        self.reuse = reuse

    def __call__(self, obs: ObsLike, mask_override: Optional[PruneMask] = None, rng_seed: int = 0) -> PolicyOutput:
        mask = mask_override if mask_override is not None else self.schedule.mask
        chunk, _, report = generate_action(obs, mask, self.model, rng_seed, reuse=self.reuse)
        return chunk, report, mask
