from .cache_state import (
    BLOCKWISE,
    ONE_FOR_ALL,
    REUSE,
    REUSE_STRATEGIES,
    SINGLE,
    WRITE,
    BlockwiseCache,
    CacheEvent,
    CacheState,
    ReuseCache,
    SingleBufferCache,
    blockwise_apply,
    make_cache,
    one_for_all_apply,
)
from .schedules import (
    Schedule,
    dense_schedule,
    format_schedule,
    learned_schedule,
    load_schedule,
    manual_schedule,
    parse_schedule,
    random_schedule,
    save_schedule,
    uniform_schedule,
)

__all__ = [
    'BLOCKWISE',
    'ONE_FOR_ALL',
    'REUSE',
    'REUSE_STRATEGIES',
    'SINGLE',
    'WRITE',
    'BlockwiseCache',
    'CacheEvent',
    'CacheState',
    'ReuseCache',
    'Schedule',
    'SingleBufferCache',
    'blockwise_apply',
    'dense_schedule',
    'format_schedule',
    'learned_schedule',
    'load_schedule',
    'make_cache',
    'manual_schedule',
    'one_for_all_apply',
    'parse_schedule',
    'random_schedule',
    'save_schedule',
    'uniform_schedule',
]
