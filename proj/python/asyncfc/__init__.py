"""Asynchronous LLM function calling: CML parsing, LPT scheduling over task
graphs, closed-form latency analytics, and the discrete-event simulator.

The heavy lifting lives in the C++ extension ``asyncfc._core``; this package
re-exports its public surface.
"""

from asyncfc._core import (  # noqa: F401
    DecodeState,
    TaskGraph,
    check_theorem_61,
    check_theorem_62,
    check_theorem_63,
    decode_mask,
    generate_trace,
    latency_async_lpt,
    latency_sync,
    latency_sync_parallel,
    lpt_next,
    parse_blocks,
    ready_set,
    serialize_block,
    should_trap,
    simulate,
    trap_decision,
    validate_unique_ids,
)

__all__ = [
    "DecodeState",
    "TaskGraph",
    "check_theorem_61",
    "check_theorem_62",
    "check_theorem_63",
    "decode_mask",
    "generate_trace",
    "latency_async_lpt",
    "latency_sync",
    "latency_sync_parallel",
    "lpt_next",
    "parse_blocks",
    "ready_set",
    "serialize_block",
    "should_trap",
    "simulate",
    "trap_decision",
    "validate_unique_ids",
]
