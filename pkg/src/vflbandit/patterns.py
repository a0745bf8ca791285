"""Bijection between corruption patterns and flat arm indices.

A corruption pattern is a sorted tuple of distinct 1-based client indices,
one entry per corrupted client-server channel. Patterns are ranked in
lexicographic order, so for 7 clients and 2 corrupted channels index 0 is
``(1, 2)``, index 5 is ``(1, 7)`` and index 20 is ``(6, 7)``.
"""
from __future__ import annotations

import math
import re
from typing import Sequence

__all__ = [
    "count_patterns",
    "validate_pattern",
    "pattern_to_index",
    "index_to_pattern",
    "format_pattern",
    "parse_pattern",
]

_PATTERN_RE = re.compile(r"^\{\s*(\d+\s*(,\s*\d+\s*)*)?\}$")


def count_patterns(n_clients: int, budget: int) -> int:
    """Number of distinct corruption patterns: C(n_clients, budget)."""
    if n_clients < 0:
        raise ValueError(f"n_clients must be non-negative, got {n_clients}")
    if budget < 0 or budget > n_clients:
        raise ValueError(f"budget must be in [0, {n_clients}], got {budget}")
    return math.comb(n_clients, budget)


def validate_pattern(pattern: Sequence[int], n_clients: int) -> tuple[int, ...]:
    """Check that ``pattern`` is a strictly increasing tuple within [1, n_clients]."""
    clients = tuple(int(c) for c in pattern)
    if any(c < 1 or c > n_clients for c in clients):
        raise ValueError(f"pattern {clients} has clients outside [1, {n_clients}]")
    if any(a >= b for a, b in zip(clients, clients[1:])):
        raise ValueError(f"pattern {clients} must be strictly increasing")
    return clients


def pattern_to_index(pattern: Sequence[int], n_clients: int) -> int:
    """Lexicographic rank of ``pattern`` among same-size subsets of [1, n_clients]."""
    clients = validate_pattern(pattern, n_clients)
    size = len(clients)
    rank = 0
    previous = 0
    for position, client in enumerate(clients):
        for skipped in range(previous + 1, client):
            rank += math.comb(n_clients - skipped, size - position - 1)
        previous = client
    return rank


def index_to_pattern(index: int, n_clients: int, budget: int) -> tuple[int, ...]:
    """Inverse of :func:`pattern_to_index` for subsets of the given size."""
    total = count_patterns(n_clients, budget)
    if index < 0 or index >= total:
        raise ValueError(f"index must be in [0, {total}), got {index}")
    clients: list[int] = []
    remaining = index
    candidate = 1
    for position in range(budget):
        while True:
            block = math.comb(n_clients - candidate, budget - position - 1)
            if remaining < block:
                break
            remaining -= block
            candidate += 1
        clients.append(candidate)
        candidate += 1
    return tuple(clients)


def format_pattern(pattern: Sequence[int]) -> str:
    """Textual form used in CSV output and CLI flags, e.g. ``{1,7}``."""
    return "{" + ",".join(str(int(c)) for c in pattern) + "}"


def parse_pattern(text: str) -> tuple[int, ...]:
    """Parse the ``{a1,a2,...}`` textual form back into a tuple."""
    if not _PATTERN_RE.match(text.strip()):
        raise ValueError(f"malformed pattern text: {text!r}")
    inner = text.strip()[1:-1].strip()
    if not inner:
        return ()
    return tuple(int(part) for part in inner.split(","))
