"""Small graph builders shared by the tests."""
from __future__ import annotations

from streamhop.stream import EdgeUpdate, MultipassStream


def stream_of(n, edges, weighted=None, churn_pairs=()):
    """Insert every edge once; ``churn_pairs`` are inserted and then deleted first."""
    if weighted is None:
        weighted = any(len(e) > 2 for e in edges)
    ups = []
    for a, b, *w in churn_pairs:
        wt = w[0] if w else (1.0 if weighted else None)
        ups.append(EdgeUpdate(a, b, 1, wt))
        ups.append(EdgeUpdate(b, a, -1, wt))
    for e in edges:
        a, b = e[0], e[1]
        wt = e[2] if len(e) > 2 else (1.0 if weighted else None)
        ups.append(EdgeUpdate(a, b, 1, wt))
    return MultipassStream.from_updates(n, ups, weighted=weighted)


def path_edges(n, weight=None):
    if weight is None:
        return [(i, i + 1) for i in range(1, n)]
    return [(i, i + 1, weight) for i in range(1, n)]
