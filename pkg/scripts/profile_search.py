#!/usr/bin/env python3
"""Time the exhaustive cosine search at realistic index sizes.

    python3 scripts/profile_search.py --rows 218000 --dim 128 --queries 100

Prints total wall time and per-query latency for top-64 retrieval, after a
separate, reported one-time index preparation (float64 copy + row norms).
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from normkit.embedlink import EmbeddingMatrix, link_embedding_batch


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=218_000)
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("--k", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    data = rng.standard_normal((args.rows, args.dim), dtype=np.float32)
    ids = [f"C{i:07d}\tname{i}" for i in range(args.rows)]
    index = EmbeddingMatrix(data=data, ids=ids)
    queries = EmbeddingMatrix(
        data=rng.standard_normal((args.queries, args.dim), dtype=np.float32),
        ids=[f"q{i}" for i in range(args.queries)],
    )

    start = time.perf_counter()
    index.data64  # noqa: B018
    index.norms64  # noqa: B018
    prep = time.perf_counter() - start

    start = time.perf_counter()
    results = link_embedding_batch(index, queries, k=args.k)
    elapsed = time.perf_counter() - start

    assert len(results) == args.queries and len(results[0]) == args.k
    print(f"index: {args.rows} x {args.dim} float32, top-{args.k}")
    print(f"prep:  {prep:.3f} s (norms + float64 view, once per index)")
    print(f"query: {elapsed:.3f} s total, {1000 * elapsed / args.queries:.1f} ms/query")
    return 0


if __name__ == "__main__":
    sys.exit(main())
