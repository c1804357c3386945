"""Edge streams, synthetic graph generators and the binary stream file format.

Randomness comes from numpy's PCG64 seeded through `derive_seed`, a
splitmix64 mix of (seed, purpose index). The same (generator, seed) pair
yields the same edge multiset no matter how it is later partitioned.
"""

from __future__ import annotations

import enum
import queue
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .graph import WeightedEdge, ingest

MASK64 = (1 << 64) - 1

# Purpose tags for derive_seed; keep them stable, they are part of reproducibility.
_TAG_GRAPH = 0
_TAG_WEIGHTS = 1
_TAG_SHUFFLE = 2
_TAG_SEED_GRAPH = 3


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, index: int) -> int:
    return splitmix64(splitmix64(seed & MASK64) ^ (index & MASK64))


def make_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, index)))


class StreamExhausted(RuntimeError):
    pass


class StreamFormatError(ValueError):
    pass


class EdgeStream:
    """Single-pass source of edges bound to one worker.

    Iterating a second time raises `StreamExhausted` unless `rewind()` is
    called first (an explicit extra pass).
    """

    def __init__(self, edges: Iterable, n: int | None = None):
        self._edges = ingest(edges)
        if n is None:
            n = 1 + max((max(e.u, e.v) for e in self._edges), default=-1)
        self.n = n
        self.exhausted = False
        self._started = False

    def __len__(self) -> int:
        return len(self._edges)

    def __iter__(self) -> Iterator[WeightedEdge]:
        if self._started:
            raise StreamExhausted("stream already consumed in this pass")
        self._started = True
        yield from self._edges
        self.exhausted = True

    def rewind(self) -> None:
        self._started = False
        self.exhausted = False

    @property
    def edges(self) -> list[WeightedEdge]:
        """Backing list, for oracles and audits only."""
        return self._edges


class BufferedEdgeStream:
    """Streams edges from a producer thread through a bounded queue.

    Edges become available to the consumer as soon as the producer has
    them, one chunk at a time, the way a harness would feed a matcher from
    files.
    """

    _DONE = object()

    def __init__(self, source: Iterable[WeightedEdge], n: int, capacity: int = 8, chunk: int = 256):
        self.n = n
        self._source = source
        self._capacity = capacity
        self._chunk = chunk
        self.exhausted = False
        self._started = False
        try:
            self._len = len(source)  # type: ignore[arg-type]
        except TypeError:
            self._len = None

    def __len__(self) -> int:
        if self._len is None:
            raise TypeError("length of this stream is not known in advance")
        return self._len

    def _produce(self, q: queue.Queue) -> None:
        batch = []
        for e in self._source:
            batch.append(e)
            if len(batch) >= self._chunk:
                q.put(batch)
                batch = []
        if batch:
            q.put(batch)
        q.put(self._DONE)

    def __iter__(self) -> Iterator[WeightedEdge]:
        if self._started:
            raise StreamExhausted("stream already consumed in this pass")
        self._started = True
        q: queue.Queue = queue.Queue(maxsize=self._capacity)
        producer = threading.Thread(target=self._produce, args=(q,), daemon=True)
        producer.start()
        while True:
            batch = q.get()
            if batch is self._DONE:
                break
            yield from batch
        producer.join()
        self.exhausted = True


# --------------------------------------------------------------------------
# generators


def _weights(rng: np.random.Generator, count: int, n: int, weight_range) -> np.ndarray:
    lo, hi = weight_range if weight_range is not None else (1.0, float(n) * n)
    return rng.uniform(lo, hi, size=count)


def gen_er(n: int, p: float, seed: int, weight_range: tuple[float, float] | None = None) -> list[WeightedEdge]:
    """G(n, p): every unordered pair present independently with probability p.

    Weights are uniform on [1, n^2] unless `weight_range` overrides them.
    """
    if n < 2:
        raise ValueError("G(n, p) needs n >= 2")
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    rng = make_rng(seed, _TAG_GRAPH)
    us, vs = [], []
    for u in range(n - 1):
        hits = np.flatnonzero(rng.random(n - u - 1) < p)
        if hits.size:
            us.append(np.full(hits.size, u, dtype=np.int64))
            vs.append(hits + u + 1)
    if not us:
        return []
    u_arr = np.concatenate(us)
    v_arr = np.concatenate(vs)
    w_arr = _weights(make_rng(seed, _TAG_WEIGHTS), u_arr.size, n, weight_range)
    return [WeightedEdge(int(u), int(v), float(w)) for u, v, w in zip(u_arr, v_arr, w_arr)]


@dataclass(frozen=True)
class SeedGraphSpec:
    """G(n, p) graph that BA/UA growth starts from."""

    n: int = 256
    p: float = 0.05


def _grow(n: int, x: int, seed_graph: SeedGraphSpec, seed: int, preferential: bool, weight_range):
    if x < 1:
        raise ValueError("x must be >= 1")
    if seed_graph.n < 2:
        raise ValueError("seed graph must have at least two vertices")
    if n < seed_graph.n:
        raise ValueError(f"n={n} is smaller than the seed graph ({seed_graph.n} vertices)")
    base = gen_er(seed_graph.n, seed_graph.p, derive_seed(seed, _TAG_SEED_GRAPH))
    pairs = [(e.u, e.v) for e in base]
    rng = make_rng(seed, _TAG_GRAPH)
    # endpoint multiset: sampling an entry is sampling a vertex by degree
    ends = [x_ for pair in pairs for x_ in pair]
    for new in range(seed_graph.n, n):
        if preferential and ends:
            picks = rng.integers(0, len(ends), size=x)
            targets = [ends[i] for i in picks]
        else:
            targets = rng.integers(0, new, size=x).tolist()
        for t in targets:
            pairs.append((new, int(t)))
            ends.append(new)
            ends.append(int(t))
    ws = _weights(make_rng(seed, _TAG_WEIGHTS), len(pairs), n, weight_range)
    return [WeightedEdge(u, v, float(w)) for (u, v), w in zip(pairs, ws)]


def gen_ba(n: int, x: int, seed_graph: SeedGraphSpec = SeedGraphSpec(), seed: int = 0,
           weight_range: tuple[float, float] | None = None) -> list[WeightedEdge]:
    """Barabasi-Albert growth with replacement (multi-edges allowed).

    Each new vertex draws x neighbors with probability proportional to
    their current degree. The seed graph edges come first in the list.
    """
    return _grow(n, x, seed_graph, seed, True, weight_range)


def gen_ua(n: int, x: int, seed_graph: SeedGraphSpec = SeedGraphSpec(), seed: int = 0,
           weight_range: tuple[float, float] | None = None) -> list[WeightedEdge]:
    """Uniform attachment: growth only, neighbors uniform over existing vertices."""
    return _grow(n, x, seed_graph, seed, False, weight_range)


# --------------------------------------------------------------------------
# partitioning


class PartitionMode(str, enum.Enum):
    ROUND_ROBIN = "round-robin"
    CONTIGUOUS = "contiguous"
    SHUFFLED = "shuffled"


def partition(edges: Sequence[WeightedEdge], k: int, mode: PartitionMode | str = PartitionMode.ROUND_ROBIN,
              seed: int = 0, n: int | None = None) -> list[EdgeStream]:
    if k < 1:
        raise ValueError("k must be >= 1")
    mode = PartitionMode(mode)
    edges = list(edges)
    if n is None:
        n = 1 + max((max(e.u, e.v) for e in edges), default=-1)
    if mode is PartitionMode.SHUFFLED:
        perm = make_rng(seed, _TAG_SHUFFLE).permutation(len(edges))
        edges = [edges[i] for i in perm]
    if mode is PartitionMode.CONTIGUOUS:
        bounds = [len(edges) * i // k for i in range(k + 1)]
        parts = [edges[bounds[i]:bounds[i + 1]] for i in range(k)]
    else:
        parts = [edges[i::k] for i in range(k)]
    return [EdgeStream(p, n) for p in parts]


@dataclass(frozen=True)
class StreamSetSpec:
    """Recipe for a set of k streams: generator + partitioning + seed."""

    generator: str = "er"  # er | ba | ua | file
    n: int = 100
    p: float = 0.1
    x: int = 4
    seed_graph: SeedGraphSpec = SeedGraphSpec()
    paths: tuple[str, ...] = ()
    weight_range: tuple[float, float] | None = None
    k: int = 1
    partition_mode: PartitionMode = PartitionMode.ROUND_ROBIN
    seed: int = 0

    def edges(self) -> tuple[int, list[WeightedEdge]]:
        if self.generator == "er":
            return self.n, gen_er(self.n, self.p, self.seed, self.weight_range)
        if self.generator == "ba":
            return self.n, gen_ba(self.n, self.x, self.seed_graph, self.seed, self.weight_range)
        if self.generator == "ua":
            return self.n, gen_ua(self.n, self.x, self.seed_graph, self.seed, self.weight_range)
        if self.generator == "file":
            n, out = 0, []
            for path in self.paths:
                s = read_stream(path)
                n = max(n, s.n)
                out.extend(s.edges)
            return n, out
        raise ValueError(f"unknown generator {self.generator!r}")

    def build(self) -> tuple[int, list[EdgeStream]]:
        n, edges = self.edges()
        return n, partition(edges, self.k, self.partition_mode, self.seed, n)


# --------------------------------------------------------------------------
# on-disk format: 24-byte header then little-endian (u64, u64, f64) records

MAGIC = b"PSTRM1\0\0"
_HEADER = struct.Struct("<8sQQ")
RECORD_DTYPE = np.dtype([("u", "<u8"), ("v", "<u8"), ("w", "<f8")])


def write_stream(path: str | Path, edges: Sequence[WeightedEdge], n: int | None = None) -> None:
    edges = list(edges)
    if n is None:
        n = 1 + max((max(e.u, e.v) for e in edges), default=-1)
    records = np.empty(len(edges), dtype=RECORD_DTYPE)
    if edges:
        records["u"] = [e.u for e in edges]
        records["v"] = [e.v for e in edges]
        records["w"] = [e.w for e in edges]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, len(edges)))
        fh.write(records.tobytes())


def read_stream(path: str | Path) -> EdgeStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise StreamFormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, n, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StreamFormatError(f"{path}: bad magic {magic!r}")
    body = data[_HEADER.size:]
    expected = count * RECORD_DTYPE.itemsize
    if len(body) < expected:
        raise StreamFormatError(f"{path}: truncated, {len(body)} of {expected} record bytes present")
    if len(body) > expected:
        raise StreamFormatError(f"{path}: {len(body) - expected} trailing bytes after {count} records")
    rec = np.frombuffer(body, dtype=RECORD_DTYPE, count=count)
    edges = [WeightedEdge(int(u), int(v), float(w)) for u, v, w in rec.tolist()]
    for e in edges:
        if e.u >= n or e.v >= n:
            raise StreamFormatError(f"{path}: record {e} has an endpoint >= n={n}")
    return EdgeStream(edges, n)
