"""Advanced feature computation and the fixed 1422-dimension vector.

Layout (indices):

    [0, 100)     hashed API tokens of all region subgraphs together
    [100, 200)   hashed opcode tokens of all region subgraphs together
    [200, 1200)  ten consecutive 100-slot subgraph signature vectors
    [1200, 1400) whole-CFG signature (completely preprocessed graph)
    [1400, 1420) hashed top-15 opcode trigrams, weighted by tf-idf
    [1420]       NOP count of the whole binary
    [1421]       section virtual/physical size ratio flag

Absent regions leave their slots at zero; a failed extraction produces the
all-default (zero) vector.
"""
from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .snapshot import Cfg, DisassemblySnapshot, Section
from .regions import Subgraph

API_DIM = 100
OPCODE_DIM = 100
SIG_DIM = 100
MAX_REGION_SLOTS = 10
WHOLE_SIG_DIM = 200
TRIGRAM_DIM = 20
TRIGRAM_K = 15
VECTOR_DIM = (
    API_DIM + OPCODE_DIM + MAX_REGION_SLOTS * SIG_DIM + WHOLE_SIG_DIM + TRIGRAM_DIM + 2
)
RATIO_THRESHOLD = 1.5

CHILD_BITS = 2
PARENT_BITS = 6
CHILD_MAX = (1 << CHILD_BITS) - 1   # 3
PARENT_MAX = (1 << PARENT_BITS) - 1  # 63


@dataclass(frozen=True)
class NodeSignature:
    """8-bit structural code: low 2 bits children, high 6 bits parents."""

    parents: int
    children: int

    @property
    def value(self) -> int:
        return self.parents * (CHILD_MAX + 1) + self.children


def node_signature(parents: int, children: int) -> NodeSignature:
    """Saturating counts: fan-out caps at 3, fan-in at 63, never wraps."""
    if parents < 0 or children < 0:
        raise ValueError("degree counts must be non-negative")
    return NodeSignature(parents=min(parents, PARENT_MAX), children=min(children, CHILD_MAX))


def signature_sequence(order: Sequence[int], degree_graph: Cfg) -> list[NodeSignature]:
    """Signatures of ``order`` using ``degree_graph``'s fan-in/fan-out.

    Region readouts pass the raw CFG here: edges dropped during loop removal
    still describe the node's true fan-in/fan-out, and keeping them makes
    loop-heavy structures distinguishable in the signature.
    """
    return [
        node_signature(degree_graph.in_degree(n), degree_graph.out_degree(n))
        for n in order
    ]


def signature_vector(sig_seq: Sequence[NodeSignature], dim: int) -> np.ndarray:
    """First ``dim`` signature values padded (or truncated) to a fixed width."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    vec = np.zeros(dim, dtype=np.float64)
    for i, sig in enumerate(sig_seq[:dim]):
        vec[i] = float(sig.value)
    return vec


class TokenKind(Enum):
    OPCODE = "opcode"
    API = "api"


def sequence_tokens(
    sub: Subgraph,
    cfg: Cfg,
    kind: TokenKind,
    api_map: Optional[Mapping[int, Sequence[str]]] = None,
) -> list[str]:
    """Flatten the subgraph's BFS order into opcode or API tokens."""
    tokens: list[str] = []
    if kind is TokenKind.OPCODE:
        for node in sub.bfs_order:
            tokens.extend(cfg.nodes[node].mnemonics())
    else:
        api_map = api_map or {}
        for node in sub.bfs_order:
            tokens.extend(api_map.get(node, ()))
    return tokens


def _hash64(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little", signed=False)


def hash_tokens(tokens: Iterable[tuple[str, float]], dim: int) -> np.ndarray:
    """Signed hashing trick: stable 64-bit hash picks slot and sign.

    index = h mod dim, sign = +1 when bit 63 of h is clear, else -1; the
    weight accumulates into the slot.  blake2b keeps this reproducible
    across runs, processes and platforms (Python's hash() is not).
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    vec = np.zeros(dim, dtype=np.float64)
    for token, weight in tokens:
        h = _hash64(token)
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        vec[h % dim] += sign * weight
    return vec


@dataclass
class IdfTable:
    """Document frequencies of opcode trigrams over a training corpus."""

    doc_count: int = 0
    df: dict[str, int] = field(default_factory=dict)

    def add_document(self, trigrams: Iterable[str]) -> None:
        self.doc_count += 1
        for t in set(trigrams):
            self.df[t] = self.df.get(t, 0) + 1

    def idf(self, trigram: str) -> float:
        # Smoothed form; unseen trigrams use df = 0.
        return math.log((1 + self.doc_count) / (1 + self.df.get(trigram, 0))) + 1.0

    def to_json_dict(self) -> dict:
        return {"version": 1, "doc_count": self.doc_count, "df": dict(sorted(self.df.items()))}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "IdfTable":
        return cls(doc_count=int(doc["doc_count"]), df={str(k): int(v) for k, v in doc["df"].items()})


TRIGRAM_JOIN = "|"


def trigrams_of(stream: Sequence[str]) -> list[str]:
    return [TRIGRAM_JOIN.join(stream[i : i + 3]) for i in range(len(stream) - 2)]


def opcode_stream(snapshot: DisassemblySnapshot) -> list[str]:
    """All mnemonics of the binary in block-address order."""
    stream: list[str] = []
    for block in sorted(snapshot.entry_blocks, key=lambda b: b.start_addr):
        stream.extend(block.mnemonics())
    return stream


def top_trigrams(
    stream: Sequence[str], idf: IdfTable, k: int = TRIGRAM_K
) -> list[tuple[str, float]]:
    """Top-k trigrams by tf-idf; ties break lexicographically ascending."""
    grams = trigrams_of(stream)
    if not grams:
        return []
    total = len(grams)
    counts = Counter(grams)
    weighted = [(t, (c / total) * idf.idf(t)) for t, c in counts.items()]
    weighted.sort(key=lambda tw: (-tw[1], tw[0]))
    return weighted[:k]


def nop_count(snapshot: DisassemblySnapshot) -> int:
    return sum(
        1
        for block in snapshot.entry_blocks
        for ins in block.instructions
        if ins.mnemonic == "nop"
    )


def section_ratio_flag(sections: Sequence[Section], threshold: float = RATIO_THRESHOLD) -> int:
    """1 iff some section's virtual/physical size ratio exceeds the threshold.

    A zero physical size with data in memory is the degenerate ratio the
    check is after (uninitialized/expanded sections), so it counts as 1.
    """
    for sec in sections:
        if sec.physical_size == 0:
            if sec.virtual_size > 0:
                return 1
        elif sec.virtual_size / sec.physical_size > threshold:
            return 1
    return 0


@dataclass(frozen=True)
class RegionFeatures:
    """Per-region readouts feeding the assembled vector."""

    seed: int
    opcode_tokens: tuple[str, ...]
    api_tokens: tuple[str, ...]
    signatures: tuple[NodeSignature, ...]


@dataclass(frozen=True)
class FeatureDims:
    api_dim: int = API_DIM
    opcode_dim: int = OPCODE_DIM
    sig_dim: int = SIG_DIM
    max_regions: int = MAX_REGION_SLOTS
    whole_sig_dim: int = WHOLE_SIG_DIM
    trigram_dim: int = TRIGRAM_DIM

    @property
    def total(self) -> int:
        return (
            self.api_dim
            + self.opcode_dim
            + self.max_regions * self.sig_dim
            + self.whole_sig_dim
            + self.trigram_dim
            + 2
        )


def assemble_vector(
    regions: Sequence[RegionFeatures],
    whole_signatures: Sequence[NodeSignature],
    trigram_weights: Sequence[tuple[str, float]],
    nops: int,
    ratio_flag: int,
    dims: FeatureDims = FeatureDims(),
) -> np.ndarray:
    """Fixed-layout feature vector; missing parts stay zero.

    API and opcode tokens of all regions share one hashed block each (bag
    semantics, weight 1 per token); order information survives only through
    the per-region signature vectors.
    """
    if len(regions) > dims.max_regions:
        raise ValueError(f"at most {dims.max_regions} regions fit the layout")
    vec = np.zeros(dims.total, dtype=np.float64)
    offset = 0

    api_tokens = [(t, 1.0) for r in regions for t in r.api_tokens]
    vec[offset : offset + dims.api_dim] = hash_tokens(api_tokens, dims.api_dim)
    offset += dims.api_dim

    opcode_tokens = [(t, 1.0) for r in regions for t in r.opcode_tokens]
    vec[offset : offset + dims.opcode_dim] = hash_tokens(opcode_tokens, dims.opcode_dim)
    offset += dims.opcode_dim

    for i in range(dims.max_regions):
        if i < len(regions):
            vec[offset : offset + dims.sig_dim] = signature_vector(
                regions[i].signatures, dims.sig_dim
            )
        offset += dims.sig_dim

    vec[offset : offset + dims.whole_sig_dim] = signature_vector(
        whole_signatures, dims.whole_sig_dim
    )
    offset += dims.whole_sig_dim

    vec[offset : offset + dims.trigram_dim] = hash_tokens(trigram_weights, dims.trigram_dim)
    offset += dims.trigram_dim

    vec[offset] = float(nops)
    vec[offset + 1] = float(ratio_flag)
    return vec
