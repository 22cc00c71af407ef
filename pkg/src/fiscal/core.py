"""Shared domain types for the claim-document pipeline.

Every stage exchanges the same immutable value objects defined here:
documents, claims, labels, perturbation-module kinds and labeled triplets,
plus the text normalization and content hashing that give them stable
identity across runs.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

# Content identity uses a fixed, seeded, non-cryptographic 128-bit hash so
# keys are reproducible across runs and platforms.  Both constants are
# recorded in every dataset manifest.
HASH_ALGORITHM = "murmur3-x64-128"
HASH_SEED = 0x9747B28C

_MASK64 = (1 << 64) - 1


class FiscalError(Exception):
    """Base class for all pipeline errors."""


class PolarityMismatch(FiscalError):
    """Triplet label disagrees with the fixed polarity of its provenance."""


class StaleKey(FiscalError):
    """Stored content key no longer matches the triplet's text."""


class EmptyField(FiscalError):
    """A required text field is empty after normalization."""


class EmptyInput(FiscalError):
    """An aggregate operation received no items."""


def normalize_text(raw: str) -> str:
    """Canonical text form: NFC, whitespace runs collapsed, ends stripped."""
    composed = unicodedata.normalize("NFC", raw)
    return " ".join(composed.split())


def _rotl64(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & _MASK64


def _fmix64(k: int) -> int:
    k ^= k >> 33
    k = (k * 0xFF51AFD7ED558CCD) & _MASK64
    k ^= k >> 33
    k = (k * 0xC4CEB9FE1A85EC53) & _MASK64
    k ^= k >> 33
    return k


def murmur3_x64_128(data: bytes, seed: int = HASH_SEED) -> bytes:
    """MurmurHash3 x64 128-bit digest (16 bytes, canonical output order)."""
    length = len(data)
    nblocks = length // 16
    h1 = seed & 0xFFFFFFFF
    h2 = seed & 0xFFFFFFFF
    c1 = 0x87C37B91114253D5
    c2 = 0x4CF5AD432745937F

    for i in range(nblocks):
        off = i * 16
        k1 = int.from_bytes(data[off : off + 8], "little")
        k2 = int.from_bytes(data[off + 8 : off + 16], "little")

        k1 = (k1 * c1) & _MASK64
        k1 = _rotl64(k1, 31)
        k1 = (k1 * c2) & _MASK64
        h1 ^= k1
        h1 = _rotl64(h1, 27)
        h1 = (h1 + h2) & _MASK64
        h1 = (h1 * 5 + 0x52DCE729) & _MASK64

        k2 = (k2 * c2) & _MASK64
        k2 = _rotl64(k2, 33)
        k2 = (k2 * c1) & _MASK64
        h2 ^= k2
        h2 = _rotl64(h2, 31)
        h2 = (h2 + h1) & _MASK64
        h2 = (h2 * 5 + 0x38495AB5) & _MASK64

    tail = data[nblocks * 16 :]
    if len(tail) > 8:
        k2 = int.from_bytes(tail[8:16], "little")
        k2 = (k2 * c2) & _MASK64
        k2 = _rotl64(k2, 33)
        k2 = (k2 * c1) & _MASK64
        h2 ^= k2
    if tail:
        k1 = int.from_bytes(tail[:8], "little")
        k1 = (k1 * c1) & _MASK64
        k1 = _rotl64(k1, 31)
        k1 = (k1 * c2) & _MASK64
        h1 ^= k1

    h1 ^= length
    h2 ^= length
    h1 = (h1 + h2) & _MASK64
    h2 = (h2 + h1) & _MASK64
    h1 = _fmix64(h1)
    h2 = _fmix64(h2)
    h1 = (h1 + h2) & _MASK64
    h2 = (h2 + h1) & _MASK64

    return h1.to_bytes(8, "little") + h2.to_bytes(8, "little")


_SEP = "\x1f"


def stable_digest(*parts: str) -> str:
    """32-hex-char digest over normalized parts, unit-separator joined."""
    payload = _SEP.join(normalize_text(p) for p in parts)
    return murmur3_x64_128(payload.encode("utf-8")).hex()


def content_key(claim: str, document: str) -> str:
    """Identity key of a (claim, document) pair, insensitive to whitespace."""
    return stable_digest(claim, document)


def stable_config_hash(config: Mapping) -> str:
    """Short digest of a config mapping, stable under key ordering."""
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    return stable_digest(canonical)[:16]


class Label(Enum):
    SUPPORTED = 1
    UNSUPPORTED = 0

    def to_int(self) -> int:
        return self.value

    @classmethod
    def from_int(cls, value: int) -> "Label":
        if value == 1:
            return cls.SUPPORTED
        if value == 0:
            return cls.UNSUPPORTED
        raise ValueError(f"label must be 0 or 1, got {value!r}")


class ModuleKind(Enum):
    """Perturbation modules plus the unperturbed positive pair.

    Declaration order is the canonical reporting order.  Each kind carries a
    fixed label polarity: the label of a triplet is decided by the module
    that produced it, never by model output.
    """

    PARAPHRASE = "paraphrase"
    CONFLICT_INSERTION = "conflict_insertion"
    FACT_EXCLUSION = "fact_exclusion"
    VALUE_DISTORTION = "value_distortion"
    MISATTRIBUTION = "misattribution"
    SUMMARIZATION = "summarization"
    ORIGINAL = "original"

    @property
    def polarity(self) -> Label:
        if self in _POSITIVE_POLARITY:
            return Label.SUPPORTED
        return Label.UNSUPPORTED

    @classmethod
    def from_tag(cls, tag: str) -> "ModuleKind":
        try:
            return cls(tag)
        except ValueError:
            raise ValueError(f"unknown module kind tag {tag!r}") from None


_POSITIVE_POLARITY = frozenset(
    {ModuleKind.PARAPHRASE, ModuleKind.SUMMARIZATION, ModuleKind.ORIGINAL}
)

# Kinds a synthesis task may carry (ORIGINAL pairs are emitted directly,
# without a model call).
POSITIVE_KINDS = (ModuleKind.PARAPHRASE, ModuleKind.SUMMARIZATION)
NEGATIVE_KINDS = (
    ModuleKind.CONFLICT_INSERTION,
    ModuleKind.FACT_EXCLUSION,
    ModuleKind.VALUE_DISTORTION,
    ModuleKind.MISATTRIBUTION,
)
SYNTHESIS_KINDS = (
    ModuleKind.PARAPHRASE,
    ModuleKind.CONFLICT_INSERTION,
    ModuleKind.FACT_EXCLUSION,
    ModuleKind.VALUE_DISTORTION,
    ModuleKind.MISATTRIBUTION,
    ModuleKind.SUMMARIZATION,
)


@dataclass(frozen=True)
class Document:
    """A financial evidence text with stable identity within a corpus."""

    doc_id: str
    text: str
    source: str = ""

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise EmptyField("document doc_id is empty")
        if not normalize_text(self.text):
            raise EmptyField(f"document {self.doc_id!r} text is empty")


@dataclass(frozen=True)
class Claim:
    """An atomic numerical statement extracted from a document."""

    claim_id: str
    text: str
    parent_doc_id: str
    numeric_spans: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if not normalize_text(self.text):
            raise EmptyField("claim text is empty")
        if not self.parent_doc_id:
            raise EmptyField("claim parent_doc_id is empty")
        object.__setattr__(
            self, "numeric_spans", tuple(tuple(s) for s in self.numeric_spans)
        )
        last_end = 0
        for start, end in self.numeric_spans:
            if not (0 <= start < end <= len(self.text)):
                raise ValueError(
                    f"numeric span ({start}, {end}) out of bounds for claim "
                    f"of length {len(self.text)}"
                )
            if start < last_end:
                raise ValueError(f"numeric span ({start}, {end}) overlaps previous span")
            last_end = end


@dataclass(frozen=True)
class LabeledTriplet:
    """A (claim, document, label) unit with provenance and content identity.

    Claim and document are stored as inline text snapshots so a triplet file
    is self-contained for training and evaluation.
    """

    triplet_id: str
    claim: str
    document: str
    label: Label
    provenance: ModuleKind
    parent_doc_id: str
    parent_claim_id: str
    content_key: str
    split: Optional[str] = None

    @classmethod
    def build(
        cls,
        claim: str,
        document: str,
        provenance: ModuleKind,
        parent_doc_id: str,
        parent_claim_id: str,
    ) -> "LabeledTriplet":
        """Construct with the label and ids derived from content and kind."""
        key = content_key(claim, document)
        triplet_id = stable_digest(claim, document, provenance.value, parent_claim_id)
        return cls(
            triplet_id=triplet_id,
            claim=claim,
            document=document,
            label=provenance.polarity,
            provenance=provenance,
            parent_doc_id=parent_doc_id,
            parent_claim_id=parent_claim_id,
            content_key=key,
        )

    def with_split(self, split: str) -> "LabeledTriplet":
        return replace(self, split=split)


def validate_triplet(t: LabeledTriplet) -> LabeledTriplet:
    """Return ``t`` unchanged if all triplet invariants hold."""
    if not normalize_text(t.claim):
        raise EmptyField(f"triplet {t.triplet_id}: claim is empty")
    if not normalize_text(t.document):
        raise EmptyField(f"triplet {t.triplet_id}: document is empty")
    if t.label is not t.provenance.polarity:
        raise PolarityMismatch(
            f"triplet {t.triplet_id}: label {t.label.name} does not match "
            f"polarity of {t.provenance.value}"
        )
    recomputed = content_key(t.claim, t.document)
    if recomputed != t.content_key:
        raise StaleKey(
            f"triplet {t.triplet_id}: stored key {t.content_key} != "
            f"recomputed {recomputed}"
        )
    return t


# --- serialization ---------------------------------------------------------


def triplet_to_record(t: LabeledTriplet) -> dict:
    record = {
        "triplet_id": t.triplet_id,
        "claim": t.claim,
        "document": t.document,
        "label": t.label.to_int(),
        "provenance": t.provenance.value,
        "parent_doc_id": t.parent_doc_id,
        "parent_claim_id": t.parent_claim_id,
        "content_key": t.content_key,
    }
    if t.split is not None:
        record["split"] = t.split
    return record


def triplet_from_record(record: Mapping) -> LabeledTriplet:
    return LabeledTriplet(
        triplet_id=record["triplet_id"],
        claim=record["claim"],
        document=record["document"],
        label=Label.from_int(record["label"]),
        provenance=ModuleKind.from_tag(record["provenance"]),
        parent_doc_id=record["parent_doc_id"],
        parent_claim_id=record["parent_claim_id"],
        content_key=record["content_key"],
        split=record.get("split"),
    )


def document_to_record(d: Document) -> dict:
    return {"doc_id": d.doc_id, "text": d.text, "source": d.source}


def document_from_record(record: Mapping) -> Document:
    return Document(
        doc_id=record["doc_id"],
        text=record["text"],
        source=record.get("source", ""),
    )


def write_jsonl(
    path: str | Path, records: Iterable[Mapping], header: Optional[str] = None
) -> None:
    """Write JSON Lines; an optional header becomes a '#'-prefixed first line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        if header is not None:
            line = header if header.startswith("#") else f"# {header}"
            fh.write(line + "\n")
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> Iterator[dict]:
    """Iterate JSON Lines records, skipping blank and '#'-comment lines."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield json.loads(stripped)


def read_documents(path: str | Path) -> list[Document]:
    docs = [document_from_record(r) for r in read_jsonl(path)]
    seen: set[str] = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r} in corpus {path}")
        seen.add(doc.doc_id)
    return docs


def write_documents(path: str | Path, docs: Sequence[Document]) -> None:
    write_jsonl(path, (document_to_record(d) for d in docs))


def read_triplets(path: str | Path) -> list[LabeledTriplet]:
    return [triplet_from_record(r) for r in read_jsonl(path)]


def write_triplets(
    path: str | Path, triplets: Sequence[LabeledTriplet], header: Optional[str] = None
) -> None:
    write_jsonl(path, (triplet_to_record(t) for t in triplets), header=header)
