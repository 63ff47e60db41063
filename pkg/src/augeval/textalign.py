"""R-Precision@K over precomputed image and prompt embeddings.

Each record holds one image embedding and 100 candidate prompt
embeddings (the matched prompt at index 0 plus 99 mismatched ones).
Candidates are ranked by cosine similarity; ties break toward the lower
candidate index, so the matched prompt wins exact ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError, ValidationError

CANDIDATES = 100


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValidationError(f"dim mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValidationError("cosine similarity undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


@dataclass
class AlignmentRecord:
    """One image embedding against its 100 prompt candidates.

    candidates[0] is the matched prompt.
    """

    image: np.ndarray
    candidates: np.ndarray  # (100, d)

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.candidates = np.asarray(self.candidates, dtype=np.float64)
        if self.candidates.shape != (CANDIDATES, self.image.shape[0]):
            raise ValidationError(
                f"need exactly {CANDIDATES} candidates of dim {self.image.shape[0]}, "
                f"got {self.candidates.shape}"
            )


def rank_prompts(record: AlignmentRecord) -> int:
    """1-based rank of the matched prompt among all candidates."""
    sims = record.candidates @ record.image
    norms = np.linalg.norm(record.candidates, axis=1) * np.linalg.norm(record.image)
    if (norms == 0).any():
        raise ValidationError("cosine similarity undefined for zero vectors")
    sims = sims / norms
    # Lower index wins ties, so only strictly larger similarities outrank
    # the matched prompt at index 0.
    return 1 + int(np.sum(sims > sims[0]))


def r_precision(records: list[AlignmentRecord], k: int) -> float:
    """Fraction of records whose matched prompt ranks within the top K."""
    if not 1 <= k <= CANDIDATES:
        raise ValidationError(f"K must be in [1, {CANDIDATES}], got {k}")
    if not records:
        raise MetricError("R-Precision undefined: no records")
    hits = sum(1 for r in records if rank_prompts(r) <= k)
    return hits / len(records)


def build_alignment_records(
    image_embs: np.ndarray,
    prompt_embs: np.ndarray,
    seed: int,
) -> list[AlignmentRecord]:
    """Assemble records by sampling mismatches from other rows' prompts.

    Row i of prompt_embs is the matched prompt of image i; its 99
    mismatched candidates are drawn without replacement from the other
    rows, deterministically per seed.
    """
    image_embs = np.asarray(image_embs, dtype=np.float64)
    prompt_embs = np.asarray(prompt_embs, dtype=np.float64)
    if image_embs.shape != prompt_embs.shape or image_embs.ndim != 2:
        raise ValidationError(
            f"need matching NxD embedding matrices, got {image_embs.shape} "
            f"and {prompt_embs.shape}"
        )
    n = len(image_embs)
    if n < CANDIDATES:
        raise ValidationError(
            f"need at least {CANDIDATES} records to draw 99 mismatches, got {n}"
        )
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        others = rng.choice(n - 1, size=CANDIDATES - 1, replace=False)
        others = others + (others >= i)  # skip row i
        cand = np.concatenate([prompt_embs[i:i + 1], prompt_embs[others]], axis=0)
        records.append(AlignmentRecord(image=image_embs[i], candidates=cand))
    return records
