"""Segmented prompt sequences.

A sequence is an ordered list of token embeddings, each carrying one of four
segment tags: task instruction, lead (previously generated or primer) tokens,
current demonstration, and perturbation demonstration.  The instruction and
lead tokens form the "task" index set; the demonstration tokens form the
"demo" index set that drives the dual model's gradient.
"""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import InvalidDimension


class Tag(Enum):
    T_INSTR = "T_instr"
    T_LEAD = "T_lead"
    D_CURR = "D_curr"
    D_PER = "D_per"


def _unit_rows(tokens: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(tokens, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return tokens / norms


@dataclass(frozen=True)
class SegmentedSequence:
    """Immutable token/tag sequence. Positions are 1-based for the rotary code."""

    tokens: np.ndarray  # (N, d_i), one row per token
    tags: tuple[Tag, ...]
    candidate_mask: frozenset[int] | None = None
    normalized: bool = True

    def __post_init__(self):
        if self.tokens.ndim != 2:
            raise InvalidDimension("tokens must be a (N, d_i) array")
        if self.tokens.shape[0] != len(self.tags):
            raise InvalidDimension("one tag per token required")
        self.tokens.setflags(write=False)

    @classmethod
    def build(
        cls,
        instr: np.ndarray,
        demo: np.ndarray,
        leads: np.ndarray,
        per: np.ndarray | None = None,
        normalize: bool = True,
        candidate_mask=None,
    ) -> "SegmentedSequence":
        """Assemble instruction, demonstration, perturbation and lead segments."""
        parts = [np.atleast_2d(np.asarray(instr, dtype=float))]
        tags = [Tag.T_INSTR] * parts[0].shape[0]
        demo = np.atleast_2d(np.asarray(demo, dtype=float))
        parts.append(demo)
        tags += [Tag.D_CURR] * demo.shape[0]
        if per is not None and np.size(per):
            per = np.atleast_2d(np.asarray(per, dtype=float))
            parts.append(per)
            tags += [Tag.D_PER] * per.shape[0]
        leads = np.atleast_2d(np.asarray(leads, dtype=float))
        parts.append(leads)
        tags += [Tag.T_LEAD] * leads.shape[0]
        parts = [p for p in parts if p.size]
        dims = {p.shape[1] for p in parts}
        if len(dims) != 1:
            raise InvalidDimension(f"segments disagree on embedding dim: {sorted(dims)}")
        tokens = np.vstack(parts)
        if normalize:
            tokens = _unit_rows(tokens)
        mask = None if candidate_mask is None else frozenset(int(v) for v in candidate_mask)
        return cls(tokens, tuple(tags), mask, normalize)

    def __len__(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    @property
    def n_t(self) -> int:
        return sum(1 for t in self.tags if t is Tag.T_INSTR)

    @property
    def n_d(self) -> int:
        return sum(1 for t in self.tags if t is Tag.D_CURR)

    @property
    def lead_len(self) -> int:
        return sum(1 for t in self.tags if t is Tag.T_LEAD)

    def t(self, k: int) -> int:
        """Position index of the k-th generated token: N_T + N_D + k."""
        return self.n_t + self.n_d + k

    def _where(self, *tags: Tag) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.tags) if t in tags], dtype=int)

    @property
    def idx_task(self) -> np.ndarray:
        """0-based indices of the task side (instruction + lead tokens)."""
        return self._where(Tag.T_INSTR, Tag.T_LEAD)

    @property
    def idx_demo(self) -> np.ndarray:
        """0-based indices of the current demonstration tokens."""
        return self._where(Tag.D_CURR)

    @property
    def idx_per(self) -> np.ndarray:
        """0-based indices of the perturbation demonstration tokens."""
        return self._where(Tag.D_PER)

    def append(self, embedding: np.ndarray, tag: Tag = Tag.T_LEAD) -> "SegmentedSequence":
        """Return a new sequence with one token appended under the same norm policy."""
        emb = np.asarray(embedding, dtype=float).reshape(1, -1)
        if emb.shape[1] != self.dim:
            raise InvalidDimension("appended embedding has wrong dimension")
        if self.normalized:
            emb = _unit_rows(emb)
        return replace(
            self,
            tokens=np.vstack([self.tokens, emb]),
            tags=self.tags + (tag,),
        )

    def truncate(self, length: int) -> "SegmentedSequence":
        return replace(self, tokens=self.tokens[:length], tags=self.tags[:length])

    def with_tokens(self, tokens: np.ndarray) -> "SegmentedSequence":
        """Same tags and mask, different embeddings (used between layers)."""
        if tokens.shape[0] != len(self):
            raise InvalidDimension("token count must be preserved")
        return replace(self, tokens=np.asarray(tokens, dtype=float), normalized=False)
