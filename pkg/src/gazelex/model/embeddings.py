"""Adapter over precomputed per-token context embeddings.

The file is an .npz holding one float matrix per document (key = doc_id,
shape = (n_tokens, dim)), produced by whatever external encoder the user
ran over the tokenized documents. Rows are looked up by (doc_id, token
index); the adapter never computes gradients because the rows are data.
"""

from __future__ import annotations

import numpy as np

from ..errors import ModelError


class EmbeddingStore:
    def __init__(self, matrices: dict[str, np.ndarray], dim: int | None = None):
        self.matrices = {k: np.asarray(v, dtype=np.float64) for k, v in matrices.items()}
        for doc_id, m in self.matrices.items():
            if m.ndim != 2:
                raise ModelError(f"embedding matrix for {doc_id!r} must be 2-D")
            if dim is not None and m.shape[1] != dim:
                raise ModelError(
                    f"embedding matrix for {doc_id!r} has width {m.shape[1]}, expected {dim}"
                )

    @property
    def dim(self) -> int:
        return next(iter(self.matrices.values())).shape[1]

    def lookup(self, doc_id: str, token_slice: tuple[int, int]) -> np.ndarray:
        if doc_id not in self.matrices:
            raise ModelError(f"no embedding rows for document {doc_id!r}")
        m = self.matrices[doc_id]
        start, end = token_slice
        if start < 0 or end > m.shape[0]:
            raise ModelError(
                f"embedding rows [{start}, {end}) out of range for {doc_id!r} ({m.shape[0]} tokens)"
            )
        return m[start:end]

    def save(self, path) -> None:
        with open(path, "wb") as f:
            np.savez(f, **self.matrices)

    @classmethod
    def load(cls, path, dim: int | None = None) -> "EmbeddingStore":
        try:
            with np.load(path) as data:
                matrices = {k: np.array(data[k]) for k in data.files}
        except (OSError, ValueError) as exc:
            raise ModelError(f"{path}: cannot read embedding file: {exc}") from exc
        return cls(matrices, dim=dim)
