"""A deterministic toy dual encoder with an exact analytic backward pass.

Texts are lowercased, split into alphanumeric runs, and feature-hashed
(FNV-1a 64-bit) into ``hash_dim`` buckets. Encoding is a count-weighted
mean of embedding rows, a linear projection, and L2 normalization, so
the similarity of two encodings is their cosine. Query and passage sides
share the same weights.

Texts with no tokens (or a vanishing pre-normalization vector) map to a
fixed fallback, the first standard basis vector, and receive zero
gradient; the fallback is not trainable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .prng import Xoshiro256StarStar

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# Pre-normalization vectors shorter than this hit the fallback path.
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class EncoderConfig:
    hash_dim: int = 1 << 15
    embed_dim: int = 64
    proj_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if min(self.hash_dim, self.embed_dim, self.proj_dim) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.hash_dim & (self.hash_dim - 1) != 0:
            raise ValueError(f"hash_dim must be a power of two, got {self.hash_dim}")


@dataclass
class EncoderParams:
    """Trainable weights: hash_dim x embed_dim embedding table and
    embed_dim x proj_dim projection."""

    config: EncoderConfig
    embedding: np.ndarray
    projection: np.ndarray

    def __post_init__(self):
        expect_e = (self.config.hash_dim, self.config.embed_dim)
        expect_p = (self.config.embed_dim, self.config.proj_dim)
        if self.embedding.shape != expect_e or self.projection.shape != expect_p:
            raise ValueError(
                f"parameter shapes {self.embedding.shape}/{self.projection.shape} "
                f"do not match config {expect_e}/{expect_p}"
            )
        if not (np.isfinite(self.embedding).all() and np.isfinite(self.projection).all()):
            raise ValueError("parameters must be finite")

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, self.embedding.copy(), self.projection.copy())


@dataclass
class EncoderGrads:
    """Gradient buffers shaped like EncoderParams."""

    embedding: np.ndarray
    projection: np.ndarray

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "EncoderGrads":
        return cls(np.zeros_like(params.embedding), np.zeros_like(params.projection))

    def add_(self, other: "EncoderGrads") -> None:
        self.embedding += other.embedding
        self.projection += other.projection

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.embedding).all() and np.isfinite(self.projection).all())


def fnv1a64(token: str) -> int:
    """FNV-1a 64-bit hash of the token's UTF-8 bytes."""
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def tokenize_hash(text: str, hash_dim: int) -> dict[int, int]:
    """Lowercase, split on non-alphanumeric runs, hash each token into a
    bucket. Returns bucket -> occurrence count; empty text gives {}."""
    if hash_dim & (hash_dim - 1) != 0 or hash_dim < 1:
        raise ValueError(f"hash_dim must be a power of two, got {hash_dim}")
    counts: dict[int, int] = {}
    for token in _TOKEN_RE.findall(text.lower()):
        bucket = fnv1a64(token) & (hash_dim - 1)
        counts[bucket] = counts.get(bucket, 0) + 1
    return counts


@dataclass
class TokenBatch:
    """Hashed token counts for a batch of texts, as a sparse row-normalized
    count matrix (rows sum to 1 except all-zero rows for empty texts)."""

    weights: sp.csr_matrix  # n_texts x hash_dim, count / total per row
    has_tokens: np.ndarray  # bool per row

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def prepare_tokens(texts: Sequence[str], hash_dim: int) -> TokenBatch:
    """Tokenize and hash a batch once; reusable across encode calls."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    has_tokens = np.zeros(len(texts), dtype=bool)
    for i, text in enumerate(texts):
        counts = tokenize_hash(text, hash_dim)
        if counts:
            has_tokens[i] = True
            total = sum(counts.values())
            for bucket in sorted(counts):
                indices.append(bucket)
                data.append(counts[bucket] / total)
        indptr.append(len(indices))
    weights = sp.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(texts), hash_dim),
    )
    return TokenBatch(weights=weights, has_tokens=has_tokens)


@dataclass
class EmbeddingBatch:
    """Unit-norm output vectors plus the intermediates backward needs."""

    vectors: np.ndarray       # n x proj_dim, rows unit norm (or fallback e1)
    pooled: np.ndarray        # n x embed_dim, count-weighted embedding mean
    pre_norm: np.ndarray      # n x proj_dim, pooled @ projection
    norms: np.ndarray         # n, L2 norms of pre_norm
    active: np.ndarray        # bool per row; False rows are fallback
    tokens: TokenBatch

    @property
    def n(self) -> int:
        return self.vectors.shape[0]


def encode_tokens(params: EncoderParams, tokens: TokenBatch) -> EmbeddingBatch:
    """Forward pass from pre-hashed tokens."""
    pooled = tokens.weights @ params.embedding
    pre_norm = pooled @ params.projection
    norms = np.linalg.norm(pre_norm, axis=1)
    active = tokens.has_tokens & (norms >= NORM_FLOOR)
    safe = np.where(norms < NORM_FLOOR, 1.0, norms)
    vectors = pre_norm / safe[:, None]
    if not active.all():
        fallback = np.zeros(params.config.proj_dim)
        fallback[0] = 1.0
        vectors[~active] = fallback
    return EmbeddingBatch(
        vectors=vectors, pooled=pooled, pre_norm=pre_norm,
        norms=norms, active=active, tokens=tokens,
    )


def encode_forward(params: EncoderParams, texts: Sequence[str]) -> EmbeddingBatch:
    """Encode raw texts to unit-norm vectors."""
    return encode_tokens(params, prepare_tokens(texts, params.config.hash_dim))


def encode_backward(
    batch: EmbeddingBatch, upstream_grad: np.ndarray, params: EncoderParams
) -> EncoderGrads:
    """Exact gradients of the forward map for the scalar loss
    <upstream_grad, vectors>.

    The normalization Jacobian is (I - y y^T) / ||u||; fallback rows
    contribute nothing.
    """
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape != batch.vectors.shape:
        raise ValueError(
            f"upstream_grad shape {upstream_grad.shape} != batch shape {batch.vectors.shape}"
        )
    if not np.isfinite(upstream_grad).all():
        raise ValueError("upstream_grad must be finite")
    # d pre_norm = (g - (g . y) y) / ||u||, zeroed on fallback rows
    y = batch.vectors
    inner = np.einsum("ij,ij->i", upstream_grad, y)
    safe = np.where(batch.active, batch.norms, 1.0)
    d_pre = (upstream_grad - inner[:, None] * y) / safe[:, None]
    d_pre[~batch.active] = 0.0
    d_projection = batch.pooled.T @ d_pre
    d_pooled = d_pre @ params.projection.T
    d_embedding = np.asarray((batch.tokens.weights.T @ d_pooled))
    return EncoderGrads(embedding=d_embedding, projection=d_projection)


def init_params(config: EncoderConfig) -> EncoderParams:
    """Uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out)) per matrix,
    drawn from the seeded deterministic generator."""
    rng = Xoshiro256StarStar(config.seed)
    def uniform_matrix(rows: int, cols: int) -> np.ndarray:
        a = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-a, a, rows * cols).reshape(rows, cols)
    embedding = uniform_matrix(config.hash_dim, config.embed_dim)
    projection = uniform_matrix(config.embed_dim, config.proj_dim)
    return EncoderParams(config=config, embedding=embedding, projection=projection)


def make_scorer(params: EncoderParams):
    """Similarity scorer over raw texts: cosine of the two encodings."""
    def scorer(query_texts: Sequence[str], doc_texts: Sequence[str]) -> np.ndarray:
        q = encode_forward(params, query_texts).vectors
        d = encode_forward(params, doc_texts).vectors
        return q @ d.T
    return scorer


def save_checkpoint(params: EncoderParams, step: int, path: str | Path) -> None:
    """Write a checkpoint: one JSON header line, then the embedding and
    projection matrices as raw little-endian float32, row-major."""
    cfg = params.config
    header = {
        "hash_dim": cfg.hash_dim, "embed_dim": cfg.embed_dim,
        "proj_dim": cfg.proj_dim, "seed": cfg.seed, "step": step,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(params.embedding, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(params.projection, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[EncoderParams, int]:
    """Read a checkpoint written by ``save_checkpoint``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
            cfg = EncoderConfig(
                hash_dim=header["hash_dim"], embed_dim=header["embed_dim"],
                proj_dim=header["proj_dim"], seed=header["seed"],
            )
            step = int(header["step"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}: malformed checkpoint header") from exc
        n_embed = cfg.hash_dim * cfg.embed_dim
        n_proj = cfg.embed_dim * cfg.proj_dim
        raw = f.read()
    expected = 4 * (n_embed + n_proj)
    if len(raw) != expected:
        raise ValueError(
            f"{path}: checkpoint payload is {len(raw)} bytes, expected {expected}"
        )
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    embedding = flat[:n_embed].reshape(cfg.hash_dim, cfg.embed_dim)
    projection = flat[n_embed:].reshape(cfg.embed_dim, cfg.proj_dim)
    return EncoderParams(config=cfg, embedding=embedding, projection=projection), step
