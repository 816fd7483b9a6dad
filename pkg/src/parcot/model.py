"""Token models and the slot-addressed KV cache.

The forward contract every model satisfies: logits for a query may depend
only on cache entries its mask row marks visible. Masked keys are excluded
before softmax normalization, so their attention weight is exactly zero, and
each query is computed through its own code path -- a packed pass is
bit-identical, query by query, to running each query alone against the same
visible cache.

Two models ship:
  - ReferenceTransformer: a tiny deterministic numpy transformer (seeded
    init, sinusoidal encodings evaluated at explicit layout positions).
  - MockHashModel: a pure function of (query field, step, visible multiset);
    any mask leak flips its output token, making it the strict oracle for
    mask soundness tests.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .layout import PackedLayout


class ModelError(ValueError):
    pass


class CacheError(ValueError):
    pass


# -----------------------------------------------------------------------------
# KV cache
# -----------------------------------------------------------------------------
class KvCache:
    """Per-position store for one decode session.

    Holds the recorded token id at every written position plus, for
    transformer models, per-layer key/value rows. A position is written at
    most once; padding positions of short fields simply never get entries.
    """

    def __init__(self, total_len: int):
        self.total_len = total_len
        self.tokens = np.full(total_len, -1, dtype=np.int64)
        self._written = np.zeros(total_len, dtype=bool)
        self.k_layers: list[np.ndarray] | None = None
        self.v_layers: list[np.ndarray] | None = None

    @property
    def written_count(self) -> int:
        return int(self._written.sum())

    def written_positions(self) -> np.ndarray:
        """Written positions in ascending order (the mask column order)."""
        return np.nonzero(self._written)[0]

    def is_written(self, position: int) -> bool:
        return bool(self._written[position])

    def check_unwritten(self, positions: Sequence[int]) -> None:
        for p in positions:
            if not 0 <= p < self.total_len:
                raise CacheError(f"position {p} outside layout [0, {self.total_len})")
            if self._written[p]:
                raise CacheError(f"position {p} already written this session")
        if len(set(positions)) != len(positions):
            raise CacheError(f"duplicate positions in write set {list(positions)}")

    def mark_written(self, positions: Sequence[int]) -> None:
        self.check_unwritten(positions)
        self._written[list(positions)] = True

    def set_token(self, position: int, token: int) -> None:
        self.tokens[position] = token

    def token_at(self, position: int) -> int:
        return int(self.tokens[position])

    def ensure_layers(self, n_layers: int, n_heads: int, head_dim: int) -> None:
        # Head-major layout (heads, positions, head_dim) so per-query gathers
        # and batched matmuls need no transposes.
        if self.k_layers is None:
            self.k_layers = [
                np.zeros((n_heads, self.total_len, head_dim)) for _ in range(n_layers)
            ]
            self.v_layers = [
                np.zeros((n_heads, self.total_len, head_dim)) for _ in range(n_layers)
            ]


# -----------------------------------------------------------------------------
# Decoding rules
# -----------------------------------------------------------------------------
def greedy_next(logits_row: np.ndarray) -> int:
    """Argmax with ties broken toward the smallest token id."""
    row = np.asarray(logits_row)
    if not np.all(np.isfinite(row)):
        raise ModelError("non-finite logits")
    return int(np.argmax(row))


def sample_next(logits_row: np.ndarray, rng: np.random.Generator, temperature: float = 1.0) -> int:
    """Seeded temperature sampling; not used by the equivalence-tested paths."""
    row = np.asarray(logits_row, dtype=np.float64)
    if not np.all(np.isfinite(row)):
        raise ModelError("non-finite logits")
    if temperature <= 0:
        return greedy_next(row)
    z = row / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(len(row), p=p))


# -----------------------------------------------------------------------------
# Reference transformer
# -----------------------------------------------------------------------------
def sinusoidal_encoding(position: int, dim: int) -> np.ndarray:
    """Absolute sinusoidal encoding at an explicit position id (pure in p)."""
    half = dim // 2
    freqs = 1.0 / (10000.0 ** (2.0 * np.arange(half) / dim))
    angles = position * freqs
    enc = np.empty(dim)
    enc[0::2] = np.sin(angles)
    enc[1::2] = np.cos(angles)
    return enc


def _f32(a: np.ndarray) -> np.ndarray:
    # Weights live as float64 holding float32-rounded values, so that the
    # flat-f32 persistence format round-trips exactly.
    return a.astype(np.float32).astype(np.float64)


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x * x * x)))


class ReferenceTransformer:
    """Desk-scale deterministic transformer: 2 layers, 4 heads, width 32.

    Same seed and inputs give bit-identical logits. Attention gathers only
    the keys the mask marks visible, ordered by layout position, so a packed
    pass and a one-query-at-a-time replay execute identical float ops.
    """

    def __init__(
        self,
        vocab_size: int = 256,
        d_model: int = 32,
        n_heads: int = 4,
        n_layers: int = 2,
        d_ff: int = 128,
        seed: int = 0,
    ):
        if d_model % n_heads:
            raise ModelError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_ff = d_ff
        self.head_dim = d_model // n_heads
        self.seed = seed
        rng = np.random.default_rng(seed)

        def mat(*shape):
            return _f32(rng.normal(0.0, 0.1, size=shape))

        self.weights: dict[str, np.ndarray] = {"tok_emb": mat(vocab_size, d_model)}
        for l in range(n_layers):
            p = f"layer{l}."
            self.weights[p + "ln1_g"] = np.ones(d_model)
            self.weights[p + "ln1_b"] = np.zeros(d_model)
            for name in ("wq", "wk", "wv", "wo"):
                self.weights[p + name] = mat(d_model, d_model)
            for name in ("bq", "bk", "bv", "bo"):
                self.weights[p + name] = np.zeros(d_model)
            self.weights[p + "ln2_g"] = np.ones(d_model)
            self.weights[p + "ln2_b"] = np.zeros(d_model)
            self.weights[p + "w1"] = mat(d_model, d_ff)
            self.weights[p + "b1"] = np.zeros(d_ff)
            self.weights[p + "w2"] = mat(d_ff, d_model)
            self.weights[p + "b2"] = np.zeros(d_model)
        self.weights["ln_f_g"] = np.ones(d_model)
        self.weights["ln_f_b"] = np.zeros(d_model)
        self.weights["w_head"] = mat(d_model, vocab_size)
        self.weights["b_head"] = np.zeros(vocab_size)
        self._refresh_derived()

    def _refresh_derived(self) -> None:
        # Fused qkv projection per layer; rebuilt whenever weights change.
        self._w_qkv = []
        self._b_qkv = []
        for l in range(self.n_layers):
            p = f"layer{l}."
            self._w_qkv.append(
                np.concatenate(
                    [self.weights[p + "wq"], self.weights[p + "wk"], self.weights[p + "wv"]],
                    axis=1,
                )
            )
            self._b_qkv.append(
                np.concatenate(
                    [self.weights[p + "bq"], self.weights[p + "bk"], self.weights[p + "bv"]]
                )
            )
        self._pos_enc_cache: dict[int, np.ndarray] = {}

    # -- pieces ---------------------------------------------------------------
    @staticmethod
    def _layernorm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
        mu = x.sum() / x.shape[0]
        d = x - mu
        var = (d @ d) / x.shape[0]
        return d / np.sqrt(var + 1e-5) * g + b

    def _embed(self, token: int, position: int) -> np.ndarray:
        if not 0 <= token < self.vocab_size:
            raise ModelError(f"token {token} outside vocab [0, {self.vocab_size})")
        enc = self._pos_enc_cache.get(position)
        if enc is None:
            enc = sinusoidal_encoding(position, self.d_model)
            self._pos_enc_cache[position] = enc
        return self.weights["tok_emb"][token] + enc

    # -- forward --------------------------------------------------------------
    def forward(
        self,
        tokens: Sequence[int],
        positions: Sequence[int],
        mask: np.ndarray,
        cache: KvCache,
        write: bool = True,
    ) -> np.ndarray:
        """One pass over a packed set of queries; returns (|queries|, vocab) logits."""
        n_q = len(tokens)
        if len(positions) != n_q:
            raise ModelError(f"{n_q} tokens but {len(positions)} positions")
        mask = np.asarray(mask, dtype=bool)
        w_pos = cache.written_positions()
        if mask.shape != (n_q, len(w_pos) + n_q):
            raise ModelError(
                f"mask shape {mask.shape} != ({n_q}, {len(w_pos) + n_q})"
            )
        cache.check_unwritten(positions)
        cache.ensure_layers(self.n_layers, self.n_heads, self.head_dim)

        # Canonical key order: ascending layout position, written and fresh
        # interleaved. Each query's visible keys are gathered in that order
        # through the same per-query ops whether the pass is packed or run
        # one query at a time, so the two executions are bit-identical.
        w_count = len(w_pos)
        all_pos = np.concatenate([w_pos, np.asarray(positions, dtype=np.int64)])
        order = np.argsort(all_pos)
        mask_sorted = np.ascontiguousarray(mask[:, order])
        gathers = []  # per query: (full, from_cache, from_fresh, cache_positions, fresh_idx)
        for i in range(n_q):
            sel = order[mask_sorted[i]]
            if sel.size == 0:
                raise ModelError(f"query {i} has an all-false mask row")
            fc = sel < w_count
            gathers.append(
                (sel.size == all_pos.size, fc, ~fc, w_pos[sel[fc]], sel[~fc] - w_count)
            )

        w = self.weights
        H, D = self.n_heads, self.head_dim
        scale = 1.0 / np.sqrt(D)
        xs = [self._embed(t, p) for t, p in zip(tokens, positions)]
        fresh_k: list[np.ndarray] = []
        fresh_v: list[np.ndarray] = []
        for l in range(self.n_layers):
            p = f"layer{l}."
            q_l = np.empty((n_q, H, D))
            k_l = np.empty((H, n_q, D))
            v_l = np.empty((H, n_q, D))
            for i, x in enumerate(xs):
                h = self._layernorm(x, w[p + "ln1_g"], w[p + "ln1_b"])
                qkv = (h @ self._w_qkv[l] + self._b_qkv[l]).reshape(3, H, D)
                q_l[i] = qkv[0] * scale
                k_l[:, i] = qkv[1]
                v_l[:, i] = qkv[2]
            k_shared = v_shared = None
            for i in range(n_q):
                full, fc, ff, cache_pos, fresh_idx = gathers[i]
                if full:
                    if k_shared is None:
                        k_shared = np.concatenate(
                            [cache.k_layers[l][:, w_pos], k_l], axis=1
                        )[:, order]
                        v_shared = np.concatenate(
                            [cache.v_layers[l][:, w_pos], v_l], axis=1
                        )[:, order]
                    k_vis, v_vis = k_shared, v_shared
                else:
                    m = fc.size
                    k_vis = np.empty((H, m, D))
                    v_vis = np.empty((H, m, D))
                    k_vis[:, fc] = cache.k_layers[l][:, cache_pos]
                    v_vis[:, fc] = cache.v_layers[l][:, cache_pos]
                    k_vis[:, ff] = k_l[:, fresh_idx]
                    v_vis[:, ff] = v_l[:, fresh_idx]
                scores = np.matmul(k_vis, q_l[i][:, :, np.newaxis])[:, :, 0]
                scores -= scores.max(axis=1, keepdims=True)
                att = np.exp(scores)
                att /= att.sum(axis=1, keepdims=True)
                ctx = np.matmul(att[:, np.newaxis, :], v_vis).reshape(self.d_model)
                x = xs[i] + ctx @ w[p + "wo"] + w[p + "bo"]
                h2 = self._layernorm(x, w[p + "ln2_g"], w[p + "ln2_b"])
                xs[i] = x + _gelu(h2 @ w[p + "w1"] + w[p + "b1"]) @ w[p + "w2"] + w[p + "b2"]
            fresh_k.append(k_l)
            fresh_v.append(v_l)

        logits = np.empty((n_q, self.vocab_size))
        for i, x in enumerate(xs):
            h = self._layernorm(x, w["ln_f_g"], w["ln_f_b"])
            logits[i] = h @ w["w_head"] + w["b_head"]

        if write:
            pos_arr = list(positions)
            for l in range(self.n_layers):
                cache.k_layers[l][:, pos_arr] = fresh_k[l]
                cache.v_layers[l][:, pos_arr] = fresh_v[l]
            cache.mark_written(pos_arr)
        return logits

    # -- persistence ----------------------------------------------------------
    def save_weights(self, path: str | Path) -> None:
        """Flat little-endian float32 blob plus a JSON sidecar manifest."""
        path = Path(path)
        manifest: dict = {
            "seed": self.seed,
            "dtype": "float32",
            "byte_order": "little",
            "config": {
                "vocab_size": self.vocab_size,
                "d_model": self.d_model,
                "n_heads": self.n_heads,
                "n_layers": self.n_layers,
                "d_ff": self.d_ff,
            },
            "tensors": {},
        }
        offset = 0
        with open(path, "wb") as fh:
            for name in sorted(self.weights):
                arr = self.weights[name].astype("<f4")
                fh.write(arr.tobytes())
                manifest["tensors"][name] = {"shape": list(arr.shape), "offset": offset}
                offset += arr.nbytes
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    @classmethod
    def load_weights(cls, path: str | Path) -> "ReferenceTransformer":
        path = Path(path)
        with open(str(path) + ".json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        cfg = manifest["config"]
        model = cls(seed=manifest["seed"], **cfg)
        blob = path.read_bytes()
        for name, meta in manifest["tensors"].items():
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(
                blob, dtype="<f4", count=count, offset=meta["offset"]
            ).reshape(shape)
            model.weights[name] = arr.astype(np.float64)
        model._refresh_derived()
        return model


# -----------------------------------------------------------------------------
# Mock model for mask-soundness oracles
# -----------------------------------------------------------------------------
class MockHashModel:
    """Deterministic hash of (query field, step, visible (position, token) set).

    The output token changes whenever the visible multiset changes, so any
    single flipped mask bit shows up as a token mismatch against an oracle
    run. Logits are one-hot at the chosen token.
    """

    def __init__(self, vocab_size: int = 256, seed: int = 0, layout: PackedLayout | None = None):
        self.vocab_size = vocab_size
        self.seed = seed
        self.layout = layout

    def _query_identity(self, position: int) -> tuple[int, int]:
        if self.layout is not None:
            ref = self.layout.describe(position)
            if ref.kind == "slot":
                return ref.field, ref.step
            return -1, position
        return -1, position

    def forward(
        self,
        tokens: Sequence[int],
        positions: Sequence[int],
        mask: np.ndarray,
        cache: KvCache,
        write: bool = True,
    ) -> np.ndarray:
        n_q = len(tokens)
        mask = np.asarray(mask, dtype=bool)
        w_pos = cache.written_positions()
        if mask.shape != (n_q, len(w_pos) + n_q):
            raise ModelError(f"mask shape {mask.shape} != ({n_q}, {len(w_pos) + n_q})")
        cache.check_unwritten(positions)

        logits = np.zeros((n_q, self.vocab_size))
        for i in range(n_q):
            field, step = self._query_identity(positions[i])
            pairs = [(int(p), cache.token_at(p)) for p in w_pos[mask[i, : len(w_pos)]]]
            for j in np.nonzero(mask[i, len(w_pos) :])[0]:
                pairs.append((int(positions[j]), int(tokens[j])))
            pairs.sort()
            h = hashlib.blake2b(digest_size=8)
            h.update(struct.pack("<qqq", self.seed, field, step))
            for pos, tok in pairs:
                h.update(struct.pack("<qq", pos, tok))
            token = int.from_bytes(h.digest(), "little") % self.vocab_size
            logits[i, token] = 1.0
        if write:
            cache.mark_written(list(positions))
        return logits
