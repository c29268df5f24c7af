"""Vanilla transformer encoder-decoder forecaster at desk scale.

Architecture: linear value embedding (C -> d_model) plus fixed sinusoidal
positional encoding, post-norm encoder blocks (self-attention, add&norm,
feedforward, add&norm), post-norm decoder blocks (masked self-attention,
cross-attention to the encoder output, feedforward, each followed by
add&norm), and a d_model -> 1 head read out over the last F decoder
positions. All arithmetic runs through the autodiff engine so one backward
call yields every parameter gradient.

Dropout (inverted, rate from config) is applied to each sublayer output
before its residual add, only while a training RNG is supplied. Prediction
never uses dropout.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import linalg
from .errors import ContractError, ShapeError
from .rng import SeededRng


@dataclass(frozen=True)
class TransformerConfig:
    input_channels: int
    d_model: int = 32
    n_heads: int = 4
    d_ff: int = 64
    encoder_layers: int = 1
    decoder_layers: int = 1
    dropout: float = 0.1
    lookback: int = 96
    label_len: int = 48
    horizon: int = 96
    learning_rate: float = 1e-4
    epochs: int = 10
    batch_size: int = 16
    seed: int = 0
    patience: int = 3

    def __post_init__(self):
        counts = {
            "input_channels": self.input_channels, "d_model": self.d_model,
            "n_heads": self.n_heads, "d_ff": self.d_ff,
            "encoder_layers": self.encoder_layers, "decoder_layers": self.decoder_layers,
            "lookback": self.lookback, "label_len": self.label_len,
            "horizon": self.horizon, "epochs": self.epochs, "batch_size": self.batch_size,
        }
        for name, v in counts.items():
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ContractError(f"{name} must be a positive integer, got {v!r}")
        if self.d_model % self.n_heads != 0:
            raise ContractError(
                f"d_model must be divisible by n_heads, got {self.d_model} / {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.label_len > self.lookback:
            raise ContractError(
                f"label_len ({self.label_len}) cannot exceed lookback ({self.lookback})")
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.seed < 0 or self.patience < 0:
            raise ContractError("seed and patience must be non-negative")

    @property
    def decoder_len(self) -> int:
        return self.label_len + self.horizon


def _param_shapes(config: TransformerConfig) -> dict:
    """Name -> shape for every parameter, in a fixed insertion order."""
    d, dff, c = config.d_model, config.d_ff, config.input_channels
    shapes = {
        "enc_embed.w": (c, d), "enc_embed.b": (d,),
        "dec_embed.w": (c, d), "dec_embed.b": (d,),
    }

    def attn_block(prefix):
        for nm in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{nm}"] = (d, d)
        for nm in ("bq", "bk", "bv", "bo"):
            shapes[f"{prefix}.{nm}"] = (d,)

    def ln(prefix):
        shapes[f"{prefix}.g"] = (d,)
        shapes[f"{prefix}.b"] = (d,)

    def ff(prefix):
        shapes[f"{prefix}.w1"] = (d, dff)
        shapes[f"{prefix}.b1"] = (dff,)
        shapes[f"{prefix}.w2"] = (dff, d)
        shapes[f"{prefix}.b2"] = (d,)

    for i in range(config.encoder_layers):
        attn_block(f"enc{i}.attn")
        ln(f"enc{i}.ln1")
        ff(f"enc{i}.ff")
        ln(f"enc{i}.ln2")
    for i in range(config.decoder_layers):
        attn_block(f"dec{i}.self")
        ln(f"dec{i}.ln1")
        attn_block(f"dec{i}.cross")
        ln(f"dec{i}.ln2")
        ff(f"dec{i}.ff")
        ln(f"dec{i}.ln3")
    shapes["head.w"] = (d, 1)
    shapes["head.b"] = (1,)
    return shapes


def parameter_count(config: TransformerConfig) -> int:
    """Total scalar parameters; a pure function of the config."""
    return sum(int(np.prod(s)) for s in _param_shapes(config).values())


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    """Fixed positional encoding table, shape (length, d_model)."""
    pe = np.zeros((length, d_model))
    pos = np.arange(length, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, d_model, 2, dtype=np.float64) * (-math.log(10000.0) / d_model))
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div[: d_model // 2])
    return pe


def attention(q, k, v, causal: bool = False) -> np.ndarray:
    """Scaled dot-product attention on plain 2-D arrays.

    softmax_rows(Q K^T / sqrt(d_k)) V, with an optional causal mask that
    forbids each query from attending past its own position (requires as
    many keys as queries).
    """
    q = linalg.as_matrix(q, "q")
    k = linalg.as_matrix(k, "k")
    v = linalg.as_matrix(v, "v")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"K and V row counts differ: {k.shape[0]} vs {v.shape[0]}")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"Q and K widths differ: {q.shape[1]} vs {k.shape[1]}")
    mask = None
    if causal:
        if q.shape[0] != k.shape[0]:
            raise ShapeError(
                f"causal attention needs square scores, got {q.shape[0]} queries "
                f"and {k.shape[0]} keys")
        mask = np.tril(np.ones((q.shape[0], k.shape[0]), dtype=bool))
    scores = linalg.matmul(q, k.T) / math.sqrt(q.shape[1])
    return linalg.matmul(linalg.softmax_rows(scores, mask), v)


class ForecastModel:
    """Parameter container plus the differentiable forward pass."""

    def __init__(self, config: TransformerConfig, rng: SeededRng | None = None):
        self.config = config
        if rng is None:
            rng = SeededRng(config.seed)
        self.params: dict[str, ad.Tensor] = {}
        for name, shape in _param_shapes(config).items():
            if len(shape) == 2:
                bound = 1.0 / math.sqrt(shape[0])
                value = rng.uniform(-bound, bound, shape)
            elif name.endswith(".g"):
                value = np.ones(shape)
            else:
                value = np.zeros(shape)
            self.params[name] = ad.param(value)
        self.pe = sinusoidal_encoding(max(config.lookback, config.decoder_len), config.d_model)

    # -- forward pieces ----------------------------------------------------

    def _dropout(self, x: ad.Tensor, rng) -> ad.Tensor:
        rate = self.config.dropout
        if rng is None or rate == 0.0:
            return x
        keep = 1.0 - rate
        mask = rng.bernoulli(keep, x.value.shape) / keep
        return ad.mul(x, ad.constant(mask))

    def _project(self, x: ad.Tensor, prefix: str, nm: str) -> ad.Tensor:
        return ad.add(ad.matmul(x, self.params[f"{prefix}.w{nm}"]),
                      self.params[f"{prefix}.b{nm}"])

    def _mha(self, q_in: ad.Tensor, kv_in: ad.Tensor, prefix: str, causal: bool) -> ad.Tensor:
        cfg = self.config
        h = cfg.n_heads
        dk = cfg.d_model // h
        b, sq = q_in.value.shape[0], q_in.value.shape[1]
        skv = kv_in.value.shape[1]

        def split_heads(t, s):
            t = ad.reshape(t, (b, s, h, dk))
            t = ad.permute(t, (0, 2, 1, 3))
            return ad.reshape(t, (b * h, s, dk))

        q = split_heads(self._project(q_in, prefix, "q"), sq)
        k = split_heads(self._project(kv_in, prefix, "k"), skv)
        v = split_heads(self._project(kv_in, prefix, "v"), skv)
        scores = ad.scale(ad.matmul(q, ad.transpose_last(k)), 1.0 / math.sqrt(dk))
        mask = np.tril(np.ones((sq, skv), dtype=bool)) if causal else None
        ctx = ad.matmul(ad.softmax(scores, mask), v)
        ctx = ad.reshape(ctx, (b, h, sq, dk))
        ctx = ad.permute(ctx, (0, 2, 1, 3))
        ctx = ad.reshape(ctx, (b, sq, cfg.d_model))
        return self._project(ctx, prefix, "o")

    def _ff(self, x: ad.Tensor, prefix: str) -> ad.Tensor:
        hidden = ad.relu(ad.add(ad.matmul(x, self.params[f"{prefix}.w1"]),
                                self.params[f"{prefix}.b1"]))
        return ad.add(ad.matmul(hidden, self.params[f"{prefix}.w2"]),
                      self.params[f"{prefix}.b2"])

    def _add_norm(self, residual: ad.Tensor, sublayer: ad.Tensor, prefix: str,
                  rng) -> ad.Tensor:
        summed = ad.add(residual, self._dropout(sublayer, rng))
        return ad.layer_norm(summed, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _embed(self, x_nd: np.ndarray, prefix: str, length: int) -> ad.Tensor:
        x = ad.constant(x_nd)
        emb = ad.add(ad.matmul(x, self.params[f"{prefix}.w"]), self.params[f"{prefix}.b"])
        return ad.add(emb, ad.constant(self.pe[:length]))

    def encode(self, enc_in: np.ndarray, train_rng=None) -> ad.Tensor:
        cfg = self.config
        enc_in = self._check_batch(enc_in, cfg.lookback, "enc_in")
        x = self._embed(enc_in, "enc_embed", cfg.lookback)
        for i in range(cfg.encoder_layers):
            attn = self._mha(x, x, f"enc{i}.attn", causal=False)
            x = self._add_norm(x, attn, f"enc{i}.ln1", train_rng)
            x = self._add_norm(x, self._ff(x, f"enc{i}.ff"), f"enc{i}.ln2", train_rng)
        return x

    def decode(self, dec_in: np.ndarray, enc_out: ad.Tensor, train_rng=None) -> ad.Tensor:
        cfg = self.config
        dec_in = self._check_batch(dec_in, cfg.decoder_len, "dec_in")
        y = self._embed(dec_in, "dec_embed", cfg.decoder_len)
        for i in range(cfg.decoder_layers):
            self_attn = self._mha(y, y, f"dec{i}.self", causal=True)
            y = self._add_norm(y, self_attn, f"dec{i}.ln1", train_rng)
            cross = self._mha(y, enc_out, f"dec{i}.cross", causal=False)
            y = self._add_norm(y, cross, f"dec{i}.ln2", train_rng)
            y = self._add_norm(y, self._ff(y, f"dec{i}.ff"), f"dec{i}.ln3", train_rng)
        return y

    def forward(self, enc_in: np.ndarray, dec_in: np.ndarray, train_rng=None) -> ad.Tensor:
        """Differentiable forecast, shape (batch, horizon)."""
        cfg = self.config
        if enc_in.shape[0] != dec_in.shape[0]:
            raise ShapeError(
                f"encoder/decoder batch sizes differ: {enc_in.shape[0]} vs {dec_in.shape[0]}")
        enc_out = self.encode(enc_in, train_rng)
        dec_out = self.decode(dec_in, enc_out, train_rng)
        head = ad.add(ad.matmul(dec_out, self.params["head.w"]), self.params["head.b"])
        tail = ad.slice_rows(head, cfg.decoder_len - cfg.horizon, cfg.decoder_len)
        return ad.reshape(tail, (enc_in.shape[0], cfg.horizon))

    def predict(self, enc_in: np.ndarray, dec_in: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Forecasts without dropout, shape (windows, horizon)."""
        if batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {batch_size}")
        enc_in = np.asarray(enc_in, dtype=np.float64)
        dec_in = np.asarray(dec_in, dtype=np.float64)
        n = enc_in.shape[0]
        if n == 0:
            raise ContractError("predict called with no windows")
        chunks = []
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            chunks.append(self.forward(enc_in[lo:hi], dec_in[lo:hi]).value)
        return np.concatenate(chunks, axis=0)

    def _check_batch(self, x, length: int, name: str) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        want = (length, self.config.input_channels)
        if x.ndim != 3 or x.shape[1:] != want:
            raise ShapeError(f"{name} must be (batch, {want[0]}, {want[1]}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ContractError(f"{name} contains non-finite entries")
        return x

    # -- bookkeeping -------------------------------------------------------

    @property
    def parameter_count(self) -> int:
        return parameter_count(self.config)

    def parameters_finite(self) -> bool:
        return all(np.all(np.isfinite(t.value)) for t in self.params.values())

    def state_copy(self) -> dict:
        return {name: t.value.copy() for name, t in self.params.items()}

    def load_state(self, state: dict) -> None:
        if set(state) != set(self.params):
            raise ContractError("state parameter names do not match the model")
        for name, value in state.items():
            if value.shape != self.params[name].value.shape:
                raise ShapeError(f"shape mismatch for {name}: {value.shape}")
            self.params[name].value = np.array(value, dtype=np.float64)

    def save(self, path: str) -> None:
        """Flat float64 binary plus a JSON sidecar with shapes and config."""
        order = list(self.params)
        flat = np.concatenate([self.params[n].value.ravel() for n in order])
        flat.astype("<f8").tofile(path)
        sidecar = {
            "config": asdict(self.config),
            "order": order,
            "shapes": {n: list(self.params[n].value.shape) for n in order},
        }
        with open(path + ".json", "w") as f:
            json.dump(sidecar, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "ForecastModel":
        with open(path + ".json") as f:
            sidecar = json.load(f)
        config = TransformerConfig(**sidecar["config"])
        model = cls(config)
        flat = np.fromfile(path, dtype="<f8")
        if flat.size != model.parameter_count:
            raise ContractError(
                f"checkpoint holds {flat.size} values, config needs {model.parameter_count}")
        if sidecar["order"] != list(model.params):
            raise ContractError("checkpoint parameter order does not match the config")
        offset = 0
        for name in sidecar["order"]:
            shape = tuple(sidecar["shapes"][name])
            size = int(np.prod(shape))
            model.params[name].value = flat[offset:offset + size].reshape(shape).copy()
            offset += size
        return model


def flop_estimate(config: TransformerConfig, n_windows: int = 1) -> int:
    """Per-epoch floating-point operation audit (2mnk per matmul).

    Forward-pass matmul flops for one window, times windows, times 3 to
    cover the backward pass. Elementwise work is ignored; this is the
    operation-count proxy used by the runtime monotonicity check.
    """
    if n_windows < 1:
        raise ContractError(f"n_windows must be >= 1, got {n_windows}")
    cfg = config
    d, dff, c, h = cfg.d_model, cfg.d_ff, cfg.input_channels, cfg.n_heads
    dk = d // h
    le, ld = cfg.lookback, cfg.decoder_len

    def mm(m, n, k):
        return 2 * m * n * k

    def attn_flops(sq, skv):
        proj = mm(sq, d, d) + 2 * mm(skv, d, d) + mm(sq, d, d)
        scores = h * mm(sq, skv, dk)
        mix = h * mm(sq, dk, skv)
        return proj + scores + mix

    def ff_flops(s):
        return mm(s, dff, d) + mm(s, d, dff)

    total = mm(le, d, c) + mm(ld, d, c)
    total += cfg.encoder_layers * (attn_flops(le, le) + ff_flops(le))
    total += cfg.decoder_layers * (attn_flops(ld, ld) + attn_flops(ld, le) + ff_flops(ld))
    total += mm(ld, 1, d)
    return 3 * total * n_windows
