"""Trainable sequence model: embeddings, a single LSTM layer, sigmoid output head.

The model consumes one input vector per 50 ms frame and emits, for every
frame, a vector of `window` probability scores for the target speaker's
voice activity over the next `window` frames. Gradients are computed
analytically (backpropagation through time over the provided sequence) and
checked against central finite differences in the test suite; the optimizer
is Adam.

All math is float64. Forward passes are pure; only the optimizer mutates
parameters, and it is confined to the training thread. Parameter snapshots
(`ModelParams.copy`) are safe to hand to concurrent readers.

Input convention: a frame matrix has `layout.n_columns` columns. Most are
real-valued and enter the LSTM directly; columns listed in
`layout.token_columns` hold integer token ids and are expanded in place to
`embed_dim`-wide embedding rows before the LSTM. Two token columns may share
one table (the two speakers' word streams share the word vocabulary).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError, TrainingDiverged

PROB_CLAMP_EPS = 1e-7

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class InputLayout:
    """Column layout of a frame matrix.

    token_columns maps raw column indices to the embedding table each one
    indexes into; every other column is a real-valued feature.
    """

    n_columns: int
    token_columns: Tuple[Tuple[int, str], ...] = ()

    def __post_init__(self):
        if self.n_columns <= 0:
            raise ConfigError("layout needs at least one column")
        seen = set()
        for idx, table in self.token_columns:
            if not 0 <= idx < self.n_columns:
                raise ConfigError(f"token column {idx} outside layout of width {self.n_columns}")
            if idx in seen:
                raise ConfigError(f"token column {idx} declared twice")
            seen.add(idx)

    @property
    def table_names(self) -> Tuple[str, ...]:
        names = []
        for _, table in self.token_columns:
            if table not in names:
                names.append(table)
        return tuple(names)

    def expanded_width(self, embed_dim: int) -> int:
        n_token = len(self.token_columns)
        return (self.n_columns - n_token) + embed_dim * n_token

    def expansion_slots(self, embed_dim: int):
        """Per raw column: (raw index, offset in expanded vector, table or None)."""
        token = dict(self.token_columns)
        slots = []
        offset = 0
        for raw in range(self.n_columns):
            table = token.get(raw)
            slots.append((raw, offset, table))
            offset += embed_dim if table is not None else 1
        return slots


@dataclass(frozen=True)
class NetworkConfig:
    hidden_size: int
    layout: InputLayout
    vocab_sizes: Mapping[str, int] = field(default_factory=dict)
    embed_dim: int = 64
    window: int = 60

    def __post_init__(self):
        if self.hidden_size <= 0:
            raise ConfigError(f"hidden_size must be positive, got {self.hidden_size}")
        if self.window <= 0 or self.embed_dim <= 0:
            raise ConfigError("window and embed_dim must be positive")
        object.__setattr__(self, "vocab_sizes", dict(self.vocab_sizes))
        for name in self.layout.table_names:
            v = self.vocab_sizes.get(name, 0)
            if v <= 0:
                raise ConfigError(f"missing or empty vocabulary for embedding table '{name}'")

    @property
    def input_width(self) -> int:
        return self.layout.expanded_width(self.embed_dim)


@dataclass(frozen=True)
class TrainingObjective:
    kind: str  # "bce" or "mae"
    l2_lambda: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bce", "mae"):
            raise ConfigError(f"unknown objective kind {self.kind!r}")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be non-negative")


@dataclass
class ModelParams:
    """All trainable parameters. Gate row order in the 4H axis: i, f, g, o."""

    config: NetworkConfig
    lstm_input_weights: np.ndarray  # [4H, input_width]
    lstm_recurrent_weights: np.ndarray  # [4H, H]
    lstm_biases: np.ndarray  # [4H]
    output_weights: np.ndarray  # [window, H]
    output_biases: np.ndarray  # [window]
    embedding_tables: Dict[str, np.ndarray]  # name -> [V, embed_dim]

    def blocks(self) -> Dict[str, np.ndarray]:
        out = {
            "lstm_input_weights": self.lstm_input_weights,
            "lstm_recurrent_weights": self.lstm_recurrent_weights,
            "lstm_biases": self.lstm_biases,
            "output_weights": self.output_weights,
            "output_biases": self.output_biases,
        }
        for name, table in self.embedding_tables.items():
            out[f"embedding:{name}"] = table
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            lstm_input_weights=self.lstm_input_weights.copy(),
            lstm_recurrent_weights=self.lstm_recurrent_weights.copy(),
            lstm_biases=self.lstm_biases.copy(),
            output_weights=self.output_weights.copy(),
            output_biases=self.output_biases.copy(),
            embedding_tables={k: v.copy() for k, v in self.embedding_tables.items()},
        )

    def check_finite(self):
        for name, arr in self.blocks().items():
            if not np.isfinite(arr).all():
                raise TrainingDiverged(name, "parameter values")


def init_params(config: NetworkConfig, seed: int) -> ModelParams:
    """Seeded initialization: uniform(-1/sqrt(H), 1/sqrt(H)) for LSTM and
    output weights, N(0, 0.1) embeddings, forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    h = config.hidden_size
    bound = 1.0 / np.sqrt(h)
    w_x = rng.uniform(-bound, bound, size=(4 * h, config.input_width))
    w_h = rng.uniform(-bound, bound, size=(4 * h, h))
    b = np.zeros(4 * h)
    b[h : 2 * h] = 1.0  # forget gate
    w_out = rng.uniform(-bound, bound, size=(config.window, h))
    b_out = np.zeros(config.window)
    tables = {}
    for name in config.layout.table_names:
        v = config.vocab_sizes[name]
        tables[name] = rng.normal(0.0, 0.1, size=(v, config.embed_dim))
    return ModelParams(config, w_x, w_h, b, w_out, b_out, tables)


def zero_params(config: NetworkConfig) -> ModelParams:
    h = config.hidden_size
    tables = {
        name: np.zeros((config.vocab_sizes[name], config.embed_dim))
        for name in config.layout.table_names
    }
    return ModelParams(
        config,
        np.zeros((4 * h, config.input_width)),
        np.zeros((4 * h, h)),
        np.zeros(4 * h),
        np.zeros((config.window, h)),
        np.zeros(config.window),
        tables,
    )


@dataclass(frozen=True)
class LstmState:
    h: np.ndarray  # [B, H]
    c: np.ndarray  # [B, H]


def zero_state(config: NetworkConfig, batch: int = 1) -> LstmState:
    h = np.zeros((batch, config.hidden_size))
    return LstmState(h=h, c=h.copy())


def embed_lookup(table: np.ndarray, token_id: int) -> np.ndarray:
    """Row lookup; equivalent to multiplying a one-hot vector by the table."""
    if not 0 <= token_id < table.shape[0]:
        raise DataError(f"token id {token_id} outside table of size {table.shape[0]}")
    return table[token_id]


def _expand_inputs(params: ModelParams, inputs: np.ndarray) -> np.ndarray:
    """Replace token-id columns with embedding rows; [B,T,C] -> [B,T,IW]."""
    cfg = params.config
    b, t, c = inputs.shape
    if c != cfg.layout.n_columns:
        raise ConfigError(
            f"input has {c} columns, model expects {cfg.layout.n_columns}"
        )
    if not len(cfg.layout.token_columns):
        return np.ascontiguousarray(inputs, dtype=np.float64)
    out = np.empty((b, t, cfg.input_width))
    for raw, offset, table in cfg.layout.expansion_slots(cfg.embed_dim):
        col = inputs[:, :, raw]
        if table is None:
            out[:, :, offset] = col
            continue
        ids = np.rint(col).astype(np.int64)
        if not np.array_equal(ids, col):
            bad = np.argwhere(ids != col)[0]
            raise DataError(
                f"non-integer token id in stream '{table}' at frame {bad[1]}"
            )
        vocab = params.embedding_tables[table].shape[0]
        if ids.min() < 0 or ids.max() >= vocab:
            bad = np.argwhere((ids < 0) | (ids >= vocab))[0]
            raise DataError(
                f"token id {int(col[tuple(bad)])} out of range for stream "
                f"'{table}' at frame {bad[1]} (vocabulary size {vocab})"
            )
        out[:, :, offset : offset + cfg.embed_dim] = params.embedding_tables[table][ids]
    return out


def _forward_core(params, expanded, state, want_cache):
    cfg = params.config
    h_dim = cfg.hidden_size
    bsz, t_len, _ = expanded.shape
    if state is None:
        state = zero_state(cfg, bsz)
    if state.h.shape != (bsz, h_dim):
        raise ConfigError(
            f"state has shape {state.h.shape}, expected {(bsz, h_dim)}"
        )
    xw = expanded @ params.lstm_input_weights.T  # [B,T,4H]
    w_h_t = params.lstm_recurrent_weights.T
    h = state.h
    c = state.c
    hs = np.empty((bsz, t_len, h_dim))
    if want_cache:
        gates_i = np.empty((bsz, t_len, h_dim))
        gates_f = np.empty((bsz, t_len, h_dim))
        gates_g = np.empty((bsz, t_len, h_dim))
        gates_o = np.empty((bsz, t_len, h_dim))
        cs = np.empty((bsz, t_len, h_dim))
        tcs = np.empty((bsz, t_len, h_dim))
    for t in range(t_len):
        z = xw[:, t] + h @ w_h_t + params.lstm_biases
        i = expit(z[:, :h_dim])
        f = expit(z[:, h_dim : 2 * h_dim])
        g = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
        o = expit(z[:, 3 * h_dim :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        if want_cache:
            gates_i[:, t] = i
            gates_f[:, t] = f
            gates_g[:, t] = g
            gates_o[:, t] = o
            cs[:, t] = c
            tcs[:, t] = tc
    logits = hs @ params.output_weights.T + params.output_biases
    probs = expit(logits)
    final = LstmState(h=h.copy(), c=c.copy())
    if not want_cache:
        return probs, final, None
    cache = {
        "expanded": expanded,
        "i": gates_i,
        "f": gates_f,
        "g": gates_g,
        "o": gates_o,
        "c": cs,
        "tc": tcs,
        "hs": hs,
        "h0": state.h,
        "c0": state.c,
        "probs": probs,
    }
    return probs, final, cache


def forward_batch(
    params: ModelParams,
    inputs: np.ndarray,
    state: Optional[LstmState] = None,
) -> Tuple[np.ndarray, LstmState]:
    """Pure forward pass over [B, T, C] inputs; returns probabilities
    [B, T, window] and the final recurrent state for streaming continuation."""
    expanded = _expand_inputs(params, np.asarray(inputs, dtype=np.float64))
    probs, final, _ = _forward_core(params, expanded, state, want_cache=False)
    return probs, final


def lstm_forward(
    params: ModelParams,
    inputs: np.ndarray,
    state: Optional[LstmState] = None,
) -> Tuple[np.ndarray, LstmState]:
    """Single-sequence forward pass: [T, C] -> ([T, window], final state)."""
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"expected a [frames, columns] matrix, got shape {arr.shape}")
    if state is not None and state.h.ndim == 1:
        state = LstmState(h=state.h[None, :], c=state.c[None, :])
    probs, final = forward_batch(params, arr[None], state)
    return probs[0], LstmState(h=final.h[0], c=final.c[0])


def _normalize_mask(frame_mask, bsz, t_len):
    if frame_mask is None:
        return np.ones((bsz, t_len))
    mask = np.asarray(frame_mask, dtype=np.float64)
    if mask.ndim == 1:
        mask = mask[None, :]
    if mask.shape != (bsz, t_len):
        raise ConfigError(f"mask shape {mask.shape} does not match ({bsz}, {t_len})")
    return mask


def _check_targets(targets, window):
    arr = np.asarray(targets, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape[-1] != window:
        raise ConfigError(f"targets have width {arr.shape[-1]}, window is {window}")
    if not np.isin(arr, (0.0, 1.0)).all():
        raise ConfigError("targets must be binary")
    return arr


def l2_penalty(params: ModelParams, l2_lambda: float) -> float:
    """L2 applies to the three weight matrices, never biases or embeddings."""
    if l2_lambda == 0.0:
        return 0.0
    return l2_lambda * (
        float(np.sum(params.lstm_input_weights**2))
        + float(np.sum(params.lstm_recurrent_weights**2))
        + float(np.sum(params.output_weights**2))
    )


def loss(
    probs: np.ndarray,
    targets: np.ndarray,
    objective: TrainingObjective,
    params: Optional[ModelParams] = None,
    frame_mask: Optional[np.ndarray] = None,
) -> float:
    """Mean per-cell loss over all included frame x window cells, plus the
    L2 penalty when params are given."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    y = _check_targets(targets, p.shape[-1])
    if y.shape != p.shape:
        raise ConfigError(f"targets shape {y.shape} does not match predictions {p.shape}")
    mask = _normalize_mask(frame_mask, p.shape[0], p.shape[1])
    n_cells = mask.sum() * p.shape[-1]
    if n_cells == 0:
        raise ConfigError("loss over zero included frames")
    if objective.kind == "bce":
        q = np.clip(p, PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS)
        cell = -(y * np.log(q) + (1.0 - y) * np.log(1.0 - q))
    else:
        cell = np.abs(y - p)
    data = float((cell * mask[:, :, None]).sum() / n_cells)
    if params is None:
        return data
    return data + l2_penalty(params, objective.l2_lambda)


def _output_grad(probs, targets, objective, mask):
    """d(data loss)/d(output logits), [B,T,W]."""
    n_cells = mask.sum() * probs.shape[-1]
    if objective.kind == "bce":
        # Clamped cells contribute a locally constant loss: zero gradient.
        active = (probs > PROB_CLAMP_EPS) & (probs < 1.0 - PROB_CLAMP_EPS)
        d = np.where(active, probs - targets, 0.0)
    else:
        d = np.sign(probs - targets) * probs * (1.0 - probs)
    return d * mask[:, :, None] / n_cells


def backward_batch(
    params: ModelParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    objective: TrainingObjective,
    frame_mask: Optional[np.ndarray] = None,
    state: Optional[LstmState] = None,
):
    """Forward + analytic BPTT over the full provided sequence.

    Returns (gradients by block name, scalar loss, final state). Gradients
    include the L2 term; the loss includes it as well.
    """
    cfg = params.config
    h_dim = cfg.hidden_size
    expanded = _expand_inputs(params, np.asarray(inputs, dtype=np.float64))
    bsz, t_len, _ = expanded.shape
    y = _check_targets(targets, cfg.window)
    mask = _normalize_mask(frame_mask, bsz, t_len)
    probs, final, cache = _forward_core(params, expanded, state, want_cache=True)
    total = loss(probs, y, objective, params, mask)

    d_logits = _output_grad(probs, y, objective, mask)
    hs = cache["hs"]
    d_w_out = d_logits.reshape(-1, cfg.window).T @ hs.reshape(-1, h_dim)
    d_b_out = d_logits.sum(axis=(0, 1))
    d_h_seq = d_logits @ params.output_weights  # [B,T,H]

    i, f, g, o = cache["i"], cache["f"], cache["g"], cache["o"]
    cs, tcs = cache["c"], cache["tc"]
    c_prev_seq = np.concatenate([cache["c0"][:, None, :], cs[:, :-1, :]], axis=1)
    h_prev_seq = np.concatenate([cache["h0"][:, None, :], hs[:, :-1, :]], axis=1)

    d_z = np.empty((bsz, t_len, 4 * h_dim))
    dh_next = np.zeros((bsz, h_dim))
    dc_next = np.zeros((bsz, h_dim))
    w_h = params.lstm_recurrent_weights
    for t in range(t_len - 1, -1, -1):
        dh = d_h_seq[:, t] + dh_next
        it, ft, gt, ot = i[:, t], f[:, t], g[:, t], o[:, t]
        tct = tcs[:, t]
        do = dh * tct
        dc = dc_next + dh * ot * (1.0 - tct * tct)
        di = dc * gt
        df = dc * c_prev_seq[:, t]
        dg = dc * it
        d_z[:, t, :h_dim] = di * it * (1.0 - it)
        d_z[:, t, h_dim : 2 * h_dim] = df * ft * (1.0 - ft)
        d_z[:, t, 2 * h_dim : 3 * h_dim] = dg * (1.0 - gt * gt)
        d_z[:, t, 3 * h_dim :] = do * ot * (1.0 - ot)
        dc_next = dc * ft
        dh_next = d_z[:, t] @ w_h

    flat_dz = d_z.reshape(-1, 4 * h_dim)
    d_w_x = flat_dz.T @ expanded.reshape(-1, cfg.input_width)
    d_w_h = flat_dz.T @ h_prev_seq.reshape(-1, h_dim)
    d_b = d_z.sum(axis=(0, 1))

    grads = {
        "lstm_input_weights": d_w_x,
        "lstm_recurrent_weights": d_w_h,
        "lstm_biases": d_b,
        "output_weights": d_w_out,
        "output_biases": d_b_out,
    }
    if objective.l2_lambda:
        grads["lstm_input_weights"] += 2.0 * objective.l2_lambda * params.lstm_input_weights
        grads["lstm_recurrent_weights"] += 2.0 * objective.l2_lambda * params.lstm_recurrent_weights
        grads["output_weights"] += 2.0 * objective.l2_lambda * params.output_weights

    if cfg.layout.token_columns:
        d_x = d_z.reshape(-1, 4 * h_dim) @ params.lstm_input_weights
        d_x = d_x.reshape(bsz, t_len, cfg.input_width)
        raw = np.asarray(inputs, dtype=np.float64)
        table_grads = {
            name: np.zeros_like(tab) for name, tab in params.embedding_tables.items()
        }
        for col, offset, table in cfg.layout.expansion_slots(cfg.embed_dim):
            if table is None:
                continue
            ids = np.rint(raw[:, :, col]).astype(np.int64).reshape(-1)
            np.add.at(
                table_grads[table],
                ids,
                d_x[:, :, offset : offset + cfg.embed_dim].reshape(-1, cfg.embed_dim),
            )
        for name, gtab in table_grads.items():
            grads[f"embedding:{name}"] = gtab

    for name, arr in grads.items():
        if not np.isfinite(arr).all():
            raise TrainingDiverged(name)
    return grads, total, final


@dataclass
class AdamState:
    learning_rate: float
    step: int = 0
    slots: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def apply(self, params: ModelParams, grads: Dict[str, np.ndarray]):
        self.step += 1
        t = self.step
        blocks = params.blocks()
        for name, grad in grads.items():
            target = blocks[name]
            if name not in self.slots:
                self.slots[name] = (np.zeros_like(target), np.zeros_like(target))
            m, v = self.slots[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * grad
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * grad * grad
            m_hat = m / (1.0 - ADAM_BETA1**t)
            v_hat = v / (1.0 - ADAM_BETA2**t)
            target -= self.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def backward_and_step(
    params: ModelParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    objective: TrainingObjective,
    optimizer_state: AdamState,
    frame_mask: Optional[np.ndarray] = None,
    state: Optional[LstmState] = None,
):
    """One training step. Mutates params in place and returns
    (params, loss, final recurrent state)."""
    grads, total, final = backward_batch(
        params, inputs, targets, objective, frame_mask, state
    )
    optimizer_state.apply(params, grads)
    params.check_finite()
    return params, total, final


def gradient_check(
    params: ModelParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    objective: TrainingObjective,
    frame_mask: Optional[np.ndarray] = None,
    delta: float = 1e-5,
) -> Dict[str, float]:
    """Central finite differences over every scalar parameter.

    Returns the max relative error per block; relative error uses
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    grads, _, _ = backward_batch(params, inputs, targets, objective, frame_mask)

    def total_loss():
        probs, _ = forward_batch(params, inputs)
        return loss(probs, targets, objective, params, frame_mask)

    report = {}
    for name, arr in params.blocks().items():
        analytic = grads[name]
        worst = 0.0
        flat = arr.reshape(-1)
        a_flat = analytic.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + delta
            up = total_loss()
            flat[k] = orig - delta
            down = total_loss()
            flat[k] = orig
            numeric = (up - down) / (2.0 * delta)
            denom = max(abs(a_flat[k]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[k] - numeric) / denom)
        report[name] = worst
    return report


def save_checkpoint(
    params: ModelParams,
    path,
    plan_fingerprint: str = "",
    seed: int = 0,
):
    """Self-describing checkpoint: npz container with row-major float64
    arrays (endianness declared in the npy headers) plus a JSON metadata
    record carrying dimensions and provenance."""
    cfg = params.config
    meta = {
        "version": CHECKPOINT_VERSION,
        "hidden_size": cfg.hidden_size,
        "input_width": cfg.input_width,
        "n_columns": cfg.layout.n_columns,
        "token_columns": [[int(i), t] for i, t in cfg.layout.token_columns],
        "vocab_sizes": {k: int(v) for k, v in cfg.vocab_sizes.items()},
        "embed_dim": cfg.embed_dim,
        "window": cfg.window,
        "plan_fingerprint": plan_fingerprint,
        "seed": int(seed),
    }
    arrays = {
        "lstm_input_weights": params.lstm_input_weights,
        "lstm_recurrent_weights": params.lstm_recurrent_weights,
        "lstm_biases": params.lstm_biases,
        "output_weights": params.output_weights,
        "output_biases": params.output_biases,
    }
    for name, table in params.embedding_tables.items():
        arrays[f"embedding__{name}"] = table
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> Tuple[ModelParams, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(
                f"checkpoint version {meta.get('version')} not supported "
                f"(expected {CHECKPOINT_VERSION})"
            )
        layout = InputLayout(
            n_columns=meta["n_columns"],
            token_columns=tuple((int(i), t) for i, t in meta["token_columns"]),
        )
        config = NetworkConfig(
            hidden_size=meta["hidden_size"],
            layout=layout,
            vocab_sizes=meta["vocab_sizes"],
            embed_dim=meta["embed_dim"],
            window=meta["window"],
        )
        tables = {}
        for name in layout.table_names:
            tables[name] = np.array(data[f"embedding__{name}"], dtype=np.float64)
        params = ModelParams(
            config=config,
            lstm_input_weights=np.array(data["lstm_input_weights"], dtype=np.float64),
            lstm_recurrent_weights=np.array(data["lstm_recurrent_weights"], dtype=np.float64),
            lstm_biases=np.array(data["lstm_biases"], dtype=np.float64),
            output_weights=np.array(data["output_weights"], dtype=np.float64),
            output_biases=np.array(data["output_biases"], dtype=np.float64),
            embedding_tables=tables,
        )
    expected = (4 * config.hidden_size, config.input_width)
    if params.lstm_input_weights.shape != expected:
        raise ConfigError(
            f"checkpoint dimensions inconsistent: input weights "
            f"{params.lstm_input_weights.shape}, metadata implies {expected}"
        )
    return params, meta
