"""Tensor-train parameter generators.

A generator maps an input vector of length ``prod(input_dims)`` to an output
vector of length ``prod(output_dims)`` through a chain of 4-index cores
``G_k`` of shape ``(r_{k-1}, d_k, o_k, r_k)`` plus an additive bias.  The
output is multilinear in the cores, which makes exact Jacobians cheap and the
whole object trainable by any classical optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TTSpec",
    "TTGenerator",
    "TTInput",
    "TruncationReport",
    "tt_forward",
    "tt_param_count",
    "tt_to_dense",
    "tt_svd",
    "tt_jacobian",
    "fit_output_length",
    "spread_fit_gradient",
    "write_checkpoint",
    "parse_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

# Largest dense tensor (entries) tt_to_dense will materialize by default.
DENSE_ENTRY_BUDGET = 1 << 26


@dataclass(frozen=True)
class TTSpec:
    """Shape metadata: input dims d_k, output dims o_k, bond ranks r_0..r_K."""

    input_dims: tuple
    output_dims: tuple
    ranks: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        object.__setattr__(self, "output_dims", tuple(int(o) for o in self.output_dims))
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        k = len(self.input_dims)
        if k < 1:
            raise ValueError("input_dims: need at least one mode")
        if len(self.output_dims) != k:
            raise ValueError(
                f"output_dims: expected {k} modes to match input_dims, got {len(self.output_dims)}"
            )
        if len(self.ranks) != k + 1:
            raise ValueError(f"ranks: expected {k + 1} entries, got {len(self.ranks)}")
        if self.ranks[0] != 1 or self.ranks[-1] != 1:
            raise ValueError("ranks: boundary ranks r_0 and r_K must equal 1")
        for name, dims in (("input_dims", self.input_dims),
                           ("output_dims", self.output_dims),
                           ("ranks", self.ranks)):
            if any(d < 1 for d in dims):
                raise ValueError(f"{name}: all entries must be positive")

    @property
    def order(self) -> int:
        return len(self.input_dims)

    @property
    def input_size(self) -> int:
        return math.prod(self.input_dims)

    @property
    def output_size(self) -> int:
        return math.prod(self.output_dims)

    def core_shapes(self) -> list:
        r = self.ranks
        return [
            (r[k], self.input_dims[k], self.output_dims[k], r[k + 1])
            for k in range(self.order)
        ]

    @property
    def core_param_count(self) -> int:
        return sum(math.prod(s) for s in self.core_shapes())

    @property
    def bias_length(self) -> int:
        return self.output_size

    @property
    def total_param_count(self) -> int:
        return self.core_param_count + self.bias_length


def tt_param_count(spec: TTSpec) -> tuple:
    """Return (core parameter count, bias length) for a spec."""
    return spec.core_param_count, spec.bias_length


@dataclass(frozen=True)
class TTGenerator:
    """An immutable tensor-train generator: cores plus bias."""

    spec: TTSpec
    cores: tuple
    bias: np.ndarray

    def __post_init__(self):
        shapes = self.spec.core_shapes()
        if len(self.cores) != len(shapes):
            raise ValueError(f"cores: expected {len(shapes)}, got {len(self.cores)}")
        frozen = []
        for k, (core, shape) in enumerate(zip(self.cores, shapes)):
            arr = np.array(core, dtype=float)
            if arr.shape != shape:
                raise ValueError(f"core {k}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"core {k}: non-finite entries")
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "cores", tuple(frozen))
        bias = np.array(self.bias, dtype=float)
        if bias.shape != (self.spec.bias_length,):
            raise ValueError(
                f"bias: expected length {self.spec.bias_length}, got shape {bias.shape}"
            )
        if not np.all(np.isfinite(bias)):
            raise ValueError("bias: non-finite entries")
        bias.flags.writeable = False
        object.__setattr__(self, "bias", bias)

    @classmethod
    def initialize(cls, spec: TTSpec, rng: np.random.Generator, scale: float = 1.0) -> "TTGenerator":
        """Gaussian cores with std (r_{k-1} d_k)^{-1/2} per core; zero bias.

        The per-core variance keeps output magnitudes O(scale) regardless of
        depth or bond dimension.
        """
        cores = []
        for shape in spec.core_shapes():
            std = scale / math.sqrt(shape[0] * shape[1])
            cores.append(rng.normal(0.0, std, size=shape))
        return cls(spec, tuple(cores), np.zeros(spec.bias_length))

    def trainable_vector(self) -> np.ndarray:
        """Flatten all trainables: cores in order (row-major), then bias."""
        parts = [core.ravel() for core in self.cores]
        parts.append(self.bias)
        return np.concatenate(parts)

    def with_trainables(self, vec: np.ndarray) -> "TTGenerator":
        """Rebuild a generator from a flat trainable vector (same spec)."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.spec.total_param_count,):
            raise ValueError(
                f"trainable vector: expected length {self.spec.total_param_count}, got {vec.shape}"
            )
        cores, offset = [], 0
        for shape in self.spec.core_shapes():
            size = math.prod(shape)
            cores.append(vec[offset:offset + size].reshape(shape))
            offset += size
        return TTGenerator(self.spec, tuple(cores), vec[offset:])

    @property
    def n_trainables(self) -> int:
        return self.spec.total_param_count


@dataclass(frozen=True)
class TTInput:
    """Input vector for a generator: per-task features or a fixed latent draw."""

    mode: str
    values: np.ndarray

    def __post_init__(self):
        if self.mode not in ("task-features", "latent-gaussian"):
            raise ValueError(f"mode: must be 'task-features' or 'latent-gaussian', got {self.mode!r}")
        vals = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(vals)):
            raise ValueError("input values: non-finite entries")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def features(cls, x) -> "TTInput":
        return cls("task-features", np.asarray(x, dtype=float))

    @classmethod
    def latent(cls, spec: TTSpec, rng: np.random.Generator) -> "TTInput":
        return cls("latent-gaussian", rng.normal(0.0, 1.0, size=spec.input_size))


def _input_vector(spec: TTSpec, x) -> np.ndarray:
    vec = x.values if isinstance(x, TTInput) else np.asarray(x, dtype=float).ravel()
    if vec.shape[0] != spec.input_size:
        # Name the first mode whose cumulative product exceeds the supplied length.
        run = 1
        for k, d in enumerate(spec.input_dims):
            run *= d
            if run > vec.shape[0]:
                raise ValueError(
                    f"input length {vec.shape[0]} incompatible with input_dims "
                    f"{spec.input_dims} (mismatch at mode {k}, need {spec.input_size})"
                )
        raise ValueError(
            f"input length {vec.shape[0]} incompatible with input_dims "
            f"{spec.input_dims} (need {spec.input_size})"
        )
    return vec


def tt_forward(gen: TTGenerator, x) -> np.ndarray:
    """Contract the cores against the input left-to-right and add the bias."""
    vec = _input_vector(gen.spec, x)
    # Carry shape (bond, outputs-so-far, remaining-input) through the chain.
    w = vec.reshape(1, 1, -1)
    for core in gen.cores:
        r_prev, d_k, o_k, r_k = core.shape
        w = w.reshape(r_prev, w.shape[1], d_k, -1)
        w = np.tensordot(core, w, axes=([0, 1], [0, 2]))  # (o_k, r_k, O, D)
        w = w.transpose(1, 2, 0, 3)
        w = w.reshape(r_k, w.shape[1] * o_k, -1)
    return w.reshape(-1) + gen.bias


def tt_to_dense(gen: TTGenerator, max_entries: int = DENSE_ENTRY_BUDGET) -> np.ndarray:
    """Materialize the full linear map as a (prod d, prod o) matrix.

    The bias is not included: ``tt_forward(gen, x) == x @ dense + bias``.
    Serves as the brute-force oracle for the contraction code and as the
    target for tt_svd round trips.
    """
    spec = gen.spec
    n_entries = spec.input_size * spec.output_size
    if n_entries > max_entries:
        raise ValueError(
            f"dense tensor would hold {n_entries} entries, over the budget of {max_entries}"
        )
    dense = np.ones((1, 1, 1))
    for core in gen.cores:
        dense = np.tensordot(dense, core, axes=([2], [0]))  # (D, O, d, o, r)
        d_sz, o_sz, d_k, o_k, r_k = dense.shape
        dense = dense.transpose(0, 2, 1, 3, 4).reshape(d_sz * d_k, o_sz * o_k, r_k)
    return dense.reshape(spec.input_size, spec.output_size)


@dataclass(frozen=True)
class TruncationReport:
    """What a TT-SVD kept and threw away, with the resulting error bound."""

    kept_ranks: tuple
    discarded: tuple          # per internal unfolding, descending singular values
    error_bound: float        # sqrt(sum of squared discarded singular values)
    ranks_clamped: bool = False

    def __post_init__(self):
        total = sum(float(np.sum(np.square(s))) for s in self.discarded)
        bound = math.sqrt(total)
        if self.error_bound < bound - 1e-12:
            raise ValueError("error_bound below the singular-value tail it must dominate")


def tt_svd(
    dense,
    input_dims,
    output_dims,
    max_ranks=None,
    tolerance: float = 0.0,
) -> tuple:
    """Decompose a dense map into TT cores by sequential unfolding SVDs.

    Parameters
    ----------
    dense : array of shape (prod d, prod o), or reshapeable to the mode dims
    input_dims, output_dims : per-core dimensions (equal length K)
    max_ranks : optional internal ranks r_1..r_{K-1} to truncate to
    tolerance : optional absolute Frobenius error budget, spent equally
        across the K-1 unfoldings

    Returns (generator with zero bias, TruncationReport).  Reconstruction
    error in Frobenius norm never exceeds the report's error_bound; with
    untruncated ranks the decomposition is exact to numerical precision.
    """
    input_dims = tuple(int(d) for d in input_dims)
    output_dims = tuple(int(o) for o in output_dims)
    k_modes = len(input_dims)
    if len(output_dims) != k_modes:
        raise ValueError("input_dims and output_dims must have matching length")
    arr = np.asarray(dense, dtype=float)
    if arr.size != math.prod(input_dims) * math.prod(output_dims):
        raise ValueError(
            f"dense has {arr.size} entries, dims require "
            f"{math.prod(input_dims) * math.prod(output_dims)}"
        )
    if max_ranks is not None and len(max_ranks) != max(k_modes - 1, 0):
        raise ValueError(f"max_ranks: expected {k_modes - 1} internal ranks")

    # Interleave (d_1, o_1, ..., d_K, o_K) so each TT mode is one (d_k, o_k) pair.
    arr = arr.reshape(input_dims + output_dims)
    perm = []
    for k in range(k_modes):
        perm.extend([k, k_modes + k])
    arr = arr.transpose(perm)
    mode_sizes = [input_dims[k] * output_dims[k] for k in range(k_modes)]

    step_tol = tolerance / math.sqrt(k_modes - 1) if (tolerance > 0 and k_modes > 1) else 0.0
    cores, kept, discarded = [], [1], []
    clamped = False
    mat = arr.reshape(mode_sizes[0] * kept[0], -1)
    for k in range(k_modes - 1):
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        rank = len(s)
        if step_tol > 0:
            # tail[r] = Frobenius error of discarding s[r:]; keep the smallest
            # prefix whose tail fits in this unfolding's share of the budget.
            tail = np.sqrt(np.cumsum(np.square(s[::-1])))[::-1]
            rank = max(1, rank - int(np.sum(tail <= step_tol)))
        if max_ranks is not None:
            if max_ranks[k] > len(s):
                clamped = True
            rank = max(1, min(rank, int(max_ranks[k]), len(s)))
        discarded.append(np.array(s[rank:], dtype=float))
        kept.append(rank)
        cores.append(u[:, :rank].reshape(kept[k], input_dims[k], output_dims[k], rank))
        mat = (s[:rank, None] * vt[:rank]).reshape(rank * mode_sizes[k + 1], -1)
    cores.append(mat.reshape(kept[-1], input_dims[-1], output_dims[-1], 1))
    kept.append(1)

    spec = TTSpec(input_dims, output_dims, tuple(kept))
    gen = TTGenerator(spec, tuple(cores), np.zeros(spec.bias_length))
    bound = math.sqrt(sum(float(np.sum(np.square(s))) for s in discarded))
    report = TruncationReport(tuple(kept), tuple(discarded), bound, clamped)
    return gen, report


def tt_jacobian(gen: TTGenerator, x) -> np.ndarray:
    """Exact Jacobian d(output)/d(trainables), shape (prod o, total count).

    Columns follow trainable_vector() order: each core row-major, then bias.
    Multilinearity makes every block a contraction of the input with all
    other cores; the bias block is the identity.
    """
    spec = gen.spec
    vec = _input_vector(spec, x)
    n_out = spec.output_size

    # Left partials: after absorbing cores 0..k-1, shape (r_k, O_left, D_rest).
    lefts = [vec.reshape(1, 1, -1)]
    for core in gen.cores:
        r_prev, d_k, o_k, r_k = core.shape
        w = lefts[-1].reshape(r_prev, lefts[-1].shape[1], d_k, -1)
        w = np.tensordot(core, w, axes=([0, 1], [0, 2]))
        w = w.transpose(1, 2, 0, 3)
        lefts.append(w.reshape(r_k, w.shape[1] * o_k, -1))

    blocks = []
    for i, core_i in enumerate(gen.cores):
        a_dim, d_dim, o_dim, b_dim = core_i.shape
        w = lefts[i]                      # (a, OL, d_i * D_trail)
        ol = w.shape[1]
        w = w.reshape(a_dim, ol, d_dim, -1)
        # Absorb the downstream cores, leaving the bond b of the missing core free.
        if i + 1 < len(gen.cores):
            nxt = gen.cores[i + 1]
            _, d_m, o_m, r_m = nxt.shape
            w = w.reshape(a_dim, ol, d_dim, d_m, -1)
            w = np.tensordot(w, nxt, axes=([3], [1]))      # (a, OL, d, D, b, o_m, r_m)
            w = w.transpose(0, 1, 2, 4, 5, 6, 3)           # (a, OL, d, b, o_m, r_m, D)
            w = w.reshape(a_dim, ol, d_dim, b_dim, o_m, r_m, -1)
            for m in range(i + 2, len(gen.cores)):
                nxt = gen.cores[m]
                r_prev, d_m, o_m, r_m = nxt.shape
                orr = w.shape[4]
                w = w.reshape(a_dim, ol, d_dim, b_dim, orr, r_prev, d_m, -1)
                w = np.tensordot(w, nxt, axes=([5, 6], [0, 1]))  # (a,OL,d,b,OR,D,o_m,r_m)
                w = w.transpose(0, 1, 2, 3, 4, 6, 7, 5)
                w = w.reshape(a_dim, ol, d_dim, b_dim, orr * o_m, r_m, -1)
            env = w.reshape(a_dim, ol, d_dim, b_dim, -1)   # trailing bond/input dims are 1
        else:
            env = w.reshape(a_dim, ol, d_dim, b_dim, 1)
        o_right = env.shape[4]
        env = env.transpose(1, 4, 0, 2, 3)                 # (OL, OR, a, d, b)
        blk = np.zeros((ol, o_dim, o_right, a_dim, d_dim, o_dim, b_dim))
        for o in range(o_dim):
            blk[:, o, :, :, :, o, :] = env
        blocks.append(blk.reshape(n_out, a_dim * d_dim * o_dim * b_dim))
    blocks.append(np.eye(n_out))
    return np.hstack(blocks)


def fit_output_length(values: np.ndarray, target_len: int) -> np.ndarray:
    """Adapt a generated vector to a circuit's parameter count.

    Truncates when too long, tiles cyclically when too short.  Callers that
    rely on this adaptation record it in their run metadata.
    """
    values = np.asarray(values, dtype=float).ravel()
    if target_len < 0:
        raise ValueError("target_len must be non-negative")
    if len(values) == target_len:
        return values.copy()
    return values[np.arange(target_len) % len(values)]


def spread_fit_gradient(grad: np.ndarray, source_len: int) -> np.ndarray:
    """Adjoint of fit_output_length: route gradients back to generator outputs."""
    grad = np.asarray(grad, dtype=float).ravel()
    out = np.zeros(source_len)
    np.add.at(out, np.arange(len(grad)) % source_len, grad)
    return out


# ---------------------------------------------------------------------------
# Checkpoint format: plain text, round-trips float64 bit-exactly via %.17g.

def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.asarray(values).ravel())


def write_checkpoint(gen: TTGenerator) -> str:
    spec = gen.spec
    lines = [
        "tt-checkpoint 1",
        "input_dims " + " ".join(str(d) for d in spec.input_dims),
        "output_dims " + " ".join(str(o) for o in spec.output_dims),
        "ranks " + " ".join(str(r) for r in spec.ranks),
    ]
    for k, core in enumerate(gen.cores):
        lines.append(f"core {k}")
        lines.append(_fmt(core))
    lines.append("bias")
    lines.append(_fmt(gen.bias))
    return "\n".join(lines) + "\n"


def parse_checkpoint(text: str) -> TTGenerator:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("tt-checkpoint"):
        raise ValueError("checkpoint: missing 'tt-checkpoint' header")
    fields = {}
    idx = 1
    for key in ("input_dims", "output_dims", "ranks"):
        parts = lines[idx].split()
        if parts[0] != key:
            raise ValueError(f"checkpoint: expected '{key}' on line {idx + 1}, got {parts[0]!r}")
        fields[key] = [int(p) for p in parts[1:]]
        idx += 1
    spec = TTSpec(fields["input_dims"], fields["output_dims"], fields["ranks"])
    cores = []
    for k, shape in enumerate(spec.core_shapes()):
        parts = lines[idx].split()
        if parts[:2] != ["core", str(k)]:
            raise ValueError(f"checkpoint: expected 'core {k}' on line {idx + 1}")
        idx += 1
        values = np.array([float(v) for v in lines[idx].split()])
        if values.size != math.prod(shape):
            raise ValueError(f"checkpoint: core {k} has {values.size} values, expected {math.prod(shape)}")
        cores.append(values.reshape(shape))
        idx += 1
    if lines[idx] != "bias":
        raise ValueError(f"checkpoint: expected 'bias' on line {idx + 1}")
    idx += 1
    bias = np.array([float(v) for v in lines[idx].split()])
    return TTGenerator(spec, tuple(cores), bias)


def save_checkpoint(gen: TTGenerator, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_checkpoint(gen))


def load_checkpoint(path) -> TTGenerator:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_checkpoint(fh.read())
