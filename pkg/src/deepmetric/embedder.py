"""The branched embedding network.

The input vector is split into equal-length, optionally overlapping segments,
one per branch. Each branch applies a stack of affine + rectifier layers
(weights shared across branches when tied); branch outputs are concatenated,
passed through a rectified joint layer and a final linear layer, and the
result is normalized to unit Euclidean length.

Parameters live in one flat float64 buffer. A `ParamLayout` maps named blocks
(per-branch weights/biases, joint, output) to offsets; tied branches map every
branch to the same block, so backward's accumulation sums branch gradients
into the shared storage with no special casing.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import ConfigError, DegenerateEmbeddingError, ShapeError


@dataclass(frozen=True)
class EmbedderConfig:
    input_dim: int
    num_branches: int = 3
    overlap_fraction: float = 0.0
    branch_hidden_dims: tuple = ()
    joint_hidden_dim: int = 8
    output_dim: int = 8
    tied_branches: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "branch_hidden_dims",
                           tuple(int(d) for d in self.branch_hidden_dims))
        self.segment_geometry()  # fail fast on inconsistent arithmetic

    def segment_geometry(self) -> tuple[int, int]:
        """(segment_length, overlap) implied by the config.

        With B branches of length L overlapping by o indices, coverage of the
        input requires B*L - (B-1)*o = input_dim with o = overlap_fraction*L;
        both must come out integral or the config is rejected.
        """
        if self.num_branches < 1:
            raise ConfigError(f"num_branches must be >= 1, got {self.num_branches}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ConfigError(
                f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")
        if self.output_dim < 1 or self.joint_hidden_dim < 1:
            raise ConfigError("output_dim and joint_hidden_dim must be >= 1")
        if any(d < 1 for d in self.branch_hidden_dims):
            raise ConfigError(f"branch_hidden_dims must be positive, got {self.branch_hidden_dims}")
        b = self.num_branches
        if b == 1:
            return self.input_dim, 0
        denom = b - (b - 1) * self.overlap_fraction
        length = self.input_dim / denom
        seg_len = round(length)
        overlap = round(self.overlap_fraction * seg_len)
        if (abs(length - seg_len) > 1e-9
                or abs(self.overlap_fraction * seg_len - overlap) > 1e-9
                or b * seg_len - (b - 1) * overlap != self.input_dim
                or seg_len <= overlap):
            raise ConfigError(
                f"segmentation arithmetic is not exact: input_dim={self.input_dim}, "
                f"num_branches={b}, overlap_fraction={self.overlap_fraction} "
                f"imply segment length {length!r}"
            )
        return seg_len, overlap

    def segment_starts(self) -> np.ndarray:
        seg_len, overlap = self.segment_geometry()
        stride = seg_len - overlap
        return np.arange(self.num_branches, dtype=np.int64) * stride

    def branch_output_dim(self) -> int:
        seg_len, _ = self.segment_geometry()
        return self.branch_hidden_dims[-1] if self.branch_hidden_dims else seg_len

    def concat_dim(self) -> int:
        return self.num_branches * self.branch_output_dim()


class ParamLayout:
    """Offsets of every parameter block within the flat buffer."""

    def __init__(self, config: EmbedderConfig):
        self.config = config
        seg_len, _ = config.segment_geometry()
        self.seg_len = seg_len
        self.seg_starts = config.segment_starts()
        self.dims = np.array([seg_len, *config.branch_hidden_dims], dtype=np.int64)
        m = len(config.branch_hidden_dims)
        b = config.num_branches

        self.blocks: dict[str, tuple[int, tuple[int, ...]]] = {}
        cursor = 0

        def add(name: str, shape: tuple[int, ...]) -> int:
            nonlocal cursor
            off = cursor
            self.blocks[name] = (off, shape)
            cursor += int(np.prod(shape))
            return off

        stacks = 1 if config.tied_branches else b
        stack_offsets = np.zeros((stacks, m, 2), dtype=np.int64)
        for s in range(stacks):
            prefix = "branch" if config.tied_branches else f"branch{s}"
            for l in range(m):
                d_in, d_out = int(self.dims[l]), int(self.dims[l + 1])
                stack_offsets[s, l, 0] = add(f"{prefix}.layer{l}.w", (d_out, d_in))
                stack_offsets[s, l, 1] = add(f"{prefix}.layer{l}.b", (d_out,))
        # per-branch offset tables for the kernels; tied = one row repeated
        rows = np.repeat(stack_offsets, b, axis=0) if config.tied_branches else stack_offsets
        self.bw_off = np.ascontiguousarray(rows[:, :, 0])
        self.bb_off = np.ascontiguousarray(rows[:, :, 1])

        c, j, e = config.concat_dim(), config.joint_hidden_dim, config.output_dim
        self.jw_off = add("joint.w", (j, c))
        self.jb_off = add("joint.b", (j,))
        self.ow_off = add("out.w", (e, j))
        self.ob_off = add("out.b", (e,))
        self.size = cursor

        hidden_total = int(np.sum(self.dims[1:]))
        self.tape_size = b * (seg_len + hidden_total) + c + j + e
        self.y_off = self.tape_size - e


@dataclass
class EmbedderParams:
    """Flat parameter buffer plus the layout that interprets it."""
    config: EmbedderConfig
    flat: np.ndarray
    layout: ParamLayout

    def block(self, name: str) -> np.ndarray:
        """Writable view of one named block."""
        off, shape = self.layout.blocks[name]
        return self.flat[off:off + int(np.prod(shape))].reshape(shape)

    def branch_block_names(self, branch: int) -> list[str]:
        prefix = "branch" if self.config.tied_branches else f"branch{branch}"
        m = len(self.config.branch_hidden_dims)
        return [f"{prefix}.layer{l}.{p}" for l in range(m) for p in ("w", "b")]

    def copy(self) -> "EmbedderParams":
        return EmbedderParams(self.config, self.flat.copy(), self.layout)


@dataclass
class Tape:
    """Forward-pass record consumed by `backward`."""
    layout: ParamLayout
    buf: np.ndarray


def count_parameters(config: EmbedderConfig) -> int:
    return ParamLayout(config).size


def init(config: EmbedderConfig) -> EmbedderParams:
    """Seeded initialization: weights ~ N(0, 1/fan_in), biases zero."""
    layout = ParamLayout(config)
    rng = np.random.default_rng(config.seed)
    flat = np.zeros(layout.size)
    params = EmbedderParams(config, flat, layout)
    for name, (off, shape) in layout.blocks.items():
        if name.endswith(".w"):
            fan_in = shape[1]
            params.flat[off:off + shape[0] * shape[1]] = rng.normal(
                0.0, 1.0 / np.sqrt(fan_in), size=shape[0] * shape[1])
    return params


def split_segments(x, config: EmbedderConfig) -> list[np.ndarray]:
    """The per-branch views of an input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (config.input_dim,):
        raise ShapeError(f"input has shape {x.shape}, expected ({config.input_dim},)")
    seg_len, _ = config.segment_geometry()
    return [x[s:s + seg_len].copy() for s in config.segment_starts()]


def forward(params: EmbedderParams, x) -> tuple[np.ndarray, Tape]:
    """Embed one input; returns the unit-norm embedding and the tape."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    cfg, lay = params.config, params.layout
    if x.shape != (cfg.input_dim,):
        raise ShapeError(f"input has shape {x.shape}, expected ({cfg.input_dim},)")
    tape = np.zeros(lay.tape_size)
    _kernels.embedder_forward(
        params.flat, x, lay.seg_starts, lay.seg_len, lay.dims,
        lay.bw_off, lay.bb_off, lay.jw_off, lay.jb_off, lay.ow_off, lay.ob_off,
        cfg.concat_dim(), cfg.joint_hidden_dim, cfg.output_dim, tape)
    y = tape[lay.y_off:lay.y_off + cfg.output_dim]
    norm = float(np.linalg.norm(y))
    if norm == 0.0:
        raise DegenerateEmbeddingError(
            "pre-normalization embedding is the zero vector")
    return y / norm, Tape(lay, tape)


def backward(params: EmbedderParams, tape: Tape,
             grad_wrt_embedding) -> tuple[np.ndarray, np.ndarray]:
    """Exact reverse-mode gradients.

    Returns (gradient w.r.t. the flat parameter buffer, gradient w.r.t. the
    input vector). Includes the Jacobian of the unit normalization. Tied
    branches accumulate into the shared block.
    """
    cfg, lay = params.config, params.layout
    if tape.layout is not lay and tape.layout.blocks != lay.blocks:
        raise ShapeError("tape does not match these parameters")
    g = np.ascontiguousarray(grad_wrt_embedding, dtype=np.float64)
    if g.shape != (cfg.output_dim,):
        raise ShapeError(f"gradient has shape {g.shape}, expected ({cfg.output_dim},)")
    g_flat = np.zeros(lay.size)
    g_x = np.zeros(cfg.input_dim)
    _kernels.embedder_backward(
        params.flat, tape.buf, g, lay.seg_starts, lay.seg_len, lay.dims,
        lay.bw_off, lay.bb_off, lay.jw_off, lay.jb_off, lay.ow_off, lay.ob_off,
        cfg.concat_dim(), cfg.joint_hidden_dim, cfg.output_dim, g_flat, g_x)
    return g_flat, g_x


def parameter_matched_tied_config(untied: EmbedderConfig,
                                  tolerance: float = 0.05) -> EmbedderConfig:
    """Tied-branch variant widened until its parameter count is within
    `tolerance` of the untied network's count.

    Scales every branch hidden dimension by a common factor and keeps the
    candidate whose count lands closest to the untied total.
    """
    if untied.tied_branches:
        raise ConfigError("expected an untied config to match against")
    if not untied.branch_hidden_dims:
        raise ConfigError("parameter matching requires branch hidden layers to widen")
    target = count_parameters(untied)
    best: tuple[float, EmbedderConfig] | None = None
    for factor in np.linspace(1.0, untied.num_branches + 1.0, 600):
        dims = tuple(max(1, round(d * factor)) for d in untied.branch_hidden_dims)
        candidate = replace(untied, tied_branches=True, branch_hidden_dims=dims)
        rel = abs(count_parameters(candidate) - target) / target
        if best is None or rel < best[0]:
            best = (rel, candidate)
    rel, candidate = best
    if rel > tolerance:
        raise ConfigError(
            f"could not match parameter counts within {tolerance:.0%}: best gap {rel:.1%}")
    return candidate
