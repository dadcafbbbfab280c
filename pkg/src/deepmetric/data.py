"""Identity-labeled two-view sample collections.

Provides a synthetic curved-manifold generator with controllable intra-class
variation, a delimited-text loader/writer, bounded-noise augmentation, and
identity-disjoint protocol splitting.

The synthetic generator places every identity at an arc position on one
shared curve embedded in ``input_dim`` dimensions: coordinate 0 advances
linearly with the arc parameter, the remaining coordinates are sinusoids
whose frequencies scale with ``manifold_curvature``. Samples of an identity
are spread along the curve in the arc parameter by a two-component mixture:
most samples sit in a tight core of scale ``intra_class_spread``, a fixed
minority are outliers drawn at several times that scale, mimicking the
extreme intra-class variation (occlusion, misalignment) of pedestrian data.
View-2 samples are shifted by one fixed random offset modeling the camera
gap. Curvature 0 degenerates to a straight line, where chord distances match
arc distances; large curvature folds the curve so that chord distances
between far-apart arc positions stop reflecting arc separation, which is
what makes outlier positives destructive to train on.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError

VIEWS = (1, 2)

# intra-class arc perturbation: most samples sit in a Gaussian core at the
# configured spread; two fixed minorities are hard outliers displaced along
# the curve by a uniform magnitude in the bands below (multiples of the
# spread). Short-band outliers imitate nearby identities; long-band outliers
# land far along the curve, so pulling them toward their own identity drags
# distant regions together. Together they model the extreme intra-class
# variation of pedestrian data.
SHORT_OUTLIER_FRACTION = 0.15
SHORT_OUTLIER_BAND = (2.5, 6.0)
LONG_OUTLIER_FRACTION = 0.2
LONG_OUTLIER_BAND = (8.0, 30.0)

# the curve is a necklace: a slow circular backbone on the first two
# coordinates keeps the embedding direction-coded and injective (identities
# occupy BACKBONE_SPAN of the circle, leaving a gap so outliers cannot wrap),
# while the remaining coordinates carry the curvature-controlled folds
BACKBONE_RADIUS = 1.0
BACKBONE_SPAN = 0.8
FOLD_AMPLITUDE = 0.8


@dataclass
class Sample:
    """One observation: an identity label, a camera view, and a feature vector."""
    identity: int
    view: int
    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.identity < 0:
            raise ValueError(f"identity must be nonnegative, got {self.identity}")
        if self.view not in VIEWS:
            raise ValueError(f"view must be 1 or 2, got {self.view}")
        if self.features.ndim != 1 or not np.all(np.isfinite(self.features)):
            raise ValueError("features must be a finite 1-d vector")


class Dataset:
    """An immutable collection of samples sharing one feature dimension."""

    def __init__(self, identities, views, features):
        self.identities = np.asarray(identities, dtype=np.int64)
        self.views = np.asarray(views, dtype=np.int64)
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {self.features.shape}")
        n = len(self.identities)
        if len(self.views) != n or self.features.shape[0] != n:
            raise ValueError("identities, views, and features lengths disagree")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite entries")
        if n and (np.any(self.identities < 0) or not np.all(np.isin(self.views, VIEWS))):
            raise ValueError("identities must be nonnegative and views in {1, 2}")

    @classmethod
    def from_samples(cls, samples: list[Sample]) -> "Dataset":
        if not samples:
            raise ValueError("cannot build a dataset from zero samples")
        dim = samples[0].features.shape[0]
        for i, s in enumerate(samples):
            if s.features.shape[0] != dim:
                raise ValueError(f"sample {i} has dimension {s.features.shape[0]}, expected {dim}")
        return cls(
            [s.identity for s in samples],
            [s.view for s in samples],
            np.stack([s.features for s in samples]),
        )

    def __len__(self) -> int:
        return len(self.identities)

    def __getitem__(self, i: int) -> Sample:
        return Sample(int(self.identities[i]), int(self.views[i]), self.features[i].copy())

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def identity_set(self) -> np.ndarray:
        return np.unique(self.identities)

    def indices_where(self, identity: int | None = None, view: int | None = None,
                      exclude_identity: int | None = None) -> np.ndarray:
        mask = np.ones(len(self), dtype=bool)
        if identity is not None:
            mask &= self.identities == identity
        if exclude_identity is not None:
            mask &= self.identities != exclude_identity
        if view is not None:
            mask &= self.views == view
        return np.nonzero(mask)[0]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.identities[idx], self.views[idx], self.features[idx])


@dataclass
class SyntheticConfig:
    """Knobs of the curved-manifold generator."""
    num_identities: int
    samples_per_view: int
    input_dim: int
    manifold_curvature: float = 0.0
    intra_class_spread: float = 0.0
    view_offset_magnitude: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_identities < 2:
            raise ConfigError(f"num_identities must be >= 2, got {self.num_identities}")
        if self.samples_per_view < 1:
            raise ConfigError(f"samples_per_view must be >= 1, got {self.samples_per_view}")
        if self.input_dim < 2:
            raise ConfigError(f"input_dim must be >= 2, got {self.input_dim}")
        for name in ("manifold_curvature", "intra_class_spread", "view_offset_magnitude"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class ProtocolSplit:
    """Identity-disjoint train/validation/test partition."""
    train: Dataset
    validation: Dataset
    test: Dataset

    def parts(self) -> tuple[Dataset, Dataset, Dataset]:
        return self.train, self.validation, self.test


def _curve_points(t: np.ndarray, curvature: float, dim: int, span: float,
                  phases: np.ndarray) -> np.ndarray:
    """Points on the shared base manifold for arc parameters `t`."""
    out = np.empty((t.shape[0], dim))
    angle = 2.0 * np.pi * BACKBONE_SPAN * t / span
    out[:, 0] = BACKBONE_RADIUS * np.cos(angle)
    out[:, 1] = BACKBONE_RADIUS * np.sin(angle)
    amp = FOLD_AMPLITUDE / np.sqrt(max(dim - 2, 1))
    # frequency multipliers cycle over {1, 2, 3} so coordinates decorrelate
    for j in range(2, dim):
        freq = curvature * (1 + (j - 2) % 3)
        out[:, j] = amp * np.sin(freq * t + phases[j - 2])
    return out


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Deterministic two-view dataset on a shared curved manifold.

    Identities sit at unit-spaced arc positions. Each sample's arc parameter
    is its identity's position plus Gaussian noise of scale
    ``intra_class_spread``; view-2 samples are additionally shifted by a fixed
    per-dataset offset of magnitude ``view_offset_magnitude``.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    dim = config.input_dim
    span = float(config.num_identities)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=dim - 2)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    offset = config.view_offset_magnitude * direction

    identities, views, rows = [], [], []
    for identity in range(config.num_identities):
        base_t = float(identity)
        for view in VIEWS:
            n = config.samples_per_view
            s = config.intra_class_spread
            kind = rng.random(n)
            is_long = kind < LONG_OUTLIER_FRACTION
            is_short = (~is_long) & (kind < LONG_OUTLIER_FRACTION
                                     + SHORT_OUTLIER_FRACTION)
            core = s * rng.normal(0.0, 1.0, size=n)
            short_mag = rng.uniform(SHORT_OUTLIER_BAND[0] * s,
                                    SHORT_OUTLIER_BAND[1] * s, size=n)
            long_mag = rng.uniform(LONG_OUTLIER_BAND[0] * s,
                                   LONG_OUTLIER_BAND[1] * s, size=n)
            sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            t = base_t + np.where(is_long, sign * long_mag,
                                  np.where(is_short, sign * short_mag, core))
            pts = _curve_points(t, config.manifold_curvature, dim, span, phases)
            if view == 2:
                pts = pts + offset
            for row in pts:
                identities.append(identity)
                views.append(view)
                rows.append(row)
    return Dataset(identities, views, np.stack(rows))


def augment(sample: Sample, magnitude: float, rng: np.random.Generator) -> Sample:
    """Per-coordinate uniform perturbation in [-magnitude, +magnitude].

    The vector-data counterpart of random-translation image augmentation;
    identity and view labels are untouched.
    """
    if magnitude < 0:
        raise ValueError(f"magnitude must be >= 0, got {magnitude}")
    noise = rng.uniform(-magnitude, magnitude, size=sample.features.shape[0])
    return Sample(sample.identity, sample.view, sample.features + noise)


def write_delimited(dataset: Dataset, path) -> None:
    """Write the documented delimited format: header then one sample per line.

    Floats are written as shortest round-trip literals, so a write/load
    round-trip reproduces the dataset exactly.
    """
    dim = dataset.input_dim
    header = "identity,view," + ",".join(f"f{j}" for j in range(dim))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for i in range(len(dataset)):
            feats = ",".join(repr(float(v)) for v in dataset.features[i])
            fh.write(f"{dataset.identities[i]},{dataset.views[i]},{feats}\n")


def load_delimited(path) -> Dataset:
    """Load a dataset written by `write_delimited`.

    Rejects ragged rows, non-numeric features, and views outside {1, 2},
    naming the offending 1-based line.
    """
    try:
        with open(path, "r", encoding="ascii") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise DataFormatError(f"dataset file not found: {path}")
    if not lines:
        raise DataFormatError(f"{path}: empty file, expected a header line")
    n_cols = len(lines[0].split(","))
    if n_cols < 3:
        raise DataFormatError(f"{path}: line 1: header must have identity,view,f0,... columns")
    dim = n_cols - 2

    identities, views, rows = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            raise DataFormatError(
                f"{path}: line {lineno}: expected {n_cols} fields, got {len(parts)}"
            )
        try:
            identity = int(parts[0])
            view = int(parts[1])
            feats = [float(p) for p in parts[2:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}")
        if view not in VIEWS:
            raise DataFormatError(f"{path}: line {lineno}: view must be 1 or 2, got {view}")
        if identity < 0:
            raise DataFormatError(f"{path}: line {lineno}: identity must be >= 0, got {identity}")
        if not all(np.isfinite(feats)):
            raise DataFormatError(f"{path}: line {lineno}: non-finite feature value")
        identities.append(identity)
        views.append(view)
        rows.append(feats)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(identities, views, np.array(rows, dtype=np.float64))


def split_protocol(dataset: Dataset, fractions, seed: int) -> ProtocolSplit:
    """Partition identities (never samples) into train/validation/test.

    Identities are shuffled deterministically by `seed`, then split by the
    given fractions with largest-remainder rounding; every part gets at least
    one identity.
    """
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got sum {sum(fractions)!r}")
    ids = np.unique(dataset.identities)
    if len(ids) < 3:
        raise ConfigError(f"need at least 3 identities to split, got {len(ids)}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(ids)

    n = len(ids)
    raw = [f * n for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    remainders = [r - c for r, c in zip(raw, counts)]
    for _ in range(n - sum(counts)):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    # every part nonempty: take from the currently largest part
    for i in range(3):
        while counts[i] == 0:
            j = int(np.argmax(counts))
            counts[j] -= 1
            counts[i] += 1

    bounds = np.cumsum(counts)
    groups = [set(order[:bounds[0]]), set(order[bounds[0]:bounds[1]]), set(order[bounds[1]:])]
    parts = []
    for group in groups:
        mask = np.isin(dataset.identities, sorted(group))
        parts.append(dataset.subset(np.nonzero(mask)[0]))
    return ProtocolSplit(*parts)
