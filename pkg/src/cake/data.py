"""Sample/domain/dataset containers, file formats, and the synthetic corpus.

Bundles are treated as immutable after load/generation and are safe to share
read-only. The binary feature format stores features and arousal-valence as
f32; bundle values produced by the synthesizer are pre-rounded through f32 so
that write -> load round trips are value-exact.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .numerics import SeededRng, derive_seed

FEATURE_MAGIC = b"CAKEFEAT"
FEATURE_VERSION = 1

# Sub-stream tags for the synthesizer (see numerics.derive_seed).
_TAG_PROTO = 101
_TAG_LIFT = 102
_TAG_SHIFT = 103
_TAG_TRAIN = 104
_TAG_TEST = 105


class EmotionClass(IntEnum):
    """The seven emotion classes, in fixed index order."""

    NEUTRAL = 0
    HAPPINESS = 1
    SAD = 2
    SURPRISE = 3
    FEAR = 4
    DISGUST = 5
    ANGER = 6


CLASS_NAMES = tuple(c.name.lower() for c in EmotionClass)
N_EMOTIONS = len(CLASS_NAMES)


class FeatureFileError(ValueError):
    """Parse failure in a feature file; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(eq=False)
class FeatureRecord:
    """One sample: a feature vector with its label, domain, and optional AV pair."""

    id: str
    domain_id: int
    features: np.ndarray  # float64, length = bundle dim
    label: int  # 0..6, see EmotionClass
    av: Optional[tuple[float, float]] = None  # (arousal, valence), each in [-1, 1]


@dataclass(eq=False)
class DomainMeta:
    """Per-domain bookkeeping: name, total count, per-class counts."""

    domain_id: int
    name: str
    n_total: int
    class_counts: np.ndarray  # int64, length N_EMOTIONS

    def validate(self) -> None:
        if len(self.class_counts) != N_EMOTIONS:
            raise ValueError(
                f"domain {self.domain_id}: class_counts must have length "
                f"{N_EMOTIONS}, got {len(self.class_counts)}"
            )
        if int(np.sum(self.class_counts)) != self.n_total:
            raise ValueError(
                f"domain {self.domain_id}: class_counts sum "
                f"{int(np.sum(self.class_counts))} != n_total {self.n_total}"
            )


@dataclass(eq=False)
class DatasetBundle:
    """A validated multi-domain corpus of feature records.

    The split tag is in-memory metadata only; the binary format does not
    store it, so loaders take it as an argument.
    """

    dim: int
    domains: list[DomainMeta]
    records: list[FeatureRecord]
    split: str = ""

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    def validate(self) -> None:
        for j, meta in enumerate(self.domains):
            if meta.domain_id != j:
                raise ValueError(
                    f"bundle: domain metas must be ordered by id, "
                    f"position {j} has id {meta.domain_id}"
                )
            meta.validate()
        counts = np.zeros((self.n_domains, N_EMOTIONS), dtype=np.int64)
        for i, rec in enumerate(self.records):
            if not 0 <= rec.domain_id < self.n_domains:
                raise ValueError(f"record {rec.id!r}: unknown domain {rec.domain_id}")
            if not 0 <= rec.label < N_EMOTIONS:
                raise ValueError(f"record {rec.id!r}: label {rec.label} out of range")
            if len(rec.features) != self.dim:
                raise ValueError(
                    f"record {rec.id!r}: feature length {len(rec.features)} "
                    f"!= bundle dim {self.dim}"
                )
            if rec.av is not None:
                a, v = rec.av
                if not (-1.0 <= a <= 1.0 and -1.0 <= v <= 1.0):
                    raise ValueError(
                        f"record {rec.id!r}: av ({a}, {v}) outside [-1, 1]"
                    )
            counts[rec.domain_id, rec.label] += 1
        for j, meta in enumerate(self.domains):
            if not np.array_equal(counts[j], meta.class_counts):
                raise ValueError(
                    f"domain {j}: recorded class_counts {meta.class_counts.tolist()} "
                    f"do not match records {counts[j].tolist()}"
                )


def class_counts(bundle: DatasetBundle) -> np.ndarray:
    """Exact per-domain per-class counts, recomputed from the records."""
    counts = np.zeros((bundle.n_domains, N_EMOTIONS), dtype=np.int64)
    for rec in bundle.records:
        counts[rec.domain_id, rec.label] += 1
    return counts


def bundles_equal(a: DatasetBundle, b: DatasetBundle) -> bool:
    """Field-by-field value equality (split tags included)."""
    if (a.dim, a.split, a.n_domains, len(a.records)) != (
        b.dim,
        b.split,
        b.n_domains,
        len(b.records),
    ):
        return False
    for ma, mb in zip(a.domains, b.domains):
        if (ma.domain_id, ma.name, ma.n_total) != (mb.domain_id, mb.name, mb.n_total):
            return False
        if not np.array_equal(ma.class_counts, mb.class_counts):
            return False
    for ra, rb in zip(a.records, b.records):
        if (ra.id, ra.domain_id, ra.label) != (rb.id, rb.domain_id, rb.label):
            return False
        if (ra.av is None) != (rb.av is None):
            return False
        if ra.av is not None and ra.av != rb.av:
            return False
        if not np.array_equal(ra.features, rb.features):
            return False
    return True


@dataclass(eq=False)
class BundleArrays:
    """Dense views of a bundle for vectorized math."""

    x: np.ndarray  # (n, dim) float64
    y: np.ndarray  # (n,) int64
    dom: np.ndarray  # (n,) int64
    av: Optional[np.ndarray]  # (n, 2) float64, None when any record lacks AV
    n_missing_av: int


def bundle_arrays(bundle: DatasetBundle) -> BundleArrays:
    n = len(bundle.records)
    x = np.zeros((n, bundle.dim), dtype=np.float64)
    y = np.zeros(n, dtype=np.int64)
    dom = np.zeros(n, dtype=np.int64)
    av = np.zeros((n, 2), dtype=np.float64)
    missing = 0
    for i, rec in enumerate(bundle.records):
        x[i] = rec.features
        y[i] = rec.label
        dom[i] = rec.domain_id
        if rec.av is None:
            missing += 1
        else:
            av[i] = rec.av
    return BundleArrays(x, y, dom, av if missing == 0 else None, missing)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    """Seeded multi-domain synthetic corpus: latent class prototypes, a random
    linear lift to feature space, per-domain shifts and class imbalance.

    Keeping latent_dim below dim lets tests construct corpora where a
    3-d embedding genuinely beats a 2-d one.
    """

    n_domains: int
    seed: int
    n_classes: int = 7
    dim: int = 512
    latent_dim: int = 3
    prototypes: Optional[np.ndarray] = None  # (n_classes, latent_dim); drawn if None
    noise_sigma: float = 0.5
    domain_shift_sigma: float = 0.25
    imbalance: Optional[np.ndarray] = None  # (n_domains, n_classes) ratios; uniform if None
    train_counts: Sequence[int] = field(default_factory=list)
    test_counts: Sequence[int] = field(default_factory=list)
    domain_names: Optional[Sequence[str]] = None
    with_av: bool = True

    def validate(self) -> None:
        if self.n_domains < 1:
            raise ValueError("synth config: n_domains must be >= 1")
        if not 1 <= self.n_classes <= N_EMOTIONS:
            raise ValueError(
                f"synth config: n_classes must be in 1..{N_EMOTIONS}, got {self.n_classes}"
            )
        if self.latent_dim < 1 or self.dim < 1:
            raise ValueError("synth config: dims must be >= 1")
        if self.latent_dim > self.dim:
            raise ValueError(
                f"synth config: latent_dim {self.latent_dim} must be <= dim {self.dim}"
            )
        if self.noise_sigma < 0 or self.domain_shift_sigma < 0:
            raise ValueError("synth config: sigmas must be >= 0")
        if len(self.train_counts) != self.n_domains or len(self.test_counts) != self.n_domains:
            raise ValueError("synth config: need one train and one test count per domain")
        if any(c <= 0 for c in self.train_counts) or any(c <= 0 for c in self.test_counts):
            raise ValueError("synth config: all sample counts must be > 0")
        if self.prototypes is not None:
            p = np.asarray(self.prototypes)
            if p.shape != (self.n_classes, self.latent_dim):
                raise ValueError(
                    f"synth config: prototypes shape {p.shape} != "
                    f"({self.n_classes}, {self.latent_dim})"
                )
        if self.imbalance is not None:
            r = np.asarray(self.imbalance, dtype=np.float64)
            if r.shape != (self.n_domains, self.n_classes):
                raise ValueError(
                    f"synth config: imbalance shape {r.shape} != "
                    f"({self.n_domains}, {self.n_classes})"
                )
            if np.any(r < 0) or np.any(r.sum(axis=1) <= 0):
                raise ValueError("synth config: imbalance ratios must be >= 0, rows nonzero")

    def domain_name(self, j: int) -> str:
        if self.domain_names is not None:
            return self.domain_names[j]
        return f"domain{j}"


def _f32_round(x: np.ndarray) -> np.ndarray:
    """Round through f32 so file round trips are value-exact."""
    return x.astype(np.float32).astype(np.float64)


def _synth_split(
    cfg: SynthConfig,
    split: str,
    counts: Sequence[int],
    protos: np.ndarray,
    lift: np.ndarray,
    shifts: np.ndarray,
    probs: np.ndarray,
    rng: SeededRng,
) -> DatasetBundle:
    metas = []
    records = []
    for j in range(cfg.n_domains):
        n = int(counts[j])
        cum = np.cumsum(probs[j])
        labels = np.searchsorted(cum, rng.uniform(n), side="right")
        labels = np.minimum(labels, cfg.n_classes - 1).astype(np.int64)
        z = (
            protos[labels]
            + shifts[j]
            + rng.normal(n * cfg.latent_dim, cfg.noise_sigma).reshape(n, cfg.latent_dim)
        )
        feats = _f32_round(z @ lift.T)
        if cfg.with_av:
            # AV is a fixed squashing of the first two latent coordinates, so it
            # carries class signal plus the same noise as the features.
            z2 = z[:, :2] if cfg.latent_dim >= 2 else np.hstack([z, np.zeros((n, 1))])
            av = _f32_round(np.clip(np.tanh(z2), -1.0, 1.0))
        for i in range(n):
            records.append(
                FeatureRecord(
                    id=f"{split}-d{j}-{i:06d}",
                    domain_id=j,
                    features=feats[i],
                    label=int(labels[i]),
                    av=(float(av[i, 0]), float(av[i, 1])) if cfg.with_av else None,
                )
            )
        metas.append(
            DomainMeta(
                domain_id=j,
                name=cfg.domain_name(j),
                n_total=n,
                class_counts=np.bincount(labels, minlength=N_EMOTIONS).astype(np.int64),
            )
        )
    bundle = DatasetBundle(dim=cfg.dim, domains=metas, records=records, split=split)
    bundle.validate()
    return bundle


def synth_generate(cfg: SynthConfig) -> tuple[DatasetBundle, DatasetBundle]:
    """Generate disjoint train/test bundles; a pure function of the config."""
    cfg.validate()
    if cfg.prototypes is not None:
        protos = np.asarray(cfg.prototypes, dtype=np.float64)
    else:
        proto_rng = SeededRng(derive_seed(cfg.seed, _TAG_PROTO))
        protos = 2.0 * proto_rng.normal(cfg.n_classes * cfg.latent_dim).reshape(
            cfg.n_classes, cfg.latent_dim
        )
    lift_rng = SeededRng(derive_seed(cfg.seed, _TAG_LIFT))
    lift = lift_rng.normal(cfg.dim * cfg.latent_dim).reshape(
        cfg.dim, cfg.latent_dim
    ) / np.sqrt(cfg.latent_dim)
    shift_rng = SeededRng(derive_seed(cfg.seed, _TAG_SHIFT))
    shifts = shift_rng.normal(cfg.n_domains * cfg.latent_dim, cfg.domain_shift_sigma).reshape(
        cfg.n_domains, cfg.latent_dim
    )
    if cfg.imbalance is not None:
        ratios = np.asarray(cfg.imbalance, dtype=np.float64)
    else:
        ratios = np.ones((cfg.n_domains, cfg.n_classes))
    probs = ratios / ratios.sum(axis=1, keepdims=True)

    train = _synth_split(
        cfg, "train", cfg.train_counts, protos, lift, shifts, probs,
        SeededRng(derive_seed(cfg.seed, _TAG_TRAIN)),
    )
    test = _synth_split(
        cfg, "test", cfg.test_counts, protos, lift, shifts, probs,
        SeededRng(derive_seed(cfg.seed, _TAG_TEST)),
    )
    return train, test


# ---------------------------------------------------------------------------
# Binary feature file
# ---------------------------------------------------------------------------
#
# Little-endian layout:
#   magic "CAKEFEAT" | version u32 | dim u32 | domain_count u32
#   per domain: name_len u16, name utf-8, n_total u64
#   record_count u64
#   per record: id_len u16, id utf-8, domain_id u32, label u8, av_present u8,
#               arousal f32, valence f32 (zeros when absent), dim x f32 features


def write_feature_file(bundle: DatasetBundle, path: str) -> None:
    """Serialize a bundle; output bytes are a pure function of the bundle."""
    bundle.validate()
    buf = io.BytesIO()
    buf.write(FEATURE_MAGIC)
    buf.write(struct.pack("<III", FEATURE_VERSION, bundle.dim, bundle.n_domains))
    for meta in bundle.domains:
        name = meta.name.encode("utf-8")
        buf.write(struct.pack("<H", len(name)))
        buf.write(name)
        buf.write(struct.pack("<Q", meta.n_total))
    buf.write(struct.pack("<Q", len(bundle.records)))
    for rec in bundle.records:
        rid = rec.id.encode("utf-8")
        buf.write(struct.pack("<H", len(rid)))
        buf.write(rid)
        a, v = rec.av if rec.av is not None else (0.0, 0.0)
        buf.write(
            struct.pack("<IBBff", rec.domain_id, rec.label, 1 if rec.av else 0, a, v)
        )
        buf.write(rec.features.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


class _Reader:
    def __init__(self, data: bytes, label: str = "feature file"):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FeatureFileError(f"{self.label} truncated while reading {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_feature_file(path: str, split: str = "") -> DatasetBundle:
    """Parse and validate a feature file; errors name the failing byte offset."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    magic = r.take(len(FEATURE_MAGIC), "magic")
    if magic != FEATURE_MAGIC:
        raise FeatureFileError(f"bad magic {magic!r}, expected {FEATURE_MAGIC!r}", 0)
    version, dim, n_domains = r.unpack("<III", "header")
    if version != FEATURE_VERSION:
        raise FeatureFileError(f"unsupported format version {version}", 8)
    metas = []
    for j in range(n_domains):
        (name_len,) = r.unpack("<H", f"domain {j} name length")
        name = r.take(name_len, f"domain {j} name").decode("utf-8")
        (n_total,) = r.unpack("<Q", f"domain {j} count")
        metas.append(
            DomainMeta(j, name, n_total, np.zeros(N_EMOTIONS, dtype=np.int64))
        )
    (n_records,) = r.unpack("<Q", "record count")
    records = []
    counts = np.zeros((n_domains, N_EMOTIONS), dtype=np.int64)
    for i in range(n_records):
        rec_off = r.pos
        (id_len,) = r.unpack("<H", f"record {i} id length")
        rid = r.take(id_len, f"record {i} id").decode("utf-8")
        domain_id, label, av_present, a, v = r.unpack("<IBBff", f"record {i} fields")
        if domain_id >= n_domains:
            raise FeatureFileError(
                f"record {i} ({rid!r}): unknown domain_id {domain_id}", rec_off
            )
        if label >= N_EMOTIONS:
            raise FeatureFileError(
                f"record {i} ({rid!r}): label {label} out of range 0..{N_EMOTIONS - 1}",
                rec_off,
            )
        if av_present not in (0, 1):
            raise FeatureFileError(
                f"record {i} ({rid!r}): bad av-present flag {av_present}", rec_off
            )
        av = None
        if av_present:
            if not (-1.0 <= a <= 1.0 and -1.0 <= v <= 1.0):
                raise FeatureFileError(
                    f"record {i} ({rid!r}): av ({a}, {v}) outside [-1, 1]", rec_off
                )
            av = (float(a), float(v))
        feats = np.frombuffer(
            r.take(4 * dim, f"record {i} features"), dtype="<f4"
        ).astype(np.float64)
        if not np.all(np.isfinite(feats)):
            raise FeatureFileError(f"record {i} ({rid!r}): non-finite feature", rec_off)
        records.append(FeatureRecord(rid, domain_id, feats, label, av))
        counts[domain_id, label] += 1
    if r.pos != len(r.data):
        raise FeatureFileError(f"{len(r.data) - r.pos} trailing bytes after records", r.pos)
    for j, meta in enumerate(metas):
        if int(counts[j].sum()) != meta.n_total:
            raise FeatureFileError(
                f"domain {j} ({meta.name!r}): header n_total {meta.n_total} "
                f"!= {int(counts[j].sum())} records found",
                len(r.data),
            )
        meta.class_counts = counts[j]
    bundle = DatasetBundle(dim=dim, domains=metas, records=records, split=split)
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# CSV import/export (interoperability format)
# ---------------------------------------------------------------------------


def read_csv_features(path: str, split: str = "") -> DatasetBundle:
    """Read the text format: header id,domain,label,arousal,valence,f0..f{D-1}.

    Domains are assigned ids in order of first appearance; labels may be
    class names or integer indices; empty arousal/valence cells mean absent.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"csv {path!r}: empty file") from None
        if header[:5] != ["id", "domain", "label", "arousal", "valence"]:
            raise ValueError(
                f"csv {path!r}: header must start with id,domain,label,arousal,valence"
            )
        dim = len(header) - 5
        if dim < 1 or header[5] != "f0" or header[-1] != f"f{dim - 1}":
            raise ValueError(f"csv {path!r}: expected feature columns f0..f{{D-1}}")
        name_to_id: dict[str, int] = {}
        metas: list[DomainMeta] = []
        records = []
        for ln, row in enumerate(reader, start=2):
            if len(row) != 5 + dim:
                raise ValueError(f"csv {path!r} line {ln}: expected {5 + dim} cells")
            rid, dom_name, label_s, a_s, v_s = row[:5]
            if dom_name not in name_to_id:
                name_to_id[dom_name] = len(metas)
                metas.append(
                    DomainMeta(len(metas), dom_name, 0, np.zeros(N_EMOTIONS, dtype=np.int64))
                )
            j = name_to_id[dom_name]
            label_s = label_s.strip().lower()
            if label_s in CLASS_NAMES:
                label = CLASS_NAMES.index(label_s)
            else:
                try:
                    label = int(label_s)
                except ValueError:
                    raise ValueError(
                        f"csv {path!r} line {ln}: unknown label {label_s!r}"
                    ) from None
            if (a_s == "") != (v_s == ""):
                raise ValueError(
                    f"csv {path!r} line {ln}: arousal and valence must both be set or empty"
                )
            av = None if a_s == "" else (float(a_s), float(v_s))
            feats = np.array([float(c) for c in row[5:]], dtype=np.float64)
            records.append(FeatureRecord(rid, j, feats, label, av))
            metas[j].n_total += 1
            metas[j].class_counts[label] += 1
    bundle = DatasetBundle(dim=dim, domains=metas, records=records, split=split)
    bundle.validate()
    return bundle


def write_csv_features(bundle: DatasetBundle, path: str) -> None:
    """Write the text format; inverse of read_csv_features for valid bundles."""
    bundle.validate()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "domain", "label", "arousal", "valence"]
            + [f"f{i}" for i in range(bundle.dim)]
        )
        for rec in bundle.records:
            a_s, v_s = ("", "")
            if rec.av is not None:
                a_s, v_s = (repr(rec.av[0]), repr(rec.av[1]))
            writer.writerow(
                [
                    rec.id,
                    bundle.domains[rec.domain_id].name,
                    CLASS_NAMES[rec.label],
                    a_s,
                    v_s,
                ]
                + [repr(float(f)) for f in rec.features]
            )
