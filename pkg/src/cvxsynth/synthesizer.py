"""Sample generation from a trained model, class-count matching, and the bundle file format.

A bundle holds everything generation needs, *including the encoded training
data*: synthetic rows are convex combinations of real neighborhoods, so the
real rows must travel with the model.  Treat a bundle file as being exactly as
sensitive as the data it was trained on.

File layout (all integers little-endian)::

    b"CVXS" | u16 format version | zlib(payload) | u32 CRC32 of everything before

where ``payload`` is ``u32 manifest length | manifest JSON | array bytes`` and
the manifest lists each array's name, dtype, shape and byte offset.  Network
weights are stored as float64 in layer order.
"""
from __future__ import annotations

import copy
import json
import math
import struct
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .convnet import DiscriminatorNet, GeneratorNet, Optimizer, synthesize
from .dataset import EncodedMatrix, Schema, Table, decode, snap_feature_types
from .errors import CardinalityUnmatchable, ChecksumError, VersionMismatch
from .neighborhood import NeighborhoodIndex
from .trainer import TrainConfig, TrainReport, TrainState, _stream

MAGIC = b"CVXS"
FORMAT_VERSION = 2
# Version 1 carried no optimizer moments and no generation RNG state.
SUPPORTED_VERSIONS = (1, 2)

_GENERATE = 3


class BundleMigrationWarning(UserWarning):
    pass


def check_version(version: int) -> None:
    if version not in SUPPORTED_VERSIONS:
        raise VersionMismatch(
            f"bundle format version {version} is not supported (supported: {SUPPORTED_VERSIONS})",
            version=version,
        )


@dataclass(eq=False)
class SynthesizerBundle:
    data: EncodedMatrix
    index: NeighborhoodIndex
    generator: GeneratorNet
    discriminator: DiscriminatorNet
    config: TrainConfig
    gen_opt: Optimizer
    disc_opt: Optimizer
    report: TrainReport
    epochs_done: int
    rng: np.random.Generator
    version: int = FORMAT_VERSION

    @property
    def schema(self) -> Schema:
        return self.data.schema

    @classmethod
    def from_state(cls, data: EncodedMatrix, index: NeighborhoodIndex, cfg: TrainConfig, state: TrainState):
        return cls(
            data=data,
            index=index,
            generator=state.generator,
            discriminator=state.discriminator,
            config=cfg,
            gen_opt=state.gen_opt,
            disc_opt=state.disc_opt,
            report=state.report,
            epochs_done=state.epochs_done,
            rng=_stream(cfg.seed, _GENERATE),
        )

    def train_state_copy(self) -> TrainState:
        return TrainState(
            self.generator.copy(),
            self.discriminator.copy(),
            copy.deepcopy(self.gen_opt),
            copy.deepcopy(self.disc_opt),
            copy.deepcopy(self.report),
            self.epochs_done,
        )

    def with_state(self, state: TrainState) -> "SynthesizerBundle":
        return SynthesizerBundle(
            data=self.data,
            index=self.index,
            generator=state.generator,
            discriminator=state.discriminator,
            config=self.config,
            gen_opt=state.gen_opt,
            disc_opt=state.disc_opt,
            report=state.report,
            epochs_done=state.epochs_done,
            rng=copy.deepcopy(self.rng),
            version=self.version,
        )


@dataclass(eq=False)
class SyntheticSet:
    table: Table
    anchors: np.ndarray
    passes: np.ndarray

    def __len__(self):
        return self.table.n_rows


def generate(b: SynthesizerBundle, multiplier: float, reshuffle: bool = True) -> SyntheticSet:
    """Emit ``ceil(multiplier * n)`` synthetic rows, consuming the bundle's RNG.

    Anchors are visited in shuffled passes (reshuffled every pass unless
    ``reshuffle`` is off).  Each anchor contributes ``gen`` clipped, snapped
    samples that inherit the anchor's target label.
    """
    if not multiplier > 0:
        raise ValueError("multiplier must be positive")
    data, cfg, rng = b.data, b.config, b.rng
    n, f = data.values.shape
    total = math.ceil(multiplier * n - 1e-9)
    target_col = data.schema.index(data.schema.target)
    reps = -(-cfg.gen // cfg.k)
    chunks, anchors, passes = [], [], []
    produced, pass_no, order = 0, 0, None
    while produced < total:
        if order is None or reshuffle:
            order = rng.permutation(n)
        for x in order:
            rows = b.index.neighbors[x]
            nbh = np.stack([data.values[rng.permutation(rows)] for _ in range(reps)])
            conv = snap_feature_types(data, synthesize(b.generator, nbh).reshape(-1, f)[: cfg.gen])
            conv[:, target_col] = data.values[x, target_col]
            take = min(cfg.gen, total - produced)
            chunks.append(conv[:take])
            anchors += [int(x)] * take
            passes += [pass_no] * take
            produced += take
            if produced >= total:
                break
        pass_no += 1
    values = np.vstack(chunks)
    table = decode(EncodedMatrix(values, data.schema))
    return SyntheticSet(table, np.array(anchors, dtype=np.int64), np.array(passes, dtype=np.int64))


def match_target_cardinality(s, real_train: Table, rng: np.random.Generator) -> Table:
    """Downsample per target class so synthetic class counts equal the real ones."""
    table = s.table if isinstance(s, SyntheticSet) else s
    target = real_train.schema.target
    cats = real_train.schema.feature(target).categories
    syn_codes = table.class_codes(target)
    real_codes = real_train.class_codes(target)
    keep = []
    for c, label in enumerate(cats):
        need = int(np.sum(real_codes == c))
        pool = np.flatnonzero(syn_codes == c)
        if pool.size < need:
            raise CardinalityUnmatchable(label, int(pool.size), need)
        if need:
            keep.append(rng.choice(pool, size=need, replace=False))
    idx = np.sort(np.concatenate(keep)) if keep else np.array([], dtype=np.int64)
    return table.take(idx)


# --- persistence -----------------------------------------------------------


def _arrays(b: SynthesizerBundle, version: int) -> list[tuple[str, np.ndarray]]:
    out = [("data", b.data.values), ("neighbors", b.index.neighbors),
           ("generator.weight", b.generator.weight), ("generator.bias", b.generator.bias)]
    for i, (w, bias) in enumerate(zip(b.discriminator.weights, b.discriminator.biases)):
        out += [(f"discriminator.{i}.weight", w), (f"discriminator.{i}.bias", bias)]
    if version >= 2:
        for tag, opt in (("gen_opt", b.gen_opt), ("disc_opt", b.disc_opt)):
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                out += [(f"{tag}.m.{i}", m), (f"{tag}.v.{i}", v)]
    return out


def _dtype_tag(a: np.ndarray) -> str:
    return "<i8" if np.issubdtype(a.dtype, np.integer) else "<f8"


def to_bytes(b: SynthesizerBundle, version: int = FORMAT_VERSION) -> bytes:
    check_version(version)
    manifest = {
        "schema": b.schema.to_dict(),
        "config": b.config.to_dict(),
        "report": b.report.to_dict(include_timing=False),
        "epochs_done": b.epochs_done,
        "clip_fraction": b.generator.clip_fraction,
        "n_disc_layers": len(b.discriminator.weights),
        "arrays": [],
    }
    if version >= 2:
        manifest["optimizers"] = {
            "gen_opt": {**b.gen_opt.settings(), "t": b.gen_opt.t, "n_moments": len(b.gen_opt.m)},
            "disc_opt": {**b.disc_opt.settings(), "t": b.disc_opt.t, "n_moments": len(b.disc_opt.m)},
        }
        manifest["rng_state"] = b.rng.bit_generator.state
    blobs, offset = [], 0
    for name, arr in _arrays(b, version):
        tag = _dtype_tag(arr)
        raw = np.ascontiguousarray(arr, dtype=np.dtype(tag)).tobytes()
        manifest["arrays"].append({"name": name, "dtype": tag, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = struct.pack("<I", len(head)) + head + b"".join(blobs)
    body = MAGIC + struct.pack("<H", version) + zlib.compress(payload, 6)
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(raw: bytes) -> SynthesizerBundle:
    if len(raw) < 10:
        raise ChecksumError("bundle file is truncated")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("bundle checksum mismatch (file corrupted or truncated)")
    if body[:4] != MAGIC:
        raise ChecksumError("not a bundle file (bad magic bytes)")
    (version,) = struct.unpack("<H", body[4:6])
    check_version(version)
    try:
        payload = zlib.decompress(body[6:])
    except zlib.error as exc:
        raise ChecksumError(f"bundle payload cannot be decompressed: {exc}") from exc
    (hlen,) = struct.unpack("<I", payload[:4])
    manifest = json.loads(payload[4:4 + hlen].decode("utf-8"))
    blob = payload[4 + hlen:]
    arrays = {}
    for spec in manifest["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=spec["offset"]).reshape(spec["shape"])
        arrays[spec["name"]] = arr.astype(dt.newbyteorder("="), copy=True)

    schema = Schema.from_dict(manifest["schema"])
    cfg = TrainConfig.from_dict(manifest["config"])
    data = EncodedMatrix(arrays["data"], schema)
    index = NeighborhoodIndex(cfg.k, arrays["neighbors"])
    gen = GeneratorNet(arrays["generator.weight"], arrays["generator.bias"], manifest["clip_fraction"])
    n_layers = manifest["n_disc_layers"]
    disc = DiscriminatorNet(
        [arrays[f"discriminator.{i}.weight"] for i in range(n_layers)],
        [arrays[f"discriminator.{i}.bias"] for i in range(n_layers)],
    )
    if version >= 2:
        opts = {}
        for tag in ("gen_opt", "disc_opt"):
            o = dict(manifest["optimizers"][tag])
            n_mom = o.pop("n_moments")
            t = o.pop("t")
            opt = Optimizer(**o, t=t)
            opt.m = [arrays[f"{tag}.m.{i}"] for i in range(n_mom)]
            opt.v = [arrays[f"{tag}.v.{i}"] for i in range(n_mom)]
            opts[tag] = opt
        rng = np.random.default_rng()
        rng.bit_generator.state = manifest["rng_state"]
    else:
        warnings.warn(
            "migrated bundle from format version 1: optimizer moments reset and the generation "
            "RNG re-derived from the seed",
            BundleMigrationWarning,
            stacklevel=2,
        )
        opts = {"gen_opt": Optimizer(cfg.optimizer, cfg.lr), "disc_opt": Optimizer(cfg.optimizer, cfg.lr)}
        rng = _stream(cfg.seed, _GENERATE)
    return SynthesizerBundle(
        data=data,
        index=index,
        generator=gen,
        discriminator=disc,
        config=cfg,
        gen_opt=opts["gen_opt"],
        disc_opt=opts["disc_opt"],
        report=TrainReport.from_dict(manifest["report"]),
        epochs_done=manifest["epochs_done"],
        rng=rng,
        version=FORMAT_VERSION,
    )


def save(b: SynthesizerBundle, path) -> None:
    Path(path).write_bytes(to_bytes(b))


def load(path) -> SynthesizerBundle:
    return from_bytes(Path(path).read_bytes())
