"""Reproducible sampling of scalar laws and structured random vectors.

Models are declarative, JSON-serializable descriptions of a symmetric
distribution on R^d together with the norm that turns a sample into a
Banach-space element.  Sampling is a pure function of
(model, seed, stream, count): columns are generated in fixed-size blocks,
each block from its own PCG64 generator keyed by (seed, stream, block
index), so batches are bit-identical no matter how generation is scheduled
or parallelized.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .errors import ModelError, ParameterError, ShapeError

#: Target number of float64 entries per generated block (d * columns).
BLOCK_TARGET = 1 << 22

_MASK64 = (1 << 64) - 1

# ---------------------------------------------------------------------------
# scalar distributions


@dataclass(frozen=True)
class StandardGaussian:
    pass


@dataclass(frozen=True)
class Rademacher:
    pass


@dataclass(frozen=True)
class UniformSym:
    """Uniform distribution on [-halfwidth, +halfwidth]."""

    halfwidth: float = 1.0


@dataclass(frozen=True)
class ExpPower:
    """Symmetric law with density proportional to exp(-|t|^p), p >= 1."""

    p: float


ScalarDist = Union[StandardGaussian, Rademacher, UniformSym, ExpPower]


def validate_dist(dist: ScalarDist) -> None:
    if isinstance(dist, UniformSym):
        if not (dist.halfwidth > 0):
            raise ParameterError(f"UniformSym halfwidth must be > 0, got {dist.halfwidth}")
    elif isinstance(dist, ExpPower):
        if not (dist.p >= 1):
            raise ParameterError(f"ExpPower exponent must be >= 1, got {dist.p}")
    elif not isinstance(dist, (StandardGaussian, Rademacher)):
        raise ParameterError(f"unknown scalar distribution {dist!r}")


def scalar_variance(dist: ScalarDist) -> float:
    """Exact variance of the scalar law (all kinds are centered)."""
    validate_dist(dist)
    if isinstance(dist, StandardGaussian):
        return 1.0
    if isinstance(dist, Rademacher):
        return 1.0
    if isinstance(dist, UniformSym):
        return dist.halfwidth**2 / 3.0
    return math.gamma(3.0 / dist.p) / math.gamma(1.0 / dist.p)


def _draw_scalar(dist: ScalarDist, rng: np.random.Generator, shape) -> np.ndarray:
    if isinstance(dist, StandardGaussian):
        return rng.standard_normal(shape)
    if isinstance(dist, Rademacher):
        return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
    if isinstance(dist, UniformSym):
        return dist.halfwidth * (2.0 * rng.random(shape) - 1.0)
    # ExpPower: if T has density c_p exp(-|t|^p) then |T|^p ~ Gamma(1/p),
    # so T = sign * G^(1/p) is an exact draw for every p >= 1.
    signs = 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
    magnitudes = rng.standard_gamma(1.0 / dist.p, size=shape) ** (1.0 / dist.p)
    return signs * magnitudes


# ---------------------------------------------------------------------------
# norms


@dataclass(frozen=True)
class SupNorm:
    pass


@dataclass(frozen=True)
class EuclideanNorm:
    pass


@dataclass(frozen=True)
class SumNorm:
    pass


@dataclass(frozen=True)
class ProductSup:
    """Max of the inner norm over `copies` equal-length blocks."""

    inner: "NormTag"
    copies: int


NormTag = Union[SupNorm, EuclideanNorm, SumNorm, ProductSup]


def validate_norm(norm: NormTag, dim: int) -> None:
    if dim < 1:
        raise ModelError(f"dimension must be >= 1, got {dim}")
    if isinstance(norm, ProductSup):
        if norm.copies < 1:
            raise ModelError(f"ProductSup copies must be >= 1, got {norm.copies}")
        if dim % norm.copies != 0:
            raise ModelError(f"ProductSup with {norm.copies} copies does not divide dim {dim}")
        validate_norm(norm.inner, dim // norm.copies)
    elif not isinstance(norm, (SupNorm, EuclideanNorm, SumNorm)):
        raise ModelError(f"unknown norm {norm!r}")


def norm_of(data, norm: NormTag) -> np.ndarray:
    """Per-column norm of a d x m sample matrix (or of a SampleBatch)."""
    if isinstance(data, SampleBatch):
        data = data.data
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2:
        raise ShapeError(f"expected a d x m matrix, got shape {data.shape}")
    d = data.shape[0]
    if isinstance(norm, SupNorm):
        return np.abs(data).max(axis=0)
    if isinstance(norm, EuclideanNorm):
        return np.sqrt((data * data).sum(axis=0))
    if isinstance(norm, SumNorm):
        return np.abs(data).sum(axis=0)
    if isinstance(norm, ProductSup):
        if d % norm.copies != 0:
            raise ShapeError(f"ProductSup with {norm.copies} copies does not divide {d} rows")
        inner_dim = d // norm.copies
        blocks = data.reshape(norm.copies, inner_dim, data.shape[1])
        inner = np.stack([norm_of(blocks[c], norm.inner) for c in range(norm.copies)])
        return inner.max(axis=0)
    raise ShapeError(f"unknown norm {norm!r}")


# ---------------------------------------------------------------------------
# vector models


@dataclass(frozen=True)
class IidCoords:
    dist: ScalarDist


@dataclass(frozen=True, eq=False)
class SeriesWithCoeffs:
    """X = coeff_matrix @ eta with iid driver coordinates eta."""

    coeff_matrix: np.ndarray
    driver: ScalarDist


@dataclass(frozen=True)
class MixtureScaled:
    """A base sample multiplied by an independent per-column scalar factor.

    Only the NinePlusGauss factor is supported: 9 * (|g| + 1) with g a fresh
    standard Gaussian per column.  A closed enum keeps models serializable.
    """

    scale_fn: str
    base: "RandomVectorModel"


@dataclass(frozen=True)
class Product:
    """Concatenation of `copies` independent copies of the base model."""

    base: "RandomVectorModel"
    copies: int


@dataclass(frozen=True)
class Thinned:
    """scale * eta * base with a shared Bernoulli(keep_prob) factor eta.

    keep_prob == 1 draws no Bernoulli variate at all, so Thinned(base, 1, a)
    is a bit-exact rescaling of the base sample stream.
    """

    base: "RandomVectorModel"
    keep_prob: float
    scale: float


VectorSpec = Union[IidCoords, SeriesWithCoeffs, MixtureScaled, Product, Thinned]

SCALE_FNS = ("NinePlusGauss",)


@dataclass(frozen=True, eq=False)
class RandomVectorModel:
    dim: int
    norm: NormTag
    spec: VectorSpec


def validate_model(model: RandomVectorModel) -> None:
    validate_norm(model.norm, model.dim)
    spec = model.spec
    if isinstance(spec, IidCoords):
        validate_dist(spec.dist)
    elif isinstance(spec, SeriesWithCoeffs):
        validate_dist(spec.driver)
        v = np.asarray(spec.coeff_matrix, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != model.dim:
            raise ModelError(f"coeff_matrix shape {v.shape} incompatible with dim {model.dim}")
        if not np.all(np.isfinite(v)):
            raise ModelError("coeff_matrix must be finite")
    elif isinstance(spec, MixtureScaled):
        if spec.scale_fn not in SCALE_FNS:
            raise ModelError(f"unknown scale_fn {spec.scale_fn!r}; supported: {SCALE_FNS}")
        if spec.base.dim != model.dim:
            raise ModelError(f"MixtureScaled base dim {spec.base.dim} != dim {model.dim}")
        validate_model(spec.base)
    elif isinstance(spec, Product):
        if spec.copies < 1:
            raise ModelError(f"Product copies must be >= 1, got {spec.copies}")
        if spec.base.dim * spec.copies != model.dim:
            raise ModelError(
                f"Product dim {model.dim} != base dim {spec.base.dim} x copies {spec.copies}"
            )
        if not isinstance(model.norm, ProductSup):
            raise ModelError("Product models require a ProductSup norm")
        if model.norm.copies != spec.copies or model.norm.inner != spec.base.norm:
            raise ModelError("ProductSup norm must pair the base norm with the copy count")
        validate_model(spec.base)
    elif isinstance(spec, Thinned):
        if not (0 < spec.keep_prob <= 1):
            raise ModelError(f"keep_prob must be in (0, 1], got {spec.keep_prob}")
        if not (spec.scale > 0):
            raise ModelError(f"scale must be > 0, got {spec.scale}")
        if spec.base.dim != model.dim:
            raise ModelError(f"Thinned base dim {spec.base.dim} != dim {model.dim}")
        validate_model(spec.base)
    else:
        raise ModelError(f"unknown model spec {spec!r}")


def iid_coords(dim: int, dist: ScalarDist, norm: NormTag = SupNorm()) -> RandomVectorModel:
    return RandomVectorModel(dim=dim, norm=norm, spec=IidCoords(dist))


def series_model(coeff_matrix, driver: ScalarDist, norm: NormTag = SupNorm()) -> RandomVectorModel:
    v = np.asarray(coeff_matrix, dtype=np.float64)
    return RandomVectorModel(dim=v.shape[0], norm=norm, spec=SeriesWithCoeffs(v, driver))


def product_model(base: RandomVectorModel, copies: int) -> RandomVectorModel:
    return RandomVectorModel(
        dim=base.dim * copies,
        norm=ProductSup(inner=base.norm, copies=copies),
        spec=Product(base=base, copies=copies),
    )


def scale_model(base: RandomVectorModel, factor: float) -> RandomVectorModel:
    """factor * base as a model; the sample stream is the base's, rescaled."""
    return RandomVectorModel(
        dim=base.dim, norm=base.norm, spec=Thinned(base=base, keep_prob=1.0, scale=factor)
    )


# ---------------------------------------------------------------------------
# serialization

_KIND_KEY = "kind"


def _dist_to_dict(dist: ScalarDist) -> dict:
    validate_dist(dist)
    if isinstance(dist, UniformSym):
        return {_KIND_KEY: "UniformSym", "halfwidth": dist.halfwidth}
    if isinstance(dist, ExpPower):
        return {_KIND_KEY: "ExpPower", "p": dist.p}
    return {_KIND_KEY: type(dist).__name__}


def _dist_from_dict(d: dict) -> ScalarDist:
    kind = d.get(_KIND_KEY)
    if kind == "StandardGaussian":
        return StandardGaussian()
    if kind == "Rademacher":
        return Rademacher()
    if kind == "UniformSym":
        return UniformSym(halfwidth=float(d["halfwidth"]))
    if kind == "ExpPower":
        return ExpPower(p=float(d["p"]))
    raise ModelError(f"unknown scalar distribution kind {kind!r}")


def _norm_to_dict(norm: NormTag) -> dict:
    if isinstance(norm, ProductSup):
        return {_KIND_KEY: "ProductSup", "inner": _norm_to_dict(norm.inner), "copies": norm.copies}
    return {_KIND_KEY: type(norm).__name__}


def _norm_from_dict(d: dict) -> NormTag:
    kind = d.get(_KIND_KEY)
    if kind == "SupNorm":
        return SupNorm()
    if kind == "EuclideanNorm":
        return EuclideanNorm()
    if kind == "SumNorm":
        return SumNorm()
    if kind == "ProductSup":
        return ProductSup(inner=_norm_from_dict(d["inner"]), copies=int(d["copies"]))
    raise ModelError(f"unknown norm kind {kind!r}")


def model_to_dict(model: RandomVectorModel) -> dict:
    validate_model(model)
    spec = model.spec
    if isinstance(spec, IidCoords):
        spec_d = {_KIND_KEY: "IidCoords", "dist": _dist_to_dict(spec.dist)}
    elif isinstance(spec, SeriesWithCoeffs):
        spec_d = {
            _KIND_KEY: "SeriesWithCoeffs",
            "coeff_matrix": np.asarray(spec.coeff_matrix, dtype=np.float64).tolist(),
            "driver": _dist_to_dict(spec.driver),
        }
    elif isinstance(spec, MixtureScaled):
        spec_d = {
            _KIND_KEY: "MixtureScaled",
            "scale_fn": spec.scale_fn,
            "base": model_to_dict(spec.base),
        }
    elif isinstance(spec, Product):
        spec_d = {_KIND_KEY: "Product", "base": model_to_dict(spec.base), "copies": spec.copies}
    else:
        spec_d = {
            _KIND_KEY: "Thinned",
            "base": model_to_dict(spec.base),
            "keep_prob": spec.keep_prob,
            "scale": spec.scale,
        }
    return {"dim": model.dim, "norm": _norm_to_dict(model.norm), "spec": spec_d}


def model_from_dict(d: dict) -> RandomVectorModel:
    try:
        dim = int(d["dim"])
        norm = _norm_from_dict(d["norm"])
        sd = d["spec"]
        kind = sd.get(_KIND_KEY)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ModelError(f"malformed model document: {exc}") from exc
    if kind == "IidCoords":
        spec: VectorSpec = IidCoords(_dist_from_dict(sd["dist"]))
    elif kind == "SeriesWithCoeffs":
        spec = SeriesWithCoeffs(
            np.asarray(sd["coeff_matrix"], dtype=np.float64), _dist_from_dict(sd["driver"])
        )
    elif kind == "MixtureScaled":
        spec = MixtureScaled(scale_fn=sd["scale_fn"], base=model_from_dict(sd["base"]))
    elif kind == "Product":
        spec = Product(base=model_from_dict(sd["base"]), copies=int(sd["copies"]))
    elif kind == "Thinned":
        spec = Thinned(
            base=model_from_dict(sd["base"]),
            keep_prob=float(sd["keep_prob"]),
            scale=float(sd["scale"]),
        )
    else:
        raise ModelError(f"unknown model spec kind {kind!r}")
    model = RandomVectorModel(dim=dim, norm=norm, spec=spec)
    validate_model(model)
    return model


def model_to_json(model: RandomVectorModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))


def model_from_json(text: str) -> RandomVectorModel:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model JSON does not parse: {exc}") from exc
    return model_from_dict(d)


def model_id(model: RandomVectorModel) -> str:
    """Stable opaque id: hash of the canonical JSON document."""
    return hashlib.sha256(model_to_json(model).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# generation


def _block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    if stream < 0:
        raise ParameterError(f"stream must be >= 0, got {stream}")
    ss = np.random.SeedSequence(entropy=(seed & _MASK64, stream, block))
    return np.random.Generator(np.random.PCG64(ss))


def _fill_columns(spec_model: RandomVectorModel, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw `count` columns from one generator in a fixed recursive order.

    Scalar draws for column j are consumed contiguously (arrays are shaped
    (count, d) before transposing), which pins the per-column draw layout.
    """
    spec = spec_model.spec
    d = spec_model.dim
    if isinstance(spec, IidCoords):
        return np.ascontiguousarray(_draw_scalar(spec.dist, rng, (count, d)).T)
    if isinstance(spec, SeriesWithCoeffs):
        k = spec.coeff_matrix.shape[1]
        eta = _draw_scalar(spec.driver, rng, (count, k))
        return spec.coeff_matrix @ eta.T
    if isinstance(spec, MixtureScaled):
        # factor first, then the base block: fixed order, fixed draw counts
        factor = 9.0 * (np.abs(rng.standard_normal(count)) + 1.0)
        return factor * _fill_columns(spec.base, rng, count)
    if isinstance(spec, Product):
        inner = _fill_columns(spec.base, rng, count * spec.copies)
        d_inner = spec.base.dim
        return (
            inner.reshape(d_inner, count, spec.copies).transpose(2, 0, 1).reshape(d, count)
        )
    if isinstance(spec, Thinned):
        if spec.keep_prob < 1.0:
            eta = (rng.random(count) < spec.keep_prob).astype(np.float64)
            return (spec.scale * eta) * _fill_columns(spec.base, rng, count)
        return spec.scale * _fill_columns(spec.base, rng, count)
    raise ModelError(f"unknown model spec {spec!r}")


def _block_columns(dim: int) -> int:
    return max(1, BLOCK_TARGET // max(dim, 1))


def iter_sample_blocks(
    model: RandomVectorModel, count: int, seed: int, stream: int
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (column offset, d x b block) pairs covering `count` columns.

    Block b always covers the same column range and uses generator key
    (seed, stream, b), so the full batch content does not depend on how many
    blocks are materialized at once.
    """
    validate_model(model)
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    b_cols = _block_columns(model.dim)
    for block, start in enumerate(range(0, count, b_cols)):
        size = min(b_cols, count - start)
        rng = _block_rng(seed, stream, block)
        yield start, _fill_columns(model, rng, size)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    model_id: str
    seed: int
    stream: int
    data: np.ndarray  # d x m, float64

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[0]


def sample_vector(model: RandomVectorModel, count: int, seed: int, stream: int = 0) -> SampleBatch:
    """Materialize `count` iid columns of the model; deterministic per key."""
    validate_model(model)
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    out = np.empty((model.dim, count), dtype=np.float64)
    for start, block in iter_sample_blocks(model, count, seed, stream):
        out[:, start : start + block.shape[1]] = block
    return SampleBatch(model_id=model_id(model), seed=seed, stream=stream, data=out)


def sample_scalar(dist: ScalarDist, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """`count` iid draws of the scalar law; same stream layout as a dim-1 model."""
    validate_dist(dist)
    model = iid_coords(1, dist)
    return sample_vector(model, count, seed, stream).data[0]


def sample_norms(
    model: RandomVectorModel, count: int, seed: int, stream: int = 0
) -> np.ndarray:
    """Norms of `count` fresh columns, streamed so d x count never materializes."""
    validate_model(model)
    out = np.empty(count, dtype=np.float64)
    for start, block in iter_sample_blocks(model, count, seed, stream):
        out[start : start + block.shape[1]] = norm_of(block, model.norm)
    return out


def sample_projections(
    model: RandomVectorModel,
    functionals: np.ndarray,
    count: int,
    seed: int,
    stream: int = 0,
    with_norms: bool = False,
):
    """Functional values u_i . X_j for fresh columns X_j, streamed.

    `functionals` is (n_dir, d).  Returns the (n_dir, count) projection
    matrix; with_norms additionally returns the per-column model norm
    computed from the same samples.
    """
    validate_model(model)
    functionals = np.asarray(functionals, dtype=np.float64)
    if functionals.ndim != 2 or functionals.shape[1] != model.dim:
        raise ShapeError(
            f"functionals shape {functionals.shape} incompatible with dim {model.dim}"
        )
    proj = np.empty((functionals.shape[0], count), dtype=np.float64)
    norms = np.empty(count, dtype=np.float64) if with_norms else None
    for start, block in iter_sample_blocks(model, count, seed, stream):
        stop = start + block.shape[1]
        proj[:, start:stop] = functionals @ block
        if with_norms:
            norms[start:stop] = norm_of(block, model.norm)
    if with_norms:
        return proj, norms
    return proj


# ---------------------------------------------------------------------------
# flat binary persistence

_MAGIC = b"TDSBATCH"
_HEADER = struct.Struct("<8sQQQQ")  # magic, d, m, seed (two's complement), stream


def save_batch(batch: SampleBatch, path) -> None:
    """Write an mmap-friendly flat file: 40-byte header, then column-major f8."""
    d, m = batch.data.shape
    header = _HEADER.pack(_MAGIC, d, m, batch.seed & _MASK64, batch.stream & _MASK64)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asfortranarray(batch.data, dtype="<f8").tobytes(order="F"))


def load_batch(path, mmap: bool = False) -> SampleBatch:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    magic, d, m, seed_u, stream = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise ShapeError(f"not a sample batch file (magic {magic!r})")
    seed = seed_u - (1 << 64) if seed_u >= (1 << 63) else seed_u
    if mmap:
        data = np.memmap(path, dtype="<f8", mode="r", offset=_HEADER.size, shape=(d, m), order="F")
    else:
        with open(path, "rb") as fh:
            fh.seek(_HEADER.size)
            flat = np.frombuffer(fh.read(), dtype="<f8")
        if flat.size != d * m:
            raise ShapeError(f"payload holds {flat.size} values, header promises {d * m}")
        data = flat.reshape((d, m), order="F")
    return SampleBatch(model_id="", seed=seed, stream=int(stream), data=np.asarray(data))
