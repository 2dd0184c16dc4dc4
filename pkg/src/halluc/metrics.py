"""Image-quality and identity-preservation metrics.

PSNR / SSIM / FSIM operate on [0, 1] images (dynamic range 1.0); SSIM and
FSIM work on Rec. 601 luminance. Identity metrics are embedding based with
a pluggable embedder: exact Mann-Whitney AUC over genuine/imposter
verification scores and top-k recognition against a gallery.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d
from scipy.stats import rankdata

from .data import DatasetHandle
from .errors import ProtocolError, ShapeError
from .images import bicubic_upsample, check_image, check_image_batch, luminance
from .phasecong import phase_congruency

#: PSNR of bit-identical images; also the cap for near-identical ones.
PSNR_CAP_DB = 99.0

# FSIM stabilization constants, calibrated for luminance in [0, 255].
_FSIM_T1 = 0.85
_FSIM_T2 = 160.0
_SCHARR_X = np.array([[3, 0, -3], [10, 0, -10], [3, 0, -3]], dtype=np.float64) / 16.0


def _check_same_shape(a, b):
    a = check_image(np.asarray(a), name="first image")
    b = check_image(np.asarray(b), name="second image")
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB over all channels and pixels.

    Dynamic range is 1.0; identical images return the 99.0 dB sentinel cap.
    """
    a, b = _check_same_shape(a, b)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, window_size: int = 11, k1: float = 0.01, k2: float = 0.03,
         sigma: float = 1.5) -> float:
    """Mean local structural similarity on luminance, Gaussian-weighted windows.

    Symmetric in its arguments; 1.0 for identical images. Dynamic range 1.0.
    """
    a, b = _check_same_shape(a, b)
    x = luminance(a.astype(np.float64))
    y = luminance(b.astype(np.float64))
    if x.shape[0] < window_size or x.shape[1] < window_size:
        raise ShapeError(
            f"image {x.shape} smaller than SSIM window {window_size}x{window_size}"
        )
    w = _gaussian_window(window_size, sigma)
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2

    def win(z):
        return convolve2d(z, w, mode="valid")

    mu_x = win(x)
    mu_y = win(y)
    var_x = win(x * x) - mu_x * mu_x
    var_y = win(y * y) - mu_y * mu_y
    cov = win(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def fsim(a, b) -> float:
    """Feature similarity index on luminance.

    Pointwise product of phase-congruency similarity (T1 = 0.85) and
    gradient-magnitude similarity (Scharr kernels, T2 = 160), averaged with
    the maximum phase congruency as the weight. The log-Gabor bank is fixed:
    4 scales, 4 orientations, minimum wavelength 6, scaling factor 2,
    bandwidth ratio 0.55. Returns a value in [0, 1]; bit-identical images
    short-circuit to 1.0.
    """
    a, b = _check_same_shape(a, b)
    if np.array_equal(a, b):
        return 1.0
    x = luminance(a.astype(np.float64)) * 255.0
    y = luminance(b.astype(np.float64)) * 255.0

    # Standard protocol: average-and-subsample large inputs toward ~256 px.
    f = max(1, int(round(min(x.shape) / 256.0)))
    if f > 1:
        kern = np.ones((f, f)) / (f * f)
        x = convolve2d(x, kern, mode="same")[::f, ::f]
        y = convolve2d(y, kern, mode="same")[::f, ::f]

    pc1 = phase_congruency(x, nscale=4, norient=4, min_wavelength=6, mult=2.0, sigma_on_f=0.55)
    pc2 = phase_congruency(y, nscale=4, norient=4, min_wavelength=6, mult=2.0, sigma_on_f=0.55)

    def grad_mag(z):
        gx = convolve2d(z, _SCHARR_X, mode="same")
        gy = convolve2d(z, _SCHARR_X.T, mode="same")
        return np.hypot(gx, gy)

    g1 = grad_mag(x)
    g2 = grad_mag(y)

    s_pc = (2.0 * pc1 * pc2 + _FSIM_T1) / (pc1**2 + pc2**2 + _FSIM_T1)
    s_g = (2.0 * g1 * g2 + _FSIM_T2) / (g1**2 + g2**2 + _FSIM_T2)
    pc_max = np.maximum(pc1, pc2)
    return float(np.sum(s_pc * s_g * pc_max) / (np.sum(pc_max) + 1e-12))


# ---------------------------------------------------------------------------
# Embedders


def _adaptive_avg_pool(img: np.ndarray, out: int) -> np.ndarray:
    """Area-average a (3, H, W) image onto an out x out grid (numpy, exact)."""
    c, h, w = img.shape
    pooled = np.empty((c, out, out), dtype=np.float64)
    for i in range(out):
        hs, he = (i * h) // out, -(-((i + 1) * h) // out)
        for j in range(out):
            ws, we = (j * w) // out, -(-((j + 1) * w) // out)
            pooled[:, i, j] = img[:, hs:he, ws:we].mean(axis=(1, 2))
    return pooled


class PixelProjectionEmbedder:
    """Deterministic default embedder: pooled pixels through a seeded projection."""

    def __init__(self, dim: int = 64, patch: int = 16, seed: int = 0):
        self.dim = dim
        self.patch = patch
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE3B]))
        n_in = 3 * patch * patch
        self._proj = rng.standard_normal((dim, n_in)) / math.sqrt(n_in)
        self.descriptor = f"pixel-projection(dim={dim},patch={patch},seed={seed})"

    def embed(self, image: np.ndarray, image_id: str | None = None) -> np.ndarray:
        image = check_image(np.asarray(image), name="embedder input")
        pooled = _adaptive_avg_pool(image.astype(np.float64), self.patch)
        return self._proj @ pooled.ravel()


class TableEmbedder:
    """Embedder backed by precomputed (image_id, vector) rows.

    Used to import embeddings produced by an external recognition engine;
    lookups are by image id, so every evaluated image (including the
    ``<id>#sr`` hallucinated variants) must be present.
    """

    def __init__(self, table: dict, descriptor: str = "embedding-table"):
        if not table:
            raise ProtocolError("embedding table is empty")
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise ProtocolError(f"inconsistent embedding dimensions in table: {sorted(dims)}")
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.dim = dims.pop()
        self.descriptor = descriptor

    @classmethod
    def from_file(cls, path) -> "TableEmbedder":
        return cls(load_embedding_table(path), descriptor=f"embedding-table({Path(path).name})")

    def embed(self, image, image_id: str | None = None) -> np.ndarray:
        if image_id is None or image_id not in self.table:
            raise ProtocolError(f"no embedding for image id {image_id!r}")
        return self.table[image_id]


def load_embedding_table(path) -> dict:
    """Parse an embedding file: one record per line, image_id then the reals."""
    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.replace(",", " ").split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ProtocolError(f"{path}:{lineno}: record needs an id and at least one value")
            try:
                table[parts[0]] = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise ProtocolError(f"{path}:{lineno}: bad value ({exc})") from exc
    if not table:
        raise ProtocolError(f"embedding file {path} contains no records")
    return table


def save_embedding_table(table: dict, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for image_id in sorted(table):
            vec = " ".join(f"{float(v):.9g}" for v in np.asarray(table[image_id]).ravel())
            fh.write(f"{image_id} {vec}\n")
    return path


# ---------------------------------------------------------------------------
# Identity metrics


def _cosine_score(u: np.ndarray, v: np.ndarray) -> float:
    """Negative cosine distance (higher = more similar)."""
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    sim = float(u @ v / max(nu * nv, 1e-300))
    return -(1.0 - sim)


def auc_from_scores(genuine_scores, imposter_scores) -> float:
    """Exact Mann-Whitney AUC of genuine-over-imposter scores; ties count 0.5."""
    g = np.asarray(genuine_scores, dtype=np.float64).ravel()
    i = np.asarray(imposter_scores, dtype=np.float64).ravel()
    if g.size == 0 or i.size == 0:
        raise ProtocolError("AUC needs at least one pair on each side")
    ranks = rankdata(np.concatenate([g, i]))
    return float((ranks[: g.size].sum() - g.size * (g.size + 1) / 2.0) / (g.size * i.size))


def _embed_item(embedder, item) -> np.ndarray:
    if isinstance(item, tuple) and len(item) == 2 and isinstance(item[1], str):
        return np.asarray(embedder.embed(item[0], item[1]), dtype=np.float64)
    return np.asarray(embedder.embed(item), dtype=np.float64)


def verification_auc(embedder, genuine_pairs, imposter_pairs) -> float:
    """AUC of the embedder's verification score over labeled image pairs.

    Each pair is (imageA, imageB); images may be (array, image_id) tuples
    for table-backed embedders. Score is the negative cosine distance.
    """

    def scores(pairs):
        return [
            _cosine_score(_embed_item(embedder, a), _embed_item(embedder, b))
            for a, b in pairs
        ]

    return auc_from_scores(scores(genuine_pairs), scores(imposter_pairs))


def _topk_from_embeddings(gallery_ids, gallery_embs, probe_ids, probe_embs, ks) -> dict:
    gallery_ids = list(gallery_ids)
    gset = set(gallery_ids)
    for pid in probe_ids:
        if pid not in gset:
            raise ProtocolError(f"probe identity {pid!r} absent from gallery")
    gal = np.stack(gallery_embs)
    gal_norm = np.maximum(np.linalg.norm(gal, axis=1), 1e-300)
    hits = {k: 0 for k in ks}
    for pid, emb in zip(probe_ids, probe_embs):
        sim = gal @ emb / (gal_norm * max(np.linalg.norm(emb), 1e-300))
        dist = 1.0 - sim
        order = np.lexsort((np.arange(len(gallery_ids)), dist))  # ties break by index
        ranked = [gallery_ids[j] for j in order]
        for k in ks:
            if pid in ranked[: min(k, len(ranked))]:
                hits[k] += 1
    n = len(probe_ids)
    return {k: hits[k] / n for k in ks}


def topk_accuracy(embedder, gallery, probes, ks=(1, 5, 10)) -> dict:
    """Top-k recognition rates of probes against a labeled gallery.

    ``gallery`` and ``probes`` are sequences of (identity, image) or
    (identity, image, image_id). Nearest neighbors use cosine distance with
    deterministic tie-breaking by gallery index.
    """
    if not gallery or not probes:
        raise ProtocolError("gallery and probe sets must be nonempty")

    def unpack(item):
        if len(item) == 3:
            ident, image, image_id = item
        else:
            ident, image = item
            image_id = None
        return ident, np.asarray(embedder.embed(image, image_id), dtype=np.float64)

    g_ids, g_embs = zip(*(unpack(it) for it in gallery))
    p_ids, p_embs = zip(*(unpack(it) for it in probes))
    return _topk_from_embeddings(g_ids, g_embs, p_ids, p_embs, tuple(ks))


# ---------------------------------------------------------------------------
# Corpus evaluation


@dataclass
class ImageMetrics:
    image_id: str
    psnr: float
    ssim: float
    fsim: float


@dataclass
class IdentityMetrics:
    auc: float
    topk: dict
    descriptor: str
    pairs_per_side: int


@dataclass
class MetricReport:
    per_image: list
    aggregates: dict
    identity: IdentityMetrics | None = None

    def recompute_aggregates(self) -> dict:
        return {
            "psnr": float(np.mean([m.psnr for m in self.per_image])),
            "ssim": float(np.mean([m.ssim for m in self.per_image])),
            "fsim": float(np.mean([m.fsim for m in self.per_image])),
        }


def interpolation_sr_fn(scale_factor: int):
    """Bicubic-upsampling baseline with the sr_fn signature."""

    def fn(lr_batch: np.ndarray) -> np.ndarray:
        return bicubic_upsample(lr_batch, scale_factor)

    return fn


def lookup_sr_fn(dataset: DatasetHandle, indices=None):
    """Debug oracle: maps each LR of the dataset back to its true HR.

    Only resolves LR inputs that byte-match a dataset record; meant for
    plumbing checks of the evaluation path.
    """
    indices = range(len(dataset.records)) if indices is None else indices
    table = {}
    for i in indices:
        hr, lr = dataset.hr_lr(i)
        table[lr.astype(np.float32).tobytes()] = hr.astype(np.float32)

    def fn(lr_batch: np.ndarray) -> np.ndarray:
        outs = []
        for lr in lr_batch:
            key = lr.astype(np.float32).tobytes()
            if key not in table:
                raise ProtocolError("oracle generator received an unknown LR image")
            outs.append(table[key])
        return np.stack(outs)

    return fn


def evaluate_corpus(
    sr_fn,
    dataset: DatasetHandle,
    embedder=None,
    indices=None,
    seed: int = 0,
    pairs_per_side: int | None = None,
    ks=(1, 5, 10),
    max_workers: int = 1,
    batch_size: int = 16,
) -> MetricReport:
    """Evaluate a super-resolver over (a subset of) a dataset.

    For every record: build the HR/LR pair, super-resolve the LR with
    ``sr_fn`` (a [0,1] LR batch to [0,1] HR batch callable), and score
    PSNR/SSIM/FSIM against the HR. With an embedder, adds verification AUC
    over genuine (HR_x vs SR_x) and imposter (HR of another identity vs
    SR_x) pairs drawn 1:1 with the given seed, plus top-k recognition of SR
    probes against the HR gallery. Deterministic given the seed.
    """
    indices = list(range(len(dataset.records))) if indices is None else list(indices)
    if not indices:
        raise ProtocolError("no records selected for evaluation")

    ids: list[str] = [dataset.records[i].image_id for i in indices]
    idents = [dataset.records[i].identity_id for i in indices]
    hrs: list[np.ndarray] = []
    srs: list[np.ndarray] = []
    for start in range(0, len(indices), batch_size):
        chunk = indices[start : start + batch_size]
        pairs = [dataset.hr_lr(i) for i in chunk]
        lr_batch = np.stack([lr for _, lr in pairs]).astype(np.float32)
        sr_batch = np.asarray(sr_fn(lr_batch))
        check_image_batch(sr_batch, name="super-resolved batch")
        if sr_batch.shape[0] != len(chunk) or sr_batch.shape[-1] != dataset.hr_size:
            raise ShapeError(
                f"sr_fn returned shape {sr_batch.shape}, expected "
                f"({len(chunk)}, 3, {dataset.hr_size}, {dataset.hr_size})"
            )
        hrs.extend(hr for hr, _ in pairs)
        srs.extend(np.asarray(s, dtype=np.float32) for s in sr_batch)

    def score_one(t):
        hr, sr, image_id = t
        return ImageMetrics(image_id, psnr(sr, hr), ssim(sr, hr), fsim(sr, hr))

    work = list(zip(hrs, srs, ids))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_image = list(pool.map(score_one, work))
    else:
        per_image = [score_one(t) for t in work]

    aggregates = {
        "psnr": float(np.mean([m.psnr for m in per_image])),
        "ssim": float(np.mean([m.ssim for m in per_image])),
        "fsim": float(np.mean([m.fsim for m in per_image])),
    }

    identity = None
    if embedder is not None:
        if len(set(idents)) < 2:
            raise ProtocolError("identity metrics need at least two identities")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA0C]))
        hr_embs = [
            np.asarray(embedder.embed(hr, image_id), dtype=np.float64)
            for hr, image_id in zip(hrs, ids)
        ]
        sr_embs = [
            np.asarray(embedder.embed(sr, image_id + "#sr"), dtype=np.float64)
            for sr, image_id in zip(srs, ids)
        ]
        n_pairs = len(indices) if pairs_per_side is None else min(pairs_per_side, len(indices))
        positions = rng.permutation(len(indices))[:n_pairs]
        genuine_scores = []
        imposter_scores = []
        for t in positions:
            genuine_scores.append(_cosine_score(hr_embs[t], sr_embs[t]))
            others = [q for q in range(len(indices)) if idents[q] != idents[t]]
            q = others[int(rng.integers(len(others)))]
            imposter_scores.append(_cosine_score(hr_embs[q], sr_embs[t]))
        auc = auc_from_scores(genuine_scores, imposter_scores)
        topk = _topk_from_embeddings(idents, hr_embs, idents, sr_embs, tuple(ks))
        identity = IdentityMetrics(
            auc=auc,
            topk=topk,
            descriptor=getattr(embedder, "descriptor", repr(embedder)),
            pairs_per_side=n_pairs,
        )

    return MetricReport(per_image=per_image, aggregates=aggregates, identity=identity)


# ---------------------------------------------------------------------------
# Report output


def write_report_csv(report: MetricReport, path) -> Path:
    """Machine-readable per-image report: image_id, psnr, ssim, fsim."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "psnr", "ssim", "fsim"])
        for m in report.per_image:
            writer.writerow([m.image_id, f"{m.psnr:.6f}", f"{m.ssim:.6f}", f"{m.fsim:.6f}"])
    return path


def format_report_table(report: MetricReport) -> str:
    """Human-readable aligned table with the aggregate and identity lines."""
    width = max([len("image_id")] + [len(m.image_id) for m in report.per_image])
    lines = [f"{'image_id':<{width}}  {'psnr_db':>8}  {'ssim':>7}  {'fsim':>7}"]
    for m in report.per_image:
        lines.append(f"{m.image_id:<{width}}  {m.psnr:8.3f}  {m.ssim:7.4f}  {m.fsim:7.4f}")
    agg = report.aggregates
    lines.append(
        f"{'MEAN':<{width}}  {agg['psnr']:8.3f}  {agg['ssim']:7.4f}  {agg['fsim']:7.4f}"
    )
    if report.identity is not None:
        ident = report.identity
        topk = "  ".join(f"top-{k}: {v:.4f}" for k, v in sorted(ident.topk.items()))
        lines.append(f"verification AUC: {ident.auc:.4f}  ({ident.pairs_per_side} pairs/side)")
        lines.append(f"recognition {topk}")
        lines.append(f"embedder: {ident.descriptor}")
    return "\n".join(lines)
