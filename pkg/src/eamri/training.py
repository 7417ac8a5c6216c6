"""Losses, Adam, image-quality metrics and the training loop."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .config import ReconConfig
from .mri import KSpaceSample, collate, zero_filled
from .recon import EamriModel, build_variant, model_forward
from .tensor import ParamStore, Tensor, Trace, as_tensor, backward, ops

logger = logging.getLogger(__name__)

# relative RMSE below this counts as exact recovery
EXACT_RTOL = 1e-12
PSNR_SENTINEL = math.inf


# ---------------------------------------------------------------- losses

def image_loss(x_pred, x_gt) -> Tensor:
    """Mean absolute difference of the magnitude images."""
    return ops.l1_mean(ops.magnitude(x_pred), ops.magnitude(as_tensor(x_gt)))


def edge_loss(edges: Sequence, e_gt) -> Tensor:
    """Sum over cascades of the mean absolute edge error against one target."""
    e_gt = as_tensor(e_gt)
    total = None
    for e in edges:
        e = as_tensor(e)
        target = ops.reshape(e_gt, e.shape) if e_gt.shape != e.shape else e_gt
        term = ops.l1_mean(e, target)
        total = term if total is None else ops.add(total, term)
    return total if total is not None else Tensor(0.0)


def total_loss(x_pred, x_gt, edges, e_gt, beta: float = 1.0) -> Tensor:
    loss = image_loss(x_pred, x_gt)
    if beta == 0 or not edges:
        return loss
    return ops.add(loss, ops.scale(edge_loss(edges, e_gt), beta))


# ---------------------------------------------------------------- optimiser

@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-7
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: ReconConfig) -> "AdamState":
        return cls(lr=config.lr, beta1=config.adam_beta1, beta2=config.adam_beta2,
                   eps=config.adam_eps, weight_decay=config.weight_decay)


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update with decoupled weight decay."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            p.data = p.data * (1.0 - state.lr * state.weight_decay)
        p.data = p.data - state.lr * update


# ---------------------------------------------------------------- metrics

def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """20 log10(max(gt) / RMSE); +inf when the images agree to round-off."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    rmse = float(np.sqrt(np.mean((pred - gt) ** 2)))
    peak = float(gt.max())
    if rmse <= EXACT_RTOL * max(peak, np.finfo(float).tiny):
        return PSNR_SENTINEL
    return float(20.0 * np.log10(peak / rmse))


def nmse(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    return float(np.linalg.norm(pred - gt) ** 2 / np.linalg.norm(gt) ** 2)


def ssim(pred: np.ndarray, gt: np.ndarray, data_range: Optional[float] = None,
         win_size: int = 7, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all fully contained 7x7 uniform windows.

    Local (co)variances use the unbiased N/(N-1) normalisation.
    """
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ValueError(f"ssim expects two equal 2-D images, got {pred.shape}, {gt.shape}")
    if min(pred.shape) < win_size:
        raise ValueError(f"images smaller than the {win_size}x{win_size} window")
    L = gt.max() if data_range is None else data_range
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    n = win_size * win_size
    cov_norm = n / (n - 1)
    ux = uniform_filter(pred, win_size)
    uy = uniform_filter(gt, win_size)
    uxx = uniform_filter(pred * pred, win_size)
    uyy = uniform_filter(gt * gt, win_size)
    uxy = uniform_filter(pred * gt, win_size)
    vx = cov_norm * (uxx - ux * ux)
    vy = cov_norm * (uyy - uy * uy)
    vxy = cov_norm * (uxy - ux * uy)
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux ** 2 + uy ** 2 + c1) * (vx + vy + c2))
    pad = (win_size - 1) // 2
    return float(s[pad:-pad, pad:-pad].mean())


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    nmse: float

    @classmethod
    def mean(cls, reports: Sequence["MetricReport"]) -> "MetricReport":
        return cls(*(float(np.mean([getattr(r, f) for r in reports]))
                     for f in ("psnr", "ssim", "nmse")))


def image_metrics(pred_mag: np.ndarray, gt_mag: np.ndarray) -> MetricReport:
    return MetricReport(psnr(pred_mag, gt_mag), ssim(pred_mag, gt_mag), nmse(pred_mag, gt_mag))


# ---------------------------------------------------------------- loop

@dataclass
class Evaluation:
    report: MetricReport
    image_loss: float
    edge_loss: float
    per_sample: list


def evaluate(model: EamriModel, samples: Sequence[KSpaceSample], batch: int = 8) -> Evaluation:
    """Untraced forward over ``samples``; metrics are computed on magnitude images."""
    reports, img_terms, edge_terms = [], [], []
    for start in range(0, len(samples), batch):
        chunk = samples[start:start + batch]
        y, masks, x_gt, e_gt = collate(chunk)
        x_pred, edges = model_forward(y, masks, model)
        mag = np.abs(x_pred.data)
        for i, s in enumerate(chunk):
            reports.append(image_metrics(mag[i], np.abs(s.x_gt)))
        img_terms.append(image_loss(x_pred, x_gt).item() * len(chunk))
        if edges:
            edge_terms.append(edge_loss(edges, e_gt[:, None]).item() * len(chunk))
    n = len(samples)
    return Evaluation(MetricReport.mean(reports), sum(img_terms) / n,
                      sum(edge_terms) / n if edge_terms else 0.0, reports)


def zero_filled_report(samples: Sequence[KSpaceSample]) -> MetricReport:
    """Baseline: coil-combine the zero-filled k-space with the true coil maps."""
    reports = []
    for s in samples:
        if s.coil_maps is None:
            raise ValueError("zero-filled baseline needs the true coil maps")
        x = zero_filled(s.y, s.coil_maps).data
        reports.append(image_metrics(np.abs(x), np.abs(s.x_gt)))
    return MetricReport.mean(reports)


def batch_indices(step: int, n_train: int, batch: int, seed: int) -> np.ndarray:
    """Sample indices for a 0-based step; a pure function of (step, seed)."""
    per_epoch = max(1, n_train // batch)
    epoch, j = divmod(step, per_epoch)
    perm = np.random.default_rng([seed, epoch]).permutation(n_train)
    return perm[j * batch:(j + 1) * batch]


def split_dataset(samples: Sequence[KSpaceSample], val_fraction: float):
    n_val = int(round(val_fraction * len(samples)))
    n_train = len(samples) - n_val
    if n_train < 1:
        raise ValueError("validation split leaves no training samples")
    return list(samples[:n_train]), list(samples[n_train:])


def train_step(model: EamriModel, state: AdamState, batch: Sequence[KSpaceSample],
               beta: float) -> float:
    y, masks, x_gt, e_gt = collate(batch)
    model.params.zero_grad()
    with Trace() as trace:
        x_pred, edges = model_forward(y, masks, model)
        loss = total_loss(x_pred, x_gt, edges, e_gt[:, None], beta)
    backward(trace, loss)
    adam_step(model.params, state)
    return loss.item()


@dataclass
class TrainResult:
    model: EamriModel
    state: AdamState
    log: list
    initial: Optional[Evaluation] = None
    final: Optional[Evaluation] = None


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def train_loop(dataset: Sequence[KSpaceSample], config: ReconConfig,
               out_dir: Optional[Path] = None, model: Optional[EamriModel] = None,
               state: Optional[AdamState] = None,
               callback: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Mini-batch Adam over the training split with periodic validation.

    Passing ``model``/``state`` (e.g. from a checkpoint) resumes at ``state.step``.
    When ``out_dir`` is given, metric lines go to ``metrics.jsonl`` and the final
    weights to ``checkpoint.eamri``.
    """
    from .harness.io import save_checkpoint

    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    train, val = split_dataset(dataset, config.val_fraction)
    val = val or train
    model = model if model is not None else build_variant(config.variant, config)
    state = state if state is not None else AdamState.from_config(config)

    log: list = []
    log_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / "metrics.jsonl", "a" if state.step else "w")

    def emit(step: int, loss: float, ev: Evaluation) -> None:
        entry = {"step": step, "loss": loss, **asdict(ev.report),
                 "image_loss": ev.image_loss, "edge_loss": ev.edge_loss}
        log.append(entry)
        logger.info("step %d loss %.5f psnr %.3f ssim %.4f nmse %.5f", step, loss,
                    ev.report.psnr, ev.report.ssim, ev.report.nmse)
        if log_file is not None:
            log_file.write(json.dumps({k: _json_safe(v) for k, v in entry.items()}) + "\n")
            log_file.flush()

    initial = evaluate(model, val)
    if state.step == 0:
        emit(0, float("nan"), initial)
    t0 = time.perf_counter()
    loss = float("nan")
    try:
        while state.step < config.steps:
            idx = batch_indices(state.step, len(train), config.batch, config.seed)
            loss = train_step(model, state, [train[i] for i in idx], config.beta)
            if callback is not None:
                callback(state.step, loss)
            if state.step % config.eval_every == 0 or state.step == config.steps:
                emit(state.step, loss, evaluate(model, val))
    finally:
        if log_file is not None:
            log_file.close()
    logger.info("trained %d steps in %.1f s", config.steps, time.perf_counter() - t0)
    final = evaluate(model, val)
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint.eamri", model, state)
    return TrainResult(model, state, log, initial, final)
