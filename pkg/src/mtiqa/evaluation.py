"""Correlation metrics, model-disagreement search, and evaluation sessions."""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import AdamW


def _clean_pair(x, y, min_len: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"need two equally long 1-d score vectors, got {x.shape} and {y.shape}")
    if x.size < min_len:
        raise ValueError(f"need at least {min_len} scores, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("scores contain non-finite values")
    return x, y


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x, y) -> float:
    x, y = _clean_pair(x, y, 2)
    xd = x - x.mean()
    yd = y - y.mean()
    vx = float(xd @ xd)
    vy = float(yd @ yd)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("correlation is undefined for a constant input")
    return float((xd @ yd) / np.sqrt(vx * vy))


def srcc(x, y) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    x, y = _clean_pair(x, y, 2)
    return pearson(average_ranks(x), average_ranks(y))


def plcc(x, y, map_scores: bool = False) -> float:
    """Pearson linear correlation, optionally after a monotone re-map of ``x``."""
    x, y = _clean_pair(x, y, 3)
    if map_scores:
        fit = fit_monotone_map(x, y)
        if not fit.degenerate:
            x = fit.predict(x)
    return pearson(x, y)


def label_accuracy(predicted, truth) -> float:
    """Top-1 accuracy; a truth entry may be a collection of admissible labels."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth) or not predicted:
        raise ValueError("need equally many (and at least one) predictions and truths")
    hits = 0
    for pred, true in zip(predicted, truth):
        if isinstance(true, (set, frozenset, tuple, list)):
            hits += int(pred) in {int(t) for t in true}
        else:
            hits += int(pred) == int(true)
    return hits / len(predicted)


# -- monotone score re-mapping ---------------------------------------------------


@dataclass
class MonotoneFit:
    """Four-parameter logistic ``a + (b - a) / (1 + exp(-(x - c) / |d|))``."""

    a: float
    b: float
    c: float
    d: float
    rms: float
    converged: bool
    degenerate: bool

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.degenerate:
            return np.full_like(x, self.a)
        z = np.clip((x - self.c) / abs(self.d), -60.0, 60.0)
        return self.a + (self.b - self.a) / (1.0 + np.exp(-z))


def fit_monotone_map(scores, targets, iterations: int = 2000,
                     lr: float = 0.05, tol: float = 1e-12) -> MonotoneFit:
    """Least-squares logistic re-map of model scores onto rating units.

    The curve is monotone in the scores by construction. Optimized with
    Adam on the analytic gradients of the squared error; stops early once
    the loss improvement stalls. Constant targets are flagged degenerate.
    """
    x, y = _clean_pair(scores, targets, 3)
    if np.ptp(y) < 1e-12:
        return MonotoneFit(a=float(y[0]), b=float(y[0]), c=float(x.mean()), d=1.0,
                           rms=0.0, converged=True, degenerate=True)
    if np.ptp(x) < 1e-12:
        return MonotoneFit(a=float(y.mean()), b=float(y.mean()), c=float(x[0]), d=1.0,
                           rms=float(np.sqrt(np.mean((y - y.mean()) ** 2))),
                           converged=True, degenerate=True)

    # Fit on standardized scores with a floored spread so the exponent stays
    # bounded; parameters are mapped back to score units afterwards.
    x_loc, x_scale = float(x.mean()), float(max(x.std(), 1e-12))
    xn = (x - x_loc) / x_scale
    params = {
        "a": Tensor(float(y.min()), requires_grad=True),
        "b": Tensor(float(y.max()), requires_grad=True),
        "c": Tensor(float(np.median(xn)), requires_grad=True),
        "d": Tensor(1.0, requires_grad=True),
    }
    xs = Tensor(xn)
    ys = Tensor(y)

    def spread_of(d: Tensor) -> Tensor:
        return ad.sqrt(ad.add(ad.mul(d, d), 1e-4))

    def loss_graph() -> Tensor:
        z = ad.div(ad.sub(xs, params["c"]), spread_of(params["d"]))
        sigma = ad.div(1.0, ad.add(1.0, ad.exp(ad.mul(z, -1.0))))
        fitted = ad.add(params["a"], ad.mul(ad.sub(params["b"], params["a"]), sigma))
        err = ad.sub(fitted, ys)
        return ad.mean(ad.mul(err, err))

    opt = AdamW(params, lr=lr, weight_decay=0.0)
    best = {k: p.data.copy() for k, p in params.items()}
    best_loss = float(loss_graph().item())
    prev = best_loss
    converged = False
    for _ in range(iterations):
        opt.zero_grad()
        loss = loss_graph()
        loss.backward()
        opt.step()
        now = float(loss_graph().item())
        if now < best_loss:
            best_loss = now
            best = {k: p.data.copy() for k, p in params.items()}
        if abs(prev - now) < tol:
            converged = True
            break
        prev = now
    spread = float(np.sqrt(best["d"] ** 2 + 1e-4))
    return MonotoneFit(a=float(best["a"]), b=float(best["b"]),
                       c=x_loc + float(best["c"]) * x_scale,
                       d=spread * x_scale, rms=float(np.sqrt(best_loss)),
                       converged=converged, degenerate=False)


# -- maximum-disagreement pair search ---------------------------------------------


@dataclass(frozen=True)
class GmadPair:
    """A pair the attacker model rates as equal while the defender disagrees most.

    ``attacker`` is the model whose score gap is pinned below ``eps`` inside
    one of its own quality-level bins; ``defender`` is the model whose score
    gap the search maximizes. ``best_id``/``worst_id`` are ordered by the
    defender's scores.
    """

    attacker: str
    defender: str
    level: int
    best_id: str
    worst_id: str
    attacker_gap: float
    defender_gap: float


def _gmad_one_role(ids, att: np.ndarray, dfd: np.ndarray, att_name: str, dfd_name: str,
                   levels: int, eps: float | None) -> list[GmadPair]:
    n = att.size
    gaps = np.abs(att[:, None] - att[None, :])
    if eps is None:
        upper = gaps[np.triu_indices(n, k=1)]
        eps = float(np.percentile(upper, 1.0))
    edges = np.quantile(att, np.linspace(0.0, 1.0, levels + 1))
    bins = np.clip(np.searchsorted(edges[1:-1], att, side="right"), 0, levels - 1)
    out: list[GmadPair] = []
    for level in range(levels):
        members = np.flatnonzero(bins == level)
        if members.size < 2:
            warnings.warn(f"quality level {level} of {att_name} has fewer than 2 images; skipped")
            continue
        sub_att = gaps[np.ix_(members, members)]
        sub_dfd = np.abs(dfd[members][:, None] - dfd[members][None, :])
        admissible = np.triu(sub_att <= eps, k=1)
        if not admissible.any():
            warnings.warn(f"quality level {level} of {att_name} has no pair within eps; skipped")
            continue
        masked = np.where(admissible, sub_dfd, -1.0)
        flat = int(np.argmax(masked))
        i, j = divmod(flat, members.size)
        first, second = members[i], members[j]
        if dfd[first] >= dfd[second]:
            best, worst = first, second
        else:
            best, worst = second, first
        out.append(GmadPair(
            attacker=att_name, defender=dfd_name, level=level,
            best_id=str(ids[best]), worst_id=str(ids[worst]),
            attacker_gap=float(np.abs(att[best] - att[worst])),
            defender_gap=float(np.abs(dfd[best] - dfd[worst]))))
    return out


def gmad_pairs(ids, scores_a, scores_b, names: tuple[str, str] = ("model_a", "model_b"),
               levels: int = 2, eps: float | None = None) -> list[GmadPair]:
    """Exhaustive maximum-differentiation search with both role assignments.

    For each quantile bin of the attacker's scores, find the image pair the
    attacker scores within ``eps`` of each other (default: the 1st percentile
    of its own pairwise gaps) that the defender separates the most.
    """
    a, b = _clean_pair(scores_a, scores_b, 2)
    ids = list(ids)
    if len(ids) != a.size:
        raise ValueError("need one id per score")
    if levels < 1:
        raise ValueError("need at least one quality level")
    pairs = _gmad_one_role(ids, a, b, names[0], names[1], levels, eps)
    pairs += _gmad_one_role(ids, b, a, names[1], names[0], levels, eps)
    return pairs


# -- full evaluation sessions ------------------------------------------------------


@dataclass
class DatasetMetrics:
    dataset_id: int
    n_images: int
    srcc: float
    plcc: float
    scene_acc: float
    distortion_acc: float


@dataclass
class SessionResult:
    session: int
    seed: int
    metrics: list[DatasetMetrics]


def evaluate_model(model, records, u_infer: int, seed: int) -> list[DatasetMetrics]:
    """Score every record and compute per-dataset metrics."""
    from .training import predict_batch

    by_dataset: dict[int, list] = {}
    for rec in records:
        by_dataset.setdefault(rec.dataset_id, []).append(rec)
    out = []
    for dataset_id in sorted(by_dataset):
        bucket = by_dataset[dataset_id]
        scores, prediction = predict_batch(model, bucket, u_infer, seed)
        mos = [rec.mos for rec in bucket]
        out.append(DatasetMetrics(
            dataset_id=dataset_id,
            n_images=len(bucket),
            srcc=srcc(scores, mos),
            plcc=plcc(scores, mos),
            scene_acc=label_accuracy(prediction.scene_idx,
                                     [rec.scene_labels for rec in bucket]),
            distortion_acc=label_accuracy(prediction.distortion_idx,
                                          [rec.distortion for rec in bucket]),
        ))
    return out


def _run_single_session(args) -> SessionResult:
    from .datasets import SplitSpec, split_records
    from .training import train

    records, config, session, seed, train_ids, eval_ids = args
    train_pool = [r for r in records if r.dataset_id in train_ids]
    tr, va, te = split_records(train_pool, SplitSpec(seed=seed))
    cfg = config.with_seed(seed)
    result = train(tr, va, cfg)
    eval_records = []
    for dataset_id in eval_ids:
        if dataset_id in train_ids:
            eval_records.extend(r for r in te if r.dataset_id == dataset_id)
        else:
            eval_records.extend(r for r in records if r.dataset_id == dataset_id)
    metrics = evaluate_model(result.model, eval_records, cfg.u_infer, seed)
    return SessionResult(session=session, seed=seed, metrics=metrics)


def run_sessions(records, config, n_sessions: int = 10, seed: int = 0,
                 jobs: int = 1, train_ids=None, eval_ids=None) -> list[SessionResult]:
    """Repeat split/train/evaluate cycles with distinct seeds.

    ``train_ids``/``eval_ids`` select dataset ids for training and reporting;
    an eval dataset the model never trained on is scored in full (its whole
    record list acts as the test set).
    """
    all_ids = sorted({rec.dataset_id for rec in records})
    train_ids = set(all_ids if train_ids is None else train_ids)
    eval_ids = sorted(set(all_ids if eval_ids is None else eval_ids))
    tasks = [(records, config, i, seed + i, train_ids, eval_ids) for i in range(n_sessions)]
    if jobs > 1 and n_sessions > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_single_session, tasks))
    else:
        results = [_run_single_session(t) for t in tasks]
    return results


_METRIC_FIELDS = ("srcc", "plcc", "scene_acc", "distortion_acc")


def summarize_sessions(results: list[SessionResult]) -> dict[int, dict[str, tuple[float, float]]]:
    """Per dataset and metric: (median, standard deviation) over sessions."""
    table: dict[int, dict[str, list[float]]] = {}
    for res in results:
        for m in res.metrics:
            slot = table.setdefault(m.dataset_id, {f: [] for f in _METRIC_FIELDS})
            for f in _METRIC_FIELDS:
                slot[f].append(getattr(m, f))
    return {
        dataset: {f: (float(np.median(vals)), float(np.std(vals))) for f, vals in slots.items()}
        for dataset, slots in table.items()
    }


def write_session_csv(path: str | Path, results: list[SessionResult]) -> None:
    """One row per (session, dataset) plus median and std summary rows."""
    summary = summarize_sessions(results)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session", "dataset", "n_images"] + list(_METRIC_FIELDS))
        for res in results:
            for m in res.metrics:
                writer.writerow([res.session, m.dataset_id, m.n_images]
                                + [f"{getattr(m, f):.6f}" for f in _METRIC_FIELDS])
        for dataset in sorted(summary):
            writer.writerow(["median", dataset, ""]
                            + [f"{summary[dataset][f][0]:.6f}" for f in _METRIC_FIELDS])
            writer.writerow(["std", dataset, ""]
                            + [f"{summary[dataset][f][1]:.6f}" for f in _METRIC_FIELDS])


def write_gmad_csv(path: str | Path, pairs: list[GmadPair]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attacker", "defender", "level", "best_id", "worst_id",
                         "attacker_gap", "defender_gap"])
        for p in pairs:
            writer.writerow([p.attacker, p.defender, p.level, p.best_id, p.worst_id,
                             f"{p.attacker_gap:.6f}", f"{p.defender_gap:.6f}"])
