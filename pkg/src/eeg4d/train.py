"""Cross-validation training harness, Adam, metrics, and synthetic data.

Each experiment's samples are split into stratified shuffled folds; per
fold the normalizer is fit on the training split only, the model trains on
shuffled mini-batches of the cross-entropy loss, and argmax accuracy is
evaluated on the held-out split. Accuracies aggregate fold -> experiment
-> subject -> overall. Everything is seeded and single runs are
bit-reproducible.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import diff
from .diff import backward
from .model import forward_batch, init_params
from .repr4d import Sample4D, default_layout, fit_normalizer, normalize

PROB_FLOOR = 1e-12
EVAL_CHUNK = 64


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.0003
    batch_size: int = 12
    max_epochs: int = 150
    folds: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def cross_entropy(pre, label):
    """-ln(Pre[label]) with a 1e-12 probability floor."""
    return diff.neg(diff.log(diff.clip_floor(diff.pick(pre, label), PROB_FLOOR)))


def cross_entropy_batch(pre, labels):
    """Mean of the per-row cross-entropies of pre [B,C] at labels [B]."""
    picked = diff.gather_rows(pre, labels)
    return diff.mean_all(diff.neg(diff.log(diff.clip_floor(picked, PROB_FLOOR))))


class Adam:
    """Standard Adam with bias correction; state is per-parameter moments."""

    def __init__(self, params, cfg):
        self.cfg = cfg
        self.step_count = 0
        self.m = {n: np.zeros_like(t.value) for n, t in params.items()}
        self.v = {n: np.zeros_like(t.value) for n, t in params.items()}

    def step(self, params):
        c = self.cfg
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - c.beta1 ** t
        bc2 = 1.0 - c.beta2 ** t
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * np.square(g)
            p.value -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def adam_step(params, state, cfg):
    """One Adam update reading gradients off the parameter tensors."""
    state.step(params)
    return state


def kfold_split(labels, k=5, seed=0):
    """Stratified shuffled k-fold partition.

    Returns k (train_idx, test_idx) pairs; test sets are disjoint, cover
    every index, differ in size by at most one, and each keeps the label
    proportions within one sample.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    cursor = 0
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        rng.shuffle(idx)
        for i in idx:
            folds[cursor % k].append(int(i))
            cursor += 1
    splits = []
    for f in range(k):
        test = np.array(sorted(folds[f]), dtype=np.int64)
        train = np.array(sorted(set(range(n)) - set(folds[f])), dtype=np.int64)
        splits.append((train, test))
    return splits


@dataclass
class FoldResult:
    fold: int
    final_train_acc: float
    test_acc: float
    best_test_acc: float
    best_epoch: int
    epochs_run: int
    log: list = field(default_factory=list)   # per-epoch dicts
    state: dict = None                        # trained weights (not serialized)


@dataclass
class ExperimentResult:
    subject_id: int
    experiment_id: int
    folds: list

    @property
    def acc(self):
        return float(np.mean([f.test_acc for f in self.folds]))


def _evaluate(xs, labels, params, cfg):
    if len(labels) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(labels), EVAL_CHUNK):
        chunk = xs[start:start + EVAL_CHUNK]
        out = forward_batch(np.stack(chunk), params, cfg)
        pred = np.argmax(out.pre.value, axis=1)
        correct += int(np.sum(pred == np.asarray(labels[start:start + EVAL_CHUNK])))
    return correct / len(labels)


def train_fold(xs, labels, train_idx, test_idx, cfg, model_cfg, fold,
               fold_seed, log_cb=None):
    rng = np.random.default_rng(fold_seed)
    params = init_params(model_cfg, rng)
    opt = Adam(params, cfg)

    train_x = [xs[i] for i in train_idx]
    train_y = np.array([labels[i] for i in train_idx])
    test_x = [xs[i] for i in test_idx]
    test_y = [labels[i] for i in test_idx]
    n = len(train_x)

    log = []
    best_acc, best_epoch = -1.0, -1
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        correct = 0
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            params.zero_grad()
            out = forward_batch(np.stack([train_x[i] for i in batch]),
                                params, model_cfg)
            total = cross_entropy_batch(out.pre, train_y[batch])
            backward(total)
            adam_step(params, opt, cfg)
            pred = np.argmax(out.pre.value, axis=1)
            correct += int(np.sum(pred == train_y[batch]))
            loss_sum += float(total.value) * len(batch)
        train_acc = correct / n
        test_acc = _evaluate(test_x, test_y, params, model_cfg)
        row = {"epoch": epoch, "loss": loss_sum / n,
               "train_acc": train_acc, "test_acc": test_acc}
        log.append(row)
        if log_cb:
            log_cb(fold, row)
        if test_acc > best_acc:
            best_acc, best_epoch = test_acc, epoch

    final_train_acc = _evaluate(train_x, train_y, params, model_cfg)
    return FoldResult(
        fold=fold,
        final_train_acc=final_train_acc,
        test_acc=log[-1]["test_acc"] if log else 0.0,
        best_test_acc=best_acc,
        best_epoch=best_epoch,
        epochs_run=len(log),
        log=log,
        state=params.state_dict(),
    )


def _prepare_fold_data(samples, train_idx, layout):
    train = [samples[i] for i in train_idx]
    norm = fit_normalizer(train, layout)
    xs = [normalize(s, norm, layout).values for s in samples]
    return xs, norm


def _run_fold(samples, labels, split, cfg, model_cfg, layout, fold, seed):
    train_idx, test_idx = split
    xs, _ = _prepare_fold_data(samples, train_idx, layout)
    return train_fold(xs, labels, train_idx, test_idx, cfg, model_cfg,
                      fold, seed)


def train_experiment(samples, cfg, model_cfg, layout=None, log_cb=None,
                     jobs=1):
    """Fivefold (by default) cross-validation over one experiment's samples.

    Per fold: fit normalization on the training split, train up to
    max_epochs, evaluate on the held-out split. Fold seeds derive from the
    master seed, so runs are reproducible and folds are independent;
    jobs > 1 trains folds in parallel worker processes.
    """
    if len(samples) < cfg.folds:
        raise ValueError(
            f"{len(samples)} samples cannot be split into {cfg.folds} folds"
        )
    if layout is None:
        layout = default_layout()
    labels = [s.label for s in samples]
    splits = kfold_split(labels, cfg.folds, cfg.seed)
    fold_seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.folds)

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [
                pool.submit(_run_fold, samples, labels, splits[f], cfg,
                            model_cfg, layout, f, fold_seeds[f])
                for f in range(cfg.folds)
            ]
            folds = [fut.result() for fut in futs]
    else:
        folds = []
        for f, split in enumerate(splits):
            xs, _ = _prepare_fold_data(samples, split[0], layout)
            folds.append(
                train_fold(xs, labels, split[0], split[1], cfg, model_cfg,
                           f, fold_seeds[f], log_cb=log_cb)
            )
    return ExperimentResult(
        subject_id=samples[0].subject_id,
        experiment_id=samples[0].experiment_id,
        folds=folds,
    )


def aggregate_runs(experiments):
    """Fold -> experiment -> subject -> overall accuracy aggregation.

    Subject accuracy is the mean over that subject's experiments and
    subject STD the population standard deviation across them; the overall
    figures are the means of the per-subject values.
    """
    fold_rows = []
    by_subject = {}
    for ex in experiments:
        for fr in ex.folds:
            fold_rows.append({
                "subject": ex.subject_id, "experiment": ex.experiment_id,
                "fold": fr.fold, "accuracy": fr.test_acc,
            })
        by_subject.setdefault(ex.subject_id, []).append(ex)

    subjects = {}
    for subj, exps in sorted(by_subject.items()):
        accs = [ex.acc for ex in exps]
        subjects[str(subj)] = {
            "acc": float(np.mean(accs)),
            "std": float(np.std(accs)),
            "experiments": {
                str(ex.experiment_id): ex.acc for ex in exps
            },
        }
    overall_acc = float(np.mean([s["acc"] for s in subjects.values()]))
    overall_std = float(np.mean([s["std"] for s in subjects.values()]))
    return {
        "folds": fold_rows,
        "subjects": subjects,
        "overall": {
            "acc": overall_acc,
            "std": overall_std,
            "acc_pct": round(100.0 * overall_acc, 2),
            "std_pct": round(100.0 * overall_std, 2),
        },
    }


ABLATION_COMBOS = (
    ("all_on", dict(spectral=True, spatial=True, temporal=True)),
    ("no_spectral", dict(spectral=False, spatial=True, temporal=True)),
    ("no_spatial", dict(spectral=True, spatial=False, temporal=True)),
    ("no_temporal", dict(spectral=True, spatial=True, temporal=False)),
    ("all_off", dict(spectral=False, spatial=False, temporal=False)),
)


def ablation_sweep(samples, cfg, model_cfg, layout=None):
    """Train every attention on/off combination with identical seeds/splits."""
    results = {}
    for name, flags in ABLATION_COMBOS:
        results[name] = train_experiment(
            samples, cfg, model_cfg.with_flags(**flags), layout=layout
        )
    return results


def ablation_table(results):
    rows = []
    for name, _ in ABLATION_COMBOS:
        ex = results[name]
        rows.append({
            "combo": name,
            "mean_test_acc": ex.acc,
            "fold_accs": [f.test_acc for f in ex.folds],
        })
    return rows


# ---------------------------------------------------------------------------
# synthetic data

def synth_dataset(per_class=40, classes=3, seed=0, layout=None, boost=2.5,
                  noise=1.0, slices_per_class=2, subject_id=0,
                  experiment_id=0):
    """Labeled synthetic samples with class-dependent structure.

    Class k raises the DE feature of band k on a class-specific scalp
    region during a class-specific subset of the temporal slices, on top
    of i.i.d. Gaussian noise over the electrode cells. Padding cells stay
    zero. Fixed seeds reproduce tensors bit-exactly.
    """
    if layout is None:
        layout = default_layout()
    rng = np.random.default_rng(seed)
    rows, cols = layout.rows, layout.cols
    n_ch = len(layout.channels)

    regions = []
    for k in range(classes):
        lo = k * 19 // classes
        hi = (k + 1) * 19 // classes
        regions.append(np.flatnonzero((rows >= lo) & (rows < hi)))

    samples = []
    for k in range(classes):
        t0 = (k * slices_per_class) % 6
        slc = [(t0 + j) % 6 for j in range(slices_per_class)]
        for _ in range(per_class):
            vals = np.zeros((19, 19, 10, 6), dtype=np.float32)
            cells = noise * rng.standard_normal((n_ch, 10, 6))
            for t in slc:
                cells[regions[k], k, t] += boost
            vals[rows, cols] = cells.astype(np.float32)
            samples.append(Sample4D(values=vals, label=k,
                                    subject_id=subject_id,
                                    experiment_id=experiment_id))
    return samples


def feature_subset(samples, mode, zero=False):
    """Restrict samples to DE or PSD features.

    Default slices the excluded half away (2f -> f); zero=True keeps the
    full depth and zeroes the excluded slots instead.
    """
    if mode not in ("de", "psd", "both"):
        raise ValueError(f"unknown feature mode {mode!r}")
    if mode == "both":
        return list(samples)
    half = samples[0].values.shape[2] // 2
    keep = slice(0, half) if mode == "de" else slice(half, 2 * half)
    out = []
    for s in samples:
        if zero:
            vals = s.values.copy()
            drop = slice(half, 2 * half) if mode == "de" else slice(0, half)
            vals[:, :, drop, :] = 0.0
        else:
            vals = np.ascontiguousarray(s.values[:, :, keep, :])
        out.append(Sample4D(values=vals, label=s.label,
                            subject_id=s.subject_id,
                            experiment_id=s.experiment_id))
    return out


# ---------------------------------------------------------------------------
# metrics output

def write_metrics_csv(path, experiments):
    rows = aggregate_runs(experiments)["folds"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("subject,experiment,fold,accuracy\n")
        for r in rows:
            fh.write(f"{r['subject']},{r['experiment']},{r['fold']},"
                     f"{r['accuracy']:.6f}\n")


def write_summary_json(path, experiments):
    summary = aggregate_runs(experiments)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_train_log(path, fold_result):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,train_acc,test_acc\n")
        for row in fold_result.log:
            fh.write(f"{row['epoch']},{row['loss']:.6f},"
                     f"{row['train_acc']:.6f},{row['test_acc']:.6f}\n")
