"""Command-line entry point.

Subcommands: featurize, synth, train, ablate, explain. Options can come
from a key=value config file (--config); explicit flags win. Every run
writes a resolved.cfg snapshot next to its outputs so runs are diffable
and repeatable.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

import argparse
import dataclasses
import json
import os
import sys
import traceback

from . import rawio, sampleio
from .model import ModelConfig
from .params import ParamStore, load_checkpoint, save_checkpoint
from .repr4d import default_layout, load_layout, to_grid
from .sampleio import SampleFormatError
from .sigproc import extract_features, segment
from .train import (TrainConfig, ablation_sweep, ablation_table,
                    aggregate_runs, feature_subset, synth_dataset,
                    train_experiment, write_metrics_csv, write_summary_json,
                    write_train_log)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config_file(subparser, values):
    """Install config-file values as defaults, coercing to argument types."""
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, val in values.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction,
                               argparse._StoreFalseAction)):
            defaults[key] = val.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            defaults[key] = action.type(val)
        else:
            defaults[key] = val
    subparser.set_defaults(**defaults)


def _write_resolved(out_dir, args):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved.cfg"), "w",
              encoding="utf-8") as fh:
        for key in sorted(vars(args)):
            if key in ("config", "func"):
                continue
            fh.write(f"{key}={getattr(args, key)}\n")


def _load_layout(args):
    if getattr(args, "layout", None):
        return load_layout(args.layout)
    return default_layout()


def _model_config(args, depth=10):
    preset = ModelConfig.desk() if args.preset == "desk" else ModelConfig.full()
    return dataclasses.replace(
        preset,
        spectral_depth=depth,
        spectral_attention=not args.no_spectral_attn,
        spatial_attention=not args.no_spatial_attn,
        temporal_attention=not args.no_temporal_attn,
    )


def _train_config(args):
    return TrainConfig(lr=args.lr, batch_size=args.batch_size,
                       max_epochs=args.epochs, folds=args.folds,
                       seed=args.seed)


def _load_dataset(args):
    samples = sampleio.load_samples(args.data)
    if not samples:
        raise SampleFormatError(f"no samples found under {args.data}")
    samples = feature_subset(samples, args.features)
    return samples, samples[0].values.shape[2]


# ---------------------------------------------------------------------------
# subcommands

def _featurize_file(data_dir, fname, layout, out_dir):
    rec = rawio.read_recording(os.path.join(data_dir, fname))
    if set(rec.channels) != set(layout.channels):
        raise ValueError("channel set does not match layout")
    if rec.channels != layout.channels:
        order = [rec.channels.index(ch) for ch in layout.channels]
        rec.data = rec.data[order]
        rec.channels = list(layout.channels)
    stem = os.path.splitext(fname)[0]
    count = 0
    for i, seg in enumerate(segment(rec, seconds=3)):
        feat = extract_features(seg, rec.fs, label=rec.label)
        sample = to_grid(feat, layout, subject_id=rec.subject_id,
                         experiment_id=rec.experiment_id)
        sampleio.write_sample(
            os.path.join(out_dir, f"{stem}_seg{i:04d}.e4da"), sample
        )
        count += 1
    return count


def cmd_featurize(args):
    layout = _load_layout(args)
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(args.out, args)

    files = sorted(
        f for f in os.listdir(args.data) if f.endswith(".e4dr")
    ) if os.path.isdir(args.data) else []
    if not files:
        print(f"warning: no .e4dr recordings under {args.data}",
              file=sys.stderr)
        return 0

    failures = 0
    written = 0
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futs = [(pool.submit(_featurize_file, args.data, f, layout,
                                 args.out), f) for f in files]
            for fut, fname in futs:
                try:
                    written += fut.result()
                except Exception as exc:
                    failures += 1
                    print(f"error: {fname}: {exc}", file=sys.stderr)
    else:
        for fname in files:
            try:
                written += _featurize_file(args.data, fname, layout, args.out)
            except Exception as exc:
                failures += 1
                print(f"error: {fname}: {exc}", file=sys.stderr)
    print(f"featurize: wrote {written} samples from {len(files)} recordings"
          f" ({failures} failed)")
    return 2 if failures else 0


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(args.out, args)
    layout = _load_layout(args)
    samples = synth_dataset(per_class=args.per_class, seed=args.seed,
                            layout=layout, boost=args.boost,
                            noise=args.noise,
                            slices_per_class=args.slices_per_class)
    if args.container:
        sampleio.write_container(os.path.join(args.out, "synth.e4dc"), samples)
    else:
        for i, s in enumerate(samples):
            sampleio.write_sample(
                os.path.join(args.out, f"synth_{i:05d}.e4da"), s
            )
    print(f"synth: wrote {len(samples)} samples to {args.out}")
    return 0


def _save_fold_checkpoint(path, fold_result, model_cfg):
    store = ParamStore.from_state(fold_result.state)
    save_checkpoint(path, store, config=model_cfg.to_dict())


def cmd_train(args):
    if args.ablate:
        return cmd_ablate(args)
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(args.out, args)
    layout = _load_layout(args)
    samples, depth = _load_dataset(args)
    cfg = _train_config(args)
    model_cfg = _model_config(args, depth=depth)

    groups = {}
    for s in samples:
        groups.setdefault((s.subject_id, s.experiment_id), []).append(s)

    experiments = []
    best = None
    for (subj, exp), group in sorted(groups.items()):
        result = train_experiment(group, cfg, model_cfg, layout=layout,
                                  jobs=args.jobs)
        experiments.append(result)
        for fr in result.folds:
            write_train_log(
                os.path.join(args.out,
                             f"train_log_s{subj}_e{exp}_f{fr.fold}.csv"), fr
            )
        top = max(result.folds, key=lambda fr: (fr.test_acc, -fr.fold))
        ckpt = os.path.join(args.out, f"checkpoint_s{subj}_e{exp}.e4dp")
        _save_fold_checkpoint(ckpt, top, model_cfg)
        if best is None or top.test_acc > best[0]:
            best = (top.test_acc, top)

    write_metrics_csv(os.path.join(args.out, "metrics.csv"), experiments)
    write_summary_json(os.path.join(args.out, "summary.json"), experiments)
    _save_fold_checkpoint(os.path.join(args.out, "checkpoint.e4dp"),
                          best[1], model_cfg)
    overall = aggregate_runs(experiments)["overall"]
    print(f"train: overall acc {overall['acc_pct']:.2f}% "
          f"(std {overall['std_pct']:.2f}%) over {len(experiments)} "
          f"experiment(s)")
    return 0


def cmd_ablate(args):
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(args.out, args)
    layout = _load_layout(args)
    samples, depth = _load_dataset(args)
    cfg = _train_config(args)
    model_cfg = _model_config(args, depth=depth)

    results = ablation_sweep(samples, cfg, model_cfg, layout=layout)
    table = ablation_table(results)
    with open(os.path.join(args.out, "ablation.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("combo,mean_test_acc\n")
        for row in table:
            fh.write(f"{row['combo']},{row['mean_test_acc']:.6f}\n")
    with open(os.path.join(args.out, "ablation.json"), "w",
              encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for row in table:
        print(f"ablate: {row['combo']:<12} mean test acc "
              f"{row['mean_test_acc']:.4f}")
    return 0


def cmd_explain(args):
    if not (0 <= args.target_class <= 2):
        raise UsageError(f"class {args.target_class} out of range [0, 2]")
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(args.out, args)
    layout = _load_layout(args)

    state, cfg_dict = load_checkpoint(args.checkpoint)
    model_cfg = ModelConfig.from_dict(cfg_dict)
    params = ParamStore.from_state(state)
    sample = sampleio.read_sample(args.sample)

    from .explain import gradcam_pp, render_heatmap
    heat = gradcam_pp(params, model_cfg, sample, args.target_class)
    paths = render_heatmap(
        heat, layout,
        os.path.join(args.out, f"heatmap_class{args.target_class}")
    )
    print("explain: wrote " + ", ".join(paths))
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def _add_common(sub):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--layout", type=str, default=None,
                     help="electrode layout table (default: bundled 62ch)")
    sub.add_argument("--out", type=str, required=True)
    sub.add_argument("--jobs", type=int, default=1)
    sub.add_argument("--config", type=str, default=None,
                     help="key=value defaults file; flags override")


def _add_train_opts(sub):
    sub.add_argument("--features", choices=("de", "psd", "both"),
                     default="both")
    sub.add_argument("--preset", choices=("full", "desk"), default="full")
    sub.add_argument("--lr", type=float, default=0.0003)
    sub.add_argument("--batch-size", type=int, default=12)
    sub.add_argument("--epochs", type=int, default=150)
    sub.add_argument("--folds", type=int, default=5)
    sub.add_argument("--no-spectral-attn", action="store_true")
    sub.add_argument("--no-spatial-attn", action="store_true")
    sub.add_argument("--no-temporal-attn", action="store_true")


def build_parser():
    parser = _Parser(prog="eeg4d",
                     description="EEG emotion recognition pipeline")
    subs = parser.add_subparsers(dest="command", required=True)
    by_name = {}

    p = subs.add_parser("featurize",
                        help="raw exchange recordings -> 4D sample files")
    p.add_argument("--data", type=str, required=True,
                   help="directory of .e4dr recordings")
    _add_common(p)
    p.set_defaults(func=cmd_featurize)
    by_name["featurize"] = p

    p = subs.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--boost", type=float, default=2.5)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--slices-per-class", type=int, default=2)
    p.add_argument("--container", action="store_true",
                   help="write one .e4dc container instead of many files")
    _add_common(p)
    p.set_defaults(func=cmd_synth)
    by_name["synth"] = p

    p = subs.add_parser("train", help="cross-validated training run")
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--ablate", action="store_true",
                   help="run the attention ablation sweep instead")
    _add_train_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)
    by_name["train"] = p

    p = subs.add_parser("ablate", help="attention on/off comparison sweep")
    p.add_argument("--data", type=str, required=True)
    p.set_defaults(ablate=True)
    _add_train_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablate)
    by_name["ablate"] = p

    p = subs.add_parser("explain", help="Grad-CAM++ electrode heatmap")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--sample", type=str, required=True)
    p.add_argument("--class", dest="target_class", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_explain)
    by_name["explain"] = p
    return parser, by_name


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    parser, by_name = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            values = _read_config_file(args.config)
            fresh, fresh_by_name = build_parser()
            _apply_config_file(fresh_by_name[args.command], values)
            args = fresh.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit:
        raise
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
