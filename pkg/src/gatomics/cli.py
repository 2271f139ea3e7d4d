"""Command-line pipeline: file-mediated stages over the library.

Subcommands
-----------
synth      generate a synthetic multi-omics corpus (config JSON or preset)
select     moderated-t filter + one-vs-rest LASSO on one omics matrix
train      integrate layers, build the graph, run stratified k-fold CV
gradcheck  finite-difference audit of the model gradients
eval       metrics for a (predictions, labels) file pair

Exit codes: 0 success, 2 config/parse error, 3 empty selection,
4 cross-validation infeasibility, 1 unexpected failure. All randomness
flows from --seed (or the config seed); reruns with identical inputs give
byte-identical outputs.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .autodiff import grad_check
from .diffexpr import (log2_plus_one, select_differential, tumor_normal_groups)
from .gat import init_params, model_forward, save_model
from .lasso import LassoProblem, lambda_max, select_features_ovr
from .metrics import accuracy, confusion, macro_prf
from .omics import (IntegrationError, OmicsFormatError, encode_labels, integrate,
                    load_labels, load_matrix, read_feature_list,
                    standardize_columns, write_feature_list)
from .ppi import (EdgeListFormatError, build_sample_graph_inputs, load_feature_map,
                  map_features_to_nodes, parse_edge_list, unmapped_values)
from .synth import SynthConfig, complementary_preset, generate
from .training import StratificationError, TrainConfig, cross_validate

P_THRESHOLD_DEFAULTS = {"mrna": 0.001, "methylation": 0.05}


class EmptySelectionError(RuntimeError):
    pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gatomics",
        description="multi-omics feature selection and graph-attention classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--config", type=Path, help="SynthConfig JSON")
    p_synth.add_argument("--preset", choices=["complementary"],
                         help="built-in configuration")
    p_synth.add_argument("--seed", type=int, help="override the config seed")
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_sel = sub.add_parser("select", help="differential + LASSO feature selection")
    p_sel.add_argument("--matrix", type=Path, required=True)
    p_sel.add_argument("--labels", type=Path, required=True)
    p_sel.add_argument("--mode", choices=["mrna", "methylation"], required=True)
    p_sel.add_argument("--lambda", dest="lam", type=float, required=True,
                       help="L1 penalty weight (un-normalized objective)")
    p_sel.add_argument("--threshold", type=float,
                       help="p-value threshold (default 0.001 mrna / 0.05 methylation)")
    p_sel.add_argument("--out", type=Path, required=True)
    p_sel.set_defaults(func=cmd_select)

    p_train = sub.add_parser("train", help="integrate, build graph, cross-validate")
    p_train.add_argument("--config", type=Path, required=True,
                         help="pipeline config JSON")
    p_train.add_argument("--out", type=Path, required=True)
    p_train.add_argument("--seed", type=int, help="override the config seed")
    p_train.add_argument("--readout", choices=["mean", "flatten"],
                         help="override the readout mode")
    p_train.add_argument("--parallel-folds", action="store_true",
                         help="run folds concurrently (same output bytes)")
    p_train.set_defaults(func=cmd_train)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--tolerance", type=float, default=1e-4)
    p_gc.set_defaults(func=cmd_gradcheck)

    p_eval = sub.add_parser("eval", help="metrics for prediction/label files")
    p_eval.add_argument("--pred", type=Path, required=True,
                        help="one predicted label per line")
    p_eval.add_argument("--true", dest="truth", type=Path, required=True,
                        help="one true label per line")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def cmd_synth(args):
    if (args.config is None) == (args.preset is None):
        raise ValueError("pass exactly one of --config or --preset")
    if args.preset:
        config = complementary_preset(args.seed if args.seed is not None else 0)
    else:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        if args.seed is not None:
            raw["seed"] = args.seed
        if "layer_classes" in raw and raw["layer_classes"] is not None:
            raw["layer_classes"] = tuple(tuple(c) for c in raw["layer_classes"])
        if "features_per_layer" in raw:
            raw["features_per_layer"] = tuple(raw["features_per_layer"])
        config = SynthConfig(**raw)
    paths = generate(config, args.out)
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def _standardize(columns):
    means = columns.mean(axis=0)
    sds = columns.std(axis=0)
    safe = np.where(sds > 0.0, sds, 1.0)
    out = (columns - means) / safe
    out[:, sds == 0.0] = 0.0
    return out


def cmd_select(args):
    matrix = load_matrix(args.matrix, args.mode)
    labels = load_labels(args.labels)
    if args.mode == "mrna":
        matrix = log2_plus_one(matrix)
    threshold = args.threshold if args.threshold is not None \
        else P_THRESHOLD_DEFAULTS[args.mode]
    groups = tumor_normal_groups(labels)
    de_idx, _, prior = select_differential(matrix, groups, threshold)
    if de_idx.size == 0:
        raise EmptySelectionError(
            f"no features selected: nothing passed p < {threshold}")

    encoding, targets = encode_labels(labels, matrix.sample_ids)
    x = _standardize(matrix.values[de_idx, :].T)
    lam_max = max(
        lambda_max(LassoProblem(x, (targets == c) - np.mean(targets == c), 0.0))
        for c in range(encoding.n_classes))
    print(f"lambda_max over classes: {lam_max:.6g} (given lambda: {args.lam:.6g})")
    support = select_features_ovr(x, targets, encoding.n_classes, args.lam)
    if support.size == 0:
        raise EmptySelectionError(
            f"no features selected: lambda {args.lam} zeroed every coefficient")

    args.out.mkdir(parents=True, exist_ok=True)
    selected_ids = [matrix.feature_ids[de_idx[j]] for j in support]
    write_feature_list(args.out / "selected_features.txt", selected_ids)
    report = {
        "mode": args.mode,
        "p_threshold": threshold,
        "lambda": args.lam,
        "lambda_max": lam_max,
        "prior_d0": prior.d0 if prior.d0 != float("inf") else "inf",
        "prior_s0_sq": prior.s0_sq,
        "stages": {
            "initial_features": matrix.n_features,
            "after_moderated_t": int(de_idx.size),
            "after_lasso": int(support.size),
        },
    }
    with open(args.out / "selection_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
    print(f"features: {matrix.n_features} -> {de_idx.size} (moderated t) "
          f"-> {support.size} (lasso)")
    return 0


def _load_pipeline_config(path):
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    for key in ("layers", "labels", "edges", "feature_map"):
        if key not in cfg:
            raise ValueError(f"pipeline config is missing {key!r}")
    return cfg


def cmd_train(args):
    cfg = _load_pipeline_config(args.config)
    base = args.config.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    layers = []
    for spec in cfg["layers"]:
        matrix = load_matrix(resolve(spec["path"]), spec["name"])
        if spec.get("log2"):
            matrix = log2_plus_one(matrix)
        if spec.get("features"):
            matrix = matrix.subset_features(read_feature_list(resolve(spec["features"])))
        layers.append(matrix)
    labels = load_labels(resolve(cfg["labels"]))
    dataset = integrate(layers, labels)
    dataset, _, _ = standardize_columns(dataset)

    graph = parse_edge_list(resolve(cfg["edges"]),
                            score_threshold=cfg.get("score_threshold", 0.7),
                            node_file=resolve(cfg["node_file"])
                            if cfg.get("node_file") else None)
    fmap = load_feature_map(resolve(cfg["feature_map"]))
    spec = map_features_to_nodes(graph, fmap, dataset.feature_ids,
                                 dataset.feature_layers)
    feats, edge_src, edge_dst = build_sample_graph_inputs(dataset.values, spec, graph)
    # default is to drop unmapped features; this appends their raw values
    # after the readout instead
    extra = unmapped_values(dataset.values, spec) if cfg.get("append_unmapped") \
        else None
    if extra is not None and extra.shape[1] == 0:
        extra = None

    train_cfg = dict(cfg.get("train", {}))
    train_cfg.setdefault("hidden_dims", tuple(cfg.get("hidden_dims", (64, 64, 32, 32))))
    train_cfg.setdefault("readout", cfg.get("readout", "mean"))
    train_cfg.setdefault("seed", cfg.get("seed", 0))
    if args.seed is not None:
        train_cfg["seed"] = args.seed
    if args.readout is not None:
        train_cfg["readout"] = args.readout
    config = TrainConfig(**{k: tuple(v) if k == "hidden_dims" else v
                            for k, v in train_cfg.items()})

    report, models = cross_validate(feats, edge_src, edge_dst, dataset.targets,
                                    dataset.encoding.n_classes, config,
                                    class_names=dataset.encoding.classes,
                                    parallel=args.parallel_folds,
                                    return_models=True, extra=extra)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "cv_report.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    for i, model in enumerate(models):
        save_model(model, args.out / f"fold_{i}.checkpoint.json")
    print(report.summary_line())
    return 0


def cmd_gradcheck(args):
    # fixed 6-node ring, two attention layers + batch norm + head; the
    # parameter count (219) keeps the audit above 200 entries
    n_nodes, dims, n_classes, batch = 6, [4, 10, 8], 3, 3
    ring = np.array([[v, (v + 1) % n_nodes] for v in range(n_nodes)])
    edge_src = np.concatenate([ring[:, 0], ring[:, 1], np.arange(n_nodes)])
    edge_dst = np.concatenate([ring[:, 1], ring[:, 0], np.arange(n_nodes)])
    rng = np.random.default_rng(args.seed)
    feats = rng.normal(size=(batch, n_nodes, dims[0]))
    targets = rng.integers(0, n_classes, size=batch)
    model = init_params(args.seed, dims, n_classes, dropout_rate=0.0)

    from .training import nll_loss

    def fn():
        log_probs = model_forward(model, feats, edge_src, edge_dst, training=True)
        return nll_loss(log_probs, targets)

    report = grad_check(fn, model.parameters(), h=1e-5, tolerance=args.tolerance)
    print(report.summary())
    return 0 if report.passed else 1


def _read_label_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def cmd_eval(args):
    pred = _read_label_lines(args.pred)
    truth = _read_label_lines(args.truth)
    if len(pred) != len(truth):
        raise ValueError(f"prediction/label length mismatch: "
                         f"{len(pred)} vs {len(truth)}")
    if not pred:
        raise ValueError("no samples")
    classes = sorted(set(pred) | set(truth))
    index = {c: i for i, c in enumerate(classes)}
    y_pred = np.array([index[c] for c in pred])
    y_true = np.array([index[c] for c in truth])
    cm = confusion(y_true, y_pred, len(classes))
    prec, rec, f1 = macro_prf(cm)
    print(json.dumps({
        "n_samples": len(pred),
        "classes": classes,
        "accuracy_percent": accuracy(cm),
        "precision_macro": prec,
        "recall_macro": rec,
        "f1_macro": f1,
    }, sort_keys=True, indent=2))
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except StratificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except EmptySelectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OmicsFormatError, EdgeListFormatError, IntegrationError, ValueError,
            KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - unexpected failure path
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
