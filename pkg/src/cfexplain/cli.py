"""Command-line entry points: gen, train, explain, eval, serve.

Exit codes: 0 success, 1 usage error (bad flags or missing inputs, nothing
written), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import evalharness, synthgen
from .attribution import save_heatmap_png
from .explainer import counterfactual_explain, pick_counter_image, save_explanation
from .micronet import Hyperparams, load_model, save_model, train
from .micronet.train import accuracy


class UsageFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageFailure(message)


def _require_exists(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageFailure(f"{what} not found: {path}")
    return p


def _load_bundle(path: str) -> synthgen.DatasetBundle:
    p = _require_exists(path, "dataset directory")
    if not (p / "manifest.json").exists():
        raise UsageFailure(f"not a dataset directory (no manifest.json): {path}")
    return synthgen.load_dataset(p)


def _resolve_class(bundle: synthgen.DatasetBundle, value: str) -> int:
    classes = bundle.config.classes
    if value in classes:
        return classes.index(value)
    try:
        idx = int(value)
    except ValueError:
        raise UsageFailure(f"unknown class {value!r} (have {classes})") from None
    if not 0 <= idx < len(classes):
        raise UsageFailure(f"class index {idx} out of range")
    return idx


# ---- subcommands -----------------------------------------------------------


def cmd_gen(args) -> int:
    if args.config:
        cfg_path = _require_exists(args.config, "config file")
        config = synthgen.DatasetConfig.from_dict(json.loads(cfg_path.read_text()))
    else:
        preset = {"planted": synthgen.planted_config, "ambiguous": synthgen.ambiguous_config}
        config = preset[args.preset](images_per_class=args.images_per_class)
    config.validate()
    bundle = synthgen.generate_dataset(config, seed=args.seed)
    synthgen.write_dataset(bundle, args.out)
    n = len(bundle.images)
    print(f"wrote {n} images across {len(config.classes)} classes to {args.out}")
    return 0


def cmd_train(args) -> int:
    bundle = _load_bundle(args.dataset)
    hp = Hyperparams(epochs=args.epochs, batch_size=args.batch_size,
                     learning_rate=args.learning_rate)
    widths = tuple(max(1, int(round(w * args.width_scale))) for w in (8, 16, 32))
    train_set = bundle.labeled("train")
    model = train(train_set, hp, seed=args.seed, class_names=bundle.config.classes,
                  conv_widths=widths, tap_layer=args.tap)
    save_model(model, args.out)
    train_acc = accuracy(model, train_set)
    test_acc = accuracy(model, bundle.labeled("test"))
    print(f"saved {args.out} | train acc {train_acc:.3f} | test acc {test_acc:.3f}")
    return 0


def cmd_explain(args) -> int:
    bundle = _load_bundle(args.dataset)
    model = load_model(_require_exists(args.model, "model checkpoint"),
                       expect_classes=len(bundle.config.classes))
    if args.image not in bundle.annotations:
        raise UsageFailure(f"unknown image id {args.image!r}")
    counter = _resolve_class(bundle, args.counter_class)
    x = bundle.images[args.image]
    predicted = model.predict(x)
    if counter == predicted:
        print(f"error: counter class equals the predicted class "
              f"({bundle.config.classes[predicted]}); pick a different class",
              file=sys.stderr)
        return 2
    candidates = bundle.ids_of_class("test", counter)
    counter_id = pick_counter_image(candidates, args.seed, args.image, counter)
    pair = counterfactual_explain(model, x, bundle.images[counter_id], predicted,
                                  counter, score_kind=args.score, area=args.area,
                                  query_id=args.image, counter_id=counter_id)
    out = args.out if args.out.endswith(".json") else args.out + ".json"
    save_explanation(pair, out)
    base = out[:-5]
    save_heatmap_png(pair.query_map.grid, base + ".query_map.png")
    save_heatmap_png(pair.counter_map.grid, base + ".counter_map.png")
    print(f"predicted {bundle.config.classes[predicted]}; "
          f"counter image {counter_id}; wrote {out}")
    return 0


def cmd_eval(args) -> int:
    bundle = _load_bundle(args.dataset)
    model = load_model(_require_exists(args.model, "model checkpoint"),
                       expect_classes=len(bundle.config.classes))
    weak = None
    if args.weak_model:
        weak = load_model(_require_exists(args.weak_model, "weak model checkpoint"),
                          expect_classes=len(bundle.config.classes))
    if "advanced" in args.users and weak is None:
        raise UsageFailure("advanced user simulation needs --weak-model")
    triplets = synthgen.build_ground_truth(bundle.config.part_profiles(),
                                           mode=args.gt_mode,
                                           keep_fraction=args.keep_fraction)
    report = evalharness.evaluate(
        model, weak, bundle, triplets, methods=tuple(args.methods),
        score_kinds=tuple(args.scores), user_kinds=tuple(args.users),
        areas=tuple(args.areas), seed=args.seed, split=args.split)
    written = evalharness.emit_report(report, args.out)
    for row in report.rows:
        print(f"{row.method:13s} {row.score:9s} {row.user:8s} area={row.area:.4f} "
              f"P={row.precision:.3f} R={row.recall:.3f} IoU={row.iou:.3f} "
              f"PIoU={row.piou:.3f} n={row.n}")
    print("wrote " + ", ".join(written))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    bundle = _load_bundle(args.dataset)
    model = load_model(_require_exists(args.model, "model checkpoint"),
                       expect_classes=len(bundle.config.classes))
    weak = None
    if args.weak_model:
        weak = load_model(_require_exists(args.weak_model, "weak model checkpoint"))
    port = args.port if args.port is not None else int(os.environ.get("CFEXPLAIN_PORT", "8000"))
    app = create_app(model, bundle, seed=args.seed, weak_model=weak,
                     static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=port)
    return 0


# ---- parser ----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="cfexplain",
                     description="counterfactual explanation engine for a small CNN")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic part/attribute dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--preset", choices=("planted", "ambiguous"), default="planted")
    p.add_argument("--images-per-class", type=int, default=200)
    p.add_argument("--config", help="JSON dataset config (overrides --preset)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train classifier + hardness head")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=Hyperparams.epochs)
    p.add_argument("--batch-size", type=int, default=Hyperparams.batch_size)
    p.add_argument("--learning-rate", type=float, default=Hyperparams.learning_rate)
    p.add_argument("--width-scale", type=float, default=1.0,
                   help="0.5 trains the half-width model used as the advanced virtual user")
    p.add_argument("--tap", default="conv3", choices=("conv1", "conv2", "conv3"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="write a counterfactual explanation for one image")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--counter-class", required=True)
    p.add_argument("--score", default="easiness",
                   choices=("softmax", "certainty", "easiness", "constant"))
    p.add_argument("--area", type=float, default=1 / 64)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="run the metric harness and write a report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--weak-model")
    p.add_argument("--out", required=True, help="report path base (.json/.csv appended)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--areas", type=float, nargs="+", default=[1 / 64])
    p.add_argument("--methods", nargs="+", default=["discriminant", "attributive", "random"],
                   choices=("discriminant", "attributive", "random"))
    p.add_argument("--scores", nargs="+", default=["softmax", "certainty", "easiness"],
                   choices=("softmax", "certainty", "easiness", "constant"))
    p.add_argument("--users", nargs="+", default=["beginner"],
                   choices=("beginner", "advanced"))
    p.add_argument("--gt-mode", default="kl", choices=("kl", "occurrence"))
    p.add_argument("--keep-fraction", type=float, default=synthgen.DEFAULT_KEEP_FRACTION)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="serve the JSON API (and optional static UI)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--weak-model")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None,
                   help="default 8000, or CFEXPLAIN_PORT if set")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--static-dir", help="directory of built web UI assets to serve at /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageFailure as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure of any module
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
