"""Command-line surface for the part discovery pipeline.

Commands: synth, train, discover, detect, eval-loc, classify, eval-cls,
viz. All randomness flows from --seed (default 0). A flat key=value config
file can preset any long flag; explicit flags win.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import classify as cls
from . import dataset as ds
from . import detection, discovery, evaluation, figures, gradmaps
from . import net as nets
from . import synthetic
from .centers import GmmConfig
from .imagefiles import heatmap_to_gray, overlay_mask, write_pgm, write_ppm


def _build_net(data, seed=0):
    first = next(iter(data.images.values()))
    num_classes = max(data.labels.values()) + 1
    return nets.build_reference_net(first.shape, num_classes, seed=seed)


def _load_net(data, weights_path):
    template = _build_net(data)
    return nets.load_weights(weights_path, template)


def _detect_all(network, data, associations, layer, cfg, ids, use_bbox=False):
    detections = []
    for image_id in ids:
        box = data.bboxes.get(image_id) if use_bbox else None
        detections.extend(detection.detect_parts(
            network, data.images[image_id], associations, layer, cfg,
            image_id=image_id, bbox=box))
    return detections


def cmd_synth(args):
    spec = synthetic.SyntheticSpec(
        image_size=args.size, variant=args.variant,
        num_train=args.train, num_test=args.test, seed=args.seed)
    manifest = synthetic.generate_synthetic(spec, args.out)
    print(f"wrote {manifest}")


def cmd_train(args):
    data = ds.load_dataset(args.manifest)
    network = _build_net(data, seed=args.seed)
    train_ids = data.ids("train")
    images = [data.images[i] for i in train_ids]
    labels = [data.labels[i] for i in train_ids]
    config = nets.TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                              batch_size=args.batch, momentum=args.momentum,
                              seed=args.seed)
    trained = nets.train(network, images, labels, config)
    nets.save_weights(trained, args.out)
    correct = sum(int(np.argmax(trained.scores(x)) == y)
                  for x, y in zip(images, labels))
    print(f"train accuracy {correct / len(images):.4f}")
    print(f"wrote {args.out}")


def cmd_discover(args):
    data = ds.load_dataset(args.manifest)
    network = _load_net(data, args.weights)
    layer = network.last_pool_index if args.layer is None else args.layer
    cfg = GmmConfig(rng_seed=args.seed)
    ids = data.ids("train")
    if args.limit:
        ids = ids[:args.limit]
    table = discovery.compute_center_table(
        network, {i: data.images[i] for i in ids}, layer, cfg)
    if args.strategy == "part":
        part_ids = sorted({a.part_id for a in data.annotations})
        associations = [
            discovery.select_channel_part(
                table, [a for a in data.annotations if a.part_id == p])
            for p in part_ids
        ]
    elif args.strategy == "counting":
        associations = discovery.select_channels_counting(
            table, data.bboxes, args.proposals)
    else:
        associations = discovery.select_channels_bbox(
            table, data.bboxes, args.proposals)
    discovery.save_associations(associations, args.out)
    for a in associations:
        print(f"{a.part_id} -> channel {a.channel} (score {a.score:.4f})")
    print(f"wrote {args.out}")


def cmd_detect(args):
    data = ds.load_dataset(args.manifest)
    network = _load_net(data, args.weights)
    layer = network.last_pool_index if args.layer is None else args.layer
    associations = discovery.load_associations(args.associations)
    cfg = GmmConfig(rng_seed=args.seed)
    ids = data.ids(args.split)
    detections = _detect_all(network, data, associations, layer, cfg, ids,
                             use_bbox=args.use_bbox)
    detection.save_detections(detections, args.out)
    print(f"wrote {args.out} ({len(detections)} detections)")


def cmd_eval_loc(args):
    data = ds.load_dataset(args.manifest, load_images=False)
    detections = detection.load_detections(args.detections)
    report = evaluation.localization_report(detections, data.annotations,
                                            data.bboxes)
    out_dir = Path(args.out)
    evaluation.write_report(report, out_dir)
    figures.render_error_curves(report, out_dir / "curves.png")
    for part_id in sorted(report.parts):
        rec = report.parts[part_id]
        print(f"{part_id} mean {rec.mean:.2f} over {len(rec.errors)} "
              f"(skipped {rec.skipped})")
    print(f"overall mean {report.overall_mean:.2f}")


def cmd_classify(args):
    data = ds.load_dataset(args.manifest)
    network = _load_net(data, args.weights)
    layer = network.last_pool_index if args.layer is None else args.layer
    cfg = GmmConfig(rng_seed=args.seed)
    associations = discovery.load_associations(args.associations) \
        if args.associations else []

    def feats(ids):
        rows = []
        for image_id in ids:
            dets = detection.detect_parts(
                network, data.images[image_id], associations, layer, cfg,
                image_id=image_id) if associations else []
            rows.append(cls.feature_vector(network, data.images[image_id],
                                           dets, lam=args.lam))
        return np.array(rows)

    train_ids, test_ids = data.ids("train"), data.ids("test")
    model = cls.train_classifier(
        feats(train_ids), [data.labels[i] for i in train_ids],
        cls.OvaConfig(seed=args.seed))
    cls.save_model(model, args.out)
    preds = cls.predict(model, feats(test_ids))
    with open(args.predictions, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "prediction"])
        for image_id, p in zip(test_ids, preds):
            writer.writerow([image_id, int(p)])
    print(f"wrote {args.out} and {args.predictions}")


def cmd_eval_cls(args):
    data = ds.load_dataset(args.manifest, load_images=False)
    preds, labels = [], []
    with open(args.predictions, newline="") as f:
        for row in csv.DictReader(f):
            preds.append(int(row["prediction"]))
            labels.append(data.labels[row["image_id"]])
    acc = evaluation.accuracy(preds, labels)
    print(f"accuracy {acc:.4f}")


def cmd_viz(args):
    data = ds.load_dataset(args.manifest)
    network = _load_net(data, args.weights)
    layer = network.last_pool_index if args.layer is None else args.layer
    x = data.images[args.image]
    if args.channel is not None:
        gmap = gradmaps.channel_gradient_map(network, x, layer, args.channel)
        stem = f"channel{args.channel}"
    else:
        gmap = gradmaps.class_gradient_map(network, x, args.class_id)
        stem = "class"
    mask = gradmaps.threshold_map(gmap, args.quantile)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_pgm(out_dir / f"{stem}_heatmap.pgm", heatmap_to_gray(gmap))
    write_ppm(out_dir / f"{stem}_overlay.ppm", overlay_mask(x, mask))
    figures.render_heatmap_figure(x, gmap, mask, out_dir / f"{stem}_figure.png")
    print(f"wrote heatmap, overlay and figure to {out_dir}")


def _read_config(path):
    values = {}
    with open(path) as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_parser():
    parser = argparse.ArgumentParser(prog="partgrad")
    parser.add_argument("--config", help="flat key=value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--manifest", required=True)

    p = sub.add_parser("synth", help="generate a synthetic shapes dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=["shapes", "finegrained"],
                   default="shapes")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--train", type=int, default=400)
    p.add_argument("--test", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the reference network")
    common(p)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("discover", help="select part detector channels")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--strategy", choices=["part", "counting", "bbox"],
                   default="part")
    p.add_argument("--proposals", type=int, default=5)
    p.add_argument("--limit", type=int, default=0,
                   help="use only the first N training images")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("detect", help="localize parts in a split")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--associations", required=True)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--use-bbox", action="store_true",
                   help="zero gradient mass outside the ground-truth box")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval-loc", help="localization error report")
    common(p)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_loc)

    p = sub.add_parser("classify", help="train and apply the part classifier")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--associations", default=None)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--predictions", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval-cls", help="classification accuracy")
    common(p)
    p.add_argument("--predictions", required=True)
    p.set_defaults(func=cmd_eval_cls)

    p = sub.add_parser("viz", help="gradient heatmap and overlay for one image")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--channel", type=int, default=None)
    p.add_argument("--class-id", type=int, default=None)
    p.add_argument("--quantile", type=float, default=0.95)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # first pass only to find --config, so its values can become defaults
    if "--config" in argv:
        idx = argv.index("--config")
        config = _read_config(argv[idx + 1])
        args = parser.parse_args(argv)
        for key, value in config.items():
            if hasattr(args, key) and f"--{key.replace('_', '-')}" not in argv:
                current = getattr(args, key)
                caster = type(current) if current is not None else str
                setattr(args, key, caster(value))
    else:
        args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # one-line machine-parsable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
