"""Command-line entry point.

Subcommands: gen-data, train, eval, sweep, noise-stats, compose-bench,
sinkhorn, replay. Logs go to stderr; results are written only to files.
Exit status: 0 success, 1 usage or configuration error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericError, OtterError
from .evaluation import (
    AttributeSample,
    ClassIndex,
    average_noise_stats,
    compositional_queries,
    compositionality_scores,
    fingerprint,
    matching_probabilities,
    noise_stats,
    random_retrieval,
    retrieve_nearest,
    zero_shot_report,
)
from .losses import encode
from .sinkhorn import SinkhornConfig, sinkhorn
from .state import METHODS, EncoderState, TrainConfig
from .synthdata import (
    AttributeConfig,
    SynthConfig,
    SynthDataset,
    attribute_embedding,
    generate,
    generate_attributes,
    load_embeddings,
    save_embeddings,
)
from .trainer import TrainResult, load_checkpoint, save_checkpoint, train

log = logging.getLogger("otter")

MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    """Bad command-line input; reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------------
# argument helpers


def _unit_interval(flag: str):
    def parse(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} expects a number, got {text!r}")
        if not 0.0 <= v <= 1.0:
            raise argparse.ArgumentTypeError(f"{flag} must lie in [0, 1], got {v}")
        return v

    return parse


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, argv: Sequence[str], config: dict, inputs: Sequence[Path],
                    outputs: Sequence[Path], started: str, seeds: Sequence[int]) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": list(seeds),
        "output_dir": str(out_dir),
        "started": started,
        "finished": _now(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "artifacts": {p.name: _sha256(p) for p in outputs},
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ----------------------------------------------------------------------------
# shared pipeline pieces


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        method=args.method,
        alpha=args.alpha,
        gamma_v=args.gamma_v,
        gamma_t=args.gamma_t,
        eta=args.eta,
        lam=args.lam,
        sinkhorn_iters=args.sinkhorn_iters,
        use_ema_teacher=not args.no_ema,
        ema_momentum=args.ema_momentum,
        batch_size=args.batch_size,
        epochs=args.epochs,
        lr=args.lr,
        sgd_momentum=args.sgd_momentum,
        weight_decay=args.weight_decay,
        seed=args.seed,
        d_emb=args.d_emb,
        init_inv_temp=args.init_inv_temp,
    )


def train_on(ds: SynthDataset, cfg: TrainConfig) -> TrainResult:
    """Train with a fresh seeded shuffle each epoch."""
    return train(cfg, lambda epoch: ds.batches(cfg.batch_size, cfg.seed, epoch))


def _check_dims(state: EncoderState, ds: SynthDataset) -> None:
    if state.w_image.shape[0] != ds.image_features.shape[1] or state.w_text.shape[0] != ds.text_features.shape[1]:
        raise UsageError(
            f"checkpoint expects features of width {state.w_image.shape[0]}/{state.w_text.shape[0]} "
            f"but dataset has {ds.image_features.shape[1]}/{ds.text_features.shape[1]}"
        )


def evaluate_zero_shot(state: EncoderState, ds: SynthDataset, ks: Sequence[int], fp: str = ""):
    """FH@K of the student's image embeddings against the class text prototypes."""
    _check_dims(state, ds)
    if ds.class_prototypes_text is None or ds.concept_of_image is None:
        raise UsageError("dataset lacks class prototypes or image labels needed for zero-shot evaluation")
    zi, _ = encode(state.w_image, ds.image_features)
    zc, _ = encode(state.w_text, ds.class_prototypes_text)
    index = ClassIndex(zc, tuple(range(ds.n_classes)))
    labels = [[int(c)] for c in ds.concept_of_image]
    return zero_shot_report(zi, index, labels, ks, fp)


def batch_noise_stats(state: EncoderState, ds: SynthDataset, batch_size: int, n_batches: int, seed: int,
                      side: str = "image_to_text"):
    """Per-batch matching statistics over ``n_batches`` random batches."""
    _check_dims(state, ds)
    if batch_size > ds.n:
        raise UsageError(f"batch size {batch_size} exceeds dataset size {ds.n}")
    zv, _ = encode(state.w_image, ds.image_features)
    zt, _ = encode(state.w_text, ds.text_features)
    rng = np.random.default_rng([seed, batch_size])
    stats = []
    for _ in range(n_batches):
        idx = rng.choice(ds.n, size=batch_size, replace=False)
        bv = dataclasses.replace(zv, matrix=zv.matrix[idx])
        bt = dataclasses.replace(zt, matrix=zt.matrix[idx])
        stats.append(noise_stats(matching_probabilities(bv, bt, state.inv_temp, side)))
    return stats


def compose_bench(state: EncoderState, ds: SynthDataset, min_common: int, n_queries: int, seed: int):
    """Scores of nearest-neighbour retrieval and of a random-retrieval baseline."""
    _check_dims(state, ds)
    if ds.attributes is None or ds.attribute_prototypes_text is None:
        raise UsageError("dataset carries no attribute annotations; generate it with gen-data --attributes")
    zv, _ = encode(state.w_image, ds.image_features)
    sets = ds.attribute_sets()
    samples = [AttributeSample(zv.matrix[i], sets[i]) for i in range(ds.n)]
    n_attr = ds.attributes.shape[1]

    def embed_text(attrs: frozenset[int]) -> np.ndarray:
        members = np.zeros((1, n_attr), dtype=bool)
        members[0, sorted(attrs)] = True
        feat = attribute_embedding(members, ds.attribute_prototypes_text)
        return encode(state.w_text, feat)[0].matrix[0]

    queries = compositional_queries(samples, min_common, n_queries, seed, embed_text)
    nearest = retrieve_nearest(queries, zv)
    model = compositionality_scores(queries, [sets[i] for i in nearest])
    rand = compositionality_scores(queries, [sets[i] for i in random_retrieval(queries, ds.n, seed + 1)])
    return model, rand


# ----------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> list[Path]:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.attributes:
        cfg = AttributeConfig(
            n_concepts=args.concepts,
            samples_per_concept=args.per_concept,
            n_attributes=args.n_attributes,
            attributes_per_concept=args.attributes_per_concept,
            d_img_in=args.d_img,
            d_txt_in=args.d_txt,
            feature_noise_sigma=args.sigma,
            caption_swap_prob=args.swap,
            seed=args.seed,
        )
        ds = generate_attributes(cfg, args.split)
    else:
        cfg = SynthConfig(
            n_concepts=args.concepts,
            samples_per_concept=args.per_concept,
            d_img_in=args.d_img,
            d_txt_in=args.d_txt,
            feature_noise_sigma=args.sigma,
            caption_swap_prob=args.swap,
            seed=args.seed,
        )
        ds = generate(cfg, args.split)
    save_embeddings(out, ds)
    swapped = float(np.mean(ds.concept_of_image != ds.concept_of_caption))
    log.info("wrote %s: %d pairs, %d concepts, image dim %d, text dim %d, realized swap rate %.4f",
             out, ds.n, args.concepts, args.d_img, args.d_txt, swapped)
    return [out]


def cmd_train(args) -> list[Path]:
    cfg = _train_config_from_args(args)
    out = _out_dir(args.out)
    started = _now()
    data = Path(args.data)
    ds = load_embeddings(data)
    log.info("training %s on %d pairs: %s", cfg.method, ds.n, json.dumps(cfg.to_dict(), sort_keys=True))
    result = train_on(ds, cfg)
    ckpt = out / "checkpoint.json"
    save_checkpoint(ckpt, result, cfg)
    header = ["step", "epoch", "lr", "total", "info_nce_v", "info_nce_t", "distill_v", "distill_t", "alpha", "inv_temp"]
    log_path = out / "train_log.csv"
    _write_csv(log_path, header, [[rec[h] for h in header] for rec in result.log])
    if result.log:
        log.info("steps %d, loss %.4f -> %.4f", result.steps, result.log[0]["total"], result.log[-1]["total"])
    _write_manifest(out, "train", args.argv, cfg.to_dict(), [data], [ckpt, log_path], started, [cfg.seed])
    return [ckpt, log_path]


def cmd_eval(args) -> list[Path]:
    out = _out_dir(args.out)
    started = _now()
    ckpt, data = Path(args.checkpoint), Path(args.data)
    result, cfg = load_checkpoint(ckpt)
    ds = load_embeddings(data)
    report = evaluate_zero_shot(result.state, ds, args.k, fingerprint(cfg.to_dict()))
    path = out / "eval_report.json"
    path.write_text(report.to_json(), encoding="utf-8")
    for k, v in sorted(report.flat_hit_at.items()):
        log.info("FH@%d = %.4f", k, v)
    _write_manifest(out, "eval", args.argv, cfg.to_dict(), [ckpt, data], [path], started, [cfg.seed])
    return [path]


def load_sweep(path: Path) -> tuple[list[TrainConfig], list[int]]:
    """Expand a sweep file into unique configs (seed unset) and a seed list.

    Format: ``{"base": {...}, "grid": {field: [values]}, "runs": [{...}],
    "seeds": [ints]}``. Configs are the grid's cross product over ``base``
    plus every entry of ``runs`` merged over ``base``.
    """
    try:
        doc = json.loads(path.read_text(encoding="utf-8") or "null")
    except json.JSONDecodeError as exc:
        raise UsageError(f"sweep file {path} is not valid JSON: {exc.msg}")
    if not doc or not isinstance(doc, dict):
        raise UsageError(f"sweep file {path} is empty")
    base = dict(doc.get("base", {}))
    grid = doc.get("grid", {})
    runs = doc.get("runs", [])
    seeds = [int(s) for s in doc.get("seeds", [base.pop("seed", 0)])]
    base.pop("seed", None)
    raw = [dict(base, **r) for r in runs]
    if grid:
        keys = sorted(grid)
        raw += [dict(base, **dict(zip(keys, vals))) for vals in itertools.product(*(grid[k] for k in keys))]
    if not raw:
        raise UsageError(f"sweep file {path} defines no runs")
    if not seeds:
        raise UsageError(f"sweep file {path} lists no seeds")
    configs, seen = [], set()
    for r in raw:
        r.pop("seed", None)
        cfg = TrainConfig.from_dict(r)
        key = json.dumps(cfg.to_dict(), sort_keys=True)
        if key in seen:
            log.warning("duplicate sweep config dropped: %s", key)
            continue
        seen.add(key)
        configs.append(cfg)
    return configs, seeds


def cmd_sweep(args) -> list[Path]:
    out = _out_dir(args.out)
    started = _now()
    sweep_path, data = Path(args.sweep), Path(args.data)
    eval_path = Path(args.eval_data) if args.eval_data else data
    configs, seeds = load_sweep(sweep_path)
    train_ds = load_embeddings(data)
    eval_ds = load_embeddings(eval_path)
    fields = [f.name for f in dataclasses.fields(TrainConfig) if f.name != "seed"]
    ks = sorted(set(args.k))
    header = ["config_id"] + fields + [f"fh_at_{k}" for k in ks] + ["n_ok", "n_failed", "errors"]
    rows = []
    for cid, cfg in enumerate(configs):
        per_seed, errors = [], []
        for seed in seeds:
            run_cfg = cfg.replace(seed=seed)
            try:
                result = train_on(train_ds, run_cfg)
                rep = evaluate_zero_shot(result.state, eval_ds, ks)
                per_seed.append([rep.flat_hit_at[k] for k in ks])
            except (OtterError, UsageError) as exc:
                log.warning("config %d seed %d failed: %s", cid, seed, exc)
                errors.append(f"seed {seed}: {exc}")
        means = np.mean(per_seed, axis=0).tolist() if per_seed else [float("nan")] * len(ks)
        d = cfg.to_dict()
        rows.append([cid] + [d[f] for f in fields] + [float(m) for m in means] + [len(per_seed), len(errors), "; ".join(errors)])
        log.info("config %d/%d: %s", cid + 1, len(configs), " ".join(f"FH@{k}={m:.4f}" for k, m in zip(ks, means)))
    table = out / "sweep.csv"
    _write_csv(table, header, rows)
    _write_manifest(out, "sweep", args.argv, {"configs": [c.to_dict() for c in configs]},
                    [sweep_path, data, eval_path], [table], started, seeds)
    return [table]


def cmd_noise_stats(args) -> list[Path]:
    out = _out_dir(args.out)
    started = _now()
    ckpt, data = Path(args.checkpoint), Path(args.data)
    result, cfg = load_checkpoint(ckpt)
    ds = load_embeddings(data)
    header = ["batch_size", "n_batches", "paired_mean", "unpaired_mean", "unpaired_max_mean", "max_identity_error"]
    rows = []
    for b in args.batch_size:
        stats = batch_noise_stats(result.state, ds, b, args.n_batches, args.seed, args.side)
        identity = max(abs(s.paired_mean + (b - 1) * s.unpaired_mean - 1.0) for s in stats)
        avg = average_noise_stats(stats)
        rows.append([b, avg.n_batches, avg.paired_mean, avg.unpaired_mean, avg.unpaired_max_mean, identity])
        log.info("batch %d: paired %.4f, unpaired avg %.6f, unpaired max %.4f",
                 b, avg.paired_mean, avg.unpaired_mean, avg.unpaired_max_mean)
    path = out / "noise_stats.csv"
    _write_csv(path, header, rows)
    _write_manifest(out, "noise-stats", args.argv, cfg.to_dict(), [ckpt, data], [path], started, [args.seed])
    return [path]


def cmd_compose_bench(args) -> list[Path]:
    out = _out_dir(args.out)
    started = _now()
    ckpt, data = Path(args.checkpoint), Path(args.data)
    result, cfg = load_checkpoint(ckpt)
    ds = load_embeddings(data)
    model, rand = compose_bench(result.state, ds, args.min_common, args.n_queries, args.seed)
    header = ["model", "OR", "IOR", "TOR", "n_queries", "n_text_empty"]
    rows = [
        [name, s.overlap_rate, s.image_overlap_rate, s.text_overlap_rate, s.n_queries, s.n_text_empty]
        for name, s in (("checkpoint", model), ("random_baseline", rand))
    ]
    for r in rows:
        log.info("%s: OR %.4f IOR %.4f TOR %.4f", *r[:4])
    path = out / "compose_bench.csv"
    _write_csv(path, header, rows)
    _write_manifest(out, "compose-bench", args.argv, cfg.to_dict(), [ckpt, data], [path], started, [args.seed])
    return [path]


def _read_matrix(path: Path) -> np.ndarray:
    text = path.read_text(encoding="utf-8")
    delim = "," if "," in text else None
    try:
        m = np.loadtxt(io.StringIO(text), delimiter=delim, ndmin=2)
    except ValueError as exc:
        raise UsageError(f"cannot parse matrix in {path}: {exc}")
    return m


def cmd_sinkhorn(args) -> list[Path]:
    src, out = Path(args.matrix), Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plan = sinkhorn(_read_matrix(src), SinkhornConfig(args.lam, args.iters))
    n = plan.matrix.shape[0]
    _write_csv(out, [f"c{j}" for j in range(n)], plan.matrix.tolist())
    log.info("plan %dx%d; marginal error before final row normalization: rows %.3e, cols %.3e",
             n, n, plan.row_marginal_error, plan.col_marginal_error)
    return [out]


def cmd_replay(args) -> list[Path]:
    """Re-run the command recorded in a manifest and compare artifact checksums."""
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    argv = list(manifest["argv"])
    if "--out" not in argv:
        raise UsageError("manifest argv has no --out to redirect")
    argv[argv.index("--out") + 1] = args.out
    status = main(argv)
    if status != 0:
        raise UsageError(f"replayed command exited with status {status}")
    fresh = json.loads((Path(args.out) / MANIFEST_NAME).read_text(encoding="utf-8"))
    mismatched = [k for k, v in manifest["artifacts"].items() if fresh["artifacts"].get(k) != v]
    if mismatched:
        raise NumericError(f"replay produced different artifacts: {', '.join(mismatched)}")
    log.info("replay reproduced %d artifacts bit-for-bit", len(manifest["artifacts"]))
    return []


# ----------------------------------------------------------------------------
# parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--method", choices=METHODS, default="otter", help="loss (default: %(default)s)")
    p.add_argument("--alpha", type=_unit_interval("--alpha"), default=None,
                   help="loss coefficient on the hard pairing (default: 0.5; 0.9 for ls; 1 for infonce)")
    p.add_argument("--gamma-v", type=float, default=d.gamma_v, help="image-image similarity weight (default: %(default)s)")
    p.add_argument("--gamma-t", type=float, default=d.gamma_t, help="text-text similarity weight (default: %(default)s)")
    p.add_argument("--eta", type=float, default=d.eta, help="diagonal suppression constant (default: %(default)s)")
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="entropic regularization (default: %(default)s)")
    p.add_argument("--sinkhorn-iters", type=int, default=d.sinkhorn_iters, help="Sinkhorn sweeps (default: %(default)s)")
    p.add_argument("--no-ema", action="store_true", help="use the student itself as teacher")
    p.add_argument("--ema-momentum", type=float, default=d.ema_momentum, help="teacher EMA momentum (default: %(default)s)")
    p.add_argument("--batch-size", type=int, default=d.batch_size, help="(default: %(default)s)")
    p.add_argument("--epochs", type=int, default=d.epochs, help="(default: %(default)s)")
    p.add_argument("--lr", type=float, default=d.lr, help="initial learning rate (default: %(default)s)")
    p.add_argument("--sgd-momentum", type=float, default=d.sgd_momentum, help="(default: %(default)s)")
    p.add_argument("--weight-decay", type=float, default=d.weight_decay, help="(default: %(default)s)")
    p.add_argument("--seed", type=int, default=d.seed, help="(default: %(default)s)")
    p.add_argument("--d-emb", type=int, default=d.d_emb, help="embedding width (default: %(default)s)")
    p.add_argument("--init-inv-temp", type=float, default=d.init_inv_temp,
                   help="initial inverse temperature (default: 1/0.07)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otter", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic paired-embedding file")
    p.add_argument("--concepts", type=int, default=8, help="(default: %(default)s)")
    p.add_argument("--per-concept", type=_positive_int, default=128, help="(default: %(default)s)")
    p.add_argument("--d-img", type=int, default=32, help="(default: %(default)s)")
    p.add_argument("--d-txt", type=int, default=32, help="(default: %(default)s)")
    p.add_argument("--sigma", type=float, default=0.1, help="feature noise std (default: %(default)s)")
    p.add_argument("--swap", type=_unit_interval("--swap"), default=0.0, help="caption swap probability (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    p.add_argument("--split", choices=("train", "test"), default="train", help="(default: %(default)s)")
    p.add_argument("--attributes", action="store_true", help="attribute-annotated data for compose-bench")
    p.add_argument("--n-attributes", type=_positive_int, default=64, help="(default: %(default)s)")
    p.add_argument("--attributes-per-concept", type=_positive_int, default=24, help="(default: %(default)s)")
    p.add_argument("--out", required=True, help="output file (.csv for the text format)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train encoders and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="zero-shot flat hit @ K")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=_int_list, default=[1, 5, 10], help="comma-separated K values (default: 1,5,10)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate every config of a sweep file")
    p.add_argument("--sweep", required=True, help="JSON sweep file")
    p.add_argument("--data", required=True, help="training data")
    p.add_argument("--eval-data", help="evaluation data (default: the training data)")
    p.add_argument("--k", type=_int_list, default=[1], help="comma-separated K values (default: 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("noise-stats", help="paired/unpaired matching probabilities per batch size")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--batch-size", type=_int_list, default=[128, 256, 512], help="(default: 128,256,512)")
    p.add_argument("--n-batches", type=_positive_int, default=1000, help="(default: %(default)s)")
    p.add_argument("--side", choices=("image_to_text", "text_to_image"), default="image_to_text")
    p.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_noise_stats)

    p = sub.add_parser("compose-bench", help="compositional image+text retrieval overlap rates")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="attribute-annotated dataset")
    p.add_argument("--min-common", type=int, default=10, help="shared attributes per query pair (default: %(default)s)")
    p.add_argument("--n-queries", type=_positive_int, default=1000, help="(default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compose_bench)

    p = sub.add_parser("sinkhorn", help="solve one transport problem from a matrix file")
    p.add_argument("--matrix", required=True, help="square matrix, comma- or whitespace-separated")
    p.add_argument("--lambda", dest="lam", type=float, default=0.15, help="(default: %(default)s)")
    p.add_argument("--iters", type=int, default=5, help="(default: %(default)s)")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_sinkhorn)

    p = sub.add_parser("replay", help="re-run a manifest and verify identical artifacts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="fresh output directory")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        args.func(args)
    except NumericError as exc:
        log.error("%s", exc)
        return 2
    except (UsageError, OtterError, FileNotFoundError, IsADirectoryError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
