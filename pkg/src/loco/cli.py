"""Command-line experiment runner: ``loco gen | train | eval | props``.

Exit codes: 0 success, 1 invariant failure, 2 usage or configuration error,
3 training divergence.  ``LOCO_THREADS`` bounds the worker threads used for
data generation (output is identical for any value).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint, dataset, hilbert, props, synth
from . import evaluation as ev
from . import train as trainer
from .config import ConfigError, RunConfig, load_config
from .errors import FormatError, GenerationError, LocoError, TrainingDiverged

log = logging.getLogger("loco")

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LOCO_THREADS", "1")))
    except ValueError:
        raise UsageError("LOCO_THREADS must be an integer") from None


def _ordered_map(fn, items):
    n = _threads()
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _load_bank(cfg: RunConfig):
    c = cfg["canvas"]
    if not c["idx_images"]:
        return None
    images, _ = synth.load_idx(c["idx_images"])
    labels, _ = synth.load_idx(c["idx_labels"], normalize=False)
    digits = [int(d) for d in c["digits"].split(",")]
    if len(digits) != c["classes"]:
        raise ConfigError(f"[canvas] digits lists {len(digits)} digits for {c['classes']} classes")
    return synth.glyph_bank_from_idx(images, labels, digits)


def generate_records(cfg: RunConfig, n: int, seed: int):
    seeds = synth.sample_seeds(seed, n)
    if cfg.task == "synthetic-1d":
        scfg = cfg.synth_config()
        return _ordered_map(lambda s: synth.gen_sequence(scfg, s), seeds)
    ccfg, curve, bank = cfg.canvas_config(), cfg.curve(), _load_bank(cfg)
    return _ordered_map(lambda s: synth.canvas_to_sample(synth.gen_canvas(ccfg, s, bank), curve), seeds)


def split_seeds(seed: int) -> dict:
    train_seed, test_seed = np.random.SeedSequence(seed).generate_state(2)
    return {"train": int(train_seed), "test": int(test_seed)}


def cmd_gen(cfg: RunConfig, out_dir) -> int:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from None
    seeds = split_seeds(cfg.seed)
    info = {}
    for split, n in (("train", cfg["run"]["n_train"]), ("test", cfg["run"]["n_test"])):
        records = generate_records(cfg, n, seeds[split])
        dataset.write_split(out, split, records)
        info[split] = {"n": n, "seed": seeds[split], "max_length": max(r.length for r in records)}
    first = records[0]
    manifest = {
        "format": 1,
        "task": cfg.task,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "data_hash": cfg.data_hash(),
        "config": cfg.as_dict(),
        "splits": info,
        "feature_dim": int(first.features.shape[1]),
        "channels": int(len(first.counts)),
    }
    if cfg.task == "hilbert-2d":
        curve = cfg.curve()
        manifest["curve"] = {"order": curve.order, "cell_w": curve.cell_w, "cell_h": curve.cell_h}
    dataset.write_manifest(out, manifest)
    log.info("wrote %s dataset to %s", cfg.task, out)
    return EXIT_OK


def _curve_row(epoch, loss, count_err):
    return f"{epoch},{loss!r},{count_err!r}\n"


def cmd_train(cfg: RunConfig, data_dir, out_dir) -> int:
    try:
        manifest = dataset.read_manifest(data_dir)
        samples = dataset.read_split(data_dir, "train")
    except (FileNotFoundError, FormatError) as exc:
        raise UsageError(f"dataset not usable: {exc}") from None
    if manifest["data_hash"] != cfg.data_hash():
        raise UsageError("dataset was generated from a different data configuration "
                         f"(manifest {manifest['data_hash']}, config {cfg.data_hash()})")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config()
    t_ref = trainer.reference_length(samples)
    params, state = trainer.init_model(manifest["feature_dim"], manifest["channels"], t_ref, tcfg)
    meta = {"data_hash": manifest["data_hash"], "t_ref": t_ref, "task": cfg.task}
    curve_path = out / "loss_curve.csv"
    every = max(1, cfg["run"]["checkpoint_every"])

    def save(epoch, params, state, periodic):
        m = dict(meta, epoch=epoch)
        blob = checkpoint.to_bytes(params, state, cfg.as_dict(), cfg.hash(), m)
        (out / "model.ckpt").write_bytes(blob)
        if periodic:
            (out / f"ckpt_epoch{epoch:04d}.ckpt").write_bytes(blob)

    loss0, err0 = trainer.evaluate_loss(params, samples, tcfg)
    with open(curve_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={cfg.hash()}\nepoch,train_loss,count_error\n")
        fh.write(_curve_row(0, loss0, err0))
    save(0, params, state, periodic=True)
    log.info("epoch 0 loss %.5f count error %.4f", loss0, err0)

    def on_epoch(epoch, params, state, stats):
        loss, err = trainer.evaluate_loss(params, samples, tcfg)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss after epoch {epoch}", payload={"epoch": epoch})
        with open(curve_path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(_curve_row(epoch, loss, err))
        save(epoch, params, state, periodic=epoch % every == 0 or epoch == tcfg.epochs)
        log.info("epoch %d loss %.5f count error %.4f", epoch, loss, err)

    try:
        trainer.train(samples, tcfg, params, state, on_epoch=on_epoch)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc} {exc.payload}; last good checkpoint kept at {out / 'model.ckpt'}",
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def evaluate_predictions(probs, truth, counts, tolerance, threshold, min_separation, k_max,
                         centers=None, curve=None):
    """Decode, match and aggregate.  Returns ``(rows, summary, extras)``."""
    rows, results, correct = [], [], []
    dists, ctp, cfp, cfn = [], 0, 0, 0
    for i, p in enumerate(probs):
        dec = ev.decode(p, threshold, min_separation, k_max)
        correct.append(bool(np.all(dec.modal_counts == counts[i])))
        for c in range(p.shape[1]):
            res = ev.match(dec.times[c], truth[i][c], tolerance)
            results.append(res)
            rows.append({
                "sample": i, "channel": c, "tp": res.tp, "fp": res.fp, "fn": res.fn,
                "precision": res.precision, "recall": res.recall, "f1": res.f1,
                "label_count": int(counts[i][c]), "modal_count": int(dec.modal_counts[c]),
                "expected_count": float(dec.expected_counts[c]),
                "mean_error": float(np.mean(res.signed_errors)) if res.signed_errors else 0.0,
            })
            if centers is not None:
                pred = [hilbert.cell_center(curve, int(d)) for d in dec.times[c]]
                radius = 2.0 * max(curve.cell_w, curve.cell_h)
                a, b, f, ds = ev.match_centers(pred, centers[i][c], radius)
                ctp, cfp, cfn = ctp + a, cfp + b, cfn + f
                dists.extend(ds)
    summary = ev.aggregate(results)
    extras = {"count_accuracy": float(np.mean(correct))}
    if centers is not None:
        extras.update(center_error=float(np.mean(dists)) if dists else float("nan"),
                      center_tp=ctp, center_fp=cfp, center_fn=cfn)
    return rows, summary, extras


def cmd_eval(ckpt_path, data_dir, out_dir, tolerance, threshold, cfg: RunConfig | None = None) -> int:
    try:
        params, _, header = checkpoint.load(ckpt_path)
        manifest = dataset.read_manifest(data_dir)
    except (FileNotFoundError, FormatError) as exc:
        raise UsageError(str(exc)) from None
    if header["meta"].get("data_hash") != manifest["data_hash"]:
        raise UsageError("checkpoint was trained on a different dataset configuration "
                         f"({header['meta'].get('data_hash')} vs {manifest['data_hash']})")
    if cfg is not None and cfg.hash() != header["config_hash"]:
        raise UsageError(f"config hash {cfg.hash()} does not match checkpoint ({header['config_hash']})")
    run_cfg = RunConfig(header["config"])
    tcfg = run_cfg.train_config()
    tolerance = run_cfg["eval"]["tolerance"] if tolerance is None else tolerance
    threshold = run_cfg["eval"]["threshold"] if threshold is None else threshold
    samples = dataset.read_split(data_dir, "test")
    truth = dataset.read_truth(data_dir, "test", len(samples), manifest["channels"])
    centers = curve = None
    if manifest["task"] == "hilbert-2d":
        centers = dataset.read_centers(data_dir, "test", len(samples), manifest["channels"])
        curve = hilbert.HilbertCurve(**{k: manifest["curve"][k] for k in ("order", "cell_w", "cell_h")})
    probs = trainer.predict(params, samples, tcfg.eps_p)
    rows, summary, extras = evaluate_predictions(
        probs, truth, [s.counts for s in samples], tolerance, threshold,
        run_cfg.eval_min_separation(), tcfg.k_max, centers, curve)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={header['config_hash']}\n")
        fh.write(ev.metrics_csv(rows, summary, extras["count_accuracy"]))
    report = {
        "config_hash": header["config_hash"], "tolerance": tolerance, "threshold": threshold,
        "precision": summary.precision, "recall": summary.recall, "f1": summary.f1,
        "tp": summary.tp, "fp": summary.fp, "fn": summary.fn,
        "mean_error": summary.mean_error, "std_error": summary.std_error, **extras,
    }
    (out / "summary.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(report.items())))
    return EXIT_OK


FAULTS = {"sign-flip": props.sign_flipped_pmf}


def cmd_props(seed: int, trials: int, fault: str | None = None) -> int:
    if trials is None or trials < 1:
        raise UsageError("--trials must be a positive integer")
    pmf = FAULTS[fault] if fault else None
    results = props.run_all(seed, trials, **({"pmf": pmf} if pmf else {}))
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:<30} worst={r.worst:.3e} tol={r.tolerance:.1e} slack={r.slack:.3e} trials={r.trials}")
    for r in failed:
        print(f"invariant violated: {r.name} (seed {seed})", file=sys.stderr)
    return EXIT_INVARIANT if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loco", description="Count-supervised event localization experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)

    t = sub.add_parser("train", help="train on a generated dataset")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)

    e = sub.add_parser("eval", help="score a checkpoint on the test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.add_argument("--tolerance", type=int)
    e.add_argument("--threshold", type=float)

    p = sub.add_parser("props", help="run the randomized invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--inject-fault", choices=sorted(FAULTS), help="swap in a broken PMF to test the suite")
    return parser


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            return cmd_gen(_config(args), args.out)
        if args.command == "train":
            return cmd_train(_config(args), args.data, args.out)
        if args.command == "eval":
            cfg = _config(args) if args.config else None
            return cmd_eval(args.checkpoint, args.data, args.out, args.tolerance, args.threshold, cfg)
        return cmd_props(args.seed, args.trials, args.inject_fault)
    except (UsageError, ConfigError, GenerationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LocoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
