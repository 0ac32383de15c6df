"""Command-line surface: reproducible experiments over feature files.

Subcommands: synth, train, eval, cross-eval, sweep, vizmap, scatter,
gradcheck. Every option can also come from a flat key=value config file
(--config); explicit flags override file values. Exit codes: 0 success,
1 usage error, 2 runtime or data error.

All randomness flows from --seed, which is required wherever anything random
happens (synth, train, sweep).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .benchmark import benchmark_synth_config
from .data import (
    DatasetBundle,
    SynthConfig,
    bundle_arrays,
    load_feature_file,
    synth_generate,
    write_feature_file,
)
from .gradcheck import run_gradient_checks
from .metrics import mean_class_recall
from .model import (
    ModelConfig,
    embed_many,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import (
    TrainConfig,
    cross_evaluate,
    evaluate_domains,
    history_csv,
    sweep_csv,
    sweep_representation_size,
    train,
)
from .vizmap import emit_map_image, plan_grid, render_emotion_map, scatter_av


class UsageError(Exception):
    def __init__(self, message: str, parser: Optional[argparse.ArgumentParser] = None):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so main owns the exit code."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message, self)


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    return float(s)


def _str(s: str) -> str:
    return s


def _ints(s: str) -> list[int]:
    return [int(p) for p in s.split(",") if p != ""]


def _strs(s: str) -> list[str]:
    return [p for p in s.split(",") if p != ""]


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class Opt:
    dest: str
    parse: Callable
    default: object = None
    required: bool = False
    flag: bool = False  # presence-only option (config value must be boolean)
    help: str = ""

    @property
    def option(self) -> str:
        return "--" + self.dest.replace("_", "-")


_TRAIN_HP = [
    Opt("epochs", _int, 30, help="training epochs"),
    Opt("batch_size", _int, 32, help="minibatch size"),
    Opt("lr", _float, 1e-3, help="Adam learning rate"),
    Opt("beta1", _float, 0.9, help="Adam first-moment decay"),
    Opt("beta2", _float, 0.999, help="Adam second-moment decay"),
    Opt("eps", _float, 1e-8, help="Adam epsilon"),
    Opt("dropout", _float, 0.5, help="input dropout rate for the projection"),
    Opt("patience", _int, 0, help="evaluations without improvement before stopping; 0 = off"),
    Opt("eval_every", _int, 1, help="epochs between evaluations"),
    Opt("av_source", _str, "ground_truth", help="ground_truth or regressed"),
    Opt("weight_log_base", _float, None, help="log base for dataset weights (default: natural)"),
    Opt("av_steps", _int, 3000, help="regressor fitting steps"),
    Opt("av_lr", _float, 0.02, help="regressor learning rate"),
]

OPTS: dict[str, list[Opt]] = {
    "synth": [
        Opt("seed", _int, required=True, help="corpus seed (required)"),
        Opt("out", _str, required=True, help="training feature file to write"),
        Opt("out_test", _str, required=True, help="test feature file to write"),
        Opt("preset", _str, "none", help="none or benchmark (shipped corpus geometry)"),
        Opt("domains", _int, 2, help="number of domains"),
        Opt("classes", _int, 7, help="number of classes"),
        Opt("dim", _int, 32, help="feature dimension"),
        Opt("latent_dim", _int, 3, help="latent dimension of the class geometry"),
        Opt("noise_sigma", _float, 0.5, help="latent noise scale"),
        Opt("shift_sigma", _float, 0.25, help="per-domain latent shift scale"),
        Opt("train_counts", _ints, help="comma list, train samples per domain"),
        Opt("test_counts", _ints, help="comma list, test samples per domain"),
        Opt("names", _strs, help="comma list of domain names"),
        Opt("no_av", _bool, False, flag=True, help="omit arousal-valence values"),
    ],
    "train": [
        Opt("data", _str, required=True, help="training feature file"),
        Opt("test", _str, required=True, help="test feature file"),
        Opt("seed", _int, required=True, help="training seed (required)"),
        Opt("variant", _str, "cake", help="cake, av, avk, or cake_norm"),
        Opt("k", _int, help="embedding dims (default 3; 0 for av)"),
        Opt("out", _str, help="checkpoint file to write"),
        Opt("history", _str, help="history CSV to write"),
        Opt("save_optimizer", _bool, False, flag=True,
            help="store final params + Adam state instead of the best params"),
        Opt("quiet", _bool, False, flag=True, help="suppress progress lines"),
    ]
    + _TRAIN_HP,
    "eval": [
        Opt("model", _str, required=True, help="checkpoint file"),
        Opt("data", _str, required=True, help="feature file to score"),
        Opt("out", _str, help="CSV report to write"),
        Opt("include_empty_recall", _bool, False, flag=True,
            help="count zero-support classes as recall 0"),
    ],
    "cross-eval": [
        Opt("model", _str, required=True, help="checkpoint file"),
        Opt("data", _str, required=True, help="feature file to score"),
        Opt("out", _str, help="CSV matrix to write"),
    ],
    "sweep": [
        Opt("data", _str, required=True, help="training feature file"),
        Opt("test", _str, required=True, help="test feature file"),
        Opt("seed", _int, required=True, help="shared seed for every run (required)"),
        Opt("ks", _ints, required=True, help="comma list of embedding sizes"),
        Opt("variant", _str, "cake", help="cake, av, avk, or cake_norm"),
        Opt("out", _str, help="sweep CSV to write"),
        Opt("quiet", _bool, False, flag=True, help="suppress progress lines"),
    ]
    + _TRAIN_HP,
    "vizmap": [
        Opt("model", _str, required=True, help="checkpoint file"),
        Opt("out", _str, required=True, help="image file to write"),
        Opt("format", _str, "raster", help="raster (P6 pixmap) or vector"),
        Opt("resolution", _int, 200, help="cells per axis (theta axis on the sphere)"),
        Opt("phi_resolution", _int, help="sphere only: azimuth cells (default 2x resolution)"),
        Opt("domain", _int, 0, help="classifier head to map"),
        Opt("test", _str, help="feature file for observed ranges and the F1 overlay"),
    ],
    "scatter": [
        Opt("data", _str, required=True, help="feature file with arousal-valence values"),
        Opt("out", _str, required=True, help="vector image to write"),
    ],
    "gradcheck": [
        Opt("seed", _int, 0, help="battery seed"),
    ],
}


def _read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for ln, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"config {path}:{ln}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise UsageError(f"config file: {exc}") from exc
    return out


def _merge_options(cmd: str, ns: argparse.Namespace, parser: argparse.ArgumentParser):
    """Config file fills flags the command line left unset; flags win."""
    opts = {o.dest: o for o in OPTS[cmd]}
    if ns.config is not None:
        for key, raw in _read_config_file(ns.config).items():
            dest = key.replace("-", "_")
            if dest not in opts:
                raise UsageError(f"config key {key!r} is not a {cmd} option", parser)
            if getattr(ns, dest) is None:
                o = opts[dest]
                try:
                    parsed = _bool(raw) if o.flag else o.parse(raw)
                except ValueError as exc:
                    raise UsageError(f"config key {key!r}: {exc}", parser) from exc
                setattr(ns, dest, parsed)
    for o in opts.values():
        if o.required and getattr(ns, o.dest) is None:
            raise UsageError(f"{o.option} is required", parser)
    for o in opts.values():
        if getattr(ns, o.dest) is None and o.default is not None:
            setattr(ns, o.dest, o.default)
    return ns


def _build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="cake", description=__doc__, add_help=True, allow_abbrev=False)
    sub = parser.add_subparsers(dest="cmd", metavar="command", parser_class=_Parser)
    subparsers: dict[str, _Parser] = {}
    for cmd, opts in OPTS.items():
        p = sub.add_parser(cmd, help=f"{cmd} command", allow_abbrev=False)
        p.add_argument("--config", help="flat key=value option file; flags override it")
        for o in opts:
            if o.flag:
                p.add_argument(o.option, dest=o.dest, action="store_const", const=True,
                               default=None, help=o.help)
            else:
                p.add_argument(o.option, dest=o.dest, type=o.parse, default=None,
                               metavar="V", help=o.help)
        subparsers[cmd] = p
    return parser, subparsers


def _load_bundle(path: str, split: str = "") -> DatasetBundle:
    try:
        return load_feature_file(path, split=split)
    except OSError as exc:
        raise ValueError(f"feature file {path}: {exc}") from exc


def _checkpoint(path: str):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise ValueError(f"checkpoint {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(o) -> int:
    if o.preset not in ("none", "benchmark"):
        raise ValueError(f"synth: unknown preset {o.preset!r}")
    if o.preset == "benchmark":
        cfg = benchmark_synth_config(seed=o.seed)
        overrides = {}
        if o.train_counts is not None:
            overrides["train_counts"] = o.train_counts
        if o.test_counts is not None:
            overrides["test_counts"] = o.test_counts
        if o.names is not None:
            overrides["domain_names"] = o.names
        if o.no_av:
            overrides["with_av"] = False
        if overrides:
            cfg = replace(cfg, **overrides)
    else:
        if o.train_counts is None or o.test_counts is None:
            raise ValueError("synth: --train-counts and --test-counts are required "
                             "unless --preset benchmark is used")
        cfg = SynthConfig(
            n_domains=o.domains,
            seed=o.seed,
            n_classes=o.classes,
            dim=o.dim,
            latent_dim=o.latent_dim,
            noise_sigma=o.noise_sigma,
            domain_shift_sigma=o.shift_sigma,
            train_counts=o.train_counts,
            test_counts=o.test_counts,
            domain_names=o.names,
            with_av=not o.no_av,
        )
    train_b, test_b = synth_generate(cfg)
    write_feature_file(train_b, o.out)
    write_feature_file(test_b, o.out_test)
    print(f"wrote {o.out}: {len(train_b.records)} records, "
          f"{train_b.n_domains} domains, dim {train_b.dim}")
    print(f"wrote {o.out_test}: {len(test_b.records)} records")
    return 0


def _resolve_k(variant: str, k) -> int:
    if k is not None:
        return k
    return 0 if variant == "av" else 3


def _train_config(o, bundle: DatasetBundle) -> TrainConfig:
    model = ModelConfig(
        variant=o.variant,
        k=_resolve_k(o.variant, o.k if hasattr(o, "k") else None),
        dim=bundle.dim,
        n_domains=bundle.n_domains,
        dropout_rate=o.dropout,
        seed=o.seed,
        av_source=o.av_source,
    )
    return TrainConfig(
        model=model,
        seed=o.seed,
        batch_size=o.batch_size,
        max_epochs=o.epochs,
        patience=o.patience,
        eval_every=o.eval_every,
        lr=o.lr,
        beta1=o.beta1,
        beta2=o.beta2,
        eps=o.eps,
        weight_log_base=o.weight_log_base,
        av_steps=o.av_steps,
        av_lr=o.av_lr,
    )


def cmd_train(o) -> int:
    train_b = _load_bundle(o.data, split="train")
    test_b = _load_bundle(o.test, split="test")
    tcfg = _train_config(o, train_b)
    log = None if o.quiet else print
    result = train(train_b, test_b, tcfg, log=log)
    if result.history:
        print(f"best epoch {result.best_epoch}: weighted macro f1 {result.best_f1:.6f}")
    if o.out:
        if o.save_optimizer:
            save_checkpoint(o.out, result.cfg, result.final_params, adam_state=result.adam)
        else:
            save_checkpoint(o.out, result.cfg, result.params)
        print(f"wrote {o.out}")
    if o.history:
        with open(o.history, "w", encoding="utf-8") as fh:
            fh.write(history_csv(result.history, result.cfg.n_domains))
        print(f"wrote {o.history}")
    return 0


def _eval_lines(scores, bundle: DatasetBundle, include_empty: bool):
    text, csv = [], ["domain,n,macro_f1,accuracy,mean_class_recall"]
    for j, meta in enumerate(bundle.domains):
        recall = mean_class_recall(scores.cm[j], include_empty=include_empty)
        text.append(
            f"domain {meta.name} (n={scores.n[j]}): macro_f1 {scores.f1[j]:.6f} "
            f"accuracy {scores.acc[j]:.6f} mean_class_recall {recall:.6f}"
        )
        csv.append(
            f"{meta.name},{scores.n[j]},{scores.f1[j]:.6f},{scores.acc[j]:.6f},{recall:.6f}"
        )
    text.append(f"weighted macro_f1 {scores.f1_weighted:.6f}")
    csv.append(f"weighted,{int(scores.n.sum())},{scores.f1_weighted:.6f},,")
    return text, csv


def cmd_eval(o) -> int:
    cfg, params, _ = _checkpoint(o.model)
    bundle = _load_bundle(o.data)
    if bundle.n_domains != cfg.n_domains:
        raise ValueError(
            f"eval: bundle has {bundle.n_domains} domains, model has {cfg.n_domains}"
        )
    scores = evaluate_domains(params, cfg, bundle)
    text, csv = _eval_lines(scores, bundle, o.include_empty_recall)
    print("\n".join(text))
    if o.out:
        with open(o.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(csv) + "\n")
        print(f"wrote {o.out}")
    return 0


def cmd_cross_eval(o) -> int:
    cfg, params, _ = _checkpoint(o.model)
    bundle = _load_bundle(o.data)
    if bundle.n_domains != cfg.n_domains:
        raise ValueError(
            f"cross-eval: bundle has {bundle.n_domains} domains, model has {cfg.n_domains}"
        )
    matrix = cross_evaluate(params, cfg, bundle)
    names = [m.name for m in bundle.domains]
    lines = ["head," + ",".join(names)]
    for j, name in enumerate(names):
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in matrix[j]))
    print("\n".join(lines))
    if o.out:
        with open(o.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {o.out}")
    return 0


def cmd_sweep(o) -> int:
    train_b = _load_bundle(o.data, split="train")
    test_b = _load_bundle(o.test, split="test")
    if not o.ks:
        raise ValueError("sweep: --ks must list at least one size")
    base = _train_config(o, train_b)
    log = None if o.quiet else print
    rows = sweep_representation_size(train_b, test_b, base, o.ks, log=log)
    out = sweep_csv(rows)
    print(out, end="")
    if o.out:
        with open(o.out, "w", encoding="utf-8") as fh:
            fh.write(out)
        print(f"wrote {o.out}")
    return 0


def cmd_vizmap(o) -> int:
    cfg, params, _ = _checkpoint(o.model)
    test_b = None
    embeddings = None
    if o.test:
        test_b = _load_bundle(o.test)
        arrays = bundle_arrays(test_b)
        av = arrays.av if cfg.av_source == "ground_truth" else None
        if cfg.uses_av and cfg.av_source == "ground_truth" and av is None:
            raise ValueError(
                f"vizmap: variant {cfg.variant!r} reads stored arousal-valence values, "
                f"but {arrays.n_missing_av} records lack them"
            )
        embeddings = embed_many(params, cfg, arrays.x, av)
    grid = plan_grid(cfg, embeddings, resolution=o.resolution, phi_resolution=o.phi_resolution)
    emap = render_emotion_map(params, cfg, grid, o.domain, test_bundle=test_b)
    if o.format not in ("raster", "vector"):
        raise ValueError(f"vizmap: unknown format {o.format!r}")
    emit_map_image(emap, o.out, format=o.format)
    rows, cols = grid.shape
    print(f"wrote {o.out}: {grid.mode} grid {rows}x{cols}, head {o.domain}")
    return 0


def cmd_scatter(o) -> int:
    bundle = _load_bundle(o.data)
    scatter_av(bundle, o.out)
    print(f"wrote {o.out}: {len(bundle.records)} points")
    return 0


def cmd_gradcheck(o) -> int:
    results = run_gradient_checks(seed=o.seed)
    worst = 0.0
    failed = 0
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{status} {r.label}: {r.n_params} params, max rel err {r.max_rel_err:.3e}")
        worst = max(worst, r.max_rel_err)
        failed += 0 if r.ok else 1
    print(f"{len(results) - failed}/{len(results)} configurations passed "
          f"(worst rel err {worst:.3e})")
    if failed:
        raise FloatingPointError(f"gradcheck: {failed} configurations failed")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "cross-eval": cmd_cross_eval,
    "sweep": cmd_sweep,
    "vizmap": cmd_vizmap,
    "scatter": cmd_scatter,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[list[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser, subparsers = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.cmd is None:
            raise UsageError("a command is required", parser)
        _merge_options(ns.cmd, ns, subparsers[ns.cmd])
    except UsageError as exc:
        target = exc.parser or parser
        sys.stderr.write(target.format_usage())
        sys.stderr.write(f"cake: error: {exc}\n")
        return 1
    try:
        return _COMMANDS[ns.cmd](ns)
    except (ValueError, OSError, FloatingPointError, KeyError) as exc:
        sys.stderr.write(f"cake {ns.cmd}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
