"""Command-line surface: ``train``, ``verify``, ``cost``, and ``bench``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
failure, 5 verification failure. Every RunConfig key has a matching
override flag (``--patch`` is an extra alias for ``--patch-size``);
precedence is CLI flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import fields

import numpy as np

from . import analysis, config as config_mod, data as data_mod
from . import mixers, model as model_mod, training, verify
from .counting import FLOPS_PER_MULTADD
from .errors import ConfigError, DataError, NumericalError, WavemixError
from .tensor import Tensor, no_grad

REPORT_HEADER = "Model\tParameters (M)\tFlops (G)\tTop-1 (%)\tTop-5 (%)"
BENCH_HEADER = "mixer\tN\td\tmultadds\tseconds"
BENCH_TOKEN_COUNTS = (64, 256, 1024, 4096)
COST_HEADER = ("mixer\tinterpretation\tparams_table1\tflops_table1"
               "\tparams_measured\tflops_measured\tdiverges")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_VERIFY = 5


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {raw!r}")


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    """One flag per RunConfig key, defaulting to None (= not overridden)."""
    types = {"bool": _parse_bool, "int": int, "float": float, "str": str}
    for f in fields(config_mod.RunConfig):
        kind = f.type if isinstance(f.type, str) else f.type.__name__
        names = ["--" + f.name.replace("_", "-")]
        if f.name == "patch_size":
            names.append("--patch")
        p.add_argument(*names, dest=f.name, default=None, type=types[kind],
                       help=f"override config key {f.name}")


def _overrides(args) -> dict:
    return {f.name: getattr(args, f.name) for f in fields(config_mod.RunConfig)
            if getattr(args, f.name, None) is not None}


def _resolved(args) -> config_mod.RunConfig:
    return config_mod.resolve(getattr(args, "config", None), _overrides(args))


def _load_data(cfg: config_mod.RunConfig) -> data_mod.Dataset:
    root = cfg.data_root or os.environ.get("WAVEMIX_DATA_ROOT", "")
    if cfg.dataset in ("cifar10", "cifar100") and cfg.image_size != data_mod.CIFAR_SIDE:
        raise ConfigError(
            f"{cfg.dataset} images are {data_mod.CIFAR_SIDE}x{data_mod.CIFAR_SIDE}, "
            f"config requests image_size {cfg.image_size}"
        )
    ds = data_mod.load_dataset(cfg.dataset, root=root or None, seed=cfg.seed,
                               subset=cfg.subset or None, classes=cfg.classes,
                               image_size=cfg.image_size)
    return data_mod.normalize_(ds)


def _cost_report_for(cfg: config_mod.RunConfig, n=None, d=None,
                     afno_k=analysis.DEFAULT_AFNO_K) -> analysis.CostReport:
    grid_n = (cfg.image_size // cfg.patch_size) ** 2
    d_eff = d or cfg.dim
    # The report always includes the attention comparison row, so fall back
    # to one head when the configured count does not divide this width.
    heads = cfg.heads if d_eff % cfg.heads == 0 else 1
    return analysis.mixer_cost_report(
        n=n or grid_n, d=d_eff, heads=heads, k_w=cfg.k_w, g_w=cfg.g_w,
        g1=cfg.g1, g2=cfg.g2, levels=cfg.levels, afno_k=afno_k)


def _cost_lines(rep: analysis.CostReport) -> list:
    lines = [COST_HEADER]
    for r in rep.rows:
        pm = "-" if r.params_measured is None else str(r.params_measured)
        fm = "-" if r.flops_measured is None else str(r.flops_measured)
        lines.append(f"{r.mixer}\t{r.interpretation}\t{r.params_table1:.0f}"
                     f"\t{r.flops_table1:.0f}\t{pm}\t{fm}\t{'yes' if r.diverges else 'no'}")
    return lines


def _provenance_lines(cfg: config_mod.RunConfig) -> list:
    return [
        f"constants_sha256 = {verify.provenance_hash()}",
        f"flop_convention = {FLOPS_PER_MULTADD} flops per multiply-add;"
        " elementwise and normalization work uncounted",
        "",
        "# resolved configuration",
        cfg.to_text().rstrip("\n"),
    ]


def cmd_train(args) -> int:
    cfg = _resolved(args)
    mcfg = cfg.model_config()  # validate the model shape before touching data
    tcfg = cfg.train_config()
    out_dir = args.out or os.path.join("runs", f"{cfg.mixer}-{cfg.dataset}-seed{cfg.seed}")
    os.makedirs(out_dir, exist_ok=True)
    ds = _load_data(cfg)
    m = model_mod.VitModel(mcfg)
    params_m = analysis.count_params(m).total / 1e6
    flops_g = analysis.count_flops(m) / 1e9
    ckpt = os.path.join(out_dir, "checkpoint.wvmx")
    print(training.METRICS_HEADER)
    history = training.fit(
        m, ds, tcfg,
        checkpoint_path=ckpt,
        log_path=os.path.join(out_dir, "metrics.log"),
        log_fn=print,
        stop_top1=args.stop_top1,
        max_epochs=args.max_epochs,
    )
    best = max(history, key=lambda r: r["test_top1"])
    if os.path.exists(ckpt):
        training.load_best(m, ckpt)
    lines = [
        REPORT_HEADER,
        f"{cfg.mixer}\t{params_m:.3f}\t{flops_g:.3f}"
        f"\t{best['test_top1']:.2f}\t{best['test_top5']:.2f}",
        "",
        "# per-layer cost rows (closed form vs measured)",
        *_cost_lines(_cost_report_for(cfg)),
        "",
        "# provenance",
        *_provenance_lines(cfg),
    ]
    report = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(report)
    print(report, end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run(only=args.only)
    failed = 0
    for r in results:
        if r.ok:
            print(f"PASS {r.module}/{r.name}")
        else:
            failed += 1
            print(f"FAIL {r.module}/{r.name}: {r.detail}")
    print(f"{len(results) - failed}/{len(results)} invariants passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def cmd_cost(args) -> int:
    cfg = _resolved(args)
    rep = _cost_report_for(cfg, n=args.n, d=args.d, afno_k=args.afno_k)
    print(f"# per-layer costs at N={rep.n}, d={rep.d}")
    for line in _cost_lines(rep):
        print(line)
    for line in _provenance_lines(cfg):
        print(line)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _resolved(args)
    kinds = [cfg.mixer] if args.only_mixer else list(mixers.MIXER_KINDS)
    d = args.d or 64
    print(BENCH_HEADER)
    for kind in kinds:
        for n in BENCH_TOKEN_COUNTS:
            side = int(round(np.sqrt(n)))
            rng = np.random.default_rng(cfg.seed)
            knobs = {}
            if kind == "mwa":
                knobs = dict(k_w=cfg.k_w, g_w=cfg.g_w, g1=cfg.g1, g2=cfg.g2,
                             levels=cfg.levels)
            elif kind == "sa":
                knobs = dict(heads=cfg.heads if d % cfg.heads == 0 else 1)
            mixer = mixers.build_mixer(kind, d, side, side, rng, **knobs)
            x = Tensor(np.random.default_rng(1).normal(size=(1, d, side, side)))
            with no_grad():
                mixer(x)  # warm caches before timing
            multadds = analysis.count_mixer_multadds(mixer, d, side, side)
            t0 = time.perf_counter()
            with no_grad():
                for _ in range(args.repeats):
                    mixer(x)
            dt = (time.perf_counter() - t0) / args.repeats
            print(f"{kind}\t{n}\t{d}\t{multadds}\t{dt:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavemix",
        description="Wavelet, attention, and Fourier token mixers with a "
                    "verifiable training harness and cost analyzer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a report")
    p_train.add_argument("--config", default=None, help="key = value config file")
    p_train.add_argument("--out", default=None, help="output directory")
    p_train.add_argument("--stop-top1", type=float, default=None,
                         help="stop once test top-1 reaches this percentage")
    p_train.add_argument("--max-epochs", type=int, default=None,
                         help="cap epochs run without changing the lr schedule")
    _add_override_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_verify = sub.add_parser("verify", help="run the module invariant suites")
    p_verify.add_argument("--only", default=None,
                          help=f"restrict to one module: {sorted(verify.SUITES)}")
    p_verify.set_defaults(func=cmd_verify)

    p_cost = sub.add_parser("cost", help="closed-form vs measured mixer costs")
    p_cost.add_argument("--config", default=None)
    p_cost.add_argument("--n", type=int, default=None, help="token count (square grid)")
    p_cost.add_argument("--d", type=int, default=None, help="channel width")
    p_cost.add_argument("--afno-k", type=int, default=analysis.DEFAULT_AFNO_K)
    _add_override_flags(p_cost)
    p_cost.set_defaults(func=cmd_cost)

    p_bench = sub.add_parser("bench", help="time mixer forwards across token counts")
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--d", type=int, default=None, help="channel width (default 64)")
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.add_argument("--only-mixer", action="store_true",
                         help="bench only the configured mixer")
    _add_override_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except WavemixError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
