"""Command line interface: train, sample, eval, grid.

Exit codes: 0 success, 1 usage error, 2 runtime/numeric failure.  All CSV
and JSON outputs are byte-stable given the same inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .density import DensityModel
from .metrics import cross_entropy, sliced_tv
from .sampler import sample
from .training import TrainConfig, train

logger = logging.getLogger(__name__)

TOY_PREFIX = "toy:"


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ttdensity",
                     description="Tensor-train density estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train", help="fit a density model")
    p_train.add_argument("--data", required=True,
                         help="CSV path or toy:{two_moons,checkerboard,corners}")
    p_train.add_argument("--variant", choices=["plain", "squared"], default="plain")
    p_train.add_argument("--rank", type=_positive_int, default=8)
    p_train.add_argument("--basis-size", type=_positive_int, default=32)
    p_train.add_argument("--optimizer", choices=["riemannian", "adam"], default=None,
                         help="default: riemannian for plain, adam for squared")
    p_train.add_argument("--init", choices=["rank1", "random"], default="rank1")
    p_train.add_argument("--batch-size", type=_positive_int, default=1024)
    p_train.add_argument("--iters", type=_positive_int, default=500)
    p_train.add_argument("--lr", type=float, default=1e-2)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--val-fraction", type=float, default=0.1)
    p_train.add_argument("--toy-n", type=_positive_int, default=100_000)
    p_train.add_argument("--toy-noise", type=float, default=0.05)
    p_train.add_argument("--toy-dim", type=_positive_int, default=3,
                         help="total dimensions for toy:corners")
    p_train.add_argument("--out", required=True, help="model output path (JSON)")
    p_train.add_argument("--log", default=None,
                         help="training log CSV (default: <out>.log.csv)")
    p_train.add_argument("--checkpoint-every", type=_nonnegative_int, default=0)
    p_train.add_argument("--config", default=None,
                         help="flat key=value file; entries override flags")
    p_train.add_argument("--sweep", default=None,
                         help="repeat training over values, e.g. rank=4,8,16")
    p_train.add_argument("--no-figure", action="store_true",
                         help="skip the loss-curve figure")
    p_train.add_argument("--threads", type=_positive_int, default=None,
                         help="cap BLAS worker threads (results unchanged)")
    p_train.set_defaults(func=cmd_train)

    p_sample = sub.add_parser("sample", help="draw samples from a model")
    p_sample.add_argument("--model", required=True)
    p_sample.add_argument("-n", "--num", type=_nonnegative_int, required=True)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True, help="samples CSV path")
    p_sample.set_defaults(func=cmd_sample)

    p_eval = sub.add_parser("eval", help="compare sample sets / score a model")
    p_eval.add_argument("--samples", help="first sample CSV")
    p_eval.add_argument("--samples2", help="second sample CSV")
    p_eval.add_argument("--model", help="model whose samples replace --samples2")
    p_eval.add_argument("--n-model-samples", type=_positive_int, default=None,
                        help="default: as many as the data set")
    p_eval.add_argument("--n-projections", type=_positive_int, default=64)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_grid = sub.add_parser("grid", help="density values over a 2D grid")
    p_grid.add_argument("--model", required=True)
    p_grid.add_argument("--dims", default="1,2", help="1-based pair, e.g. 1,2")
    p_grid.add_argument("--resolution", type=_positive_int, default=128)
    p_grid.add_argument("--out", required=True, help="grid CSV path")
    p_grid.add_argument("--no-figure", action="store_true",
                        help="skip the heatmap figure")
    p_grid.set_defaults(func=cmd_grid)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except BrokenPipeError:
        return 2
    except Exception as exc:  # runtime/numeric failures -> exit code 2
        print(f"ttdensity {args.command}: error: {exc}", file=sys.stderr)
        return 2


# ----------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    if args.config:
        _apply_config(args, args.config)
    if args.threads:
        _limit_threads(args.threads)
    if args.optimizer is None:
        args.optimizer = "adam" if args.variant == "squared" else "riemannian"
    dataset = _load_dataset(args)
    sweeps = _parse_sweep(args.sweep)
    for key, value in sweeps:
        if key is not None:
            setattr(args, key, value)
        out = Path(args.out)
        if key is not None:
            out = out.with_name(f"{out.stem}-{key}{value}{out.suffix}")
        _train_once(args, dataset, out)
    return 0


def _train_once(args, dataset, out: Path):
    config = TrainConfig(
        variant=args.variant, rank=args.rank, basis_size=args.basis_size,
        optimizer=args.optimizer, init=args.init, batch_size=args.batch_size,
        iters=args.iters, lr=args.lr, seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        checkpoint_path=str(out.with_suffix(out.suffix + ".ckpt")),
    )
    result = train(config, dataset)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.model.save(out)
    with open(out.with_suffix(out.suffix + ".data.json"), "w") as fh:
        json.dump(dataset.manifest(), fh, sort_keys=True)
    log_path = Path(args.log) if args.log else out.with_suffix(out.suffix + ".log.csv")
    with open(log_path, "w") as fh:
        fh.write("iter,train_loss,val_loss,seconds\n")
        for row in result.log:
            fh.write(f"{row.iteration},{row.train_loss:.17g},"
                     f"{row.val_loss:.17g},{row.seconds:.3f}\n")
    if not args.no_figure:
        from .plots import render_training_curves
        render_training_curves(result.log, out.with_suffix(out.suffix + ".loss.png"))
    print(f"wrote {out} (best iteration {result.best_iteration}, "
          f"validation loss {result.best_val_loss:.6g})")


def cmd_sample(args) -> int:
    model = DensityModel.load(args.model)
    x = sample(model, args.num, seed=args.seed) if args.num else \
        np.empty((0, model.d))
    data_mod.save_csv(args.out, x.reshape(-1, model.d))
    print(f"wrote {args.num} samples to {args.out}")
    return 0


def cmd_eval(args) -> int:
    if not args.samples:
        raise ValueError("--samples is required")
    reference = data_mod.load_csv(args.samples, val_fraction=0.0).samples
    report: dict = {}
    if args.model:
        model = DensityModel.load(args.model)
        n = args.n_model_samples or len(reference)
        drawn = sample(model, n, seed=args.seed)
        report["sliced_tv"] = sliced_tv(reference, drawn,
                                        n_projections=args.n_projections, seed=args.seed)
        ce = cross_entropy(model, reference)
        report["cross_entropy"] = ce.value
        report["negative_density_fraction"] = ce.n_nonpositive / len(reference)
    elif args.samples2:
        other = data_mod.load_csv(args.samples2, val_fraction=0.0).samples
        report["sliced_tv"] = sliced_tv(reference, other,
                                        n_projections=args.n_projections, seed=args.seed)
    else:
        raise ValueError("provide --samples2 or --model to compare against")
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_grid(args) -> int:
    model = DensityModel.load(args.model)
    try:
        i, j = (int(v) - 1 for v in args.dims.split(","))
    except ValueError as exc:
        raise ValueError(f"--dims must be two comma-separated indices: {exc}") from exc
    if not (0 <= i < model.d and 0 <= j < model.d and i != j):
        raise ValueError(f"--dims out of range for a {model.d}-dimensional model")
    xs = _grid_axis(model.bases[i], args.resolution)
    ys = _grid_axis(model.bases[j], args.resolution)
    gx, gy = np.meshgrid(xs, ys)
    points = np.stack([gx.ravel(), gy.ravel()], axis=1)
    if i > j:
        points = points[:, ::-1]
    dims = (min(i, j), max(i, j))
    values = model.marginal_many(dims, points)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write(f"x{i + 1},x{j + 1},density\n")
        for (px, py), v in zip(points if i <= j else points[:, ::-1], values):
            fh.write(f"{px:.17g},{py:.17g},{v:.17g}\n")
    if not args.no_figure:
        from .plots import render_grid_heatmap
        render_grid_heatmap(xs, ys, values.reshape(len(ys), len(xs)),
                            out.with_suffix(out.suffix + ".png"), dims=(i + 1, j + 1))
    print(f"wrote {args.resolution}x{args.resolution} grid to {out}")
    return 0


# ----------------------------------------------------------------------
# helpers


def _grid_axis(basis, resolution: int) -> np.ndarray:
    if resolution == 1:
        return np.array([0.5 * (basis.lo + basis.hi)])
    return np.linspace(basis.lo, basis.hi, resolution)


def _load_dataset(args):
    spec = args.data
    if spec.startswith(TOY_PREFIX):
        name = spec[len(TOY_PREFIX):]
        if name == "two_moons":
            return data_mod.gen_two_moons(args.toy_n, noise=args.toy_noise,
                                          seed=args.seed, val_fraction=args.val_fraction)
        if name == "checkerboard":
            return data_mod.gen_checkerboard(args.toy_n, seed=args.seed,
                                             val_fraction=args.val_fraction)
        if name == "corners":
            if args.toy_dim < 3:
                raise ValueError("toy:corners needs --toy-dim >= 3")
            return data_mod.gen_corner_mixture(
                d=args.toy_dim, n_components=7, noise_dims=args.toy_dim - 3,
                scale=1.0, seed=args.seed, n=args.toy_n,
                val_fraction=args.val_fraction)
        raise ValueError(f"unknown toy dataset {name!r}")
    return data_mod.load_csv(spec, val_fraction=args.val_fraction, seed=args.seed)


def _parse_sweep(spec):
    if not spec:
        return [(None, None)]
    key, _, values = spec.partition("=")
    key = key.strip().replace("-", "_")
    if key not in ("rank", "basis_size", "iters") or not values:
        raise ValueError("--sweep expects rank=..., basis_size=... or iters=...")
    return [(key, int(v)) for v in values.split(",")]


def _apply_config(args, path):
    """Flat key=value file; entries override flags (and flags override defaults)."""
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not hasattr(args, key):
            raise ValueError(f"{path}:{lineno}: unknown config entry {line!r}")
        current = getattr(args, key)
        caster = type(current) if current is not None and not isinstance(current, bool) \
            else str
        if isinstance(current, bool):
            caster = lambda v: v.strip().lower() in ("1", "true", "yes")
        setattr(args, key, caster(value.strip()))


def _limit_threads(n: int):
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        logger.warning("--threads needs threadpoolctl; running with library defaults")


if __name__ == "__main__":
    sys.exit(main())
