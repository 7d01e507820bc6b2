"""Command-line interface for mask design, recovery, and experiments.

Subcommands
-----------
- ``design-initial``: emit an initial mask set as a stacked CSV.
- ``design-next``: given masks and observations, emit the next designed mask(s).
- ``recover``: estimate the matrix from masks and observations.
- ``experiment``: run a replicated design-vs-baseline comparison, writing
  trace/summary CSVs and a rendered figure.
- ``patch`` / ``unpatch``: convert between grayscale images and the patch
  matrix used for low-rank recovery.

Configuration is a flat ``key = value`` file; every key is also available as
a command-line flag of the same name, which takes precedence over the file.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .fileio import (
    CONFIG_SPEC,
    build_config,
    config_to_text,
    read_config,
    read_masks,
    read_matrix,
    read_observations,
    read_pgm,
    write_masks,
    write_matrix,
    write_observations,
    write_pgm,
    write_summary,
    write_traces,
)
from .frames import ini_flip, ini_kk
from .harness import (
    default_init_method,
    estimate_signal_variance,
    normalized_error,
    run_experiment,
)
from .recovery import RecoveryOptions, estimate_subspaces, recover
from .sequential import next_mask
from .smg import MeasurementRecord
from .constants import GAMMA2_FLOOR


def _dest(key):
    return f"kv_{key}"


def _add_config_flags(parser, keys=None):
    parser.add_argument("--config", help="flat key = value configuration file")
    for key in keys if keys is not None else CONFIG_SPEC:
        parser.add_argument(f"--{key}", dest=_dest(key), metavar="VALUE", default=None,
                            help=f"override config key {key}")


def _raw_config(args):
    raw = read_config(args.config) if args.config else {}
    for key in CONFIG_SPEC:
        value = getattr(args, _dest(key), None)
        if value is not None:
            raw[key] = value
    return raw


def _parse_key(raw, key, default=None, required=False):
    if key in raw:
        _, _, parser = CONFIG_SPEC[key]
        try:
            return parser(str(raw[key]))
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from exc
    if required:
        raise ValueError(f"missing required config key {key!r} (flag --{key})")
    return default


def _recovery_options(raw):
    fields = {}
    for key, (target, attr, parser) in CONFIG_SPEC.items():
        if target == "recovery" and key in raw:
            try:
                fields[attr] = parser(str(raw[key]))
            except ValueError as exc:
                raise ValueError(f"config key {key!r}: {exc}") from exc
    return RecoveryOptions(**fields)


def _read_record(args, raw):
    m1 = _parse_key(raw, "m1", required=True)
    masks = read_masks(args.masks, m1)
    y = read_observations(args.observations)
    if len(y) != len(masks):
        raise ValueError(f"{len(masks)} masks but {len(y)} observations")
    return MeasurementRecord(tuple(masks), y)


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_design_initial(args):
    raw = _raw_config(args)
    m1 = _parse_key(raw, "m1", required=True)
    m2 = _parse_key(raw, "m2", required=True)
    n_ini = _parse_key(raw, "n_ini", required=True)
    rank_ini = _parse_key(raw, "R_ini", default=2)
    method = _parse_key(raw, "initMethod", default="auto")
    seed = _parse_key(raw, "seed", default=0)
    if method == "auto":
        method = default_init_method(m1, m2, n_ini, rank_ini)
    if method == "flip":
        masks = ini_flip(m1, m2, n_ini, rank_ini, seed)
    elif method == "kk":
        masks = ini_kk(m1, m2, n_ini, rank_ini, seed)
    else:
        rng = np.random.default_rng(seed)
        masks = []
        for _ in range(n_ini):
            A = rng.standard_normal((m1, m2))
            masks.append(A / np.linalg.norm(A))
    write_masks(args.out, masks)
    print(f"wrote {len(masks)} {method} masks ({m1}x{m2}) to {args.out}")
    return 0


def _cmd_design_next(args):
    raw = _raw_config(args)
    record = _read_record(args, raw)
    eta2 = _parse_key(raw, "eta2", default=1e-4)
    sigma2 = _parse_key(raw, "sigma2")
    batch = _parse_key(raw, "batchSize", default=1)
    opts = _recovery_options(raw)
    if sigma2 is None:
        sigma2 = estimate_signal_variance(record, eta2)
        print(f"estimated sigma2 = {sigma2:.6g} by method of moments")
    gamma2 = max(eta2 / sigma2, GAMMA2_FLOOR)
    result = recover(record, opts, eta2=eta2)
    estimate = estimate_subspaces(result.estimate, opts.rank_threshold)
    k = min(batch, estimate.rank**2)
    masks = next_mask(estimate, record.masks, gamma2, k=k)
    write_masks(args.out, masks)
    print(f"wrote {len(masks)} designed mask(s) to {args.out} (estimated rank {estimate.rank})")
    return 0


def _cmd_recover(args):
    raw = _raw_config(args)
    record = _read_record(args, raw)
    eta2 = _parse_key(raw, "eta2", default=1e-4)
    opts = _recovery_options(raw)
    result = recover(record, opts, eta2=eta2)
    write_matrix(args.out, result.estimate)
    print(
        f"recovered {result.estimate.shape[0]}x{result.estimate.shape[1]} matrix in "
        f"{result.iterations} iterations (lambda={result.lam:.6g}, "
        f"converged={result.converged}, relative residual={result.relative_residual:.3e})"
    )
    if args.truth:
        truth = read_matrix(args.truth)
        print(f"normalized error vs truth: {normalized_error(result.estimate, truth):.6e}")
    return 0


def _cmd_experiment(args):
    raw = _raw_config(args)
    config = build_config(raw)
    truth = read_matrix(args.truth) if args.truth else None
    result = run_experiment(config, truth=truth, include_pca=args.include_pca)
    os.makedirs(args.out, exist_ok=True)
    paths = {
        "traces": os.path.join(args.out, "traces.csv"),
        "summary": os.path.join(args.out, "summary.csv"),
        "config": os.path.join(args.out, "config.txt"),
    }
    if not args.no_figure:
        paths["figure"] = os.path.join(args.out, "summary.png")
    write_traces(paths["traces"], result.traces)
    write_summary(paths["summary"], result.summary)
    with open(paths["config"], "w", newline="\n") as handle:
        handle.write(config_to_text(config))
    if "figure" in paths:
        from .figures import plot_summary  # imported lazily; pulls in matplotlib

        title = f"{config.m1}x{config.m2} rank {config.rank}, {config.trials} trials"
        plot_summary(result.summary, paths["figure"], title=title)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_patch(args):
    from .harness import patch_image

    image = read_pgm(args.image) if args.image.lower().endswith(".pgm") else read_matrix(args.image)
    matrix = patch_image(image, patch=args.patch)
    write_matrix(args.out, matrix)
    print(f"patched {image.shape[0]}x{image.shape[1]} image into "
          f"{matrix.shape[0]}x{matrix.shape[1]} matrix at {args.out}")
    return 0


def _cmd_unpatch(args):
    from .harness import unpatch_image

    matrix = read_matrix(args.matrix)
    image = unpatch_image(matrix, (args.height, args.width), patch=args.patch)
    if args.out.lower().endswith(".pgm"):
        write_pgm(args.out, np.clip(np.rint(image), 0, 255))
    else:
        write_matrix(args.out, image)
    print(f"unpatched to {args.height}x{args.width} image at {args.out}")
    return 0


def _cmd_measure(args):
    # Convenience for exercising the full pipeline on synthetic data: apply
    # stored masks to a stored matrix and write noisy observations.
    from .smg import measure

    raw = _raw_config(args)
    truth = read_matrix(args.truth)
    masks = read_masks(args.masks, truth.shape[0])
    eta2 = _parse_key(raw, "eta2", default=1e-4)
    seed = _parse_key(raw, "seed", default=0)
    y = measure(truth, masks, eta2, seed=seed)
    write_observations(args.out, y)
    print(f"wrote {len(y)} observations to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="maxent-lowrank",
        description="Information-guided measurement design for low-rank matrix recovery.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design-initial", help="emit an initial mask set")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output stacked-mask CSV")
    p.set_defaults(func=_cmd_design_initial)

    p = sub.add_parser("design-next", help="design the next mask(s) from data")
    _add_config_flags(p)
    p.add_argument("--masks", required=True, help="stacked-mask CSV observed so far")
    p.add_argument("--observations", required=True, help="two-column observation CSV")
    p.add_argument("--out", required=True, help="output stacked-mask CSV")
    p.set_defaults(func=_cmd_design_next)

    p = sub.add_parser("recover", help="estimate the matrix from observations")
    _add_config_flags(p)
    p.add_argument("--masks", required=True, help="stacked-mask CSV")
    p.add_argument("--observations", required=True, help="two-column observation CSV")
    p.add_argument("--out", required=True, help="output matrix CSV")
    p.add_argument("--truth", help="optional ground-truth CSV for error reporting")
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("experiment", help="replicated design-vs-baseline comparison")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--truth", help="fixed ground-truth CSV (default: simulate per trial)")
    p.add_argument("--include-pca", action="store_true",
                   help="also run the known-subspace oracle (simulated truth only)")
    p.add_argument("--no-figure", action="store_true",
                   help="skip rendering the summary figure")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("measure", help="apply stored masks to a stored matrix")
    _add_config_flags(p, keys=("eta2", "seed"))
    p.add_argument("--truth", required=True, help="matrix CSV to measure")
    p.add_argument("--masks", required=True, help="stacked-mask CSV")
    p.add_argument("--out", required=True, help="output observation CSV")
    p.set_defaults(func=_cmd_measure)

    p = sub.add_parser("patch", help="image -> patch matrix")
    p.add_argument("--image", required=True, help="input PGM (or matrix CSV)")
    p.add_argument("--patch", type=int, default=8, help="patch side length (default 8)")
    p.add_argument("--out", required=True, help="output matrix CSV")
    p.set_defaults(func=_cmd_patch)

    p = sub.add_parser("unpatch", help="patch matrix -> image")
    p.add_argument("--matrix", required=True, help="input patch-matrix CSV")
    p.add_argument("--height", type=int, required=True, help="image height")
    p.add_argument("--width", type=int, required=True, help="image width")
    p.add_argument("--patch", type=int, default=8, help="patch side length (default 8)")
    p.add_argument("--out", required=True, help="output PGM (or matrix CSV)")
    p.set_defaults(func=_cmd_unpatch)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
