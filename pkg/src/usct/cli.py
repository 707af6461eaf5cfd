"""Command-line surface: reproducible composition of the library modules.

Subcommands: ``phantom``, ``simulate``, ``encode``, ``fwi``, ``assess``,
``info``. Parameters default to the standard virtual imaging system (360
grid at 0.6 mm, 256-receiver ring at 110.4 mm, 0.5 MHz pulse, 0.2 us
sampling, 640 steps); ``--config`` swaps in any other acquisition.

Exit codes: 0 success, 2 usage, 3 malformed file, 4 physics/validation
failure, 5 shape mismatch, 6 numerical failure, 7 missing file/OS error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import assess as assess_mod
from . import fwi as fwi_mod
from . import io as io_mod
from . import phantom as phantom_mod
from .encoding import ENCODER_KINDS, make_encoder, encode_tensor
from .model import (
    Grid2D,
    InvalidMedium,
    NumericalBlowup,
    ShapeMismatch,
    SoundSpeedMap,
    UnstableTimestep,
    GeometryError,
    UsctError,
    default_config,
)
from .wavesim import simulate_acquisition

log = logging.getLogger("usct")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_VALIDATION = 4
EXIT_SHAPE = 5
EXIT_NUMERIC = 6
EXIT_OS = 7


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("USCT_THREADS", "")
    return max(1, int(env)) if env.isdigit() and env else 1


def _load_config(args, nx_hint: int | None = None):
    if getattr(args, "config", None):
        cfg = io_mod.read_config(args.config)
        log.info("config: %s", args.config)
        return cfg
    cfg = default_config()
    if nx_hint is not None and nx_hint != cfg.grid.nx:
        raise ShapeMismatch(
            f"phantom is {nx_hint}x{nx_hint} but the default config expects "
            f"{cfg.grid.nx}; pass --config for non-default grids"
        )
    return cfg


def _cmd_phantom(args) -> int:
    if args.config:
        grid = io_mod.read_config(args.config).grid
    else:
        grid = Grid2D(nx=args.nx, dx=args.dx, pad=args.pad)
    spec = phantom_mod.default_spec(args.density_class, grid.fov, seed=args.seed)
    log.info("generating class-%s phantom, seed %d", args.density_class, args.seed)
    ph = phantom_mod.generate(spec, grid)
    paths = phantom_mod.save_phantom(ph, args.out)
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    raster = io_mod.read_raster(args.phantom)
    config = _load_config(args, nx_hint=raster.shape[0])
    if raster.shape[0] != config.grid.nx:
        raise ShapeMismatch(
            f"phantom grid {raster.shape} does not match config nx={config.grid.nx}"
        )
    speed_map = SoundSpeedMap(config.grid, raster.astype(np.float64))
    workers = _threads(args)
    log.info(
        "simulating %d sources x %d steps x %d receivers (%d worker(s))",
        config.array.n_transmitters, config.n_steps, config.array.n_receivers, workers,
    )
    tensor = simulate_acquisition(speed_map, config, n_workers=workers)
    if args.snr_db is not None:
        log.info("adding noise at %.1f dB SNR (seed %s)", args.snr_db, args.seed)
        tensor = io_mod.add_noise(tensor, args.snr_db, args.seed)
    io_mod.write_waveform(args.out, tensor)
    print(args.out)
    return EXIT_OK


def _cmd_encode(args) -> int:
    tensor = io_mod.read_waveform(args.data)
    encoder = make_encoder(args.kind, args.channels, tensor.n_sources, seed=args.seed)
    encoded = encode_tensor(encoder, tensor)
    io_mod.write_waveform(args.out, encoded)
    print(args.out)
    if args.encoder_out:
        io_mod.write_encoder(args.encoder_out, encoder)
        print(args.encoder_out)
    return EXIT_OK


def _cmd_fwi(args) -> int:
    config = _load_config(args)
    channel_weights = None
    encoded = False
    if args.encoder_file:
        channel_weights = io_mod.read_encoder(args.encoder_file).weights
        encoded = True
    data = io_mod.read_waveform(args.data, encoded=encoded)
    lo, hi = (float(s) for s in args.bounds.split(","))
    if args.init == "water":
        init = SoundSpeedMap.homogeneous(config.grid)
    else:
        init = io_mod.read_sosmap(args.init, grid=config.grid)
    problem = fwi_mod.FwiProblem(
        data=data, config=config, initial_guess=init, bounds=(lo, hi),
        channel_weights=channel_weights,
    )
    optimizer = fwi_mod.make_optimizer(args.optimizer, args.step)
    log.info(
        "reconstructing: %d iterations, %s optimizer (step %g), encoder %s, seed %s",
        args.iters, args.optimizer, args.step, args.encoder, args.seed,
    )
    result = fwi_mod.reconstruct(
        problem,
        optimizer,
        n_iters=args.iters,
        encoder_kind=args.encoder,
        seed=args.seed,
        n_workers=_threads(args),
    )
    io_mod.write_sosmap(args.out, result.map)
    print(args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            f.write(result.log_text())
        print(args.log)
    return EXIT_OK


def _cmd_assess(args) -> int:
    est = io_mod.read_raster(args.est).astype(np.float64)
    truth = io_mod.read_raster(args.truth).astype(np.float64)
    prob = io_mod.read_raster(args.prob).astype(np.float64) if args.prob else None
    mask = io_mod.read_mask(args.mask).astype(bool) if args.mask else None
    report = assess_mod.assessment_report(
        est, truth, prob=prob, mask=mask, threshold=args.threshold
    )
    order = ["rmse", "ssim", "auc", "threshold", "dice"]
    rows = [(k, report[k]) for k in order if k in report]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k:<{width}}  {v:.6f}" for k, v in rows]
    lines.append("")
    lines += [f"{k} = {v!r}" for k, v in rows]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    return EXIT_OK


def _cmd_info(args) -> int:
    for path in args.paths:
        if path.endswith(".manifest") or os.path.basename(path) == "manifest.txt":
            manifest = io_mod.read_manifest(path)
            print(f"{path}: dataset manifest, {len(manifest.files)} file(s)")
            print(f"  config_hash = {manifest.config_hash}")
            print(f"  encoder = {manifest.encoder}")
            print(f"  noise_snr_db = {manifest.noise_snr_db}")
            if args.verify:
                io_mod.verify_manifest(manifest, os.path.dirname(path) or ".")
                print("  checksums OK")
        else:
            info = io_mod.container_info(path)
            shape = "x".join(str(s) for s in info["shape"])
            print(
                f"{path}: {info['magic']} v{info['version']} {shape} "
                f"{info['dtype']} ({info['size_bytes']} bytes)"
            )
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, seed_default=None) -> None:
    p.add_argument("--seed", type=int, default=seed_default, help="RNG seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $USCT_THREADS or 1)")
    p.add_argument("--config", default=None, help="acquisition config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usct",
        description="2D ultrasound computed tomography: simulate, encode, reconstruct, assess.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a stochastic breast phantom")
    p.add_argument("--out", required=True, help="output stem or .sos path")
    p.add_argument("--class", dest="density_class", default="B", choices=sorted(phantom_mod.DENSITY_CLASSES))
    p.add_argument("--nx", type=int, default=360)
    p.add_argument("--dx", type=float, default=0.6e-3)
    p.add_argument("--pad", type=int, default=40)
    _add_common(p, seed_default=0)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("simulate", help="simulate the acquisition for a phantom")
    p.add_argument("--phantom", required=True, help="speed-of-sound map (.sos)")
    p.add_argument("--out", required=True, help="output waveform tensor (.uswf)")
    p.add_argument("--snr-db", type=float, default=None, help="add white noise at this SNR")
    _add_common(p, seed_default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("encode", help="apply a source encoding to a waveform tensor")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", default="rademacher", choices=[k for k in ENCODER_KINDS if k != "custom"])
    p.add_argument("--channels", type=int, required=True, help="encoded channel count L")
    p.add_argument("--out", required=True)
    p.add_argument("--encoder-out", default=None, help="also save the encoding matrix (.encw)")
    _add_common(p, seed_default=0)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("fwi", help="iterative reconstruction from waveform data")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output speed map (.sos)")
    p.add_argument("--init", default="water", help="'water' or an initial .sos map")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--optimizer", default="adam", choices=fwi_mod.OPTIMIZER_KINDS)
    p.add_argument("--step", type=float, default=1.0, help="optimizer step size (m/s scale)")
    p.add_argument("--encoder", default="rademacher", choices=["rademacher", "gaussian", "none"],
                   help="per-iteration stochastic encoding of the data channels")
    p.add_argument("--encoder-file", default=None,
                   help="encoding matrix (.encw) describing pre-encoded data channels")
    p.add_argument("--bounds", default="1300,1700", help="box constraints lo,hi in m/s")
    p.add_argument("--log", default=None, help="write the convergence log here")
    _add_common(p, seed_default=0)
    p.set_defaults(func=_cmd_fwi)

    p = sub.add_parser("assess", help="image-quality and detection metrics")
    p.add_argument("--est", required=True, help="reconstructed map (.sos)")
    p.add_argument("--truth", required=True, help="true map (.sos)")
    p.add_argument("--prob", default=None, help="observer probability map")
    p.add_argument("--mask", default=None, help="true tumor mask (.msk)")
    p.add_argument("--threshold", type=float, default=None,
                   help=f"detection threshold (default: ROC corner; common choice "
                        f"{assess_mod.DEFAULT_PROBABILITY_THRESHOLD})")
    p.add_argument("--out", default=None, help="also write the report here")
    _add_common(p)
    p.set_defaults(func=_cmd_assess)

    p = sub.add_parser("info", help="describe container/manifest files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--verify", action="store_true", help="verify manifest checksums")
    _add_common(p)
    p.set_defaults(func=_cmd_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (io_mod.FormatError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ShapeMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (NumericalBlowup, fwi_mod.FwiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (
        InvalidMedium,
        UnstableTimestep,
        GeometryError,
        phantom_mod.InfeasibleSpec,
        phantom_mod.InvariantViolation,
        io_mod.ZeroSignal,
        assess_mod.AssessError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except UsctError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OS


if __name__ == "__main__":
    sys.exit(main())
