"""Command-line front end: ``sph-inpaint <subcommand> ...``.

Every subcommand prints one ``key=value`` summary line.  Exit status is 0
on success, 1 on usage errors and 2 on data or format errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from .anisotropy import install_anisotropy
from .baselines import Diffusion, DiffusionOperator, DiffusionProblem, SolverError, solve_diffusion
from .densify import DensifyConfig, densify
from .image import FormatError, GrayImage, mse, mse_clamped, read_pgm, write_pgm
from .inpaint import Order, ReplayLog, inpaint
from .kernels import FAMILIES, parse_kernel
from .mask import (InpaintingMask, make_random_mask, make_regular_mask, mask_from_image, read_mask,
                   sidecar_path, write_mask)
from .tonal import ReplayMismatch, cgnr, tonal_optimize

log = logging.getLogger("sphinpaint")

ORDERS = ("0", "1", "mixed", "harmonic", "biharmonic")
THREADS_ENV = "SPH_INPAINT_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def emit(**kv) -> str:
    line = " ".join(f"{k}={_fmt(v)}" for k, v in kv.items())
    print(line, flush=True)
    return line


def set_threads(requested: int | None) -> int:
    import numba
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"   # always available, no probing
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if requested is not None and requested < 1:
        raise UsageError("thread count must be >= 1")
    n = min(requested or numba.config.NUMBA_NUM_THREADS, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


# --- argument groups -----------------------------------------------------------

def _add_common(p):
    p.add_argument("--threads", type=int, default=None, help=f"worker cap (fallback: ${THREADS_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_recon(p, default_order="0"):
    p.add_argument("--kernel", default="gaussian", help="|".join(FAMILIES))
    p.add_argument("--epsilon", type=float, default=None, help="shape constant override")
    p.add_argument("--order", default=default_order, choices=ORDERS)
    p.add_argument("--min-neighbors", type=int, default=5)
    p.add_argument("--strict-first-order", action="store_true",
                   help="defer singular first-order pixels instead of falling back to zero order")


def _add_aniso(p):
    p.add_argument("--window", type=int, default=25)
    p.add_argument("--min-points", type=int, default=15)
    p.add_argument("--max-ratio", type=float, default=8.0)
    p.add_argument("--aniso-weights", choices=("gauss", "uniform"), default="gauss")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sph-inpaint", description="SPH image inpainting toolkit")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("mask", help="create a mask")
    s.add_argument("--image", required=True, help="image supplying the gray values")
    s.add_argument("--kind", choices=("regular", "random", "image"), default="regular")
    s.add_argument("--step", type=int, default=4)
    s.add_argument("--density", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mask-image", help="binary PGM for --kind image (>= 128 is known)")
    s.add_argument("--out", required=True)
    _add_common(s)

    s = sub.add_parser("inpaint", help="reconstruct an image from a mask")
    s.add_argument("--mask", required=True)
    s.add_argument("--image", help="gray values for a mask without sidecar (damaged image)")
    s.add_argument("--truth", help="ground truth for mixed order and MSE")
    s.add_argument("--out", required=True)
    s.add_argument("--replay", help="write the replay log here")
    s.add_argument("--mse-clamped", action="store_true")
    _add_recon(s)
    _add_common(s)

    s = sub.add_parser("densify", help="greedy Voronoi mask densification")
    s.add_argument("--image", required=True)
    s.add_argument("--density", type=float, required=True)
    s.add_argument("--per-iter", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-mask", required=True)
    s.add_argument("--out")
    s.add_argument("--history")
    s.add_argument("--replay")
    s.add_argument("--mse-clamped", action="store_true")
    _add_recon(s, "mixed")
    _add_common(s)

    s = sub.add_parser("tonal", help="least-squares gray values for a fixed mask")
    s.add_argument("--image", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--replay", help="replay log of the SPH run (SPH orders)")
    s.add_argument("--kernel", default=None)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--order", choices=("sph", "harmonic", "biharmonic"), default="sph")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--out-mask", required=True)
    s.add_argument("--out")
    s.add_argument("--mse-clamped", action="store_true")
    _add_common(s)

    s = sub.add_parser("aniso", help="attach anisotropy tensors to a mask")
    s.add_argument("--mask", required=True)
    s.add_argument("--replay")
    s.add_argument("--out-mask", required=True)
    _add_aniso(s)
    _add_common(s)

    s = sub.add_parser("pipeline", help="densify, anisotropy, re-inpaint, tonal")
    s.add_argument("--image", required=True)
    s.add_argument("--density", type=float, required=True)
    s.add_argument("--per-iter", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--aniso", action="store_true")
    s.add_argument("--workdir", required=True, help="checkpoint directory (resumable)")
    s.add_argument("--out")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--mse-clamped", action="store_true")
    _add_recon(s, "mixed")
    _add_aniso(s)
    _add_common(s)

    s = sub.add_parser("mse", help="mean squared error of two images")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--mse-clamped", action="store_true")
    _add_common(s)
    return p


# --- helpers -------------------------------------------------------------------

def _kernel(args):
    try:
        return parse_kernel(args.kernel, args.epsilon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _metric(args):
    return mse_clamped if getattr(args, "mse_clamped", False) else mse


def _check_recon(args, have_truth: bool):
    if args.min_neighbors < 1:
        raise UsageError("--min-neighbors must be >= 1")
    if args.order in ("1", "mixed") and args.min_neighbors < 3:
        raise UsageError("first-order reconstruction needs --min-neighbors >= 3")
    if args.order == "mixed" and not have_truth:
        raise UsageError("--order mixed needs the ground truth (--truth)")


def _is_diffusion(order: str) -> bool:
    return order in ("harmonic", "biharmonic")


def load_mask(path, image: GrayImage | None = None) -> InpaintingMask:
    """Mask with sidecar, or a binary mask PGM plus the damaged image."""
    if sidecar_path(path).exists() or image is None:
        mask = read_mask(path)
        if image is not None and image.dims != mask.dims:
            raise FormatError(f"mask {mask.dims} and image {image.dims} differ in size")
        return mask
    return mask_from_image(image.dims, read_pgm(path), image)


def reconstruct(mask, args, kernel, truth):
    """(image, replay or None) for any order, SPH or diffusion."""
    if _is_diffusion(args.order):
        return solve_diffusion(DiffusionProblem(mask, args.order)), None
    return inpaint(mask, kernel, args.order, args.min_neighbors, truth, args.strict_first_order)


# --- subcommands -----------------------------------------------------------------

def cmd_mask(args):
    img = read_pgm(args.image)
    if args.kind == "regular":
        if args.step < 1:
            raise UsageError("--step must be >= 1")
        mask = make_regular_mask(img.dims, args.step, img)
    elif args.kind == "random":
        if not 0 < args.density <= 1:
            raise UsageError("--density must lie in (0, 1]")
        mask = make_random_mask(img.dims, args.density, args.seed, img)
    else:
        if not args.mask_image:
            raise UsageError("--kind image needs --mask-image")
        mask = mask_from_image(img.dims, read_pgm(args.mask_image), img)
    write_mask(mask, args.out)
    return dict(points=len(mask), density=mask.density)


def cmd_inpaint(args):
    truth = read_pgm(args.truth) if args.truth else None
    _check_recon(args, truth is not None)
    if args.replay and _is_diffusion(args.order):
        raise UsageError("--replay applies to SPH orders only")
    kernel = _kernel(args)
    image = read_pgm(args.image) if args.image else None
    mask = load_mask(args.mask, image)
    if truth is not None and truth.dims != mask.dims:
        raise FormatError(f"truth {truth.dims} and mask {mask.dims} differ in size")
    u, replay = reconstruct(mask, args, kernel, truth)
    write_pgm(u, args.out)
    if args.replay:
        replay.save(args.replay)
    out = dict(points=len(mask), density=mask.density)
    if truth is not None:
        out = dict(mse=_metric(args)(truth, u), **out)
    return out


def _densify(img, args, kernel, progress=None):
    cfg = DensifyConfig(args.density, args.per_iter, args.min_neighbors, args.seed,
                        Order.MIXED if _is_diffusion(args.order) else args.order, kernel)
    recon = None
    if _is_diffusion(args.order):
        def recon(m):
            return solve_diffusion(DiffusionProblem(m, args.order))
    elif args.strict_first_order:
        def recon(m):
            return inpaint(m, kernel, args.order, args.min_neighbors, img, True)[0]
    return densify(img, cfg, recon, progress)


def cmd_densify(args):
    _check_recon(args, True)
    if not 0 < args.density <= 1:
        raise UsageError("--density must lie in (0, 1]")
    if args.per_iter < 1:
        raise UsageError("--per-iter must be >= 1")
    kernel = _kernel(args)
    img = read_pgm(args.image)
    res = _densify(img, args, kernel)
    write_mask(res.mask, args.out_mask)
    if args.history:
        res.write_history(args.history)
    u = res.reconstruction
    if args.replay:
        if _is_diffusion(args.order):
            raise UsageError("--replay applies to SPH orders only")
        u, replay = reconstruct(res.mask, args, kernel, img)
        replay.save(args.replay)
    if args.out:
        write_pgm(u, args.out)
    return dict(mse=_metric(args)(img, u), points=len(res.mask), density=res.mask.density,
                iterations=res.history[-1][0])


def _tonal(img, mask, replay, order, kernel, tol, max_iter):
    """(optimized mask, reconstruction, iterations, reconstruction before)."""
    if _is_diffusion(order):
        op = DiffusionOperator(DiffusionProblem(mask, order))
        before = op.apply(mask.gray)
        res = cgnr(op, img.data, tol, max_iter)
        return mask.with_gray(res.g), op.apply(res.g), res.iterations, before
    from .tonal import assemble_operator
    before = assemble_operator(replay, mask, kernel).apply(mask.gray)
    m2, u, res = tonal_optimize(img, mask, replay, kernel, tol, max_iter)
    return m2, u, res.iterations, before


def cmd_tonal(args):
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    if args.order == "sph" and not args.replay:
        raise UsageError("SPH tonal optimization needs --replay")
    img = read_pgm(args.image)
    mask = load_mask(args.mask)
    if img.dims != mask.dims:
        raise FormatError(f"image {img.dims} and mask {mask.dims} differ in size")
    replay = kernel = None
    if args.order == "sph":
        replay = ReplayLog.load(args.replay)
        kernel = _kernel(args) if args.kernel else replay.kernel
    m2, u, iters, before = _tonal(img, mask, replay, args.order, kernel, args.tol, args.max_iter)
    write_mask(m2, args.out_mask)
    if args.out:
        write_pgm(u, args.out)
    metric = _metric(args)
    return dict(mse=metric(img, u), mse_before=metric(img, before), points=len(mask),
                density=mask.density, iterations=iters)


def cmd_aniso(args):
    if args.window < 1 or args.window % 2 == 0:
        raise UsageError("--window must be a positive odd number")
    if args.max_ratio < 1:
        raise UsageError("--max-ratio must be >= 1")
    mask = load_mask(args.mask)
    replay = ReplayLog.load(args.replay) if args.replay else None
    m2, count = install_anisotropy(mask.isotropic(), replay, args.window, args.min_points,
                                   args.aniso_weights, args.max_ratio)
    write_mask(m2, args.out_mask)
    return dict(points=len(mask), density=mask.density, anisotropic=count)


# --- pipeline ------------------------------------------------------------------

def _fingerprint(args, img: GrayImage) -> str:
    keys = ("density", "per_iter", "seed", "kernel", "epsilon", "order", "min_neighbors",
            "strict_first_order", "aniso", "window", "min_points", "max_ratio", "aniso_weights", "tol")
    cfg = {k: getattr(args, k) for k in keys}
    h = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode())
    h.update(img.data.tobytes())
    return h.hexdigest()


def cmd_pipeline(args):
    _check_recon(args, True)
    if not 0 < args.density <= 1:
        raise UsageError("--density must lie in (0, 1]")
    if args.aniso and _is_diffusion(args.order):
        raise UsageError("--aniso applies to SPH orders only")
    kernel = _kernel(args)
    img = read_pgm(args.image)
    metric = _metric(args)
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    state_file = work / "pipeline.json"
    fp = _fingerprint(args, img)
    state = {"fingerprint": fp, "stages": {}}
    if state_file.exists():
        old = json.loads(state_file.read_text(encoding="utf-8"))
        if old.get("fingerprint") == fp:
            state = old
        else:
            log.info("workdir holds a different configuration; starting over")

    def done(stage, **info):
        state["stages"][stage] = info
        state_file.write_text(json.dumps(state, indent=1), encoding="utf-8")

    dmask = work / "densified.pgm"
    if "densify" in state["stages"]:
        mask = read_mask(dmask)
        iterations = state["stages"]["densify"]["iterations"]
    else:
        res = _densify(img, args, kernel)
        mask = res.mask
        iterations = res.history[-1][0]
        write_mask(mask, dmask)
        res.write_history(work / "history.csv")
        done("densify", iterations=iterations, mse=res.history[-1][2])
    out = dict(mse_densified=state["stages"]["densify"]["mse"])

    count = 0
    if args.aniso:
        amask = work / "aniso.pgm"
        if "aniso" in state["stages"]:
            mask = read_mask(amask)
            count = state["stages"]["aniso"]["anisotropic"]
        else:
            mask, count = install_anisotropy(mask, None, args.window, args.min_points,
                                             args.aniso_weights, args.max_ratio)
            write_mask(mask, amask)
            done("aniso", anisotropic=count)

    replay = None
    if not _is_diffusion(args.order):
        rpath = work / "replay.npz"
        if "inpaint" in state["stages"]:
            replay = ReplayLog.load(rpath)
        else:
            u, replay = reconstruct(mask, args, kernel, img)
            replay.save(rpath)
            done("inpaint", mse=metric(img, u))
        out["mse_inpainted"] = state["stages"]["inpaint"]["mse"]

    tmask = work / "tonal.pgm"
    if "tonal" in state["stages"]:
        final_mask = read_mask(tmask)
        u = _tonal_apply(final_mask, mask, replay, args, kernel)
        iters = state["stages"]["tonal"]["iterations"]
    else:
        final_mask, u, iters, _ = _tonal(img, mask, replay, args.order, kernel, args.tol, None)
        write_mask(final_mask, tmask)
        done("tonal", iterations=iters, mse=metric(img, u))
    if args.out:
        write_pgm(u, args.out)
    return dict(mse=metric(img, u), points=len(final_mask), density=final_mask.density,
                iterations=iterations, anisotropic=count, cgnr_iterations=iters, **out)


def _tonal_apply(final_mask, mask, replay, args, kernel):
    if _is_diffusion(args.order):
        return DiffusionOperator(DiffusionProblem(mask, args.order)).apply(final_mask.gray)
    from .tonal import assemble_operator
    return assemble_operator(replay, mask, kernel).apply(final_mask.gray)


def cmd_mse(args):
    a, b = read_pgm(args.a), read_pgm(args.b)
    return dict(mse=_metric(args)(a, b))


COMMANDS = {"mask": cmd_mask, "inpaint": cmd_inpaint, "densify": cmd_densify, "tonal": cmd_tonal,
            "aniso": cmd_aniso, "pipeline": cmd_pipeline, "mse": cmd_mse}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        set_threads(args.threads)
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sph-inpaint {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, ReplayMismatch, SolverError, OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"sph-inpaint {args.command}: {exc}", file=sys.stderr)
        return 2
    summary["wall_ms"] = int(round(1000 * (time.perf_counter() - t0)))
    emit(**summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
