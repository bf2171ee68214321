"""Command-line entry point: ``amdl <subcommand>``.

Exit codes are 0 for success or convergence, 2 when a solver stops at its
iteration limit, and 1 for any error. Errors print one line on standard
error of the form ``amdl: error kind=<Name> msg=<text>``.
"""

from __future__ import annotations

import argparse
import csv
import filecmp
import io
import math
import sys
from contextlib import ExitStack, redirect_stdout
from pathlib import Path

import numpy as np

from amdl import snapshot
from amdl.cdl import CdlOptions, build_preconditioner, default_scale, run_cdl
from amdl.config import SOLVER_REQUIRED, SYNTH_REQUIRED, ExperimentConfig, load_config
from amdl.errors import AmdlError, ConfigError, FormatError, SolverError
from amdl.gen_model import GenerativeParams, GroundTruth, perturb_dictionary, sample_ground_truth
from amdl.image import (
    corrupt,
    dct_dictionary,
    psnr,
    read_mask_pgm,
    read_pgm,
    reconstruct,
    sparse_patch_image,
    write_mask_pgm,
    write_pgm,
)
from amdl.odl import OdlOptions, WarmupOptions, run_odl, run_odl_with_warmup
from amdl.online import OnlineOptions, matrix_stream, read_stream, run_online, write_stream
from amdl.sparse_coding import SparseCode, code_with_preconditioner, omp
from amdl.trace import TraceWriter

EXIT_OK, EXIT_ERROR, EXIT_LIMIT = 0, 1, 2


# --- synth ---


def _params(cfg: ExperimentConfig, p: int | None = None) -> GenerativeParams:
    cfg.require(*SYNTH_REQUIRED if p is None else ("n", "theta"))
    kw = {k: cfg.get(k) for k in ("gamma", "sigma", "kappa_hat", "dict_kind", "value_dist") if k in cfg}
    return GenerativeParams(
        n=cfg.get("n"), p=cfg.get("p") if p is None else p, theta=cfg.get("theta"), seed=cfg.get("seed", 0), **kw
    )


def _resolve(cfg: ExperimentConfig, value: str) -> Path:
    """Relative paths in a config are taken relative to the config file."""
    path = Path(value)
    if path.is_absolute() or value == "-":
        return path
    return Path(cfg.source).parent / path


def _output_dir(cfg: ExperimentConfig) -> Path:
    out = _resolve(cfg, cfg.get("output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_ground_truth(out: Path, gt: GroundTruth, dict_kind: str, with_stream: bool = False) -> None:
    kind = "orthogonal" if dict_kind == "orthogonal" else "general"
    snapshot.write_snapshot(out / "dictionary.snap", gt.dictionary, kind)
    snapshot.write_snapshot(out / "code.snap", gt.code)
    snapshot.write_snapshot(out / "signals.snap", gt.signals)
    with open(out / "support.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("row", "col"))
        w.writerows(gt.support_pairs())
    if with_stream:
        with open(out / "signals.bin", "wb") as fh:
            write_stream(fh, matrix_stream(gt.signals))


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    gp = _params(cfg)
    out = Path(args.output_dir) if args.output_dir else _output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_ground_truth(out, sample_ground_truth(gp), gp.dict_kind, cfg.get("write_stream", False))
    print(f"synth n={gp.n} p={gp.p} theta={gp.theta} seed={gp.seed} output_dir={out}")
    return EXIT_OK


# --- run ---


def _load_truth(cfg: ExperimentConfig) -> GroundTruth | None:
    if "truth_dir" not in cfg or not cfg.get("use_truth", True):
        return None
    root = _resolve(cfg, cfg.get("truth_dir"))
    d, _ = snapshot.read_snapshot(root / "dictionary.snap")
    x, _ = snapshot.read_snapshot(root / "code.snap")
    y_path = root / "signals.snap"
    y = snapshot.read_snapshot(y_path)[0] if y_path.exists() else d @ x
    return GroundTruth(d, x, y)


def _initial(cfg: ExperimentConfig, solver: str, n: int, truth: GroundTruth | None) -> np.ndarray:
    mode = cfg.get("init", "perturb" if truth is not None else "identity")
    if mode == "identity":
        return np.eye(n)
    if mode == "file":
        cfg.require("init_path")
        a0, _ = snapshot.read_snapshot(_resolve(cfg, cfg.get("init_path")))
        if a0.shape != (n, n):
            raise ConfigError(f"{cfg.source}: init_path holds a {a0.shape[0]}x{a0.shape[1]} matrix, expected {n}x{n}")
        return a0
    if truth is None:
        raise ConfigError(f"{cfg.source}: init = perturb needs a ground truth")
    kind = "orthogonal" if solver == "odl" else "general"
    return perturb_dictionary(truth.dictionary, cfg.get("init_delta", 0.1), kind, cfg.get("seed", 0))


def _data(cfg: ExperimentConfig, solver: str, stack: ExitStack):
    """Return ``(signals_or_stream, truth, theta_sigma2_hint)`` for the configured source."""
    truth = _load_truth(cfg)
    if "stream" in cfg:
        if solver != "online":
            raise ConfigError(f"{cfg.source}: stream input is only read by the online solver")
        where = cfg.get("stream")
        fh = sys.stdin.buffer if where == "-" else stack.enter_context(open(_resolve(cfg, where), "rb"))
        return read_stream(fh, cfg.get("n")), truth, None
    if "signals" in cfg:
        y, _ = snapshot.read_snapshot(_resolve(cfg, cfg.get("signals")))
        return y, truth, None
    if "truth_dir" in cfg:
        y_path = _resolve(cfg, cfg.get("truth_dir")) / "signals.snap"
        return snapshot.read_snapshot(y_path)[0], truth, None
    p = None
    if solver == "online" and "p" not in cfg:
        p = cfg.get("p1") + cfg.get("p2") + cfg.get("max_iters")
    gp = _params(cfg, p)
    gt = sample_ground_truth(gp)
    return gt.signals, gt if cfg.get("use_truth", True) else None, gp


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg.require("solver")
    solver = cfg.get("solver")
    cfg.require(*SOLVER_REQUIRED[solver])
    out = _output_dir(cfg)
    trace_path = out / cfg.get("trace", "trace.csv")
    snap_path = out / cfg.get("snapshot", "dictionary.snap")
    zeta = cfg.get("zeta", cfg.get("gamma", 1.0) / 2)
    with ExitStack() as stack:
        data, truth, gp = _data(cfg, solver, stack)
        if isinstance(data, np.ndarray):
            n = data.shape[0]
        elif truth is not None:
            n = truth.dictionary.shape[0]
        else:
            cfg.require("n")
            n = cfg.get("n")
        extra = ("precond_err",) if solver == "cdl" else ()
        writer = TraceWriter(stack.enter_context(open(trace_path, "w", newline="")), extra)
        kind = "general"
        if solver in ("odl", "odl+warmup"):
            kind = "orthogonal"
            wopts = None
            if solver == "odl+warmup":
                wopts = WarmupOptions(
                    zeta0=cfg.get("zeta0"), beta=cfg.get("beta", 0.98), max_warmup_iters=cfg.get("max_warmup_iters", 200)
                )
            opts = OdlOptions(zeta=zeta, max_iters=cfg.get("max_iters", 100), stop_tol=cfg.get("stop_tol", 1e-12), warmup=wopts)
            if wopts is None:
                res = run_odl(data, _initial(cfg, solver, n, truth), opts, truth, writer.write)
            else:
                _, res = run_odl_with_warmup(data, opts, truth, writer.write)
            dictionary, converged, iters = res.dictionary, res.converged, res.iterations
        elif solver == "cdl":
            scale = cfg.get("scale")
            if scale is None:
                scale = gp.scale if gp is not None else default_scale(data)
            opts = CdlOptions(
                zeta=zeta,
                batch_size=cfg.get("batch_size"),
                scale=scale,
                max_iters=cfg.get("max_iters", 50),
                sampling_seed=cfg.get("sampling_seed", cfg.get("seed", 0)),
                stop_tol=cfg.get("stop_tol", 0.0),
            )
            res = run_cdl(data, _initial(cfg, solver, n, truth), opts, truth, writer.write)
            dictionary, converged, iters = res.dictionary, res.converged, res.iterations
        else:
            ts2 = cfg.get("theta_sigma2")
            if ts2 is None and gp is not None:
                ts2 = gp.theta * gp.sigma**2
            opts = OnlineOptions(
                zeta=zeta,
                p1=cfg.get("p1"),
                p2=cfg.get("p2"),
                max_iters=cfg.get("max_iters"),
                theta_sigma2=ts2,
                refresh_every=cfg.get("refresh_every"),
            )
            stream = matrix_stream(data) if isinstance(data, np.ndarray) else data
            res = run_online(stream, _initial(cfg, solver, n, truth), opts, truth, writer.write)
            # the online solver has no convergence test; consuming max_iters arrivals is success
            dictionary, converged, iters = res.dictionary, True, res.iterations
    snapshot.write_snapshot(snap_path, dictionary, kind)
    status = "iteration_limit" if not converged else ("completed" if solver == "online" else "converged")
    print(f"run solver={solver} iterations={iters} status={status} trace={trace_path} snapshot={snap_path}")
    return EXIT_OK if converged else EXIT_LIMIT


# --- code ---


def cmd_code(args) -> int:
    d, _ = snapshot.read_snapshot(args.dict)
    y, _ = snapshot.read_snapshot(args.signals)
    if y.shape[0] != d.shape[0]:
        raise FormatError(f"signals have {y.shape[0]} rows but atoms have {d.shape[0]}")
    codes: list[SparseCode] = []
    if args.method == "omp":
        if args.k is None:
            raise ConfigError("--method omp needs --k")
        codes = [omp(d, y[:, j], args.k) for j in range(y.shape[1])]
    else:
        if args.zeta is None:
            raise ConfigError("--method threshold needs --zeta")
        if args.precondition:
            p_mat, _ = build_preconditioner(y, args.scale if args.scale else default_scale(y))
        else:
            p_mat = np.eye(d.shape[0])
        codes = [code_with_preconditioner(d, p_mat, y[:, j], args.zeta) for j in range(y.shape[1])]
    with ExitStack() as stack:
        fh = sys.stdout if args.out in (None, "-") else stack.enter_context(open(args.out, "w", newline=""))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("signal_index", "atom", "coefficient"))
        for j, c in enumerate(codes):
            for i, v in zip(c.indices, c.values):
                w.writerow((j, int(i), repr(float(v))))
    return EXIT_OK


# --- image tasks ---


def _patch_shape(text: str | None, atom_len: int) -> tuple[int, int]:
    if text is None:
        side = math.isqrt(atom_len)
        if side * side != atom_len:
            raise ConfigError(f"atoms of length {atom_len} need an explicit --patch HxW")
        return side, side
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--patch expects HxW, got {text!r}") from None
    return h, w


def _image_dictionary(source: str, patch: str | None) -> tuple[np.ndarray, tuple[int, int]]:
    if source == "dct":
        shape = _patch_shape(patch or "10x10", 0)
        return dct_dictionary(*shape), shape
    d, _ = snapshot.read_snapshot(source)
    return d, _patch_shape(patch, d.shape[0])


def cmd_reconstruct(args) -> int:
    img = read_pgm(args.input)
    d, shape = _image_dictionary(args.dict, args.patch)
    rec = reconstruct(img, d, args.k, shape, subtract_dc=args.subtract_dc)
    if args.output:
        write_pgm(args.output, rec, args.maxval)
    print(f"input={args.input} dict={args.dict} k={args.k} psnr_db={psnr(rec, img):.6f}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    img = read_pgm(args.input)
    d, shape = _image_dictionary(args.dict, args.patch)
    if args.mask:
        mask = read_mask_pgm(args.mask)
        if mask.shape != img.shape:
            raise FormatError(f"mask is {mask.shape[0]}x{mask.shape[1]}, image is {img.shape[0]}x{img.shape[1]}")
        bad = np.where(mask, img, 0.0)
    else:
        bad, mask = corrupt(img, args.missing, args.seed)
    rec = reconstruct(bad, d, args.k, shape, mask, subtract_dc=args.subtract_dc)
    if args.output:
        write_pgm(args.output, rec, args.maxval)
    if args.mask_out:
        write_mask_pgm(args.mask_out, mask)
    if args.corrupted_out:
        write_pgm(args.corrupted_out, bad, args.maxval)
    print(
        f"input={args.input} dict={args.dict} k={args.k} psnr_db={psnr(rec, img):.6f} "
        f"corrupted_psnr_db={psnr(bad, img):.6f}"
    )
    return EXIT_OK


# --- verify ---


def cmd_verify(args) -> int:
    from amdl.verify import run_checks

    results = run_checks(args.only or None, args.quick)
    failed = [r.name for r in results if not r.passed]
    print(f"summary checks={len(results)} failed={len(failed)}")
    return EXIT_ERROR if failed or not results else EXIT_OK


# --- determinism probe ---

_PROBE_CONFIG = """\
seed = 7
n = 5
p = 100
theta = 0.3
solver = odl+warmup
max_iters = 50
"""


def _strip_elapsed(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    col = rows[0].index("elapsed_ms")
    return [r[:col] + r[col + 1 :] for r in rows]


def determinism_probe(tmp: str | Path) -> list[str]:
    """Run synth, run, code and denoise twice each; return the names of outputs that differ."""
    tmp = Path(tmp)
    img_path = tmp / "probe.pgm"
    write_pgm(img_path, sparse_patch_image((30, 30), (10, 10), 5, 3))
    names = []
    for rep in ("a", "b"):
        root = tmp / rep
        root.mkdir()
        (root / "exp.cfg").write_text(_PROBE_CONFIG + "output_dir = out\n")
        with redirect_stdout(io.StringIO()):
            _probe_round(root, img_path)
        names = sorted(p.name for p in (root / "out").iterdir())
    return _compare(tmp, names)


def _probe_round(root: Path, img_path: Path) -> None:
    for argv in (
        ["synth", str(root / "exp.cfg")],
        ["run", str(root / "exp.cfg")],
        ["code", "--dict", str(root / "out" / "dictionary.snap"), "--signals", str(root / "out" / "signals.snap"),
         "--method", "omp", "--k", "2", "--out", str(root / "out" / "codes.csv")],
        ["denoise", "--input", str(img_path), "--dict", "dct", "--k", "5", "--missing", "0.5", "--seed", "1",
         "--output", str(root / "out" / "denoised.pgm")],
    ):
        if main(argv) not in (EXIT_OK, EXIT_LIMIT):
            raise RuntimeError(f"probe step failed: amdl {argv[0]}")


def _compare(tmp: Path, names: list[str]) -> list[str]:
    diffs = []
    for name in names:
        a, b = tmp / "a" / "out" / name, tmp / "b" / "out" / name
        if not b.exists():
            diffs.append(name)
        elif name == "trace.csv":
            if _strip_elapsed(a) != _strip_elapsed(b):
                diffs.append(name)
        elif not filecmp.cmp(a, b, shallow=False):
            diffs.append(name)
    return diffs


# --- argument parsing ---


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amdl", description="Alternating-minimization dictionary learning toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="sample a ground truth from a config and write it out")
    s.add_argument("config")
    s.add_argument("--output-dir", help="override the config's output_dir")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", help="run the configured solver; writes a trace CSV and a snapshot")
    s.add_argument("config")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("code", help="sparse-code signals against a dictionary snapshot")
    s.add_argument("--dict", required=True, help="dictionary snapshot")
    s.add_argument("--signals", required=True, help="signals snapshot (one signal per column)")
    s.add_argument("--method", choices=("omp", "threshold"), default="omp")
    s.add_argument("--k", type=int, help="atom budget for omp")
    s.add_argument("--zeta", type=float, help="threshold for the threshold method")
    s.add_argument("--precondition", action="store_true", help="whiten signals and atoms before thresholding")
    s.add_argument("--scale", type=float, help="preconditioner scale (default: average signal energy per row)")
    s.add_argument("--out", help="CSV destination (default: stdout)")
    s.set_defaults(func=cmd_code)

    def image_args(s):
        s.add_argument("--input", required=True, help="clean input PGM")
        s.add_argument("--dict", default="dct", help="dictionary snapshot path or 'dct'")
        s.add_argument("--k", type=int, required=True, help="atoms per patch")
        s.add_argument("--patch", help="patch shape HxW (default: square from the atom length, 10x10 for dct)")
        s.add_argument("--output", help="reconstructed PGM")
        s.add_argument("--maxval", type=int, default=255, help="maxval of written PGMs")
        s.add_argument("--subtract-dc", action="store_true", help="code each patch after removing its mean")

    s = sub.add_parser("reconstruct", help="patchwise sparse approximation of an image")
    image_args(s)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("denoise", help="recover an image with missing pixels")
    image_args(s)
    s.add_argument("--missing", type=float, default=0.5, help="fraction of pixels removed")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mask", help="observed-pixel mask PGM to use instead of random removal")
    s.add_argument("--mask-out", help="write the observed-pixel mask here")
    s.add_argument("--corrupted-out", help="write the corrupted image here")
    s.set_defaults(func=cmd_denoise)

    s = sub.add_parser("verify", help="run the built-in invariant and acceptance checks")
    s.add_argument("--quick", action="store_true", help="skip the slow experiments")
    s.add_argument("--only", action="append", metavar="GLOB", help="run checks matching this pattern")
    s.set_defaults(func=cmd_verify)
    return ap


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        cause = exc.__cause__ or exc
        print(
            f"amdl: error kind={type(cause).__name__} iteration={exc.iteration} msg={_one_line(cause)}",
            file=sys.stderr,
        )
    except (AmdlError, OSError, ValueError) as exc:
        print(f"amdl: error kind={type(exc).__name__} msg={_one_line(exc)}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
