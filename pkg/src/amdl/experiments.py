"""Seeded desk-scale experiments behind the acceptance checks.

Each function runs one experiment and returns its measured quantities; the
pass/fail thresholds live with the callers (``amdl verify`` and the test
suite).
"""

from __future__ import annotations

import math
import time

import numpy as np

from amdl import linalg_core as lc
from amdl.cdl import CdlOptions, project_init, run_cdl
from amdl.gen_model import (
    GenerativeParams,
    perturb_dictionary,
    rng_for,
    sample_code,
    sample_complete_dictionary,
    sample_ground_truth,
)
from amdl.image import corrupt, dct_dictionary, psnr, reconstruct, sparse_patch_image
from amdl.odl import OdlOptions, WarmupOptions, odl_step, run_odl, run_odl_with_warmup
from amdl.online import OnlineOptions, init_state, matrix_stream, run_online, update_preconditioner
from amdl.sparse_coding import omp
from amdl.trace import aligned_distance


def contraction_holds(errors, ratio: float = 0.5, floor: float = 1e-8) -> bool:
    """Every ``e[t] / e[t-1] <= ratio`` while ``e[t-1]`` is still at least ``floor``."""
    return all(errors[t] <= ratio * errors[t - 1] for t in range(1, len(errors)) if errors[t - 1] >= floor)


def fixed_point(n=50, p=5000, theta=0.1, seed=0):
    gt = sample_ground_truth(GenerativeParams(n=n, p=p, theta=theta, seed=seed))
    t0 = time.perf_counter()
    x, d1 = odl_step(gt.signals, gt.dictionary, 0.5)
    seconds = time.perf_counter() - t0
    return {
        "code_err": float(np.max(np.abs(x - gt.code))),
        "dict_err": float(np.linalg.norm(d1 - gt.dictionary)),
        "seconds": seconds,
    }


def contraction_runs(seeds=range(20), n=20, theta=0.1, delta=0.1, max_iters=100):
    """Full-batch runs from a ``delta``-perturbed orthogonal start with ``p = ceil(n / theta^2)``."""
    p = math.ceil(n / theta**2)
    out = []
    t0 = time.perf_counter()
    for seed in seeds:
        gt = sample_ground_truth(GenerativeParams(n=n, p=p, theta=theta, seed=seed))
        d0 = perturb_dictionary(gt.dictionary, delta, "orthogonal", seed)
        res = run_odl(gt.signals, d0, OdlOptions(zeta=0.5, max_iters=max_iters), gt)
        errs = [r.dict_err_fro for r in res.traces] + [float(np.linalg.norm(res.dictionary - gt.dictionary))]
        out.append(
            {
                "seed": seed,
                "errors": errs,
                "contraction_ok": contraction_holds(errs),
                "max_ratio": max((errs[t] / errs[t - 1] for t in range(1, len(errs)) if errs[t - 1] >= 1e-8), default=0.0),
                "support_recovered": res.traces[0].support_mismatch == 0,
                "code_err_norm": [r.code_err_norm for r in res.traces],
            }
        )
    return out, time.perf_counter() - t0


def warmup_recovery_runs(seeds=range(10), n=5, p=100, theta=0.3, main_iters=50):
    """Warm-up from the identity followed by the main phase on a small problem."""
    out = []
    t0 = time.perf_counter()
    opts = OdlOptions(zeta=0.5, max_iters=main_iters, warmup=WarmupOptions())
    for seed in seeds:
        gt = sample_ground_truth(GenerativeParams(n=n, p=p, theta=theta, seed=seed))
        wres, res = run_odl_with_warmup(gt.signals, opts, gt)
        hit = next(
            (i for i, r in enumerate(res.traces) if r.support_mismatch == 0 and r.code_err_fro < 1e-6),
            None,
        )
        stays = hit is not None and all(r.support_mismatch == 0 for r in res.traces[hit:])
        out.append(
            {
                "seed": seed,
                "nnz": int(np.count_nonzero(gt.code)),
                "initial_mismatch": wres.traces[0].support_mismatch if wres.traces else None,
                "recovered_at": hit,
                "recovered": stays,
                "warmup_iters": len(wres.traces),
                "final_aligned": res.traces[-1].dict_err_aligned,
            }
        )
    return out, time.perf_counter() - t0


def code_spectrum_ratios(seeds=range(10), n=50, theta=0.1, p=5000):
    """Extreme singular values of sampled codes divided by ``sqrt(p * theta) * sigma``."""
    out = []
    t0 = time.perf_counter()
    for seed in seeds:
        x = sample_code(GenerativeParams(n=n, p=p, theta=theta, seed=seed))
        s = np.linalg.svd(x, compute_uv=False)
        r = math.sqrt(p * theta)
        out.append((float(s[0] / r), float(s[-1] / r)))
    return out, time.perf_counter() - t0


def whitening_defects(count=20, seed=0):
    """Orthogonality defect of ``L((A A^T)^{-1})^T A`` over random complete ``A``."""
    sizes = (8, 32, 64)
    kappas = (1.0, 2.0, 5.0)
    defects = []
    for i in range(count):
        n = sizes[i % len(sizes)]
        kappa = kappas[(i // len(sizes)) % len(kappas)]
        a = sample_complete_dictionary(n, kappa, seed + i)
        defects.append(lc.orthogonality_defect(project_init(a)))
    return defects


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def preconditioner_oracle(n=30, p1=200, updates=500, every=50, theta_sigma2=0.1, seed=0):
    """Rank-one preconditioner updates compared against full recomputation."""
    rng = rng_for(seed, 21)
    data = rng.standard_normal((n, p1 + updates))
    t0 = time.perf_counter()
    state = init_state(data[:, :p1], theta_sigma2)
    errs = []
    for t in range(updates):
        state = update_preconditioner(state, data[:, p1 + t])
        if (t + 1) % every == 0:
            ref = init_state(data[:, : p1 + t + 1], theta_sigma2)
            errs.append((t + 1, _rel(state.l_factor, ref.l_factor), _rel(state.z_inv, ref.z_inv)))
    return errs, time.perf_counter() - t0


def minibatch_floor(ps=(12500, 50000), seeds=range(10), n=20, theta=0.1, kappa=2.0, batch=2000, delta=0.05, max_iters=30):
    """Mean final aligned error of mini-batch runs for each sample size."""
    means = {}
    t0 = time.perf_counter()
    for p in ps:
        finals = []
        for seed in seeds:
            gp = GenerativeParams(n=n, p=p, theta=theta, kappa_hat=kappa, dict_kind="complete", seed=seed)
            gt = sample_ground_truth(gp)
            a0 = perturb_dictionary(gt.dictionary, delta, "general", seed)
            opts = CdlOptions(zeta=0.5, batch_size=batch, scale=gp.scale, max_iters=max_iters, sampling_seed=seed)
            res = run_cdl(gt.signals, a0, opts, gt)
            finals.append(aligned_distance(res.dictionary, gt.dictionary).distance)
        means[p] = float(np.mean(finals))
    return means, time.perf_counter() - t0


def online_floor(seeds=range(5), n=15, theta=0.1, kappa=1.5, p1=2000, p2=1500, arrivals=6000, delta=0.05):
    """Mean aligned error over the first and last thousand arrivals of online runs."""
    early, late = [], []
    t0 = time.perf_counter()
    for seed in seeds:
        gp = GenerativeParams(n=n, p=p1 + p2 + arrivals, theta=theta, kappa_hat=kappa, dict_kind="complete", seed=seed)
        gt = sample_ground_truth(gp)
        a0 = perturb_dictionary(gt.dictionary, delta, "general", seed)
        opts = OnlineOptions(zeta=0.5, p1=p1, p2=p2, max_iters=arrivals, theta_sigma2=theta * gp.sigma**2)
        res = run_online(matrix_stream(gt.signals), a0, opts, gt)
        errs = np.array([r.dict_err_aligned for r in res.traces])
        early.append(errs[:1000].mean())
        late.append(errs[arrivals - 1000 :].mean())
    return float(np.mean(early)), float(np.mean(late)), time.perf_counter() - t0


def omp_checks(instances=1000, seed=0):
    """Top-k agreement on orthogonal dictionaries and residual orthogonality."""
    rng = rng_for(seed, 31)
    topk_fail = 0
    worst_orth = 0.0
    for i in range(instances):
        n = int(rng.integers(1, 9))
        q = np.linalg.qr(rng.standard_normal((n, n)))[0]
        y = rng.standard_normal(n)
        k = int(rng.integers(1, n + 1))
        code = omp(q, y, k, residual_tol=0.0)
        c = q.T @ y
        top = np.sort(np.argsort(-np.abs(c), kind="stable")[:k])
        if not (np.array_equal(code.indices, top) and np.allclose(code.values, c[top], atol=1e-12)):
            topk_fail += 1
        # residual orthogonality on a general dictionary
        m = int(rng.integers(4, 17))
        d = rng.standard_normal((m, m + 4))
        y2 = rng.standard_normal(m)
        k2 = int(rng.integers(1, m + 1))
        code2 = omp(d, y2, k2, residual_tol=0.0)
        res = y2 - d[:, code2.indices] @ code2.values
        worst_orth = max(worst_orth, float(np.max(np.abs(d[:, code2.indices].T @ res)) / np.linalg.norm(y2)))
    return topk_fail, worst_orth


def image_checks(seeds=range(10), k=35, patch=(10, 10), shape=(50, 50)):
    """Full-basis DCT PSNR and masked-recovery gains on synthetic sparse images."""
    dct = dct_dictionary(*patch)
    full, gains = [], []
    for seed in seeds:
        img = sparse_patch_image(shape, patch, 5, seed)
        natural = np.clip(rng_for(seed, 41).random(shape), 0, 1)
        full.append(psnr(reconstruct(natural, dct, patch[0] * patch[1], patch), natural))
        bad, mask = corrupt(img, 0.5, seed)
        rec = reconstruct(bad, dct, k, patch, mask)
        gains.append((psnr(bad, img), psnr(rec, img)))
    return full, gains
