"""Registered self-checks run by ``amdl verify``.

Checks resolve kernels through their modules at call time, so a patched
kernel is what gets checked.
"""

from __future__ import annotations

import fnmatch
import sys
import tempfile
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from amdl import experiments as ex
from amdl import linalg_core as lc
from amdl import snapshot
from amdl.gen_model import GenerativeParams, rng_for, sample_ground_truth, sample_orthogonal_dictionary
from amdl.image import assemble_patches, dct_dictionary, extract_patches


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class Check:
    name: str
    fn: Callable[[], tuple[bool, str]]
    slow: bool = False


REGISTRY: list[Check] = []


def check(name: str, slow: bool = False):
    def deco(fn):
        REGISTRY.append(Check(name, fn, slow))
        return fn

    return deco


def _spd(rng, n):
    g = rng.standard_normal((n, n))
    return g @ g.T + n * np.eye(n)


# --- module invariants ---


@check("linalg.hard_threshold_idempotent")
def _ht_idempotent():
    rng = rng_for(0, 100)
    worst = 0
    for _ in range(100):
        a = rng.standard_normal((6, 9))
        z = float(rng.random())
        once = lc.hard_threshold(a, z)
        worst += int(not np.array_equal(lc.hard_threshold(once, z), once))
        worst += int(np.any(np.abs(once) > np.abs(a)) or np.any(once * a < 0))
    return worst == 0, f"violations={worst}"


@check("linalg.polar_fixed_point")
def _polar_fixed():
    worst = 0.0
    for n in (2, 8, 32):
        for s in range(50):
            q = sample_orthogonal_dictionary(n, 1000 * n + s)
            worst = max(worst, float(np.linalg.norm(lc.polar(q) - q)))
    return worst <= 1e-10, f"max_err={worst:.3e}"


@check("linalg.procrustes_optimality")
def _procrustes():
    rng = rng_for(0, 101)
    a = rng.standard_normal((6, 6))
    best = np.trace(lc.polar(a).T @ a)
    slack = min(best - np.trace(sample_orthogonal_dictionary(6, s).T @ a) for s in range(100))
    scale_err = max(float(np.linalg.norm(lc.polar(c * a) - lc.polar(a))) for c in (1e-3, 0.5, 7.0, 1e4))
    return slack >= -1e-10 and scale_err <= 1e-10, f"min_gap={slack:.3e} scale_err={scale_err:.3e}"


@check("linalg.cholesky_reconstruct")
def _chol_rec():
    rng = rng_for(0, 102)
    worst = 0.0
    for n in (1, 2, 5, 16, 64, 128):
        a = _spd(rng, n)
        low = lc.cholesky(a)
        worst = max(worst, float(np.linalg.norm(low @ low.T - a) / np.linalg.norm(a)))
    return worst <= 1e-12, f"max_rel_err={worst:.3e}"


@check("linalg.sherman_morrison_composed")
def _sm():
    rng = rng_for(0, 103)
    n = 40
    gram = _spd(rng, n)
    inv = lc.spd_inverse(gram)
    for _ in range(100):
        y = rng.standard_normal(n)
        inv, _ = lc.sherman_morrison_update(inv, y)
        gram = gram + np.outer(y, y)
    ref = lc.spd_inverse(gram)
    rel = float(np.linalg.norm(inv - ref) / np.linalg.norm(ref))
    return rel <= 1e-6, f"rel_err={rel:.3e}"


@check("linalg.chol_downdate_oracle")
def _downdate():
    rng = rng_for(0, 104)
    worst = 0.0
    for i in range(200):
        n = 1 + i % 12
        low = np.linalg.cholesky(_spd(rng, n))
        smin = np.linalg.svd(low, compute_uv=False)[-1]
        v = rng.standard_normal(n)
        v *= 0.5 * smin * rng.random() / np.linalg.norm(v)
        got = lc.chol_downdate(low, v)
        ref = np.linalg.cholesky(low @ low.T - np.outer(v, v))
        worst = max(worst, float(np.linalg.norm(got - ref) / np.linalg.norm(ref)))
    return worst <= 1e-9, f"max_rel_err={worst:.3e}"


@check("gen.determinism_and_invariants")
def _gen():
    gp = GenerativeParams(n=12, p=300, theta=0.2, dict_kind="complete", kappa_hat=3.0, seed=5)
    a, b = sample_ground_truth(gp), sample_ground_truth(gp)
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("dictionary", "code", "signals"))
    s = np.linalg.svd(a.dictionary, compute_uv=False)
    nz = np.abs(a.code[a.code != 0])
    ok = same and abs(s[0] - 1) <= 1e-8 and abs(s[0] / s[-1] - 3) <= 1e-8 and np.all(nz >= gp.gamma)
    return bool(ok), f"bitwise_equal={same} sigma1={s[0]:.12f} kappa={s[0] / s[-1]:.12f}"


@check("image.patch_roundtrip_and_dct")
def _image():
    rng = rng_for(0, 105)
    ok = True
    for h, w in ((10, 10), (20, 30), (50, 50)):
        img = rng.random((h, w))
        ok &= np.array_equal(assemble_patches(extract_patches(img, 10, 10)), img)
    defect = max(lc.orthogonality_defect(dct_dictionary(m, m)) for m in range(1, 17))
    return bool(ok and defect <= 1e-10), f"roundtrip={ok} max_dct_defect={defect:.3e}"


@check("snapshot.bitwise_roundtrip")
def _snap():
    rng = rng_for(0, 106)
    bad = 0
    for i in range(100):
        m = rng.standard_normal((1 + i % 7, 1 + i % 5))
        m.flat[0] = -0.0
        m.flat[-1] = 5e-324
        back, _ = snapshot.loads(snapshot.dumps(m))
        bad += int(back.tobytes() != m.tobytes())
    return bad == 0, f"mismatches={bad}"


# --- acceptance experiments ---


@check("acceptance.01.fixed_point")
def _a1():
    r = ex.fixed_point()
    ok = r["code_err"] <= 1e-10 and r["dict_err"] <= 1e-10 and r["seconds"] < 1.0
    return ok, f"code_err={r['code_err']:.3e} dict_err={r['dict_err']:.3e} seconds={r['seconds']:.3f}"


@check("acceptance.02.contraction")
def _a2():
    runs, secs = ex.contraction_runs()
    good = sum(r["contraction_ok"] for r in runs)
    worst = max(r["max_ratio"] for r in runs)
    return good >= 18 and secs < 10, f"seeds_ok={good}/20 worst_ratio={worst:.3f} seconds={secs:.2f}"


@check("acceptance.03.support_recovery")
def _a3():
    runs, _ = ex.contraction_runs()
    good = sum(r["support_recovered"] for r in runs)
    return good >= 18, f"seeds_ok={good}/20"


@check("acceptance.04.warmup_recovery")
def _a4():
    runs, secs = ex.warmup_recovery_runs()
    good = sum(r["recovered"] for r in runs)
    init_ok = all(r["initial_mismatch"] == r["nnz"] for r in runs)
    return good >= 8 and init_ok and secs < 1, f"seeds_ok={good}/10 initial_mismatch_is_nnz={init_ok} seconds={secs:.3f}"


@check("acceptance.05.code_spectrum")
def _a5():
    ratios, secs = ex.code_spectrum_ratios()
    good = sum(hi <= 1.1 and lo >= 0.9 for hi, lo in ratios)
    shown = " ".join(f"({hi:.4f},{lo:.4f})" for hi, lo in ratios)
    return good >= 9 and secs < 10, f"seeds_ok={good}/10 ratios(max,min)={shown}"


@check("acceptance.06.whitening_orthogonality")
def _a6():
    worst = max(ex.whitening_defects())
    return worst <= 1e-9, f"max_defect={worst:.3e}"


@check("acceptance.07.preconditioner_oracle")
def _a7():
    errs, secs = ex.preconditioner_oracle()
    worst = max(max(e[1], e[2]) for e in errs)
    return worst <= 1e-6 and secs < 5, f"max_rel_err={worst:.3e} seconds={secs:.2f}"


@check("acceptance.08.minibatch_floor", slow=True)
def _a8():
    means, secs = ex.minibatch_floor()
    ratio = means[50000] / means[12500]
    return ratio <= 0.7 and secs < 120, f"ratio={ratio:.3f} means={means} seconds={secs:.1f}"


@check("acceptance.09.online_floor", slow=True)
def _a9():
    early, late, secs = ex.online_floor()
    ratio = late / early
    return ratio <= 0.8 and secs < 120, f"ratio={ratio:.3f} early={early:.4f} late={late:.4f} seconds={secs:.1f}"


@check("acceptance.10.omp")
def _a10():
    fails, orth = ex.omp_checks()
    return fails == 0 and orth <= 1e-9, f"topk_failures={fails} max_residual_corr={orth:.3e}"


@check("acceptance.11.image_pipeline")
def _a11():
    full, gains = ex.image_checks()
    better = sum(rec > bad for bad, rec in gains)
    return all(v == 200.0 for v in full) and better >= 9, f"dct_full_cap={all(v == 200.0 for v in full)} improved={better}/10"


@check("acceptance.12.cli_determinism")
def _a12():
    from amdl.cli import determinism_probe

    with tempfile.TemporaryDirectory() as tmp:
        diffs = determinism_probe(tmp)
    return not diffs, "identical" if not diffs else "differs: " + ", ".join(diffs)


def run_checks(
    only: list[str] | None = None,
    quick: bool = False,
    out: TextIO = sys.stdout,
) -> list[CheckResult]:
    """Run matching checks, printing one PASS/FAIL line each."""
    results = []
    for c in REGISTRY:
        if only and not any(fnmatch.fnmatch(c.name, pat) for pat in only):
            continue
        if quick and c.slow:
            continue
        try:
            passed, detail = c.fn()
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        res = CheckResult(c.name, bool(passed), detail)
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name} {res.detail}", file=out, flush=True)
        results.append(res)
    return results

