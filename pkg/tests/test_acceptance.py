"""Acceptance suite: eight end-to-end criteria, each with a runtime budget.

Run with ``pytest tests/test_acceptance.py -s`` to see one PASS/FAIL line per
criterion as it finishes (a summary is also printed at the end of any pytest
run that includes this file), or directly with ``python tests/test_acceptance.py``.
"""
import hashlib
import json
import os
import subprocess
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from latentsurv.cohort import Cohort, SimConfig, simulate_cohort, split_cohort  # noqa: E402
from latentsurv.coxph import cox_nll, fit_coxph, predict_risk  # noqa: E402
from latentsurv.deepsurv import TrainConfig, deepsurv_loss, predict_log_risk, train_deepsurv  # noqa: E402
from latentsurv.errors import LatentSurvError  # noqa: E402
from latentsurv.evaluation import (  # noqa: E402
    brier_score,
    concordance_counts,
    integrated_brier,
    kaplan_meier,
)
from latentsurv.latent import (  # noqa: E402
    IdentityExtractor,
    IdentityGenerator,
    LinearExtractor,
    LinearGenerator,
    MlpGenerator,
    health_attribute,
    manipulate,
    project,
)
from latentsurv.numerics import Rng, build_mlp, finite_diff_grad, mlp_backward, mlp_forward, relative_error  # noqa: E402
from oracles import brier_brute, cindex_brute, km_brute, trapezoid_brute  # noqa: E402

RESULTS = []
FD_STEP = 1e-5
BETAS = (-10.0, -5.0, 0.0, 5.0, 10.0, 20.0)


def _record(number, title, ok, detail, elapsed, budget):
    within = elapsed < budget
    passed = bool(ok and within)
    line = (f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail} | "
            f"{elapsed:.1f}s (budget {budget:g}s)")
    RESULTS.append((number, passed, line))
    print(line, flush=True)
    return passed, line


# --- 1. coefficient recovery ---------------------------------------------------


def criterion_1():
    w_true = np.array([1.0, -1.0, 0.5, -0.5, 0.8, 0.0, 0.0, 0.3, 0.0, -0.7])
    cohort, _ = simulate_cohort(SimConfig(n=2000, feature_dim=10, true_coefficients=w_true,
                                          target_censor_fraction=0.3, seed=2024))
    model = fit_coxph(cohort)
    err = float(np.max(np.abs(model.coefficients - w_true)))
    return err < 0.1, f"max |w_hat - w*| = {err:.4f} (< 0.1), {model.iterations} iterations"


# --- 2. gradient suite ---------------------------------------------------------


def _cox_instances(rng):
    for k in range(20):
        n, d = int(rng.integers(5, 50)), int(rng.integers(1, 7))
        times = (rng.integers(1, 10, size=n) if k % 2 else rng.exponential(size=n) + 0.01).astype(float)
        events = rng.random(n) < 0.6
        events[0] = True
        c = Cohort([str(i) for i in range(n)], times, events, rng.normal(size=(n, d)))
        w = rng.normal(size=d)
        lam = float(rng.choice([0.0, 1e-4, 0.1]))
        yield cox_nll(w, c, lam)[1], finite_diff_grad(lambda v: cox_nll(v, c, lam)[0], w, FD_STEP)


def _deepsurv_instances(rng):
    for k in range(20):
        n = int(rng.integers(2, 64))
        h = rng.normal(size=(n, 1))
        t = (rng.integers(1, 6, size=n) if k % 2 else rng.exponential(size=n)).astype(float)
        e = rng.random(n) < 0.5
        e[int(rng.integers(n))] = True
        yield deepsurv_loss(h, t, e)[1], finite_diff_grad(lambda v: deepsurv_loss(v, t, e)[0], h, FD_STEP)


def _mlp_instances(rng):
    for k in range(20):
        depth = int(rng.integers(1, 4))
        widths = (int(rng.integers(2, 6)), *[int(rng.integers(2, 8)) for _ in range(depth)], 1)
        act = ("relu", "linear", "tanh")[k % 3]
        bn = bool(k % 2)
        dropout = 0.3 if k % 4 >= 2 else 0.0
        net = build_mlp(widths, Rng(k), dropout_rate=dropout, batch_norm=bn, hidden_activation=act)
        for layer in net.layers:
            layer.bias = rng.normal(size=layer.bias.shape)
            if layer.batch_norm:
                layer.gamma = rng.uniform(0.5, 1.5, size=layer.gamma.shape)
                layer.beta = rng.normal(size=layer.beta.shape)
        x = rng.normal(size=(8, widths[0]))
        up = rng.normal(size=(8, 1))

        def loss(flat):
            trial = net.copy()
            trial.set_flat(flat)
            out, _ = mlp_forward(trial, x, Rng(1000 + k))  # fixed dropout mask
            return float(np.sum(out * up))

        _, cache = mlp_forward(net.copy(), x, Rng(1000 + k))
        yield mlp_backward(net, cache, up).flat(net), finite_diff_grad(loss, net.get_flat(), FD_STEP)


def _vjp_instances(rng, factory, dim):
    for k in range(20):
        mod = factory(k)
        x = rng.normal(size=dim)
        u = rng.normal(size=mod.forward(x).size)
        yield mod.vjp(x, u), finite_diff_grad(lambda v: float(u @ mod.forward(v)), x, FD_STEP)


def criterion_2():
    rng = np.random.default_rng(20240917)
    suites = {
        "cox_nll": _cox_instances(rng),
        "deepsurv_loss": _deepsurv_instances(rng),
        "mlp_backward": _mlp_instances(rng),
        "IdentityGenerator": _vjp_instances(rng, lambda k: IdentityGenerator(12), 12),
        "LinearGenerator": _vjp_instances(rng, lambda k: LinearGenerator(12, 20, seed=k), 12),
        "LinearGenerator(orthonormal)": _vjp_instances(
            rng, lambda k: LinearGenerator(12, seed=k, orthonormal=True), 12),
        "MlpGenerator": _vjp_instances(rng, lambda k: MlpGenerator(12, 25, hidden=(16,), seed=k), 12),
        "IdentityExtractor": _vjp_instances(rng, lambda k: IdentityExtractor(), 15),
        "LinearExtractor": _vjp_instances(rng, lambda k: LinearExtractor(15, 9, seed=k), 15),
    }
    worst, counts = {}, {}
    for name, gen in suites.items():
        errs = [relative_error(a, b) for a, b in gen]
        worst[name], counts[name] = max(errs), len(errs)
    ok = all(v < 1e-4 for v in worst.values()) and all(c >= 20 for c in counts.values())
    name = max(worst, key=worst.get)
    return ok, f"{len(suites)} suites x {min(counts.values())} instances, worst {name} {worst[name]:.2e} (< 1e-4)"


# --- 3. metric oracles ---------------------------------------------------------


def criterion_3():
    rng = np.random.default_rng(7)
    km_err = brier_err = ibs_err = 0.0
    cindex_mismatch = checked = 0
    for k in range(100):
        n = int(rng.integers(5, 51))
        times = (rng.integers(1, 15, size=n) if k % 2 else rng.exponential(10, size=n) + 0.01).astype(float)
        events = rng.random(n) < 0.65
        events[0] = True
        risks = rng.integers(0, 6, size=n).astype(float) if k % 3 == 0 else rng.normal(size=n)
        cohort = Cohort([str(i) for i in range(n)], times, events, np.zeros((n, 1)))

        try:
            ref = cindex_brute(list(times), list(events), list(risks))
        except ZeroDivisionError:
            ref = None
        if ref is not None:
            conc, tied, pairs = concordance_counts(times, events, risks)
            cindex_mismatch += Fraction(2 * conc + tied, 2 * pairs) != ref

        s = kaplan_meier(times, events)
        for t in np.concatenate([times, times + 0.5, [0.0]]):
            km_err = max(km_err, abs(s(t) - km_brute(list(times), list(events), t)))

        g = kaplan_meier(times, events, for_censoring=True)
        surv = rng.random(n)
        base = surv.copy()
        pred = lambda f, t: base ** (1.0 + t / 20.0)  # noqa: E731
        grid = np.quantile(times[events], np.linspace(0.05, 0.6, 8))
        try:
            values = [brier_brute(list(pred(None, t)), list(times), list(events), t) for t in grid]
            for t, v in zip(grid, values):
                brier_err = max(brier_err, abs(brier_score(pred, cohort, t, g) - v))
            if grid[-1] > grid[0]:
                ref_ibs = trapezoid_brute(list(grid), values) / (grid[-1] - grid[0])
                ibs_err = max(ibs_err, abs(integrated_brier(pred, cohort, g, grid) - ref_ibs))
        except (ZeroDivisionError, LatentSurvError):
            continue
        checked += 1
    ok = cindex_mismatch == 0 and km_err <= 1e-12 and brier_err <= 1e-12 and ibs_err <= 1e-12
    detail = (f"100 cohorts: C-index mismatches {cindex_mismatch}, KM {km_err:.1e}, "
              f"Brier {brier_err:.1e}, IBS {ibs_err:.1e} ({checked} Brier cohorts)")
    return ok and checked >= 80, detail


# --- 4. parity and separation --------------------------------------------------


def _heldout_cindex(form, seed):
    from latentsurv.evaluation import concordance_index

    w = (1.0, -1.0, 0.5, -0.5, 0.8, 0.0, 0.0, 0.3, 0.0, -0.7) if form == "linear" else None
    cohort, _ = simulate_cohort(SimConfig(n=4000, feature_dim=10, true_coefficients=w,
                                          log_risk_form=form, target_censor_fraction=0.3, seed=seed))
    train, test = split_cohort(cohort, 0.8, seed)
    cox = fit_coxph(train)
    deep = train_deepsurv(train, TrainConfig(seed=seed))
    c_cox = concordance_index(test.times, test.events, predict_risk(cox, test.features))
    c_deep = concordance_index(test.times, test.events, predict_log_risk(deep, test.features))
    return c_cox, c_deep


def criterion_4():
    lin_cox, lin_deep = _heldout_cindex("linear", 0)
    nl_cox, nl_deep = _heldout_cindex("nonlinear", 0)
    ok = abs(lin_deep - lin_cox) <= 0.02 and nl_deep - nl_cox >= 0.05
    return ok, (f"linear |{lin_deep:.3f} - {lin_cox:.3f}| = {abs(lin_deep - lin_cox):.3f} (<= 0.02); "
                f"nonlinear {nl_deep:.3f} - {nl_cox:.3f} = {nl_deep - nl_cox:.3f} (>= 0.05)")


# --- 5. fusion gain ------------------------------------------------------------


def criterion_5():
    from latentsurv.evaluation import concordance_index

    seed = 0
    clinical_w = np.full(5, 0.45)
    latent_w = Rng(seed).child(9).normal(512)
    latent_w /= np.linalg.norm(latent_w)
    cohort, _ = simulate_cohort(SimConfig(n=4000, feature_dim=517,
                                          true_coefficients=np.concatenate([clinical_w, latent_w]),
                                          target_censor_fraction=0.533, seed=seed))
    train, test = split_cohort(cohort, 0.8, seed)

    def heldout(cols):
        names = [train.feature_names[i] for i in cols]
        model = fit_coxph(train.with_features(train.features[:, cols], names))
        return concordance_index(test.times, test.events, predict_risk(model, test.features[:, cols]))

    c_clin, c_lat, c_fused = heldout(range(5)), heldout(range(5, 517)), heldout(range(517))
    gap = c_fused - max(c_clin, c_lat)
    return gap >= 0.03, (f"clinical {c_clin:.3f}, latent {c_lat:.3f}, fused {c_fused:.3f}, "
                         f"gain {gap:.3f} (>= 0.03)")


# --- 6. projection convergence -------------------------------------------------


def criterion_6():
    # targets within reach of 800 steps at lr 0.01 from the zero (mean-latent) init
    parts, ok = [], True
    for name, gen in (("identity", IdentityGenerator(512)),
                      ("orthonormal-linear", LinearGenerator(512, seed=3, orthonormal=True))):
        z_star = 0.4 * Rng(31).normal(512)
        x = gen.forward(z_star)
        z, trace = project(x, gen, IdentityExtractor())
        expected = z_star if name == "identity" else gen.A.T @ x
        err = float(np.max(np.abs(z - expected)))
        ok &= trace[-1] < 1e-6 and err < 1e-2 and len(trace) == 801
        parts.append(f"{name}: loss {trace[-1]:.1e}, max err {err:.1e}")
    return ok, "; ".join(parts)


# --- 7. manipulation algebra ---------------------------------------------------


def criterion_7():
    rng = Rng(41)
    z = rng.normal((400, 32))
    log_risk = z[:, :4] @ np.array([1.0, -0.5, 0.5, 0.25])
    t_event = rng.exponential(400) * np.exp(-log_risk)
    t_cens = rng.exponential(400) * 3.0
    cohort = Cohort([f"p{i}" for i in range(400)], np.minimum(t_event, t_cens), t_event <= t_cens, z)
    attr = health_attribute(cohort)
    w = attr.direction
    worst = 0.0
    for zi in z[:25]:
        for beta in BETAS:
            delta = predict_risk(w, manipulate(zi, attr, beta)) - predict_risk(w, zi)
            worst = max(worst, abs(delta - beta * float(w @ w)))
    return worst <= 1e-10, f"max |delta h - beta |w|^2| = {worst:.1e} over 25 latents x {len(BETAS)} betas"


# --- 8. determinism ------------------------------------------------------------


def _pipeline(workdir):
    """Every subcommand once; returns {relative path: sha256} for all artifacts."""
    rng = np.random.default_rng(8)
    n = 60

    def cli(*args):
        proc = subprocess.run([sys.executable, "-m", "latentsurv", *map(str, args), "--seed", "8"],
                              cwd=workdir, capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(f"{args[0]} failed: {proc.stderr.strip()}")
        return proc.stdout

    cli("simulate", "--n", n, "--dim", 5, "--out", "clinical.csv")
    ids = [f"s{i:02d}" for i in range(n)]
    with open(workdir / "targets.jsonl", "w") as fh:
        for i in ids:
            fh.write(json.dumps({"id": i, "x": rng.uniform(-0.5, 0.5, 256).tolist()}) + "\n")
    (workdir / "ages.csv").write_text("id,age\n" + "".join(f"{i},{40 + k % 30}\n" for k, i in enumerate(ids)))

    cli("project", "--targets", "targets.jsonl", "--latent-dim", 16, "--steps", 100, "--out", "z.jsonl")
    cli("fuse", "--clinical", "clinical.csv", "--embedding", "z.jsonl", "--out", "fused.csv")
    cli("split", "--cohort", "fused.csv", "--train-out", "train.csv", "--test-out", "test.csv")
    cli("fit-cox", "--cohort", "train.csv", "--out", "cox.json")
    cli("fit-deepsurv", "--cohort", "train.csv", "--epochs", 3, "--batch-size", 16, "--out", "deep.json")
    cli("evaluate", "--model", "cox.json", "--cohort", "test.csv", "--out", "eval_cox.json")
    cli("evaluate", "--model", "deep.json", "--cohort", "test.csv", "--out", "eval_deep.json")
    cli("attribute", "health", "--cohort", "clinical.csv", "--latents", "z.jsonl", "--out", "health.json")
    cli("attribute", "age", "--latents", "z.jsonl", "--ages", "ages.csv", "--out", "age.json")
    cli("attribute", "single-dim", "--dim", 3, "--latent-dim", 16, "--out", "dim3.json")
    cli("manipulate", "--latent", "z.jsonl", "--attribute", "health.json", "--beta", 5, "--out", "z_plus.jsonl")
    cli("sweep", "--latent", "z.jsonl", "--attribute", "health.json", "--betas", "-10,-5,0,5,10,20",
        "--generator", "toy-mlp", "--ids", "s00,s01", "--out-dir", "sweep")
    return {str(p.relative_to(workdir)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(workdir.rglob("*")) if p.is_file()}


def criterion_8():
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        first, second = _pipeline(Path(a)), _pipeline(Path(b))
    manifests = [k for k in first if k.endswith("manifest.json")]
    differing = sorted(k for k in set(first) | set(second) if first.get(k) != second.get(k))
    ok = not differing and len(manifests) >= 13 and first.keys() == second.keys()
    detail = f"{len(first)} files, {len(manifests)} manifests, differing: {differing[:3] or 'none'}"
    return ok, detail


CRITERIA = [
    (1, "coefficient recovery", criterion_1, 30),
    (2, "gradient suite", criterion_2, 60),
    (3, "metric oracles", criterion_3, 30),
    (4, "model-family parity and separation", criterion_4, 600),
    (5, "fusion gain", criterion_5, 300),
    (6, "projection convergence", criterion_6, 10),
    (7, "manipulation algebra", criterion_7, 1),
    (8, "determinism", criterion_8, 120),
]


def run_criterion(number):
    _, title, fn, budget = CRITERIA[number - 1]
    start = time.perf_counter()
    ok, detail = fn()
    return _record(number, title, ok, detail, time.perf_counter() - start, budget)


@pytest.mark.slow
@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_acceptance(number):
    passed, line = run_criterion(number)
    assert passed, line


if __name__ == "__main__":
    os.environ.setdefault("PYTHONHASHSEED", "0")
    outcomes = [run_criterion(c[0])[0] for c in CRITERIA]
    print(f"{sum(outcomes)}/{len(outcomes)} criteria passed")
    sys.exit(0 if all(outcomes) else 1)
