"""Command-line pipeline: simulate, project, fit, evaluate, attribute, manipulate, sweep.

Every command takes ``--seed`` and writes a JSON run manifest (config,
input and output SHA-256 digests). Exit status: 0 success, 1 runtime error,
2 usage error.
"""
import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import (
    Cohort,
    SimConfig,
    cohort_to_csv,
    fuse_cohorts,
    load_cohort,
    simulate_cohort,
    split_cohort,
    truth_to_csv,
)
from .coxph import CoxModel, fit_coxph, predict_risk, survival_from_log_risk
from .deepsurv import TrainConfig, predict_log_risk, train_deepsurv
from .errors import LatentSurvError
from .evaluation import (
    brier_curve,
    concordance_index,
    default_brier_grid,
    integrated_brier,
    kaplan_meier,
)
from .io import (
    atomic_write,
    dumps,
    load_attribute,
    load_latents,
    load_model,
    save_attribute,
    save_latents,
    save_model,
    sha256_file,
    to_pgm,
)
from .latent import (
    ProjectionConfig,
    age_attribute,
    health_attribute,
    make_extractor,
    make_generator,
    manipulate,
    manipulation_sweep,
    mean_latent,
    project,
    single_dim_attribute,
)

log = logging.getLogger("latentsurv")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fraction(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {text}")
    return v


def _write_manifest(args, inputs, outputs, path=None, extra=None):
    config = {k: (str(v) if isinstance(v, Path) else v)
              for k, v in sorted(vars(args).items()) if k not in ("func", "manifest")}
    manifest = {
        "command": args.command,
        "version": __version__,
        "seed": args.seed,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    if path is None:
        path = args.manifest or Path(f"{outputs[0]}.manifest.json")
    atomic_write(path, dumps(manifest))
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    coef = args.coefficients
    config = SimConfig(
        n=args.n,
        feature_dim=args.dim if coef is None else len(coef),
        true_coefficients=coef,
        log_risk_form=args.form,
        weibull_shape=args.weibull_shape,
        weibull_scale=args.weibull_scale,
        target_censor_fraction=args.censor,
        time_range=(args.min_days, args.max_days),
        seed=args.seed,
        allow_ties=args.allow_ties,
    )
    cohort, truth = simulate_cohort(config)
    truth_path = args.out.with_name(args.out.stem + ".truth.csv")
    atomic_write(args.out, cohort_to_csv(cohort))
    atomic_write(truth_path, truth_to_csv(cohort, truth))
    _write_manifest(args, [], [args.out, truth_path], extra={"censor_rate": truth.censor_rate})


def cmd_split(args):
    cohort = load_cohort(args.cohort)
    train, test = split_cohort(cohort, args.fraction, args.seed)
    atomic_write(args.train_out, cohort_to_csv(train))
    atomic_write(args.test_out, cohort_to_csv(test))
    _write_manifest(args, [args.cohort], [args.train_out, args.test_out])


def _load_embedding(path):
    path = Path(path)
    if path.suffix == ".jsonl":
        ids, z = load_latents(path)
        # survival columns are unused placeholders; fuse_cohorts takes them from the clinical side
        return Cohort(ids, np.ones(len(ids)), np.zeros(len(ids), bool), z,
                      [f"z{j}" for j in range(z.shape[1])])
    return load_cohort(path)


def cmd_fuse(args):
    fused = fuse_cohorts(load_cohort(args.clinical), _load_embedding(args.embedding))
    atomic_write(args.out, cohort_to_csv(fused))
    _write_manifest(args, [args.clinical, args.embedding], [args.out])


def cmd_fit_cox(args):
    cohort = load_cohort(args.cohort)
    model = fit_coxph(cohort, ridge_lambda=args.ridge, max_iters=args.max_iters,
                      tolerance=args.tol)
    save_model(model, args.out)
    _write_manifest(args, [args.cohort], [args.out])


def cmd_fit_deepsurv(args):
    cohort = load_cohort(args.cohort)
    config = TrainConfig(
        batch_size=args.batch_size,
        learning_rate=args.lr,
        dropout=args.dropout,
        epochs=args.epochs,
        patience=args.patience,
        validation_fraction=args.val_fraction,
        seed=args.seed,
    )
    save_model(train_deepsurv(cohort, config), args.out)
    _write_manifest(args, [args.cohort], [args.out])


def _log_risk_fn(model):
    if isinstance(model, CoxModel):
        return lambda f: predict_risk(model, f)
    return lambda f: predict_log_risk(model, f)


def evaluate_model(model, cohort, censor_cohort=None, grid_points=100):
    """Metrics dictionary for a fitted model on ``cohort``."""
    if tuple(model.feature_names) != tuple(cohort.feature_names):
        raise LatentSurvError("model and cohort feature names differ")
    risk = _log_risk_fn(model)
    h = risk(cohort.features)
    c = censor_cohort or cohort
    censor_dist = kaplan_meier(c.times, c.events, for_censoring=True)
    grid = default_brier_grid(cohort.times, cohort.events, grid_points)

    def predictor(features, t):
        return survival_from_log_risk(model.baseline, risk(features), t)

    curve = brier_curve(predictor, cohort, grid, censor_dist)
    return {
        "c_index": concordance_index(cohort.times, cohort.events, h),
        "integrated_brier": integrated_brier(predictor, cohort, censor_dist, grid),
        "brier_curve": [[float(t), float(b)] for t, b in zip(grid, curve)],
        "n": len(cohort),
        "events": cohort.n_events,
    }


def cmd_evaluate(args):
    model = load_model(args.model)
    cohort = load_cohort(args.cohort)
    censor = load_cohort(args.censor_cohort) if args.censor_cohort else None
    text = dumps(evaluate_model(model, cohort, censor, args.grid_points))
    sys.stdout.write(text)
    inputs = [args.model, args.cohort] + ([args.censor_cohort] if args.censor_cohort else [])
    if args.out:
        atomic_write(args.out, text)
        _write_manifest(args, inputs, [args.out])
    else:
        path = args.manifest or args.cohort.with_name(args.cohort.stem + ".evaluate.manifest.json")
        _write_manifest(args, inputs, [], path=path)


def _load_targets(path):
    ids, xs = [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            rec = json.loads(line)
            if "id" not in rec or "x" not in rec:
                raise LatentSurvError(f"{path}: line {lineno}: expected keys 'id' and 'x'")
            ids.append(str(rec["id"]))
            xs.append(rec["x"])
    if not ids:
        raise LatentSurvError(f"{path}: no targets")
    return ids, np.array(xs, dtype=np.float64)


def cmd_project(args):
    ids, xs = _load_targets(args.targets)
    gen = make_generator(args.generator, args.latent_dim, args.generator_seed)
    ext = make_extractor(args.extractor, gen.output_dim, args.extractor_seed)
    init = None
    inputs = [args.targets]
    if args.init_latents:
        init = mean_latent(load_latents(args.init_latents)[1])
        inputs.append(args.init_latents)
    config = ProjectionConfig(steps=args.steps, learning_rate=args.lr, init=init)
    zs, final = [], {}
    for i, x in zip(ids, xs):
        z, trace = project(x, gen, ext, config)
        zs.append(z)
        final[i] = float(trace[-1])
    save_latents(args.out, ids, zs)
    _write_manifest(args, inputs, [args.out], extra={"final_loss": final})


def _read_ages(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "age"} <= set(reader.fieldnames):
            raise LatentSurvError(f"{path}: expected columns id,age")
        return {row["id"]: float(row["age"]) for row in reader}


def cmd_attribute(args):
    inputs = []
    if args.kind == "health":
        if args.cohort is None:
            raise LatentSurvError("health attribute needs --cohort")
        cohort = load_cohort(args.cohort)
        inputs.append(args.cohort)
        if args.latents:
            ids, z = load_latents(args.latents)
            inputs.append(args.latents)
            pos = {i: k for k, i in enumerate(ids)}
            missing = [i for i in cohort.ids if i not in pos]
            if missing:
                raise LatentSurvError(f"id {missing[0]!r} has no latent")
            attr = health_attribute(z[[pos[i] for i in cohort.ids]], cohort,
                                    ridge_lambda=args.ridge, normalize=args.normalize)
        else:
            attr = health_attribute(cohort, ridge_lambda=args.ridge, normalize=args.normalize)
    elif args.kind == "age":
        if args.latents is None or args.ages is None:
            raise LatentSurvError("age attribute needs --latents and --ages")
        ids, z = load_latents(args.latents)
        ages = _read_ages(args.ages)
        inputs += [args.latents, args.ages]
        missing = [i for i in ids if i not in ages]
        if missing:
            raise LatentSurvError(f"id {missing[0]!r} has no age")
        attr = age_attribute(z, [ages[i] for i in ids], normalize=args.normalize)
    else:
        if args.dim is None:
            raise LatentSurvError("single-dim attribute needs --dim")
        attr = single_dim_attribute(args.dim, args.latent_dim)
    save_attribute(args.out, attr)
    _write_manifest(args, inputs, [args.out])


def cmd_manipulate(args):
    ids, z = load_latents(args.latent)
    attr = load_attribute(args.attribute)
    save_latents(args.out, ids, [manipulate(zi, attr, args.beta) for zi in z])
    _write_manifest(args, [args.latent, args.attribute], [args.out])


def _beta_label(b):
    return format(b, "g")


def cmd_sweep(args):
    ids, z = load_latents(args.latent)
    attr = load_attribute(args.attribute)
    if args.ids:
        keep = set(args.ids.split(","))
        pairs = [(i, zi) for i, zi in zip(ids, z) if i in keep]
    else:
        pairs = list(zip(ids, z))
    gen = make_generator(args.generator, z.shape[1], args.generator_seed)
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    files, images = [], []
    for i, zi in pairs:
        for b, x in manipulation_sweep(zi, attr, args.betas, gen):
            path = out_dir / f"{i}_beta_{_beta_label(b)}.pgm"
            atomic_write(path, to_pgm(x))
            files.append(path)
            images.append({"id": i, "beta": b, "file": path.name})
    _write_manifest(args, [args.latent, args.attribute], files,
                    path=args.manifest or out_dir / "manifest.json",
                    extra={"images": images})


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="latentsurv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--manifest", type=Path, default=None,
                        help="run manifest path (default: <output>.manifest.json)")
        sp.set_defaults(func=func)
        return sp

    sp = command("simulate", cmd_simulate, "simulate a proportional-hazards cohort")
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--dim", type=int, default=10)
    sp.add_argument("--coefficients", type=_floats, default=None)
    sp.add_argument("--form", choices=("linear", "nonlinear"), default="linear")
    sp.add_argument("--censor", type=float, default=0.533, help="target censored fraction")
    sp.add_argument("--weibull-shape", type=float, default=1.2)
    sp.add_argument("--weibull-scale", type=float, default=1500.0)
    sp.add_argument("--min-days", type=float, default=2.0)
    sp.add_argument("--max-days", type=float, default=4923.0)
    sp.add_argument("--allow-ties", action="store_true")
    sp.add_argument("--out", type=Path, required=True)

    sp = command("split", cmd_split, "train/test split")
    sp.add_argument("--cohort", type=Path, required=True)
    sp.add_argument("--fraction", type=_fraction, default=0.8)
    sp.add_argument("--train-out", type=Path, required=True)
    sp.add_argument("--test-out", type=Path, required=True)

    sp = command("fuse", cmd_fuse, "early fusion of clinical and embedding features")
    sp.add_argument("--clinical", type=Path, required=True)
    sp.add_argument("--embedding", type=Path, required=True,
                    help="latents (.jsonl) or cohort CSV, matched by id")
    sp.add_argument("--out", type=Path, required=True)

    sp = command("fit-cox", cmd_fit_cox, "fit a Cox proportional-hazards model")
    sp.add_argument("--cohort", type=Path, required=True)
    sp.add_argument("--ridge", type=float, default=1e-4)
    sp.add_argument("--max-iters", type=int, default=20_000)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--out", type=Path, required=True)

    sp = command("fit-deepsurv", cmd_fit_deepsurv, "train a deep survival network")
    sp.add_argument("--cohort", type=Path, required=True)
    sp.add_argument("--batch-size", type=int, default=128)
    sp.add_argument("--lr", type=float, default=0.001)
    sp.add_argument("--dropout", type=float, default=0.4)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--patience", type=int, default=10)
    sp.add_argument("--val-fraction", type=_fraction, default=0.1)
    sp.add_argument("--out", type=Path, required=True)

    sp = command("evaluate", cmd_evaluate, "C-index and IPCW Brier scores of a model")
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--cohort", type=Path, required=True)
    sp.add_argument("--censor-cohort", type=Path, default=None,
                    help="cohort for the censoring distribution (default: --cohort)")
    sp.add_argument("--grid-points", type=int, default=100)
    sp.add_argument("--out", type=Path, default=None)

    sp = command("project", cmd_project, "project targets into a toy generator's latent space")
    sp.add_argument("--targets", type=Path, required=True, help='JSON lines {"id", "x"}')
    sp.add_argument("--generator", default="toy-mlp", choices=("identity", "linear", "toy-mlp"))
    sp.add_argument("--generator-seed", type=int, default=0)
    sp.add_argument("--extractor", default="identity", choices=("identity", "linear"))
    sp.add_argument("--extractor-seed", type=int, default=1)
    sp.add_argument("--latent-dim", type=int, default=512)
    sp.add_argument("--steps", type=int, default=800)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--init-latents", type=Path, default=None,
                    help="latents whose mean initialises projection (default: zero vector)")
    sp.add_argument("--out", type=Path, required=True)

    sp = command("attribute", cmd_attribute, "extract a latent attribute direction")
    sp.add_argument("kind", choices=("health", "age", "single-dim"))
    sp.add_argument("--cohort", type=Path, default=None)
    sp.add_argument("--latents", type=Path, default=None)
    sp.add_argument("--ages", type=Path, default=None, help="CSV with columns id,age")
    sp.add_argument("--dim", type=int, default=None)
    sp.add_argument("--latent-dim", type=int, default=512)
    sp.add_argument("--ridge", type=float, default=1e-4)
    sp.add_argument("--normalize", action="store_true")
    sp.add_argument("--out", type=Path, required=True)

    sp = command("manipulate", cmd_manipulate, "move latents along an attribute")
    sp.add_argument("--latent", type=Path, required=True)
    sp.add_argument("--attribute", type=Path, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--out", type=Path, required=True)

    sp = command("sweep", cmd_sweep, "render generator outputs over a range of betas")
    sp.add_argument("--latent", type=Path, required=True)
    sp.add_argument("--attribute", type=Path, required=True)
    sp.add_argument("--betas", type=_floats, default=[-10.0, -5.0, 0.0, 5.0, 10.0, 20.0])
    sp.add_argument("--generator", default="toy-mlp", choices=("identity", "linear", "toy-mlp"))
    sp.add_argument("--generator-seed", type=int, default=0)
    sp.add_argument("--ids", default=None, help="comma-separated subset of latent ids")
    sp.add_argument("--out-dir", type=Path, default=Path("sweep"))
    return p


def _join_negative_lists(argv):
    # "--betas -10,-5" would otherwise be parsed as an option
    out, it = [], iter(argv)
    for tok in it:
        if tok in ("--betas", "--coefficients"):
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = _join_negative_lists(sys.argv[1:] if argv is None else list(argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (LatentSurvError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
