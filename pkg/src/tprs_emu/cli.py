"""Command line front end: ``tprs-emu <command> [options]``.

Exit status is 0 on success, 2 for usage or validation problems and 1 for
runtime failures; errors are reported as a single line on stderr of the form
``error kind=<kind> exit=<code> message=<json string>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .basis import lattice_grid, sublattice_index, tprs_basis
from .design import InputRanges, maximin_lhs, monte_carlo_sample, read_design_csv, write_design_csv
from .emulators import (
    MCMCConfig,
    PLUGIN_PRIORS,
    estimate_sigma2,
    fit_itprs,
    fit_pcgp,
    fit_sgp,
    fit_stprs,
    load_model,
    predict,
    save_model,
)
from .errors import EmulatorError, InputError
from .harness import ExperimentConfig, Datasets, _read_dir, compare, fit_selected
from .mcmc import PriorConfig
from .simulator import POLLUTANT_RANGES, SpillConfig, generate_dataset, write_external


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(InputError(f"usage: {message}"))


def _fail(exc: Exception) -> None:
    code = getattr(exc, "exit_code", 1)
    kind = getattr(exc, "kind", "runtime")
    sys.stderr.write(f"error kind={kind} exit={code} message={json.dumps(str(exc))}\n")
    raise SystemExit(code)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError("config must be a JSON object")
    return doc


def _pick(args, cfg: dict, name: str, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _floats(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc


def _grid_counts(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        return tuple(int(v) for v in str(text).lower().split("x"))
    except ValueError as exc:
        raise InputError(f"grid must look like 50x50, got {text!r}") from exc


def _ranges_for(d: int, cfg: dict) -> InputRanges:
    if "ranges" in cfg:
        return InputRanges.from_pairs(cfg["ranges"])
    if not 1 <= d <= 4:
        raise InputError("built-in ranges exist for d = 1..4; pass ranges in --config")
    return InputRanges(POLLUTANT_RANGES[:d, 0], POLLUTANT_RANGES[:d, 1])


# --------------------------------------------------------------------------
# commands


def cmd_design(args, cfg) -> None:
    n = int(_pick(args, cfg, "n", 80))
    d = int(_pick(args, cfg, "d", 4))
    kind = _pick(args, cfg, "kind", "maximin")
    seed = int(_pick(args, cfg, "seed", 0))
    ranges = _ranges_for(d, cfg)
    if kind == "maximin":
        X = maximin_lhs(n, ranges, int(_pick(args, cfg, "iterations", 100)), seed)
    elif kind == "mc":
        X = monte_carlo_sample(n, ranges, seed)
    else:
        raise InputError(f"design kind must be maximin or mc, got {kind!r}")
    out = Path(_pick(args, cfg, "out", "design.csv"))
    write_design_csv(out, X)
    print(f"wrote {out} n={n} d={d}")


def cmd_simulate(args, cfg) -> None:
    check = _pick(args, cfg, "check")
    if check:
        ds = _read_dir(check)
        print(f"ok {check} n={ds.n} r={ds.grid.r} q={ds.grid.q} d={ds.ranges.d}")
        return
    design = _pick(args, cfg, "design")
    if design is None:
        raise InputError("simulate needs --design or --check")
    _, X = read_design_csv(design)
    d = X.shape[1]
    counts = _grid_counts(_pick(args, cfg, "grid", "50x50"))
    grid = lattice_grid(counts, (tuple(cfg.get("location_box", (0.0, 3.0))), tuple(cfg.get("time_box", (0.0, 60.5)))))
    ds = generate_dataset(X, d, grid, SpillConfig.scenario(d))
    out = Path(_pick(args, cfg, "out", "sim"))
    write_external(ds, out)
    print(f"wrote {out} n={ds.n} r={ds.grid.r}")


def _fit_fixed(kind, train, val, args, cfg):
    plugin = PriorConfig(**cfg["plugin_priors"]) if "plugin_priors" in cfg else PLUGIN_PRIORS
    theta = _floats(_pick(args, cfg, "theta"))
    nu = _floats(_pick(args, cfg, "nu"))
    log1p = bool(_pick(args, cfg, "log1p", False))
    seed = int(_pick(args, cfg, "seed", 0))
    mcmc = MCMCConfig(n_iter=int(_pick(args, cfg, "iterations", 10000)),
                      burn_in=int(_pick(args, cfg, "burn_in", 1000)), seed=seed)
    if kind == "stprs":
        m = int(_pick(args, cfg, "m", 20))
        nu = nu or [0.05] * train.grid.q
        model = fit_stprs(train, tprs_basis(train.grid, m), theta, nu, plugin, log1p)
    elif kind == "sgp":
        sub = _pick(args, cfg, "subgrid")
        index = None if sub is None else sublattice_index(train.grid, _grid_counts(sub))
        model = fit_sgp(train, theta, nu, plugin, index, log1p)
    elif kind == "itprs":
        priors = PriorConfig(**cfg.get("itprs_priors", {"a_theta": 1.0, "b_theta": 0.1}))
        model = fit_itprs(train, tprs_basis(train.grid, int(_pick(args, cfg, "m", 2))), priors, mcmc, log1p)
    else:
        priors = PriorConfig(**cfg.get("pcgp_priors", {"a_theta": 1.0, "b_theta": 3.0}))
        model = fit_pcgp(train, int(_pick(args, cfg, "p", 3)), priors, mcmc, log1p)
    if val is not None:
        estimate_sigma2(model, val)
    return model


def cmd_fit(args, cfg) -> None:
    kind = _pick(args, cfg, "emulator")
    if kind not in ("pcgp", "itprs", "stprs", "sgp"):
        raise InputError(f"--emulator must be one of pcgp, itprs, stprs, sgp; got {kind!r}")
    train_dir = _pick(args, cfg, "train")
    if train_dir is None:
        raise InputError("fit needs --train")
    train = _read_dir(train_dir)
    val_dir = _pick(args, cfg, "validation")
    val = None if val_dir is None else _read_dir(val_dir, train.ranges, train.grid)
    needs_search = kind in ("stprs", "sgp") and _pick(args, cfg, "theta") is None
    if needs_search:
        if val is None:
            raise InputError("without --theta the plug-in emulators need --validation for the search")
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        exp = ExperimentConfig(**{k: v for k, v in cfg.items() if k in known and k != "scenario"},
                               scenario={"train": train_dir, "validation": val_dir, "test": val_dir})
        if _pick(args, cfg, "subgrid") is not None:
            exp.sgp_subgrid = _grid_counts(_pick(args, cfg, "subgrid"))
        model, search = fit_selected(kind, Datasets(train, val, val), exp, int(_pick(args, cfg, "seed", 0)))
        print(f"selected {json.dumps(search.best)} validation_rmse={search.score!r}")
    else:
        model = _fit_fixed(kind, train, val, args, cfg)
    out = Path(_pick(args, cfg, "out", "model.json"))
    save_model(model, out)
    print(f"wrote {out} kind={model.kind} sigma2={model.sigma2!r}")


def cmd_predict(args, cfg) -> None:
    model_path = _pick(args, cfg, "model")
    inputs = _pick(args, cfg, "inputs")
    if model_path is None or inputs is None:
        raise InputError("predict needs --model and --inputs")
    model = load_model(model_path)
    ids, X = read_design_csv(inputs)
    grid_path = _pick(args, cfg, "grid")
    if grid_path is not None:
        with open(grid_path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r][1:]
        S = np.array([[float(v) for v in r[1:]] for r in rows])
        if S.shape != model.grid.locations.shape or not np.allclose(S, model.grid.locations):
            raise InputError(f"requested grid {S.shape} does not match the model grid {model.grid.locations.shape}")
    scale = "original" if bool(_pick(args, cfg, "original_scale", False)) else "standardized"
    pred = predict(model, X, n_samples=int(_pick(args, cfg, "draws", 500)), scale=scale)
    mean, sd = np.atleast_2d(pred.mean), np.atleast_2d(pred.sd)
    out = Path(_pick(args, cfg, "out", "predictions.csv"))
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "loc_id", "mean", "sd"])
        for i, rid in enumerate(ids):
            for j in range(mean.shape[1]):
                w.writerow([rid, j, repr(float(mean[i, j])), repr(float(sd[i, j]))])
    print(f"wrote {out} runs={len(ids)} r={mean.shape[1]} scale={scale}")


def _experiment(args, cfg) -> ExperimentConfig:
    doc = {k: v for k, v in cfg.items()}
    scen = _pick(args, {}, "scenario")
    if scen is not None:
        doc["scenario"] = _scenario(scen)
    elif isinstance(doc.get("scenario"), str):
        doc["scenario"] = _scenario(doc["scenario"])
    for key in ("seed", "replicates"):
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    if getattr(args, "emulators", None):
        doc["emulators"] = [e.strip() for e in args.emulators.split(",") if e.strip()]
    if getattr(args, "out", None):
        doc["output_dir"] = args.out
    if getattr(args, "original_scale", None):
        doc["original_scale"] = True
    return ExperimentConfig.from_dict(doc)


def _scenario(text):
    text = str(text)
    if text.startswith("art") and text[3:].isdigit():
        return int(text[3:])
    if text.isdigit():
        return int(text)
    raise InputError(f"scenario must be art1..art4 (or set external directories in --config), got {text!r}")


def cmd_validate(args, cfg) -> None:
    from .harness import make_datasets

    exp = _experiment(args, cfg)
    data = make_datasets(exp, exp.seed)
    out = Path(exp.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in exp.emulators:
        model, search = fit_selected(name, data, exp, exp.seed)
        if search is None:
            print(f"{name}: fixed settings (no search)")
            continue
        search.write_csv(out / f"search_{name}.csv")
        print(f"{name}: best {json.dumps(search.best)} validation_rmse={search.score!r}")


def cmd_compare(args, cfg) -> None:
    exp = _experiment(args, cfg)
    res = compare(exp)
    for i, rep in enumerate(res["results"]):
        line = " ".join(f"{k}={v.rmse.summary['mean']:.6g}/{v.coverage:.3f}" for k, v in rep.items())
        print(f"replicate {i}: {line}")
    print(f"wrote {res['output_dir']}")


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tprs-emu", description="Basis-function GP emulators for spatial simulator output.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--config", help="flat JSON file of option values")
        return p

    p = common(sub.add_parser("design", help="write a maximin LHS or Monte Carlo design"))
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--kind", choices=("maximin", "mc"))
    p.add_argument("--iterations", type=int)
    p.add_argument("--out")

    p = common(sub.add_parser("simulate", help="run the built-in simulator or check an external triple"))
    p.add_argument("--design")
    p.add_argument("--grid", help="lattice counts, e.g. 50x50")
    p.add_argument("--out")
    p.add_argument("--check", help="directory with inputs.csv, grid.csv, outputs.csv")

    p = common(sub.add_parser("fit", help="train an emulator and save it as JSON"))
    p.add_argument("--emulator", choices=("pcgp", "itprs", "stprs", "sgp"))
    p.add_argument("--train")
    p.add_argument("--validation")
    p.add_argument("--theta")
    p.add_argument("--nu")
    p.add_argument("--m", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--subgrid")
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--log1p", action="store_true", default=None)
    p.add_argument("--out")

    p = common(sub.add_parser("predict", help="predict mean/sd grids for new inputs"))
    p.add_argument("--model")
    p.add_argument("--inputs")
    p.add_argument("--grid", help="grid.csv the predictions are requested on")
    p.add_argument("--draws", type=int)
    p.add_argument("--original-scale", dest="original_scale", action="store_true", default=None)
    p.add_argument("--out")

    for name, text in (("validate", "validation grid search"), ("compare", "fit, test and tabulate emulators")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--scenario", help="art1..art4")
        p.add_argument("--emulators", help="comma list of pcgp,itprs,stprs,sgp")
        p.add_argument("--replicates", type=int)
        p.add_argument("--original-scale", dest="original_scale", action="store_true", default=None)
        p.add_argument("--out")
    return parser


COMMANDS = {
    "design": cmd_design,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "validate": cmd_validate,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except EmulatorError as exc:
        _fail(exc)
    except (OSError, ValueError) as exc:
        _fail(InputError(str(exc)))
    except Exception as exc:  # noqa: BLE001 - last-resort one-line report
        _fail(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
