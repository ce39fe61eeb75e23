"""Command-line entry points: simulate | identify | select | sindy | report.

Every command takes --config <json>, --out <dir> and an optional --seed
override. The fully resolved configuration (defaults included) is written
next to the outputs so any run directory reproduces bit-exactly from its
own contents. Set SIVA_LOG=DEBUG|INFO|WARNING for log verbosity.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import nn, sindy, uq
from .physics import (
    CoefficientSpec,
    ModelSpec,
    ParameterSet,
    model_from_dict,
    model_to_dict,
)
from .signal import (
    TimeSeries,
    derive_states,
    dft_magnitude,
    read_timeseries_csv,
    resample_and_trim,
    write_timeseries_csv,
)
from .sim import IntegrationError, IvpConfig, displacement_mse, integrate_rk45
from .train import (
    EpochRecord,
    SivaDatasets,
    StateHistory,
    TrainConfig,
    detect_convergence,
    networks_for,
    run_training,
)

log = logging.getLogger(__name__)

BUNDLE_NAME = "bundle.json"
EPOCH_LOG_NAME = "epochs.jsonl"
RESOLVED_CONFIG_NAME = "resolved_config.json"


class ConfigError(ValueError):
    pass


TRAIN_DEFAULTS = {
    "max_epochs": 1000,
    "batch_size": 300,
    "latent_dim": 16,
    "learning_rate": 1e-4,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "gamma": 1.0,
    "normalize_mse": False,
    "mse_pairing": "paired",
    "convergence_window": 100,
    "convergence_param_rtol": 0.01,
    "convergence_dloss_tol": 0.15,
}

IVP_DEFAULTS = {"rel_tol": 1e-8, "abs_tol": 1e-8, "max_derivative_evals": 20_000_000}

SELECT_DEFAULTS = {
    "approaches": ["one", "two", "three"],
    "n_samples": 1000,
    "from_epoch": "auto",
    "stride": 1,
    "use_validation": False,
}


def load_config(path, seed_override=None) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = copy.deepcopy(cfg)
    cfg.setdefault("seed", 42)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    cfg["train"] = {**TRAIN_DEFAULTS, **cfg.get("train", {})}
    cfg["train"].setdefault("seed", cfg["seed"])
    cfg["ivp"] = {**IVP_DEFAULTS, **cfg.get("ivp", {})}
    cfg["select"] = {**SELECT_DEFAULTS, **cfg.get("select", {})}
    cfg["_config_dir"] = str(path.resolve().parent)
    return cfg


def model_from_config(cfg) -> ModelSpec:
    if "model" not in cfg:
        raise ConfigError("config is missing the 'model' section")
    try:
        return model_from_dict(cfg["model"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad model section: {exc}")


def train_config_from(cfg) -> TrainConfig:
    try:
        return TrainConfig(**cfg["train"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train section: {exc}")


def ivp_config_from(cfg) -> IvpConfig:
    try:
        return IvpConfig(**cfg["ivp"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad ivp section: {exc}")


def write_resolved_config(cfg, out_dir: Path):
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    (out_dir / RESOLVED_CONFIG_NAME).write_text(json.dumps(clean, indent=2) + "\n")


def _dataset_dir(out_dir: Path) -> Path:
    return out_dir / "data"


# ---------------------------------------------------------------------------
# simulate


def _force_series(force_cfg, dof, sample_rate) -> tuple:
    kind = force_cfg.get("kind", "half_sine")
    if kind != "half_sine":
        raise ConfigError(f"unknown force kind {kind!r}")
    amp = float(force_cfg["amplitude_n"])
    duration = float(force_cfg.get("duration_s", 0.006))
    target = int(force_cfg.get("dof", dof - 1))
    if not 0 <= target < dof:
        raise ConfigError("force dof out of range")
    n = int(np.ceil(duration * sample_rate)) + 2
    t = np.arange(n) / sample_rate
    data = np.zeros((n, dof))
    ramp = np.clip(t / duration, 0.0, 1.0)
    data[:, target] = amp * np.sin(np.pi * ramp)
    data[t > duration, target] = 0.0
    return TimeSeries(data, sample_rate), duration


def cmd_simulate(cfg, out_dir: Path) -> int:
    model = model_from_config(cfg)
    sim_cfg = cfg.get("simulate")
    if not sim_cfg:
        raise ConfigError("config is missing the 'simulate' section")
    try:
        truth = model.parameter_set(sim_cfg["truth"])
        fs = float(sim_cfg["sample_rate_hz"])
        duration = float(sim_cfg["duration_s"])
        entries = sim_cfg["datasets"]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad simulate section: {exc}")
    ivp = ivp_config_from(cfg)
    t = np.arange(int(round(duration * fs)) + 1) / fs
    data_dir = _dataset_dir(out_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        label = entry["label"]
        y0 = np.asarray(entry["initial_state"], dtype=float)
        force = cutoff = None
        if "force" in entry:
            force, cutoff = _force_series(entry["force"], model.dof, fs)
        log.info("simulating %s (y0=%s)", label, y0.tolist())
        traj = integrate_rk45(model, truth, y0, t, force=force, force_cutoff=cutoff,
                              config=ivp)
        for name, arr in (
            ("disp", traj.displacements),
            ("vel", traj.velocities),
            ("accel", traj.accelerations),
        ):
            write_timeseries_csv(data_dir / f"{label}_{name}.csv", TimeSeries(arr, fs))
        if force is not None:
            write_timeseries_csv(data_dir / f"{label}_force.csv", force)
    write_resolved_config(cfg, out_dir)
    return 0


# ---------------------------------------------------------------------------
# dataset loading


def _load_triplet(entry, cfg, out_dir: Path, dof: int, label: str) -> StateHistory:
    """A dataset entry is either a label naming simulate output in
    <out>/data or a mapping with explicit csv paths (accel required;
    disp/vel derived when absent)."""
    base = Path(cfg["_config_dir"])
    if isinstance(entry, str):
        paths = {
            name: _dataset_dir(out_dir) / f"{entry}_{name}.csv"
            for name in ("disp", "vel", "accel")
        }
        label = entry
    else:
        paths = {k: base / v for k, v in entry.items() if k in ("disp", "vel", "accel")}
        label = entry.get("label", label)
    if "accel" not in paths:
        raise ConfigError(f"dataset {label!r} needs at least an accel file")
    for p in paths.values():
        if not Path(p).is_file():
            raise ConfigError(f"dataset file not found: {p}")

    accel = read_timeseries_csv(paths["accel"])
    if accel.n_channels != dof:
        raise ConfigError(f"dataset {label!r} has {accel.n_channels} channels, model has {dof}")
    pre = cfg.get("preprocess") or {}
    if "disp" in paths and "vel" in paths:
        disp = read_timeseries_csv(paths["disp"])
        vel = read_timeseries_csv(paths["vel"])
    else:
        band = tuple(pre.get("bandpass_hz", (4.0, 50.0)))
        disp, vel, accel = derive_states(
            accel, band, pre.get("highpass_hz", 3.0), pre.get("order", 3)
        )
    target = pre.get("target_rate_hz")
    start = pre.get("start_at_s", 0.0)
    if target or start:
        target = float(target or accel.sample_rate)
        band_top = pre.get("bandpass_hz", (0.0, 0.0))[1]
        if band_top and band_top >= target / 2.0:
            raise ConfigError("band-pass upper edge must stay below the decimated Nyquist")
        disp = resample_and_trim(disp, target, start)
        vel = resample_and_trim(vel, target, start)
        accel = resample_and_trim(accel, target, start)
    return StateHistory(accel.times, disp.data, vel.data, accel.data, label)


def load_datasets(cfg, out_dir: Path, model: ModelSpec) -> SivaDatasets:
    ds_cfg = cfg.get("datasets")
    if not ds_cfg or "training" not in ds_cfg:
        raise ConfigError("config needs datasets.training")
    validation = ds_cfg.get("validation") or []
    if not validation:
        raise ConfigError("at least one validation dataset is required")
    training = _load_triplet(ds_cfg["training"], cfg, out_dir, model.dof, "training")
    vals = [
        _load_triplet(v, cfg, out_dir, model.dof, f"validation{i}")
        for i, v in enumerate(validation)
    ]
    return SivaDatasets(training, vals)


# ---------------------------------------------------------------------------
# identify


def cmd_identify(cfg, out_dir: Path) -> int:
    model = model_from_config(cfg)
    tcfg = train_config_from(cfg)
    datasets = load_datasets(cfg, out_dir, model)
    P, D = networks_for(model, tcfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    log.info("training %d epochs (batch %d, lr %g, seed %d)",
             tcfg.max_epochs, tcfg.batch_size, tcfg.learning_rate, tcfg.seed)
    with open(out_dir / EPOCH_LOG_NAME, "w") as fh:
        def on_epoch(record):
            fh.write(json.dumps(record.to_dict()) + "\n")

        P, D, records = run_training(P, D, datasets, model, tcfg, epoch_callback=on_epoch)
    convergence = detect_convergence(records, tcfg)
    bundle = {
        "format_version": 1,
        "model": model_to_dict(model),
        "train": dict(cfg["train"]),
        "convergence_epoch": convergence,
        "generator": nn.mlp_to_dict(P),
        "discriminator": nn.mlp_to_dict(D),
        "records": [r.to_dict() for r in records],
    }
    (out_dir / BUNDLE_NAME).write_text(json.dumps(bundle) + "\n")
    write_resolved_config(cfg, out_dir)
    log.info("convergence epoch: %s; final params: %s",
             convergence, records[-1].param_mean)
    return 0


def load_bundle(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"bundle not found: {path}")
    bundle = json.loads(path.read_text())
    bundle["_model"] = model_from_dict(bundle["model"])
    bundle["_generator"] = nn.mlp_from_dict(bundle["generator"])
    bundle["_records"] = [EpochRecord.from_dict(r) for r in bundle["records"]]
    return bundle


# ---------------------------------------------------------------------------
# select


def _resolve_from_epoch(sel_cfg, bundle) -> int:
    records = bundle["_records"]
    if not records:
        raise ConfigError("bundle has no epoch records")
    fe = sel_cfg.get("from_epoch", "auto")
    if fe == "auto":
        fe = bundle.get("convergence_epoch")
        if fe is None:
            fe = max(1, records[-1].epoch // 2)
            log.warning("no detected convergence epoch; averaging from epoch %d", fe)
    fe = int(fe)
    if fe > records[-1].epoch:
        raise ConfigError("from_epoch is beyond the recorded history")
    return fe


def run_selection(cfg, out_dir: Path, bundle) -> dict:
    model = bundle["_model"]
    records = bundle["_records"]
    sel = cfg["select"]
    ivp = ivp_config_from(cfg)
    datasets = load_datasets(cfg, out_dir, model)
    histories = [datasets.training]
    if sel.get("use_validation"):
        histories += datasets.validation

    report = {"seed": cfg["seed"], "approaches": {}}
    names = model.coefficient_names
    mean_sets = {}

    if "one" in sel["approaches"]:
        rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]).spawn(4)[3])
        mean, posterior, _ = uq.approach_one(
            bundle["_generator"], model, int(sel["n_samples"]), rng
        )
        mean_sets["one"] = mean
        report["approaches"]["one"] = {
            "parameters": mean.as_dict(),
            "posterior": posterior,
            "n_samples": int(sel["n_samples"]),
        }
    if "two" in sel["approaches"] or "three" in sel["approaches"]:
        from_epoch = _resolve_from_epoch(sel, bundle)
        harvest = np.array(
            [[r.param_mean[n] for n in names] for r in records if r.epoch >= from_epoch]
        )
        if harvest.size == 0:
            raise ConfigError("from_epoch leaves no harvested epochs")
    if "two" in sel["approaches"]:
        mean, posterior, _ = uq.approach_two(records, model, from_epoch)
        mean_sets["two"] = mean
        report["approaches"]["two"] = {
            "parameters": mean.as_dict(),
            "posterior": posterior,
            "from_epoch": from_epoch,
        }
    if "three" in sel["approaches"]:
        stride = max(1, int(sel.get("stride", 1)))
        candidates = [
            ParameterSet(names, row) for row in harvest[::stride]
        ]
        for extra in mean_sets.values():
            candidates.append(extra)
        log.info("approach three: %d candidate simulations", len(candidates))
        best, best_mse, scores = uq.approach_three(candidates, model, histories, ivp)
        mean_sets["three"] = best
        report["approaches"]["three"] = {
            "parameters": best.as_dict(),
            "mse": best_mse,
            "candidates": len(candidates),
            "from_epoch": from_epoch,
            "stride": stride,
        }

    # score approaches I/II by resimulating their mean parameter sets
    for name in ("one", "two"):
        if name in mean_sets and name in report["approaches"]:
            try:
                total = 0.0
                for h in histories:
                    y0 = np.concatenate([h.disp[0], h.vel[0]])
                    traj = integrate_rk45(model, mean_sets[name], y0, h.times, config=ivp)
                    total += displacement_mse(h.times, h.disp, traj)
                report["approaches"][name]["mse"] = total / len(histories)
            except IntegrationError as exc:
                report["approaches"][name]["mse"] = None
                log.warning("approach %s resimulation failed: %s", name, exc)
    return report


def write_selection(report, out_dir: Path):
    (out_dir / "selection.json").write_text(json.dumps(report, indent=2) + "\n")
    lines = ["approach,coefficient,value,mse"]
    for name, entry in report["approaches"].items():
        mse = entry.get("mse")
        mse_s = "" if mse is None else f"{mse:.17g}"
        for coef, value in entry["parameters"].items():
            lines.append(f"{name},{coef},{value:.17g},{mse_s}")
    (out_dir / "selection.csv").write_text("\n".join(lines) + "\n")


def cmd_select(cfg, out_dir: Path, bundle_path=None) -> int:
    bundle = load_bundle(bundle_path or out_dir / BUNDLE_NAME)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_selection(cfg, out_dir, bundle)
    write_selection(report, out_dir)
    write_resolved_config(cfg, out_dir)
    for name, entry in report["approaches"].items():
        log.info("approach %s: %s (mse %s)", name, entry["parameters"], entry.get("mse"))
    return 0


# ---------------------------------------------------------------------------
# sindy baseline


def cmd_sindy(cfg, out_dir: Path) -> int:
    model = model_from_config(cfg)
    s_cfg = cfg.get("sindy")
    if not s_cfg or not s_cfg.get("library"):
        raise ConfigError("config needs a sindy.library term list")
    threshold = float(s_cfg.get("threshold", 0.1))
    datasets = load_datasets(cfg, out_dir, model)
    history = datasets.training
    terms = [sindy.parse_term(t, model.dof) for t in s_cfg["library"]]
    eom_coefs, sparse, equations = sindy.identify_equations(
        history.disp, history.vel, history.accel, model.masses_kg, terms, threshold,
        int(s_cfg.get("max_iters", 10)),
    )

    resim_mse = None
    try:
        names, values, gterms = sindy.sparse_model_terms(terms, eom_coefs)
        gmodel = ModelSpec(
            "generic", model.masses_kg, tuple(CoefficientSpec(n) for n in names), gterms
        )
        y0 = np.concatenate([history.disp[0], history.vel[0]])
        traj = integrate_rk45(
            gmodel, ParameterSet(tuple(names), np.array(values)), y0, history.times,
            config=ivp_config_from(cfg),
        )
        resim_mse = displacement_mse(history.times, history.disp, traj)
    except (IntegrationError, ValueError) as exc:
        log.warning("baseline resimulation failed: %s", exc)

    report = {
        "threshold": threshold,
        "library": [t.label for t in terms],
        "coefficients": {
            t.label: [float(c) for c in eom_coefs[j]] for j, t in enumerate(terms)
        },
        "equations": equations,
        "iterations": int(sparse.iterations),
        "rank_deficient": bool(sparse.rank_deficient),
        "condition": float(sparse.condition),
        "resimulated_displacement_mse": resim_mse,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sindy.json").write_text(json.dumps(report, indent=2) + "\n")
    write_resolved_config(cfg, out_dir)
    for eq in equations:
        log.info("identified: %s", eq)
    return 0


# ---------------------------------------------------------------------------
# report


def compare_series(times, measured: np.ndarray, simulated: np.ndarray):
    """Rows of (t, measured..., simulated...) plus summary error metrics."""
    measured = np.atleast_2d(measured)
    simulated = np.atleast_2d(simulated)
    if measured.shape != simulated.shape:
        raise ValueError("measured and simulated grids disagree")
    err = measured - simulated
    mse = float(np.mean(np.sum(err * err, axis=1)))
    table = np.column_stack([np.asarray(times), measured, simulated])
    return table, mse


def _write_table(path, header, table):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def cmd_report(cfg, out_dir: Path, bundle_path=None) -> int:
    bundle = load_bundle(bundle_path or out_dir / BUNDLE_NAME)
    model = bundle["_model"]
    sel_path = out_dir / "selection.json"
    if sel_path.is_file():
        selection = json.loads(sel_path.read_text())
    else:
        selection = run_selection(cfg, out_dir, bundle)
        write_selection(selection, out_dir)
    datasets = load_datasets(cfg, out_dir, model)
    ivp = ivp_config_from(cfg)
    report_dir = out_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    histories = [datasets.training] + datasets.validation
    mse_rows = ["approach,dataset,displacement_mse"]
    for name, entry in selection["approaches"].items():
        params = model.parameter_set(entry["parameters"])
        for h in histories:
            y0 = np.concatenate([h.disp[0], h.vel[0]])
            try:
                traj = integrate_rk45(model, params, y0, h.times, config=ivp)
            except IntegrationError as exc:
                log.warning("report simulation failed (%s, %s): %s", name, h.label, exc)
                mse_rows.append(f"{name},{h.label},")
                continue
            table, mse = compare_series(h.times, h.disp, traj.displacements)
            dof = model.dof
            header = (
                ["t"]
                + [f"measured_q{i}" for i in range(dof)]
                + [f"simulated_q{i}" for i in range(dof)]
            )
            _write_table(report_dir / f"compare_disp_{h.label}_{name}.csv", header, table)
            mse_rows.append(f"{name},{h.label},{mse:.17g}")

            fs = 1.0 / float(np.mean(np.diff(h.times)))
            freqs, mag_meas = dft_magnitude(TimeSeries(h.disp, fs))
            _, mag_sim = dft_magnitude(TimeSeries(traj.displacements, fs))
            spec_header = (
                ["freq_hz"]
                + [f"measured_q{i}" for i in range(dof)]
                + [f"simulated_q{i}" for i in range(dof)]
            )
            spec_table = np.column_stack([freqs, mag_meas, mag_sim])
            spec_path = report_dir / f"spectrum_disp_{h.label}_{name}.csv"
            with open(spec_path, "w") as fh:
                # amplitude scaling: 2|X_k|/N, halved at DC and Nyquist, so
                # a unit sinusoid on an exact bin reads 1
                fh.write("# single-sided displacement amplitude spectrum\n")
                fh.write(",".join(spec_header) + "\n")
                for row in spec_table:
                    fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    (report_dir / "mse_table.csv").write_text("\n".join(mse_rows) + "\n")
    write_resolved_config(cfg, out_dir)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="siva",
        description="identify, validate and report equation-of-motion "
        "coefficients from vibration data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "identify", "select", "sindy", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)
        if name in ("select", "report"):
            p.add_argument("--bundle", default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=os.environ.get("SIVA_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    out_dir = Path(args.out)
    try:
        cfg = load_config(args.config, args.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "identify":
            return cmd_identify(cfg, out_dir)
        if args.command == "select":
            return cmd_select(cfg, out_dir, args.bundle)
        if args.command == "sindy":
            return cmd_sindy(cfg, out_dir)
        return cmd_report(cfg, out_dir, args.bundle)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
