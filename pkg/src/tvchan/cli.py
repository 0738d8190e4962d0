"""Command-line front end.

Subcommands: simulate, estimate, bench, crb, check-uniqueness. A JSON config
file supplies defaults; explicit flags override it. The output directory is
resolved as --out, then $TVCHAN_OUT, then the config's "out", then ./tvchan-out.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import AcquisitionContext, ReceivedTensor, add_noise, assemble_noiseless, generate_context
from .als import AlsConfig, als_estimate
from .channel import PathSet, SystemConfig, channel_set, desk_config, paper_config, sample_paths
from .crb import MODES, crb_curve
from .esprit import DEFAULT_GRID, SmoothingPlan, check_uniqueness, estimate
from .evaluation import ESTIMATORS, SweepSpec, channel_nmse, match_paths, parameter_mse, run_sweep
from .files import Scenario, load_scenario, save_scenario, write_csv, write_json
from .tensor import DenseTensor

OUT_ENV = "TVCHAN_OUT"
DEFAULT_OUT = "tvchan-out"

PRESETS = {
    "desk": desk_config,
    "paper": paper_config,
    "toy": lambda: SystemConfig(n_bs=8, n_ms=4, q_bs=2, q_ms=2, k_pilot=3, n_sym=2, m_slots=3),
}


@dataclass
class RunConfig:
    """Resolved settings for one CLI invocation (the JSON config schema)."""

    preset: str = "desk"
    system: dict = field(default_factory=dict)  # SystemConfig overrides on top of the preset
    seed: int = 0
    snr_db: list = field(default_factory=lambda: [10.0])
    trials: int = 10
    l_paths: int = 3
    speed_mps: float = 30.0
    estimators: list = field(default_factory=lambda: ["esprit"])
    grid_size: int = DEFAULT_GRID
    refine_angles: bool = False
    crb_mode: str = "split"
    with_crb: bool = False
    axis: str = "snr_db"
    values: list | None = None  # sweep values; defaults to snr_db when axis is snr_db
    k4: int | None = None
    als: dict = field(default_factory=dict)
    scenario: str | None = None
    workers: int = 1
    timing: bool = False  # wall-clock tables are the only non-reproducible output, so opt-in
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def system_config(self) -> SystemConfig:
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; use one of {sorted(PRESETS)}")
        cfg = PRESETS[self.preset]().with_(**self.system)
        return cfg.with_(seed=self.seed, snr_db=float(self.snr_db[0]))

    def sweep_spec(self) -> SweepSpec:
        values = self.values if self.values is not None else (self.snr_db if self.axis == "snr_db" else None)
        if values is None:
            raise ValueError(f"sweep over {self.axis!r} needs 'values' in the config")
        return SweepSpec(axis=self.axis, values=tuple(values), trials=self.trials, base=self.system_config(),
                         estimators=tuple(self.estimators), l_paths=self.l_paths, speed_mps=self.speed_mps,
                         grid_size=self.grid_size, refine=self.refine_angles, als=AlsConfig(**self.als),
                         with_crb=self.with_crb, crb_mode=self.crb_mode, seed=self.seed)


class CliError(Exception):
    pass


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        data = json.load(fh)
    if "config" in data and "outputs" in data:  # a run manifest
        data = data["config"]
    return RunConfig.from_dict(data)


def resolve(args: argparse.Namespace) -> RunConfig:
    rc = load_config(args.config)
    over = {}
    for name in ("seed", "trials", "scenario", "crb_mode", "preset", "workers", "k4"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if args.snr_db:
        over["snr_db"] = [float(x) for x in args.snr_db]
    if args.paths is not None:
        over["l_paths"] = args.paths
    if args.estimators is not None:
        ests = [e.strip() for e in args.estimators.split(",") if e.strip()]
        bad = [e for e in ests if e not in ESTIMATORS]
        if bad or not ests:
            raise CliError(f"--estimators must be a csv list drawn from {ESTIMATORS}")
        over["estimators"] = ests
    if args.refine_angles is not None:
        over["refine_angles"] = args.refine_angles
    if getattr(args, "with_crb", None):
        over["with_crb"] = True
    if getattr(args, "timing", None):
        over["timing"] = True
    system = dict(rc.system)
    if args.k_pilot is not None:
        system["k_pilot"] = args.k_pilot
    if args.m_slots is not None:
        system["m_slots"] = args.m_slots
    over["system"] = system
    rc = replace(rc, **over)
    out = args.out or os.environ.get(OUT_ENV) or rc.out or DEFAULT_OUT
    return replace(rc, out=str(out))


def _scenario_or_sampled(rc: RunConfig, cfg: SystemConfig, rng: np.random.Generator) -> tuple[SystemConfig, PathSet]:
    if rc.scenario:
        sc = load_scenario(rc.scenario)
        return cfg.with_(f_c_hz=sc.f_c_hz), sc.paths
    return cfg, sample_paths(cfg, rc.l_paths, rc.speed_mps, rng)


def _simulate(rc: RunConfig):
    cfg = rc.system_config()
    rng = np.random.default_rng(rc.seed)
    cfg, paths = _scenario_or_sampled(rc, cfg, rng)
    ctx = generate_context(cfg, rng)
    tensor = add_noise(assemble_noiseless(cfg, paths, ctx), cfg.snr_db, rng)
    return cfg, paths, tensor


def _save_npz(path: Path, **arrays) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _path_rows(label: str, paths: PathSet) -> list[dict]:
    return [{"estimator": label, "path": i + 1, "aoa_rad": paths.aoa_rad[i], "aod_rad": paths.aod_rad[i],
             "delay_s": paths.delay_s[i], "doppler_hz": paths.doppler_hz[i],
             "gain_re": paths.gain[i].real, "gain_im": paths.gain[i].imag} for i in range(len(paths))]


def cmd_simulate(rc: RunConfig) -> dict:
    cfg, paths, tensor = _simulate(rc)
    out = Path(rc.out)
    files = {
        "tensor": _save_npz(out / "tensor.npz", y=tensor.y.data, w=tensor.ctx.w, s=tensor.ctx.s,
                            noise_var=np.float64(tensor.ctx.noise_var),
                            system=np.array(json.dumps(cfg.to_dict(), sort_keys=True))),
        "paths": save_scenario(out / "paths.csv", Scenario(paths, cfg.f_c_hz)),
    }
    return files


def _load_tensor(path: str) -> ReceivedTensor:
    with np.load(path) as z:
        cfg = SystemConfig(**json.loads(str(z["system"])))
        ctx = AcquisitionContext(z["w"], z["s"], float(z["noise_var"]))
        return ReceivedTensor(DenseTensor(z["y"]), ctx, cfg)


def cmd_estimate(rc: RunConfig, tensor_path: str | None = None) -> dict:
    if tensor_path:
        tensor = _load_tensor(tensor_path)
        cfg = tensor.cfg
        paths = load_scenario(rc.scenario).paths if rc.scenario else None
    else:
        cfg, paths, tensor = _simulate(rc)
    rows, metrics = [], []
    if paths is not None:
        rows += _path_rows("truth", paths)
    for name in rc.estimators:
        if name == "esprit":
            plan = SmoothingPlan.with_window(cfg.m_slots, rc.k4) if rc.k4 else None
            res = estimate(tensor, rc.l_paths, plan, grid_size=rc.grid_size, refine=rc.refine_angles)
        else:
            als_cfg = AlsConfig(**{"seed": rc.seed, **rc.als})
            res = als_estimate(tensor, rc.l_paths, als_cfg, grid_size=rc.grid_size, refine=rc.refine_angles)
        est = res.paths
        m = {"estimator": name}
        if paths is not None:
            perm = match_paths(paths, est)
            est = est.permuted(perm)
            m.update({f"mse_{k}": v for k, v in parameter_mse(paths, est).items()})
            m["nmse"] = channel_nmse(channel_set(cfg, paths), res.channels)
        rows += _path_rows(name, est)
        metrics.append(m)
    out = Path(rc.out)
    files = {"estimates": write_csv(out / "estimates.csv", rows)}
    if paths is not None:
        files["metrics"] = write_csv(out / "metrics.csv", metrics)
    return files


def cmd_bench(rc: RunConfig) -> dict:
    spec = rc.sweep_spec()
    res = run_sweep(spec, workers=rc.workers)
    out = Path(rc.out)
    trial_rows = []
    for t in res.trials:
        row = {"estimator": t.estimator, "axis": spec.axis, "value": t.value, "trial": t.trial, "seed": t.seed,
               "l_paths": t.l_paths, "success": t.success, "nmse": t.nmse}
        row.update({f"se_{k}": v for k, v in t.errors.items()})
        row["message"] = t.message
        trial_rows.append(row)
    cols = ["estimator", "axis", "value", "trial", "seed", "l_paths", "success", "nmse",
            "se_theta", "se_phi", "se_tau", "se_alpha", "se_fd", "message"]
    files = {
        "results": write_csv(out / "results.csv", res.table()),
        "trials": write_csv(out / "trials.csv", trial_rows, cols),
    }
    if rc.timing:
        timing = [{"estimator": t.estimator, "value": t.value, "trial": t.trial, "wall_time_s": t.wall_time}
                  for t in res.trials]
        files["timing"] = write_csv(out / "timing.csv", timing)
        files["timing_summary"] = write_csv(out / "timing_summary.csv", res.timing())
    return files


def cmd_crb(rc: RunConfig) -> dict:
    cfg = rc.system_config()
    rng = np.random.default_rng(rc.seed)
    cfg, paths = _scenario_or_sampled(rc, cfg, rng)
    ctx = generate_context(cfg, rng)
    rows = []
    for snr, res in crb_curve(cfg, ctx, paths, rc.snr_db, rc.crb_mode):
        row = {"snr_db": snr}
        row.update(dict(zip(res.names, res.crb_diag)))
        row["fim_rank"] = res.rank
        rows.append(row)
    out = Path(rc.out)
    return {"crb": write_csv(out / "crb.csv", rows),
            "paths": save_scenario(out / "paths.csv", Scenario(paths, cfg.f_c_hz))}


def cmd_check(rc: RunConfig) -> tuple[dict, str]:
    cfg = rc.system_config()
    plan = SmoothingPlan.with_window(cfg.m_slots, rc.k4) if rc.k4 else SmoothingPlan.balanced(cfg.m_slots)
    rep = check_uniqueness(cfg, plan, rc.l_paths)
    report = {"satisfied": rep.satisfied, "k4": plan.k4, "l4": plan.l4, "l_paths": rc.l_paths,
              "conditions": rep.conditions}
    return {"uniqueness": write_json(Path(rc.out) / "uniqueness.json", report)}, rep.summary()


def write_manifest(rc: RunConfig, command: str, outputs: dict) -> Path:
    out = Path(rc.out)
    manifest = {
        "command": command,
        "config": rc.to_dict(),
        "seed": rc.seed,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": {k: os.path.relpath(v, out) for k, v in outputs.items()},
    }
    return write_json(out / "manifest.json", manifest)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (a manifest.json is accepted too)")
    common.add_argument("--preset", choices=sorted(PRESETS), help="base system configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--snr-db", dest="snr_db", type=float, action="append",
                        help="SNR in dB; repeat for a sweep")
    common.add_argument("--trials", type=int)
    common.add_argument("--paths", type=int, help="number of propagation paths L")
    common.add_argument("--k-pilot", dest="k_pilot", type=int)
    common.add_argument("--m-slots", dest="m_slots", type=int)
    common.add_argument("--k4", type=int, help="smoothing window length (default balanced)")
    common.add_argument("--estimators", help="csv list from: " + ",".join(ESTIMATORS))
    common.add_argument("--scenario", help="scenario CSV with path parameters")
    common.add_argument("--out", help=f"output directory (env {OUT_ENV} also honoured)")
    common.add_argument("--refine-angles", dest="refine_angles", action=argparse.BooleanOptionalAction,
                        default=None)
    common.add_argument("--crb-mode", dest="crb_mode", choices=MODES)
    common.add_argument("--workers", type=int)

    p = argparse.ArgumentParser(prog="tvchan", description="Time-varying mmWave channel estimation toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="draw paths and a received pilot tensor")
    pe = sub.add_parser("estimate", parents=[common], help="estimate path parameters")
    pe.add_argument("--input", help="tensor.npz written by simulate")
    pb = sub.add_parser("bench", parents=[common], help="Monte Carlo sweep")
    pb.add_argument("--with-crb", dest="with_crb", action="store_true", help="add CRB columns")
    pb.add_argument("--timing", action="store_true", help="also write wall-clock timing tables")
    sub.add_parser("crb", parents=[common], help="Cramér-Rao bounds over SNR")
    sub.add_parser("check-uniqueness", parents=[common], help="evaluate the CPD uniqueness conditions")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = resolve(args)
        summary = None
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "simulate":
                outputs = cmd_simulate(rc)
            elif args.command == "estimate":
                outputs = cmd_estimate(rc, args.input)
            elif args.command == "bench":
                outputs = cmd_bench(rc)
            elif args.command == "crb":
                outputs = cmd_crb(rc)
            else:
                outputs, summary = cmd_check(rc)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        manifest = write_manifest(rc, args.command, outputs)
    except Exception as exc:  # reported as JSON, never a traceback
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 1
    if summary:
        print(summary)
    for name, path in outputs.items():
        print(f"{name}: {path}")
    print(f"manifest: {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
