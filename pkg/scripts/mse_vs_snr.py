"""Parameter MSE of the ESPRIT estimator against the CRB over SNR."""
from _common import base_parser, preset

from tvchan.evaluation import SweepSpec, run_sweep
from tvchan.files import write_csv


def main():
    p = base_parser(__doc__)
    p.add_argument("--snr-db", type=float, nargs="+", default=[-5, 0, 5, 10, 15, 20, 25])
    p.add_argument("--refine-angles", action="store_true")
    p.add_argument("--crb-mode", choices=("split", "paper"), default="split")
    a = p.parse_args()
    spec = SweepSpec(values=tuple(a.snr_db), trials=a.trials, base=preset(a.preset), l_paths=a.paths,
                     refine=a.refine_angles, with_crb=True, crb_mode=a.crb_mode, seed=a.seed)
    rows = run_sweep(spec, a.workers).table()
    print(write_csv(a.out / "mse_vs_snr.csv", rows))
    for r in rows:
        print(f"{r['value']:6.1f} dB  " + "  ".join(
            f"{f}: {r[f'mse_{f}_median']:.2e}/{r[f'crb_{f}_median']:.2e}" for f in ("theta", "phi", "tau", "fd")))


if __name__ == "__main__":
    main()
