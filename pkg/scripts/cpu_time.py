"""Mean wall time per estimator call for ESPRIT and ALS over the number of paths."""
from _common import base_parser, preset

from tvchan.evaluation import SweepSpec, run_sweep
from tvchan.files import write_csv


def main():
    p = base_parser(__doc__)
    p.add_argument("--l-values", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--snr-db", type=float, default=10.0)
    a = p.parse_args()
    spec = SweepSpec(axis="l_paths", values=tuple(a.l_values), trials=a.trials,
                     base=preset(a.preset).with_(snr_db=a.snr_db), estimators=("esprit", "als"), seed=a.seed)
    # timing is measured serially so concurrent trials do not distort it
    res = run_sweep(spec, workers=1)
    rows = res.timing()
    print(write_csv(a.out / "cpu_time.csv", rows))
    for r in rows:
        print(f"L={r['value']:g} {r['estimator']:6s} mean {r['wall_time_mean'] * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
