"""Channel NMSE of ESPRIT and ALS against SNR, pilot subcarriers K or mini-slots M."""
from _common import base_parser, preset

from tvchan.evaluation import SweepSpec, run_sweep
from tvchan.files import write_csv

DEFAULT_VALUES = {"snr_db": [0, 5, 10, 15, 20], "k_pilot": [4, 8, 12, 16], "m_slots": [4, 6, 8, 10]}


def main():
    p = base_parser(__doc__)
    p.add_argument("--axis", choices=sorted(DEFAULT_VALUES), default="snr_db")
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument("--snr-db", type=float, default=10.0, help="fixed SNR when sweeping K or M")
    a = p.parse_args()
    values = a.values or DEFAULT_VALUES[a.axis]
    if a.axis != "snr_db":
        values = [int(v) for v in values]
    spec = SweepSpec(axis=a.axis, values=tuple(values), trials=a.trials,
                     base=preset(a.preset).with_(snr_db=a.snr_db), estimators=("esprit", "als"),
                     l_paths=a.paths, seed=a.seed)
    rows = run_sweep(spec, a.workers).table()
    print(write_csv(a.out / f"nmse_vs_{a.axis}.csv", rows))
    for r in rows:
        print(f"{a.axis}={r['value']:g} {r['estimator']:6s} median NMSE {r['nmse_median']:.3e} "
              f"failures {r['failures']}")


if __name__ == "__main__":
    main()
