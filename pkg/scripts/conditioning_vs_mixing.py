"""Median jump IACT against the condition number for members of one class on Gaussian data.

    python3 scripts/conditioning_vs_mixing.py --ms 1,4,16,64
"""

import argparse

import numpy as np
from scipy import stats

from mdensity.benchmark import SweepConfig, member_iacts
from mdensity.core import class_members
from mdensity.nu_analytic import GaussianNu
from mdensity.spectral import GaussianPrior, spectrum_closed_form


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--taus", default="1,0.5")
    p.add_argument("--sigma-eff", type=float, default=0.25)
    p.add_argument("--ms", default="1,4,16,64")
    p.add_argument("--gamma-eff", type=float, default=1.0)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--steps", type=int, default=4000)
    args = p.parse_args(argv)
    taus = np.array([float(t) for t in args.taus.split(",")])
    members = class_members(args.sigma_eff, [int(m) for m in args.ms.split(",")])
    sc = SweepConfig(sigma_eff=args.sigma_eff, gamma_effs=(args.gamma_eff,), seeds=args.seeds,
                     n_steps=args.steps, steps_per_jump=2, burn_in=400)
    iacts = member_iacts(sc, GaussianNu(0.0, taus, args.sigma_eff), members)
    kappas, medians = [], []
    for mo in members:
        kappas.append(spectrum_closed_form(mo.sigma, mo.m, GaussianPrior(taus)).kappa)
        medians.append(float(np.median(iacts[mo.m])))
        q1, q3 = np.percentile(iacts[mo.m], [25, 75])
        print(f"M={mo.m:<4} sigma={mo.sigma:<6.3f} kappa={kappas[-1]:<8.3g} IACT median {medians[-1]:.1f} "
              f"(IQR {q1:.1f}-{q3:.1f})")
    print(f"Spearman(kappa, median IACT) = {stats.spearmanr(kappas, medians).statistic:.3f}")


if __name__ == "__main__":
    main()
