"""Loss comparisons across noise models that share (or do not share) sigma_eff."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DataSource, NoiseModel
from .gps import NuField
from .nu_train import coupled_bundle_loss, loss_via_bundles
from .rng import stream


@dataclass
class UniversalityReport:
    members: list[NoiseModel]
    coupled: list[float]
    independent: list[float]
    stderr: list[float]
    pairs: list[dict] = field(default_factory=list)
    coupled_tol: float = 1e-12
    n_stderr: float = 3.0

    @property
    def passed(self) -> bool:
        return all(p["coupled_ok"] and p["independent_ok"] for p in self.pairs)

    def to_dict(self) -> dict:
        return {
            "members": [{"sigma": mo.sigma, "m": mo.m, "sigma_eff": mo.sigma_eff(),
                         "coupled_loss": c, "independent_loss": i, "stderr": s}
                        for mo, c, i, s in zip(self.members, self.coupled, self.independent, self.stderr)],
            "pairs": self.pairs,
            "coupled_tol": self.coupled_tol,
            "n_stderr": self.n_stderr,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def universality_report(nu: NuField, members: list[NoiseModel], data: DataSource, n: int,
                        seed: int = 0, coupled_tol: float = 1e-12,
                        n_stderr: float = 3.0) -> UniversalityReport:
    """Reconstruction loss ``E||x - xhat(y)||^2`` for every member, two ways.

    Coupled: every member sees the same clean points and the same standardized
    residual, scaled by its own ``sigma_eff``; class members must agree to
    rounding. Independent: each member draws its own clean points and
    measurements, and pairs are compared in units of their joint standard error.
    """
    x = data.sample(n, stream(seed, 0))
    z = stream(seed, 1).standard_normal(x.shape)
    coupled, indep, se = [], [], []
    for k, model in enumerate(members):
        coupled.append(coupled_bundle_loss(nu, model, x, model.sigma_eff() * z, stream(seed, 100 + k)))
        x_own = data.sample(n, stream(seed, 2000 + k))
        per = loss_via_bundles(nu, model, x_own, stream(seed, 1000 + k), per_sample=True)
        indep.append(float(per.mean()))
        se.append(float(per.std(ddof=1) / math.sqrt(n)))
    pairs = []
    for i, j in itertools.combinations(range(len(members)), 2):
        dc = abs(coupled[i] - coupled[j])
        di = abs(indep[i] - indep[j])
        joint = math.hypot(se[i], se[j])
        pairs.append({"a": [members[i].sigma, members[i].m], "b": [members[j].sigma, members[j].m],
                      "coupled_delta": dc, "independent_delta": di, "joint_stderr": joint,
                      "coupled_ok": dc <= coupled_tol, "independent_ok": di <= n_stderr * joint})
    return UniversalityReport(list(members), coupled, indep, se, pairs, coupled_tol, n_stderr)
