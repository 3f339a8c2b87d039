"""JSON (de)serialization of population specs and simulation configs.

A population spec JSON gives either explicit matrices::

    {"population": {"p": 1, "theta": [0.2], "Psi_bb": [[0.3]], ...}}

or a heritability parameterization that the builders solve::

    {"heritability": {"kind": "univariable", "h2_exposure": 0.3, ...}}
    {"heritability": {"kind": "ar1_multivariable", "p": 6, ...}}

Simulation configs wrap a spec with sweep options (mode, methods,
replications, seed, optional pleiotropy injection).
"""

from __future__ import annotations

import numpy as np

from .exceptions import InputError
from .pleiotropy import IterConfig
from .theory import (
    PopulationSpec,
    ar1_multivariable_spec,
    overlap_full,
    overlap_none,
    overlap_univariable,
    univariable_spec,
)


def _overlap_from_value(value, n: np.ndarray) -> np.ndarray | None:
    """Accept an explicit matrix, 'full', 'none', or a univariable fraction."""
    if value is None:
        return None
    if isinstance(value, str):
        if value == "full":
            return overlap_full(n)
        if value == "none":
            return overlap_none(n)
        raise InputError(f"unknown overlap keyword '{value}'")
    if isinstance(value, (int, float)) and len(n) == 2:
        frac = float(value)
        if not 0.0 <= frac <= 1.0:
            raise InputError("overlap fraction must lie in [0, 1]")
        return overlap_univariable(int(n[0]), int(n[1]), int(round(frac * min(n))))
    return np.asarray(value, dtype=np.int64)


def population_spec_from_dict(raw: dict) -> PopulationSpec:
    if "population" in raw:
        pop = raw["population"]
        n = np.asarray(pop["n"], dtype=np.int64)
        return PopulationSpec(
            p=int(pop["p"]),
            theta=np.asarray(pop["theta"], dtype=float),
            Psi_bb=np.asarray(pop["Psi_bb"], dtype=float),
            Sigma_uu=np.asarray(pop["Sigma_uu"], dtype=float),
            sigma_uv=np.asarray(pop["sigma_uv"], dtype=float),
            sigma_vv=float(pop["sigma_vv"]),
            n=n,
            overlap=_overlap_from_value(pop.get("overlap"), n),
            m=int(pop["m"]),
        )
    if "heritability" in raw:
        h = dict(raw["heritability"])
        kind = h.pop("kind", "univariable")
        if kind == "univariable":
            n0, n1 = int(h["n0"]), int(h["n1"])
            if "n01" in h:
                n01 = int(h["n01"])
            else:
                n01 = int(round(float(h.get("overlap_fraction", 1.0)) * min(n0, n1)))
            return univariable_spec(
                h2_exposure=float(h["h2_exposure"]),
                h2_outcome=float(h["h2_outcome"]),
                rho_uv=float(h["rho_uv"]),
                theta=float(h["theta"]),
                n0=n0,
                n1=n1,
                n01=n01,
                m=int(h["m"]),
            )
        if kind == "ar1_multivariable":
            p = int(h["p"])
            n = np.asarray(h["n"], dtype=np.int64)
            overlap = _overlap_from_value(h.get("overlap", "full"), n)
            return ar1_multivariable_spec(
                p=p,
                theta=np.asarray(h["theta"], dtype=float),
                h2_exposure=float(h["h2_exposure"]),
                h2_outcome=float(h["h2_outcome"]),
                rho_genetic=float(h["rho_genetic"]),
                rho_noise=float(h["rho_noise"]),
                n=n,
                overlap=overlap,
                m=int(h["m"]),
            )
        raise InputError(f"unknown heritability kind '{kind}'")
    raise InputError("spec JSON must contain a 'population' or 'heritability' block")


def sim_config_from_dict(raw: dict):
    from .simulate import SimConfig, UhpSpec

    spec = population_spec_from_dict(raw)
    sim = raw.get("simulate", {})
    uhp = None
    if "uhp" in sim and sim["uhp"] is not None:
        uhp = UhpSpec(count=int(sim["uhp"]["count"]), magnitude_sd=float(sim["uhp"]["magnitude_sd"]))
    iter_raw = sim.get("iter", {})
    iter_config = IterConfig(
        q=float(iter_raw.get("q", 0.05)),
        max_iter=int(iter_raw.get("max_iter", 30)),
        tol=float(iter_raw.get("tol", 1e-6)),
        selector=iter_raw.get("selector", "fdr"),
        log_c0=iter_raw.get("log_c0"),
    )
    return SimConfig(
        spec=spec,
        replications=int(sim.get("replications", 100)),
        seed=int(sim.get("seed", 0)),
        mode=sim.get("mode", "individual"),
        methods=tuple(sim.get("methods", ["IVW", "MRBEE"])),
        maf_range=tuple(sim.get("maf_range", (0.05, 0.5))),
        uhp=uhp,
        error_cov_source=sim.get("error_cov_source", "theoretical"),
        null_variants=int(sim.get("null_variants", 2000)),
        iter_config=iter_config,
    )
