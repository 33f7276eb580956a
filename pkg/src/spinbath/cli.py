"""Declarative pipeline driver: flat key-value config in, deterministic data
products out (realization, correlation series, spectra, scalograms, SST maps,
band traces, manifest with content hashes).

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cce, lattice, tfa
from .hamiltonian import EffectiveParams, TermMask

OUTDIR_ENV = "SPINBATH_OUTDIR"

#: default channel bands on the omega_bar axis
BANDS = {"0Q": (0.0, 0.1), "1Q": (0.4, 0.6), "2Q": (0.9, 1.1)}


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


@dataclass
class RunConfig:
    # lattice / bath
    a0: float = 5.43e-10
    box: tuple[int, int, int] = (10, 10, 7)
    abundance: float = 0.02
    seed: int = 0
    spin: float = 0.5
    gamma: float = 5.3190e7
    A0_over_Edd: float = 1.0e4
    L0: float = 3.4e-9
    realization_file: str | None = None
    sites: tuple[int, ...] | None = None       # explicit lattice site indices
    hf_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    # CCE
    order: int = 2
    r_cutoff_a0: float = 2.7
    secular: bool = False
    mask_A: bool = True
    mask_B: bool = True
    mask_CD: bool = True
    mask_EF: bool = True
    c_hf: float = 0.5
    # time grid
    tbar_max: float = 200.0
    samples: int = 4096
    # wavelet
    mu: float = 5.0
    sigma: float = 0.6
    voices: int = 32
    gamma_sst: float = 1e-8
    zero_pad: int = 1
    # output
    outdir: str = "out"

    def term_mask(self) -> TermMask:
        m = TermMask(self.mask_A, self.mask_B, self.mask_CD, self.mask_EF)
        if self.secular:
            m = TermMask(m.enable_A, m.enable_B, False, False)
        return m

    def params(self) -> EffectiveParams:
        return EffectiveParams(P_plus=self.c_hf, P_minus=-self.c_hf)

    def species(self) -> lattice.SpeciesParams:
        probe = lattice.SpeciesParams(self.spin, self.gamma, 1.0, self.L0)
        e_dd = lattice.compute_E_dd(probe, self.a0)
        return lattice.SpeciesParams(self.spin, self.gamma,
                                     self.A0_over_Edd * e_dd, self.L0)


_BOOL = {"true": True, "1": True, "yes": True, "on": True,
         "false": False, "0": False, "no": False, "off": False}


def _parse_axis(value: str) -> tuple[float, float, float]:
    parts = value.split()
    if parts and parts[0] == "miller":
        if len(parts) != 4:
            raise ConfigError("hf_axis miller form needs three integers")
        v = lattice.hf_axis_from_miller(*[float(p) for p in parts[1:]])
        return tuple(v)
    if parts and parts[0] == "angles":
        if len(parts) != 3:
            raise ConfigError("hf_axis angles form needs theta and phi in degrees")
        v = lattice.hf_axis_from_angles(float(parts[1]), float(parts[2]))
        return tuple(v)
    if len(parts) == 3:
        v = np.array([float(p) for p in parts])
        n = np.linalg.norm(v)
        if n == 0:
            raise ConfigError("hf_axis cannot be the zero vector")
        return tuple(v / n)
    raise ConfigError(f"cannot parse hf_axis value {value!r}")


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key = value`` lines ('#' comments); unknown keys rejected,
    out-of-range values named."""
    cfg = RunConfig()
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}")
        seen[key] = value
    for key, value in seen.items():
        try:
            _apply_key(cfg, key, value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    _validate(cfg)
    return cfg


def _apply_key(cfg: RunConfig, key: str, value: str) -> None:
    if key == "hf_axis":
        cfg.hf_axis = _parse_axis(value)
    elif key == "box":
        dims = tuple(int(p) for p in value.split())
        if len(dims) != 3:
            raise ConfigError("box needs three integers")
        cfg.box = dims
    elif key == "sites":
        cfg.sites = tuple(int(p) for p in value.split())
    elif key in ("secular", "mask_A", "mask_B", "mask_CD", "mask_EF"):
        if value.lower() not in _BOOL:
            raise ConfigError(f"bad boolean for {key!r}: {value!r}")
        setattr(cfg, key, _BOOL[value.lower()])
    elif key in ("seed", "order", "samples", "voices", "zero_pad"):
        setattr(cfg, key, int(value))
    elif key in ("a0", "abundance", "spin", "gamma", "A0_over_Edd", "L0",
                 "c_hf", "r_cutoff_a0", "tbar_max", "mu", "sigma", "gamma_sst"):
        setattr(cfg, key, float(value))
    elif key in ("realization_file", "outdir"):
        setattr(cfg, key, value)
    else:
        raise ConfigError(f"unknown configuration key {key!r}")


def _validate(cfg: RunConfig) -> None:
    checks = [("a0", cfg.a0 > 0), ("L0", cfg.L0 > 0),
              ("A0_over_Edd", cfg.A0_over_Edd > 0),
              ("abundance", 0.0 <= cfg.abundance <= 1.0),
              ("order", 1 <= cfg.order <= 6),
              ("r_cutoff_a0", cfg.r_cutoff_a0 > 0),
              ("c_hf", cfg.c_hf >= 0), ("tbar_max", cfg.tbar_max > 0),
              ("samples", cfg.samples >= 16),
              ("mu", cfg.mu > cfg.sigma), ("sigma", cfg.sigma > 0),
              ("voices", cfg.voices >= 1), ("gamma_sst", cfg.gamma_sst >= 0),
              ("zero_pad", cfg.zero_pad >= 1),
              ("box", all(n >= 1 for n in cfg.box))]
    for name, ok in checks:
        if not ok:
            raise ConfigError(f"configuration value out of range: {name!r}")


def load_config(path) -> RunConfig:
    cfg = parse_config(Path(path).read_text())
    override = os.environ.get(OUTDIR_ENV)
    if override:
        cfg.outdir = override
    return cfg


# ---------------------------------------------------------------------------
# pipeline stages

def _resolve_realization(cfg: RunConfig) -> lattice.BathRealization:
    if cfg.realization_file:
        return lattice.load_realization(cfg.realization_file)
    spec = lattice.LatticeSpec(cfg.a0, cfg.box, cfg.species(), cfg.abundance,
                               seed=cfg.seed, explicit_sites=cfg.sites)
    return lattice.build_realization(spec, np.array(cfg.hf_axis))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_echo: dict
    derived: dict
    products: dict = field(default_factory=dict)   # path -> sha256
    timings: dict = field(default_factory=dict)    # stage -> seconds

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("[config]\n")
            for k in sorted(self.config_echo):
                fh.write(f"{k} = {self.config_echo[k]}\n")
            fh.write("\n[derived]\n")
            for k in sorted(self.derived):
                fh.write(f"{k} = {self.derived[k]}\n")
            fh.write("\n[products]\n")
            for k in sorted(self.products):
                fh.write(f"{k} = {self.products[k]}\n")
            fh.write("\n[timings]\n")
            for k in sorted(self.timings):
                fh.write(f"{k} = {self.timings[k]:.3f}\n")


class _Stage:
    """Collects wall-clock timings and rewraps stage failures with the name."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest

    def run(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except (ConfigError, PipelineError):
            raise
        except Exception as exc:
            raise PipelineError(f"stage {name!r} failed: {exc}") from exc
        self.manifest.timings[name] = time.perf_counter() - t0
        return result


def run_pipeline(cfg: RunConfig, realization: lattice.BathRealization | None = None,
                 tag: str = "") -> RunManifest:
    """Full pipeline: bath -> CCE correlation -> spectrum -> CWT -> SST ->
    band traces, everything written under cfg.outdir with content hashes."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    prefix = (tag + "_") if tag else ""
    manifest = RunManifest(config_echo={k: getattr(cfg, k) for k in vars(cfg)},
                           derived={})
    stage = _Stage(manifest)

    if realization is None:
        realization = stage.run("realization", _resolve_realization, cfg)
    if realization.n_spins == 0:
        raise PipelineError("stage 'cce' failed: no spinful sites")
    rpath = outdir / f"{prefix}realization.csv"
    lattice.save_realization(rpath, realization)

    def _simulate():
        cset = cce.enumerate_clusters(realization, cfg.r_cutoff_a0 * realization.a0,
                                      cfg.order)
        times = cce.time_grid(cfg.tbar_max, cfg.samples)
        series = cce.compute_correlation(realization, cset, cfg.params(),
                                         cfg.term_mask(), times)
        return cset, series

    cset, series = stage.run("cce", _simulate)
    cpath = outdir / f"{prefix}correlation.csv"
    cce.save_series(cpath, series)
    cbar = stage.run("normalize", tfa.normalize_correlation, series)
    nbpath = outdir / f"{prefix}correlation_normalized.csv"
    cce.save_series(nbpath, cbar)

    spectrum = stage.run("spectrum", tfa.power_spectrum, cbar, cfg.zero_pad)
    spath = outdir / f"{prefix}spectrum.csv"
    tfa.save_spectrum(spath, spectrum)

    scal = stage.run("cwt", tfa.cwt_bump, cbar.values, cbar.dt,
                     tfa.BumpParams(cfg.mu, cfg.sigma), cfg.voices)
    sst = stage.run("sst", tfa.synchrosqueeze, scal, cfg.gamma_sst)
    files = [str(rpath), str(cpath), str(nbpath), str(spath)]
    files += tfa.save_map(outdir / f"{prefix}cwt", scal)
    files += tfa.save_map(outdir / f"{prefix}sst", sst)

    def _bands():
        paths = []
        for name, (lo, hi) in BANDS.items():
            for kind, obj in (("cwt", scal), ("sst", sst)):
                trace = tfa.band_amplitude(obj, lo, hi)
                p = outdir / f"{prefix}band_{name}_{kind}.csv"
                with open(p, "w") as fh:
                    fh.write(f"# band = {name} [{lo}, {hi}] ({kind})\n")
                    for t, v in zip(scal.times_tbar, trace):
                        fh.write(f"{t:.16e},{v:.16e}\n")
                paths.append(str(p))
        return paths

    files += stage.run("bands", _bands)

    from collections import Counter
    sizes = Counter(len(c) for c in cset.clusters)
    manifest.derived.update({
        "A_bar": series.metadata["A_bar"],
        "sigma_hf": realization.sigma_hf,
        "E_dd": realization.E_dd,
        "n_spinful": realization.n_spins,
        "cluster_counts": dict(sorted(sizes.items())),
        "max_imag": series.metadata["max_imag"],
    })
    for f in files:
        manifest.products[f] = _sha256(f)
    manifest.write(outdir / f"{prefix}manifest.txt")
    return manifest


def analyze_series(cfg: RunConfig, series_path, tag: str = "analyze") -> RunManifest:
    """Analyze-only stage on an exported normalized correlation file."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_echo={k: getattr(cfg, k) for k in vars(cfg)},
                           derived={})
    stage = _Stage(manifest)
    series = cce.load_series(series_path)
    cbar = series if series.metadata.get("normalized") else \
        stage.run("normalize", tfa.normalize_correlation, series)
    spectrum = stage.run("spectrum", tfa.power_spectrum, cbar, cfg.zero_pad)
    spath = outdir / f"{tag}_spectrum.csv"
    tfa.save_spectrum(spath, spectrum)
    scal = stage.run("cwt", tfa.cwt_bump, cbar.values, cbar.dt,
                     tfa.BumpParams(cfg.mu, cfg.sigma), cfg.voices)
    sst = stage.run("sst", tfa.synchrosqueeze, scal, cfg.gamma_sst)
    files = [str(spath)]
    files += tfa.save_map(outdir / f"{tag}_cwt", scal)
    files += tfa.save_map(outdir / f"{tag}_sst", sst)
    for f in files:
        manifest.products[f] = _sha256(f)
    manifest.write(outdir / f"{tag}_manifest.txt")
    return manifest


def compare_orders(cfg: RunConfig, orders) -> str:
    """Per-order correlation curves and their deviation (max and L2 norm) from
    the highest order, as a text table written to the output directory."""
    orders = sorted(int(o) for o in orders)
    if len(orders) < 2:
        raise ConfigError("compare-orders needs at least two orders")
    realization = _resolve_realization(cfg)
    if realization.n_spins == 0:
        raise PipelineError("stage 'cce' failed: no spinful sites")
    times = cce.time_grid(cfg.tbar_max, cfg.samples)
    curves = {}
    for m in orders:
        cset = cce.enumerate_clusters(realization, cfg.r_cutoff_a0 * realization.a0, m)
        series = cce.compute_correlation(realization, cset, cfg.params(),
                                         cfg.term_mask(), times)
        curves[m] = tfa.normalize_correlation(series)
    ref = curves[orders[-1]].values
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for m, ser in curves.items():
        cce.save_series(outdir / f"cce{m}_correlation_normalized.csv", ser)
    lines = ["# order,max_dev,l2_dev"]
    n = len(ref)
    for m in orders:
        d = curves[m].values - ref
        lines.append(f"{m},{np.abs(d).max():.16e},{np.sqrt((d**2).sum() / n):.16e}")
    report = "\n".join(lines) + "\n"
    (outdir / "order_deviations.csv").write_text(report)
    return report


#: channel decompositions: A is always retained (it only shifts levels)
CHANNELS = {"B": TermMask(True, True, False, False),
            "CD": TermMask(True, False, True, False),
            "EF": TermMask(True, False, False, True)}


def sweep_hf_axis(cfg: RunConfig, axes) -> list:
    """Run the pipeline per hyperfine axis on one fixed realization, including
    per-channel (B / CD / EF) mask decompositions."""
    if not axes:
        raise ConfigError("sweep-axis needs at least one axis")
    realization = _resolve_realization(cfg)
    manifests = []
    for i, axis in enumerate(axes):
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        fixed = lattice.BathRealization(
            positions=realization.positions,
            hf_couplings_A=realization.hf_couplings_A, hf_axis=axis,
            E_dd=realization.E_dd, A_bar=realization.A_bar,
            species=realization.species, a0=realization.a0,
            site_indices=realization.site_indices)
        sub = replace(cfg, outdir=str(Path(cfg.outdir) / f"axis{i}"),
                      hf_axis=tuple(axis))
        manifests.append(run_pipeline(sub, realization=fixed, tag="full"))
        for name, mask in CHANNELS.items():
            chan = replace(sub, mask_A=mask.enable_A, mask_B=mask.enable_B,
                           mask_CD=mask.enable_CD, mask_EF=mask.enable_EF,
                           secular=False)
            manifests.append(run_pipeline(chan, realization=fixed, tag=f"chan{name}"))
    return manifests


# ---------------------------------------------------------------------------
# command line

def _add_config_arg(p):
    p.add_argument("config", help="path to key-value configuration file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinbath",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-bath", help="build and export a bath realization")
    _add_config_arg(p)

    p = sub.add_parser("simulate", help="run CCE and export the correlation series")
    _add_config_arg(p)

    p = sub.add_parser("analyze", help="time-frequency analysis of an exported series")
    _add_config_arg(p)
    p.add_argument("series", help="correlation series file")

    p = sub.add_parser("run", help="full pipeline")
    _add_config_arg(p)

    p = sub.add_parser("compare-orders", help="CCE order convergence report")
    _add_config_arg(p)
    p.add_argument("orders", nargs="+", type=int)

    p = sub.add_parser("sweep-axis", help="pipeline over several hf axes on a fixed bath")
    _add_config_arg(p)
    p.add_argument("axes", nargs="+",
                   help="axes as comma-separated triplets, e.g. 0,0,1 1,1,1")
    return ap


def _cmd_generate(cfg: RunConfig) -> None:
    realization = _resolve_realization(cfg)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "realization.csv"
    lattice.save_realization(path, realization)
    print(f"{path}: N={realization.n_spins} A_bar={realization.A_bar:.6e}")


def _cmd_simulate(cfg: RunConfig) -> None:
    realization = _resolve_realization(cfg)
    if realization.n_spins == 0:
        raise PipelineError("stage 'cce' failed: no spinful sites")
    cset = cce.enumerate_clusters(realization, cfg.r_cutoff_a0 * realization.a0,
                                  cfg.order)
    times = cce.time_grid(cfg.tbar_max, cfg.samples)
    series = cce.compute_correlation(realization, cset, cfg.params(),
                                     cfg.term_mask(), times)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cce.save_series(outdir / "correlation.csv", series)
    cce.save_series(outdir / "correlation_normalized.csv",
                    tfa.normalize_correlation(series))
    print(f"{outdir / 'correlation.csv'}: {len(cset.clusters)} clusters")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "generate-bath":
            _cmd_generate(cfg)
        elif args.command == "simulate":
            _cmd_simulate(cfg)
        elif args.command == "analyze":
            analyze_series(cfg, args.series)
        elif args.command == "run":
            run_pipeline(cfg)
        elif args.command == "compare-orders":
            print(compare_orders(cfg, args.orders), end="")
        elif args.command == "sweep-axis":
            axes = [tuple(float(x) for x in a.split(",")) for a in args.axes]
            sweep_hf_axis(cfg, axes)
    except (ConfigError, lattice.LatticeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (PipelineError, cce.CCEError, tfa.TFAError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
