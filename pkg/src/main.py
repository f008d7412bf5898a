"""
Metastability Lab - command line front end

    python src/main.py gap-scan --model pxp --N 20 --state zero-minus --rmax 8 --out runs/pxp
    python src/main.py filter-tables --delta 1.0 --out runs/f
    python src/main.py scaling-study --model p00pp --eps 0.10,0.15,0.20,0.25 --out runs/scaling

Every command writes its data files plus manifest.json into --out.
Exit codes: 0 success, 2 invalid input, 3 numerical guard.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from basis import ComputationalBasis, assemble_operator
from commuting import (
    block_diagonal_residual,
    commuting_ising_model,
    relative_bound_check,
    volume_block_check,
    wall_hopping_perturbation,
)
from config import Config
from decomposition import prethermal_decompose, radius_scaling_study
from dynamics import cartoon_spectrum, overlap_spectrum, quench
from eigen_cache import EigenCache
from errors import ConfigurationError, MetastabError
from filters import filter_tables
from manifest import RunManifest, git_describe
from metastability import gap_scan, metastability_range, volume_gap
from models import (
    ModelSpec,
    build_model,
    helix_antihelix_parts,
    helix_simple_parts,
    ising_parts,
    resolve_state,
)
from run_config import RunConfig, build_run_config, output_dir
from swt import swt_run
from symmetry_sectors import pxp_sector_basis, sector_labels

logger = logging.getLogger(__name__)

PXP_QUASIPARTICLE_GAP = 0.9682


# =============================================================================
# Argument parsing
# =============================================================================


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON or YAML run plan; flags override its values")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker pool size (default: hardware threads)")
    p.add_argument("--seed", type=int)
    p.add_argument("--log-level", help="DEBUG, INFO, WARNING ...")

    model = p.add_argument_group("model")
    model.add_argument("--model", help="model name (pxp, ising_mixed, helix_antihelix, ...)")
    model.add_argument("--N", type=int, help="chain length")
    model.add_argument("--lx", type=int)
    model.add_argument("--ly", type=int)
    model.add_argument("--periodic", action=argparse.BooleanOptionalAction, default=None)
    model.add_argument("--state", help="named state or digit string")
    model.add_argument("--eps", help="perturbation strength (scaling-study: comma list)")
    model.add_argument("--g", type=float, help="transverse field")
    model.add_argument("--delta-c", type=float, dest="delta_c", help="coupling Δc of Ising/helix models")
    model.add_argument("--mu1", type=float)
    model.add_argument("--mu2", type=float)
    model.add_argument("--q", type=int, help="local dimension of helix_simple")
    model.add_argument("--helix-mu", type=float, dest="helix_mu")
    model.add_argument("--delta-prime", type=float, dest="delta_prime")
    model.add_argument("--widths", type=_int_list, help="stripe widths, comma list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metastab", description="Numerical laboratory for quantum metastability")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gap-scan", help="Δ(R) over maximal windows")
    _add_common(p)
    p.add_argument("--rmax", type=int)
    p.add_argument("--boundary", choices=["product", "open", "periodic"])
    p.add_argument("--solver", choices=["dense", "iterative"])
    p.add_argument("--translation-invariant", action="store_true", default=None)

    p = sub.add_parser("vol-scan", help="Δ(V) over connected sets of bounded volume")
    _add_common(p)
    p.add_argument("--vmax", type=int)
    p.add_argument("--anchor", help="all, center or a site index")
    p.add_argument("--solver", choices=["dense", "iterative"])

    p = sub.add_parser("decompose", help="prethermal split H = H0 + V")
    _add_common(p)
    p.add_argument("--r", type=int, help="ball radius")
    p.add_argument("--kappa1", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--probe-r", type=int, dest="probe_r")

    p = sub.add_parser("swt", help="iterated Schrieffer-Wolff rotations")
    _add_common(p)
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--size-cutoff", type=int, dest="size_cutoff")
    p.add_argument("--delta", type=float, help="filter gap Δ (default: measured gap of H0)")
    p.add_argument("--rmax", type=int, help="radius used to measure the gap of H0")
    p.add_argument("--r", type=int, help="ball radius when H0 comes from the decomposition")

    p = sub.add_parser("commuting-check", help="volume metastability of commuting Ising models")
    _add_common(p)
    p.add_argument("--volume-cap", type=int, dest="volume_cap")
    p.add_argument("--d-scale", type=float, dest="d_scale", help="strength of the domain-wall hopping term D")

    p = sub.add_parser("quench", help="observable dynamics after a quench")
    _add_common(p)
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--dt", type=float)
    p.add_argument("--entanglement", action="store_true", default=None)

    p = sub.add_parser("spectrum", help="eigenstate overlaps and the Poisson cartoon")
    _add_common(p)
    p.add_argument("--k-lowest", type=int, dest="k_lowest")
    p.add_argument("--delta", type=float, help="quasiparticle gap for the cartoon")
    p.add_argument("--solver", choices=["dense", "iterative"])

    p = sub.add_parser("filter-tables", help="build and certify the filter functions")
    _add_common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--n-max", type=int, dest="n_max")

    p = sub.add_parser("scaling-study", help="metastability radius against ε for the P00++ chain")
    _add_common(p)
    p.add_argument("--rmax", type=int, help="largest scanned radius")
    p.add_argument("--offset", type=float, help="shift of the reported Δ_H column, in units of ε")
    p.add_argument("--overlap-threshold", type=float, dest="overlap_threshold", help="ground overlap that bounds R_full")
    p.add_argument("--solver", choices=["dense", "iterative"])
    return parser


MODEL_FLAGS = {"g": "g", "delta_c": "delta", "mu1": "mu1", "mu2": "mu2", "q": "q", "helix_mu": "mu", "delta_prime": "delta_prime", "widths": "widths"}
NON_PLAN = ("config", "log_level", "command")


def overrides_from_args(args: argparse.Namespace) -> Dict:
    values = vars(args).copy()
    params = {MODEL_FLAGS[k]: values.pop(k) for k in list(values) if k in MODEL_FLAGS}
    eps = values.pop("eps", None)
    if eps is not None:
        try:
            numbers = _float_list(eps)
        except argparse.ArgumentTypeError as e:
            raise ConfigurationError(str(e))
        if args.command == "scaling-study":
            values["eps_list"] = numbers
        elif len(numbers) != 1:
            raise ConfigurationError("--eps takes a single number for this command")
        else:
            params["eps"] = numbers[0]
    for key in NON_PLAN:
        values.pop(key, None)
    values["params"] = params
    return values


# =============================================================================
# Output helpers
# =============================================================================


def write_csv(path: Path, rows: Sequence[Dict]) -> Path:
    fieldnames: List[str] = []
    for row in rows:
        fieldnames += [k for k in row if k not in fieldnames]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _plain(v) for k, v in row.items()})
    return path


def write_json(path: Path, payload: Dict) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_plain)
    return path


def _plain(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


# =============================================================================
# Commands
# =============================================================================


def _model(run: RunConfig):
    spec = ModelSpec.from_config(run.model_mapping())
    H, states, observables = build_model(spec)
    name = run.state or ("zero" if "zero" in states else next(iter(states)))
    psi0 = resolve_state(name, states, H.qudit_dims)
    return spec, H, psi0, observables


def cmd_gap_scan(run: RunConfig, out: Path, manifest: RunManifest):
    _, H, psi0, _ = _model(run)
    scan = gap_scan(H, psi0, run.rmax, run.boundary, run.translation_invariant, run.solver, run.threads)
    manifest.record_file(write_csv(out / "gaps.csv", scan.to_rows()))
    manifest.summary = {"state": psi0.label, "metastability_range": metastability_range(scan), "deltas": list(scan.deltas())}
    print(f"🔍 Δ(R) for {psi0.label}: " + ", ".join(f"{d:.6f}" for d in scan.deltas()))
    print(f"📏 Metastability range R = {manifest.summary['metastability_range']}")


def cmd_vol_scan(run: RunConfig, out: Path, manifest: RunManifest):
    _, H, psi0, _ = _model(run)
    scan = volume_gap(H, psi0, run.vmax, run.anchor, run.solver, run.threads)
    manifest.record_file(write_csv(out / "volume_gaps.csv", scan.to_rows()))
    manifest.summary = {"state": psi0.label, "deltas": list(scan.deltas())}
    print(f"📦 Δ(V) for {psi0.label}: " + ", ".join(f"{d:.6f}" for d in scan.deltas()))


def cmd_decompose(run: RunConfig, out: Path, manifest: RunManifest):
    _, H, psi0, _ = _model(run)
    dec = prethermal_decompose(H, psi0, run.r, run.kappa1, run.alpha, run.mu, run.probe_r)
    rows = [{"site": j, "eps": e} for j, e in sorted(dec.eps_profile.items())]
    manifest.record_file(write_csv(out / "eps_profile.csv", rows))
    manifest.record_file(write_json(out / "decomposition.json", dec.to_dict()))
    manifest.summary = {"E0": dec.E0, "max_eps": float(dec.eps_values().max(initial=0.0)), "norms": dec.norm_report}
    print(f"✂️  H = H0 + V with E0 = {dec.E0:.6f}, max ε_j = {manifest.summary['max_eps']:.6f}")


def _split(run: RunConfig, spec: ModelSpec, H, psi0):
    p = spec.parameters
    if spec.name in ("ising_longitudinal", "ising_mixed"):
        return ising_parts(spec.lattice, p["delta"], p.get("g", 0.0), p["eps"])
    if spec.name == "helix_antihelix":
        return helix_antihelix_parts(spec.lattice, p["mu1"], p["mu2"], p["eps"])
    if spec.name == "helix_simple":
        return helix_simple_parts(spec.lattice, p["q"], p["mu"], p["delta"], p["eps"])
    dec = prethermal_decompose(H, psi0, run.r)
    return dec.H0, dec.V


def cmd_swt(run: RunConfig, out: Path, manifest: RunManifest):
    spec, H, psi0, _ = _model(run)
    H0, V = _split(run, spec, H, psi0)
    delta = run.delta
    if delta is None:
        deltas = gap_scan(H0, psi0, run.rmax, solver="dense", threads=run.threads).deltas()
        delta = float(min(deltas))
        if delta <= 0:
            raise ConfigurationError(f"H0 gap {delta:.3g} is not positive at R={run.rmax}; pass --delta")
    state = swt_run(H0, V, psi0, run.k_max, run.size_cutoff, delta=delta)
    manifest.record_file(write_csv(out / "swt_trace.csv", state.to_rows()))
    manifest.summary = {"delta": delta, "orders": state.order, "divergence_onset": state.divergence_onset, "E_star": state.E_star}
    for row in state.trace:
        print(f"🔄 k={row['k']}: ‖V_k‖={row['norm_Vk']:.3e}, residual={row['stabilizer_residual']:.3e}, drift={row['spectrum_drift']:.1e}")


def cmd_commuting_check(run: RunConfig, out: Path, manifest: RunManifest):
    spec, _, psi0, _ = _model(run)
    if spec.name not in ("ising_commuting", "ising2d_commuting"):
        raise ConfigurationError("commuting-check needs model ising_commuting or ising2d_commuting")
    model = commuting_ising_model(spec.lattice, spec.parameters["delta_prime"], psi0)
    D = wall_hopping_perturbation(model, run.d_scale) if run.d_scale else None
    block_diagonal = D is None or block_diagonal_residual(model, D, psi0) <= 1e-10
    min_eig, witness = volume_block_check(model, D, psi0, run.volume_cap)
    ratio = relative_bound_check(model, D, psi0, run.volume_cap)
    result = {
        "block_diagonal": bool(block_diagonal),
        "min_eig": min_eig,
        "max_ratio": ratio,
        "caps": [run.volume_cap],
        "delta_prime": model.delta_prime,
        "certified": bool(min_eig >= model.delta_prime / 2),
        "witness": witness,
    }
    manifest.record_file(write_json(out / "commuting.json", result))
    manifest.summary = {k: result[k] for k in ("min_eig", "max_ratio", "certified")}
    print(f"📦 min eig = {min_eig:.6f} (Δ'/2 = {model.delta_prime / 2:.3f}) {'✅' if result['certified'] else '❌'}")


def _basis_for(spec: ModelSpec, H) -> ComputationalBasis:
    if H.constraint:
        return ComputationalBasis.constrained(spec.lattice, H.constraint)
    return ComputationalBasis.full(H.qudit_dims)


def cmd_quench(run: RunConfig, out: Path, manifest: RunManifest):
    spec, H, psi0, observables = _model(run)
    times = np.arange(0.0, run.t_max + run.dt / 2, run.dt)
    series = quench(H, psi0, times, observables, _basis_for(spec, H), run.entanglement)
    manifest.record_file(write_csv(out / "quench.csv", series.to_rows()))
    manifest.summary = {
        "state": psi0.label,
        "peak_to_peak": {name: series.peak_to_peak(name) for name in series.observables},
        "norm_drift": series.norm_drift,
        "energy_drift": series.energy_drift,
    }
    print(f"⏱️  {len(times)} checkpoints from {psi0.label}, energy drift {series.energy_drift:.1e}")


def cmd_spectrum(run: RunConfig, out: Path, manifest: RunManifest):
    spec, H, psi0, _ = _model(run)
    if spec.name == "pxp" and spec.lattice.periodic[0]:
        sectors = [pxp_sector_basis(spec.lattice.n_sites, k, inv) for k, inv in sector_labels()]
    else:
        sectors = [_basis_for(spec, H)]
    mode = "auto" if run.solver == "dense" else "iterative"
    cache = EigenCache() if Config.ENABLE_CACHE else None
    spectrum = overlap_spectrum(H, psi0, sectors, run.k_lowest, mode, cache)
    if cache is not None:
        logger.info(f"💾 eigen cache: {cache.get_stats()}")
    manifest.record_file(write_csv(out / "spectrum.csv", spectrum.rows))

    parent = sectors[0].parent if getattr(sectors[0], "is_sector", False) else sectors[0]
    vec = parent.state_vector(psi0)
    E_target = float(np.vdot(vec, assemble_operator(H, parent) @ vec).real)
    gap = run.delta or (PXP_QUASIPARTICLE_GAP if spec.name == "pxp" else None)
    if gap is not None:
        cartoon = cartoon_spectrum(gap, E_target, spectrum.ground_energy, 30)
        manifest.record_file(write_csv(out / "cartoon.csv", cartoon))
    manifest.summary = {"E_gs": spectrum.ground_energy, "E_target": E_target, "sector_weights": spectrum.sector_weights}
    print(f"🔬 E_gs = {spectrum.ground_energy:.6f}, <ψ|H|ψ> = {E_target:.6f}, {len(spectrum.rows)} states")


def cmd_filter_tables(run: RunConfig, out: Path, manifest: RunManifest):
    if run.delta is None:
        raise ConfigurationError("filter-tables needs --delta")
    tables = filter_tables(run.delta, run.n_max)
    report = tables.certify()
    manifest.record_file(write_json(out / "tables.json", report))
    rows = [{"E": float(E), "w_hat": float(w)} for E, w in zip(tables.E_grid, tables.w_hat_grid)]
    manifest.record_file(write_csv(out / "w_hat.csv", rows))
    manifest.summary = {k: report[k] for k in ("normalization", "band_max", "c1", "c_delta")}
    print(f"🎛️  ∫w = {report['normalization']:.9f}, max |ŵ| off band = {report['band_max']:.2e}")


def cmd_scaling_study(run: RunConfig, out: Path, manifest: RunManifest):
    if run.model not in (None, "p00pp"):
        raise ConfigurationError("scaling-study runs on the p00pp model")
    study = radius_scaling_study(run.eps_list, run.rmax, run.offset, run.solver, run.overlap_threshold)
    manifest.record_file(write_csv(out / "scaling.csv", study.to_rows()))
    manifest.summary = {"slope_full": study.slope_full, "slope_H0": study.slope_H0}
    print(f"📈 slopes: log R_full {study.slope_full}, log R_H0 {study.slope_H0}")


HANDLERS = {
    "gap-scan": cmd_gap_scan,
    "vol-scan": cmd_vol_scan,
    "decompose": cmd_decompose,
    "swt": cmd_swt,
    "commuting-check": cmd_commuting_check,
    "quench": cmd_quench,
    "spectrum": cmd_spectrum,
    "filter-tables": cmd_filter_tables,
    "scaling-study": cmd_scaling_study,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, run one command, write its manifest; returns the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    Config.setup_logging(args.log_level)
    for issue in Config.validate():
        logger.warning(issue)
    out_dir: Optional[Path] = Path(args.out) if args.out else None
    manifest = RunManifest(args.command, {}, git=git_describe())
    code = 0
    try:
        plan = build_run_config(args.command, overrides_from_args(args), args.config)
        out_dir = output_dir(plan)
        manifest.config = plan.echo()
        manifest.threads = plan.threads
        manifest.seed = plan.seed
        HANDLERS[plan.command](plan, out_dir, manifest)
    except MetastabError as e:
        code = e.exit_code
        manifest.error = str(e)
        print(f"❌ {e}", file=sys.stderr)
    manifest.exit_code = code
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest.finish(out_dir)
    return code


if __name__ == "__main__":
    sys.exit(run())
