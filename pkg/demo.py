"""
Metastability Lab - Interactive Demo
Small, fast runs of every workflow with rich tables
"""

import sys
import time
from datetime import datetime
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.prompt import Confirm, Prompt
from rich.table import Table

from commuting import commuting_ising_model, relative_bound_check, volume_block_check, wall_hopping_perturbation
from config import Config
from decomposition import prethermal_decompose
from dynamics import dominant_peak_spacing, overlap_spectrum
from errors import MetastabError
from filters import filter_tables
from lattice import build_lattice
from metastability import gap_scan, metastability_range
from models import ModelSpec, build_model, ising_parts, resolve_state
from operator_sum import ProductState
from swt import swt_run
from symmetry_sectors import pxp_sector_basis, sector_labels

console = Console()


def print_banner():
    banner = """
    ╔═══════════════════════════════════════════════════════════╗
    ║                                                           ║
    ║          🧊 METASTABILITY LAB - INTERACTIVE DEMO 🧊       ║
    ║                                                           ║
    ║     Local gaps · prethermal splits · SWT · spectra        ║
    ║                                                           ║
    ╚═══════════════════════════════════════════════════════════╝
    """
    console.print(banner, style="bold cyan")
    console.print(f"\n⏰ Demo started: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n", style="dim")


def _running():
    return Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console, transient=True)


def _model(config: dict, state: str):
    spec = ModelSpec.from_config(config)
    H, states, _ = build_model(spec)
    return spec, H, resolve_state(state, states, H.qudit_dims)


def demo_filters():
    console.print("\n[bold yellow]🎛️  FILTER FUNCTIONS[/bold yellow]")
    with _running() as progress:
        progress.add_task("Building filter tables for Δ = 1 ...", total=None)
        report = filter_tables(1.0, n_max=500).certify()

    table = Table(title="Certification", box=box.ROUNDED)
    table.add_column("Check", style="cyan")
    table.add_column("Value", justify="right", style="green")
    table.add_column("OK", justify="center")
    for key, ok_key in [
        ("normalization", "normalization_ok"),
        ("band_max", "band_ok"),
        ("c1", "c1_ok"),
        ("c_delta", "c_delta_ok"),
        ("sum_a_with_tail", None),
        ("g_max", "g_within_inverse"),
    ]:
        status = "-" if ok_key is None else ("✅" if report[ok_key] else "❌")
        table.add_row(key, f"{report[key]:.6g}", status)
    console.print(table)


def demo_gap_scans():
    console.print("\n[bold yellow]🔍 LOCAL GAP SCANS[/bold yellow]")
    runs = [
        ("Ising ring, all-one", {"model": "ising_longitudinal", "N": 10, "periodic": True, "eps": 0.1}, "one", 1),
        ("Helix/anti-helix ring", {"model": "helix_antihelix", "N": 12, "periodic": True}, "012210012210", 1),
        ("PXP ring, |0->", {"model": "pxp", "N": 12}, "zero-minus", 1),
    ]
    table = Table(title="Δ(R)", box=box.ROUNDED)
    table.add_column("Model", style="cyan")
    table.add_column("Δ(R) for R = 1, 2, ...", style="green")
    table.add_column("Range", justify="right")
    table.add_column("Time", justify="right", style="dim")

    for label, config, state, r_start in runs:
        spec, H, psi0 = _model(config, state)
        start = time.time()
        with _running() as progress:
            progress.add_task(f"Scanning {label} ...", total=None)
            scan = gap_scan(H, psi0, 3, boundary_mode="product")
        deltas = [scan.record(R).delta for R in range(r_start, 4)]
        table.add_row(
            label,
            ", ".join(f"{d:.4f}" for d in deltas),
            str(metastability_range(scan)),
            f"{time.time() - start:.1f}s",
        )
    console.print(table)


def demo_decomposition():
    console.print("\n[bold yellow]✂️  PRETHERMAL DECOMPOSITION (P00++ ring)[/bold yellow]")
    _, H, psi0 = _model({"model": "p00pp", "N": 8, "periodic": True, "eps": 0.15}, "plus")
    dec = prethermal_decompose(H, psi0, 1, probe_R=2)
    eps = dec.eps_values()

    table = Table(box=box.SIMPLE)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right", style="green")
    table.add_row("E0", f"{dec.E0:.6f}")
    table.add_row("max ε_j", f"{eps.max(initial=0.0):.6f}")
    table.add_row("Σ ε_j", f"{eps.sum():.6f}")
    for key, value in dec.norm_report.items():
        if isinstance(value, float):
            table.add_row(key, f"{value:.6f}")
    console.print(table)


def demo_swt():
    console.print("\n[bold yellow]🔄 ITERATED SCHRIEFFER-WOLFF (mixed Ising chain)[/bold yellow]")
    lattice = build_lattice("chain", [6])
    H0, V = ising_parts(lattice, 1.0, 0.1, 0.2)
    psi0 = ProductState.from_digits([0] * 6, 2, "zero")
    with _running() as progress:
        progress.add_task("Rotating ...", total=None)
        state = swt_run(H0, V, psi0, 4, delta=1.0)

    table = Table(box=box.ROUNDED)
    for column in ("k", "‖V_k‖", "‖D_k‖", "residual", "drift"):
        table.add_column(column, justify="right")
    for row in state.to_rows():
        table.add_row(
            str(row["k"]),
            f"{row['norm_Vk']:.3e}",
            f"{row['norm_Dk']:.3e}",
            f"{row['stabilizer_residual']:.1e}",
            f"{row['spectrum_drift']:.1e}",
        )
    console.print(table)
    console.print(f"[green]E* = {state.E_star:.8f}[/green] (E0 = {state.E0:.4f})")


def demo_commuting():
    console.print("\n[bold yellow]📦 VOLUME METASTABILITY (commuting Ising)[/bold yellow]")
    model = commuting_ising_model(build_lattice("chain", [10]), 1.0)
    D = wall_hopping_perturbation(model, 0.2)
    table = Table(box=box.ROUNDED)
    table.add_column("cap", justify="right")
    table.add_column("min eig", justify="right", style="green")
    table.add_column("max ratio", justify="right")
    table.add_column("Δ'/2 cleared", justify="center")
    for cap in (2, 3, 4):
        min_eig, _ = volume_block_check(model, D, None, cap)
        ratio = relative_bound_check(model, D, None, cap)
        table.add_row(str(cap), f"{min_eig:.4f}", f"{ratio:.3f}", "✅" if min_eig >= model.delta_prime / 2 else "❌")
    console.print(table)


def demo_spectrum():
    console.print("\n[bold yellow]🔬 PXP OVERLAP SPECTRUM (N = 12)[/bold yellow]")
    _, H, psi0 = _model({"model": "pxp", "N": 12}, "zero-minus")
    sectors = [pxp_sector_basis(12, k, inv) for k, inv in sector_labels()]
    with _running() as progress:
        progress.add_task("Diagonalizing sectors ...", total=None)
        spectrum = overlap_spectrum(H, psi0, sectors, k_lowest=400)

    top = sorted(spectrum.rows, key=lambda r: -r["overlap"])[:6]
    table = Table(box=box.SIMPLE)
    table.add_column("sector", style="cyan")
    table.add_column("E - E_gs", justify="right")
    table.add_column("|<E|ψ>|²", justify="right", style="green")
    for row in sorted(top, key=lambda r: r["energy"]):
        table.add_row(row["sector"], f"{row['energy']:.4f}", f"{row['overlap']:.4f}")
    console.print(table)
    spacing = dominant_peak_spacing(spectrum.energies(), spectrum.overlaps())
    console.print(f"[green]Dominant peak spacing ≈ {spacing:.4f}[/green]")


def show_settings():
    lines = []
    for group, rows in Config.summary().items():
        lines.append(f"[bold]{group}[/bold]")
        lines.extend(f"  {key}: {value}" for key, value in rows.items())
    lines.extend(Config.validate())
    console.print(Panel("\n".join(lines), title="⚙️  Settings", border_style="blue", box=box.ROUNDED))


DEMOS = {
    "1": ("Filter functions", demo_filters),
    "2": ("Local gap scans", demo_gap_scans),
    "3": ("Prethermal decomposition", demo_decomposition),
    "4": ("Schrieffer-Wolff trace", demo_swt),
    "5": ("Commuting-model volume check", demo_commuting),
    "6": ("PXP overlap spectrum", demo_spectrum),
    "7": ("Settings", show_settings),
}


def main():
    print_banner()
    Config.setup_logging("WARNING")

    while True:
        console.print("\n[bold yellow]📋 DEMO MENU[/bold yellow]\n")
        for key, (label, _) in DEMOS.items():
            console.print(f"  {key}. {label}")
        console.print("  8. Run full demo")
        console.print("  9. Exit")

        choice = Prompt.ask("\n[bold cyan]Select option[/bold cyan]", choices=[str(i) for i in range(1, 10)])
        if choice == "9":
            console.print("\n[yellow]👋 Thank you for watching the demo![/yellow]\n")
            break
        try:
            if choice == "8":
                for key, (label, func) in DEMOS.items():
                    func()
                    if key != "7" and not Confirm.ask(f"\nContinue after {label}?", default=True):
                        break
            else:
                DEMOS[choice][1]()
        except MetastabError as e:
            console.print(f"[red]❌ {e}[/red]")


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        console.print("\n\n[yellow]Demo interrupted by user[/yellow]")
