"""Command-line driver: ``pennet analyze | scan | game``.

Exit codes: 0 success, 1 usage, 2 capacity, 3 internal inconsistency.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass

from . import serialize
from .errors import CapacityError, ContractError, InconsistencyError, PennetError, ThresholdError
from .kvgame import game_report
from .netstates import EdgeStateSpec, Topology, pen_state
from .nonlocality import gme_not_gmnl_flag
from .protocols import fidelity_sum_gme_test
from .separability import (
    BiseparabilityCertificate,
    Component,
    decompose_cycle,
    decompose_star3,
    decompose_tree,
    decompose_triangle,
    verify_certificate,
)
from .witnesses import certificate_id, make_grid, witness_cc3, witness_star3

EXIT_OK, EXIT_USAGE, EXIT_CAPACITY, EXIT_INCONSISTENT = 0, 1, 2, 3
DEFAULT_SEED = 0xC0FFEE
PRESETS = ("star", "cycle", "complete", "tree-path")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class Outcome:
    """One certifier's result for one network."""

    name: str
    verdict: str  # GME | biseparable | inconclusive
    witness_value: float | None = None
    certificate: BiseparabilityCertificate | None = None
    cert_id: str = ""
    details: dict | None = None

    def to_json(self) -> dict:
        out = {"name": self.name, "verdict": self.verdict}
        if self.witness_value is not None:
            out["witness_value"] = self.witness_value
        if self.cert_id:
            out["certificate_id"] = self.cert_id
        if self.details:
            out["details"] = self.details
        return out


def build_topology(preset: str, n: int, p: float, d: int) -> Topology:
    spec = EdgeStateSpec.iso(p, d)
    if preset == "star":
        return Topology.star(n, spec)
    if preset == "cycle":
        return Topology.cycle(n, spec)
    if preset == "complete":
        return Topology.complete(n, spec)
    if preset == "tree-path":
        return Topology.path(n, spec)
    raise UsageError(f"unknown preset {preset!r}")


def _from_builder(name, build) -> Outcome | None:
    try:
        cert = build()
    except ThresholdError as exc:
        return Outcome(name, "inconclusive", details={"reason": str(exc)})
    report = verify_certificate(cert)
    if not report.passed:
        raise InconsistencyError(f"{name} produced a certificate that fails verification: {report.failures()}")
    return Outcome(name, "biseparable", certificate=cert, cert_id=certificate_id(cert),
                   details={"components": len(cert.components)})


def _separable_cut(t: Topology) -> Outcome | None:
    sep = [e for e in t.edges if t.edge_states[e].is_separable()]
    if not sep:
        return None
    keep = [e for e in t.edges if e not in sep]
    comps = t.components(keep)
    if len(comps) < 2:
        return None
    split = tuple(comps[0]) if 0 not in comps[0] else tuple(q for c in comps[1:] for q in c)
    p, d = t.uniform_isotropic() or (float("nan"), 0)
    cert = BiseparabilityCertificate((Component(1.0, pen_state(t), split, "separable cut"),), t, p, d,
                                     "separable-cut")
    report = verify_certificate(cert)
    if not report.passed:
        return None
    return Outcome("separable-cut", "biseparable", certificate=cert, cert_id=certificate_id(cert),
                   details={"split": list(split)})


def _witness(name, cert_fn, p, tol) -> Outcome:
    w = cert_fn()
    value = w.value(p)
    verdict = "GME" if value < -tol else "inconclusive"
    return Outcome(name, verdict, witness_value=value)


def _single_noisy_star(t: Topology):
    """(p, d) if t is a star centred at 0 with one isotropic leaf edge and
    maximally entangled edges elsewhere."""
    if t.n < 3 or t.edges != tuple((0, i) for i in range(1, t.n)):
        return None
    noisy = [e for e in t.edges if t.edge_states[e].visibility != 1.0]
    if len(noisy) != 1 or t.edge_states[noisy[0]].kind != "isotropic":
        return None
    dims = {t.edge_states[e].d for e in t.edges}
    if len(dims) != 1 or any(t.edge_states[e].kind == "explicit" for e in t.edges):
        return None
    return t.edge_states[noisy[0]].p, dims.pop()


def run_certifiers(t: Topology, tol: float = 1e-12) -> list[Outcome]:
    """Every certifier that applies to ``t``."""
    out = []
    cut = _separable_cut(t)
    if cut is not None:
        out.append(cut)
    if not t.is_connected() and cut is None:
        comps = t.components()
        p, d = t.uniform_isotropic() or (float("nan"), 0)
        cert = BiseparabilityCertificate((Component(1.0, pen_state(t), tuple(comps[-1]), "disconnected"),),
                                         t, p, d, "disconnected")
        if verify_certificate(cert).passed:
            out.append(Outcome("disconnected", "biseparable", certificate=cert, cert_id=certificate_id(cert)))
    uni = t.uniform_isotropic()
    if uni is not None:
        p, d = uni
        if t.n == 2:
            thr = 1 / (d + 1)
            out.append(Outcome("isotropic-pair", "GME" if p > thr else "biseparable",
                               details={"threshold": thr}))
        if t.n == 3 and t.edges == ((0, 1), (0, 2)):
            if d == 2:
                out.append(_witness("star3-witness", witness_star3, p, tol))
            out.append(_from_builder("star3-decomposition", lambda: decompose_star3(p, d)))
        if t.n == 3 and t.is_complete():
            if d == 2:
                out.append(_witness("cc3-witness", witness_cc3, p, tol))
            out.append(_from_builder("triangle-decomposition", lambda: decompose_triangle(p, d)))
        if t.is_tree() and t.n >= 2:
            out.append(_from_builder("tree-decomposition", lambda: decompose_tree(t, p, d)))
        if t.n > 4 and t.edges == Topology.cycle(t.n, EdgeStateSpec.iso(p, d)).edges:
            out.append(_from_builder("cycle-decomposition", lambda: decompose_cycle(t.n, p, d)))
        if t.is_complete() and t.n >= 3 and d == 2:
            rep = fidelity_sum_gme_test(t, "trace-out")
            out.append(Outcome("fidelity-sum", rep.verdict,
                               details={"mean_fidelity": rep.mean_fidelity, "bound": rep.bound}))
    star = _single_noisy_star(t)
    if star is not None:
        v = gme_not_gmnl_flag(t.n, star[1], star[0], tol)
        out.append(Outcome("single-noisy-star", "GME" if v.gme else "inconclusive",
                           witness_value=v.witness_value, details={"not_gmnl": v.not_gmnl}))
    return out


def aggregate(outcomes: list[Outcome]) -> str:
    gme = [o.name for o in outcomes if o.verdict == "GME"]
    bis = [o.name for o in outcomes if o.verdict == "biseparable"]
    if gme and bis:
        raise InconsistencyError(f"GME by {gme} but biseparable by {bis}")
    if gme:
        return "GME"
    if bis:
        return "biseparable"
    return "undetermined"


def _resolve_topology(args, p=None) -> Topology:
    if args.topology:
        try:
            with open(args.topology) as fh:
                t = Topology.from_json(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read topology: {exc}") from exc
        if p is not None:
            d = args.d if args.d is not None else None
            uni = t.uniform_isotropic()
            d = d or (uni[1] if uni else 2)
            t = t.with_isotropic(p, d)
        return t
    if args.preset is None:
        raise UsageError("give --preset or --topology")
    if args.n is None:
        raise UsageError("--preset needs --n")
    if p is None:
        raise UsageError("--preset needs --p")
    return build_topology(args.preset, args.n, p, args.d or 2)


def _write(text: str, path: str | None, stdout) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def cmd_analyze(args, stdout) -> int:
    if args.p_grid is not None:
        raise UsageError("analyze takes --p, not --p-grid")
    t = _resolve_topology(args, args.p)
    outcomes = run_certifiers(t, args.tol)
    verdict = aggregate(outcomes)
    report = {
        "command": "analyze",
        "seed": args.seed,
        "topology": t.to_json(),
        "certifiers": [o.to_json() for o in outcomes],
        "verdict": verdict,
    }
    _write(serialize.dumps(report, indent=2) + "\n", args.out, stdout)
    if args.cert_out:
        certs = [o.certificate for o in outcomes if o.certificate is not None]
        if certs:
            _write(serialize.dumps(certs[0].to_json()) + "\n", args.cert_out, stdout)
    return EXIT_OK


def parse_grid(text: str) -> list[float]:
    try:
        lo, step, hi = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"--p-grid must be lo:step:hi, got {text!r}") from exc
    if step <= 0:
        raise UsageError("grid step must be positive")
    grid = make_grid(lo, step, hi) if hi >= lo else []
    if not grid:
        raise UsageError("empty p grid")
    if grid[0] < 0 or grid[-1] > 1:
        raise UsageError("grid values must lie in [0, 1]")
    return grid


def cmd_scan(args, stdout) -> int:
    if args.p is not None:
        raise UsageError("scan takes --p-grid, not --p")
    if args.p_grid is None:
        raise UsageError("scan needs --p-grid")
    grid = parse_grid(args.p_grid)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["p", "classification", "witness_value", "certificate_id"])
    for p in grid:
        t = _resolve_topology(args, p)
        outcomes = run_certifiers(t, args.tol)
        verdict = aggregate(outcomes)
        values = [o.witness_value for o in outcomes if o.witness_value is not None]
        decisive = [o for o in outcomes if o.verdict == verdict and o.cert_id]
        writer.writerow([
            serialize.format_float(p),
            verdict,
            serialize.format_float(values[0]) if values else "",
            decisive[0].cert_id if decisive else "",
        ])
    _write(buf.getvalue(), args.out, stdout)
    return EXIT_OK


def cmd_game(args, stdout) -> int:
    if args.v is None or args.eta is None:
        raise UsageError("game needs --v and --eta")
    report = game_report(args.v, args.eta, args.K, args.mode, args.seed)
    report["seed"] = args.seed
    _write(serialize.dumps(report, indent=2) + "\n", args.out, stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pennet", description="Entanglement certification for isotropic network states.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--preset", choices=PRESETS)
        sp.add_argument("--topology", help="topology JSON file")
        sp.add_argument("--n", type=int)
        sp.add_argument("--d", type=int)
        sp.add_argument("--p", type=float)
        sp.add_argument("--p-grid", dest="p_grid", help="lo:step:hi")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
        sp.add_argument("--tol", type=float, default=1e-12, help="witness negativity tolerance")

    analyze = sub.add_parser("analyze", help="run every applicable certifier")
    common(analyze)
    analyze.add_argument("--cert-out", dest="cert_out", help="write the biseparable certificate here")
    scan = sub.add_parser("scan", help="classify a grid of visibilities, CSV output")
    common(scan)
    game = sub.add_parser("game", help="coset game values and bounds")
    game.add_argument("--v", type=int)
    game.add_argument("--eta", type=float)
    game.add_argument("--K", type=int, default=1)
    game.add_argument("--mode", choices=("exhaustive", "heuristic"))
    game.add_argument("--out")
    game.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
    return parser


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: analyze, scan or game")
        handler = {"analyze": cmd_analyze, "scan": cmd_scan, "game": cmd_game}[args.command]
        return handler(args, stdout)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except CapacityError as exc:
        stderr.write(f"capacity error: {exc}\n")
        return EXIT_CAPACITY
    except InconsistencyError as exc:
        stderr.write(f"internal inconsistency: {exc}\n")
        return EXIT_INCONSISTENT
    except (ContractError, ThresholdError, PennetError) as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        stderr.write(f"I/O error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
