"""Command-line surface: classification, closure runs, simulation and
event-probability experiments with reproducible manifests.

Exit codes: 0 success, 2 validation error, 3 inconclusive scientific
verdict, 4 acceptance failure.  Every CSV carries a header comment with
column units and the hash of its manifest; rerunning a manifest reproduces
the CSV byte for byte (timestamps live only in the manifest file).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

from . import __version__
from .lattice import Boundary, Configuration, SeededStream, Window
from .family import UpdateFamily, classify, quasi_stable_frame
from .bootstrap import closure, min_w
from .droplets import desk_schedule
from .events import (
    build_tower,
    estimate_probability,
    harris_check,
    has_w_helping,
    sg_check,
    w_run_probability,
)
from .kcm import SimConfig, estimate_tau0

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INCONCLUSIVE = 3
EXIT_ACCEPTANCE = 4

INFECTED_CONVENTION = "infected = true (state 0 in the 0/1 spin encoding)"


# ---------------------------------------------------------------------------
# manifests and CSV plumbing
# ---------------------------------------------------------------------------

def manifest_hash(manifest: dict) -> str:
    clean = {k: v for k, v in manifest.items()
             if k not in ("created_at", "hash")}
    return hashlib.sha256(
        json.dumps(clean, sort_keys=True).encode()
    ).hexdigest()[:16]


def write_manifest(path: Path, manifest: dict) -> str:
    manifest = dict(manifest)
    manifest["tool_version"] = __version__
    manifest["created_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    h = manifest_hash(manifest)
    manifest["hash"] = h
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return h


def write_csv(path: Path, header: List[str], units: str, rows, mhash: str):
    lines = [f"# units: {units}", f"# manifest_hash: {mhash}",
             ",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _out_paths(out: str):
    base = Path(out)
    return base.with_suffix(".csv"), base.with_suffix(".manifest.json")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_classify(args) -> int:
    try:
        fam = UpdateFamily.load(args.family)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"error: cannot read family file: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    rep = classify(fam, box_radius=args.box_radius)
    payload = {
        "family": fam.name,
        "criticality": rep.criticality,
        "alpha": None if math.isinf(rep.alpha) else rep.alpha,
        "class": rep.refined,
        "exponents": list(rep.exponents) if rep.exponents else None,
        "stable_components": [
            [[a.dx, a.dy], [b.dx, b.dy]] for a, b in rep.stability.components
        ],
        "isolated": [[u.dx, u.dy] for u in rep.stability.isolated],
        "difficulties": {
            f"({u.dx},{u.dy})": (d.value if d.kind == "finite" else d.kind)
            for u, d in rep.difficulties.items()
        },
        "certificates": {
            f"({u.dx},{u.dy})": {
                "seed_sites": list(map(list, d.certificate_Z)),
                "shift": list(d.certificate_shift),
            }
            for u, d in rep.difficulties.items() if d.kind == "finite"
        },
        "hard": rep.hard_summary(),
        "unresolved": rep.unresolved,
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"family {fam.name}: {rep.criticality}", end="")
        if rep.criticality == "critical" and not rep.unresolved:
            b, g, dl = rep.exponents
            print(f", alpha={rep.alpha:g}, class {rep.refined},"
                  f" exponents (beta,gamma,delta)=({b},{g},{dl})")
        elif rep.criticality == "supercritical":
            print(f", {rep.refined.replace('_', ' ')}")
        else:
            print(", no exponents" if rep.criticality == "subcritical"
                  else " (unresolved difficulties)")
        for u, d in rep.difficulties.items():
            print(f"  difficulty({u.dx},{u.dy}) = "
                  f"{d.value if d.kind == 'finite' else d.kind}"
                  + (f", seed {list(d.certificate_Z)}" if d.kind == "finite" else ""))
        print(f"  hard directions: {rep.hard_summary()}")
    return EXIT_INCONCLUSIVE if rep.unresolved else EXIT_OK


def cmd_closure(args) -> int:
    try:
        fam = UpdateFamily.load(args.family)
        initial = [tuple(s) for s in json.loads(Path(args.initial).read_text())]
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    r = args.window_radius
    win = Window(-r, r, -r, r)
    boundary = {
        "healthy": Boundary.all_healthy(),
        "infected": Boundary.all_infected(),
        "torus": Boundary.torus(),
    }[args.boundary]
    cfg = Configuration(win, boundary, initial)
    res = closure(fam, cfg)
    grid_rle = []
    for y in range(win.y_min, win.y_max + 1):
        row = []
        current, run = None, 0
        for x in range(win.x_min, win.x_max + 1):
            v = 1 if res.final.infected((x, y)) else 0
            if v == current:
                run += 1
            else:
                if current is not None:
                    row.append([run, current])
                current, run = v, 1
        row.append([run, current])
        grid_rle.append(row)
    out = {
        "family": fam.name,
        "convention": INFECTED_CONVENTION,
        "window": [win.x_min, win.x_max, win.y_min, win.y_max],
        "initial": [list(s) for s in initial],
        "newly_infected": [list(s) for s in res.newly_infected],
        "rounds": res.rounds,
        "final_sites": [list(s) for s in sorted(res.final.infected_sites())],
        "grid_rle_rows": grid_rle,
    }
    text = json.dumps(out, indent=None)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        fam = UpdateFamily.load(args.family)
        qs = [float(v) for v in str(args.q).split(",")]
        configs = [
            SimConfig(fam, q=q, torus_side=args.L, t_max=args.tmax,
                      seed=args.seed, replicates=args.replicates)
            for q in qs
        ]
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    rows = []
    censored_any = 0
    for q, cfg in zip(qs, configs):
        est = estimate_tau0(cfg)
        censored_any += est.censored
        rows.append([fam.name, q, args.L, args.tmax, args.replicates,
                     args.seed, f"{est.mean:.6g}", f"{est.ci_low:.6g}",
                     f"{est.ci_high:.6g}", est.censored, est.events_total])
    manifest = {
        "experiment": "estimate_tau0", "family_file": str(args.family),
        "q": qs, "L": args.L, "t_max": args.tmax, "seed": args.seed,
        "replicates": args.replicates,
    }
    header = ["family", "q", "L", "t_max", "replicates", "seed", "mean_tau",
              "ci_low", "ci_high", "censored", "effective_events_total"]
    if args.out:
        csv_path, man_path = _out_paths(args.out)
        h = write_manifest(man_path, manifest)
        write_csv(csv_path, header, "tau in mean clock time units; " +
                  INFECTED_CONVENTION, rows, h)
        print(f"wrote {csv_path}")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(str(v) for v in row))
    if args.plot:
        _plot_sweep(args.plot, fam, qs, rows)
    if censored_any:
        print(f"note: {censored_any} censored replicates; means are lower bounds",
              file=sys.stderr)
    return EXIT_OK


def _plot_sweep(path: str, fam: UpdateFamily, qs, rows):
    """log(mean tau) against 1/q^alpha for the swept densities."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rep = classify(fam)
    alpha = rep.alpha if rep.criticality == "critical" else 1.0
    xs = [1.0 / q ** alpha for q in qs]
    ys = [math.log(float(r[6])) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(xs, ys, "o-")
    ax.set_xlabel(f"1/q^{alpha:g}")
    ax.set_ylabel("log mean infection time")
    ax.set_title(fam.name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_estimate_prob(args) -> int:
    try:
        fam = UpdateFamily.load(args.family)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    rep = classify(fam, box_radius=args.box_radius)
    rows = []
    stream = SeededStream(args.seed, 0)
    if args.mode == "w-helping":
        n_sites, W = args.segment_sites, args.W
        win = Window(0, n_sites - 1, 0, 0)
        from .droplets import Segment

        seg = Segment(direction_index=1, level=0,
                      sites=tuple((x, 0) for x in range(n_sites)),
                      span_lo=0, span_hi=n_sites - 1, norm_sq=1)
        est = estimate_probability(
            lambda c: has_w_helping(c, seg, W), win, args.q, args.samples, stream
        )
        oracle = w_run_probability(n_sites, W, args.q)
        rows.append(["w_helping", args.q, est.samples, f"{est.p_hat:.6g}",
                     f"{est.ci_low:.6g}", f"{est.ci_high:.6g}",
                     f"{oracle:.6g}", args.seed])
    elif args.mode == "tower":
        if rep.unresolved:
            print("error: classification unresolved", file=sys.stderr)
            return EXIT_INCONCLUSIVE
        kind_class = {
            "iso": {"g_isotropic"},
            "unbalanced_internal": {"c_unbalanced_rooted_finite",
                                    "d_unbalanced_unrooted",
                                    "a_unbalanced_infinite"},
            "unbalanced_meso": {"c_unbalanced_rooted_finite",
                                "d_unbalanced_unrooted"},
            "semidirected_internal": {"d_unbalanced_unrooted",
                                      "e_balanced_rooted_finite",
                                      "f_semi_directed"},
        }[args.tower]
        if rep.refined not in kind_class:
            print(
                f"error: tower kind {args.tower} incompatible with class "
                f"{rep.refined} (verdict: {rep.criticality}, alpha={rep.alpha:g})",
                file=sys.stderr,
            )
            return EXIT_VALIDATION
        frame = quasi_stable_frame(fam, rep)
        _, W = min_w(fam, frame, cap=8)
        sch = desk_schedule(args.q, int(rep.alpha), W=W)
        tower = build_tower(args.tower, fam, frame, sch, args.q,
                            base_half_width=args.base_half_width,
                            rounds=args.rounds, trim=args.trim)
        top = tower.top()
        x_lo, x_hi, y_lo, y_hi = top.bbox()
        win = Window(x_lo, x_hi, y_lo, y_hi)
        est = estimate_probability(
            lambda c: sg_check(c, tower).holds, win, args.q, args.samples, stream
        )
        oracle = ""
        if tower.levels == 0 and tower.base_kind == "full":
            oracle = f"{args.q ** len(tower.base_event_sites()):.6g}"
        rows.append([f"sg_{args.tower}", args.q, est.samples,
                     f"{est.p_hat:.6g}", f"{est.ci_low:.6g}",
                     f"{est.ci_high:.6g}", oracle, args.seed])
    else:  # harris-check
        from .droplets import Segment

        n_sites = 16
        win = Window(0, n_sites - 1, 0, 3)
        violations = 0
        for pair in range(args.pairs):
            rowa, rowb = pair % 4, (pair + 1) % 4
            sega = Segment(1, rowa, tuple((x, rowa) for x in range(n_sites)),
                           0, n_sites - 1, 1)
            segb = Segment(1, rowb, tuple((x, rowb) for x in range(n_sites)),
                           0, n_sites - 1, 1)
            W = 1 + pair % 3
            res = harris_check(
                lambda c: has_w_helping(c, sega, W),
                lambda c: has_w_helping(c, segb, max(1, W - 1)),
                win, args.q, args.samples, stream.substream(pair),
            )
            bad = res["gap"] < -4 * res["se"] - 1e-12
            violations += bad
            from .events import wilson_interval

            lo, hi = wilson_interval(round(res["p_ab"] * args.samples),
                                     args.samples)
            rows.append([f"harris_pair_{pair}", args.q, args.samples,
                         f"{res['p_ab']:.6g}", f"{lo:.6g}", f"{hi:.6g}",
                         f"{res['p_a'] * res['p_b']:.6g}", args.seed])
        if violations:
            print(f"harris violations: {violations}", file=sys.stderr)
            return EXIT_ACCEPTANCE
    header = ["event_id", "q", "samples", "p_hat", "ci_low", "ci_high",
              "oracle_value", "seed"]
    if args.out:
        manifest = {"experiment": f"estimate_prob:{args.mode}",
                    "family_file": str(args.family), "q": args.q,
                    "samples": args.samples, "seed": args.seed}
        csv_path, man_path = _out_paths(args.out)
        h = write_manifest(man_path, manifest)
        write_csv(csv_path, header, "probabilities in [0,1]; " +
                  INFECTED_CONVENTION, rows, h)
        print(f"wrote {csv_path}")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(str(v) for v in row))
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.manifests:
        print("error: no manifests given", file=sys.stderr)
        return EXIT_VALIDATION
    failures = []
    lines = []
    for mpath in args.manifests:
        p = Path(mpath)
        if not p.exists():
            failures.append(f"missing manifest {mpath}")
            continue
        try:
            manifest = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            failures.append(f"unreadable manifest {mpath}: {e}")
            continue
        csv_path = p.with_suffix("").with_suffix(".csv")
        name = manifest.get("experiment", "?")
        if not csv_path.exists():
            failures.append(f"{name}: result file {csv_path} missing")
            continue
        content = csv_path.read_text().splitlines()
        tagged = [l for l in content if l.startswith("# manifest_hash:")]
        want = manifest_hash(manifest)
        if not tagged or tagged[0].split(":", 1)[1].strip() != want:
            failures.append(f"{name}: manifest hash mismatch in {csv_path}")
            continue
        header = content[2].split(",")
        ncols = len(header)
        rows = []
        malformed = False
        for ln in content[3:]:
            if not ln:
                continue
            parts = ln.split(",")
            if len(parts) != ncols:
                failures.append(f"{name}: malformed row in {csv_path}")
                malformed = True
                break
            rows.append(dict(zip(header, parts)))
        if malformed:
            continue
        problem = _scientific_row_checks(name, rows)
        if problem:
            failures.append(f"{name}: {problem}")
        else:
            lines.append(f"PASS {name}: {csv_path} consistent ({want})")
    for l in lines:
        print(l)
    for f in failures:
        print(f"FAIL {f}")
    return _finish_report(args, lines, failures)


def _scientific_row_checks(name: str, rows) -> Optional[str]:
    """Row-level sanity for known experiment kinds: no censoring, and means
    strictly increasing along a decreasing density sweep."""
    if name != "estimate_tau0" or not rows:
        return None
    if any(int(r.get("censored", 0)) for r in rows):
        return "censored replicates present; means are only lower bounds"
    qs = [float(r["q"]) for r in rows]
    means = [float(r["mean_tau"]) for r in rows]
    if len(qs) >= 2 and all(a > b for a, b in zip(qs, qs[1:])):
        if not all(a < b for a, b in zip(means, means[1:])):
            return "mean infection time not increasing along the density sweep"
    return None


def _finish_report(args, lines, failures) -> int:
    if args.out:
        Path(args.out).write_text("\n".join(lines + [f"FAIL {f}" for f in failures]) + "\n")
    return EXIT_ACCEPTANCE if failures else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kcmlab",
        description="Bootstrap percolation closures, universality "
                    "classification and kinetically constrained dynamics.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", help="classify an update family")
    c.add_argument("family")
    c.add_argument("--box-radius", type=int, default=None)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_classify)

    c = sub.add_parser("closure", help="bootstrap closure of an initial set")
    c.add_argument("family")
    c.add_argument("initial", help="JSON file with an array of [x,y] sites")
    c.add_argument("--window-radius", type=int, default=16)
    c.add_argument("--boundary", choices=["healthy", "infected", "torus"],
                   default="healthy")
    c.add_argument("--out")
    c.set_defaults(func=cmd_closure)

    for name in ("simulate", "estimate"):
        c = sub.add_parser(name, help="estimate the origin infection time")
        c.add_argument("family")
        c.add_argument("--q", required=True,
                       help="density, or a comma-separated sweep")
        c.add_argument("--L", type=int, required=True)
        c.add_argument("--tmax", type=float, default=1000.0)
        c.add_argument("--replicates", type=int, default=30)
        c.add_argument("--seed", type=int, required=True)
        c.add_argument("--out")
        c.add_argument("--plot", help="optional PNG of the sweep")
        c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("estimate-prob", help="event probability experiments")
    c.add_argument("family")
    c.add_argument("--mode", choices=["w-helping", "tower", "harris-check"],
                   default="w-helping")
    c.add_argument("--q", type=float, required=True)
    c.add_argument("--samples", type=int, default=2000)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--segment-sites", type=int, default=30)
    c.add_argument("--W", type=int, default=2)
    c.add_argument("--tower", choices=["iso", "unbalanced_internal",
                                       "unbalanced_meso",
                                       "semidirected_internal"],
                   default="iso")
    c.add_argument("--base-half-width", type=int, default=1)
    c.add_argument("--rounds", type=int, default=1)
    c.add_argument("--trim", type=float, default=0.0)
    c.add_argument("--pairs", type=int, default=20)
    c.add_argument("--box-radius", type=int, default=None)
    c.add_argument("--out")
    c.set_defaults(func=cmd_estimate_prob)

    c = sub.add_parser("report", help="consolidate experiment results")
    c.add_argument("manifests", nargs="*")
    c.add_argument("--out")
    c.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
