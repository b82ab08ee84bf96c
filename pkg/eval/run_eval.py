"""Scenario-level acceptance harness for FlowGuard.

Checks:
  - Counts: every preset emits the expected number of normal / attack windows.
  - Ordering: over many seeds, median DR is R-GMKL >= Simple MKL >= SVM and
    median ER runs the other way, on a 344/147 split.
  - Spread: in every ordering scenario at least one seed tells the methods
    apart (all-method ties are reported).
  - Selection: the smallest-R candidate's test accuracy is at least the median
    candidate accuracy in most seeds.
  - R choice: the smallest-R candidate is Product of RBF kernels / L1 in most
    seeds of the early-attack scenario.
  - Separation: attack windows sit well above normal windows on SFV and CDF.
"""

import json
import statistics
import sys
from pathlib import Path

# Add parent directory so we can import project modules
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config import EVAL_DIR, RunConfig
from kernels import KernelFamily
from features import extract_series, summarize_series
from flows import partition_windows
from metrics import compare, selected_group, split
from trafficgen import gen_scenario, preset


def _scenario_series(name: str, seed: int, rc: RunConfig):
    spec = preset(name, seed=seed)
    packets, labels = gen_scenario(spec)
    th = rc.thresholds()
    windows = partition_windows(packets, th.dt, end=len(labels) * th.dt)
    return extract_series(windows, th, labels), labels


def _check_counts(cfg: dict, rc: RunConfig, verbose: bool) -> dict:
    ok = True
    for name, want in cfg.items():
        _, labels = _scenario_series(name, rc.seed, rc)
        got = {"windows": len(labels), "normal": labels.count(1), "attack": labels.count(-1)}
        ok &= got == want
        if verbose:
            print(f"  {name:14s} {got}  expected {want}")
    return {"id": "counts", "passed": ok}


def _check_ordering(cfg: dict, rc: RunConfig, verbose: bool) -> tuple[list[dict], dict]:
    results, runs, spread = [], {}, True
    for name in cfg["scenarios"]:
        per_method = {m: {"dr": [], "er": []} for m in cfg["methods"]}
        sizes_ok = True
        distinct = 0
        for seed in cfg["seeds"]:
            series, _ = _scenario_series(name, seed, rc)
            train_set, test_set = split(series, rc.train_fraction, seed)
            sizes_ok &= (len(train_set), len(test_set)) == (cfg["train_size"], cfg["test_size"])
            run = compare(cfg["methods"], train_set, test_set, rc.with_overrides(seed=seed))
            runs[(name, seed)] = run
            for r in run:
                per_method[r.method]["dr"].append(r.dr)
                per_method[r.method]["er"].append(r.er)
            distinct += len({(r.dr, r.er) for r in run}) > 1
            if verbose:
                row = "  ".join(f"{r.title}: DR={r.dr:.3f} ER={r.er:.3f}" for r in run)
                print(f"  {name:14s} seed {seed:3d}  {row}")

        med = {m: {k: statistics.median(v) for k, v in d.items()} for m, d in per_method.items()}
        svm, smkl, rgmkl = (med[m] for m in ("svm", "smkl", "rgmkl"))
        dr_ok = rgmkl["dr"] >= smkl["dr"] >= svm["dr"]
        er_ok = rgmkl["er"] <= smkl["er"] <= svm["er"]
        if verbose:
            for m, v in med.items():
                print(f"  {name:14s} median {m:6s} DR={v['dr']:.3f} ER={v['er']:.3f}")
        if verbose and not distinct:
            print(f"  {name:14s} every method ties on every seed")
        spread &= distinct > 0
        results.append({"id": f"ordering:{name}", "passed": sizes_ok and dr_ok and er_ok})
    results.append({"id": "spread", "passed": spread})
    return results, runs


def _selection_report(scenario: str, seed: int, runs: dict, rc: RunConfig):
    run = runs.get((scenario, seed))
    if run is None:
        series, _ = _scenario_series(scenario, seed, rc)
        train_set, test_set = split(series, rc.train_fraction, seed)
        run = compare(["rgmkl"], train_set, test_set, rc.with_overrides(seed=seed))
        runs[(scenario, seed)] = run
    return next(r.selection for r in run if r.method == "rgmkl")


def _check_selection(cfg: dict, runs: dict, rc: RunConfig, verbose: bool) -> dict:
    wins = ties = 0
    for seed in cfg["seeds"]:
        report = _selection_report(cfg["scenario"], seed, runs, rc)
        accs = [row.accuracy for row in report if not row.error]
        chosen = selected_group(report)
        chosen_acc = next(row.accuracy for row in report if row.group == chosen)
        win = chosen_acc >= statistics.median(accs)
        wins += win
        ties += len(set(accs)) == 1
        if verbose:
            print(f"  seed {seed:3d}  group {chosen} accuracy {chosen_acc:.3f}  "
                  f"median {statistics.median(accs):.3f}  {'ok' if win else 'miss'}")
    share = wins / len(cfg["seeds"])
    if verbose and ties:
        print(f"  every candidate ties on accuracy in {ties} of {len(cfg['seeds'])} seeds")
    return {"id": "selection", "passed": share >= cfg["min_share"]}


def _check_r_choice(cfg: dict, runs: dict, rc: RunConfig, verbose: bool) -> dict:
    family = KernelFamily(cfg["family"]).title
    regularizer = cfg["regularizer"].upper()
    hits = 0
    for seed in cfg["seeds"]:
        report = _selection_report(cfg["scenario"], seed, runs, rc)
        group = selected_group(report)
        chosen = next((row for row in report if row.group == group), None)
        hit = chosen is not None and (chosen.family, chosen.regularizer) == (family, regularizer)
        hits += hit
        if verbose:
            values = "  ".join(f"{row.group}:{row.R:.4g}" for row in report)
            picked = f"{chosen.family} / {chosen.regularizer}" if chosen else "none"
            print(f"  seed {seed:3d}  R {values}  chosen {picked}  {'ok' if hit else 'miss'}")
    share = hits / len(cfg["seeds"])
    return {"id": "r_choice", "passed": share >= cfg["min_share"]}


def _check_separation(cfg: dict, rc: RunConfig, verbose: bool) -> dict:
    ok = True
    for name in cfg["scenarios"]:
        series, _ = _scenario_series(name, rc.seed, rc)
        summary = summarize_series(series, cfg["features"])
        for feature, row in summary.items():
            ok &= row["separation"] >= cfg["min_pooled_sd"]
            if verbose:
                print(f"  {name:14s} {feature.upper()}: normal {row['normal_mean']:.3f}  "
                      f"attack {row['attack_mean']:.3f}  separation {row['separation']:.2f} sd")
    return {"id": "separation", "passed": ok}


def run_eval(scenarios_path: Path | None = None, verbose: bool = True):
    """Run all acceptance checks and report results."""
    scenarios_path = scenarios_path or (EVAL_DIR / "scenarios.json")
    with open(scenarios_path, encoding="utf-8") as f:
        cfg = json.load(f)
    rc = RunConfig()

    results = []
    if verbose:
        print(f"\n{'=' * 60}\n[counts]\n{'=' * 60}")
    results.append(_check_counts(cfg["counts"], rc, verbose))

    if verbose:
        print(f"\n{'=' * 60}\n[ordering]\n{'=' * 60}")
    ordering, runs = _check_ordering(cfg["ordering"], rc, verbose)
    results += ordering

    if verbose:
        print(f"\n{'=' * 60}\n[selection]\n{'=' * 60}")
    results.append(_check_selection(cfg["selection"], runs, rc, verbose))

    if verbose:
        print(f"\n{'=' * 60}\n[r_choice]\n{'=' * 60}")
    results.append(_check_r_choice(cfg["r_choice"], runs, rc, verbose))

    if verbose:
        print(f"\n{'=' * 60}\n[separation]\n{'=' * 60}")
    results.append(_check_separation(cfg["separation"], rc, verbose))

    # ── Summary ─────────────────────────────────────────────────
    passed = sum(r["passed"] for r in results)
    print(f"\n{'=' * 60}")
    print(f"EVAL SUMMARY: {passed}/{len(results)} passed")
    print(f"{'=' * 60}")
    for r in results:
        print(f"  {r['id']:24s} {'PASS' if r['passed'] else 'FAIL'}")

    return results


if __name__ == "__main__":
    results = run_eval(verbose="--quiet" not in sys.argv)
    sys.exit(0 if all(r["passed"] for r in results) else 1)
