"""CSV tables, SVG plots and the JSON run summary."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
# fixed element ids keep repeated SVG output byte-identical
matplotlib.rcParams["svg.hashsalt"] = "cdimlab"
import matplotlib.pyplot as plt  # noqa: E402

from .runner import RunRecord  # noqa: E402

SWEEP_COLUMNS = ["p", "n", "value", "iterations", "certificate_low", "certificate_high",
                 "status", "config_hash"]
WEIGHT_COLUMNS = ["n", "max", "n_max", "vol", "vol_tree", "min_length", "admissible", "lemma34",
                  "config_hash"]


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def _fmt(x):
    return repr(x) if isinstance(x, float) else x


def _line_plot(path: Path, series: dict, xlabel: str, ylabel: str, logy: bool = False) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(record: RunRecord, out, acceptance=None) -> list:
    """Write tables and plots for ``record`` into ``out``; returns the paths.

    ``acceptance`` is an optional list of :class:`CheckResult` whose
    pass/fail lines go into the acceptance summary next to the record's own
    checks.
    """
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write to output directory {out}: {exc}") from exc
    paths = []

    if record.cells:
        p = out / "modulus_sweep.csv"
        _write_csv(p, SWEEP_COLUMNS, sorted(record.cells, key=lambda c: (c["p"], c["n"])))
        paths.append(p)
        series = {}
        for c in record.cells:
            if "value" in c:
                series.setdefault(f"p={c['p']}", ([], []))
                series[f"p={c['p']}"][0].append(c["n"])
                series[f"p={c['p']}"][1].append(c["value"])
        p = out / "mod_vs_n.svg"
        _line_plot(p, series, "n", "Mod_p", logy=True)
        paths.append(p)

    if record.weights:
        p = out / "weight_diagnostics.csv"
        _write_csv(p, WEIGHT_COLUMNS, record.weights)
        paths.append(p)
        ns = [r["n"] for r in record.weights]
        p = out / "max_norm_vs_n.svg"
        _line_plot(p, {"n ||rho_n||": (ns, [r["n_max"] for r in record.weights])},
                   "n", "n * max rho_n")
        paths.append(p)
        p = out / "volume_vs_n.svg"
        _line_plot(p, {"Vol_p": (ns, [r["vol"] for r in record.weights])}, "n", "Vol_p(rho_n)",
                   logy=True)
        paths.append(p)

    if record.recursion:
        a = record.recursion["a"]
        p = out / "recursion.svg"
        _line_plot(p, {"a_n": (list(range(len(a))), a)}, "n", "a_n")
        paths.append(p)

    rows = [{"check": k, "passed": bool(v), "detail": ""} for k, v in sorted(record.checks.items())]
    for r in acceptance or []:
        rows.append({"check": f"criterion {r.key}: {r.name}", "passed": r.passed,
                     "detail": r.detail})
    p = out / "acceptance_summary.csv"
    _write_csv(p, ["check", "passed", "detail"], rows)
    paths.append(p)

    p = out / "run_summary.json"
    p.write_text(record.to_json())
    paths.append(p)
    return paths
