"""Human-readable summaries and SVG decay plots for a finished run directory."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import MissingManifest
from .runner import MANIFEST


@dataclass
class ReportBundle:
    summary: Path
    tables: list = field(default_factory=list)
    plots: list = field(default_factory=list)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(s):
    return math.nan if s in ("NA", "") else float(s)


def _nice_ticks(lo, hi, n=5):
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def svg_plot(x, y, y_lo, y_hi, slope=None, title="", xlabel="", ylabel="", width=480, height=320):
    """Scatter with vertical whiskers ``[y_lo, y_hi]`` and an optional line ``y = slope * x``.

    Infinite whisker ends are clipped to the plot frame.
    """
    ml, mr, mt, mb = 60, 20, 30, 45
    finite = [v for v in list(y) + list(y_lo) + list(y_hi) if math.isfinite(v)]
    ymax = max(finite) * 1.1 if finite else 1.0
    ymin = min(0.0, min(finite)) if finite else 0.0
    xmin, xmax = 0.0, max(x) * 1.05
    xt, yt = _nice_ticks(xmin, xmax), _nice_ticks(ymin, ymax)
    xmax, ymax = max(xmax, xt[-1]), max(ymax, yt[-1])

    def px(v):
        return ml + (v - xmin) / (xmax - xmin) * (width - ml - mr)

    def py(v):
        v = min(max(v, ymin), ymax) if math.isfinite(v) else (ymax if v > 0 else ymin)
        return height - mb - (v - ymin) / (ymax - ymin) * (height - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    x0, x1, y0, y1 = px(xmin), px(xmax), py(ymin), py(ymax)
    out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="black"/>')
    out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" stroke="black"/>')
    for t in xt:
        out.append(f'<line x1="{px(t):.2f}" y1="{y0:.2f}" x2="{px(t):.2f}" y2="{y0 + 4:.2f}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{y0 + 16:.2f}" text-anchor="middle">{t:g}</text>')
    for t in yt:
        out.append(f'<line x1="{x0 - 4:.2f}" y1="{py(t):.2f}" x2="{x0:.2f}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6:.2f}" y="{py(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>')
    if slope is not None and math.isfinite(slope):
        out.append(f'<line class="fit" x1="{px(0):.2f}" y1="{py(0):.2f}" x2="{px(xmax):.2f}" '
                   f'y2="{py(slope * xmax):.2f}" stroke="steelblue" stroke-dasharray="4 3"/>')
    for xi, yi, lo, hi in zip(x, y, y_lo, y_hi):
        cx = px(xi)
        out.append(f'<line class="whisker" x1="{cx:.2f}" y1="{py(lo):.2f}" x2="{cx:.2f}" y2="{py(hi):.2f}" '
                   f'stroke="gray"/>')
        for v in (lo, hi):
            out.append(f'<line x1="{cx - 3:.2f}" y1="{py(v):.2f}" x2="{cx + 3:.2f}" y2="{py(v):.2f}" stroke="gray"/>')
        out.append(f'<circle class="point" cx="{cx:.2f}" cy="{py(yi):.2f}" r="3" fill="firebrick"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _neg_log(p):
    return -math.log(p) if p > 0 else math.inf


def _decay_section(run, manifest, written):
    rows = _read_csv(run / "decay.csv")
    fit = json.loads((run / "fit.json").read_text(encoding="utf-8"))
    L = [_num(r["L"]) for r in rows]
    p = [_num(r["estimate"]) for r in rows]
    lo = [_num(r["ci_lo"]) for r in rows]
    hi = [_num(r["ci_hi"]) for r in rows]
    y = [_neg_log(v) for v in p]
    y_lo = [_neg_log(v) for v in hi]
    y_hi = [_neg_log(v) for v in lo]
    gammas, rates = fit["gammas"], fit["rates"]
    g_best = fit["best_gamma"]
    k1 = gammas.index(1.0) if 1.0 in gammas else None
    kb = gammas.index(g_best)
    written["decay_vs_L.svg"] = svg_plot(L, y, y_lo, y_hi, rates[k1] if k1 is not None else None,
                                         "-log p versus L", "L", "-log p")
    Lg = [v ** g_best for v in L]
    written["decay_vs_Lgamma.svg"] = svg_plot(Lg, y, y_lo, y_hi, rates[kb],
                                              f"-log p versus L^{g_best:g}", f"L^{g_best:g}", "-log p")
    table = ["L,L_gamma,neg_log_p,neg_log_ci_lo,neg_log_ci_hi"]
    for a, b, c, d_, e in zip(L, Lg, y, y_lo, y_hi):
        table.append(",".join(repr(float(v)) if math.isfinite(v) else "inf" for v in (a, b, c, d_, e)))
    written["decay_table.csv"] = "\n".join(table) + "\n"
    lines = ["## Decay fit", "", "| gamma | rate | RMS residual |", "|---|---|---|"]
    lines += [f"| {g:g} | {r:.6g} | {e:.3g} |" for g, r, e in zip(gammas, rates, fit["residuals"])]
    lines += ["", f"Best gamma: {g_best:g}. Exponential verdict: **{fit['verdict']}**.",
              f"_{fit['metadata'].get('note', '')}_"]
    return lines


def _verify_section(run, manifest, written):
    s = json.loads((run / "verify_summary.json").read_text(encoding="utf-8"))
    return ["## Quenched-chain verification", "",
            f"- environments: {s['n_env']}",
            f"- in_T: {s['in_T']} (undecided: {s['in_T_undecided']})",
            f"- quenine_ok: {s['quenine_ok']} (certain violations: {s['quenine_violations']})",
            f"- eqcom_ok: {s['eqcom_ok']} (certain violations: {s['eqcom_violations']})",
            f"- excursion_ok: {s['excursion_ok']}",
            f"- supermartingale_ok: {s['supermartingale_ok']}",
            "", f"_{s['note']}_"]


def _pm_section(run, manifest, written):
    vs = json.loads((run / "verdicts.json").read_text(encoding="utf-8"))
    lines = ["## Polynomial condition", "", "| direction | estimate | CI | threshold | verdict |", "|---|---|---|---|---|"]
    for v in vs:
        dv = ", ".join(f"{c:.4f}" for c in v["params"]["direction"])
        lines.append(f"| ({dv}) | {v['estimate']:.6g} | [{v['ci_lower']:.6g}, {v['ci_upper']:.6g}] "
                     f"| {v['threshold']:.6g} | {v['verdict']} |")
    if vs:
        lines += ["", f"_{vs[0]['metadata']['note']}_"]
    return lines


def _exit_section(run, manifest, written):
    r = json.loads((run / "result.json").read_text(encoding="utf-8"))
    return ["## Slab back-exit estimate", "",
            f"- mode: {r['mode']}, n = {r['n']}",
            f"- estimate: {r['estimate']:.8g}",
            f"- {r['confidence']:g} CI: [{r['lower']:.8g}, {r['upper']:.8g}] ({r['method']})"]


def _ladder_section(run, manifest, written):
    lad = json.loads((run / "ladder.json").read_text(encoding="utf-8"))
    rec = lad["recursion"]
    lines = ["## Scale ladder", "", "| k | L | Lt |", "|---|---|---|"]
    lines += [f"| {k} | {a:g} | {b:g} |" for k, (a, b) in enumerate(zip(lad["L"], lad["Lt"]))]
    lines += ["", "Constraints:", ""]
    lines += [f"- {name}: {'ok' if ok else 'fails'}" for name, ok in lad["constraints"].items()]
    lines += ["", f"c8 = {rec['c8']:.6g} (positive: {rec['positive']}); {rec['note']}."]
    return lines


def _independence_section(run, manifest, written):
    r = json.loads((run / "independence.json").read_text(encoding="utf-8"))
    return ["## Level independence", "",
            f"- levels: {r['levels']}",
            f"- flagged pairs: {r['n_flagged_pairs']} of {r['n_pairs']} (|r| > {r['threshold']:.3g})",
            f"- disjoint environment reads: {r['disjoint_reads']}"]


_SECTIONS = {
    "exit-exact": _exit_section,
    "exit-mc": _exit_section,
    "pm-check": _pm_section,
    "decay-fit": _decay_section,
    "renorm-verify": _verify_section,
    "renorm-ladder": _ladder_section,
    "independence": _independence_section,
}


def emit_report(run_dir):
    """Write ``summary.md`` plus per-kind tables and plots into ``run_dir``."""
    run = Path(run_dir)
    mpath = run / MANIFEST
    if not mpath.is_file():
        raise MissingManifest(f"no {MANIFEST} in {run}", directory=str(run))
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    written = {}
    lines = [f"# Run report: {manifest['kind']}", "",
             f"- config hash: `{manifest['config_hash']}`",
             f"- tool version: {manifest['tool_version']}",
             f"- started: {manifest['started']}, finished: {manifest['finished']}",
             f"- threads: {manifest.get('threads', 1)}, wall time: {manifest.get('wall_time_s', 0.0):.3f} s", ""]
    lines += _SECTIONS[manifest["kind"]](run, manifest, written)
    lines += ["", "## Files", ""] + [f"- `{n}` sha256 `{h[:16]}`" for n, h in sorted(manifest["files"].items())]
    written["summary.md"] = "\n".join(lines) + "\n"
    report_files = {}
    for name, text in written.items():
        data = text.encode("utf-8")
        (run / name).write_bytes(data)
        report_files[name] = hashlib.sha256(data).hexdigest()
    manifest["report_files"] = dict(sorted(report_files.items()))
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tables = sorted(n for n in list(manifest["files"]) + list(written) if n.endswith(".csv"))
    return ReportBundle(run / "summary.md", [run / n for n in tables],
                        [run / n for n in sorted(written) if n.endswith(".svg")])
