"""Command line front end.

Exit codes: 0 success, 1 oracle mismatch, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from collections import defaultdict

from . import conjecture_lab
from .aggregation import non_aggregability_demo
from .errors import ConfigError
from .families import DirichletHyper
from .mechanisms import probe_injectivity
from .simharness import (
    dumps,
    load_config,
    margin_table,
    propriety_sweep,
    record_lines,
    run_scenario,
    summarize,
    write_records,
)

log = logging.getLogger("elicitagg")

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="scenario file")
    p.add_argument("--out", help="record file (line-delimited JSON)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="elicitagg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="simulate a scenario and compare against the oracle"))
    p = sub.add_parser("check-propriety", help="expected-score margins of truthful reports")
    _common(p)
    p.add_argument("--deltas", help="comma separated relative perturbations")
    p.add_argument("--mesh", type=float, help="simplex mesh step for categorical log-score sweeps")
    p = sub.add_parser("probe-injectivity", help="search for colliding predictives")
    _common(p)
    p.add_argument("--budget", type=int, default=6)
    p = sub.add_parser("conjectures", help="exponential-family evidence sweeps")
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p = sub.add_parser("report", help="summarize record files")
    p.add_argument("records", nargs="+")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, trials=args.trials)


def _emit(lines, out):
    if out:
        write_records(out, lines)
    else:
        for line in lines:
            print(line)


def cmd_run(args) -> int:
    cfg = _config(args)
    log.info("running %d trials of %s / %s, seed %d", cfg.trials, cfg.spec.family.value,
             cfg.mechanism.value, cfg.seed)
    results = run_scenario(cfg)
    for r in results:
        log.debug("trial %d passed=%s rel_error=%.3g", r.trial, r.passed, r.max_rel_error)
    out = args.out or cfg.out
    if out:
        write_records(out, record_lines(cfg, results))
    s = summarize(cfg, results)
    print(f"family={s['family']} mechanism={s['mechanism']} trials={s['trials']} "
          f"pass_rate={s['pass_rate']} max_rel_error={s['max_rel_error']:.3g} "
          f"max_ppd_gap={s['max_ppd_gap']:.3g} min_margin={s['min_margin']}")
    failed = [r for r in results if not r.passed]
    if failed:
        print("first failing trial: " + dumps(failed[0].to_record()), file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_check_propriety(args) -> int:
    cfg = _config(args)
    deltas = tuple(float(d) for d in args.deltas.split(",")) if args.deltas else None
    rows = propriety_sweep(cfg, deltas, mesh_step=args.mesh)
    table = margin_table(rows)
    _emit([dumps({"type": "header", "config": cfg.to_record()}),
           *(dumps(r.to_record()) for r in rows), dumps(table)], args.out)
    print(f"rows={table['rows']} min_margin={table['min_margin']} all_positive={table['all_positive']}",
          file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK if table["all_positive"] else EXIT_MISMATCH


def cmd_probe(args) -> int:
    cfg = _config(args)
    res = probe_injectivity(cfg.spec, cfg.prior, budget=args.budget, seed=cfg.seed)
    lines = [dumps(res.to_record())]
    if res.witness is not None and isinstance(cfg.prior, DirichletHyper):
        lines.append(dumps(non_aggregability_demo(cfg.spec, cfg.prior, res.witness).to_record()))
    _emit(lines, args.out)
    if args.out:
        verdict = "injective on budget" if res.ok else "collision found"
        print(f"family={res.family} checked={res.checked} {verdict}")
    return EXIT_OK


def cmd_conjectures(args) -> int:
    _emit([dumps(r) for r in conjecture_lab.default_evidence()], args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


TRIAL_FIELDS = frozenset({"family", "passed", "max_rel_error", "agents"})


def read_records(paths) -> list:
    recs = []
    for path in paths:
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read records {path}: {exc}") from exc
        with fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}:{lineno}: malformed record ({exc.msg})") from exc
                if not isinstance(rec, dict) or "type" not in rec:
                    raise ConfigError(f"{path}:{lineno}: malformed record (no type field)")
                missing = TRIAL_FIELDS - rec.keys() if rec["type"] == "trial" else ()
                if missing:
                    raise ConfigError(f"{path}:{lineno}: malformed trial record (missing {sorted(missing)})")
                recs.append(rec)
    return recs


def report_table(recs) -> list:
    """One row per family from trial records."""
    rows = defaultdict(lambda: {"trials": 0, "passed": 0, "max_err": 0.0,
                                "min_margin": math.inf, "scores": []})
    for rec in recs:
        if rec["type"] != "trial":
            continue
        try:
            row = rows[rec["family"]]
            row["trials"] += 1
            row["passed"] += bool(rec["passed"])
            row["max_err"] = max(row["max_err"], float(rec["max_rel_error"]))
            for a in rec["agents"]:
                if a.get("margin") is not None:
                    row["min_margin"] = min(row["min_margin"], a["margin"])
                row["scores"].append(float(a["realized_score"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"trial {rec.get('trial')}: malformed trial record ({exc})") from exc
    out = []
    for fam in sorted(rows):
        r = rows[fam]
        out.append({
            "family": fam,
            "trials": r["trials"],
            "pass_rate": r["passed"] / r["trials"],
            "max_err": r["max_err"],
            "min_margin": None if math.isinf(r["min_margin"]) else r["min_margin"],
            "mean_score": sum(r["scores"]) / len(r["scores"]) if r["scores"] else None,
        })
    return out


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def format_table(rows) -> str:
    cols = ["family", "trials", "pass_rate", "max_err", "min_margin", "mean_score"]
    body = [[_fmt(r[c]) for c in cols] for r in rows]
    widths = [max([len(c), *(len(b[i]) for b in body)]) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


def cmd_report(args) -> int:
    recs = read_records(args.records)
    print(format_table(report_table(recs)))
    evidence = [r for r in recs if r["type"] == "evidence"]
    for ev in evidence:
        if ev.get("probe") == "variance_sweep":
            trend = "strictly decreasing" if ev.get("strictly_decreasing") else "not monotone"
            print(f"evidence variance_sweep: {ev.get('source', '')} trace {trend}")
        else:
            print(f"evidence {ev.get('probe')}: {ev.get('family', '')} {ev.get('flag', '')}".rstrip())
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "check-propriety": cmd_check_propriety,
    "probe-injectivity": cmd_probe,
    "conjectures": cmd_conjectures,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
