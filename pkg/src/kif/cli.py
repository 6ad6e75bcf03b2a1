"""``kif`` command line: screen, permtest, reproduce, simulate.

Exit codes:
    0  success
    1  unexpected internal error
    2  usage error (bad arguments)
    3  input error: missing/unreadable file, missing label column, unparseable or non-finite cell
    4  screening error: a class with fewer than two rows under the strict policy, invalid rule
    5  unknown feature or pair index in a pairs file
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys

from . import __version__
from .engine import ScreeningConfig, screen_all_pairs
from .experiments import run_experiment
from .io import DataError, load_csv, read_pairs, screen_json, write_csv, write_json, write_pvalue_tsv, write_screen_tsv
from .permutation import PermutationPlan, permutation_test
from .rank_stats import InsufficientClassSize
from .simgen import SCENARIOS, SETTINGS, SimulationSpec

log = logging.getLogger("kif")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INPUT, EXIT_SCREEN, EXIT_PAIRS = range(6)


def _threads(value: str) -> int:
    if value == "max":
        return 0
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError("threads must be >= 0 or 'max'")
    return n


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _add_input(p):
    p.add_argument("--input", "-i", required=True, help="CSV file with a header row")
    p.add_argument("--label-col", required=True, help="name of the label column")
    p.add_argument("--delimiter", default=",", help="CSV delimiter (default ',')")
    p.add_argument("--threads", type=_threads, default=None,
                   help="worker threads; 'max' or 0 for all cores (default: $KIF_THREADS, else all cores)")
    p.add_argument("--output", "-o", default="-", help="output path ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kif", description="Kendall Interaction Filter screening of feature couples")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("screen", help="score and rank every feature couple")
    _add_input(s)
    rule = s.add_mutually_exclusive_group()
    rule.add_argument("--top-d", type=int, help="keep the d best couples (default ceil(n / ln n))")
    rule.add_argument("--threshold", nargs=2, type=float, metavar=("C", "R"),
                      help="keep couples with score > C * n^-R")
    s.add_argument("--prescreen", type=float, default=0.0,
                   help="drop this fraction of least-variance features first (e.g. 0.2)")
    s.add_argument("--class-policy", choices=("strict", "skip-class"), default="strict")
    s.add_argument("--keep", choices=("all", "head"), default="all",
                   help="'head' streams pairs and retains only selected couples (large p)")
    s.add_argument("--chunk-size", type=int, default=1024)
    s.add_argument("--format", choices=("tsv", "json"), default="tsv")
    s.add_argument("--all", action="store_true", help="write the full ranking, not only the selected couples")
    s.add_argument("--timings", action="store_true", help="include wall-clock timings in JSON output")

    pt = sub.add_parser("permtest", help="label-permutation p-values for chosen couples")
    _add_input(pt)
    pt.add_argument("--pairs", required=True, help="TSV with feature_j and feature_l columns (a screen TSV works)")
    pt.add_argument("--top", type=int, default=None, help="use only the first K pairs of the file")
    pt.add_argument("-T", "--permutations", type=int, default=10_000)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--class-policy", choices=("strict", "skip-class"), default="strict")

    rp = sub.add_parser("reproduce", help="run a simulation study and compare with the published rates")
    rp.add_argument("--setting", choices=SETTINGS, required=True)
    rp.add_argument("--model", default=None, help="model 1-4 (s1, s2) or scenario (s5: %s)" % ", ".join(SCENARIOS))
    rp.add_argument("-n", type=int, default=200)
    rp.add_argument("-p", type=int, default=None, help="features (default 500; 1000 for toy)")
    rp.add_argument("-R", "--replications", type=int, default=100)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--threads", type=_threads, default=None)
    rp.add_argument("--output", "-o", default="-")
    rp.add_argument("--timings", action="store_true")

    sm = sub.add_parser("simulate", help="write one simulated dataset as CSV")
    sm.add_argument("--setting", choices=SETTINGS, required=True)
    sm.add_argument("--model", default=None)
    sm.add_argument("-n", type=int, default=200)
    sm.add_argument("-p", type=int, default=None)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--label-col", default="y")
    sm.add_argument("--output", "-o", default="-")
    return ap


def _spec(args) -> SimulationSpec:
    p = args.p if args.p is not None else (1000 if args.setting == "toy" else 500)
    sub = args.model
    if args.setting in ("s1", "s2") and sub is not None:
        try:
            sub = int(sub)
        except ValueError:
            raise ValueError(f"model must be 1-4, got {sub!r}") from None
    return SimulationSpec(args.setting, sub, args.n, p, args.seed)


def cmd_screen(args) -> int:
    data = load_csv(args.input, args.label_col, args.delimiter)
    config = ScreeningConfig(
        top_d=args.top_d,
        threshold=tuple(args.threshold) if args.threshold else None,
        class_policy=args.class_policy,
        prescreen=args.prescreen,
        keep=args.keep,
        chunk_size=args.chunk_size,
    )
    result = screen_all_pairs(data, config, args.threads)
    if result.skipped_classes:
        log.warning("classes with fewer than 2 rows were skipped: %s", ", ".join(map(str, result.skipped_classes)))
    log.info("scored %d pairs in %.2fs, selected %d", result.n_pairs, result.timings["total_s"], result.n_selected)
    with _open_out(args.output) as fh:
        if args.format == "tsv":
            write_screen_tsv(result, fh, args.all)
        else:
            write_json(screen_json(result, args.all, args.timings), fh)
    return EXIT_OK


def cmd_permtest(args) -> int:
    data = load_csv(args.input, args.label_col, args.delimiter)
    pairs = read_pairs(args.pairs, data.feature_names, args.top)
    plan = PermutationPlan(tuple(pairs), args.permutations, args.seed)
    res = permutation_test(data, plan, args.threads, args.class_policy)
    with _open_out(args.output) as fh:
        write_pvalue_tsv(data.feature_names, res.pairs, res.observed, res.pvalues, fh)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    spec = _spec(args)

    def progress(done, total):
        log.info("replication %d/%d", done, total)

    report = run_experiment(spec, args.replications, args.seed, args.threads, progress=progress)
    doc = report.as_dict(timings=args.timings)
    for name, c in doc["comparison"].items():
        log.info("%s: observed %.2f, published %s, range [%.2f, %.2f] -> %s",
                 name, c["observed"], c["published"], c["lo"], c["hi"], "PASS" if c["pass"] else "FAIL")
    with _open_out(args.output) as fh:
        write_json(doc, fh)
    return EXIT_OK


def cmd_simulate(args) -> int:
    data = _spec(args).generate()
    with _open_out(args.output) as fh:
        write_csv(data, fh, args.label_col)
    return EXIT_OK


COMMANDS = {"screen": cmd_screen, "permtest": cmd_permtest, "reproduce": cmd_reproduce, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("kif: %(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except InsufficientClassSize as exc:
        log.error("%s", exc)
        return EXIT_SCREEN
    except (KeyError, IndexError) as exc:
        log.error("%s", exc.args[0] if exc.args else exc)
        return EXIT_PAIRS
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_SCREEN
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
