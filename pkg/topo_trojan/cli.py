"""The ``topo-trojan`` command line: CSV and JSON on stdout, diagnostics on stderr."""

import argparse
import csv
import logging
import sys
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from . import __version__
from .analysis import compare_shortcuts, death_edge_lengths, longest_cycle_edge_lengths, population_report, welch_t_test
from .complex import build_filtration
from .detector import evaluate, predict_many, repeat_protocol, scan_features, train_detector
from .errors import EXIT_DATA, EXIT_OK, EXIT_USAGE, NumericFailure, TopoTrojanError
from .experiments import bench_table, convergence_table, random_correlation_matrix, required_sample_size, theorem1_report
from .features import corr_baseline_features, topo_features
from .formats import (
    FORMAT_VERSIONS,
    dumps_report,
    load_detector,
    read_correlation,
    read_cycles,
    read_dataset,
    read_diagram,
    read_features,
    read_network,
    read_trace,
    read_zoo,
    save_detector,
    write_correlation,
    write_cycles,
    write_dataset,
    write_diagram,
    write_features,
    write_filtration,
    write_trace,
    write_zoo,
)
from .netlab import build_model_zoo, perturb_pixelwise, sample_gaussian_pair
from .persistence import bottleneck_distance, compute_diagrams, extract_cycles
from .pipeline import population_shortcuts
from .schema import DetectorConfig, GaussianPairConfig, PerturbConfig, TrainConfig, ZooConfig
from .trace import Kernel, correlation_matrix, dissimilarity, record_activations

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _stdout_csv():
    return csv.writer(sys.stdout, lineterminator="\n")


def _fmt(value: float) -> str:
    return repr(float(value))


def _version_text() -> str:
    lines = [f"topo-trojan {__version__}"]
    lines.extend(f"{name}: {version}" for name, version in FORMAT_VERSIONS.items())
    return "\n".join(lines)


def _perturb_config(args) -> PerturbConfig:
    return PerturbConfig(trials_per_image=args.trials, patch_size=args.patch, ranges=[(args.lo, args.hi)], seed=args.seed)


def _add_perturb_flags(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--trials", type=int, default=200, help="perturbed copies per clean sample (default: 200)")
    p.add_argument("--patch", type=int, default=1, help="contiguous coordinates resampled per copy (default: 1)")
    p.add_argument("--lo", type=float, default=0.0, help="lower bound of the resampling range (default: 0)")
    p.add_argument("--hi", type=float, default=1.0, help="upper bound of the resampling range (default: 1)")
    p.add_argument("--seed", type=int, required=seed_required, default=None, help="perturbation seed")


def _add_scan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--zoo", required=True, help="model zoo manifest (net_path,label)")
    p.add_argument("--samples", required=True, help="clean samples csv")
    p.add_argument("--kernel", choices=[k.value for k in Kernel], default="pearson", help="correlation kernel")
    p.add_argument("--cutoff", type=float, default=2.0, help="filtration cutoff (default: 2.0)")
    p.add_argument("--records", default=None, help="jsonlines file of per-model scan records; reruns resume from it")
    _add_perturb_flags(p)


def _scan(args, models, include_baseline: bool = False):
    return scan_features(
        models,
        read_dataset(args.samples).X,
        _perturb_config(args),
        kernel=Kernel(args.kernel),
        cutoff=args.cutoff,
        include_baseline=include_baseline,
        max_parallel_models=args.jobs,
        output_file=args.records,
        enable_progress=not args.quiet,
    )


# data generation and tracing


def cmd_gen_gaussian(args) -> int:
    cfg = GaussianPairConfig(
        sigma=args.sigma,
        eta=args.eta,
        input_dim=args.dim,
        which=args.which,
        sample_count=args.n,
        seed=args.seed,
    )
    data = sample_gaussian_pair(cfg)
    write_dataset(args.out, data.X, data.y)
    logger.info("wrote %d %s samples to %s", len(data), args.which, args.out)
    return EXIT_OK


def cmd_perturb(args) -> int:
    X = read_dataset(args.input).X
    write_dataset(args.out, perturb_pixelwise(X, _perturb_config(args)))
    return EXIT_OK


def cmd_trace(args) -> int:
    trace = record_activations(read_network(args.net), read_dataset(args.input).X)
    write_trace(trace, args.out)
    logger.info("traced %d neurons over %d inputs", trace.n_neurons, trace.n_samples)
    return EXIT_OK


def cmd_corr(args) -> int:
    write_correlation(correlation_matrix(read_trace(args.trace), Kernel(args.kernel)), args.out)
    return EXIT_OK


# persistence


def _filtration(args):
    return build_filtration(dissimilarity(read_correlation(args.corr)), args.cutoff)


def cmd_complex(args) -> int:
    write_filtration(_filtration(args), args.out)
    return EXIT_OK


def cmd_persist(args) -> int:
    dg0, dg1 = compute_diagrams(_filtration(args))
    write_diagram(dg0 + dg1, args.out)
    logger.info("%d 0D and %d 1D dots", len(dg0), len(dg1))
    return EXIT_OK


def cmd_cycles(args) -> int:
    cycles = extract_cycles(_filtration(args), top_k=args.top_k, death_cutoff=args.death_cutoff)
    write_cycles(cycles, args.out)
    logger.info("wrote %d cycles", len(cycles))
    return EXIT_OK


def cmd_bottleneck(args) -> int:
    distance = bottleneck_distance(read_diagram(args.a), read_diagram(args.b), args.dim)
    writer = _stdout_csv()
    writer.writerow(["dim", "bottleneck"])
    writer.writerow([args.dim, "inf" if np.isinf(distance) else _fmt(distance)])
    return EXIT_OK


# features and analysis


def cmd_features(args) -> int:
    dg = read_diagram(args.dg)
    feats = topo_features(dg, dg, model_label=args.label)
    baseline = None
    if args.baseline:
        if not args.corr:
            raise TopoTrojanError("--baseline needs --corr")
        baseline = [corr_baseline_features(read_correlation(args.corr)).as_features(args.label)]
    write_features(args.out, [(args.model_id, feats)], baseline)
    return EXIT_OK


_TTEST_HEADER = ["feature", "t_stat", "dof", "p_value", "mean_a", "mean_b", "direction"]


def _ttest_row(name: str, result) -> List[str]:
    return [name, _fmt(result.t_stat), _fmt(result.dof), _fmt(result.p_value), _fmt(result.mean_a), _fmt(result.mean_b), result.direction]


def cmd_compare(args) -> int:
    _, topo_a, base_a = read_features(args.features_a)
    _, topo_b, base_b = read_features(args.features_b)
    writer = _stdout_csv()
    writer.writerow(_TTEST_HEADER)
    if args.feature:
        for feats_a, feats_b in ((topo_a, topo_b), (base_a, base_b)):
            if feats_a and feats_b and args.feature in feats_a[0].names:
                k = feats_a[0].names.index(args.feature)
                result = welch_t_test([fv.values[k] for fv in feats_a], [fv.values[k] for fv in feats_b])
                writer.writerow(_ttest_row(args.feature, result))
                return EXIT_OK
        raise TopoTrojanError(f"unknown feature {args.feature!r}")
    report = population_report(topo_a, topo_b)
    if base_a and base_b:
        report.update(population_report(base_a, base_b))
    for name, result in report.items():
        writer.writerow(_ttest_row(name, result))
    return EXIT_OK


def _shortcut_populations(args) -> int:
    stats = population_shortcuts(
        read_zoo(args.zoo),
        read_dataset(args.samples).X,
        _perturb_config(args),
        kernel=Kernel(args.kernel),
        cutoff=args.cutoff,
        top_k=args.top_k,
        enable_progress=not args.quiet,
    )
    if sorted(stats) != [0, 1]:
        raise TopoTrojanError(f"shortcut comparison needs labelled clean and Trojaned models, got labels {sorted(stats)}")
    for label, pooled in stats.items():
        logger.info(
            "label %d: mean death edge length %.4f, mean longest cycle edge length %.4f",
            label,
            pooled.mean_death_edge_length,
            pooled.mean_longest_cycle_edge_length,
        )
    writer = _stdout_csv()
    writer.writerow(_TTEST_HEADER)
    for name, result in compare_shortcuts(stats[0], stats[1]).items():
        writer.writerow(_ttest_row(name, result))
    return EXIT_OK


def cmd_shortcut(args) -> int:
    if args.zoo:
        return _shortcut_populations(args)
    cycle_lengths =longest_cycle_edge_lengths(read_cycles(args.cycles), args.top_k)
    death_lengths: List[int] = []
    if args.corr:
        F = _filtration(args)
        dg0, _ = compute_diagrams(F)
        death_lengths = death_edge_lengths(F, dg0, args.top_k)
    writer = _stdout_csv()
    writer.writerow(["kind", "rank", "length"])
    for rank, length in enumerate(cycle_lengths):
        writer.writerow(["cycle", rank, length])
    for rank, length in enumerate(death_lengths):
        writer.writerow(["death", rank, length])
    if cycle_lengths:
        logger.info("mean longest cycle edge length %.4f", float(np.mean(cycle_lengths)))
    if death_lengths:
        logger.info("mean death edge length %.4f", float(np.mean(death_lengths)))
    return EXIT_OK


# detection


def _detector_config(args) -> DetectorConfig:
    return DetectorConfig(
        hidden_size=args.hidden_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        l2=args.l2,
        seed=args.seed,
        train_fraction=args.train_fraction,
    )


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    defaults = DetectorConfig()
    p.add_argument("--hidden-size", type=int, default=defaults.hidden_size, help="detector hidden units")
    p.add_argument("--epochs", type=int, default=defaults.epochs, help="detector training epochs")
    p.add_argument("--learning-rate", type=float, default=defaults.learning_rate, help="initial learning rate")
    p.add_argument("--l2", type=float, default=defaults.l2, help="L2 penalty")
    p.add_argument("--train-fraction", type=float, default=defaults.train_fraction, help="stratified train share")


def cmd_detect_train(args) -> int:
    models = read_zoo(args.zoo)
    if any(entry.label is None for entry in models):
        raise TopoTrojanError("every model in a training zoo needs a label")
    feats, _ = _scan(args, models)
    detector = train_detector(feats, _detector_config(args))
    save_detector(detector, args.out)
    if detector.dropped:
        logger.info("constant features dropped: %s", ", ".join(detector.dropped))
    logger.info("detector trained on %d models, final loss %.6f", len(feats), detector.loss_history[-1])
    return EXIT_OK


def cmd_detect_eval(args) -> int:
    detector = load_detector(args.detector)
    models = read_zoo(args.zoo)
    feats, _ = _scan(args, models)
    writer = _stdout_csv()
    if all(entry.label is not None for entry in models):
        report = evaluate(detector, feats)
        writer.writerow(["acc", "auc", "n_test", "threshold"])
        writer.writerow([_fmt(report.acc), _fmt(report.auc), report.n_test, _fmt(report.threshold)])
        return EXIT_OK
    writer.writerow(["model", "score", "trojaned"])
    for entry, score in zip(models, predict_many(detector, feats)):
        writer.writerow([entry.model_id, _fmt(score), int(score >= 0.5)])
    return EXIT_OK


def cmd_detect_repeat(args) -> int:
    models = read_zoo(args.zoo)
    report = repeat_protocol(
        models,
        read_dataset(args.samples).X,
        _perturb_config(args),
        _detector_config(args),
        repeats=args.repeats,
        include_baseline=args.baseline,
        kernel=Kernel(args.kernel),
        cutoff=args.cutoff,
        max_parallel_models=args.jobs,
        output_file=args.records,
        enable_progress=not args.quiet,
    )
    writer = _stdout_csv()
    writer.writerow(["features", "repeat", "acc", "auc"])
    for name, reports in (("topo", report.reports), ("corr", report.baseline_reports)):
        for r, rep in enumerate(reports):
            writer.writerow([name, r, _fmt(rep.acc), _fmt(rep.auc)])
    logger.info(
        "ACC %.3f +- %.3f, AUC %.3f +- %.3f (median %.3f)",
        report.acc_mean,
        report.acc_std,
        report.auc_mean,
        report.auc_std,
        report.auc_median,
    )
    return EXIT_OK


def cmd_zoo(args) -> int:
    cfg = ZooConfig(
        n_clean=args.n_clean,
        n_trojan=args.n_trojan,
        samples_per_model=args.samples_per_model,
        sigma=args.sigma,
        eta=args.eta,
        input_dim=args.dim,
        train=TrainConfig(hidden=tuple(args.hidden), epochs=args.train_epochs),
        seed=args.seed,
    )
    manifest = write_zoo(build_model_zoo(cfg), args.out_dir)
    logger.info("wrote %d models to %s", cfg.n_clean + cfg.n_trojan, manifest)
    return EXIT_OK


# experiments


def cmd_theorem1(args) -> int:
    report = theorem1_report(sample_count=args.n, sigma=args.sigma, eta=args.eta, seed=args.seed, sampled=not args.no_sampled)
    print(dumps_report(report.as_dict()))
    return EXIT_OK


def _write_convergence(report) -> None:
    writer = _stdout_csv()
    seeds = len(report.rows[0].db_per_seed) if report.rows else 0
    writer.writerow(["n", "median_db", *[f"db_seed{s}" for s in range(seeds)]])
    for row in report.rows:
        writer.writerow([row.n, _fmt(row.median_db), *[_fmt(v) for v in row.db_per_seed]])
    sys.stdout.flush()
    if report.slope is not None:
        print(f"log-log slope: {report.slope:.4f}", file=sys.stderr)


def cmd_convergence(args) -> int:
    try:
        report = convergence_table(
            n_grid=args.grid,
            seeds=args.seeds,
            seed=args.seed,
            kernel=Kernel(args.kernel),
            enable_progress=not args.quiet,
        )
    except NumericFailure as exc:
        if exc.payload is not None:
            _write_convergence(exc.payload)
        raise
    _write_convergence(report)
    budget = required_sample_size(R=1.0, r=0.25, eps=args.eps, delta=args.delta, N=1, m_star=8)
    print(f"required samples for eps={args.eps} delta={args.delta}: {budget}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    matrices = [(path, read_correlation(path)) for path in args.corr or []]
    matrices.extend(
        (f"random-{args.random}-seed{args.seed + t}", random_correlation_matrix(args.random, seed=args.seed + t))
        for t in range(args.trials if args.random else 0)
    )
    if not matrices:
        raise TopoTrojanError("bench needs --corr files or --random M")
    rows = bench_table(matrices, enable_progress=not args.quiet)
    writer = _stdout_csv()
    writer.writerow(["source", "cutoff", "num_simplices", "cobd_red_s", "bd_red_s", "nonzero"])
    for row in rows:
        writer.writerow([row.source, _fmt(row.cutoff), row.num_simplices, f"{row.cobd_red_s:.6f}", f"{row.bd_red_s:.6f}", row.nonzero])
    within = sum(row.within_ratio for row in rows)
    logger.info("pruned boundary reduction within 2x of coboundary reduction on %d of %d inputs", within, len(rows))
    return EXIT_OK


def cmd_version(args) -> int:
    print(_version_text())
    return EXIT_OK


def _int_list(text: str) -> List[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="topo-trojan", description="Topological Trojan detection for neural networks.")
    parser.add_argument("--version", action="version", version=_version_text())
    parser.add_argument("--quiet", action="store_true", help="only warnings on stderr, no progress bars")
    parser.add_argument("--jobs", type=int, default=1, help="models scanned concurrently (default: 1)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-gaussian", help="sample a Gaussian-pair dataset")
    p.add_argument("--which", choices=["D1", "D2", "D3"], required=True, help="distribution")
    p.add_argument("--n", type=int, required=True, help="sample count")
    p.add_argument("--sigma", type=float, default=1.0, help="noise scale (default: 1.0)")
    p.add_argument("--eta", type=float, default=0.05, help="target risk level (default: 0.05)")
    p.add_argument("--dim", type=int, default=2, help="input dimension (default: 2)")
    p.add_argument("--seed", type=int, required=True, help="sampling seed")
    p.add_argument("--out", required=True, help="output csv")
    p.set_defaults(func=cmd_gen_gaussian)

    p = sub.add_parser("perturb", help="pixel-wise perturbation of clean samples")
    p.add_argument("--in", dest="input", required=True, help="clean samples csv")
    p.add_argument("--out", required=True, help="output csv")
    _add_perturb_flags(p)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("trace", help="record hidden activations")
    p.add_argument("--net", required=True, help="network file")
    p.add_argument("--in", dest="input", required=True, help="inputs csv")
    p.add_argument("--out", required=True, help="trace file (.csv for text, anything else for ATRC binary)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("corr", help="neuron correlation matrix of a trace")
    p.add_argument("--trace", required=True, help="trace file")
    p.add_argument("--kernel", choices=[k.value for k in Kernel], default="pearson", help="correlation kernel")
    p.add_argument("--out", required=True, help="output csv")
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("complex", help="dump the filtration of a correlation matrix")
    p.add_argument("--corr", required=True, help="correlation csv")
    p.add_argument("--cutoff", type=float, default=2.0, help="filtration cutoff (default: 2.0)")
    p.add_argument("--out", required=True, help="output csv")
    p.set_defaults(func=cmd_complex)

    p = sub.add_parser("persist", help="0D and 1D persistence diagrams")
    p.add_argument("--corr", required=True, help="correlation csv")
    p.add_argument("--cutoff", type=float, default=2.0, help="filtration cutoff (default: 2.0)")
    p.add_argument("--out", required=True, help="diagram csv")
    p.set_defaults(func=cmd_persist)

    p = sub.add_parser("cycles", help="representative 1D cycles")
    p.add_argument("--corr", required=True, help="correlation csv")
    p.add_argument("--cutoff", type=float, default=2.0, help="filtration cutoff (default: 2.0)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--top-k", type=int, default=None, help="keep the k most persistent cycles")
    group.add_argument("--death-cutoff", type=float, default=None, help="keep cycles dying at or below this value")
    p.add_argument("--out", required=True, help="cycle file")
    p.set_defaults(func=cmd_cycles)

    p = sub.add_parser("bottleneck", help="bottleneck distance between two diagrams")
    p.add_argument("--a", required=True, help="first diagram csv")
    p.add_argument("--b", required=True, help="second diagram csv")
    p.add_argument("--dim", type=int, choices=[0, 1], default=1, help="homology dimension (default: 1)")
    p.set_defaults(func=cmd_bottleneck)

    p = sub.add_parser("features", help="feature table row from a diagram")
    p.add_argument("--dg", required=True, help="diagram csv")
    p.add_argument("--out", required=True, help="feature table csv")
    p.add_argument("--corr", default=None, help="correlation csv for the baseline features")
    p.add_argument("--baseline", action="store_true", help="append the correlation baseline columns")
    p.add_argument("--model-id", default="model-0000", help="model column value")
    p.add_argument("--label", type=int, choices=[0, 1], default=None, help="model label")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("compare", help="Welch test between two feature tables")
    p.add_argument("--features-a", required=True, help="first population")
    p.add_argument("--features-b", required=True, help="second population")
    p.add_argument("--feature", default=None, help="single feature to test (default: all)")
    p.add_argument("--test", choices=["welch"], default="welch", help="test family")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("shortcut", help="layer lengths of long cycle edges and death edges")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--cycles", default=None, help="cycle file")
    group.add_argument("--zoo", default=None, help="labelled zoo manifest; Welch-tests clean against Trojaned lengths")
    p.add_argument("--top-k", type=int, default=500, help="cycles and death edges considered (default: 500)")
    p.add_argument("--corr", default=None, help="correlation csv; adds the 0D death edge lengths")
    p.add_argument("--cutoff", type=float, default=2.0, help="filtration cutoff (default: 2.0)")
    p.add_argument("--samples", default=None, help="clean samples csv (with --zoo)")
    p.add_argument("--kernel", choices=[k.value for k in Kernel], default="pearson", help="correlation kernel (with --zoo)")
    _add_perturb_flags(p, seed_required=False)
    p.set_defaults(func=cmd_shortcut)

    p = sub.add_parser("detect-train", help="scan a labelled zoo and train a detector")
    _add_scan_flags(p)
    _add_detector_flags(p)
    p.add_argument("--out", required=True, help="detector file")
    p.set_defaults(func=cmd_detect_train)

    p = sub.add_parser("detect-eval", help="score a zoo with a trained detector")
    p.add_argument("--detector", required=True, help="detector file")
    _add_scan_flags(p)
    p.set_defaults(func=cmd_detect_eval)

    p = sub.add_parser("detect-repeat", help="repeated split/train/evaluate runs on one zoo")
    _add_scan_flags(p)
    _add_detector_flags(p)
    p.add_argument("--repeats", type=int, default=5, help="train/test splits (default: 5)")
    p.add_argument("--baseline", action="store_true", help="also score the correlation baseline")
    p.set_defaults(func=cmd_detect_repeat)

    p = sub.add_parser("zoo", help="train a seeded zoo of clean and Trojaned tiny models")
    defaults = ZooConfig()
    p.add_argument("--n-clean", type=int, default=defaults.n_clean, help="clean models")
    p.add_argument("--n-trojan", type=int, default=defaults.n_trojan, help="Trojaned models")
    p.add_argument("--samples-per-model", type=int, default=defaults.samples_per_model, help="training samples per model")
    p.add_argument("--sigma", type=float, default=defaults.sigma, help="noise scale")
    p.add_argument("--eta", type=float, default=defaults.eta, help="target risk level")
    p.add_argument("--dim", type=int, default=defaults.input_dim, help="input dimension")
    p.add_argument("--hidden", type=int, nargs="+", default=list(defaults.train.hidden), help="hidden layer widths")
    p.add_argument("--train-epochs", type=int, default=defaults.train.epochs, help="training epochs per model")
    p.add_argument("--seed", type=int, required=True, help="zoo seed")
    p.add_argument("--out-dir", required=True, help="directory for networks and zoo.csv")
    p.set_defaults(func=cmd_zoo)

    p = sub.add_parser("theorem1", help="1D diagram gap between the two constructive networks")
    p.add_argument("--n", type=int, default=50_000, help="samples per distribution (default: 50000)")
    p.add_argument("--sigma", type=float, default=1.0, help="noise scale")
    p.add_argument("--eta", type=float, default=0.05, help="target risk level")
    p.add_argument("--seed", type=int, required=True, help="sampling seed")
    p.add_argument("--no-sampled", action="store_true", help="skip the sampled-matrix distances")
    p.set_defaults(func=cmd_theorem1)

    p = sub.add_parser("convergence", help="sampled-to-analytic diagram distance over sample sizes")
    p.add_argument("--grid", type=_int_list, default=[400, 1600, 6400, 25600], help="comma-separated sample sizes")
    p.add_argument("--seeds", type=int, default=5, help="repetitions per size (default: 5)")
    p.add_argument("--kernel", choices=[k.value for k in Kernel], default="cosine", help="correlation kernel")
    p.add_argument("--eps", type=float, default=0.1, help="tolerance of the printed sample budget")
    p.add_argument("--delta", type=float, default=0.05, help="failure probability of the printed sample budget")
    p.add_argument("--seed", type=int, required=True, help="sampling seed")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("bench", help="time the two reduction phases")
    p.add_argument("--corr", nargs="+", default=None, help="correlation csv files")
    p.add_argument("--random", type=int, default=0, help="also bench random matrices of this size")
    p.add_argument("--trials", type=int, default=20, help="random matrices (default: 20)")
    p.add_argument("--seed", type=int, default=None, help="seed of the random matrices (required with --random)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("version", help="print format versions")
    p.set_defaults(func=cmd_version)
    return parser


def setup_logging(quiet: bool = False) -> None:
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _usage_problem(args) -> Optional[str]:
    """Flag combinations argparse cannot express."""
    if args.command == "bench" and args.random and args.seed is None:
        return "--seed is required with --random"
    if args.command == "shortcut" and args.zoo:
        missing = [flag for flag, value in (("--samples", args.samples), ("--seed", args.seed)) if value is None]
        if missing:
            return f"--zoo requires {' and '.join(missing)}"
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    problem = _usage_problem(args)
    if problem:
        parser.error(problem)
    setup_logging(args.quiet)
    try:
        return args.func(args)
    except TopoTrojanError as exc:
        print(f"topo-trojan: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"topo-trojan: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"topo-trojan: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
