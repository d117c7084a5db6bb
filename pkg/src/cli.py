"""
Command-line interface
simulate | bootstrap | mardia | fit | predict | generate | estimate
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import logging
import pandas as pd
import yaml

from src.classifiers import CLASSIFIERS, build_pipelines
from src.config import load_config, load_scenario, resolve_seed, setup_logging
from src.dists import DISTRIBUTIONS
from src.evaluation import CI_METHODS, MEASURES
from src.harness import ScenarioRunner, estimate_scenario, mardia_table, run_bootstrap, simulate_dataset
from src.ingest import load_long_csv, write_long_csv
from src.publish import Publisher
from src.robust import TRIM_METHODS
from src.storage import Storage

logger = logging.getLogger('rmclass.cli')


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', default=None, help='config file (default: ./config.yaml)')
    parser.add_argument('--seed', type=int, default=None, help='overrides RMCLASS_SEED and config seeds')
    parser.add_argument('--threads', type=int, default=None, help='worker processes (default: all cores)')
    parser.add_argument('--out-dir', default=None, help='output directory (default: paths.exports)')
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='rmclass',
                                     description='Classification of multivariate repeated-measures data')
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='Monte Carlo study of one scenario')
    simulate.add_argument('scenario', help='scenario YAML path or name under paths.scenarios')
    simulate.add_argument('--replicates', type=int, default=None)
    simulate.add_argument('--distribution', nargs='+', choices=DISTRIBUTIONS, default=None)
    simulate.add_argument('--classifiers', nargs='+', choices=CLASSIFIERS, default=None)
    simulate.add_argument('--trimming', nargs='+', choices=TRIM_METHODS, default=None)
    simulate.add_argument('--keep-fraction', type=float, default=None)
    _common_flags(simulate)

    bootstrap = commands.add_parser('bootstrap', help='.632+ bootstrap table for a long-format CSV')
    bootstrap.add_argument('data', help='long-format CSV (subject,group,time,<variables>)')
    bootstrap.add_argument('--classifiers', nargs='+', choices=CLASSIFIERS, default=None)
    bootstrap.add_argument('--trimming', nargs='+', choices=TRIM_METHODS, default=None)
    bootstrap.add_argument('--keep-fraction', type=float, default=None)
    bootstrap.add_argument('--replicates', '-B', dest='B', type=int, default=None, help='bootstrap resamples')
    bootstrap.add_argument('--alpha', type=float, default=None)
    bootstrap.add_argument('--ci-method', choices=CI_METHODS, default=None)
    bootstrap.add_argument('--measures', nargs='+', choices=MEASURES, default=None)
    _common_flags(bootstrap)

    mardia = commands.add_parser('mardia', help="Mardia's skewness test for one or more CSVs")
    mardia.add_argument('data', nargs='+')
    _common_flags(mardia)

    fit = commands.add_parser('fit', help='train one pipeline and save the model as JSON')
    fit.add_argument('data')
    fit.add_argument('--classifier', choices=CLASSIFIERS, default='lda_pooled')
    fit.add_argument('--trimming', choices=TRIM_METHODS, default='none')
    fit.add_argument('--keep-fraction', type=float, default=None)
    fit.add_argument('--model', default=None, help='output model path')
    _common_flags(fit)

    predict = commands.add_parser('predict', help='label a CSV with a saved model')
    predict.add_argument('data')
    predict.add_argument('--model', required=True)
    predict.add_argument('--output', default=None, help='predictions CSV (default: <out-dir>/predictions.csv)')
    _common_flags(predict)

    generate = commands.add_parser('generate', help='write a simulated long-format dataset')
    generate.add_argument('scenario')
    generate.add_argument('--distribution', choices=DISTRIBUTIONS, default=None)
    generate.add_argument('--sizes', nargs=2, type=int, default=None, metavar=('N0', 'N1'),
                          help='class sizes (default: the scenario training sizes)')
    generate.add_argument('--output', default=None)
    _common_flags(generate)

    estimate = commands.add_parser('estimate', help='estimate scenario parameters from a long-format CSV')
    estimate.add_argument('data')
    estimate.add_argument('--name', default=None)
    estimate.add_argument('--output', default=None, help='scenario YAML (default: <out-dir>/<name>.yaml)')
    _common_flags(estimate)

    return parser


def _resolve_scenario_path(scenario: str, config: Dict) -> str:
    if os.path.exists(scenario):
        return scenario
    directory = config.get('paths', {}).get('scenarios', 'data/scenarios')
    candidate = os.path.join(directory, f"{scenario}.yaml")
    if os.path.exists(candidate):
        return candidate
    raise FileNotFoundError(f"Scenario '{scenario}' not found as a file or under {directory}")


def _with_threads(config: Dict, threads: Optional[int]) -> Dict:
    config = dict(config)
    if threads is not None:
        config['harness'] = {**config.get('harness', {}), 'threads': threads}
    return config


def cmd_simulate(args, config: Dict) -> int:
    overrides = {'seed': args.seed, 'replicates': args.replicates, 'classifiers': args.classifiers,
                 'trimming': {'methods': args.trimming, 'keep_fraction': args.keep_fraction}}
    scenario = load_scenario(_resolve_scenario_path(args.scenario, config), config, overrides)
    runner = ScenarioRunner(_with_threads(config, args.threads))
    publisher = Publisher(config, args.out_dir)

    distributions = args.distribution or [scenario.distribution]
    for distribution in distributions:
        result = runner.run(scenario, distribution)
        paths = publisher.publish_scenario(result)
        logger.info(f"{scenario.name} ({distribution}) summary written to {paths['summary']}")
    return 0


def cmd_bootstrap(args, config: Dict) -> int:
    config = _with_threads(config, args.threads)
    boot_config = config.get('bootstrap', {})
    if args.ci_method:
        config['bootstrap'] = {**boot_config, 'ci_method': args.ci_method}
    seed = resolve_seed(config, args.seed)
    ds = load_long_csv(args.data)
    pipelines = build_pipelines(config, args.classifiers, args.trimming, args.keep_fraction)
    B = args.B if args.B is not None else int(boot_config.get('B', 2000))
    alpha = args.alpha if args.alpha is not None else float(boot_config.get('alpha', 0.05))
    measures = args.measures or boot_config.get('measures', list(MEASURES))

    cells = run_bootstrap(ds, pipelines, B=B, alpha=alpha, seed=seed, config=config, measures=measures)
    Publisher(config, args.out_dir).publish_bootstrap(
        cells, Path(args.data).stem,
        {'data': args.data, 'seed': seed, 'B': B, 'alpha': alpha,
         'ci_method': config.get('bootstrap', {}).get('ci_method', 'displayed')})
    return 0


def cmd_mardia(args, config: Dict) -> int:
    datasets = {Path(path).stem: load_long_csv(path) for path in args.data}
    table = mardia_table(datasets)
    Publisher(config, args.out_dir).publish_mardia(table)
    print(table.to_string(index=False))
    return 0


def cmd_fit(args, config: Dict) -> int:
    seed = resolve_seed(config, args.seed)
    ds = load_long_csv(args.data)
    pipeline = build_pipelines(config, [args.classifier], [args.trimming], args.keep_fraction)[0]
    fitted = pipeline.fit(ds, seed=seed)
    storage = Storage(config)
    path = args.model or os.path.join(args.out_dir or storage.models_dir, f"{args.classifier}_{args.trimming}.json")
    storage.save_model(fitted, path, train=ds, metadata={
        'trimming': args.trimming, 'keep_fraction': pipeline.keep_fraction, 'seed': seed, 'data': args.data})
    return 0


def cmd_predict(args, config: Dict) -> int:
    storage = Storage(config)
    fitted, metadata = storage.load_model(args.model)
    ds = load_long_csv(args.data)
    storage.check_compatible(metadata, ds)
    predicted = fitted.predict(ds)

    ids = ds.subject_ids or [f"s{j + 1}" for j in range(ds.n)]
    frame = pd.DataFrame({'subject': ids, 'group': ds.labels, 'predicted': predicted})
    output = args.output or os.path.join(args.out_dir or Publisher(config).exports_dir, 'predictions.csv')
    directory = os.path.dirname(output)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(output, index=False)
    logger.info(f"Wrote {ds.n} predictions to {output} (agreement with group column {(predicted == ds.labels).mean():.3f})")
    return 0


def cmd_generate(args, config: Dict) -> int:
    scenario = load_scenario(_resolve_scenario_path(args.scenario, config), config, {'seed': args.seed})
    sizes = tuple(args.sizes) if args.sizes else scenario.n_train
    ds = simulate_dataset(scenario, args.distribution, sizes, scenario.seed)
    distribution = args.distribution or scenario.distribution
    output = args.output or os.path.join(args.out_dir or Publisher(config).exports_dir,
                                         f"{scenario.name}_{distribution}_sample.csv")
    write_long_csv(ds, output)
    return 0


def cmd_estimate(args, config: Dict) -> int:
    ds = load_long_csv(args.data)
    name = args.name or Path(args.data).stem
    scenario = estimate_scenario(ds, name, config)
    output = args.output or os.path.join(args.out_dir or Publisher(config).exports_dir, f"{name}.yaml")
    directory = os.path.dirname(output)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(output, 'w') as f:
        yaml.safe_dump(scenario, f, sort_keys=False, default_flow_style=None)
    logger.info(f"Wrote scenario '{name}' to {output}")
    return 0


COMMANDS = {
    'simulate': cmd_simulate,
    'bootstrap': cmd_bootstrap,
    'mardia': cmd_mardia,
    'fit': cmd_fit,
    'predict': cmd_predict,
    'generate': cmd_generate,
    'estimate': cmd_estimate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except Exception as e:
        print(f"rmclass: cannot load config: {e}", file=sys.stderr)
        return 2
    setup_logging(config, args.log_level)

    try:
        return COMMANDS[args.command](args, config)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
