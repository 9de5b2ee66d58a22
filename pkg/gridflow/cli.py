"""
Command line entry point: generate | solve | train | evaluate | report
"""

import argparse
import glob
import json
import logging
import os
import sys

from .exceptions import GridflowError


SUBDIRS = ('datasets', 'checkpoints', 'reports', 'plots')
DEFAULT_SEED = 0
DEFAULT_CASE = 'ieee14'
EXIT_FAILURE = 1
EXIT_DIVERGED = 2


def configure_threads():
    """
    Apply GRIDFLOW_THREADS to the TensorFlow thread pools; must run before any TF op
    """
    cap = os.environ.get('GRIDFLOW_THREADS')
    if not cap:
        return
    import tensorflow as tf
    try:
        threads = max(1, int(cap))
    except ValueError:
        return
    try:
        tf.config.threading.set_intra_op_parallelism_threads(threads)
        tf.config.threading.set_inter_op_parallelism_threads(threads)
    except RuntimeError:
        logging.getLogger('gridflow.cli').debug('TensorFlow already initialized, thread cap not applied')


def output_dirs(out):
    dirs = {name: os.path.join(out, name) for name in SUBDIRS}
    for path in dirs.values():
        os.makedirs(path, exist_ok=True)
    return dirs


def _case_tag(case):
    return os.path.splitext(os.path.basename(case))[0]


def cmd_generate(args):
    from .config import load_config
    from .grid import load_case
    from .scenario import generate_dataset

    logger = logging.getLogger('gridflow.cli')
    config = load_config(args.config, args.set)
    net = load_case(args.case)
    target = os.path.join(output_dirs(args.out)['datasets'], _case_tag(args.case))
    manifest = generate_dataset(net, config.scenario_config(seed=args.seed), args.scenarios, args.samples,
                                target, opts=config.solver_options(), workers=args.workers)
    logger.info('%d dataset file(s) and a manifest written to %s', len(manifest.files), target)
    return 0


def cmd_solve(args):
    from .config import load_config
    from .grid import load_case, render_case, scale_loads
    from .powerflow import solve_newton_raphson, write_solution
    from .utils import atomic_write

    logger = logging.getLogger('gridflow.cli')
    config = load_config(args.config, args.set)
    net = load_case(args.case)
    if args.load_scale != 1.0:
        net = scale_loads(net, args.load_scale)
    sol = solve_newton_raphson(net, config.solver_options())

    reports = output_dirs(args.out)['reports']
    tag = _case_tag(args.case)
    write_solution(net, sol, os.path.join(reports, 'solution_{0}.csv'.format(tag)),
                   os.path.join(reports, 'solution_{0}.json'.format(tag)))
    if args.emit_case:
        with atomic_write(os.path.join(reports, '{0}.case'.format(tag))) as f:
            f.write(render_case(net))
    if not sol.converged:
        logger.error('%s did not converge after %d iterations (max mismatch %s).',
                     net.name, sol.iterations, sol.diagnostics()['max_mismatch'])
        return EXIT_DIVERGED
    logger.info('%s converged in %d iteration(s), max mismatch %.3e.', net.name, sol.iterations, sol.max_mismatch)
    return 0


def _dataset_dir(args, dirs):
    return args.data or os.path.join(dirs['datasets'], _case_tag(args.case))


def cmd_train(args):
    from .checkpoint import Checkpoint, save_checkpoint
    from .config import load_config
    from .grid import edge_index, load_case
    from .plotting import loss_curve
    from .scenario import dataset_files, read_dataset, read_manifest, write_dataset
    from .training import split_datasets, train
    from .utils import atomic_write, staging_dir

    logger = logging.getLogger('gridflow.cli')
    config = load_config(args.config, args.set)
    dirs = output_dirs(args.out)
    data_dir = _dataset_dir(args, dirs)
    manifest = read_manifest(data_dir)
    datasets = [read_dataset(path) for path in dataset_files(data_dir)]

    net = load_case(args.case)
    if net.n_bus != manifest.n_bus:
        raise GridflowError('Case {0} has {1} buses but the datasets were generated for {2}.'.format(
            args.case, net.n_bus, manifest.n_bus))
    edges = edge_index(net)
    model_cfg = config.model_config(net.n_bus, arch=args.arch)
    train_cfg = config.train_config(seed=args.seed)

    train_ds, val_ds, tests = split_datasets(datasets, train_cfg.seed)
    tag = '{0}_{1}'.format(_case_tag(args.case), model_cfg.arch)
    result = train(model_cfg, edges, train_ds, val_ds, train_cfg, diagnostics_dir=dirs['checkpoints'])

    ckpt = Checkpoint(params=result.params, norm=result.norm, edges=edges,
                      case=_case_tag(args.case), bus_ids=net.bus_numbers, train_cfg=train_cfg.to_dict(),
                      best_epoch=result.history.best_epoch, best_val_loss=result.history.best_val_loss)
    # outputs move into place only once all of them are written
    with staging_dir(args.out) as stage:
        staged = output_dirs(stage)
        save_checkpoint(os.path.join(staged['checkpoints'], tag + '.ckpt'), ckpt)
        result.history.write_csv(os.path.join(staged['reports'], tag + '_history.csv'))
        with atomic_write(os.path.join(staged['reports'], tag + '_config.json')) as f:
            json.dump({'model': model_cfg.to_dict(), 'train': train_cfg.to_dict(),
                       'stop_reason': result.history.stop_reason}, f, indent=2, sort_keys=True)
            f.write('\n')
        loss_curve(result.history, os.path.join(staged['plots'], tag + '_loss.svg'),
                   title='{0} on {1}: training and validation loss'.format(model_cfg.arch.upper(), ckpt.case))
        test_dir = os.path.join(staged['datasets'], _case_tag(args.case) + '_test')
        os.makedirs(test_dir)
        for test in tests:
            write_dataset(test, os.path.join(test_dir, test.name + '.csv'))
    logger.info('Best validation loss %.6e at epoch %d.', result.history.best_val_loss, result.history.best_epoch)
    return 0


def cmd_evaluate(args):
    from .checkpoint import load_checkpoint
    from .evaluation import evaluate, summarize, write_reports, write_summary
    from .plotting import bar_chart
    from .scenario import read_dataset

    logger = logging.getLogger('gridflow.cli')
    dirs = output_dirs(args.out)
    tag_case = _case_tag(args.case)
    checkpoint = args.checkpoint
    if checkpoint is None:
        checkpoint = os.path.join(dirs['checkpoints'], '{0}_{1}.ckpt'.format(tag_case, args.arch))
    pattern = args.test or os.path.join(dirs['datasets'], tag_case + '_test', '*.csv')
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise GridflowError('No test datasets match {0!r}.'.format(pattern))

    ckpt = load_checkpoint(checkpoint)
    reports = evaluate(ckpt, [read_dataset(path) for path in paths], workers=args.workers)
    tag = '{0}_{1}'.format(ckpt.case, ckpt.arch)
    write_reports(reports, os.path.join(dirs['reports'], tag + '_reports.csv'),
                  os.path.join(dirs['reports'], tag + '_reports.json'))
    summary = summarize(reports)
    write_summary(summary, os.path.join(dirs['reports'], tag + '_summary.csv'))
    for metric in ('nrmse', 'r2', 'loss'):
        bar_chart(summary, metric, os.path.join(dirs['plots'], '{0}_{1}.svg'.format(tag, metric)))
    logger.info('%d report(s) for %s written.', len(reports), tag)
    return 0


def cmd_report(args):
    from .evaluation import read_reports, reports_frame, summarize, write_summary
    from .plotting import bar_chart
    from .utils import atomic_write

    logger = logging.getLogger('gridflow.cli')
    dirs = output_dirs(args.out)
    pattern = args.reports or os.path.join(dirs['reports'], '*_reports.json')
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise GridflowError('No report files match {0!r}.'.format(pattern))
    reports = [report for path in paths for report in read_reports(path)]
    summary = summarize(reports)
    write_summary(summary, os.path.join(dirs['reports'], 'summary.csv'))
    with atomic_write(os.path.join(dirs['reports'], 'summary.json')) as f:
        json.dump({'summary': json.loads(summary.to_json(orient='records')),
                   'reports': json.loads(reports_frame(reports).to_json(orient='records')),
                   'nrmse_normalizer': 'range'}, f, indent=2, sort_keys=True)
        f.write('\n')
    for metric in ('nrmse', 'r2', 'loss'):
        bar_chart(summary, metric, os.path.join(dirs['plots'], 'summary_{0}.svg'.format(metric)))
    logger.info('Summary over %d report(s) and %d (architecture, case) pair(s).', len(reports), len(summary))
    return 0


COMMANDS = {
    'generate': cmd_generate,
    'solve': cmd_solve,
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'report': cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--case', default=DEFAULT_CASE, help='shipped case name or case file path')
    common.add_argument('--config', default=None, help='JSON config file or preset (standard, exp-decay, desk)')
    common.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='override a config value, may repeat')
    common.add_argument('--out', default='out', help='output directory')
    common.add_argument('--seed', type=int, default=DEFAULT_SEED, help='master seed')
    common.add_argument('--workers', type=int, default=None, help='worker threads (capped by GRIDFLOW_THREADS)')
    common.add_argument('--verbose', action='store_true', help='debug logging')

    parser = argparse.ArgumentParser(prog='gridflow', description='AC power flow datasets and GNN surrogates')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    generate = sub.add_parser('generate', parents=[common], help='generate scenario datasets')
    generate.add_argument('--scenarios', type=int, default=10)
    generate.add_argument('--samples', type=int, default=1000, help='samples per scenario')

    solve = sub.add_parser('solve', parents=[common], help='solve one power flow')
    solve.add_argument('--load-scale', type=float, default=1.0, help='multiply every load and dispatch')
    solve.add_argument('--emit-case', action='store_true', help='also write the solved case file')

    archs = ['gcn', 'gat', 'sage', 'graphconv']
    train_cmd = sub.add_parser('train', parents=[common], help='train a surrogate')
    train_cmd.add_argument('--arch', choices=archs, default='gcn')
    train_cmd.add_argument('--data', default=None, help='dataset directory (default <out>/datasets/<case>)')

    evaluate = sub.add_parser('evaluate', parents=[common], help='evaluate a checkpoint on test datasets')
    evaluate.add_argument('--arch', choices=archs, default='gcn')
    evaluate.add_argument('--checkpoint', default=None)
    evaluate.add_argument('--test', default=None, help='glob of test dataset CSVs')

    report = sub.add_parser('report', parents=[common], help='merge evaluation reports into a summary')
    report.add_argument('--reports', default=None, help='glob of *_reports.json files')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    logger = logging.getLogger('gridflow.cli')
    configure_threads()
    try:
        return COMMANDS[args.command](args)
    except (GridflowError, OSError) as e:
        logger.debug('%s failed', args.command, exc_info=True)
        sys.stderr.write('gridflow {0}: {1}\n'.format(args.command, e))
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
