"""
Adversarial attacks against an RF modulation classifier and their
mitigation with a stochastic vector-quantized autoencoder.
"""
import argparse
import re
import sys
from collections import namedtuple

from .log import logger

__author__ = 'Measurement Standards Laboratory of New Zealand'
__copyright__ = f'\xa9 2026 {__author__}'
__version__ = '0.1.0.dev0'

_v = re.search(r'(\d+)\.(\d+)\.(\d+)[.-]?(.*)', __version__).groups()

version_info = namedtuple('version_info', 'major minor micro releaselevel')(int(_v[0]), int(_v[1]), int(_v[2]), _v[3])
""":obj:`~collections.namedtuple`: Contains the version information as a (major, minor, micro, releaselevel) tuple."""

# key: the destination of a command-line option, value: the configuration key it overrides
_OVERRIDES = {
    'seed': 'experiment.seed',
    'out': 'experiment.output',
    'classes': 'dataset.schemes',
    'epochs': None,
    'beta': 'vqvae.beta',
    'kinds': 'attacks.kinds',
    'epsilons': 'attacks.epsilons',
    'pgd_steps': 'attacks.pgd_steps',
    'mode': 'evaluation.quantize_mode',
    'trials': 'evaluation.trials',
}


def _print_traceback(*, msg: str = '') -> int:
    import traceback
    tb = ''.join(traceback.format_exception(*sys.exc_info()))
    print(f'\n{tb}{msg}', file=sys.stderr)
    return 1


def cli_parser(*args: str) -> argparse.Namespace:
    """Parse the command line arguments."""
    if not args:
        args = sys.argv[1:]

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '-c', '--config',
        help='the path to a configuration (INI) file'
    )
    common.add_argument(
        '-o', '--out',
        help='the output directory (default is the RFADVQ_OUTPUT_ROOT\n'
             'environment variable or ./rfadvq-output)'
    )
    common.add_argument(
        '-s', '--seed',
        type=int,
        help='the master seed'
    )
    common.add_argument(
        '-f', '--force',
        action='store_true',
        default=False,
        help='redo the stage even if its artifacts already exist'
    )
    common.add_argument(
        '-l', '--log-level',
        help='the logging level, e.g., INFO (default is the\n'
             'RFADVQ_LOG_LEVEL environment variable or DEBUG)'
    )

    p = argparse.ArgumentParser(
        prog='rf-advq',
        description='Adversarial attacks on an RF modulation classifier and their\n'
                    'mitigation by VQVAE reconstruction.',
        formatter_class=argparse.RawTextHelpFormatter
    )
    p.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = p.add_subparsers(dest='stage', required=True, metavar='stage')

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_,
                              formatter_class=argparse.RawTextHelpFormatter)

    g = add('generate', 'generate the training and test datasets')
    g.add_argument('--classes', help='comma-separated modulation schemes (default is all six)')
    g.add_argument('--count', type=int, help='the number of datapoints per class (train + test)')

    for name, what, extra in (('train-classifier', 'the modulation classifier', False),
                              ('train-vqvae', 'the VQVAE', True)):
        t = add(name, f'train {what}')
        t.add_argument('--data', help='the path to a training dataset (default is the generated one)')
        t.add_argument('--epochs', type=int, help='the number of training epochs')
        if extra:
            t.add_argument('--beta', type=float, help='the weight of the commitment and KL terms')

    a = add('attack', 'attack the test dataset')
    a.add_argument('--data', help='the path to a test dataset (default is the generated one)')
    a.add_argument('--kinds', help='comma-separated attacks, e.g., FGSM1,FGSM2,PGD')
    a.add_argument('--epsilons', help='comma-separated perturbation strengths')
    a.add_argument('--pgd-steps', type=int, help='the number of PGD iterations')

    for name, help_ in (('evaluate', 'evaluate the clean, attacked and reconstructed datapoints'),
                        ('report', 'evaluate and write the plot-data files')):
        e = add(name, help_)
        e.add_argument('--data', help='the path to a test dataset (default is the generated one)')
        e.add_argument('--mode', help='the quantization mode, stochastic or argmax')
        e.add_argument('--trials', type=int, help='the number of reconstructions per datapoint')
        if name == 'report':
            e.add_argument('--render', action='store_true', default=False,
                           help='also render the plot-data files as PNG images')

    return p.parse_args(args)


def main(*args: str) -> None:
    """Main console script entry point.

    Run ``rf-advq --help`` for more details.

    Args:
        args: Command-line arguments.

    Examples:

        * | Generate the datasets with the default configuration
          | ``rf-advq generate``

        * | Generate a small dataset of two classes
          | ``rf-advq generate --classes 4ASK,16PSK --count 60 --out ./small``

        * | Train the classifier for 10 epochs
          | ``rf-advq train-classifier --epochs 10``

        * | Run every stage and write the plot-data files, using a configuration file
          | ``rf-advq report --config desk.ini``

    """
    sys.exit(start_stage(cli_parser(*args)))


def overrides(args: argparse.Namespace) -> dict:
    """Convert the command-line options to configuration overrides."""
    out = {}
    for dest, key in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == 'epochs':
            key = 'vqvae.epochs' if args.stage == 'train-vqvae' else 'classifier.epochs'
        out[key] = value
    if args.force:
        out['experiment.reuse'] = False
    if getattr(args, 'render', False):
        out['evaluation.render'] = True
    return out


def start_stage(args: argparse.Namespace) -> int:
    """Run a stage, and every stage that it depends on.

    Args:
        args: The parsed command-line arguments.

    Returns:
        The exit code (0 for success, 1 for error).
    """
    from . import config
    from .harness import StageError
    from .harness import run_experiment
    from .log import configure

    try:
        configure(args.log_level)
        cfg = config.load(args.config, overrides(args))
        count = getattr(args, 'count', None)
        if count is not None:
            # keep the configured train/test ratio
            train = max(1, round(cfg.dataset.split[0] * count))
            ov = overrides(args)
            ov.update({'dataset.train_per_class': train, 'dataset.test_per_class': count - train})
            cfg = config.load(args.config, ov)
    except (OSError, ValueError):
        return _print_traceback()

    try:
        run_experiment(cfg, until=args.stage, data=getattr(args, 'data', None))
    except StageError as e:
        return _print_traceback(msg=f'\nThe {e.stage!r} stage failed')
    except KeyboardInterrupt:
        logger.warning('interrupted')
        return 1
    return 0
