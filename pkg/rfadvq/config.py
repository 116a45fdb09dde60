"""
Experiment configuration.

A configuration file is an INI file, for example::

    [experiment]
    seed = 7
    output = ./runs/desk

    [dataset]
    train_per_class = 500
    test_per_class = 100

    [attacks]
    kinds = FGSM1, FGSM2, PGD
    epsilons = 0.01, 0.06, 0.1, 0.2, 0.3

Every section and key is optional. The seed of a stage that is not set
explicitly is derived from the experiment seed.
"""
import configparser
import os
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Callable

from .attacks import AttackKind
from .attacks import AttackSpec
from .classifier import TrainHyper
from .utils import derive_seeds
from .vqvae import QuantizeMode
from .vqvae import VQVAEHyper
from .waveforms import DatasetSpec
from .waveforms import ModulationScheme

DEFAULT_EPSILONS: tuple[float, ...] = (0.01, 0.06, 0.1, 0.2, 0.3)
DEFAULT_KINDS: tuple[AttackKind, ...] = (AttackKind.FGSM1, AttackKind.FGSM2, AttackKind.PGD)
OUTPUT_ROOT_ENV = 'RFADVQ_OUTPUT_ROOT'
STAGES = ('dataset', 'classifier', 'vqvae', 'attacks', 'evaluation')


def default_output() -> str:
    """The output directory, from the environment variable ``RFADVQ_OUTPUT_ROOT`` or ``./rfadvq-output``."""
    return os.environ.get(OUTPUT_ROOT_ENV) or os.path.join(os.curdir, 'rfadvq-output')


@dataclass(frozen=True)
class AttackGrid:
    """Every attack kind is performed at every epsilon.

    Args:
        kinds: The attack methods.
        epsilons: The perturbation strengths.
        pgd_steps: The number of PGD iterations.
        pgd_step_size: The PGD step size. Default is epsilon/4.
        phase_preserving_pgd: Whether PGD keeps the phase of every sample.
        random_start: Whether PGD starts at a random point in the epsilon ball.
        seed: Seeds the random starts.
        batch_size: The number of datapoints that are attacked together.
    """
    kinds: tuple[AttackKind, ...] = DEFAULT_KINDS
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    pgd_steps: int = 10
    pgd_step_size: float | None = None
    phase_preserving_pgd: bool = False
    random_start: bool = False
    seed: int = 0
    batch_size: int = 128

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kinds', tuple(AttackKind(k) for k in self.kinds))
        object.__setattr__(self, 'epsilons', tuple(float(e) for e in self.epsilons))
        if not self.kinds:
            raise ValueError('At least one attack kind must be specified')
        if not self.epsilons:
            raise ValueError('At least one epsilon must be specified')
        if any(e < 0 for e in self.epsilons):
            raise ValueError(f'Every epsilon must be >= 0, got {self.epsilons}')
        if self.batch_size < 1:
            raise ValueError(f'batch_size must be >= 1, got {self.batch_size}')

    def specs(self) -> list[AttackSpec]:
        """One specification per (kind, epsilon), each with its own seed."""
        pairs = [(k, e) for k in self.kinds for e in self.epsilons]
        seeds = derive_seeds(self.seed, len(pairs))
        return [AttackSpec(kind=k, epsilon=e, pgd_steps=self.pgd_steps,
                           pgd_step_size=self.pgd_step_size,
                           phase_preserving_pgd=self.phase_preserving_pgd,
                           random_start=self.random_start, seed=s)
                for (k, e), s in zip(pairs, seeds)]


@dataclass(frozen=True)
class EvaluationSettings:
    """How the attacked datapoints are evaluated.

    Args:
        quantize_mode: The quantization mode of the reconstructions.
        trials: The number of reconstructions per datapoint that the
            accuracy is averaged over (stochastic mode only).
        distance_trials: The number of trials of the latent distances.
        plots: Whether to write the plot-data files.
        render: Whether to also render the plot-data files as PNG images.
        seed: Seeds the quantizations.
    """
    quantize_mode: QuantizeMode = QuantizeMode.STOCHASTIC
    trials: int = 8
    distance_trials: int = 32
    plots: bool = True
    render: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'quantize_mode', QuantizeMode(self.quantize_mode))
        if self.trials < 1:
            raise ValueError(f'trials must be >= 1, got {self.trials}')
        if self.distance_trials < 2:
            raise ValueError(f'distance_trials must be >= 2, got {self.distance_trials}')


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment.

    Args:
        dataset: What to generate. The split is (train, test).
        classifier: The classifier hyperparameters.
        vqvae: The VQVAE hyperparameters.
        attacks: The attacks.
        evaluation: How to evaluate.
        output: The output directory.
        seed: The master seed.
        reuse: Whether a stage is skipped if its artifacts already exist.
    """
    dataset: DatasetSpec = field(default_factory=lambda: DatasetSpec(per_class_count=600, split=(5 / 6, 1 / 6)))
    classifier: TrainHyper = TrainHyper()
    vqvae: VQVAEHyper = VQVAEHyper()
    attacks: AttackGrid = AttackGrid()
    evaluation: EvaluationSettings = EvaluationSettings()
    output: str = field(default_factory=default_output)
    seed: int = 0
    reuse: bool = True

    def as_dict(self) -> dict:
        """The configuration as a JSON-serializable dict."""
        d = asdict(self)
        d['dataset']['schemes'] = [s.value for s in self.dataset.schemes]
        d['dataset']['split'] = list(self.dataset.split)
        d['attacks']['kinds'] = [k.value for k in self.attacks.kinds]
        d['attacks']['epsilons'] = list(self.attacks.epsilons)
        d['evaluation']['quantize_mode'] = self.evaluation.quantize_mode.value
        return d

    @property
    def train_per_class(self) -> int:
        """The number of training datapoints per class."""
        return round(self.dataset.split[0] * self.dataset.per_class_count)

    @property
    def test_per_class(self) -> int:
        """The number of test datapoints per class."""
        return self.dataset.per_class_count - self.train_per_class


def _bool(value: str) -> bool:
    s = str(value).strip().lower()
    if s in ('1', 'yes', 'true', 'on'):
        return True
    if s in ('0', 'no', 'false', 'off'):
        return False
    raise ValueError(f'Not a boolean: {value!r}')


def _optional_float(value: str) -> float | None:
    s = str(value).strip().lower()
    return None if s in ('', 'none', 'default') else float(s)


def _items(value: str) -> list[str]:
    return [v.strip() for v in str(value).replace(';', ',').split(',') if v.strip()]


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in _items(value))


def _kinds(value: str) -> tuple[AttackKind, ...]:
    return tuple(AttackKind(v) for v in _items(value))


def _schemes(value: str) -> tuple[ModulationScheme, ...]:
    return tuple(ModulationScheme(v) for v in _items(value))


_SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    'experiment': {'seed': int, 'output': str, 'reuse': _bool},
    'dataset': {'train_per_class': int, 'test_per_class': int, 'schemes': _schemes, 'seed': int},
    'classifier': {'epochs': int, 'batch_size': int, 'lr': float, 'validation': float,
                   'target_accuracy': float, 'seed': int},
    'vqvae': {'epochs': int, 'batch_size': int, 'lr': float, 'beta': float, 'reset_fraction': float,
              'codebook_size': int, 'seed': int},
    'attacks': {'kinds': _kinds, 'epsilons': _floats, 'pgd_steps': int, 'pgd_step_size': _optional_float,
                'phase_preserving_pgd': _bool, 'random_start': _bool, 'seed': int, 'batch_size': int},
    'evaluation': {'quantize_mode': QuantizeMode, 'trials': int, 'distance_trials': int,
                   'plots': _bool, 'render': _bool, 'seed': int},
}


def _convert(section: str, key: str, value: Any) -> Any:
    try:
        converters = _SCHEMA[section]
    except KeyError:
        raise ValueError(f'Unknown configuration section [{section}], '
                         f'must be one of {", ".join(_SCHEMA)}') from None
    try:
        converter = converters[key]
    except KeyError:
        raise ValueError(f'Unknown key {key!r} in section [{section}], '
                         f'must be one of {", ".join(converters)}') from None
    if not isinstance(value, str):
        return value
    try:
        return converter(value)
    except ValueError as e:
        raise ValueError(f'Invalid value for [{section}] {key}: {e}') from None


def parse(text: str = '', overrides: dict[str, Any] = None) -> ExperimentConfig:
    """Parse the contents of a configuration file.

    Args:
        text: The INI text.
        overrides: Values that take precedence over `text`, keyed by
            ``'<section>.<key>'`` (e.g., ``'classifier.epochs'``).

    Returns:
        The configuration.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section='__defaults__')
    parser.read_string(text)
    values: dict[str, dict[str, Any]] = {s: {} for s in _SCHEMA}
    for section in parser.sections():
        for key, value in parser.items(section):
            values.setdefault(section, {})[key] = _convert(section, key, value)
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = name.partition('.')
        values.setdefault(section, {})[key] = _convert(section, key, value)

    exp = values['experiment']
    seed = exp.get('seed', 0)
    stage_seeds = dict(zip(STAGES, derive_seeds(seed, len(STAGES))))
    for stage in STAGES:
        values[stage].setdefault('seed', stage_seeds[stage])

    d = dict(values['dataset'])
    train = d.pop('train_per_class', 500)
    test = d.pop('test_per_class', 100)
    if train < 1 or test < 0:
        raise ValueError(f'Invalid dataset size, train_per_class={train}, test_per_class={test}')
    total = train + test
    dataset = DatasetSpec(per_class_count=total, split=(train / total, test / total), **d)

    return ExperimentConfig(
        dataset=dataset,
        classifier=TrainHyper(**values['classifier']),
        vqvae=VQVAEHyper(**values['vqvae']),
        attacks=AttackGrid(**values['attacks']),
        evaluation=EvaluationSettings(**values['evaluation']),
        output=exp.get('output') or default_output(),
        seed=seed,
        reuse=exp.get('reuse', True),
    )


def load(file: str = None, overrides: dict[str, Any] = None) -> ExperimentConfig:
    """Load a configuration file.

    Args:
        file: The path to an INI file. If not specified then every value
            is a default (or an override).
        overrides: See :func:`parse`.
    """
    text = ''
    if file:
        with open(file, encoding='utf-8') as fp:
            text = fp.read()
    return parse(text, overrides)
