"""
Run the experiment: generate, train the classifier, train the VQVAE,
attack and evaluate.

Every stage writes its artifacts below the output directory and, if
:attr:`~rfadvq.config.ExperimentConfig.reuse` is enabled, a stage whose
artifacts already exist is skipped.
"""
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from typing import Iterator

import numpy as np
import pandas as pd

from . import io
from .attacks import AttackSpec
from .attacks import attack_dataset
from .classifier import ClassifierModel
from .classifier import evaluate as evaluate_classifier
from .classifier import train_classifier
from .config import ExperimentConfig
from .log import logger
from .metrics import CodewordHistogram
from .metrics import accuracy
from .metrics import confusion_matrix
from .metrics import histogram_from_tokens
from .metrics import normalized_latent_distances
from .metrics import snr_a
from .utils import timed
from .vqvae import QuantizeMode
from .vqvae import VQVAEModel
from .vqvae import train_vqvae
from .waveforms import Dataset
from .waveforms import ModulationScheme
from .waveforms import NUM_CLASSES
from .waveforms import generate_dataset

CLEAN = 'NONE'
VARIANTS = ('clean', 'attacked', 'reconstructed')


class StageError(RuntimeError):

    def __init__(self, stage: str, cause: BaseException) -> None:
        """A stage of the experiment failed.

        Args:
            stage: The name of the stage.
            cause: The exception that the stage raised.
        """
        super().__init__(f'The {stage!r} stage failed: {cause.__class__.__name__}: {cause}')
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Run a stage. Any exception is re-raised as a :exc:`StageError`."""
    with timed(name):
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e


@dataclass(frozen=True)
class ArtifactPaths:
    """Where the artifacts of an experiment are located.

    Args:
        root: The output directory.
    """
    root: str

    @property
    def train(self) -> str:
        return os.path.join(self.root, 'data', 'train.rfds')

    @property
    def test(self) -> str:
        return os.path.join(self.root, 'data', 'test.rfds')

    @property
    def classifier(self) -> str:
        return os.path.join(self.root, 'models', 'classifier.rfnn')

    @property
    def vqvae(self) -> str:
        return os.path.join(self.root, 'models', 'vqvae.rfnn')

    def adversarial(self, spec: AttackSpec) -> str:
        """The attacked test dataset."""
        return os.path.join(self.root, 'attacks', f'{spec.name}.rfds')

    def tokens(self, name: str) -> str:
        """A token dump, e.g., ``tokens('FGSM2-0.1')``."""
        return os.path.join(self.root, 'tokens', f'{name}.u8')

    @property
    def report(self) -> str:
        return os.path.join(self.root, 'report')

    @property
    def plots(self) -> str:
        return os.path.join(self.root, 'plots')


@dataclass
class EvalReport:
    """The results of an experiment.

    Args:
        accuracy: One row per (attack, epsilon) with the accuracy on the clean,
            the attacked and the reconstructed attacked datapoints. The first
            row is the attack-free baseline.
        distances: One row per (attack, epsilon, class) with the latent distances.
        confusion: The 6x6 confusion matrices, keyed by (variant, attack, epsilon).
        histograms: The codeword histograms per (attack, epsilon, class).
        iq: One (x, x_a, x̂_a) triplet per (attack, epsilon, class), each of shape (2, 1024).
        metadata: How the report was created.
    """
    accuracy: pd.DataFrame
    distances: pd.DataFrame
    confusion: dict[tuple[str, str, float], np.ndarray] = field(default_factory=dict)
    histograms: list[CodewordHistogram] = field(default_factory=list)
    iq: dict[tuple[str, float, str], np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def accuracy_of(self, attack: str, epsilon: float, variant: str) -> float:
        """Return one accuracy value."""
        a = self.accuracy
        row = a[(a['attack'] == attack) & np.isclose(a['epsilon'], epsilon)]
        if row.empty:
            raise KeyError(f'No accuracy for {attack} at epsilon={epsilon}')
        return float(row[variant].iloc[0])


def generate(config: ExperimentConfig, paths: ArtifactPaths) -> tuple[Dataset, Dataset]:
    """Generate (or load) the training and test datasets."""
    if config.reuse and os.path.isfile(paths.train) and os.path.isfile(paths.test):
        logger.info(f'reusing the datasets in {os.path.dirname(paths.train)}')
        return io.load_dataset(paths.train), io.load_dataset(paths.test)
    dataset = generate_dataset(config.dataset)
    train, test = dataset.split(config.dataset.split)
    io.save_dataset(paths.train, train, overwrite=True)
    io.save_dataset(paths.test, test, overwrite=True)
    return train, test


def fit_classifier(config: ExperimentConfig, paths: ArtifactPaths, train: Dataset = None) -> ClassifierModel:
    """Train (or load) the classifier."""
    if config.reuse and os.path.isfile(paths.classifier):
        logger.info(f'reusing {paths.classifier}')
        return ClassifierModel.load(paths.classifier)
    if train is None:
        train = io.load_dataset(paths.train)
    model = train_classifier(train, config.classifier)
    model.save(paths.classifier, overwrite=True)
    return model


def fit_vqvae(config: ExperimentConfig, paths: ArtifactPaths, train: Dataset = None) -> VQVAEModel:
    """Train (or load) the VQVAE."""
    if config.reuse and os.path.isfile(paths.vqvae):
        logger.info(f'reusing {paths.vqvae}')
        return VQVAEModel.load(paths.vqvae)
    if train is None:
        train = io.load_dataset(paths.train)
    model = train_vqvae(train, config.vqvae)
    model.save(paths.vqvae, overwrite=True)
    return model


def attack(config: ExperimentConfig,
           paths: ArtifactPaths,
           classifier: ClassifierModel = None,
           test: Dataset = None) -> list[tuple[AttackSpec, Dataset]]:
    """Attack (or load the attacked) test datasets.

    Returns:
        The attacked test dataset of every attack. The manifest of an attack
        is in the ``'manifest'`` item of :attr:`Dataset.meta`.
    """
    out = []
    for spec in config.attacks.specs():
        file = paths.adversarial(spec)
        if config.reuse and os.path.isfile(file):
            logger.debug(f'reusing {file}')
            out.append((spec, io.load_dataset(file)))
            continue
        if classifier is None:
            classifier = ClassifierModel.load(paths.classifier)
        if test is None:
            test = io.load_dataset(paths.test)
        adv = attack_dataset(classifier, test, spec, batch_size=config.attacks.batch_size)
        io.save_dataset(file, adv.dataset, overwrite=True, meta={'manifest': adv.manifest})
        adv.dataset.meta['manifest'] = adv.manifest
        out.append((spec, adv.dataset))
    return out


def _reconstructed_confusion(classifier: ClassifierModel,
                             vqvae: VQVAEModel,
                             dataset: Dataset,
                             mode: QuantizeMode,
                             trials: int,
                             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # sum of the confusion matrices over the reconstruction trials
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    x_hat = None
    for _ in range(trials):
        x_hat, _ = vqvae.reconstruct(dataset.x, rng, mode=mode)
        cm += confusion_matrix(dataset.labels, classifier.predict_labels(x_hat))
    return cm, x_hat


def evaluate(config: ExperimentConfig,
             paths: ArtifactPaths,
             classifier: ClassifierModel,
             vqvae: VQVAEModel,
             test: Dataset,
             adversarial: list[tuple[AttackSpec, Dataset]]) -> EvalReport:
    """Evaluate the classifier on the clean, attacked and reconstructed datapoints.

    The attack-free baseline (attack ``NONE`` at epsilon 0) is evaluated
    first. The token dumps of the clean and of every attacked test dataset
    are also written.
    """
    settings = config.evaluation
    mode = settings.quantize_mode
    trials = settings.trials if mode is QuantizeMode.STOCHASTIC else 1
    children = np.random.SeedSequence(settings.seed).spawn(len(adversarial) + 1)
    labels = test.labels.astype(int)
    schemes = [ModulationScheme.from_label(c) for c in test.classes]
    first = {s: int(np.flatnonzero(labels == s.label)[0]) for s in schemes}

    report = EvalReport(accuracy=pd.DataFrame(), distances=pd.DataFrame())
    acc_rows, dist_rows = [], []
    cm_clean = evaluate_classifier(classifier, test)[1]

    jobs = [(CLEAN, CLEAN, 0.0, test, 0.0)]
    for spec, adv in adversarial:
        linf_max = adv.meta.get('manifest', {}).get('linf_max')
        if linf_max is None:
            linf_max = float(np.max(np.abs(adv.x.astype(np.float64) - test.x)))
        jobs.append((spec.kind.value, spec.name, spec.epsilon, adv, linf_max))

    for (kind, name, eps, x_a, linf_max), child in zip(jobs, children):
        rng = np.random.default_rng(child)
        if kind == CLEAN:
            cm_attacked = cm_clean
        else:
            cm_attacked = confusion_matrix(labels, classifier.predict_labels(x_a.x))
        cm_rec, x_hat = _reconstructed_confusion(classifier, vqvae, x_a, mode, trials, rng)
        for variant, cm in zip(VARIANTS, (cm_clean, cm_attacked, cm_rec)):
            report.confusion[(variant, kind, eps)] = cm
        acc_rows.append({
            'attack': kind,
            'epsilon': eps,
            'snr_a': snr_a(test.std, eps) if eps > 0 and test.std > 0 else np.nan,
            'clean': accuracy(cm_clean),
            'attacked': accuracy(cm_attacked),
            'reconstructed': accuracy(cm_rec),
            'linf_max': linf_max,
            'trials': trials,
        })
        logger.info(f'{name}: clean {acc_rows[-1]["clean"]:.4f}, attacked {acc_rows[-1]["attacked"]:.4f}, '
                    f'reconstructed {acc_rows[-1]["reconstructed"]:.4f}')

        tokens = vqvae.tokens(x_a.x, rng, mode=mode)
        io.save_tokens(paths.tokens(name), tokens, overwrite=True)
        for scheme in schemes:
            mask = labels == scheme.label
            report.histograms.append(histogram_from_tokens(
                tokens[mask], vqvae.codebook.size, attack=kind, epsilon=eps, scheme=scheme.value))
            d = normalized_latent_distances(vqvae, test.x[mask], x_a.x[mask], settings.distance_trials,
                                            rng, raise_on_degenerate=False)
            dist_rows.append({'attack': kind, 'epsilon': eps, 'scheme': scheme.value, **d.as_dict()})
            i = first[scheme]
            report.iq[(kind, eps, scheme.value)] = np.stack((test.x[i], x_a.x[i], x_hat[i])).astype(np.float64)

    settings_used = config.as_dict()
    settings_used.pop('reuse')
    report.accuracy = pd.DataFrame(acc_rows)
    report.distances = pd.DataFrame(dist_rows)
    report.metadata = {
        'quantize_mode': mode.value,
        'trials': trials,
        'distance_trials': settings.distance_trials,
        'std': test.std,
        'config': settings_used,
    }
    return report


def write_report(report: EvalReport, folder: str) -> str:
    """Write the report as JSON and the tables as CSV.

    Returns:
        The path of the JSON file.
    """
    file = os.path.join(folder, 'report.json')
    writer = io.ReportWriter(file, overwrite=True)
    writer.add_metadata(quantize_mode=report.metadata['quantize_mode'],
                        trials=report.metadata['trials'],
                        distance_trials=report.metadata['distance_trials'],
                        std=report.metadata['std'],
                        config=json.dumps(report.metadata['config'], sort_keys=True))

    columns = list(report.accuracy.columns)
    writer.initialize(*columns, name='accuracy', size=len(report.accuracy),
                      types=['U16'] + [float] * (len(columns) - 2) + [int])
    for row in report.accuracy.itertuples(index=False):
        writer.append(*row)

    columns = list(report.distances.columns)
    writer.initialize(*columns, name='distances', size=max(len(report.distances), 1),
                      types=['U16', float, 'U16'] + [int if c == 'trials' else float for c in columns[3:]])
    for row in report.distances.itertuples(index=False):
        writer.append(*row)

    for (variant, attack_name, eps), cm in report.confusion.items():
        writer.create_dataset(f'confusion/{variant}/{attack_name}-{eps:g}', data=cm,
                              variant=variant, attack=attack_name, epsilon=eps)
    for h in report.histograms:
        d = h.descriptor
        writer.create_dataset(f'histograms/{d["attack"]}-{d["epsilon"]:g}/{d["scheme"]}',
                              data=h.counts, num_datapoints=h.num_datapoints, **d)
    writer.write()

    io.save_csv(os.path.join(folder, 'accuracy.csv'), report.accuracy)
    io.save_csv(os.path.join(folder, 'distances.csv'), report.distances)
    io.save_csv(os.path.join(folder, 'histograms.csv'), histogram_frame(report.histograms))
    logger.info(f'report written to {file}')
    return file


def histogram_frame(histograms: list[CodewordHistogram]) -> pd.DataFrame:
    """One row per histogram, the descriptor columns followed by one column per codeword."""
    rows = []
    for h in histograms:
        row = dict(h.descriptor)
        row.update({f'c{k}': int(v) for k, v in enumerate(h.counts)})
        rows.append(row)
    return pd.DataFrame(rows)


STAGES = ('generate', 'train-classifier', 'train-vqvae', 'attack', 'evaluate', 'report')


def run_experiment(config: ExperimentConfig,
                   *,
                   until: str = 'report',
                   data: str = None) -> EvalReport | None:
    """Run the stages of the experiment.

    The stages before `until` reuse their artifacts if they exist (or are
    created if they do not) and the `until` stage follows
    :attr:`~rfadvq.config.ExperimentConfig.reuse`.

    Args:
        config: The configuration.
        until: The name of the last stage to run.
        data: The path to a dataset file that replaces the training dataset
            (for the training stages) or the test dataset (for the later stages).

    Returns:
        The report, if the ``evaluate`` stage was run.

    Raises:
        StageError: If a stage fails. The artifacts of the stages that
            finished are kept.
    """
    if until not in STAGES:
        raise ValueError(f'Unknown stage {until!r}, must be one of {", ".join(STAGES)}')
    last = STAGES.index(until)
    cached = replace(config, reuse=True)

    def cfg(name: str) -> ExperimentConfig:
        return config if name == until else cached

    paths = ArtifactPaths(config.output)
    logger.info(f'running the experiment in {os.path.abspath(config.output)} '
                f'[seed={config.seed}, until={until}]')
    with stage('generate'):
        if data and last in (1, 2):
            train, test = io.load_dataset(data), None
        else:
            train, test = generate(cfg('generate'), paths)
            if data and last > 2:
                test = io.load_dataset(data)
    if last == 0:
        return None

    # a checkpoint of a different training dataset cannot be reused
    retrain = replace(config, reuse=False) if data and last in (1, 2) else None
    classifier = vqvae = None
    if last in (1, 3, 4, 5):
        with stage('train-classifier'):
            classifier = fit_classifier(retrain or cfg('train-classifier'), paths, train)
    if last in (2, 4, 5):
        with stage('train-vqvae'):
            vqvae = fit_vqvae(retrain or cfg('train-vqvae'), paths, train)
    if last < 3:
        return None

    with stage('attack'):
        if test is None:
            test = io.load_dataset(paths.test)
        # attacked datasets of a different test dataset cannot be reused
        adversarial = attack(replace(config, reuse=False) if data else cfg('attack'), paths, classifier, test)
    if last == 3:
        return None

    with stage('evaluate'):
        report = evaluate(config, paths, classifier, vqvae, test, adversarial)
        write_report(report, paths.report)
    if until == 'report' or config.evaluation.plots:
        from .plotting import emit_plots
        with stage('report'):
            emit_plots(report, paths.plots, render=config.evaluation.render)
    return report
