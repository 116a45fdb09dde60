"""
White-box adversarial attacks against the classifier.
"""
from __future__ import annotations

import typing
from dataclasses import dataclass

import numpy as np

from ..log import logger
from ..metrics import attack_success_rates
from ..metrics import class_accuracy
from ..metrics import confusion_matrix
from ..metrics import snr_a
from ..utils import batches
from ..waveforms import Dataset
from ..waveforms import ModulationScheme
from ..waveforms import NUM_CLASSES
from .base import AdversarialDatapoint
from .base import AttackInfo
from .base import AttackKind
from .base import AttackSpec
from .base import Generators
from .base import attack
from .base import attack_one
from .base import attacks
from .base import gradient
from .base import linf
from .base import uniform
from .fgsm import along_phase
from .fgsm import amplitude
from .fgsm import fgsm1
from .fgsm import fgsm1_batch
from .fgsm import fgsm2
from .fgsm import fgsm2_batch
from .fgsm import sign_step
from .pgd import pgd
from .pgd import pgd_batch
from .pgd import project

if typing.TYPE_CHECKING:
    from ..classifier import ClassifierModel


@dataclass
class AdversarialDataset:
    """The result of attacking every datapoint of a dataset.

    Args:
        dataset: The attacked datapoints, in the order of the clean dataset.
        origin: The index of the clean datapoint of each attacked datapoint.
        linf: The achieved L-infinity perturbation of each datapoint.
        spec: The attack.
        manifest: The attack and its effect on the classifier.
    """
    dataset: Dataset
    origin: np.ndarray
    linf: np.ndarray
    spec: AttackSpec
    manifest: dict

    def __getitem__(self, index: int) -> AdversarialDatapoint:
        return AdversarialDatapoint(x_a=self.dataset.x[index], origin=int(self.origin[index]),
                                    spec=self.spec, linf=float(self.linf[index]))

    def __len__(self) -> int:
        return len(self.dataset)


def attack_dataset(model: ClassifierModel,
                   dataset: Dataset,
                   spec: AttackSpec,
                   *,
                   batch_size: int = 128) -> AdversarialDataset:
    """Attack every datapoint of a labeled dataset.

    Args:
        model: The classifier.
        dataset: The clean datapoints.
        spec: The attack.
        batch_size: The number of datapoints that are attacked together. The random
            start of a datapoint is drawn from its own generator, so the
            result does not depend on the batch size.

    Returns:
        The attacked datapoints and a manifest with the per-class accuracy
        before and after the attack, the per-class success rate (the
        fraction of correctly-classified datapoints that became
        misclassified) and the achieved perturbation.
    """
    if len(dataset) == 0:
        raise ValueError('Cannot attack an empty dataset')
    func = attacks[spec.kind].func
    # datapoint n always draws from child n of the seed
    seeds = np.random.SeedSequence(spec.seed).spawn(len(dataset))
    x_a = np.empty_like(dataset.x)
    for idx in batches(len(dataset), batch_size):
        rngs = [np.random.default_rng(seeds[n]) for n in idx]
        x_a[idx] = func(model, dataset.x[idx], dataset.labels[idx], spec, rngs)

    distance = linf(dataset.x, x_a)
    clean = model.predict_labels(dataset.x)
    attacked = model.predict_labels(x_a)
    labels = dataset.labels.astype(int)
    cm_clean = confusion_matrix(labels, clean)
    cm_attacked = confusion_matrix(labels, attacked)
    correct = clean == labels
    flipped = correct & (attacked != labels)
    recovered = ~correct & (attacked == labels)
    names = [ModulationScheme.from_label(c).value for c in range(NUM_CLASSES)]

    def per_class(values) -> dict:
        return {n: (None if np.isnan(v) else float(v)) for n, v in zip(names, values)}

    manifest = {
        'attack': spec.as_dict(),
        'count': len(dataset),
        'accuracy_clean': float(np.trace(cm_clean) / len(dataset)),
        'accuracy_attacked': float(np.trace(cm_attacked) / len(dataset)),
        'per_class_accuracy_clean': per_class(class_accuracy(cm_clean)),
        'per_class_accuracy_attacked': per_class(class_accuracy(cm_attacked)),
        'per_class_success_rate': per_class(attack_success_rates(labels, clean, attacked)),
        'per_class_flipped': dict(zip(names, np.bincount(labels[flipped], minlength=NUM_CLASSES).tolist())),
        'per_class_recovered': dict(zip(names, np.bincount(labels[recovered], minlength=NUM_CLASSES).tolist())),
        'linf_mean': float(distance.mean()),
        'linf_max': float(distance.max()),
        'std': dataset.std,
        'snr_a': snr_a(dataset.std, spec.epsilon) if spec.epsilon > 0 and dataset.std > 0 else None,
    }
    logger.info(f'{spec.name}: accuracy {manifest["accuracy_clean"]:.4f} -> '
                f'{manifest["accuracy_attacked"]:.4f} [max L-inf {manifest["linf_max"]:.4g}]')

    meta = dict(dataset.meta)
    meta['attack'] = spec.as_dict()
    adversarial = Dataset(x=x_a, labels=dataset.labels.copy(), std=dataset.std, meta=meta)
    return AdversarialDataset(dataset=adversarial, origin=np.arange(len(dataset)),
                              linf=distance, spec=spec, manifest=manifest)
