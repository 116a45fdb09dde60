"""
Write the data of the figures of a report as CSV files and, optionally,
render them as PNG images.
"""
import os

import numpy as np
import pandas as pd

from . import io
from .log import logger
from .waveforms import ModulationScheme
from .waveforms import UnsupportedSchemeError
from .waveforms import constellation

IQ_NAMES = ('x', 'x_a', 'x_hat')


def _name(attack: str, epsilon: float) -> str:
    return f'{attack}-{epsilon:g}'


def accuracy_frame(report) -> pd.DataFrame:
    """The accuracy table in long form, columns (attack, variant, epsilon, accuracy)."""
    frame = report.accuracy.melt(id_vars=['attack', 'epsilon'],
                                 value_vars=['clean', 'attacked', 'reconstructed'],
                                 var_name='variant', value_name='accuracy')
    return frame[['attack', 'variant', 'epsilon', 'accuracy']].sort_values(
        ['attack', 'variant', 'epsilon'], kind='stable').reset_index(drop=True)


def _check(report) -> None:
    if report.accuracy is None or report.accuracy.empty:
        raise ValueError('The report does not contain any accuracy values')
    if not report.confusion:
        raise ValueError('The report does not contain any confusion matrices')
    if not report.histograms:
        raise ValueError('The report does not contain any codeword histograms')
    if not report.iq:
        raise ValueError('The report does not contain any I/Q examples')


def emit_plots(report, folder: str, *, render: bool = False) -> list[str]:
    """Write the plot-data files of a report.

    The following files are created below `folder`

    * ``accuracy.csv`` accuracy vs. epsilon, one row per (attack, variant, epsilon)
    * ``confusion/<variant>/<attack>-<eps>.csv`` a 6x6 confusion matrix
    * ``histograms/<scheme>/<attack>-<eps>.csv`` one row of codeword counts
    * ``iq/<scheme>/<attack>-<eps>/{x,x_a,x_hat}.csv`` 1024 rows of (i, q)
    * ``iq/<scheme>/constellation.csv`` the ideal symbols (i, q) of the schemes that have one

    Args:
        report: An :class:`~rfadvq.harness.EvalReport`.
        folder: The output directory.
        render: Whether to also render PNG images (requires matplotlib).

    Returns:
        The paths of the files that were written.
    """
    _check(report)
    written = []

    def save(frame: pd.DataFrame, *parts: str) -> None:
        file = os.path.join(folder, *parts)
        io.save_csv(file, frame)
        written.append(file)

    long = accuracy_frame(report)
    save(long, 'accuracy.csv')

    for (variant, attack, eps), cm in report.confusion.items():
        save(pd.DataFrame(cm), 'confusion', variant, f'{_name(attack, eps)}.csv')

    for h in report.histograms:
        d = h.descriptor
        counts = pd.DataFrame([h.counts], columns=[str(k) for k in range(h.counts.size)])
        save(counts, 'histograms', d['scheme'], f'{_name(d["attack"], d["epsilon"])}.csv')

    for (attack, eps, scheme), triplet in report.iq.items():
        for name, xy in zip(IQ_NAMES, triplet):
            save(pd.DataFrame({'i': xy[0], 'q': xy[1]}), 'iq', scheme, _name(attack, eps), f'{name}.csv')

    for scheme in sorted({scheme for _, _, scheme in report.iq}):
        try:
            points = constellation(ModulationScheme(scheme)).points
        except UnsupportedSchemeError:
            continue
        save(pd.DataFrame({'i': points.real, 'q': points.imag}), 'iq', scheme, 'constellation.csv')

    if render:
        written.extend(render_plots(report, long, folder))

    logger.info(f'wrote {len(written)} plot files to {folder}')
    return written


def render_plots(report, long: pd.DataFrame, folder: str) -> list[str]:
    """Render the accuracy curves, histograms and I/Q examples as PNG images."""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    written = []

    def savefig(fig, *parts: str) -> None:
        file = os.path.join(folder, *parts)
        os.makedirs(os.path.dirname(file), exist_ok=True)
        fig.tight_layout()
        fig.savefig(file, dpi=100)
        plt.close(fig)
        written.append(file)

    for attack, group in long[long['attack'] != 'NONE'].groupby('attack', sort=True):
        fig, ax = plt.subplots(figsize=(6, 4))
        for variant, g in group.groupby('variant', sort=False):
            ax.plot(g['epsilon'], g['accuracy'], marker='o', label=variant)
        ax.set_xlabel('epsilon')
        ax.set_ylabel('accuracy')
        ax.set_ylim(0, 1.02)
        ax.set_title(attack)
        ax.legend(loc='lower left')
        ax.grid(True)
        savefig(fig, f'accuracy-{attack}.png')

    for h in report.histograms:
        d = h.descriptor
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.bar(np.arange(h.counts.size), h.counts, width=1.0)
        ax.set_xlabel('codeword')
        ax.set_ylabel('count')
        ax.set_title(f'{d["scheme"]} {_name(d["attack"], d["epsilon"])}')
        savefig(fig, 'histograms', d['scheme'], f'{_name(d["attack"], d["epsilon"])}.png')

    for (attack, eps, scheme), triplet in report.iq.items():
        lim = 1.05 * max(1.0, float(np.max(np.abs(triplet))))
        fig, axes = plt.subplots(1, 3, sharex=True, sharey=True, figsize=(12, 4))
        for ax, name, xy in zip(axes, IQ_NAMES, triplet):
            ax.scatter(xy[0], xy[1], s=4, alpha=0.6)
            ax.set_aspect('equal')
            ax.set_xlim(-lim, lim)
            ax.set_ylim(-lim, lim)
            ax.set_xlabel('I')
            ax.set_title(name)
            ax.grid(True)
        axes[0].set_ylabel('Q')
        savefig(fig, 'iq', scheme, _name(attack, eps), 'iq.png')

    return written
