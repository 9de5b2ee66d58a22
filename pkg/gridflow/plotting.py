"""
SVG charts: architecture comparison bars and loss curves
"""

import logging

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .utils import atomic_write  # noqa: E402


METRIC_LABELS = {
    'nrmse': 'NRMSE',
    'r2': 'R$^2$',
    'loss': 'Average test loss (normalized MSE)',
}


def _save_svg(fig, path):
    # fixed salt and no date keep the SVG bytes reproducible
    with matplotlib.rc_context({'svg.hashsalt': 'gridflow', 'svg.fonttype': 'none'}):
        with atomic_write(path, 'w') as f:
            fig.savefig(f, format='svg', metadata={'Date': None}, bbox_inches='tight')
    plt.close(fig)
    logging.getLogger('gridflow.plotting').info('Plot written to %s', path)


def bar_chart(summary, metric, path):
    """
    Grouped bars: one group per case, one bar per architecture, whiskers from min to max
    :param summary: frame from evaluation.summarize
    :param metric: 'nrmse', 'r2' or 'loss'
    :param path: SVG path
    """
    cases = sorted(summary['case'].unique())
    archs = sorted(summary['arch'].unique())
    width = 0.8 / max(len(archs), 1)
    fig, ax = plt.subplots(figsize=(max(6, 1.8 * len(cases) + 2), 4.5))
    positions = np.arange(len(cases))
    for k, arch in enumerate(archs):
        means, lower, upper = [], [], []
        for case in cases:
            row = summary[(summary['arch'] == arch) & (summary['case'] == case)]
            mean = row[metric + '_mean'].iloc[0] if len(row) else None
            if mean is None or mean != mean:
                means.append(np.nan)
                lower.append(0.0)
                upper.append(0.0)
                continue
            means.append(mean)
            lower.append(mean - row[metric + '_min'].iloc[0])
            upper.append(row[metric + '_max'].iloc[0] - mean)
        ax.bar(positions + (k - (len(archs) - 1) / 2.0) * width, means, width,
               yerr=[lower, upper], capsize=3, label=arch.upper())
    ax.set_xticks(positions)
    ax.set_xticklabels(cases)
    ax.set_xlabel('Test system')
    ax.set_ylabel(METRIC_LABELS.get(metric, metric))
    ax.set_title('{0} by architecture'.format(METRIC_LABELS.get(metric, metric)))
    ax.legend()
    ax.grid(True, axis='y', alpha=0.3)
    _save_svg(fig, path)


def loss_curve(history, path, title=None):
    """
    Training and validation loss per epoch with the best epoch marked
    :param history: TrainHistory
    :param path: SVG path
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    epochs = np.arange(1, history.epochs + 1)
    ax.plot(epochs, history.train_loss, label='Training loss')
    ax.plot(epochs, history.val_loss, label='Validation loss')
    if history.best_epoch:
        ax.axvline(history.best_epoch, color='red', linestyle='--',
                   label='Best epoch ({0})'.format(history.best_epoch))
    ax.set_yscale('log')
    ax.set_xlabel('Epoch')
    ax.set_ylabel('MSE (normalized)')
    ax.set_title(title or 'Training and validation loss')
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save_svg(fig, path)
