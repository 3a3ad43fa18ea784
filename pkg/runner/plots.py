"""Static SVG plots of experiment results."""

import logging

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)


def plot_decay(payload, path):
    """Sup-norms against t on log-log axes with the fitted power law."""
    t = np.asarray(payload['times'])
    sups = np.asarray(payload['sup_norms'])
    lo, hi = payload['window']
    inside = (t >= lo) & (t <= hi)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(t, sups, 'o', label='sup |u(t)|')
    anchor = t[inside][-1], sups[inside][-1]
    ax.loglog(t, anchor[1] * (t / anchor[0]) ** payload['exponent'], '-',
              label=f"fit t^{payload['exponent']:.3f}")
    ax.loglog(t, anchor[1] * (t / anchor[0]) ** -1.5, ':', color='gray', label='t^-1.5')
    ax.set_xlabel('t')
    ax.set_ylabel('sup norm')
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


def plot_ladder(payload, path):
    """Computed energies as horizontal rungs, coloured by classification."""
    colours = {'negative': 'tab:blue', 'near-zero': 'tab:orange', 'positive': 'tab:gray'}
    fig, ax = plt.subplots(figsize=(3, 5))
    for energy, label in zip(payload['energies'], payload['classification']):
        ax.hlines(energy, 0, 1, color=colours.get(label, 'black'))
    ax.axhline(0.0, color='black', linewidth=0.5)
    ax.set_xticks([])
    ax.set_ylabel('E')
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


def plot_traces(payload, path):
    """Wave kernel traces K(t), one line per point pair."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for entry in payload:
        ax.plot(entry['t'], entry['K'], label=entry['label'])
    ax.set_xlabel('t')
    ax.set_ylabel('K(t)')
    ax.legend(fontsize='small')
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


PLOTTERS = {
    'decay': plot_decay,
    'ladder': plot_ladder,
    'traces': plot_traces,
}


def draw(kind, payload, path):
    PLOTTERS[kind](payload, path)
    logger.debug("wrote %s", path)
