# Copyright 2026 The Mongeflow Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


import numpy as np
import matplotlib.pyplot as plt
import seaborn as sns


def scatter(points, labels=None, kde=False, kdeopts={'fill': True, 'cmap': 'Reds'}, ax=None,
            title=None, dpi=100):
    points = np.asarray(points)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[1] not in (1, 2):
        raise ValueError(f'expect 1D or 2D points, got dim {points.shape[1]} instead')

    if ax is None:
        fig, ax = plt.subplots(dpi=dpi)

    if points.shape[1] == 1:
        sns.histplot(x=points[:, 0], hue=labels, stat='density', ax=ax)
    elif kde:
        sns.kdeplot(x=points[:, 0], y=points[:, 1], ax=ax, **kdeopts)
    else:
        ax.scatter(points[:, 0], points[:, 1], s=1, c=labels)
        ax.set_aspect('equal')

    if title is not None:
        ax.set_title(title)
    return ax


def complex2d(complex_, targets=None, ax=None, dpi=100):
    '''centroids, retained simplices and kept edges of a 2D latent complex'''
    C = np.asarray(complex_.centroids)
    if C.shape[1] != 2:
        raise ValueError(f'expect a 2D complex, got dim {C.shape[1]} instead')

    if ax is None:
        fig, ax = plt.subplots(dpi=dpi)

    if len(complex_.simplices):
        ax.triplot(C[:, 0], C[:, 1], np.asarray(complex_.simplices), lw=0.5, color='gray')
    for i, j in np.asarray(complex_.kept_edges):
        ax.plot(C[[i, j], 0], C[[i, j], 1], lw=0.8, color='k')
    ax.scatter(C[:, 0], C[:, 1], c=np.asarray(complex_.components), s=12, zorder=3)
    if targets is not None:
        Y = np.asarray(targets)
        ax.scatter(Y[:, 0], Y[:, 1], marker='x', s=12, color='r')
    ax.set_aspect('equal')
    return ax


def curve(df, x, ys, logx=False, logy=True, ax=None, dpi=100):
    '''columns `ys` of a report curve against column `x`'''
    if ax is None:
        fig, ax = plt.subplots(dpi=dpi)

    for y in ([ys] if isinstance(ys, str) else ys):
        ax.plot(df[x], df[y], marker='o', label=y)
    if logx:
        ax.set_xscale('log')
    if logy:
        ax.set_yscale('log')
    ax.set_xlabel(x)
    ax.legend()
    return ax


REPORT_CURVES = {
    'deviation': ('delta', ['deviation', 'typical_deviation', 'w2_eps'], True),
    'decay': ('s', ['map_l2', 'envelope'], False),
    'stability': ('corruption', ['map_l2', 'sup_error'], True),
}


def save_report_figure(report, path):
    '''PNG of the report curve; returns False when the experiment has none'''
    spec = REPORT_CURVES.get(report.experiment.split('/')[0])
    if report.curve is None or spec is None:
        return False
    x, ys, logx = spec
    fig, ax = plt.subplots(dpi=100)
    df = report.curve[report.curve[x] > 0] if logx else report.curve
    curve(df, x, ys, logx=logx, ax=ax)
    ax.set_title(report.experiment)
    fig.savefig(path)
    plt.close(fig)
    return True
